#include "occtrack/mot_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace occtrack {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
    std::ostringstream os;
    os << path << ":" << line << ": " << what;
    throw std::runtime_error(os.str());
}

double parse_num(const std::string& field, const std::string& path, int line) {
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        fail(path, line, "not a number: '" + field + "'");
    }
    while (used < field.size() && (field[used] == ' ' || field[used] == '\t')) ++used;
    if (used != field.size()) fail(path, line, "trailing junk in number: '" + field + "'");
    return v;
}

int parse_int(const std::string& field, const std::string& path, int line) {
    const double v = parse_num(field, path, line);
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9) fail(path, line, "expected an integer: '" + field + "'");
    return static_cast<int>(r);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

enum class RowKind { Gt, Det, Result };

std::vector<MotRow> read_rows(const std::string& path, RowKind kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<MotRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        const size_t min_fields = kind == RowKind::Gt ? 6 : 7;
        if (f.size() < min_fields) fail(path, lineno, "too few fields");
        MotRow r;
        r.frame = parse_int(f[0], path, lineno);
        if (r.frame < 1) fail(path, lineno, "frame must be >= 1");
        r.id = parse_int(f[1], path, lineno);
        if (kind != RowKind::Det && r.id < 1) fail(path, lineno, "id must be >= 1");
        r.box = {parse_num(f[2], path, lineno), parse_num(f[3], path, lineno),
                 parse_num(f[4], path, lineno), parse_num(f[5], path, lineno)};
        if (r.box.w < 0 || r.box.h < 0) fail(path, lineno, "negative box size");
        if (f.size() > 6) r.conf = parse_num(f[6], path, lineno);
        if (kind == RowKind::Gt) {
            if (f.size() > 7) r.cls = parse_int(f[7], path, lineno);
            if (f.size() > 8) r.visibility = parse_num(f[8], path, lineno);
            if (r.visibility < 0.0 || r.visibility > 1.0)
                fail(path, lineno, "visibility must be in [0, 1]");
        } else {
            r.cls = -1;
            r.visibility = 1.0;
        }
        rows.push_back(r);
    }
    return rows;
}

// Rows are written sorted by (frame, id). Detection ids are all written as
// -1, so detection files sort by frame only, keeping the in-memory order
// within a frame.
void sort_rows(std::vector<MotRow>& rows, RowKind kind) {
    std::stable_sort(rows.begin(), rows.end(), [kind](const MotRow& a, const MotRow& b) {
        if (a.frame != b.frame) return a.frame < b.frame;
        return kind != RowKind::Det && a.id < b.id;
    });
}

void write_rows(const std::string& path, std::vector<MotRow> rows, RowKind kind) {
    sort_rows(rows, kind);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const MotRow& r : rows) {
        if (r.frame < 1) throw std::invalid_argument("row frame must be >= 1");
        out << r.frame << ",";
        out << (kind == RowKind::Det ? -1 : r.id) << ",";
        out << format_number(r.box.x) << "," << format_number(r.box.y) << ","
            << format_number(r.box.w) << "," << format_number(r.box.h) << ","
            << format_number(r.conf);
        if (kind == RowKind::Gt)
            out << "," << r.cls << "," << format_number(r.visibility);
        else
            out << ",-1,-1,-1";
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace

std::string format_number(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("format_number: value must be finite");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    if (s == "-0") s = "0";
    return s;
}

std::vector<MotRow> read_gt(const std::string& path) { return read_rows(path, RowKind::Gt); }
void write_gt(const std::string& path, std::vector<MotRow> rows) {
    write_rows(path, std::move(rows), RowKind::Gt);
}

std::vector<MotRow> read_det(const std::string& path) { return read_rows(path, RowKind::Det); }
void write_det(const std::string& path, std::vector<MotRow> rows) {
    write_rows(path, std::move(rows), RowKind::Det);
}

std::vector<MotRow> read_results(const std::string& path) {
    return read_rows(path, RowKind::Result);
}
void write_results(const std::string& path, std::vector<MotRow> rows) {
    write_rows(path, std::move(rows), RowKind::Result);
}

SeqInfo read_seqinfo(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    SeqInfo info;
    bool in_sequence = false, seen_section = false;
    bool have_w = false, have_h = false, have_len = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == ';' || line[0] == '#') continue;
        if (line.front() == '[') {
            in_sequence = line == "[Sequence]";
            seen_section = seen_section || in_sequence;
            continue;
        }
        if (!in_sequence) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) fail(path, lineno, "expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "name") {
            info.name = value;
        } else if (key == "imWidth") {
            info.width = parse_int(value, path, lineno);
            have_w = true;
        } else if (key == "imHeight") {
            info.height = parse_int(value, path, lineno);
            have_h = true;
        } else if (key == "seqLength") {
            info.length = parse_int(value, path, lineno);
            have_len = true;
        }
        // Unknown keys are ignored.
    }
    if (!seen_section) throw std::runtime_error(path + ": missing [Sequence] section");
    if (!have_w || !have_h || !have_len)
        throw std::runtime_error(path + ": missing imWidth, imHeight or seqLength");
    if (info.width <= 0 || info.height <= 0 || info.length <= 0)
        throw std::runtime_error(path + ": dimensions and length must be positive");
    return info;
}

void write_seqinfo(const std::string& path, const SeqInfo& info) {
    if (info.width <= 0 || info.height <= 0 || info.length <= 0)
        throw std::invalid_argument("seqinfo: dimensions and length must be positive");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "[Sequence]\n";
    out << "name=" << info.name << "\n";
    out << "imWidth=" << info.width << "\n";
    out << "imHeight=" << info.height << "\n";
    out << "seqLength=" << info.length << "\n";
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace occtrack
