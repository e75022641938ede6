#pragma once

#include <string>
#include <vector>

#include "occtrack/geometry.hpp"

namespace occtrack {

// One comma-separated row in the interchange format. Frames are 1-based in
// this struct (file domain); in-memory tracking uses 0-based frames and
// converts at the boundary.
struct MotRow {
    int frame = 1;
    int id = -1;
    Box box;
    double conf = 1.0;
    int cls = 1;             // ground truth only
    double visibility = 1.0; // ground truth only

    bool operator==(const MotRow&) const = default;
};

// Canonical number formatting used in every file: integers print bare, other
// values are rounded to two decimals with trailing zeros (and a bare trailing
// dot) trimmed. "-0" never appears.
std::string format_number(double v);

// Ground truth: frame,id,left,top,w,h,conf,class,visibility
// The visibility (and class) fields are optional on read and default to 1.
std::vector<MotRow> read_gt(const std::string& path);
void write_gt(const std::string& path, std::vector<MotRow> rows);

// Detections: frame,-1,left,top,w,h,conf,-1,-1,-1
std::vector<MotRow> read_det(const std::string& path);
void write_det(const std::string& path, std::vector<MotRow> rows);

// Tracker results: frame,id,left,top,w,h,conf,-1,-1,-1
std::vector<MotRow> read_results(const std::string& path);
void write_results(const std::string& path, std::vector<MotRow> rows);

struct SeqInfo {
    std::string name;
    int width = 0;
    int height = 0;
    int length = 0;

    bool operator==(const SeqInfo&) const = default;
};

// seqinfo.ini with a [Sequence] section; keys are case-sensitive.
SeqInfo read_seqinfo(const std::string& path);
void write_seqinfo(const std::string& path, const SeqInfo& info);

}  // namespace occtrack
