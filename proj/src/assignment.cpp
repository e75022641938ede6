#include "occtrack/assignment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace occtrack {

// Shortest-augmenting-path Hungarian algorithm with row/column potentials,
// O(N^3). The matrix is padded to square with forbidden-cost entries; padding
// and forbidden pairs share the same cost, so minimizing the total first
// maximizes the number of feasible pairs, then minimizes their cost.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n, int m) {
    if (n < 0 || m < 0 || cost.size() != static_cast<size_t>(n) * m)
        throw std::invalid_argument("solve_assignment: cost size does not match n x m");
    for (double c : cost)
        if (std::isnan(c)) throw std::invalid_argument("solve_assignment: NaN cost");
    std::vector<int> result(n, -1);
    if (n == 0 || m == 0) return result;

    const int N = std::max(n, m);
    auto at = [&](int i, int j) -> double {
        if (i < n && j < m) {
            const double c = cost[static_cast<size_t>(i) * m + j];
            return c >= kInfeasibleCost ? kInfeasibleCost : c;
        }
        return kInfeasibleCost;
    };

    const double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(N + 1, 0.0), v(N + 1, 0.0);
    std::vector<int> p(N + 1, 0), way(N + 1, 0);
    for (int i = 1; i <= N; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(N + 1, kInf);
        std::vector<char> used(N + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= N; ++j) {
                if (used[j]) continue;
                const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= N; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    for (int j = 1; j <= N; ++j) {
        const int i = p[j];
        if (i >= 1 && i <= n && j <= m && at(i - 1, j - 1) < kInfeasibleCost)
            result[i - 1] = j - 1;
    }
    return result;
}

}  // namespace occtrack
