#pragma once

#include <vector>

namespace occtrack {

// Cost at or above this marks a forbidden pairing.
inline constexpr double kInfeasibleCost = 1e9;

// Minimum-cost assignment over an n x m cost matrix (row-major). Returns one
// column index per row, or -1 for rows left unassigned (either no columns
// remain or only forbidden pairings). Among all assignments it maximizes the
// number of feasible pairs, then minimizes their total cost.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n, int m);

}  // namespace occtrack
