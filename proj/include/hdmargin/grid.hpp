#pragma once

#include <string_view>
#include <vector>

namespace hdmargin {

// Strictly increasing, strictly positive ridge parameters.
std::vector<double> log_grid(double lo, double hi, int count);
std::vector<double> lin_grid(double lo, double hi, int count);

// Parses `min:max:count` with an optional spacing suffix, either as a fourth
// field (`1e-3:1e3:50:log`) or glued to the count (`1e-3:1e3:50lin`).
// Spacing defaults to log. Throws std::invalid_argument on bad input.
std::vector<double> parse_grid(std::string_view spec);

// Default sweep: 50 log-spaced points over [1e-3, 1e3].
std::vector<double> default_grid();

// Throws unless the grid is nonempty, positive and strictly increasing.
void check_grid(const std::vector<double>& grid);

}  // namespace hdmargin
