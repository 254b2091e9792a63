#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hdmargin/simulate.hpp"
#include "hdmargin/theory.hpp"

namespace hdmargin {

// Dataset CSV: header `label,f1,...,fp`, then one row per observation with
// label +1 or -1. Errors name the offending line.
Dataset read_dataset_csv(std::istream& in, const std::string& source = "<stream>");
Dataset read_dataset_csv(const std::filesystem::path& path);
// Round-trips exactly (17 significant digits).
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

struct McComparisonRow {
    McPoint mc;
    PrecisionPoint theory;
    // |theory - mc_mean| <= 2 mc_se
    bool agree = false;
};

// Pairs Monte Carlo points with theory points on the same grid.
std::vector<McComparisonRow> compare_with_theory(const std::vector<McPoint>& mc,
                                                 const std::vector<PrecisionPoint>& theory, double offset = 0.0);

// Columns: lambda, mc_mean, mc_se, theory, reps_converged, agree,
// mc_plus, mc_minus, theory_plus, theory_minus.
void write_mc_csv(std::ostream& out, const std::vector<McComparisonRow>& rows);

}  // namespace hdmargin
