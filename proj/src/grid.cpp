#include "hdmargin/grid.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace hdmargin {

namespace {

double to_double(const std::string& s) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw std::invalid_argument("grid: bad number '" + s + "'");
    return v;
}

void check_bounds(double lo, double hi, int count) {
    if (!(lo > 0) || !(hi > lo)) throw std::invalid_argument("grid: need 0 < min < max");
    if (count < 2) throw std::invalid_argument("grid: count must be at least 2");
}

}  // namespace

std::vector<double> log_grid(double lo, double hi, int count) {
    check_bounds(lo, hi, count);
    std::vector<double> g(count);
    double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) g[i] = std::exp(a + (b - a) * i / (count - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

std::vector<double> lin_grid(double lo, double hi, int count) {
    check_bounds(lo, hi, count);
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i) g[i] = lo + (hi - lo) * i / (count - 1);
    g.back() = hi;
    return g;
}

std::vector<double> parse_grid(std::string_view spec_in) {
    std::string spec(spec_in);
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t pos; (pos = spec.find(':', start)) != std::string::npos; start = pos + 1)
        parts.push_back(spec.substr(start, pos - start));
    parts.push_back(spec.substr(start));
    if (parts.size() != 3 && parts.size() != 4)
        throw std::invalid_argument("grid spec must look like min:max:count[:log|:lin]");

    std::string count_text = parts[2];
    std::string spacing = parts.size() == 4 ? parts[3] : "log";
    for (const char* suffix : {"log", "lin"}) {
        if (count_text.size() > 3 && count_text.ends_with(suffix)) {
            if (parts.size() == 4) throw std::invalid_argument("grid spacing given twice");
            spacing = suffix;
            count_text.resize(count_text.size() - 3);
        }
    }
    double lo = to_double(parts[0]), hi = to_double(parts[1]);
    char* end = nullptr;
    long count = std::strtol(count_text.c_str(), &end, 10);
    if (count_text.empty() || end != count_text.c_str() + count_text.size())
        throw std::invalid_argument("grid: bad count '" + count_text + "'");
    if (spacing == "log") return log_grid(lo, hi, static_cast<int>(count));
    if (spacing == "lin") return lin_grid(lo, hi, static_cast<int>(count));
    throw std::invalid_argument("grid spacing must be log or lin");
}

std::vector<double> default_grid() { return log_grid(1e-3, 1e3, 50); }

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0) || !std::isfinite(grid[i])) throw std::invalid_argument("lambda grid must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("lambda grid must be strictly increasing");
    }
}

}  // namespace hdmargin
