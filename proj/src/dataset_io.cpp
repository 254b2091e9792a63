#include "hdmargin/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace hdmargin {

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
    throw std::runtime_error(source + ":" + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view field, const std::string& source, std::size_t line) {
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        fail(source, line, "not a number: '" + std::string(field) + "'");
    if (!std::isfinite(v)) fail(source, line, "non-finite value");
    return v;
}

std::string format(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) fail(source, 1, "empty file, expected header label,f1,...,fp");
    ++lineno;
    auto header = split(line);
    if (header.empty() || header[0] != "label") fail(source, lineno, "missing header: first column must be 'label'");
    const std::size_t p = header.size() - 1;
    if (p == 0) fail(source, lineno, "header has no feature columns");

    std::vector<double> values;
    std::vector<double> labels;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split(line);
        if (fields.size() != p + 1)
            fail(source, lineno,
                 "expected " + std::to_string(p + 1) + " fields, found " + std::to_string(fields.size()));
        double y = parse_number(fields[0], source, lineno);
        if (y != 1.0 && y != -1.0) fail(source, lineno, "label must be +1 or -1");
        labels.push_back(y);
        for (std::size_t j = 1; j <= p; ++j) values.push_back(parse_number(fields[j], source, lineno));
    }
    const auto n = static_cast<Eigen::Index>(labels.size());
    Dataset d;
    d.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, static_cast<Eigen::Index>(p));
    d.y = Eigen::Map<Eigen::VectorXd>(labels.data(), n);
    if (d.count(1) == 0 || d.count(-1) == 0)
        throw std::runtime_error(source + ": dataset must contain both classes (+1 and -1)");
    return d;
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    return read_dataset_csv(in, path.string());
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
    out << "label";
    for (int j = 1; j <= data.p(); ++j) out << ",f" << j;
    out << '\n';
    for (int i = 0; i < data.n(); ++i) {
        out << (data.y[i] > 0 ? "1" : "-1");
        for (int j = 0; j < data.p(); ++j) out << ',' << format("%.17g", data.X(i, j));
        out << '\n';
    }
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_dataset_csv(out, data);
}

std::vector<McComparisonRow> compare_with_theory(const std::vector<McPoint>& mc,
                                                 const std::vector<PrecisionPoint>& theory, double offset) {
    if (mc.size() != theory.size()) throw std::invalid_argument("Monte Carlo and theory grids differ");
    std::vector<McComparisonRow> rows(mc.size());
    for (std::size_t j = 0; j < mc.size(); ++j) {
        rows[j].mc = mc[j];
        rows[j].theory = theory[j];
        rows[j].theory.balanced += offset;
        rows[j].agree = mc[j].reps_converged > 1 && theory[j].order.converged &&
                        std::abs(rows[j].theory.balanced - mc[j].mean) <= 2.0 * mc[j].se;
    }
    return rows;
}

void write_mc_csv(std::ostream& out, const std::vector<McComparisonRow>& rows) {
    out << "lambda,mc_mean,mc_se,theory,reps_converged,agree,mc_plus,mc_minus,theory_plus,theory_minus\n";
    for (const auto& r : rows) {
        out << format("%.6g", r.mc.lambda) << ',' << format("%.6g", r.mc.mean) << ',' << format("%.6g", r.mc.se) << ','
            << format("%.6g", r.theory.balanced) << ',' << r.mc.reps_converged << ',' << (r.agree ? 1 : 0) << ','
            << format("%.6g", r.mc.mean_plus) << ',' << format("%.6g", r.mc.mean_minus) << ','
            << format("%.6g", r.theory.precision_plus) << ',' << format("%.6g", r.theory.precision_minus) << '\n';
    }
}

}  // namespace hdmargin
