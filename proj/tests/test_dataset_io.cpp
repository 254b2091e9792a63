#include <doctest.h>

#include <sstream>
#include <stdexcept>
#include <string>

#include "hdmargin/dataset_io.hpp"

using namespace hdmargin;

namespace {

std::string error_of(const std::string& text) {
    std::istringstream in(text);
    try {
        read_dataset_csv(in, "data.csv");
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("dataset_io") {

TEST_CASE("csv round trip is exact") {
    auto spec = GeneratorSpec::from_model(PopulationModel::balanced(1.0, 0.7, 0.5, {2.0}, {0.4}), 12, 3);
    auto d = generate(spec);
    std::ostringstream out;
    write_dataset_csv(out, d);
    std::istringstream in(out.str());
    auto back = read_dataset_csv(in);
    CHECK(back.X == d.X);
    CHECK(back.y == d.y);
    CHECK_FALSE(back.provenance.has_value());
    CHECK(out.str().rfind("label,f1,f2,", 0) == 0);
}

TEST_CASE("reader accepts plain rows and signed labels") {
    std::istringstream in("label,a,b\n+1,1.5,-2\n-1,0,3e-2\n1,4,5\n");
    auto d = read_dataset_csv(in);
    CHECK(d.n() == 3);
    CHECK(d.p() == 2);
    CHECK(d.count(1) == 2);
    CHECK(d.X(1, 1) == doctest::Approx(0.03));
}

TEST_CASE("reader errors name the line") {
    CHECK(error_of("") == "data.csv:1: empty file, expected header label,f1,...,fp");
    CHECK(error_of("y,f1\n1,2\n").find("data.csv:1: missing header") == 0);
    CHECK(error_of("label,f1\n1,2\n-1,x\n").find("data.csv:3: not a number") == 0);
    CHECK(error_of("label,f1\n1,2\n0,1\n").find("data.csv:3: label must be +1 or -1") == 0);
    CHECK(error_of("label,f1,f2\n1,2\n-1,1,1\n").find("data.csv:2:") == 0);
    CHECK(error_of("label,f1\n1,2\n1,3\n").find("both classes") != std::string::npos);
    CHECK(error_of("label,f1\n1,inf\n-1,3\n").find("data.csv:2: non-finite") == 0);
    CHECK_THROWS_AS(read_dataset_csv(std::filesystem::path("/nonexistent/x.csv")), std::runtime_error);
}

TEST_CASE("comparison flags agreement within two standard errors") {
    std::vector<McPoint> mc(2);
    mc[0] = {0.1, 0.80, 0.01, 0.8, 0.8, 10};
    mc[1] = {1.0, 0.80, 0.01, 0.8, 0.8, 10};
    std::vector<PrecisionPoint> th(2);
    th[0].balanced = 0.815;
    th[0].order.converged = true;
    th[1].balanced = 0.825;
    th[1].order.converged = true;
    auto rows = compare_with_theory(mc, th);
    CHECK(rows[0].agree);
    CHECK_FALSE(rows[1].agree);
    rows = compare_with_theory(mc, th, -0.02);
    CHECK(rows[1].agree);
    CHECK_THROWS_AS(compare_with_theory(mc, {}), std::invalid_argument);

    std::ostringstream out;
    write_mc_csv(out, rows);
    std::istringstream in(out.str());
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "lambda,mc_mean,mc_se,theory,reps_converged,agree,mc_plus,mc_minus,theory_plus,theory_minus");
    CHECK(first.rfind("0.1,0.8,0.01,0.795,10,1,", 0) == 0);
}

}  // TEST_SUITE
