#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "hdmargin/dataset_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "hdmargin");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = hdmargin::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("hdmargin_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

const std::vector<std::string> kBreastCancer = {"--mu",      "5.33",
                                            "--sigma",   "2.08",
                                            "--alpha",   "1.39",
                                            "--lambdas", "15.75,6.98,5.75,5.28,3.33,2.30,1.90,1.76,1.25",
                                            "--R",       "0.68,0.11,-0.58,-0.04,-0.19,0.06,0.03,0.03,0.18"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
    auto dir = fresh_dir("usage").string();
    CHECK(run({}).code == 1);
    CHECK(run({"theory", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "-o", dir}).code == 1);
    CHECK(run({"theory", "--loss", "hinge", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "-o", dir}).code == 1);
    CHECK(run({"theory", "--loss", "svm", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "--grid", "1:1:5", "-o", dir})
              .code == 1);
    CHECK(run({"theory", "--loss", "svm", "--mu", "2", "--sigma", "1", "-o", dir}).code == 1);
    CHECK(run({"theory", "--loss", "svm", "--model", "m.json", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "-o",
               dir})
              .code == 1);
    auto missing = run({"theory", "--loss", "svm", "--model", "/nonexistent/model.json", "-o", dir});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error:") == 0);
    CHECK(run({"simulate", "--loss", "svm", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "--reps", "1", "-o", dir})
              .code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("theory on the breast cancer model ranks the smooth losses first") {
    auto dir = fresh_dir("s6");
    auto r = run(cat({"theory", "--loss", "svm", "--loss", "plr", "--loss", "dwd", "-o", dir.string()}, kBreastCancer));
    REQUIRE(r.code == 0);
    auto s = load(dir / "summary.json");
    std::string best = s["best_method"];
    CHECK((best == "plr" || best == "dwd:q=1"));
    double svm = s["losses"][0]["best_precision"], plr = s["losses"][1]["best_precision"],
           dwd = s["losses"][2]["best_precision"];
    CHECK(plr - svm > 0.001);
    CHECK(plr - svm < 0.005);
    CHECK(dwd > svm);
    CHECK(s["notes"].empty());
    for (const char* f : {"theory_svm.csv", "theory_plr.csv", "theory_dwd_q1.csv"}) CHECK(fs::exists(dir / f));
    CHECK(r.out.find("best: ") != std::string::npos);
}

TEST_CASE("theory reads a model file and notes right-edge argmax without spikes") {
    auto dir = fresh_dir("k0");
    {
        std::ofstream f(dir / "model.json");
        f << json(hdmargin::PopulationModel::balanced(2.0, 1.0, 0.5)).dump();
    }
    auto r = run({"theory", "--loss", "plr", "--loss", "svm", "--model", (dir / "model.json").string(), "--grid",
                  "1e-2:1e2:9", "--format", "json", "-o", dir.string()});
    REQUIRE(r.code == 0);
    auto s = load(dir / "summary.json");
    REQUIRE(s["notes"].size() == 2);
    CHECK(s["notes"][0].get<std::string>().find("right edge") != std::string::npos);
    auto curve = load(dir / "theory_plr.json");
    REQUIRE(curve.size() == 9);
    for (std::size_t j = 1; j < curve.size(); ++j)
        CHECK(curve[j]["balanced"].get<double>() >= curve[j - 1]["balanced"].get<double>() - 1e-9);
}

TEST_CASE("explicit-form diagnostic file") {
    auto dir = fresh_dir("explicit");
    auto r = run({"theory", "--loss", "plr", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "--lambdas", "4,4", "--R",
                  "0.7071,0", "--grid", "0.1:10:3", "--explicit-check", "-o", dir.string()});
    REQUIRE(r.code == 0);
    std::istringstream in(slurp(dir / "explicit_plr.csv"));
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "lambda,q0_plus,q0_plus_explicit,q0_minus,q0_minus_explicit,R,R_explicit,min_denominator,collapse");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("simulate smoke run and agreement self-test") {
    auto dir = fresh_dir("sim");
    auto base = std::vector<std::string>{"simulate", "--loss", "plr",   "--mu",   "2",   "--sigma",
                                         "1",        "--alpha", "0.5", "--p",    "100", "--grid",
                                         "1e-1:1e1:3", "--seed", "3",  "-o",     dir.string()};
    auto r = run(cat(base, {"--reps", "10"}));
    REQUIRE(r.code == 0);
    std::string honest = slurp(dir / "mc_plr.csv");
    CHECK(honest.rfind("lambda,mc_mean,mc_se,theory,reps_converged,agree,", 0) == 0);

    r = run(cat(base, {"--reps", "10", "--theory-offset", "0.05"}));
    REQUIRE(r.code == 0);
    std::istringstream in(slurp(dir / "mc_plr.csv"));
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        REQUIRE(cells.size() == 10);
        CHECK(cells[5] == "0");
    }
    CHECK(rows == 3);

    r = run(cat(base, {"--reps", "10"}));
    CHECK(slurp(dir / "mc_plr.csv") == honest);
}

TEST_CASE("dataset written by simulate feeds estimate") {
    auto dir = fresh_dir("est");
    auto data = (dir / "data.csv").string();
    auto r = run({"simulate", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "--lambdas", "4,4", "--R", "0.7071,0",
                  "--p", "250", "--reps", "0", "--seed", "4", "--dataset-out", data, "-o", dir.string()});
    REQUIRE(r.code == 0);
    auto d = hdmargin::read_dataset_csv(fs::path(data));
    CHECK(d.n() == 126);
    CHECK(d.p() == 250);
    r = run({"estimate", "--data", data, "--homogeneous", "-o", dir.string()});
    REQUIRE(r.code == 0);
    auto m = load(dir / "model.json");
    CHECK(m["mu"].get<double>() == doctest::Approx(2.0).epsilon(0.2));
    auto rep = load(dir / "report.json");
    CHECK(rep["homogeneous"].get<bool>());
    CHECK(rep["sample_eigs_plus"].size() == 2);
}

TEST_CASE("estimate refuses bad datasets with a message") {
    auto dir = fresh_dir("bad");
    {
        std::ofstream f(dir / "one.csv");
        f << "label,f1,f2\n1,0.5,0.1\n1,0.2,0.3\n";
        std::ofstream g(dir / "nohead.csv");
        g << "1,0.5,0.1\n-1,0.2,0.3\n";
    }
    auto r = run({"estimate", "--data", (dir / "one.csv").string(), "-o", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("both classes") != std::string::npos);
    r = run({"estimate", "--data", (dir / "nohead.csv").string(), "-o", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("nohead.csv:1: missing header") != std::string::npos);
}

TEST_CASE("compare smoke run is deterministic") {
    auto dir = fresh_dir("cmp");
    auto data = (dir / "data.csv").string();
    REQUIRE(run({"simulate", "--mu", "2", "--sigma", "1", "--alpha", "0.5", "--p", "80", "--reps", "0",
                 "--dataset-out", data, "-o", dir.string()})
                .code == 0);
    auto args = std::vector<std::string>{"compare", "--data", data, "--loss", "svm", "--loss", "plr", "--splits", "3",
                                         "--grid", "1e-1:1e1:3", "--seed", "7", "-o"};
    REQUIRE(run(cat(args, {(dir / "a").string()})).code == 0);
    REQUIRE(run(cat(args, {(dir / "b").string()})).code == 0);
    for (const char* f : {"compare_svm.csv", "compare_plr.csv", "compare_summary.json", "model.json", "report.json"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(dir / "a" / f));
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    auto s = load(dir / "a" / "compare_summary.json");
    CHECK(s["losses"].size() == 2);
    CHECK(s["losses"][0].contains("cv_best_lambda"));
    std::string csv = slurp(dir / "a" / "compare_svm.csv");
    CHECK(csv.rfind("lambda,theory,cv_mean,cv_se,theory_converged,splits_converged\n", 0) == 0);
}

}  // TEST_SUITE
