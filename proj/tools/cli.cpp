#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdmargin/cv.hpp"
#include "hdmargin/dataset_io.hpp"
#include "hdmargin/estimate.hpp"
#include "hdmargin/grid.hpp"
#include "hdmargin/loss.hpp"
#include "hdmargin/model.hpp"
#include "hdmargin/simulate.hpp"
#include "hdmargin/theory.hpp"

namespace hdmargin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad flags, unreadable or malformed inputs.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::vector<std::string> losses;
    std::string grid = "1e-3:1e3:50log";
    std::string out_dir = ".";
    std::string format = "csv";
    int threads = 0;
};

struct ModelSource {
    std::string model_path;
    std::optional<double> mu, sigma, alpha;
    std::vector<double> lambdas, R;

    bool inline_given() const { return mu || sigma || alpha || !lambdas.empty() || !R.empty(); }

    PopulationModel resolve() const {
        if (!model_path.empty() && inline_given())
            throw UsageError("give either --model or inline generator parameters, not both");
        if (!model_path.empty()) {
            try {
                return load_model(model_path);
            } catch (const std::exception& e) {
                throw UsageError(e.what());
            }
        }
        if (!mu || !sigma || !alpha)
            throw UsageError("no model: give --model or all of --mu, --sigma and --alpha");
        try {
            return PopulationModel::balanced(*mu, *sigma, *alpha, lambdas, R);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
};

void add_common(CLI::App* app, Common& c, bool with_losses) {
    if (with_losses)
        app->add_option("-l,--loss", c.losses, "loss spec: plr, svm, dwd:q=<q>, lum:a=<a>,c=<c> (repeatable)")
            ->required()
            ->expected(1, -1);
    app->add_option("-g,--grid", c.grid, "lambda grid min:max:count[log|lin]")->capture_default_str();
    app->add_option("-o,--out", c.out_dir, "output directory")->capture_default_str();
    app->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    app->add_option("--threads", c.threads, "worker threads, 0 for all cores")->capture_default_str();
}

void add_model_source(CLI::App* app, ModelSource& m) {
    app->add_option("-m,--model", m.model_path, "population model JSON");
    app->add_option("--mu", m.mu, "signal size");
    app->add_option("--sigma", m.sigma, "noise level shared by both classes");
    app->add_option("--alpha", m.alpha, "total sample ratio n/p, split evenly between classes");
    app->add_option("--lambdas", m.lambdas, "spike strengths")->delimiter(',');
    app->add_option("--R", m.R, "spike projections on the signal direction")->delimiter(',');
}

std::vector<Loss> losses_of(const Common& c) {
    if (c.losses.empty()) throw UsageError("at least one --loss is required");
    try {
        return parse_losses(c.losses);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::vector<double> grid_of(const Common& c) {
    try {
        auto g = parse_grid(c.grid);
        if (g.size() < 2) throw std::invalid_argument("grid needs at least two points");
        return g;
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("bad --grid: ") + e.what());
    }
}

fs::path prepare_out(const Common& c) {
    fs::path dir(c.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot write " + path.string());
    f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Dataset load_dataset(const std::string& path) {
    try {
        return read_dataset_csv(fs::path(path));
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

json curve_json(const PrecisionCurve& curve) {
    json rows = json::array();
    for (const auto& p : curve.points)
        rows.push_back({{"lambda", p.lambda},
                        {"precision_plus", p.precision_plus},
                        {"precision_minus", p.precision_minus},
                        {"balanced", p.balanced},
                        {"q0_plus", p.order.q0_plus},
                        {"q0_minus", p.order.q0_minus},
                        {"q_plus", p.order.q_plus},
                        {"q_minus", p.order.q_minus},
                        {"R", p.order.R},
                        {"w0", p.order.w0},
                        {"converged", p.order.converged},
                        {"residual", p.order.residual_norm}});
    return rows;
}

json best_json(const Loss& loss, const PrecisionCurve& c) {
    json j{{"loss", loss.to_string()}, {"unconverged", c.unconverged}, {"has_best", c.has_best}};
    if (c.has_best) {
        j["best_lambda"] = c.best_lambda;
        j["best_precision"] = c.best_precision;
        j["best_at_edge"] = c.best_at_edge;
    }
    return j;
}

// ---------------------------------------------------------------- theory

// Printed closed forms next to the resolvent values, one row per converged point.
std::string explicit_check_csv(const Loss& loss, const PopulationModel& model, const PrecisionCurve& curve) {
    std::ostringstream os;
    os << "lambda,q0_plus,q0_plus_explicit,q0_minus,q0_minus_explicit,R,R_explicit,min_denominator,collapse\n";
    for (const auto& p : curve.points) {
        if (!p.order.converged) continue;
        auto x = explicit_form_check(loss, model, p.order);
        os << fmt6(p.lambda) << ',' << fmt6(p.order.q0_plus) << ',' << fmt6(x.q0_plus) << ','
           << fmt6(p.order.q0_minus) << ',' << fmt6(x.q0_minus) << ',' << fmt6(p.order.R) << ',' << fmt6(x.R) << ','
           << fmt6(x.min_denominator) << ',' << (x.denominator_collapse ? 1 : 0) << '\n';
    }
    return os.str();
}

int run_theory(const Common& c, const ModelSource& src, bool refine, bool explicit_check, const std::string& solver,
               std::ostream& out) {
    const auto losses = losses_of(c);
    const auto grid = grid_of(c);
    const PopulationModel model = src.resolve();
    const fs::path dir = prepare_out(c);

    SweepOptions opts;
    opts.refine = refine;
    opts.solver = solver == "homogeneous" ? SolverKind::Homogeneous
                  : solver == "general"   ? SolverKind::General
                                          : SolverKind::Auto;
    if (opts.solver == SolverKind::Homogeneous && !model.is_homogeneous(1e-12))
        throw UsageError("--solver homogeneous needs sigma+ = sigma-, alpha+ = alpha- and equal spikes");

    json summary{{"model", model}, {"grid", grid}, {"losses", json::array()}};
    json notes = json::array();
    int unconverged = 0;
    std::optional<std::size_t> best;
    std::vector<PrecisionCurve> curves;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        PrecisionCurve curve = sweep_lambda(losses[i], model, grid, opts);
        unconverged += curve.unconverged;
        const fs::path file = dir / ("theory_" + losses[i].label() + "." + c.format);
        if (c.format == "csv") {
            std::ostringstream os;
            write_curve_csv(os, curve);
            write_text(file, os.str());
        } else {
            write_json(file, curve_json(curve));
        }
        summary["losses"].push_back(best_json(losses[i], curve));
        if (explicit_check)
            write_text(dir / ("explicit_" + losses[i].label() + ".csv"), explicit_check_csv(losses[i], model, curve));
        if (curve.has_best && curve.best_at_edge)
            notes.push_back(losses[i].to_string() + ": argmax at the " +
                            (curve.best_lambda == grid.back() ? "right" : "left") + " edge of the grid");
        if (curve.unconverged > 0)
            notes.push_back(losses[i].to_string() + ": " + std::to_string(curve.unconverged) +
                            " grid points did not converge");
        out << losses[i].to_string() << ": ";
        if (curve.has_best)
            out << "max precision " << fmt6(curve.best_precision) << " at lambda " << fmt6(curve.best_lambda);
        else
            out << "no converged point";
        out << (curve.has_best && curve.best_at_edge ? " (grid edge)" : "") << '\n';
        curves.push_back(std::move(curve));
        if (curves.back().has_best && (!best || curves.back().best_precision > curves[*best].best_precision))
            best = i;
    }
    if (best) {
        summary["best_method"] = losses[*best].to_string();
        summary["best_lambda"] = curves[*best].best_lambda;
        summary["best_precision"] = curves[*best].best_precision;
        out << "best: " << losses[*best].to_string() << '\n';
    }
    summary["notes"] = notes;
    write_json(dir / "summary.json", summary);
    return unconverged > 0 ? kNumerical : kOk;
}

// -------------------------------------------------------------- simulate

struct SimulateArgs {
    int p = 250;
    int reps = 100;
    std::uint64_t seed = 1;
    std::string noise = "gaussian";
    std::string dataset_out;
    double theory_offset = 0.0;
};

int run_simulate(const Common& c, const ModelSource& src, const SimulateArgs& a, std::ostream& out) {
    const PopulationModel model = src.resolve();
    if (a.p <= 0) throw UsageError("--p must be positive");
    if (a.reps == 1 || a.reps < 0) throw UsageError("--reps must be 0 (dataset only) or at least 2");
    GeneratorSpec spec;
    try {
        spec = GeneratorSpec::from_model(model, a.p, a.seed, parse_noise(a.noise));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const fs::path dir = prepare_out(c);
    if (!a.dataset_out.empty()) {
        std::ofstream f(a.dataset_out, std::ios::binary);
        if (!f) throw UsageError("cannot write " + a.dataset_out);
        write_dataset_csv(f, generate(spec));
        out << "dataset: " << spec.n_plus << " + " << spec.n_minus << " rows, p = " << spec.p << '\n';
    }
    if (a.reps == 0) return kOk;

    const auto losses = losses_of(c);
    const auto grid = grid_of(c);
    McOptions mc;
    mc.reps = a.reps;
    mc.threads = c.threads;
    SweepOptions sweep;
    sweep.refine = false;

    int status = kOk;
    for (const auto& loss : losses) {
        PrecisionCurve theory = sweep_lambda(loss, spec.model, grid, sweep);
        if (theory.unconverged > 0) status = kNumerical;
        auto points = monte_carlo_curve(spec, loss, grid, mc);
        auto rows = compare_with_theory(points, theory.points, a.theory_offset);
        const fs::path file = dir / ("mc_" + loss.label() + "." + c.format);
        int agree = 0;
        for (const auto& r : rows) agree += r.agree;
        if (c.format == "csv") {
            std::ostringstream os;
            write_mc_csv(os, rows);
            write_text(file, os.str());
        } else {
            json arr = json::array();
            for (const auto& r : rows)
                arr.push_back({{"lambda", r.mc.lambda},
                               {"mc_mean", r.mc.mean},
                               {"mc_se", r.mc.se},
                               {"theory", r.theory.balanced},
                               {"reps_converged", r.mc.reps_converged},
                               {"agree", r.agree},
                               {"mc_plus", r.mc.mean_plus},
                               {"mc_minus", r.mc.mean_minus},
                               {"theory_plus", r.theory.precision_plus},
                               {"theory_minus", r.theory.precision_minus}});
            write_json(file, arr);
        }
        out << loss.to_string() << ": " << agree << "/" << rows.size() << " grid points within 2 SE\n";
    }
    return status;
}

// -------------------------------------------------------------- estimate

int run_estimate(const Common& c, const std::string& data_path, bool homogeneous, std::ostream& out) {
    const Dataset data = load_dataset(data_path);
    const fs::path dir = prepare_out(c);
    EstimateOptions opts;
    opts.homogeneous = homogeneous;
    EstimationReport rep;
    try {
        rep = estimate_model(data, opts);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    write_json(dir / "model.json", json(rep.model));
    write_json(dir / "report.json", json(rep));
    out << "mu " << fmt6(rep.model.mu) << ", sigma " << fmt6(rep.model.sigma_plus) << "/" << fmt6(rep.model.sigma_minus)
        << ", K " << rep.model.K() << '\n';
    for (const auto& w : rep.warnings) out << "warning: " << w << '\n';
    return kOk;
}

// --------------------------------------------------------------- compare

struct CompareArgs {
    std::string data;
    bool homogeneous = false;
    int splits = 100;
    double train_fraction = 0.95;
    std::uint64_t seed = 1;
};

int run_compare(const Common& c, const CompareArgs& a, std::ostream& out) {
    const auto losses = losses_of(c);
    const auto grid = grid_of(c);
    if (a.splits < 1) throw UsageError("--splits must be positive");
    if (!(a.train_fraction > 0 && a.train_fraction < 1)) throw UsageError("--train-fraction must lie in (0, 1)");
    const Dataset data = load_dataset(a.data);
    const fs::path dir = prepare_out(c);

    EstimateOptions eopts;
    eopts.homogeneous = a.homogeneous;
    EstimationReport rep;
    try {
        rep = estimate_model(data, eopts);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    write_json(dir / "model.json", json(rep.model));
    write_json(dir / "report.json", json(rep));

    CvOptions cv;
    cv.splits = a.splits;
    cv.train_fraction = a.train_fraction;
    cv.seed = a.seed;
    cv.threads = c.threads;

    int status = kOk;
    json summary{{"model", rep.model}, {"losses", json::array()}};
    for (const auto& loss : losses) {
        PrecisionCurve theory = sweep_lambda(loss, rep.model, grid);
        if (theory.unconverged > 0) status = kNumerical;
        CvCurve cvc = cross_validate(data, loss, grid, cv);

        const fs::path file = dir / ("compare_" + loss.label() + "." + c.format);
        if (c.format == "csv") {
            std::ostringstream os;
            os << "lambda,theory,cv_mean,cv_se,theory_converged,splits_converged\n";
            for (std::size_t j = 0; j < grid.size(); ++j)
                os << fmt6(grid[j]) << ',' << fmt6(theory.points[j].balanced) << ',' << fmt6(cvc.points[j].mean)
                   << ',' << fmt6(cvc.points[j].se) << ',' << (theory.points[j].order.converged ? 1 : 0) << ','
                   << cvc.points[j].splits_converged << '\n';
            write_text(file, os.str());
        } else {
            json arr = json::array();
            for (std::size_t j = 0; j < grid.size(); ++j)
                arr.push_back({{"lambda", grid[j]},
                               {"theory", theory.points[j].balanced},
                               {"cv_mean", cvc.points[j].mean},
                               {"cv_se", cvc.points[j].se},
                               {"theory_converged", theory.points[j].order.converged},
                               {"splits_converged", cvc.points[j].splits_converged}});
            write_json(file, arr);
        }
        json entry = best_json(loss, theory);
        entry["cv_best_lambda"] = cvc.best_lambda;
        entry["cv_best_accuracy"] = cvc.best_accuracy;
        if (theory.has_best && cvc.best_lambda > 0) entry["argmax_ratio"] = theory.best_lambda / cvc.best_lambda;
        summary["losses"].push_back(entry);
        out << loss.to_string() << ": theory " << fmt6(theory.best_precision) << " at " << fmt6(theory.best_lambda)
            << ", cv " << fmt6(cvc.best_accuracy) << " at " << fmt6(cvc.best_lambda) << '\n';
    }
    write_json(dir / "compare_summary.json", summary);
    return status;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Asymptotic precision of regularized margin classifiers under spiked models", "hdmargin"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    Common common;
    ModelSource src;

    auto* theory = app.add_subcommand("theory", "solve the fixed-point equations along a lambda grid");
    add_common(theory, common, true);
    add_model_source(theory, src);
    bool no_refine = false;
    std::string solver = "auto";
    bool explicit_check = false;
    theory->add_flag("--no-refine", no_refine, "skip the golden-section refinement of the argmax");
    theory->add_flag("--explicit-check", explicit_check,
                     "also write the closed forms for q0 and R next to the resolvent values");
    theory->add_option("--solver", solver, "fixed-point system")
        ->check(CLI::IsMember({"auto", "homogeneous", "general"}))
        ->capture_default_str();

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo precision against theory");
    add_common(simulate, common, false);
    simulate->add_option("-l,--loss", common.losses, "loss spec (repeatable)")->expected(1, -1);
    add_model_source(simulate, src);
    simulate->add_option("-p,--p", sim.p, "dimension")->capture_default_str();
    simulate->add_option("-r,--reps", sim.reps, "replicates (0 writes the dataset only)")->capture_default_str();
    simulate->add_option("-s,--seed", sim.seed, "base seed, replicate r uses seed + r")->capture_default_str();
    simulate->add_option("--noise", sim.noise, "gaussian or rademacher-scaled")
        ->check(CLI::IsMember({"gaussian", "rademacher-scaled"}))
        ->capture_default_str();
    simulate->add_option("--dataset-out", sim.dataset_out, "write the base-seed dataset as CSV");
    // Shifts the theory column; used to check that the agreement test can fail.
    simulate->add_option("--theory-offset", sim.theory_offset)->group("");

    std::string est_data;
    bool est_homogeneous = false;
    auto* estimate = app.add_subcommand("estimate", "estimate the population model from a labeled CSV");
    add_common(estimate, common, false);
    estimate->add_option("-d,--data", est_data, "dataset CSV (label,f1,...,fp)")->required();
    estimate->add_flag("--homogeneous", est_homogeneous, "pool the two classes' covariance");

    CompareArgs cmp;
    auto* compare = app.add_subcommand("compare", "theory curves of the estimated model against cross validation");
    add_common(compare, common, true);
    compare->add_option("-d,--data", cmp.data, "dataset CSV (label,f1,...,fp)")->required();
    compare->add_flag("--homogeneous", cmp.homogeneous, "pool the two classes' covariance");
    compare->add_option("--splits", cmp.splits, "random splits")->capture_default_str();
    compare->add_option("--train-fraction", cmp.train_fraction, "training share of each split")
        ->capture_default_str();
    compare->add_option("-s,--seed", cmp.seed, "base seed, split s uses seed + s")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*theory) return run_theory(common, src, !no_refine, explicit_check, solver, out);
        if (*simulate) return run_simulate(common, src, sim, out);
        if (*estimate) return run_estimate(common, est_data, est_homogeneous, out);
        if (*compare) return run_compare(common, cmp, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    }
    return kUsage;
}

}  // namespace hdmargin::cli
