#include "hdmargin/cv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <stdexcept>
#include <thread>

namespace hdmargin {

namespace {

Dataset subset(const Dataset& data, const std::vector<int>& rows) {
    Dataset d;
    d.X.resize(static_cast<Eigen::Index>(rows.size()), data.X.cols());
    d.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        d.X.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
        d.y[static_cast<Eigen::Index>(i)] = data.y[rows[i]];
    }
    return d;
}

}  // namespace

CvCurve cross_validate(const Dataset& data, const Loss& loss, const std::vector<double>& grid, const CvOptions& opts) {
    data.validate();
    if (opts.splits < 1) throw std::invalid_argument("need at least one split");
    if (!(opts.train_fraction > 0 && opts.train_fraction < 1))
        throw std::invalid_argument("train fraction must lie in (0, 1)");
    if (grid.empty()) throw std::invalid_argument("lambda grid is empty");

    std::vector<int> plus, minus;
    for (int i = 0; i < data.n(); ++i) (data.y[i] > 0 ? plus : minus).push_back(i);
    auto held_out = [&](std::size_t n) {
        auto k = static_cast<std::size_t>(std::lround((1.0 - opts.train_fraction) * static_cast<double>(n)));
        return std::clamp<std::size_t>(k, 1, n - 1);
    };
    if (plus.size() < 2 || minus.size() < 2) throw std::invalid_argument("each class needs at least two rows");
    const std::size_t tp = held_out(plus.size()), tm = held_out(minus.size());

    const std::size_t G = grid.size();
    const int S = opts.splits;
    std::vector<double> acc(static_cast<std::size_t>(S) * G, std::nan(""));

    auto run = [&](int s) {
        std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(s));
        std::vector<int> a = plus, b = minus;
        std::shuffle(a.begin(), a.end(), rng);
        std::shuffle(b.begin(), b.end(), rng);
        std::vector<int> test(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(tp));
        test.insert(test.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(tm));
        std::vector<int> train_rows(a.begin() + static_cast<std::ptrdiff_t>(tp), a.end());
        train_rows.insert(train_rows.end(), b.begin() + static_cast<std::ptrdiff_t>(tm), b.end());
        std::sort(test.begin(), test.end());
        std::sort(train_rows.begin(), train_rows.end());
        const Dataset tr = subset(data, train_rows), te = subset(data, test);
        const double scale = opts.train.sqrt_p_scaling ? 1.0 / std::sqrt(static_cast<double>(data.p())) : 1.0;

        std::optional<FittedClassifier> warm;
        for (std::size_t j = G; j-- > 0;) {
            FittedClassifier fit = train(tr, loss, grid[j], opts.train, warm ? &*warm : nullptr);
            warm = fit;
            if (!fit.converged) continue;
            Eigen::VectorXd margin = (te.X * fit.w * scale).array() + fit.w0;
            int correct = 0;
            for (Eigen::Index i = 0; i < margin.size(); ++i) correct += te.y[i] * margin[i] > 0;
            acc[static_cast<std::size_t>(s) * G + j] = static_cast<double>(correct) / static_cast<double>(margin.size());
        }
    };

    int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, S);
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr failure;
    auto worker = [&] {
        for (int s; !failed && (s = next++) < S;) {
            try {
                run(s);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    CvCurve curve;
    curve.points.resize(G);
    bool have_best = false;
    for (std::size_t j = 0; j < G; ++j) {
        CvPoint& pt = curve.points[j];
        pt.lambda = grid[j];
        double sum = 0;
        for (int s = 0; s < S; ++s) {
            double v = acc[static_cast<std::size_t>(s) * G + j];
            if (std::isnan(v)) continue;
            sum += v;
            ++pt.splits_converged;
        }
        if (pt.splits_converged == 0) {
            pt.mean = pt.se = std::nan("");
            continue;
        }
        pt.mean = sum / pt.splits_converged;
        double ss = 0;
        for (int s = 0; s < S; ++s) {
            double v = acc[static_cast<std::size_t>(s) * G + j];
            if (!std::isnan(v)) ss += (v - pt.mean) * (v - pt.mean);
        }
        pt.se = pt.splits_converged > 1 ? std::sqrt(ss / (pt.splits_converged - 1) / pt.splits_converged) : 0.0;
        if (!have_best || pt.mean > curve.best_accuracy) {
            have_best = true;
            curve.best_accuracy = pt.mean;
            curve.best_lambda = pt.lambda;
        }
    }
    return curve;
}

}  // namespace hdmargin
