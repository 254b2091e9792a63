#pragma once

#include <cstdint>
#include <vector>

#include "hdmargin/loss.hpp"
#include "hdmargin/simulate.hpp"

namespace hdmargin {

struct CvOptions {
    int splits = 100;
    double train_fraction = 0.95;
    std::uint64_t seed = 0;
    int threads = 0;  // 0: hardware concurrency
    TrainOptions train{};
};

struct CvPoint {
    double lambda = 0.0;
    double mean = 0.0;  // test accuracy
    double se = 0.0;
    int splits_converged = 0;
};

struct CvCurve {
    std::vector<CvPoint> points;
    double best_lambda = 0.0;
    double best_accuracy = 0.0;
};

// Repeated stratified random splits; split s shuffles with seed + s and
// holds out round((1 - train_fraction) n_c) rows of each class (at least
// one). Each split trains along the grid from the largest lambda down.
CvCurve cross_validate(const Dataset& data, const Loss& loss, const std::vector<double>& grid,
                       const CvOptions& opts = {});

}  // namespace hdmargin
