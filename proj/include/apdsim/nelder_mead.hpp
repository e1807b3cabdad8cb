#pragma once

#include <functional>
#include <vector>

namespace apdsim {

struct NelderMeadOptions {
    int max_evaluations = 4000;
    double initial_step = 0.15;     // simplex edge, in the coordinates given
    double tolerance = 1.0e-10;     // spread of vertex values at convergence
    int restarts = 2;               // re-seeded simplexes around the best point
    double restart_step = 0.05;     // edge used for restarts
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

// Deterministic downhill-simplex minimizer (reflection 1, expansion 2,
// contraction 0.5, shrink 0.5).  No randomness: restarts perturb coordinates
// with fixed alternating signs, so results are bit-reproducible.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& fn,
                             std::vector<double> start, const NelderMeadOptions& opt = {});

}  // namespace apdsim
