#include "apdsim/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>

#include "apdsim/params.hpp"

namespace apdsim {

namespace {

struct Simplex {
    std::vector<std::vector<double>> x;
    std::vector<double> f;
};

NelderMeadResult minimize_once(const std::function<double(const std::vector<double>&)>& fn,
                               const std::vector<double>& start, double step, int budget,
                               double tolerance) {
    const std::size_t n = start.size();
    NelderMeadResult res;
    res.x = start;

    Simplex s;
    s.x.assign(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) {
        const double base = s.x[i + 1][i];
        s.x[i + 1][i] = base + (base != 0.0 ? step * std::abs(base) : step);
    }
    s.f.resize(n + 1);
    int evals = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        s.f[i] = fn(s.x[i]);
        ++evals;
    }

    std::vector<std::size_t> order(n + 1);
    while (evals < budget) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return s.f[a] < s.f[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second_worst = order[n - 1];
        if (std::abs(s.f[worst] - s.f[best]) <=
            tolerance * (std::abs(s.f[best]) + tolerance)) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += s.x[i][d];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double alpha) {
            std::vector<double> p(n);
            for (std::size_t d = 0; d < n; ++d) {
                p[d] = centroid[d] + alpha * (centroid[d] - s.x[worst][d]);
            }
            return p;
        };

        const auto reflected = blend(1.0);
        const double fr = fn(reflected);
        ++evals;
        if (fr < s.f[best]) {
            const auto expanded = blend(2.0);
            const double fe = fn(expanded);
            ++evals;
            if (fe < fr) {
                s.x[worst] = expanded;
                s.f[worst] = fe;
            } else {
                s.x[worst] = reflected;
                s.f[worst] = fr;
            }
        } else if (fr < s.f[second_worst]) {
            s.x[worst] = reflected;
            s.f[worst] = fr;
        } else {
            const auto contracted = blend(fr < s.f[worst] ? 0.5 : -0.5);
            const double fc = fn(contracted);
            ++evals;
            if (fc < std::min(fr, s.f[worst])) {
                s.x[worst] = contracted;
                s.f[worst] = fc;
            } else {
                // Shrink everything toward the best vertex.
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t d = 0; d < n; ++d) {
                        s.x[i][d] = s.x[best][d] + 0.5 * (s.x[i][d] - s.x[best][d]);
                    }
                    s.f[i] = fn(s.x[i]);
                    ++evals;
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (s.f[i] < s.f[best]) best = i;
    }
    res.x = s.x[best];
    res.value = s.f[best];
    res.evaluations = evals;
    return res;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& fn,
                             std::vector<double> start, const NelderMeadOptions& opt) {
    if (start.empty()) throw ConfigError("nelder_mead requires at least one coordinate");
    const int budget = std::max(opt.max_evaluations, 10);
    const int rounds = 1 + std::max(opt.restarts, 0);
    const int per_round = budget / rounds;

    NelderMeadResult best;
    best.value = std::numeric_limits<double>::infinity();
    std::vector<double> seed = std::move(start);
    int total_evals = 0;
    for (int round = 0; round < rounds; ++round) {
        const double step = round == 0 ? opt.initial_step : opt.restart_step;
        if (round > 0) {
            // Deterministic perturbation: nudge coordinates with alternating
            // signs so restarts explore a fresh simplex around the best point.
            for (std::size_t d = 0; d < seed.size(); ++d) {
                const double sign = ((d + static_cast<std::size_t>(round)) % 2 == 0) ? 1.0 : -1.0;
                seed[d] += sign * 0.5 * step * std::max(std::abs(seed[d]), 1.0e-12);
            }
        }
        NelderMeadResult r = minimize_once(fn, seed, step, per_round, opt.tolerance);
        total_evals += r.evaluations;
        if (r.value < best.value) {
            best = r;
        }
        seed = best.x;
    }
    best.evaluations = total_evals;
    return best;
}

}  // namespace apdsim
