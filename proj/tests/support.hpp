#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "mmsb/bregman.hpp"
#include "mmsb/phase_grid.hpp"

namespace mmsb::testing {

inline GridPtr make_grid(double x0, double x1, std::size_t nx, double v0, double v1, std::size_t nv) {
    return std::make_shared<const PhaseGrid>(PhaseGrid::uniform(x0, x1, nx, v0, v1, nv));
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, double floor = 0.05) {
    std::uniform_real_distribution<double> u(floor, 1.0);
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) total += (x = u(rng));
    for (auto& x : w) x /= total;
    return w;
}

inline PositionalMarginal random_marginal(std::mt19937_64& rng, const PhaseGrid& g, double floor = 0.05) {
    const auto xs = g.x_nodes();
    return PositionalMarginal::normalized({xs.begin(), xs.end()}, random_simplex(rng, g.n_x(), floor));
}

inline Problem random_problem(std::mt19937_64& rng, GridPtr g, std::size_t n_intervals, double eps) {
    Problem p;
    p.grid = std::move(g);
    p.epsilon = eps;
    std::uniform_real_distribution<double> dt(0.3, 1.2);
    double t = 0.0;
    for (std::size_t i = 0; i <= n_intervals; ++i) {
        p.times.push_back(t);
        t += dt(rng);
    }
    for (std::size_t i = 0; i <= n_intervals; ++i) p.marginals.push_back(random_marginal(rng, *p.grid));
    return p;
}

inline double l1(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    return s;
}

inline std::vector<double> exp_vector(const Eigen::VectorXd& v) {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) out[static_cast<std::size_t>(k)] = std::exp(v(k));
    return out;
}

/// Positional projection of a linear state-mass vector.
inline std::vector<double> positional(const std::vector<double>& m, const PhaseGrid& g) {
    std::vector<double> out(g.n_x(), 0.0);
    for (std::size_t s = 0; s < m.size(); ++s) out[g.ix_of(s)] += m[s];
    return out;
}

}  // namespace mmsb::testing
