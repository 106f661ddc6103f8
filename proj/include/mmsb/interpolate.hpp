#pragma once

#include <span>
#include <vector>

#include "mmsb/bregman.hpp"
#include "mmsb/phase_grid.hpp"

namespace mmsb {

/// A converged chain together with the constraint times and noise level it was solved for.
struct Solution {
    std::vector<double> times;
    double epsilon = 0.0;
    ChainState chain;
};

/**
 * Diffusion variance of the prior whose transition density is proportional to
 * exp(-C/eps) in exact cost mode.
 */
inline double bridge_noise(double epsilon) noexcept { return 0.5 * epsilon; }

/**
 * Phase-space marginal at time t as a mixture of pinned prior bridges over the
 * coupling of the enclosing interval. Each bridge Gaussian, with its covariance
 * widened by the grid's cell variance diag(dx^2/12, dv^2/12), is sampled at the
 * grid nodes and normalized on its own before being weighted by its pair mass.
 * At a constraint time the cached node marginal is returned unchanged.
 */
DiscreteMeasure marginal_at(double t, const Solution& sol);

struct MeanPoint {
    double t = 0.0;
    double mean_x = 0.0;
    double mean_v = 0.0;
};

/// Mixture means from the endpoint means of each coupling (bridge means are linear in the endpoints).
std::vector<MeanPoint> mean_path(const Solution& sol, std::span<const double> times);

/// Moments of the continuous bridge mixture by explicit summation over every state pair.
Moments mixture_moments(double t, const Solution& sol);

}  // namespace mmsb
