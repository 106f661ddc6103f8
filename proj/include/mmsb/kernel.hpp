#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "mmsb/phase_grid.hpp"

namespace mmsb {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * How the interval length enters the double-integrator cost.
 *
 * exact: 12 d^2/h^3 - 12 d w/h^2 + 4 w^2/h with d = x1 - x0 - v0 h, the quadratic
 *        form of the inverse transition covariance of dx = v dt, dv = dw.
 * uniform: (12 d^2 - 12 d w + 4 w^2)/h with d = x1 - x0 - v0, a uniform 1/h scaling
 *        that agrees with exact mode only at h = 1.
 */
enum class CostMode { exact, uniform };

CostMode parse_cost_mode(const std::string& text);
std::string to_string(CostMode mode);

/// Transport cost between consecutive phase states; throws NonPositiveDuration for h <= 0.
double pair_cost(PhasePoint z0, PhasePoint z1, double h, CostMode mode);

/// Default cap on a single kernel's storage (log-weights, 8 bytes each).
inline constexpr std::size_t kDefaultKernelBudgetBytes = std::size_t{1} << 30;

/**
 * GibbsKernel: log of exp(-C/eps) over all state pairs of one grid.
 *
 * Stored in the log domain. Entry (s, s') is the weight of moving from state s at t_i to state s' at t_{i+1}.
 */
class GibbsKernel {
public:
    GibbsKernel(GridPtr grid, double h, double epsilon, CostMode mode, RowMatrix log_weights);

    const PhaseGrid& grid() const noexcept { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    double duration() const noexcept { return h_; }
    double epsilon() const noexcept { return eps_; }
    CostMode mode() const noexcept { return mode_; }
    std::size_t n_states() const noexcept { return static_cast<std::size_t>(log_weights_.rows()); }

    const RowMatrix& log_weights() const noexcept { return log_weights_; }
    double log_weight(std::size_t s, std::size_t t) const noexcept { return log_weights_(s, t); }

    /// log of the total kernel mass, sum over all pairs of exp(log_weight).
    double log_total() const noexcept { return log_total_; }

    /// Same kernel multiplied by exp(shift).
    GibbsKernel shifted(double shift) const;

private:
    GridPtr grid_;
    double h_;
    double eps_;
    CostMode mode_;
    RowMatrix log_weights_;
    double log_total_;
};

using KernelPtr = std::shared_ptr<const GibbsKernel>;

/// Builds log_weights[s,s'] = -pair_cost(z_s, z_s', h, mode)/eps.
GibbsKernel build_gibbs(GridPtr grid, double h, double epsilon, CostMode mode,
                        std::size_t memory_budget_bytes = kDefaultKernelBudgetBytes);

/// Gaussian law of the pinned prior bridge at an interior time.
struct BridgeMoments {
    PhasePoint mean;
    /// Row-major 2x2 covariance of (x, v).
    std::array<double, 4> covariance{};
};

/**
 * Conditional law at time tau of dx = v dt, dv = sqrt(noise) dw started at z0 and
 * pinned to z1 at time h. The mean is the cubic Hermite interpolant and does not
 * depend on the noise level; the covariance is proportional to it.
 */
BridgeMoments bridge_moments(PhasePoint z0, PhasePoint z1, double h, double tau, double noise);

/**
 * The bridge mean is linear in the endpoints: mean = A z0 + B z1. Returns
 * {A, B} as row-major 2x2 matrices so mixtures can be averaged in closed form.
 */
std::array<std::array<double, 4>, 2> bridge_mean_operators(double h, double tau);

// Kernel dump: magic "MMSBKRN1", uint64 n_state, then n_state^2 little-endian
// doubles of log-weights, row-major.
void write_kernel_dump(const std::filesystem::path& path, const GibbsKernel& kernel);
RowMatrix read_kernel_dump(const std::filesystem::path& path);

}  // namespace mmsb
