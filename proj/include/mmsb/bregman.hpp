#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmsb/kernel.hpp"
#include "mmsb/phase_grid.hpp"

namespace mmsb {

enum class Representation { dense, scaling };

Representation parse_representation(const std::string& text);
std::string to_string(Representation rep);

/**
 * Coupling: nonnegative joint mass over (state at t_i, state at t_{i+1}).
 *
 * Dense keeps a full table of log-masses. Scaling keeps log a and log b with
 * pi[s,t] = exp(log a[s] + log K[s,t] + log b[t]).
 */
class Coupling {
public:
    /// K / sum(K).
    static Coupling normalized_prior(KernelPtr kernel, Representation rep);
    /// Dense coupling from linear masses; zero entries are allowed.
    static Coupling from_masses(KernelPtr kernel, const RowMatrix& masses);
    static Coupling from_scalings(KernelPtr kernel, Eigen::VectorXd log_a, Eigen::VectorXd log_b);

    Representation representation() const noexcept { return rep_; }
    const GibbsKernel& kernel() const noexcept { return *kernel_; }
    const KernelPtr& kernel_ptr() const noexcept { return kernel_; }
    std::size_t n_states() const noexcept { return kernel_->n_states(); }

    double log_mass(std::size_t s, std::size_t t) const noexcept;
    RowMatrix log_masses() const;
    RowMatrix masses() const;
    double total_mass() const;

    /// log of sum over the right state, indexed by the left state.
    Eigen::VectorXd log_left_marginal() const;
    /// log of sum over the left state, indexed by the right state.
    Eigen::VectorXd log_right_marginal() const;

    void scale_rows(const Eigen::VectorXd& log_factor);
    void scale_cols(const Eigen::VectorXd& log_factor);

    /// Scaling vectors (scaling form only).
    const Eigen::VectorXd& log_a() const noexcept { return log_a_; }
    const Eigen::VectorXd& log_b() const noexcept { return log_b_; }

    /// Same masses with left and right swapped, over the transposed kernel.
    Coupling transposed() const;
    /// Same coupling in the other representation (dense from scaling only).
    Coupling to_dense() const;

private:
    Coupling(KernelPtr kernel, Representation rep) : kernel_(std::move(kernel)), rep_(rep) {}

    KernelPtr kernel_;
    Representation rep_;
    RowMatrix log_pi_;        // dense
    Eigen::VectorXd log_a_;   // scaling
    Eigen::VectorXd log_b_;   // scaling
};

/// Generalized KL divergence sum alpha log(alpha/beta) - alpha + beta with 0 log 0 = 0.
double kl(std::span<const double> alpha, std::span<const double> beta);

/// KL(pi | exp(log K)) for the coupling's own kernel.
double kl_to_kernel(const Coupling& pi);

// Closed-form KL projections. Each returns the log multipliers to apply and
// the resulting node marginal.

struct EndpointUpdate {
    Eigen::VectorXd log_factor;    // per state on the constrained side
    Eigen::VectorXd log_marginal;  // node marginal after the update
};

/// Rescales a node marginal so its positional projection is rho (rows of K_0, columns of K_N).
EndpointUpdate endpoint_update(const Eigen::VectorXd& log_marginal, const PositionalMarginal& rho,
                               const PhaseGrid& grid);

struct InteriorUpdate {
    Eigen::VectorXd log_left_factor;   // columns of pi_{i-1,i}
    Eigen::VectorXd log_right_factor;  // rows of pi_{i,i+1}
    Eigen::VectorXd log_marginal;      // shared mu_i
};

/// mu_i = rho_i[ix] * g / Z[ix] with g = sqrt(m_L m_R), Z[ix] = sum over velocities of g.
InteriorUpdate interior_update(const Eigen::VectorXd& log_left_in, const Eigen::VectorXd& log_right_out,
                               const PositionalMarginal& rho, const PhaseGrid& grid);

Coupling project_k0(Coupling pi, const PositionalMarginal& rho0);
Coupling project_kn(Coupling pi, const PositionalMarginal& rho_n);
std::pair<Coupling, Coupling> project_ki(Coupling left, Coupling right, const PositionalMarginal& rho);

/**
 * ChainState: the couplings pi_{0,1}, ..., pi_{N-1,N} plus cached log marginals.
 *
 * Node marginal mu_0 is the left marginal of pi_{0,1}; mu_i for i >= 1 is the
 * right marginal of pi_{i-1,i}. At a feasible point the two sides coincide.
 */
class ChainState {
public:
    explicit ChainState(std::vector<Coupling> couplings);

    std::size_t n_intervals() const noexcept { return couplings_.size(); }
    std::size_t n_nodes() const noexcept { return couplings_.size() + 1; }
    const std::vector<Coupling>& couplings() const noexcept { return couplings_; }
    const Coupling& coupling(std::size_t i) const { return couplings_.at(i); }
    const PhaseGrid& grid() const noexcept { return couplings_.front().kernel().grid(); }

    /// Cached when fresh, recomputed otherwise. Never mutates, safe for concurrent readers.
    Eigen::VectorXd log_left_marginal(std::size_t i) const;
    Eigen::VectorXd log_right_marginal(std::size_t i) const;
    Eigen::VectorXd log_node_marginal(std::size_t node) const;
    DiscreteMeasure node_marginal(std::size_t node) const;

    /// Applies the projection onto constraint set K_node in place.
    void project(std::size_t node, const PositionalMarginal& rho);

    /// Max L1 mismatch of positional projections against rho and of the two sides of each interior node.
    double violation(std::span<const PositionalMarginal> rhos);

    /// Recomputes every stale cached marginal.
    void refresh();

    std::size_t sweeps() const noexcept { return sweeps_; }
    std::span<const double> violation_history() const noexcept { return history_; }
    void record_sweep(double violation) {
        ++sweeps_;
        history_.push_back(violation);
    }

private:
    struct Cache {
        Eigen::VectorXd left;
        Eigen::VectorXd right;
        bool left_fresh = false;
        bool right_fresh = false;
    };

    const Eigen::VectorXd& cached_left(std::size_t i);
    const Eigen::VectorXd& cached_right(std::size_t i);

    std::vector<Coupling> couplings_;
    std::vector<Cache> cache_;
    std::size_t sweeps_ = 0;
    std::vector<double> history_;
};

/// Sum of per-interval KL(pi_i | K_i).
double objective(const ChainState& state);

/// Max-L1 constraint violation (see ChainState::violation); fills the state's caches.
double constraint_violation(ChainState& state, std::span<const PositionalMarginal> rhos);

enum class SweepOrder { forward, backward, symmetric, random };

SweepOrder parse_sweep_order(const std::string& text);

/// Constraint indices visited by one sweep; forward is 0, 1, ..., N.
std::vector<std::size_t> sweep_sequence(std::size_t n_nodes, SweepOrder order, std::uint64_t& rng_state);

/// One pass of projections in the given order (forward unless stated).
void sweep(ChainState& state, std::span<const PositionalMarginal> rhos, SweepOrder order = SweepOrder::forward,
           std::uint64_t* rng_state = nullptr);

/// Problem data handed to the solver: constraint times, noise, grid, positional marginals.
struct Problem {
    std::vector<double> times;
    double epsilon = 0.1;
    GridPtr grid;
    CostMode cost_mode = CostMode::exact;
    std::vector<PositionalMarginal> marginals;

    /// Throws ValidationError naming the first violated invariant.
    void validate() const;
    std::size_t n_intervals() const noexcept { return times.size() - 1; }
};

struct SweepRecord {
    std::size_t sweep = 0;
    double violation = 0.0;
    double objective = 0.0;
    double seconds = 0.0;
};

struct SolverOptions {
    double tolerance = 1e-8;
    std::size_t max_sweeps = 5000;
    Representation representation = Representation::scaling;
    SweepOrder order = SweepOrder::forward;
    std::uint64_t seed = 0x5eed;
    /// Added to every kernel's log-weights; the iterates do not depend on it.
    double kernel_log_shift = 0.0;
    bool track_objective = true;
    std::size_t kernel_memory_budget = kDefaultKernelBudgetBytes;
    std::function<void(const SweepRecord&)> on_sweep;
};

struct SolveReport {
    bool converged = false;
    std::size_t sweeps = 0;
    double initial_violation = 0.0;
    double final_violation = 0.0;
    double initial_objective = 0.0;
    std::vector<double> objective_trace;
    std::vector<double> violation_trace;
    double wall_seconds = 0.0;
};

struct SolveResult {
    ChainState state;
    SolveReport report;
};

/// One Gibbs kernel per interval; intervals of equal length share an instance.
std::vector<KernelPtr> build_kernels(const Problem& problem, double log_shift = 0.0,
                                     std::size_t memory_budget = kDefaultKernelBudgetBytes);

/// Couplings initialized at the normalized prior K_i / sum(K_i).
ChainState initial_state(std::span<const KernelPtr> kernels, Representation rep);

/**
 * Cyclic Bregman projections from the normalized prior until the max-L1
 * violation drops below the tolerance or max_sweeps is reached. Non-convergence
 * is reported, not thrown; StarvedConstraint is thrown.
 */
SolveResult solve(const Problem& problem, const SolverOptions& options = {});
SolveResult solve(const Problem& problem, std::span<const KernelPtr> kernels, const SolverOptions& options);

}  // namespace mmsb
