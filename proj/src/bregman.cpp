#include "mmsb/bregman.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "log_ops.hpp"
#include "mmsb/error.hpp"

namespace mmsb {

using detail::kNegInf;

namespace {

double l1_positional(const Eigen::VectorXd& log_marginal, const PositionalMarginal& rho, const PhaseGrid& g) {
    double total = 0.0;
    for (std::size_t ix = 0; ix < g.n_x(); ++ix) {
        double mass = 0.0;
        for (std::size_t iv = 0; iv < g.n_v(); ++iv) mass += std::exp(log_marginal(g.state(ix, iv)));
        total += std::abs(mass - rho[ix]);
    }
    return total;
}

double l1_states(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (detail::exp_masses(a.array()) - detail::exp_masses(b.array())).abs().sum();
}

// Positional log-mass per x node.
Eigen::VectorXd positional_log(const Eigen::VectorXd& log_marginal, const PhaseGrid& g) {
    Eigen::VectorXd out(g.n_x());
    for (std::size_t ix = 0; ix < g.n_x(); ++ix) {
        out(ix) = detail::log_sum_exp(std::span<const double>(log_marginal.data() + g.state(ix, 0), g.n_v()));
    }
    return out;
}

[[noreturn]] void starved(std::size_t ix) {
    throw Error(ErrorKind::StarvedConstraint,
                "positive target mass at position node " + std::to_string(ix) + " but the coupling has none");
}

void check_rho(const PositionalMarginal& rho, const PhaseGrid& g) {
    if (rho.size() != g.n_x()) throw Error(ErrorKind::InvalidArgument, "marginal size does not match grid");
}

// Sum pi log(pi/K) split by scaling vectors, computed from the marginals.
double scaling_cross_term(const Eigen::VectorXd& log_factor, const Eigen::VectorXd& log_marginal) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < log_factor.size(); ++s) {
        if (log_marginal(s) == kNegInf || log_factor(s) == kNegInf) continue;
        acc += log_factor(s) * std::exp(log_marginal(s));
    }
    return acc;
}

double kl_with_marginals(const Coupling& pi, const Eigen::VectorXd& log_left, const Eigen::VectorXd& log_right) {
    const double kernel_mass = std::exp(pi.kernel().log_total());
    if (pi.representation() == Representation::scaling) {
        const double mass = detail::exp_masses(log_left.array()).sum();
        return scaling_cross_term(pi.log_a(), log_left) + scaling_cross_term(pi.log_b(), log_right) - mass +
               kernel_mass;
    }
    const auto lp = pi.log_masses();
    const auto& lk = pi.kernel().log_weights();
    const Eigen::Index n = lp.rows();
    std::vector<double> row_cross(static_cast<std::size_t>(n), 0.0);
    std::vector<double> row_mass(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
    for (Eigen::Index s = 0; s < n; ++s) {
        const auto l = lp.row(s).array();
        const Eigen::ArrayXd p = l.max(-700.0).exp().transpose();
        const auto live = (l > kNegInf).transpose();
        const double cross = live.select(p * (l - lk.row(s).array()).transpose(), 0.0).sum();
        const double mass = live.select(p, 0.0).sum();
        row_cross[static_cast<std::size_t>(s)] = cross;
        row_mass[static_cast<std::size_t>(s)] = mass;
    }
    double cross = 0.0;
    double mass = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
        cross += row_cross[static_cast<std::size_t>(s)];
        mass += row_mass[static_cast<std::size_t>(s)];
    }
    return cross - mass + kernel_mass;
}

}  // namespace

Representation parse_representation(const std::string& text) {
    if (text == "dense") return Representation::dense;
    if (text == "scaling") return Representation::scaling;
    throw Error(ErrorKind::InvalidArgument, "unknown representation '" + text + "'");
}

std::string to_string(Representation rep) {
    return rep == Representation::dense ? "dense" : "scaling";
}

// ---------------------------------------------------------------------------
// Coupling

Coupling Coupling::normalized_prior(KernelPtr kernel, Representation rep) {
    Coupling c(std::move(kernel), rep);
    const double log_total = c.kernel_->log_total();
    const auto n = static_cast<Eigen::Index>(c.kernel_->n_states());
    if (rep == Representation::dense) {
        c.log_pi_ = c.kernel_->log_weights().array() - log_total;
    } else {
        c.log_a_ = Eigen::VectorXd::Constant(n, -log_total);
        c.log_b_ = Eigen::VectorXd::Zero(n);
    }
    return c;
}

Coupling Coupling::from_masses(KernelPtr kernel, const RowMatrix& masses) {
    Coupling c(std::move(kernel), Representation::dense);
    const auto n = static_cast<Eigen::Index>(c.kernel_->n_states());
    if (masses.rows() != n || masses.cols() != n) {
        throw Error(ErrorKind::InvalidArgument, "mass table shape does not match kernel");
    }
    if (!((masses.array() >= 0.0).all()) || !masses.allFinite()) {
        throw Error(ErrorKind::InvalidArgument, "masses must be finite and nonnegative");
    }
    c.log_pi_ = masses.array().log();
    return c;
}

Coupling Coupling::from_scalings(KernelPtr kernel, Eigen::VectorXd log_a, Eigen::VectorXd log_b) {
    Coupling c(std::move(kernel), Representation::scaling);
    const auto n = static_cast<Eigen::Index>(c.kernel_->n_states());
    if (log_a.size() != n || log_b.size() != n) {
        throw Error(ErrorKind::InvalidArgument, "scaling vectors do not match kernel");
    }
    c.log_a_ = std::move(log_a);
    c.log_b_ = std::move(log_b);
    return c;
}

double Coupling::log_mass(std::size_t s, std::size_t t) const noexcept {
    if (rep_ == Representation::dense) return log_pi_(s, t);
    const double la = log_a_(s);
    const double lb = log_b_(t);
    if (la == kNegInf || lb == kNegInf) return kNegInf;
    return la + kernel_->log_weight(s, t) + lb;
}

RowMatrix Coupling::log_masses() const {
    if (rep_ == Representation::dense) return log_pi_;
    RowMatrix out = kernel_->log_weights();
    out.colwise() += log_a_;
    out.rowwise() += log_b_.transpose();
    return out;
}

RowMatrix Coupling::masses() const {
    return detail::exp_masses(log_masses().array()).matrix();
}

double Coupling::total_mass() const {
    return detail::exp_masses(log_left_marginal().array()).sum();
}

Eigen::VectorXd Coupling::log_left_marginal() const {
    Eigen::VectorXd out;
    if (rep_ == Representation::dense) {
        detail::row_log_sum_exp(log_pi_, Eigen::VectorXd(), out);
    } else {
        detail::row_log_sum_exp(kernel_->log_weights(), log_b_, out);
        out += log_a_;
    }
    return out;
}

Eigen::VectorXd Coupling::log_right_marginal() const {
    Eigen::VectorXd out;
    if (rep_ == Representation::dense) {
        detail::col_log_sum_exp(log_pi_, Eigen::VectorXd(), out);
    } else {
        detail::col_log_sum_exp(kernel_->log_weights(), log_a_, out);
        out += log_b_;
    }
    return out;
}

void Coupling::scale_rows(const Eigen::VectorXd& log_factor) {
    if (rep_ == Representation::dense) {
        log_pi_.colwise() += log_factor;
    } else {
        log_a_ += log_factor;
    }
}

void Coupling::scale_cols(const Eigen::VectorXd& log_factor) {
    if (rep_ == Representation::dense) {
        log_pi_.rowwise() += log_factor.transpose();
    } else {
        log_b_ += log_factor;
    }
}

Coupling Coupling::transposed() const {
    const auto& k = *kernel_;
    auto kt = std::make_shared<const GibbsKernel>(k.grid_ptr(), k.duration(), k.epsilon(), k.mode(),
                                                  RowMatrix(k.log_weights().transpose()));
    Coupling c(std::move(kt), rep_);
    if (rep_ == Representation::dense) {
        c.log_pi_ = log_pi_.transpose();
    } else {
        c.log_a_ = log_b_;
        c.log_b_ = log_a_;
    }
    return c;
}

Coupling Coupling::to_dense() const {
    Coupling c(kernel_, Representation::dense);
    c.log_pi_ = log_masses();
    return c;
}

// ---------------------------------------------------------------------------
// KL

double kl(std::span<const double> alpha, std::span<const double> beta) {
    if (alpha.size() != beta.size()) throw Error(ErrorKind::InvalidArgument, "kl: size mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        const double a = alpha[k];
        const double b = beta[k];
        if (a < 0.0 || b < 0.0) throw Error(ErrorKind::InvalidArgument, "kl: negative mass");
        if (a > 0.0) {
            if (b == 0.0) throw Error(ErrorKind::SupportMismatch, "kl: alpha > 0 where beta = 0 at " + std::to_string(k));
            acc += a * std::log(a / b);
        }
        acc += b - a;
    }
    return acc;
}

double kl_to_kernel(const Coupling& pi) {
    return kl_with_marginals(pi, pi.log_left_marginal(), pi.log_right_marginal());
}

// ---------------------------------------------------------------------------
// Projections

EndpointUpdate endpoint_update(const Eigen::VectorXd& log_marginal, const PositionalMarginal& rho,
                               const PhaseGrid& g) {
    check_rho(rho, g);
    const Eigen::VectorXd positional = positional_log(log_marginal, g);
    EndpointUpdate up;
    up.log_factor.resize(log_marginal.size());
    up.log_marginal.resize(log_marginal.size());
    for (std::size_t ix = 0; ix < g.n_x(); ++ix) {
        double f = kNegInf;
        if (rho[ix] > 0.0) {
            if (positional(ix) == kNegInf) starved(ix);
            f = std::log(rho[ix]) - positional(ix);
        }
        for (std::size_t iv = 0; iv < g.n_v(); ++iv) {
            const auto s = static_cast<Eigen::Index>(g.state(ix, iv));
            up.log_factor(s) = f;
            up.log_marginal(s) = (f == kNegInf || log_marginal(s) == kNegInf) ? kNegInf : log_marginal(s) + f;
        }
    }
    return up;
}

InteriorUpdate interior_update(const Eigen::VectorXd& log_left_in, const Eigen::VectorXd& log_right_out,
                               const PositionalMarginal& rho, const PhaseGrid& g) {
    check_rho(rho, g);
    const Eigen::Index n = log_left_in.size();
    Eigen::VectorXd log_g(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const double a = log_left_in(s);
        const double b = log_right_out(s);
        log_g(s) = (a == kNegInf || b == kNegInf) ? kNegInf : 0.5 * (a + b);
    }
    const Eigen::VectorXd log_z = positional_log(log_g, g);

    InteriorUpdate up;
    up.log_marginal.resize(n);
    up.log_left_factor.resize(n);
    up.log_right_factor.resize(n);
    for (std::size_t ix = 0; ix < g.n_x(); ++ix) {
        if (rho[ix] > 0.0 && log_z(ix) == kNegInf) starved(ix);
        const double log_rho = rho[ix] > 0.0 ? std::log(rho[ix]) : kNegInf;
        for (std::size_t iv = 0; iv < g.n_v(); ++iv) {
            const auto s = static_cast<Eigen::Index>(g.state(ix, iv));
            const double mu = (log_rho == kNegInf || log_g(s) == kNegInf) ? kNegInf : log_rho + log_g(s) - log_z(ix);
            up.log_marginal(s) = mu;
            up.log_left_factor(s) = detail::log_ratio(mu, log_left_in(s));
            up.log_right_factor(s) = detail::log_ratio(mu, log_right_out(s));
        }
    }
    return up;
}

Coupling project_k0(Coupling pi, const PositionalMarginal& rho0) {
    const auto up = endpoint_update(pi.log_left_marginal(), rho0, pi.kernel().grid());
    pi.scale_rows(up.log_factor);
    return pi;
}

Coupling project_kn(Coupling pi, const PositionalMarginal& rho_n) {
    const auto up = endpoint_update(pi.log_right_marginal(), rho_n, pi.kernel().grid());
    pi.scale_cols(up.log_factor);
    return pi;
}

std::pair<Coupling, Coupling> project_ki(Coupling left, Coupling right, const PositionalMarginal& rho) {
    if (left.n_states() != right.n_states()) throw Error(ErrorKind::InvalidArgument, "coupling shapes differ");
    const auto up = interior_update(left.log_right_marginal(), right.log_left_marginal(), rho, left.kernel().grid());
    left.scale_cols(up.log_left_factor);
    right.scale_rows(up.log_right_factor);
    return {std::move(left), std::move(right)};
}

// ---------------------------------------------------------------------------
// ChainState

ChainState::ChainState(std::vector<Coupling> couplings) : couplings_(std::move(couplings)) {
    if (couplings_.empty()) throw Error(ErrorKind::InvalidArgument, "chain needs at least one coupling");
    const auto& g = couplings_.front().kernel().grid();
    for (const auto& c : couplings_) {
        if (!(c.kernel().grid() == g)) throw Error(ErrorKind::InvalidArgument, "couplings must share one grid");
    }
    cache_.resize(couplings_.size());
}

Eigen::VectorXd ChainState::log_left_marginal(std::size_t i) const {
    const auto& c = cache_.at(i);
    return c.left_fresh ? c.left : couplings_[i].log_left_marginal();
}

Eigen::VectorXd ChainState::log_right_marginal(std::size_t i) const {
    const auto& c = cache_.at(i);
    return c.right_fresh ? c.right : couplings_[i].log_right_marginal();
}

Eigen::VectorXd ChainState::log_node_marginal(std::size_t node) const {
    if (node > couplings_.size()) throw Error(ErrorKind::InvalidArgument, "node index out of range");
    return node == 0 ? log_left_marginal(0) : log_right_marginal(node - 1);
}

DiscreteMeasure ChainState::node_marginal(std::size_t node) const {
    const Eigen::VectorXd lm = log_node_marginal(node);
    std::vector<double> w(static_cast<std::size_t>(lm.size()));
    for (Eigen::Index s = 0; s < lm.size(); ++s) w[static_cast<std::size_t>(s)] = std::exp(lm(s));
    return DiscreteMeasure::normalized(couplings_.front().kernel().grid_ptr(), std::move(w));
}

const Eigen::VectorXd& ChainState::cached_left(std::size_t i) {
    auto& c = cache_[i];
    if (!c.left_fresh) {
        c.left = couplings_[i].log_left_marginal();
        c.left_fresh = true;
    }
    return c.left;
}

const Eigen::VectorXd& ChainState::cached_right(std::size_t i) {
    auto& c = cache_[i];
    if (!c.right_fresh) {
        c.right = couplings_[i].log_right_marginal();
        c.right_fresh = true;
    }
    return c.right;
}

void ChainState::refresh() {
    for (std::size_t i = 0; i < couplings_.size(); ++i) {
        cached_left(i);
        cached_right(i);
    }
}

void ChainState::project(std::size_t node, const PositionalMarginal& rho) {
    const std::size_t n = couplings_.size();
    if (node > n) throw Error(ErrorKind::InvalidArgument, "constraint index out of range");
    const auto& g = grid();
    if (node == 0) {
        auto up = endpoint_update(cached_left(0), rho, g);
        couplings_[0].scale_rows(up.log_factor);
        cache_[0].left = std::move(up.log_marginal);
        cache_[0].right_fresh = false;
    } else if (node == n) {
        auto up = endpoint_update(cached_right(n - 1), rho, g);
        couplings_[n - 1].scale_cols(up.log_factor);
        cache_[n - 1].right = std::move(up.log_marginal);
        cache_[n - 1].left_fresh = false;
    } else {
        cached_left(node);
        auto up = interior_update(cached_right(node - 1), cache_[node].left, rho, g);
        couplings_[node - 1].scale_cols(up.log_left_factor);
        couplings_[node].scale_rows(up.log_right_factor);
        cache_[node - 1].right = up.log_marginal;
        cache_[node - 1].left_fresh = false;
        cache_[node].left = std::move(up.log_marginal);
        cache_[node].right_fresh = false;
    }
}

double ChainState::violation(std::span<const PositionalMarginal> rhos) {
    const std::size_t n = couplings_.size();
    if (rhos.size() != n + 1) throw Error(ErrorKind::InvalidArgument, "need one marginal per node");
    const auto& g = grid();
    double worst = l1_positional(cached_left(0), rhos[0], g);
    worst = std::max(worst, l1_positional(cached_right(n - 1), rhos[n], g));
    for (std::size_t i = 1; i < n; ++i) {
        const auto& in = cached_right(i - 1);
        const auto& out = cached_left(i);
        worst = std::max({worst, l1_positional(in, rhos[i], g), l1_positional(out, rhos[i], g), l1_states(in, out)});
    }
    return worst;
}

double objective(const ChainState& state) {
    double total = 0.0;
    for (std::size_t i = 0; i < state.n_intervals(); ++i) {
        total += kl_with_marginals(state.coupling(i), state.log_left_marginal(i), state.log_right_marginal(i));
    }
    return total;
}

double constraint_violation(ChainState& state, std::span<const PositionalMarginal> rhos) {
    return state.violation(rhos);
}

// ---------------------------------------------------------------------------
// Sweeps and the solver

SweepOrder parse_sweep_order(const std::string& text) {
    if (text == "forward") return SweepOrder::forward;
    if (text == "backward") return SweepOrder::backward;
    if (text == "symmetric") return SweepOrder::symmetric;
    if (text == "random") return SweepOrder::random;
    throw Error(ErrorKind::InvalidArgument, "unknown sweep order '" + text + "'");
}

std::vector<std::size_t> sweep_sequence(std::size_t n_nodes, SweepOrder order, std::uint64_t& rng_state) {
    std::vector<std::size_t> seq(n_nodes);
    std::iota(seq.begin(), seq.end(), std::size_t{0});
    switch (order) {
        case SweepOrder::forward:
            break;
        case SweepOrder::backward:
            std::reverse(seq.begin(), seq.end());
            break;
        case SweepOrder::symmetric:
            for (std::size_t k = n_nodes - 1; k-- > 0;) seq.push_back(k);
            break;
        case SweepOrder::random: {
            std::mt19937_64 gen(rng_state);
            std::shuffle(seq.begin(), seq.end(), gen);
            rng_state = gen();
            break;
        }
    }
    return seq;
}

void sweep(ChainState& state, std::span<const PositionalMarginal> rhos, SweepOrder order, std::uint64_t* rng_state) {
    if (rhos.size() != state.n_nodes()) throw Error(ErrorKind::InvalidArgument, "need one marginal per node");
    std::uint64_t local = 0;
    for (std::size_t node : sweep_sequence(state.n_nodes(), order, rng_state ? *rng_state : local)) {
        state.project(node, rhos[node]);
    }
}

void Problem::validate() const {
    if (times.size() < 2) throw Error(ErrorKind::ValidationError, "times: need at least two constraint times");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!std::isfinite(times[i])) throw Error(ErrorKind::ValidationError, "times: not finite");
        if (i > 0 && !(times[i] > times[i - 1])) {
            throw Error(ErrorKind::ValidationError, "times: must be strictly increasing");
        }
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::ValidationError, "epsilon: must be positive");
    if (!grid) throw Error(ErrorKind::ValidationError, "grid: missing");
    if (marginals.size() != times.size()) {
        throw Error(ErrorKind::ValidationError, "marginals: need one per constraint time");
    }
    for (std::size_t i = 0; i < marginals.size(); ++i) {
        if (!marginals[i].matches(*grid)) {
            throw Error(ErrorKind::ValidationError, "marginals: marginal " + std::to_string(i) +
                                                        " does not live on the grid's position nodes");
        }
    }
}

std::vector<KernelPtr> build_kernels(const Problem& problem, double log_shift, std::size_t memory_budget) {
    std::map<double, KernelPtr> by_duration;
    std::vector<KernelPtr> out;
    for (std::size_t i = 0; i < problem.n_intervals(); ++i) {
        const double h = problem.times[i + 1] - problem.times[i];
        auto& slot = by_duration[h];
        if (!slot) {
            auto k = build_gibbs(problem.grid, h, problem.epsilon, problem.cost_mode, memory_budget);
            slot = std::make_shared<const GibbsKernel>(log_shift != 0.0 ? k.shifted(log_shift) : std::move(k));
        }
        out.push_back(slot);
    }
    return out;
}

ChainState initial_state(std::span<const KernelPtr> kernels, Representation rep) {
    std::vector<Coupling> couplings;
    couplings.reserve(kernels.size());
    for (const auto& k : kernels) couplings.push_back(Coupling::normalized_prior(k, rep));
    return ChainState(std::move(couplings));
}

SolveResult solve(const Problem& problem, const SolverOptions& options) {
    problem.validate();
    const auto kernels = build_kernels(problem, options.kernel_log_shift, options.kernel_memory_budget);
    return solve(problem, kernels, options);
}

SolveResult solve(const Problem& problem, std::span<const KernelPtr> kernels, const SolverOptions& options) {
    problem.validate();
    if (kernels.size() != problem.n_intervals()) throw Error(ErrorKind::InvalidArgument, "one kernel per interval");
    if (!(options.tolerance > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");

    const auto start = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    SolveResult result{initial_state(kernels, options.representation), {}};
    auto& state = result.state;
    auto& report = result.report;
    const std::span<const PositionalMarginal> rhos(problem.marginals);

    report.initial_violation = state.violation(rhos);
    report.initial_objective = objective(state);
    report.final_violation = report.initial_violation;
    report.converged = options.max_sweeps == 0 && report.initial_violation < options.tolerance;

    std::uint64_t rng = options.seed;
    for (std::size_t k = 1; k <= options.max_sweeps; ++k) {
        sweep(state, rhos, options.order, &rng);
        const double v = state.violation(rhos);
        state.record_sweep(v);
        const double obj = options.track_objective ? objective(state) : std::nan("");
        report.violation_trace.push_back(v);
        report.objective_trace.push_back(obj);
        report.final_violation = v;
        report.sweeps = k;
        if (options.on_sweep) options.on_sweep({k, v, obj, elapsed()});
        if (v < options.tolerance) {
            report.converged = true;
            break;
        }
    }
    state.refresh();
    report.wall_seconds = elapsed();
    return result;
}

}  // namespace mmsb
