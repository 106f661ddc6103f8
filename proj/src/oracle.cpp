#include "mmsb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmsb/error.hpp"

namespace mmsb {

// ---------------------------------------------------------------------------
// Natural cubic spline

SplineCurve::SplineCurve(std::vector<double> knots, std::vector<double> values, std::vector<double> second_derivatives)
    : t_(std::move(knots)), y_(std::move(values)), m_(std::move(second_derivatives)) {
    if (t_.size() < 2 || y_.size() != t_.size() || m_.size() != t_.size()) {
        throw Error(ErrorKind::DegenerateKnots, "spline needs matching knot, value and curvature lists of length >= 2");
    }
}

std::size_t SplineCurve::interval(double t) const {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - t_.begin(), 1)) - 1;
    return std::min(k, t_.size() - 2);
}

double SplineCurve::operator()(double t) const {
    if (t < t_.front()) return y_.front() + derivative(t_.front()) * (t - t_.front());
    if (t > t_.back()) return y_.back() + derivative(t_.back()) * (t - t_.back());
    const std::size_t k = interval(t);
    const double h = t_[k + 1] - t_[k];
    const double a = (t_[k + 1] - t) / h;
    const double b = (t - t_[k]) / h;
    return a * y_[k] + b * y_[k + 1] + ((a * a * a - a) * m_[k] + (b * b * b - b) * m_[k + 1]) * h * h / 6.0;
}

double SplineCurve::derivative(double t) const {
    const double tc = std::clamp(t, t_.front(), t_.back());
    const std::size_t k = interval(tc);
    const double h = t_[k + 1] - t_[k];
    const double a = (t_[k + 1] - tc) / h;
    const double b = (tc - t_[k]) / h;
    return (y_[k + 1] - y_[k]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m_[k] + (3.0 * b * b - 1.0) / 6.0 * h * m_[k + 1];
}

double SplineCurve::second_derivative(double t) const {
    if (t < t_.front() || t > t_.back()) return 0.0;
    const std::size_t k = interval(t);
    const double h = t_[k + 1] - t_[k];
    const double a = (t_[k + 1] - t) / h;
    const double b = (t - t_[k]) / h;
    return a * m_[k] + b * m_[k + 1];
}

double SplineCurve::bending_energy() const {
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < t_.size(); ++k) {
        const double h = t_[k + 1] - t_[k];
        total += h * (m_[k] * m_[k] + m_[k] * m_[k + 1] + m_[k + 1] * m_[k + 1]) / 3.0;
    }
    return total;
}

SplineCurve natural_cubic_spline(std::span<const double> times, std::span<const double> values) {
    const std::size_t n = times.size();
    if (n < 2 || values.size() != n) {
        throw Error(ErrorKind::DegenerateKnots, "need at least two knots with one value each");
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(times[k]) || !std::isfinite(values[k])) {
            throw Error(ErrorKind::DegenerateKnots, "knots must be finite");
        }
        if (k > 0 && !(times[k] > times[k - 1])) {
            throw Error(ErrorKind::DegenerateKnots, "knot times must be strictly increasing");
        }
    }
    std::vector<double> m(n, 0.0);
    if (n > 2) {
        // Tridiagonal system for the interior curvatures (Thomas algorithm).
        const std::size_t k_int = n - 2;
        std::vector<double> diag(k_int), upper(k_int), rhs(k_int);
        for (std::size_t j = 0; j < k_int; ++j) {
            const std::size_t k = j + 1;
            const double h0 = times[k] - times[k - 1];
            const double h1 = times[k + 1] - times[k];
            diag[j] = 2.0 * (h0 + h1);
            upper[j] = h1;
            rhs[j] = 6.0 * ((values[k + 1] - values[k]) / h1 - (values[k] - values[k - 1]) / h0);
        }
        for (std::size_t j = 1; j < k_int; ++j) {
            const double lower = times[j + 1] - times[j];
            const double w = lower / diag[j - 1];
            diag[j] -= w * upper[j - 1];
            rhs[j] -= w * rhs[j - 1];
        }
        m[k_int] = rhs[k_int - 1] / diag[k_int - 1];
        for (std::size_t j = k_int - 1; j-- > 0;) m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    return SplineCurve(std::vector<double>(times.begin(), times.end()),
                       std::vector<double>(values.begin(), values.end()), std::move(m));
}

// ---------------------------------------------------------------------------
// Brute-force minimizer

namespace {

struct Layout {
    std::vector<std::pair<std::size_t, std::size_t>> entries;  // (interval, s * n + t)
    std::vector<std::vector<std::ptrdiff_t>> index;            // per interval, -1 when fixed at zero
};

Layout free_layout(const Problem& p, std::size_t n, const PhaseGrid& g) {
    Layout lay;
    lay.index.assign(p.n_intervals(), std::vector<std::ptrdiff_t>(n * n, -1));
    for (std::size_t i = 0; i < p.n_intervals(); ++i) {
        const auto& left = p.marginals[i];
        const auto& right = p.marginals[i + 1];
        for (std::size_t s = 0; s < n; ++s) {
            if (!(left[g.ix_of(s)] > 0.0)) continue;
            for (std::size_t t = 0; t < n; ++t) {
                if (!(right[g.ix_of(t)] > 0.0)) continue;
                lay.index[i][s * n + t] = static_cast<std::ptrdiff_t>(lay.entries.size());
                lay.entries.emplace_back(i, s * n + t);
            }
        }
    }
    return lay;
}

Eigen::MatrixXd constraint_matrix(const Problem& p, std::size_t n, const PhaseGrid& g, const Layout& lay,
                                  Eigen::VectorXd& rhs) {
    const std::size_t nv = lay.entries.size();
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> values;
    const std::size_t last = p.n_intervals() - 1;

    // Positional masses on the left of every interval and on the right of the last one.
    for (std::size_t node = 0; node <= p.n_intervals(); ++node) {
        const bool left_side = node < p.n_intervals();
        const std::size_t i = left_side ? node : last;
        for (std::size_t ix = 0; ix < g.n_x(); ++ix) {
            if (!(p.marginals[node][ix] > 0.0)) continue;
            Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t b = 0; b < n; ++b) {
                    const std::size_t s = left_side ? a : b;
                    const std::size_t t = left_side ? b : a;
                    const std::size_t own = left_side ? s : t;
                    if (g.ix_of(own) != ix) continue;
                    const auto k = lay.index[i][s * n + t];
                    if (k >= 0) row(k) = 1.0;
                }
            }
            rows.push_back(std::move(row));
            values.push_back(p.marginals[node][ix]);
        }
    }
    // Interior agreement: inflow of pi_{i-1,i} equals outflow of pi_{i,i+1} at every state.
    for (std::size_t node = 1; node < p.n_intervals(); ++node) {
        for (std::size_t u = 0; u < n; ++u) {
            if (!(p.marginals[node][g.ix_of(u)] > 0.0)) continue;
            Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
            for (std::size_t s = 0; s < n; ++s) {
                const auto k = lay.index[node - 1][s * n + u];
                if (k >= 0) row(k) += 1.0;
            }
            for (std::size_t t = 0; t < n; ++t) {
                const auto k = lay.index[node][u * n + t];
                if (k >= 0) row(k) -= 1.0;
            }
            rows.push_back(std::move(row));
            values.push_back(0.0);
        }
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(nv));
    rhs.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        a.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        rhs(static_cast<Eigen::Index>(r)) = values[r];
    }
    return a;
}

}  // namespace

OracleResult brute_force_solve(const Problem& problem, const OracleOptions& options) {
    problem.validate();
    const auto& g = *problem.grid;
    const std::size_t n = g.n_states();
    if (problem.n_intervals() * n * n > options.max_state_pairs) {
        throw Error(ErrorKind::InstanceTooLarge, std::to_string(problem.n_intervals() * n * n) +
                                                     " state pairs exceed the oracle limit of " +
                                                     std::to_string(options.max_state_pairs));
    }
    const auto kernels = build_kernels(problem);
    const Layout lay = free_layout(problem, n, g);
    const auto nv = static_cast<Eigen::Index>(lay.entries.size());

    Eigen::VectorXd rhs_all;
    const Eigen::MatrixXd a_all = constraint_matrix(problem, n, g, lay, rhs_all);

    // Null space of the constraints, orthonormal.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a_all, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 1.0);
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) rank += sv(k) > cutoff ? 1 : 0;
    const Eigen::MatrixXd z = svd.matrixV().rightCols(nv - rank);

    // Linearly independent subset of the constraint rows.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a_all.transpose());
    qr.setThreshold(1e-10);
    const Eigen::Index m = qr.rank();
    Eigen::MatrixXd a(m, nv);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index row = qr.colsPermutation().indices()(r);
        a.row(r) = a_all.row(row);
        rhs(r) = rhs_all(row);
    }

    Eigen::VectorXd log_k(nv);
    for (Eigen::Index k = 0; k < nv; ++k) {
        const auto [i, flat] = lay.entries[static_cast<std::size_t>(k)];
        log_k(k) = kernels[i]->log_weight(flat / n, flat % n);
    }
    double kernel_mass = 0.0;
    for (const auto& k : kernels) kernel_mass += std::exp(k->log_total());

    // Newton's method on the dual: y = K exp(A^T lambda) minimizes the Lagrangian
    // for fixed lambda; the dual function is sum(y) - b^T lambda.
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    const auto primal = [&](const Eigen::VectorXd& l) -> Eigen::VectorXd {
        return (log_k + a.transpose() * l).array().exp();
    };
    const auto dual = [&](const Eigen::VectorXd& l) { return primal(l).sum() - rhs.dot(l); };

    OracleResult out;
    Eigen::VectorXd y = primal(lambda);
    double d = dual(lambda);
    std::size_t it = 0;
    for (;; ++it) {
        const Eigen::VectorXd residual = a * y - rhs;
        out.gradient_norm = residual.norm();
        if (out.gradient_norm < options.gradient_tolerance) break;
        if (it >= options.max_iterations) {
            throw Error(ErrorKind::OracleNotConverged,
                        "constraint residual " + std::to_string(out.gradient_norm) + " after " +
                            std::to_string(it) + " iterations");
        }
        const Eigen::MatrixXd hess = a * y.asDiagonal() * a.transpose();
        const double scale = std::max(hess.diagonal().maxCoeff(), 1e-300);
        bool accepted = false;
        // Levenberg damping, raised until the backtracking search succeeds.
        for (double mu = 1e-12 * scale; !accepted && mu <= 1e8 * scale; mu *= 100.0) {
            Eigen::MatrixXd damped = hess;
            damped.diagonal().array() += mu;
            Eigen::VectorXd step = -damped.ldlt().solve(residual);
            // No entry of y moves by more than a factor exp(30) per step.
            const double reach = (a.transpose() * step).cwiseAbs().maxCoeff();
            if (reach > 30.0) step *= 30.0 / reach;
            const double slope = residual.dot(step);
            if (!step.allFinite() || slope >= 0.0) continue;
            double alpha = 1.0;
            for (int tries = 0; tries < 60; ++tries, alpha *= 0.5) {
                const Eigen::VectorXd trial = lambda + alpha * step;
                const double dt = dual(trial);
                if (!std::isfinite(dt)) continue;
                // A shrinking residual also counts as progress.
                const bool smaller = (a * primal(trial) - rhs).norm() <= (1.0 - 1e-4 * alpha) * out.gradient_norm;
                if (dt <= d + 1e-4 * alpha * slope || smaller) {
                    lambda = trial;
                    d = dt;
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            throw Error(ErrorKind::OracleNotConverged,
                        "line search failed at constraint residual " + std::to_string(out.gradient_norm));
        }
        y = primal(lambda);
    }
    const double f = (y.array() > 0.0).select(y.array() * (y.array().log() - log_k.array()), 0.0).sum() - y.sum() +
                     kernel_mass;

    out.iterations = it;
    out.objective = f;
    out.couplings.assign(problem.n_intervals(), RowMatrix::Zero(static_cast<Eigen::Index>(n),
                                                                  static_cast<Eigen::Index>(n)));
    for (Eigen::Index k = 0; k < nv; ++k) {
        const auto [i, flat] = lay.entries[static_cast<std::size_t>(k)];
        out.couplings[i](static_cast<Eigen::Index>(flat / n), static_cast<Eigen::Index>(flat % n)) = y(k);
    }
    out.tangent_basis = z;
    out.free_entries = lay.entries;
    return out;
}

}  // namespace mmsb
