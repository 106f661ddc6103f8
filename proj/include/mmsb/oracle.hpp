#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmsb/bregman.hpp"
#include "mmsb/kernel.hpp"

namespace mmsb {

/// Piecewise cubic stored by knot values and knot second derivatives.
class SplineCurve {
public:
    SplineCurve(std::vector<double> knots, std::vector<double> values, std::vector<double> second_derivatives);

    std::span<const double> knots() const noexcept { return t_; }
    std::span<const double> values() const noexcept { return y_; }
    std::span<const double> second_derivatives() const noexcept { return m_; }

    /// Evaluates inside the knot range; continues linearly outside it.
    double operator()(double t) const;
    double derivative(double t) const;
    double second_derivative(double t) const;

    /// Integral of the squared second derivative over the knot range.
    double bending_energy() const;

private:
    std::size_t interval(double t) const;

    std::vector<double> t_;
    std::vector<double> y_;
    std::vector<double> m_;
};

/// Natural cubic interpolant: zero second derivative at both ends. Throws DegenerateKnots.
SplineCurve natural_cubic_spline(std::span<const double> times, std::span<const double> values);

struct OracleOptions {
    double gradient_tolerance = 1e-10;
    std::size_t max_iterations = 500;
    std::size_t max_state_pairs = 10000;
};

struct OracleResult {
    /// Linear masses per interval, row-major over (state at t_i, state at t_{i+1}).
    std::vector<RowMatrix> couplings;
    double objective = 0.0;
    /// Norm of the dual gradient, i.e. of the constraint residual.
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    /// Orthonormal basis of the feasible directions on the free coordinates.
    Eigen::MatrixXd tangent_basis;
    /// Free coordinates, as (interval, flat index) pairs matching the tangent basis rows.
    std::vector<std::pair<std::size_t, std::size_t>> free_entries;
};

/**
 * Minimizes sum_i KL(pi_i | K_i) over the constraint polytope by damped
 * Newton iterations on the Lagrange dual, with all constraints assembled into
 * one linear system. Shares no code with the Bregman projections.
 */
OracleResult brute_force_solve(const Problem& problem, const OracleOptions& options = {});

}  // namespace mmsb
