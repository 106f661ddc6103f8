#pragma once

// Stabilized log-domain reductions over row-major tables. Entries and offsets
// may be -inf (zero mass); no entry may be +inf or NaN.

#include <cmath>
#include <limits>
#include <span>

#include <Eigen/Dense>

namespace mmsb::detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double log_sum_exp(std::span<const double> values);

/// out[s] = log sum_t exp(m(s,t) + col_offset[t]); col_offset may be empty (zeros).
void row_log_sum_exp(const RowMat& m, const Eigen::VectorXd& col_offset, Eigen::VectorXd& out);

/// out[t] = log sum_s exp(m(s,t) + row_offset[s]); row_offset may be empty (zeros).
void col_log_sum_exp(const RowMat& m, const Eigen::VectorXd& row_offset, Eigen::VectorXd& out);

/// Elementwise exp with exp(-inf) = 0 exactly.
template <typename Derived>
auto exp_masses(const Eigen::ArrayBase<Derived>& log_values) {
    return (log_values == kNegInf).select(0.0, log_values.exp());
}

/// Ratio of masses in log space with 0/0 := 0.
inline double log_ratio(double log_num, double log_den) {
    if (log_num == kNegInf) return kNegInf;
    return log_num - log_den;
}

}  // namespace mmsb::detail
