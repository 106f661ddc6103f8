#include "log_ops.hpp"

#include <algorithm>
#include <vector>

namespace mmsb::detail {

namespace {

constexpr Eigen::Index kColumnBlock = 256;

// Lower clamp for exp arguments.
constexpr double kExpFloor = -700.0;

}  // namespace

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) return kNegInf;
    const double c = *std::max_element(values.begin(), values.end());
    if (c == kNegInf) return kNegInf;
    const Eigen::Map<const Eigen::ArrayXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
    return c + std::log((v - c).max(kExpFloor).exp().sum());
}

void row_log_sum_exp(const RowMat& m, const Eigen::VectorXd& col_offset, Eigen::VectorXd& out) {
    const Eigen::Index rows = m.rows();
    const bool has_offset = col_offset.size() != 0;
    out.resize(rows);
#pragma omp parallel for schedule(static)
    for (Eigen::Index s = 0; s < rows; ++s) {
        double c = 0.0;
        double total = 0.0;
        if (has_offset) {
            const auto row = m.row(s).array() + col_offset.transpose().array();
            c = row.maxCoeff();
            if (c != kNegInf) total = (row - c).max(kExpFloor).exp().sum();
        } else {
            const auto row = m.row(s).array();
            c = row.maxCoeff();
            if (c != kNegInf) total = (row - c).max(kExpFloor).exp().sum();
        }
        out(s) = (c == kNegInf) ? kNegInf : c + std::log(total);
    }
}

void col_log_sum_exp(const RowMat& m, const Eigen::VectorXd& row_offset, Eigen::VectorXd& out) {
    const Eigen::Index rows = m.rows();
    const Eigen::Index cols = m.cols();
    const bool has_offset = row_offset.size() != 0;
    out.resize(cols);
    const Eigen::Index blocks = (cols + kColumnBlock - 1) / kColumnBlock;
#pragma omp parallel for schedule(static)
    for (Eigen::Index b = 0; b < blocks; ++b) {
        const Eigen::Index c0 = b * kColumnBlock;
        const Eigen::Index width = std::min(kColumnBlock, cols - c0);
        Eigen::ArrayXd peak = Eigen::ArrayXd::Constant(width, kNegInf);
        for (Eigen::Index s = 0; s < rows; ++s) {
            const double off = has_offset ? row_offset(s) : 0.0;
            if (off == kNegInf) continue;
            peak = peak.max(m.row(s).segment(c0, width).transpose().array() + off);
        }
        const Eigen::ArrayXd shift = (peak == kNegInf).select(Eigen::ArrayXd::Zero(width), peak);
        Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(width);
        for (Eigen::Index s = 0; s < rows; ++s) {
            const double off = has_offset ? row_offset(s) : 0.0;
            if (off == kNegInf) continue;
            acc += (m.row(s).segment(c0, width).transpose().array() + (off - shift)).max(kExpFloor).exp();
        }
        for (Eigen::Index k = 0; k < width; ++k) {
            out(c0 + k) = peak(k) == kNegInf ? kNegInf : peak(k) + std::log(acc(k));
        }
    }
}

}  // namespace mmsb::detail
