#include "mmsb/kernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "log_ops.hpp"
#include "mmsb/error.hpp"

namespace mmsb {

namespace {

using Mat2 = Eigen::Matrix2d;

// Covariance of (x, v) after time t for unit noise.
Mat2 unit_covariance(double t) {
    Mat2 m;
    m << t * t * t / 3.0, t * t / 2.0, t * t / 2.0, t;
    return m;
}

Mat2 flow(double t) {
    Mat2 m;
    m << 1.0, t, 0.0, 1.0;
    return m;
}

constexpr char kMagic[8] = {'M', 'M', 'S', 'B', 'K', 'R', 'N', '1'};

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        std::reverse(bytes, bytes + sizeof(T));
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }
}

}  // namespace

CostMode parse_cost_mode(const std::string& text) {
    if (text == "exact") return CostMode::exact;
    if (text == "uniform") return CostMode::uniform;
    throw Error(ErrorKind::InvalidArgument, "unknown cost mode '" + text + "'");
}

std::string to_string(CostMode mode) {
    return mode == CostMode::exact ? "exact" : "uniform";
}

double pair_cost(PhasePoint z0, PhasePoint z1, double h, CostMode mode) {
    if (!(h > 0.0)) throw Error(ErrorKind::NonPositiveDuration, "interval duration must be positive");
    const double w = z1.v - z0.v;
    if (mode == CostMode::exact) {
        const double d = z1.x - z0.x - z0.v * h;
        return 12.0 * d * d / (h * h * h) - 12.0 * d * w / (h * h) + 4.0 * w * w / h;
    }
    const double d = z1.x - z0.x - z0.v;
    return (12.0 * d * d - 12.0 * d * w + 4.0 * w * w) / h;
}

GibbsKernel::GibbsKernel(GridPtr grid, double h, double epsilon, CostMode mode, RowMatrix log_weights)
    : grid_(std::move(grid)), h_(h), eps_(epsilon), mode_(mode), log_weights_(std::move(log_weights)) {
    const auto n = static_cast<Eigen::Index>(grid_->n_states());
    if (log_weights_.rows() != n || log_weights_.cols() != n) {
        throw Error(ErrorKind::InvalidArgument, "kernel shape does not match grid");
    }
    if (!log_weights_.allFinite()) throw Error(ErrorKind::InvalidArgument, "kernel log-weights must be finite");
    log_total_ = detail::log_sum_exp(std::span<const double>(log_weights_.data(), log_weights_.size()));
}

GibbsKernel GibbsKernel::shifted(double shift) const {
    RowMatrix lw = log_weights_.array() + shift;
    return GibbsKernel(grid_, h_, eps_, mode_, std::move(lw));
}

GibbsKernel build_gibbs(GridPtr grid, double h, double epsilon, CostMode mode, std::size_t memory_budget_bytes) {
    if (!(h > 0.0)) throw Error(ErrorKind::NonPositiveDuration, "interval duration must be positive");
    if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be positive");
    const std::size_t n = grid->n_states();
    if (n != 0 && n > memory_budget_bytes / sizeof(double) / n) {
        throw Error(ErrorKind::GridTooLarge, std::to_string(n) + " states need " +
                                                 std::to_string(n * n * sizeof(double)) +
                                                 " bytes, budget is " + std::to_string(memory_budget_bytes));
    }
    RowMatrix lw(n, n);
    const auto& g = *grid;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(n); ++s) {
        const auto z0 = g.point(static_cast<std::size_t>(s));
        for (std::size_t t = 0; t < n; ++t) lw(s, t) = -pair_cost(z0, g.point(t), h, mode) / epsilon;
    }
    return GibbsKernel(std::move(grid), h, epsilon, mode, std::move(lw));
}

std::array<std::array<double, 4>, 2> bridge_mean_operators(double h, double tau) {
    if (!(h > 0.0)) throw Error(ErrorKind::NonPositiveDuration, "interval duration must be positive");
    if (!(tau >= 0.0 && tau <= h)) throw Error(ErrorKind::TauOutOfRange, "tau must lie in [0, h]");
    const Mat2 gain = unit_covariance(tau) * flow(h - tau).transpose() * unit_covariance(h).inverse();
    const Mat2 a = flow(tau) - gain * flow(h);
    return {{{a(0, 0), a(0, 1), a(1, 0), a(1, 1)}, {gain(0, 0), gain(0, 1), gain(1, 0), gain(1, 1)}}};
}

BridgeMoments bridge_moments(PhasePoint z0, PhasePoint z1, double h, double tau, double noise) {
    if (!(h > 0.0)) throw Error(ErrorKind::NonPositiveDuration, "interval duration must be positive");
    if (!(tau >= 0.0 && tau <= h)) throw Error(ErrorKind::TauOutOfRange, "tau must lie in [0, h]");
    const Mat2 st = unit_covariance(tau);
    const Mat2 gain = st * flow(h - tau).transpose() * unit_covariance(h).inverse();
    const Eigen::Vector2d start(z0.x, z0.v);
    const Eigen::Vector2d end(z1.x, z1.v);
    const Eigen::Vector2d mean = flow(tau) * start + gain * (end - flow(h) * start);
    Mat2 cov = noise * (st - gain * flow(h - tau) * st);
    cov = 0.5 * (cov + cov.transpose()).eval();

    BridgeMoments out;
    out.mean = {mean(0), mean(1)};
    out.covariance = {cov(0, 0), cov(0, 1), cov(1, 0), cov(1, 1)};
    return out;
}

void write_kernel_dump(const std::filesystem::path& path, const GibbsKernel& kernel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t n = to_little<std::uint64_t>(kernel.n_states());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    const auto& lw = kernel.log_weights();
    for (Eigen::Index k = 0; k < lw.size(); ++k) {
        const double v = to_little(lw.data()[k]);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

RowMatrix read_kernel_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    char magic[8];
    std::uint64_t n = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorKind::ParseError, path.string() + ": not a kernel dump");
    }
    n = to_little(n);
    RowMatrix lw(n, n);
    for (Eigen::Index k = 0; k < lw.size(); ++k) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        lw.data()[k] = to_little(v);
    }
    if (!in) throw Error(ErrorKind::ParseError, path.string() + ": truncated kernel dump");
    return lw;
}

}  // namespace mmsb
