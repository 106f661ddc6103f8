#include "mmsb/interpolate.hpp"

#include <algorithm>
#include <cmath>

#include "log_ops.hpp"
#include "mmsb/error.hpp"
#include "mmsb/kernel.hpp"

namespace mmsb {

namespace {

// Pairs lighter than exp(-kPairCutoff) times the heaviest pair are dropped.
constexpr double kPairCutoff = 40.0;
// Bridge Gaussians are evaluated within this many standard deviations per axis.
constexpr double kWindowSigmas = 8.0;

struct Located {
    std::size_t interval = 0;
    double tau = 0.0;
    double h = 0.0;
    bool at_node = false;
    std::size_t node = 0;
};

Located locate(double t, const Solution& sol) {
    const auto& ts = sol.times;
    if (ts.size() != sol.chain.n_nodes()) throw Error(ErrorKind::InvalidArgument, "solution times do not match chain");
    if (!(t >= ts.front() && t <= ts.back())) {
        throw Error(ErrorKind::TimeOutOfRange, "t = " + std::to_string(t) + " outside [" + std::to_string(ts.front()) +
                                                   ", " + std::to_string(ts.back()) + "]");
    }
    Located loc;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (t == ts[i]) {
            loc.at_node = true;
            loc.node = i;
            return loc;
        }
    }
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    loc.interval = static_cast<std::size_t>(it - ts.begin()) - 1;
    loc.tau = t - ts[loc.interval];
    loc.h = ts[loc.interval + 1] - ts[loc.interval];
    return loc;
}

PhasePoint apply(const std::array<double, 4>& m, PhasePoint z) {
    return {m[0] * z.x + m[1] * z.v, m[2] * z.x + m[3] * z.v};
}

PhasePoint endpoint_mean(const Eigen::VectorXd& log_marginal, const PhaseGrid& g) {
    PhasePoint acc;
    double mass = 0.0;
    for (std::size_t s = 0; s < g.n_states(); ++s) {
        const double w = std::exp(log_marginal(static_cast<Eigen::Index>(s)));
        const auto z = g.point(s);
        acc.x += w * z.x;
        acc.v += w * z.v;
        mass += w;
    }
    return {acc.x / mass, acc.v / mass};
}

std::size_t nearest_node(double value, double first, double spacing, std::size_t count) {
    if (count == 1 || spacing <= 0.0) return 0;
    const double pos = std::round((value - first) / spacing);
    return static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(count - 1)));
}

std::size_t window_radius(double sigma, double spacing, std::size_t count) {
    if (count == 1 || spacing <= 0.0) return 0;
    const double r = std::ceil(kWindowSigmas * sigma / spacing) + 1.0;
    return static_cast<std::size_t>(std::min(r, static_cast<double>(count)));
}

}  // namespace

DiscreteMeasure marginal_at(double t, const Solution& sol) {
    const auto loc = locate(t, sol);
    if (loc.at_node) return sol.chain.node_marginal(loc.node);

    const auto& pi = sol.chain.coupling(loc.interval);
    const auto& g = sol.chain.grid();
    const auto ops = bridge_mean_operators(loc.h, loc.tau);
    auto cov = bridge_moments({}, {}, loc.h, loc.tau, bridge_noise(sol.epsilon)).covariance;
    cov[0] += g.dx() * g.dx() / 12.0;
    cov[3] += g.dv() * g.dv() / 12.0;
    const double det = cov[0] * cov[3] - cov[1] * cov[2];
    if (!(det > 0.0)) throw Error(ErrorKind::InvalidArgument, "degenerate bridge covariance");
    const double p_xx = cov[3] / det;
    const double p_xv = -cov[1] / det;
    const double p_vv = cov[0] / det;

    const auto xs = g.x_nodes();
    const auto vs = g.v_nodes();
    const std::size_t rx = window_radius(std::sqrt(cov[0]), g.dx(), g.n_x());
    const std::size_t rv = window_radius(std::sqrt(cov[3]), g.dv(), g.n_v());

    const RowMatrix log_pi = pi.log_masses();
    const double peak = log_pi.maxCoeff();
    const double floor = peak - kPairCutoff;
    const std::size_t n = g.n_states();

    std::vector<double> out(n, 0.0);
    std::vector<double> local;
    for (std::size_t s0 = 0; s0 < n; ++s0) {
        const auto z0 = g.point(s0);
        const auto a0 = apply(ops[0], z0);
        for (std::size_t s1 = 0; s1 < n; ++s1) {
            const double lp = log_pi(s0, s1);
            if (lp < floor) continue;
            const auto b1 = apply(ops[1], g.point(s1));
            const PhasePoint m{a0.x + b1.x, a0.v + b1.v};

            const std::size_t cx = nearest_node(m.x, xs.front(), g.dx(), g.n_x());
            const std::size_t cv = nearest_node(m.v, vs.front(), g.dv(), g.n_v());
            const std::size_t ix0 = cx > rx ? cx - rx : 0;
            const std::size_t ix1 = std::min(g.n_x() - 1, cx + rx);
            const std::size_t iv0 = cv > rv ? cv - rv : 0;
            const std::size_t iv1 = std::min(g.n_v() - 1, cv + rv);

            local.clear();
            double top = detail::kNegInf;
            for (std::size_t ix = ix0; ix <= ix1; ++ix) {
                const double dxm = xs[ix] - m.x;
                for (std::size_t iv = iv0; iv <= iv1; ++iv) {
                    const double dvm = vs[iv] - m.v;
                    const double q = -0.5 * (p_xx * dxm * dxm + 2.0 * p_xv * dxm * dvm + p_vv * dvm * dvm);
                    local.push_back(q);
                    top = std::max(top, q);
                }
            }
            double norm = 0.0;
            for (double& q : local) {
                q = std::exp(q - top);
                norm += q;
            }
            const double mass = std::exp(lp) / norm;
            std::size_t k = 0;
            for (std::size_t ix = ix0; ix <= ix1; ++ix) {
                for (std::size_t iv = iv0; iv <= iv1; ++iv) out[g.state(ix, iv)] += mass * local[k++];
            }
        }
    }
    return DiscreteMeasure::normalized(pi.kernel().grid_ptr(), std::move(out));
}

std::vector<MeanPoint> mean_path(const Solution& sol, std::span<const double> times) {
    std::vector<MeanPoint> out;
    out.reserve(times.size());
    const auto& g = sol.chain.grid();
    for (double t : times) {
        const auto loc = locate(t, sol);
        if (loc.at_node) {
            const auto m = moments(sol.chain.node_marginal(loc.node));
            out.push_back({t, m.mean_x, m.mean_v});
            continue;
        }
        const auto ops = bridge_mean_operators(loc.h, loc.tau);
        const auto e0 = apply(ops[0], endpoint_mean(sol.chain.log_left_marginal(loc.interval), g));
        const auto e1 = apply(ops[1], endpoint_mean(sol.chain.log_right_marginal(loc.interval), g));
        out.push_back({t, e0.x + e1.x, e0.v + e1.v});
    }
    return out;
}

Moments mixture_moments(double t, const Solution& sol) {
    const auto loc = locate(t, sol);
    if (loc.at_node) return moments(sol.chain.node_marginal(loc.node));

    const auto& pi = sol.chain.coupling(loc.interval);
    const auto& g = sol.chain.grid();
    const double noise = bridge_noise(sol.epsilon);
    const std::size_t n = g.n_states();

    // Per-row partials, combined in row order.
    std::vector<std::array<double, 5>> rows(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
        const auto s0 = static_cast<std::size_t>(r);
        std::array<double, 5> acc{};
        const auto z0 = g.point(s0);
        for (std::size_t s1 = 0; s1 < n; ++s1) {
            const double w = std::exp(pi.log_mass(s0, s1));
            if (w == 0.0) continue;
            const auto b = bridge_moments(z0, g.point(s1), loc.h, loc.tau, noise);
            acc[0] += w;
            acc[1] += w * b.mean.x;
            acc[2] += w * b.mean.v;
            acc[3] += w * (b.covariance[0] + b.mean.x * b.mean.x);
            acc[4] += w * (b.covariance[3] + b.mean.v * b.mean.v);
        }
        rows[s0] = acc;
    }
    std::array<double, 5> total{};
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < 5; ++k) total[k] += r[k];
    }
    Moments m;
    m.mean_x = total[1] / total[0];
    m.mean_v = total[2] / total[0];
    m.var_x = total[3] / total[0] - m.mean_x * m.mean_x;
    m.var_v = total[4] / total[0] - m.mean_v * m.mean_v;
    return m;
}

}  // namespace mmsb
