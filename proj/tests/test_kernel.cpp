#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "mmsb/error.hpp"
#include "mmsb/kernel.hpp"
#include "support.hpp"

using namespace mmsb;
using mmsb::testing::make_grid;

namespace {

// Quadratic form of the inverse transition covariance, built from scratch.
double inverse_covariance_cost(PhasePoint z0, PhasePoint z1, double h) {
    Eigen::Matrix2d sigma;
    sigma << h * h * h / 3.0, h * h / 2.0, h * h / 2.0, h;
    const Eigen::Vector2d r(z1.x - z0.x - z0.v * h, z1.v - z0.v);
    return r.dot(sigma.inverse() * r);
}

// Cubic Hermite interpolant of position/velocity data on [0, h].
std::pair<double, double> hermite(PhasePoint z0, PhasePoint z1, double h, double tau) {
    const double s = tau / h;
    const double h00 = 2 * s * s * s - 3 * s * s + 1;
    const double h10 = s * s * s - 2 * s * s + s;
    const double h01 = -2 * s * s * s + 3 * s * s;
    const double h11 = s * s * s - s * s;
    const double d00 = (6 * s * s - 6 * s) / h;
    const double d10 = 3 * s * s - 4 * s + 1;
    const double d01 = (-6 * s * s + 6 * s) / h;
    const double d11 = 3 * s * s - 2 * s;
    return {h00 * z0.x + h10 * h * z0.v + h01 * z1.x + h11 * h * z1.v,
            d00 * z0.x + d10 * z0.v + d01 * z1.x + d11 * z1.v};
}

}  // namespace

TEST_CASE("pair cost examples") {
    for (auto mode : {CostMode::exact, CostMode::uniform}) {
        CHECK(pair_cost({0, 0}, {0, 0}, 1.0, mode) == 0.0);
        CHECK(pair_cost({0, 1}, {1, 1}, 1.0, mode) == 0.0);
        CHECK(pair_cost({0, 0}, {1, 0}, 1.0, mode) == doctest::Approx(12.0).epsilon(1e-15));
    }
    CHECK(pair_cost({0, 0}, {1, 0}, 0.5, CostMode::exact) == doctest::Approx(96.0).epsilon(1e-14));
    CHECK(inverse_covariance_cost({0, 0}, {1, 0}, 0.5) == doctest::Approx(96.0).epsilon(1e-12));
}

TEST_CASE("exact cost equals the inverse covariance quadratic form") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> uh(0.05, 3.0);
    for (int k = 0; k < 1000; ++k) {
        const PhasePoint z0{u(rng), u(rng)};
        const PhasePoint z1{u(rng), u(rng)};
        const double h = uh(rng);
        const double ref = inverse_covariance_cost(z0, z1, h);
        CHECK(pair_cost(z0, z1, h, CostMode::exact) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("cost is time-reversal symmetric and nonnegative in both modes") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_real_distribution<double> uh(0.01, 4.0);
    for (auto mode : {CostMode::exact, CostMode::uniform}) {
        for (int k = 0; k < 1000; ++k) {
            const PhasePoint z0{u(rng), u(rng)};
            const PhasePoint z1{u(rng), u(rng)};
            const double h = uh(rng);
            const double fwd = pair_cost(z0, z1, h, mode);
            const double bwd = pair_cost({z1.x, -z1.v}, {z0.x, -z0.v}, h, mode);
            CHECK(std::abs(fwd - bwd) <= 1e-12 * std::max(1.0, std::abs(fwd)));
            CHECK(fwd >= 0.0);
        }
    }
}

TEST_CASE("cost modes agree at unit duration") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 200; ++k) {
        const PhasePoint z0{u(rng), u(rng)};
        const PhasePoint z1{u(rng), u(rng)};
        const double a = pair_cost(z0, z1, 1.0, CostMode::exact);
        const double b = pair_cost(z0, z1, 1.0, CostMode::uniform);
        CHECK(std::abs(a - b) <= 1e-15 * std::max(1.0, a) * 8);
    }
}

TEST_CASE("cost rejects non-positive duration") {
    CHECK_THROWS_AS(pair_cost({0, 0}, {1, 0}, 0.0, CostMode::exact), Error);
    try {
        pair_cost({0, 0}, {1, 0}, -1.0, CostMode::uniform);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonPositiveDuration);
    }
}

TEST_CASE("cost mode names") {
    CHECK(parse_cost_mode("exact") == CostMode::exact);
    CHECK(parse_cost_mode("uniform") == CostMode::uniform);
    CHECK_THROWS_AS(parse_cost_mode("quadratic"), Error);
}

TEST_CASE("gibbs kernel on a two-point grid") {
    const auto g = make_grid(0.0, 1.0, 2, 0.0, 0.0, 1);
    const auto k = build_gibbs(g, 1.0, 1.0, CostMode::exact);
    CHECK(std::exp(k.log_weight(0, 0)) == 1.0);
    CHECK(std::exp(k.log_weight(1, 1)) == 1.0);
    CHECK(std::exp(k.log_weight(0, 1)) == doctest::Approx(std::exp(-12.0)).epsilon(1e-14));
    CHECK(std::exp(k.log_weight(1, 0)) == doctest::Approx(std::exp(-12.0)).epsilon(1e-14));
    CHECK(k.log_total() == doctest::Approx(std::log(2.0 + 2.0 * std::exp(-12.0))).epsilon(1e-14));
}

TEST_CASE("gibbs kernel entries are finite, zero-velocity diagonal is one") {
    const auto g = make_grid(-1.0, 1.0, 5, -2.0, 2.0, 5);
    const auto k = build_gibbs(g, 0.4, 0.025, CostMode::exact);
    CHECK(k.log_weights().allFinite());
    for (std::size_t ix = 0; ix < g->n_x(); ++ix) {
        const auto s = g->state(ix, 2);
        CHECK(k.log_weight(s, s) == 0.0);
    }
}

TEST_CASE("doubling epsilon halves every log-weight") {
    const auto g = make_grid(-1.0, 1.0, 4, -1.0, 1.0, 3);
    const auto a = build_gibbs(g, 0.7, 0.3, CostMode::exact);
    const auto b = build_gibbs(g, 0.7, 0.6, CostMode::exact);
    CHECK((a.log_weights() * 0.5 - b.log_weights()).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("kernel time-reversal symmetry on a velocity-symmetric grid") {
    const auto g = make_grid(-1.0, 1.0, 4, -1.5, 1.5, 4);
    for (auto mode : {CostMode::exact, CostMode::uniform}) {
        const auto k = build_gibbs(g, 0.6, 0.2, mode);
        double worst = 0.0;
        for (std::size_t s = 0; s < g->n_states(); ++s) {
            for (std::size_t t = 0; t < g->n_states(); ++t) {
                const double a = k.log_weight(s, t);
                const double b = k.log_weight(g->mirror_state(t), g->mirror_state(s));
                worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
            }
        }
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("kernel memory budget") {
    const auto g = make_grid(0.0, 1.0, 10, 0.0, 1.0, 10);
    try {
        build_gibbs(g, 1.0, 1.0, CostMode::exact, 1000);
        FAIL("expected GridTooLarge");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GridTooLarge);
    }
    CHECK_NOTHROW(build_gibbs(g, 1.0, 1.0, CostMode::exact, 100 * 100 * 8));
}

TEST_CASE("shifted kernel") {
    const auto g = make_grid(0.0, 1.0, 3, -1.0, 1.0, 2);
    const auto k = build_gibbs(g, 1.0, 0.5, CostMode::exact);
    const auto s = k.shifted(-3.0);
    CHECK(s.log_weight(1, 4) == doctest::Approx(k.log_weight(1, 4) - 3.0));
    CHECK(s.log_total() == doctest::Approx(k.log_total() - 3.0));
}

TEST_CASE("bridge endpoints are pinned") {
    const PhasePoint z0{0.3, -1.0};
    const PhasePoint z1{1.2, 0.5};
    const auto a = bridge_moments(z0, z1, 0.8, 0.0, 0.1);
    CHECK(a.mean.x == doctest::Approx(z0.x));
    CHECK(a.mean.v == doctest::Approx(z0.v));
    for (double c : a.covariance) CHECK(std::abs(c) <= 1e-14);
    const auto b = bridge_moments(z0, z1, 0.8, 0.8, 0.1);
    CHECK(b.mean.x == doctest::Approx(z1.x));
    CHECK(b.mean.v == doctest::Approx(z1.v));
    for (double c : b.covariance) CHECK(std::abs(c) <= 1e-14);
}

TEST_CASE("bridge midpoint of a unit rest-to-rest move") {
    const auto m = bridge_moments({0, 0}, {1, 0}, 1.0, 0.5, 0.3);
    CHECK(m.mean.x == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(m.mean.v == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("bridge mean is the cubic Hermite interpolant") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> uh(0.1, 2.0);
    for (int k = 0; k < 200; ++k) {
        const PhasePoint z0{u(rng), u(rng)};
        const PhasePoint z1{u(rng), u(rng)};
        const double h = uh(rng);
        for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const auto m = bridge_moments(z0, z1, h, f * h, 0.2);
            const auto [x, v] = hermite(z0, z1, h, f * h);
            CHECK(std::abs(m.mean.x - x) <= 1e-12 * std::max(1.0, std::abs(x)));
            CHECK(std::abs(m.mean.v - v) <= 1e-11 * std::max(1.0, std::abs(v)));
        }
    }
}

TEST_CASE("bridge mean operators reproduce bridge means") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const double h = 0.7;
    const double tau = 0.3;
    const auto [A, B] = bridge_mean_operators(h, tau);
    for (int k = 0; k < 50; ++k) {
        const PhasePoint z0{u(rng), u(rng)};
        const PhasePoint z1{u(rng), u(rng)};
        const auto m = bridge_moments(z0, z1, h, tau, 1.0);
        CHECK(A[0] * z0.x + A[1] * z0.v + B[0] * z1.x + B[1] * z1.v == doctest::Approx(m.mean.x).epsilon(1e-12));
        CHECK(A[2] * z0.x + A[3] * z0.v + B[2] * z1.x + B[3] * z1.v == doctest::Approx(m.mean.v).epsilon(1e-12));
    }
}

TEST_CASE("bridge covariance is symmetric, PSD and linear in noise") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        const double h = 0.05 + 2.0 * u(rng);
        const double tau = h * u(rng);
        const auto a = bridge_moments({0, 0}, {1, 1}, h, tau, 0.1);
        const auto b = bridge_moments({0, 0}, {1, 1}, h, tau, 0.3);
        CHECK(a.covariance[1] == a.covariance[2]);
        Eigen::Matrix2d c;
        c << a.covariance[0], a.covariance[1], a.covariance[2], a.covariance[3];
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(c).eigenvalues().minCoeff() >= -1e-12);
        for (int e = 0; e < 4; ++e) {
            CHECK(b.covariance[e] == doctest::Approx(3.0 * a.covariance[e]).epsilon(1e-10));
        }
    }
}

TEST_CASE("bridge covariance matches a direct Schur complement") {
    const double h = 1.3;
    const double tau = 0.4;
    const double noise = 0.7;
    const auto cov = [](double t) {
        Eigen::Matrix2d m;
        m << t * t * t / 3.0, t * t / 2.0, t * t / 2.0, t;
        return m;
    };
    Eigen::Matrix2d flow;
    flow << 1.0, h - tau, 0.0, 1.0;
    const Eigen::Matrix2d cross = cov(tau) * flow.transpose();
    const Eigen::Matrix2d ref = noise * (cov(tau) - cross * cov(h).inverse() * cross.transpose());
    const auto m = bridge_moments({0.2, 0.1}, {-0.4, 0.9}, h, tau, noise);
    CHECK(m.covariance[0] == doctest::Approx(ref(0, 0)).epsilon(1e-12));
    CHECK(m.covariance[1] == doctest::Approx(ref(0, 1)).epsilon(1e-12));
    CHECK(m.covariance[3] == doctest::Approx(ref(1, 1)).epsilon(1e-12));
}

TEST_CASE("bridge rejects tau outside the interval") {
    try {
        bridge_moments({0, 0}, {1, 0}, 1.0, 1.5, 0.1);
        FAIL("expected TauOutOfRange");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TauOutOfRange);
    }
}

TEST_CASE("kernel dump round trip") {
    const auto g = make_grid(-1.0, 1.0, 3, -1.0, 1.0, 3);
    const auto k = build_gibbs(g, 0.5, 0.2, CostMode::exact);
    const auto path = std::filesystem::temp_directory_path() / "mmsb_kernel_dump.bin";
    write_kernel_dump(path, k);
    CHECK(std::filesystem::file_size(path) == 16 + 81 * 8);
    const auto back = read_kernel_dump(path);
    CHECK(back == k.log_weights());
    std::filesystem::remove(path);
}
