#include <cmath>
#include <random>

#include "doctest.h"
#include "mmsb/error.hpp"
#include "mmsb/interpolate.hpp"
#include "support.hpp"

using namespace mmsb;
using namespace mmsb::testing;

namespace {

Solution solved(const Problem& p, double tol = 1e-10) {
    auto r = solve(p, {.tolerance = tol, .max_sweeps = 20000});
    REQUIRE(r.report.converged);
    return {p.times, p.epsilon, std::move(r.state)};
}

Problem smooth_problem() {
    const auto g = make_grid(-1.5, 1.5, 13, -3.0, 3.0, 13);
    Problem p{.times = {0.0, 0.6, 1.0}, .epsilon = 0.3, .grid = g};
    p.marginals = {gaussian_marginal(*g, -0.4, 0.35), gaussian_marginal(*g, 0.3, 0.3), gaussian_marginal(*g, 0.0, 0.4)};
    return p;
}

PositionalMarginal delta_at(const PhaseGrid& g, std::size_t ix) {
    std::vector<double> w(g.n_x(), 0.0);
    w[ix] = 1.0;
    return {{g.x_nodes().begin(), g.x_nodes().end()}, w};
}

double hermite_mid_x(PhasePoint z0, PhasePoint z1, double h) {
    return 0.5 * (z0.x + z1.x) + h * (z0.v - z1.v) / 8.0;
}

}  // namespace

TEST_CASE("constraint times return the node marginal unchanged") {
    const auto sol = solved(smooth_problem());
    for (std::size_t i = 0; i < sol.times.size(); ++i) {
        const auto a = marginal_at(sol.times[i], sol);
        const auto b = sol.chain.node_marginal(i);
        for (std::size_t s = 0; s < a.grid().n_states(); ++s) CHECK(a[s] == b[s]);
    }
}

TEST_CASE("interpolated marginals are probability measures") {
    const auto sol = solved(smooth_problem());
    for (double t : {0.05, 0.3, 0.59, 0.61, 0.8, 0.999}) {
        const auto mu = marginal_at(t, sol);
        double total = 0.0;
        for (double w : mu.weights()) {
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(std::abs(total - 1.0) <= 1e-10);
    }
}

TEST_CASE("interpolation is continuous at constraint times") {
    const auto sol = solved(smooth_problem());
    for (std::size_t i = 0; i + 1 < sol.times.size(); ++i) {
        const double h = sol.times[i + 1] - sol.times[i];
        const double delta = 1e-3 * h;
        const auto left = sol.chain.node_marginal(i);
        const auto after = marginal_at(sol.times[i] + delta, sol);
        CHECK(l1(after.weights(), left.weights()) < 0.05);
        const auto right = sol.chain.node_marginal(i + 1);
        const auto before = marginal_at(sol.times[i + 1] - delta, sol);
        CHECK(l1(before.weights(), right.weights()) < 0.05);
    }
}

TEST_CASE("mean path shortcut equals the full mixture moments") {
    const auto sol = solved(smooth_problem());
    const std::vector<double> ts = {0.0, 0.1, 0.35, 0.6, 0.75, 0.95, 1.0};
    const auto path = mean_path(sol, ts);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const auto m = mixture_moments(ts[k], sol);
        CHECK(std::abs(path[k].mean_x - m.mean_x) <= 1e-8);
        CHECK(std::abs(path[k].mean_v - m.mean_v) <= 1e-8);
    }
}

TEST_CASE("grid-evaluated marginals track the mixture moments") {
    const auto sol = solved(smooth_problem());
    for (double t : {0.2, 0.45, 0.8}) {
        const auto mu = moments(marginal_at(t, sol));
        const auto ref = mixture_moments(t, sol);
        CHECK(std::abs(mu.mean_x - ref.mean_x) <= 0.5 * sol.chain.grid().dx());
        CHECK(std::abs(mu.mean_v - ref.mean_v) <= 0.5 * sol.chain.grid().dv());
    }
}

TEST_CASE("mean path at constraint times gives node means") {
    const auto sol = solved(smooth_problem());
    const auto path = mean_path(sol, sol.times);
    for (std::size_t i = 0; i < sol.times.size(); ++i) {
        const auto m = moments(sol.chain.node_marginal(i));
        CHECK(path[i].mean_x == m.mean_x);
        CHECK(path[i].mean_v == m.mean_v);
    }
}

TEST_CASE("delta data at the origin stays near the origin") {
    const auto g = make_grid(-1.0, 1.0, 9, -2.0, 2.0, 9);
    const auto rho = delta_at(*g, 4);
    const auto sol = solved({.times = {0.0, 1.0}, .epsilon = 0.05, .grid = g, .marginals = {rho, rho}});
    const auto mu = marginal_at(0.5, sol);
    const auto m = moments(mu);
    CHECK(std::abs(m.mean_x) <= 1e-10);
    CHECK(std::abs(m.mean_v) <= 1e-10);
    const auto pos = project_x(mu);
    CHECK(pos[3] + pos[4] + pos[5] > 0.9);
}

TEST_CASE("mixture mean between two deltas matches Hermite midpoints") {
    const auto g = make_grid(0.0, 1.0, 5, -2.0, 2.0, 9);
    const double h = 1.0;
    const auto sol = solved({.times = {0.0, h}, .epsilon = 0.2, .grid = g,
                             .marginals = {delta_at(*g, 0), delta_at(*g, 4)}});
    const auto masses = sol.chain.coupling(0).masses();
    double ref = 0.0;
    for (std::size_t s0 = 0; s0 < g->n_states(); ++s0) {
        for (std::size_t s1 = 0; s1 < g->n_states(); ++s1) {
            ref += masses(s0, s1) * hermite_mid_x(g->point(s0), g->point(s1), h);
        }
    }
    ref /= masses.sum();
    CHECK(mixture_moments(0.5, sol).mean_x == doctest::Approx(ref).epsilon(1e-12));
    const auto t = 0.5;
    CHECK(mean_path(sol, std::span<const double>(&t, 1))[0].mean_x == doctest::Approx(ref).epsilon(1e-10));
    CHECK(moments(marginal_at(0.5, sol)).mean_x == doctest::Approx(ref).epsilon(0.05));
}

TEST_CASE("time reversal mirrors the mean path") {
    const auto g = make_grid(-1.5, 1.5, 9, -3.0, 3.0, 10);
    Problem p{.times = {0.0, 0.5, 1.0}, .epsilon = 0.4, .grid = g};
    p.marginals = {gaussian_marginal(*g, -0.5, 0.3), gaussian_marginal(*g, 0.4, 0.3), gaussian_marginal(*g, 0.1, 0.35)};
    Problem q = p;
    std::reverse(q.marginals.begin(), q.marginals.end());
    const auto a = solved(p, 1e-13);
    const auto b = solved(q, 1e-13);
    const std::vector<double> ts = {0.1, 0.3, 0.5, 0.7, 0.85};
    std::vector<double> rs;
    for (double t : ts) rs.push_back(1.0 - t);
    const auto pa = mean_path(a, ts);
    const auto pb = mean_path(b, rs);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        CHECK(std::abs(pa[k].mean_x - pb[k].mean_x) <= 1e-8);
        CHECK(std::abs(pa[k].mean_v + pb[k].mean_v) <= 1e-8);
    }
    const auto ma = marginal_at(0.3, a);
    const auto mb = marginal_at(0.7, b);
    double diff = 0.0;
    for (std::size_t s = 0; s < g->n_states(); ++s) diff += std::abs(ma[s] - mb[g->mirror_state(s)]);
    CHECK(diff <= 1e-8);
}

TEST_CASE("times outside the horizon are rejected") {
    const auto sol = solved(smooth_problem());
    for (double t : {-0.01, 1.01}) {
        try {
            marginal_at(t, sol);
            FAIL("expected TimeOutOfRange");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::TimeOutOfRange);
        }
        CHECK_THROWS_AS(mean_path(sol, std::span<const double>(&t, 1)), Error);
    }
}
