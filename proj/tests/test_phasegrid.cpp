#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mmsb/error.hpp"
#include "mmsb/phase_grid.hpp"
#include "support.hpp"

using namespace mmsb;
using mmsb::testing::make_grid;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
    const auto dir = std::filesystem::temp_directory_path() / "mmsb_test_phasegrid";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path) << body;
    return path;
}

ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
}

}  // namespace

TEST_CASE("grid indexing is row-major by position") {
    const auto g = make_grid(0.0, 1.0, 2, -1.0, 1.0, 3);
    CHECK(g->n_states() == 6);
    CHECK(g->state(1, 2) == 5);
    CHECK(g->ix_of(4) == 1);
    CHECK(g->iv_of(4) == 1);
    CHECK(g->point(3).x == 1.0);
    CHECK(g->point(3).v == -1.0);
    CHECK(g->dx() == doctest::Approx(1.0));
    CHECK(g->dv() == doctest::Approx(1.0));
    CHECK(g->is_v_symmetric());
    CHECK(g->mirror_state(g->state(1, 0)) == g->state(1, 2));
}

TEST_CASE("single velocity node is allowed") {
    const auto g = make_grid(0.0, 1.0, 3, 0.0, 0.0, 1);
    CHECK(g->n_v() == 1);
    CHECK(g->dv() == 0.0);
    CHECK(g->is_v_symmetric());
}

TEST_CASE("non-uniform or unsorted nodes are rejected") {
    CHECK(kind_of([] { PhaseGrid({0.0, 1.0, 3.0}, {0.0}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { PhaseGrid({1.0, 0.0}, {0.0}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { PhaseGrid({}, {0.0}); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("project_x sums velocities per position") {
    const auto g = make_grid(0.0, 1.0, 2, -1.0, 1.0, 2);
    const DiscreteMeasure mu(g, {0.1, 0.2, 0.3, 0.4});
    const auto rho = project_x(mu);
    REQUIRE(rho.size() == 2);
    CHECK(rho[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(rho[1] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("moments of a two-point measure") {
    const auto g = make_grid(0.0, 2.0, 2, 0.0, 0.0, 1);
    const DiscreteMeasure mu(g, {0.25, 0.75});
    const auto m = moments(mu);
    CHECK(m.mean_x == doctest::Approx(1.5));
    CHECK(m.var_x == doctest::Approx(0.75));
    CHECK(m.mean_v == 0.0);
    CHECK(m.var_v == 0.0);
}

TEST_CASE("measures must be nonnegative with unit mass") {
    const auto g = make_grid(0.0, 1.0, 2, 0.0, 0.0, 1);
    CHECK(kind_of([&] { DiscreteMeasure(g, {0.5, 0.6}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { DiscreteMeasure(g, {1.5, -0.5}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { DiscreteMeasure(g, {1.0}); }) == ErrorKind::InvalidArgument);
    const auto n = DiscreteMeasure::normalized(g, {1.0, 3.0});
    CHECK(n[1] == doctest::Approx(0.75));
}

TEST_CASE("project_x properties on random measures") {
    std::mt19937_64 rng(11);
    const auto g = make_grid(-1.0, 1.0, 5, -2.0, 2.0, 4);
    for (int trial = 0; trial < 50; ++trial) {
        const DiscreteMeasure a(g, mmsb::testing::random_simplex(rng, g->n_states(), 0.0));
        const DiscreteMeasure b(g, mmsb::testing::random_simplex(rng, g->n_states(), 0.0));
        const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

        const auto ra = project_x(a);
        const auto rb = project_x(b);
        double total = 0.0;
        for (double w : ra.weights()) total += w;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

        std::vector<double> mix(g->n_states());
        for (std::size_t s = 0; s < mix.size(); ++s) mix[s] = alpha * a[s] + (1.0 - alpha) * b[s];
        const auto rmix = project_x(DiscreteMeasure::normalized(g, mix));
        for (std::size_t ix = 0; ix < g->n_x(); ++ix) {
            CHECK(rmix[ix] == doctest::Approx(alpha * ra[ix] + (1.0 - alpha) * rb[ix]).epsilon(1e-12));
        }

        const auto m = moments(a);
        const auto [mean, var] = position_moments(ra);
        CHECK(mean == doctest::Approx(m.mean_x).epsilon(1e-12));
        CHECK(var == doctest::Approx(m.var_x).epsilon(1e-12));
    }
}

TEST_CASE("marginal_from_samples") {
    const auto g = make_grid(0.0, 3.0, 4, 0.0, 0.0, 1);
    SUBCASE("all samples at the first node") {
        const std::vector<double> xs(10, 0.0);
        const auto rho = marginal_from_samples(xs, *g);
        CHECK(rho[0] == 1.0);
        CHECK(rho[1] == 0.0);
    }
    SUBCASE("even split between two nodes") {
        const std::vector<double> xs = {0.0, 0.1, 1.0, 0.9};
        const auto rho = marginal_from_samples(xs, *g);
        CHECK(rho[0] == doctest::Approx(0.5));
        CHECK(rho[1] == doctest::Approx(0.5));
        CHECK(rho[2] == 0.0);
        CHECK(rho[3] == 0.0);
    }
    SUBCASE("beyond the outer half cell") {
        const std::vector<double> inside = {-0.49, 3.49};
        CHECK_NOTHROW(marginal_from_samples(inside, *g));
        const std::vector<double> outside = {3.51};
        CHECK(kind_of([&] { marginal_from_samples(outside, *g); }) == ErrorKind::SampleOutOfRange);
    }
}

TEST_CASE("standard normal samples give a centred histogram") {
    const auto g = make_grid(-4.0, 4.0, 33, 0.0, 0.0, 1);
    std::mt19937_64 rng(20240607);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> xs;
    while (xs.size() < 1000) {
        const double x = normal(rng);
        if (std::abs(x) < 4.1) xs.push_back(x);
    }
    const auto rho = marginal_from_samples(xs, *g);
    CHECK(std::abs(position_moments(rho).first) < 0.15);
}

TEST_CASE("gaussian marginal matches its parameters on a fine grid") {
    const auto g = make_grid(-5.0, 5.0, 201, 0.0, 0.0, 1);
    const auto rho = gaussian_marginal(*g, 0.7, 0.5);
    const auto [mean, var] = position_moments(rho);
    CHECK(mean == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(var == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("marginal csv loading") {
    const auto g = make_grid(0.0, 1.0, 2, -1.0, 1.0, 3);
    SUBCASE("near-normalized weights are rescaled") {
        const auto p = temp_file("near.csv", "x,weight\n0,0.2500001\n1,0.75\n");
        const auto rho = read_marginal_csv(p, *g);
        CHECK(rho[0] + rho[1] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("badly normalized weights are rejected") {
        const auto p = temp_file("bad.csv", "x,weight\n0,0.3\n1,0.75\n");
        CHECK(kind_of([&] { read_marginal_csv(p, *g); }) == ErrorKind::ValidationError);
    }
    SUBCASE("x column must match the grid") {
        const auto p = temp_file("shifted.csv", "x,weight\n0,0.5\n2,0.5\n");
        CHECK(kind_of([&] { read_marginal_csv(p, *g); }) == ErrorKind::ValidationError);
    }
    SUBCASE("wrong header") {
        const auto p = temp_file("header.csv", "pos,w\n0,0.5\n1,0.5\n");
        CHECK(kind_of([&] { read_marginal_csv(p, *g); }) == ErrorKind::ParseError);
    }
    SUBCASE("write then read") {
        const auto rho = PositionalMarginal::normalized({0.0, 1.0}, {1.0, 2.0});
        const auto p = std::filesystem::temp_directory_path() / "mmsb_test_phasegrid" / "rt.csv";
        write_marginal_csv(p, rho);
        const auto back = read_marginal_csv(p, *g);
        CHECK(back[0] == rho[0]);
        CHECK(back[1] == rho[1]);
    }
}
