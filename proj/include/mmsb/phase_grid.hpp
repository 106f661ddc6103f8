#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace mmsb {

/// A point (x, v) of phase space.
struct PhasePoint {
    double x = 0.0;
    double v = 0.0;
};

/**
 * PhaseGrid: uniform tensor-product grid over (position, velocity).
 *
 * States are indexed row-major by position: s = ix * n_v + iv. The index
 * convention is shared by every kernel, coupling and measure in the library.
 */
class PhaseGrid {
public:
    /// Builds from explicit node lists; rejects unsorted or non-uniform nodes.
    PhaseGrid(std::vector<double> x_nodes, std::vector<double> v_nodes);

    static PhaseGrid uniform(double x_min, double x_max, std::size_t n_x,
                             double v_min, double v_max, std::size_t n_v);

    std::size_t n_x() const noexcept { return x_.size(); }
    std::size_t n_v() const noexcept { return v_.size(); }
    std::size_t n_states() const noexcept { return x_.size() * v_.size(); }

    std::span<const double> x_nodes() const noexcept { return x_; }
    std::span<const double> v_nodes() const noexcept { return v_; }

    /// Node spacing; zero for a single-node axis.
    double dx() const noexcept { return dx_; }
    double dv() const noexcept { return dv_; }
    /// Area attributed to one node when converting mass to density (1 on degenerate axes).
    double cell_area() const noexcept;

    std::size_t state(std::size_t ix, std::size_t iv) const noexcept { return ix * v_.size() + iv; }
    std::size_t ix_of(std::size_t s) const noexcept { return s / v_.size(); }
    std::size_t iv_of(std::size_t s) const noexcept { return s % v_.size(); }
    PhasePoint point(std::size_t s) const noexcept { return {x_[ix_of(s)], v_[iv_of(s)]}; }

    /// True when v_nodes[k] == -v_nodes[n_v-1-k] within tol.
    bool is_v_symmetric(double tol = 1e-12) const noexcept;
    /// The state with velocity negated; requires is_v_symmetric().
    std::size_t mirror_state(std::size_t s) const noexcept {
        return state(ix_of(s), v_.size() - 1 - iv_of(s));
    }

    bool operator==(const PhaseGrid& other) const noexcept = default;

private:
    std::vector<double> x_;
    std::vector<double> v_;
    double dx_ = 0.0;
    double dv_ = 0.0;
};

using GridPtr = std::shared_ptr<const PhaseGrid>;

/// Probability masses at phase-grid nodes (not density values).
class DiscreteMeasure {
public:
    /// Validates nonnegativity and unit mass (within 1e-12).
    DiscreteMeasure(GridPtr grid, std::vector<double> weights);

    /// Rescales nonnegative weights of positive total to unit mass.
    static DiscreteMeasure normalized(GridPtr grid, std::vector<double> weights);

    const PhaseGrid& grid() const noexcept { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    std::span<const double> weights() const noexcept { return weights_; }
    double operator[](std::size_t s) const noexcept { return weights_[s]; }

private:
    GridPtr grid_;
    std::vector<double> weights_;
};

/// Probability masses over the position nodes only.
class PositionalMarginal {
public:
    PositionalMarginal(std::vector<double> x_nodes, std::vector<double> weights);

    static PositionalMarginal normalized(std::vector<double> x_nodes, std::vector<double> weights);

    std::span<const double> x_nodes() const noexcept { return x_; }
    std::span<const double> weights() const noexcept { return weights_; }
    double operator[](std::size_t ix) const noexcept { return weights_[ix]; }
    std::size_t size() const noexcept { return weights_.size(); }

    /// True when the node positions coincide with the grid's x nodes within tol·max(1,|x|).
    bool matches(const PhaseGrid& grid, double tol = 1e-9) const noexcept;

private:
    std::vector<double> x_;
    std::vector<double> weights_;
};

struct Moments {
    double mean_x = 0.0;
    double mean_v = 0.0;
    double var_x = 0.0;
    double var_v = 0.0;
};

PositionalMarginal project_x(const DiscreteMeasure& mu);

Moments moments(const DiscreteMeasure& mu);

/// Weighted mean and variance of a positional marginal.
std::pair<double, double> position_moments(const PositionalMarginal& rho);

/// Nearest-node histogram of samples; throws SampleOutOfRange beyond the outer half-cells.
PositionalMarginal marginal_from_samples(std::span<const double> xs, const PhaseGrid& grid);

/// Gaussian N(mean, sigma^2) sampled at the grid's position nodes and normalized.
PositionalMarginal gaussian_marginal(const PhaseGrid& grid, double mean, double sigma);

// Marginal CSV files: header `x,weight`, one row per position node.
PositionalMarginal read_marginal_csv(const std::filesystem::path& path, const PhaseGrid& grid);
void write_marginal_csv(const std::filesystem::path& path, const PositionalMarginal& rho);

/// Writes `x,v,mass` rows in state order.
void write_measure_csv(const std::filesystem::path& path, const DiscreteMeasure& mu);

}  // namespace mmsb
