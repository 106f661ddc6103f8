#include "mmsb/phase_grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "csv.hpp"
#include "mmsb/error.hpp"

namespace mmsb {

namespace {

double check_axis(const std::vector<double>& nodes, const char* name) {
    if (nodes.empty()) {
        throw Error(ErrorKind::InvalidArgument, std::string(name) + " axis needs at least one node");
    }
    for (double n : nodes) {
        if (!std::isfinite(n)) throw Error(ErrorKind::InvalidArgument, std::string(name) + " node not finite");
    }
    if (nodes.size() == 1) return 0.0;
    const double spacing = (nodes.back() - nodes.front()) / static_cast<double>(nodes.size() - 1);
    if (!(spacing > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, std::string(name) + " nodes must be strictly increasing");
    }
    for (std::size_t k = 1; k < nodes.size(); ++k) {
        const double step = nodes[k] - nodes[k - 1];
        if (!(step > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, std::string(name) + " nodes must be strictly increasing");
        }
        if (std::abs(step - spacing) > 1e-12 * spacing) {
            throw Error(ErrorKind::InvalidArgument, std::string(name) + " nodes must be uniformly spaced");
        }
    }
    return spacing;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "axis needs at least one node");
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) out[k] = lo + step * static_cast<double>(k);
    out.back() = hi;
    return out;
}

// Makes a range symmetric about zero exactly: nodes[k] == -nodes[n-1-k].
void symmetrize(std::vector<double>& nodes) {
    const std::size_t n = nodes.size();
    if (n < 2 || nodes.front() != -nodes.back()) return;
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double m = 0.5 * (nodes[n - 1 - k] - nodes[k]);
        nodes[k] = -m;
        nodes[n - 1 - k] = m;
    }
    if (n % 2 == 1) nodes[n / 2] = 0.0;
}

std::vector<double> validated_weights(std::vector<double> w, std::size_t expected, const char* what) {
    if (w.size() != expected) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + ": expected " + std::to_string(expected) +
                                                    " weights, got " + std::to_string(w.size()));
    }
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw Error(ErrorKind::InvalidArgument, std::string(what) + ": weights must be finite and nonnegative");
        }
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + ": weights must sum to 1");
    }
    return w;
}

std::vector<double> normalize(std::vector<double> w, const char* what) {
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw Error(ErrorKind::InvalidArgument, std::string(what) + ": weights must be finite and nonnegative");
        }
        total += x;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::InvalidArgument, std::string(what) + ": zero total mass");
    for (double& x : w) x /= total;
    return w;
}

}  // namespace

PhaseGrid::PhaseGrid(std::vector<double> x_nodes, std::vector<double> v_nodes)
    : x_(std::move(x_nodes)), v_(std::move(v_nodes)) {
    dx_ = check_axis(x_, "x");
    dv_ = check_axis(v_, "v");
}

PhaseGrid PhaseGrid::uniform(double x_min, double x_max, std::size_t n_x,
                             double v_min, double v_max, std::size_t n_v) {
    auto xs = linspace(x_min, x_max, n_x);
    auto vs = linspace(v_min, v_max, n_v);
    symmetrize(vs);
    return PhaseGrid(std::move(xs), std::move(vs));
}

double PhaseGrid::cell_area() const noexcept {
    return (dx_ > 0.0 ? dx_ : 1.0) * (dv_ > 0.0 ? dv_ : 1.0);
}

bool PhaseGrid::is_v_symmetric(double tol) const noexcept {
    const std::size_t n = v_.size();
    for (std::size_t k = 0; k < n; ++k) {
        if (std::abs(v_[k] + v_[n - 1 - k]) > tol) return false;
    }
    return true;
}

DiscreteMeasure::DiscreteMeasure(GridPtr grid, std::vector<double> weights)
    : grid_(std::move(grid)) {
    if (!grid_) throw Error(ErrorKind::InvalidArgument, "measure needs a grid");
    weights_ = validated_weights(std::move(weights), grid_->n_states(), "DiscreteMeasure");
}

DiscreteMeasure DiscreteMeasure::normalized(GridPtr grid, std::vector<double> weights) {
    auto w = normalize(std::move(weights), "DiscreteMeasure");
    // Exact unit sums are not guaranteed after division; the constructor tolerance absorbs it.
    return DiscreteMeasure(std::move(grid), std::move(w));
}

PositionalMarginal::PositionalMarginal(std::vector<double> x_nodes, std::vector<double> weights)
    : x_(std::move(x_nodes)) {
    weights_ = validated_weights(std::move(weights), x_.size(), "PositionalMarginal");
}

PositionalMarginal PositionalMarginal::normalized(std::vector<double> x_nodes, std::vector<double> weights) {
    auto w = normalize(std::move(weights), "PositionalMarginal");
    return PositionalMarginal(std::move(x_nodes), std::move(w));
}

bool PositionalMarginal::matches(const PhaseGrid& grid, double tol) const noexcept {
    const auto gx = grid.x_nodes();
    if (gx.size() != x_.size()) return false;
    for (std::size_t k = 0; k < x_.size(); ++k) {
        if (std::abs(gx[k] - x_[k]) > tol * std::max(1.0, std::abs(gx[k]))) return false;
    }
    return true;
}

PositionalMarginal project_x(const DiscreteMeasure& mu) {
    const auto& g = mu.grid();
    std::vector<double> rho(g.n_x(), 0.0);
    for (std::size_t ix = 0; ix < g.n_x(); ++ix) {
        double acc = 0.0;
        for (std::size_t iv = 0; iv < g.n_v(); ++iv) acc += mu[g.state(ix, iv)];
        rho[ix] = acc;
    }
    const auto xs = g.x_nodes();
    return PositionalMarginal(std::vector<double>(xs.begin(), xs.end()), std::move(rho));
}

Moments moments(const DiscreteMeasure& mu) {
    const auto& g = mu.grid();
    Moments m;
    for (std::size_t s = 0; s < g.n_states(); ++s) {
        const auto z = g.point(s);
        m.mean_x += mu[s] * z.x;
        m.mean_v += mu[s] * z.v;
    }
    for (std::size_t s = 0; s < g.n_states(); ++s) {
        const auto z = g.point(s);
        m.var_x += mu[s] * (z.x - m.mean_x) * (z.x - m.mean_x);
        m.var_v += mu[s] * (z.v - m.mean_v) * (z.v - m.mean_v);
    }
    return m;
}

std::pair<double, double> position_moments(const PositionalMarginal& rho) {
    double mean = 0.0;
    for (std::size_t k = 0; k < rho.size(); ++k) mean += rho[k] * rho.x_nodes()[k];
    double var = 0.0;
    for (std::size_t k = 0; k < rho.size(); ++k) {
        const double d = rho.x_nodes()[k] - mean;
        var += rho[k] * d * d;
    }
    return {mean, var};
}

PositionalMarginal marginal_from_samples(std::span<const double> xs, const PhaseGrid& grid) {
    if (xs.empty()) throw Error(ErrorKind::InvalidArgument, "no samples");
    const auto nodes = grid.x_nodes();
    const double half = 0.5 * grid.dx();
    const double lo = nodes.front() - half;
    const double hi = nodes.back() + half;
    std::vector<double> counts(nodes.size(), 0.0);
    for (double x : xs) {
        if (!(x >= lo && x <= hi)) {
            throw Error(ErrorKind::SampleOutOfRange, "sample " + std::to_string(x) + " outside [" +
                                                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        std::size_t k = 0;
        if (grid.dx() > 0.0) {
            const double pos = std::round((x - nodes.front()) / grid.dx());
            k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(nodes.size() - 1)));
        }
        counts[k] += 1.0;
    }
    return PositionalMarginal::normalized(std::vector<double>(nodes.begin(), nodes.end()), std::move(counts));
}

PositionalMarginal gaussian_marginal(const PhaseGrid& grid, double mean, double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");
    const auto nodes = grid.x_nodes();
    std::vector<double> w(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double z = (nodes[k] - mean) / sigma;
        w[k] = std::exp(-0.5 * z * z);
    }
    return PositionalMarginal::normalized(std::vector<double>(nodes.begin(), nodes.end()), std::move(w));
}

PositionalMarginal read_marginal_csv(const std::filesystem::path& path, const PhaseGrid& grid) {
    const auto table = csv::read(path);
    if (table.header.size() != 2 || table.header[0] != "x" || table.header[1] != "weight") {
        throw Error(ErrorKind::ParseError, path.string() + ": expected header 'x,weight'");
    }
    if (table.rows.size() != grid.n_x()) {
        throw Error(ErrorKind::ValidationError, path.string() + ": expected " + std::to_string(grid.n_x()) +
                                                    " rows (one per position node), got " +
                                                    std::to_string(table.rows.size()));
    }
    std::vector<double> xs;
    std::vector<double> ws;
    double total = 0.0;
    for (const auto& row : table.rows) {
        if (!(row[1] >= 0.0) || !std::isfinite(row[1])) {
            throw Error(ErrorKind::ValidationError, path.string() + ": negative or non-finite weight");
        }
        xs.push_back(row[0]);
        ws.push_back(row[1]);
        total += row[1];
    }
    if (std::abs(total - 1.0) >= 1e-6) {
        throw Error(ErrorKind::ValidationError, path.string() + ": weights sum to " + std::to_string(total) +
                                                    ", expected 1");
    }
    auto rho = PositionalMarginal::normalized(std::move(xs), std::move(ws));
    if (!rho.matches(grid)) {
        throw Error(ErrorKind::ValidationError, path.string() + ": x column does not match the grid's position nodes");
    }
    return rho;
}

void write_marginal_csv(const std::filesystem::path& path, const PositionalMarginal& rho) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << std::setprecision(17) << "x,weight\n";
    for (std::size_t k = 0; k < rho.size(); ++k) out << rho.x_nodes()[k] << ',' << rho[k] << '\n';
}

void write_measure_csv(const std::filesystem::path& path, const DiscreteMeasure& mu) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const auto& g = mu.grid();
    out << std::setprecision(17) << "x,v,mass\n";
    for (std::size_t s = 0; s < g.n_states(); ++s) {
        const auto z = g.point(s);
        out << z.x << ',' << z.v << ',' << mu[s] << '\n';
    }
}

}  // namespace mmsb
