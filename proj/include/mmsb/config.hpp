#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmsb/bregman.hpp"
#include "mmsb/kernel.hpp"
#include "mmsb/phase_grid.hpp"

namespace mmsb {

struct GridBounds {
    double x_min = 0.0;
    double x_max = 0.0;
    std::size_t n_x = 0;
    double v_min = 0.0;
    double v_max = 0.0;
    std::size_t n_v = 0;
};

/**
 * Everything needed to run one experiment, as read from a config file.
 *
 * Config grammar: `[section]` headers and `key = value` lines; `#` or `;`
 * start comments; lists are comma-separated. Sections and keys:
 *
 *   [problem]   times (required), epsilon (required), cost_mode = exact|uniform
 *   [grid]      x_min, x_max, n_x, v_min, v_max, n_v (all required)
 *   [marginals] files (required; one CSV per time, relative to the config file)
 *   [solver]    tolerance = 1e-8, max_sweeps = 5000, representation = scaling|dense,
 *               order = forward|backward|symmetric|random, seed, kernel_memory_mb = 1024
 *   [output]    directory = out, trace = false, dump_kernels = false
 */
struct ProblemSpec {
    std::vector<double> times;
    double epsilon = 0.0;
    GridBounds bounds;
    CostMode cost_mode = CostMode::exact;
    std::vector<std::filesystem::path> marginal_files;
    double tolerance = 1e-8;
    std::size_t max_sweeps = 5000;
    Representation representation = Representation::scaling;
    SweepOrder order = SweepOrder::forward;
    std::uint64_t seed = 0x5eed;
    std::size_t kernel_memory_mb = 1024;
    bool trace = false;
    bool dump_kernels = false;
    std::filesystem::path output_dir = "out";

    // Filled by load_spec.
    GridPtr grid;
    std::vector<PositionalMarginal> marginals;

    Problem problem() const;
    SolverOptions solver_options() const;
};

/// Parses, validates and loads every marginal file. ParseError carries the line number.
ProblemSpec load_spec(const std::filesystem::path& path);
ProblemSpec parse_spec(std::istream& in, const std::filesystem::path& base_dir, const std::string& source_name);

/// Comma-separated list of numbers, e.g. "0, 0.5, 1".
std::vector<double> parse_number_list(const std::string& text, const std::string& what);

}  // namespace mmsb
