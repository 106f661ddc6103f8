#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mmsb {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitNotConverged = 2;

struct RunRequest {
    std::string command;  // solve | interpolate | sweep-epsilon | oracle-spline
    std::filesystem::path config;
    bool trace = false;
    std::vector<double> times;
    std::vector<double> values;
    std::optional<std::filesystem::path> out;
    /// oracle-spline: knots CSV (`t,x`) and the number of evenly spaced samples.
    std::filesystem::path knots;
    std::size_t samples = 101;
};

/// Runs one subcommand; diagnostics go to err. Never throws.
int run(const RunRequest& request, std::ostream& log, std::ostream& err);

/// Applies MMSB_THREADS (0 or unset = runtime default) to the worker pool.
void configure_threads();

}  // namespace mmsb
