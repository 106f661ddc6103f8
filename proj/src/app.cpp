#include "mmsb/app.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include "csv.hpp"
#include "mmsb/bregman.hpp"
#include "mmsb/config.hpp"
#include "mmsb/error.hpp"
#include "mmsb/interpolate.hpp"
#include "mmsb/oracle.hpp"

namespace mmsb {

namespace fs = std::filesystem;

namespace {

// Exclusive claim on an output directory for the lifetime of a run.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".mmsb.lock") {
        fs::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) throw Error(ErrorKind::Io, "output directory in use (lock file " + path_.string() + " exists)");
        ::close(fd);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

struct Run {
    ProblemSpec spec;
    SolveResult result;
};

Run solve_spec(ProblemSpec spec, const fs::path& out_dir, bool trace, bool write_outputs, std::ostream& log) {
    const auto problem = spec.problem();
    auto options = spec.solver_options();
    const auto kernels = build_kernels(problem, 0.0, options.kernel_memory_budget);

    std::ofstream trace_out;
    if (trace) {
        trace_out = open_out(out_dir / "trace.csv");
        trace_out << "sweep,violation,objective,seconds\n";
        options.on_sweep = [&trace_out](const SweepRecord& r) {
            trace_out << r.sweep << ',' << r.violation << ',' << r.objective << ',' << r.seconds << '\n';
        };
    }
    if (write_outputs && spec.dump_kernels) {
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            write_kernel_dump(out_dir / ("kernel_" + std::to_string(i) + ".bin"), *kernels[i]);
        }
    }

    auto result = solve(problem, kernels, options);
    const auto& rep = result.report;
    log << "solve: eps=" << spec.epsilon << " sweeps=" << rep.sweeps << " violation=" << rep.final_violation
        << (rep.converged ? " converged" : " NOT converged") << " (" << rep.wall_seconds << " s)\n";

    if (write_outputs) {
        nlohmann::json nodes = nlohmann::json::array();
        for (std::size_t i = 0; i < result.state.n_nodes(); ++i) {
            const auto mu = result.state.node_marginal(i);
            const auto rho = project_x(mu);
            write_measure_csv(out_dir / ("mu_" + std::to_string(i) + ".csv"), mu);
            write_marginal_csv(out_dir / ("rho_" + std::to_string(i) + ".csv"), rho);
            double l1 = 0.0;
            for (std::size_t k = 0; k < rho.size(); ++k) l1 += std::abs(rho[k] - spec.marginals[i][k]);
            const auto m = moments(mu);
            nodes.push_back({{"t", spec.times[i]},
                             {"positional_l1_error", l1},
                             {"mean_x", m.mean_x},
                             {"mean_v", m.mean_v},
                             {"var_x", m.var_x},
                             {"var_v", m.var_v}});
        }
        const nlohmann::json summary = {
            {"converged", rep.converged},
            {"partial", !rep.converged},
            {"sweeps", rep.sweeps},
            {"initial_violation", rep.initial_violation},
            {"final_violation", rep.final_violation},
            {"tolerance", spec.tolerance},
            {"objective", objective(result.state)},
            {"initial_objective", rep.initial_objective},
            {"epsilon", spec.epsilon},
            {"times", spec.times},
            {"cost_mode", to_string(spec.cost_mode)},
            {"representation", to_string(spec.representation)},
            {"wall_seconds", rep.wall_seconds},
            {"nodes", nodes},
        };
        open_out(out_dir / "report.json") << summary.dump(2) << '\n';
    }
    return {std::move(spec), std::move(result)};
}

fs::path output_dir(const RunRequest& req, const ProblemSpec& spec) {
    return req.out ? *req.out : spec.output_dir;
}

int cmd_solve(const RunRequest& req, std::ostream& log) {
    auto spec = load_spec(req.config);
    const auto dir = output_dir(req, spec);
    OutputLock lock(dir);
    const bool trace = req.trace || spec.trace;
    const auto run = solve_spec(std::move(spec), dir, trace, true, log);
    return run.result.report.converged ? kExitOk : kExitNotConverged;
}

int cmd_interpolate(const RunRequest& req, std::ostream& log) {
    if (req.times.empty()) throw Error(ErrorKind::InvalidArgument, "interpolate needs --times");
    auto spec = load_spec(req.config);
    const auto dir = output_dir(req, spec);
    OutputLock lock(dir);
    const bool trace = req.trace || spec.trace;
    auto run = solve_spec(std::move(spec), dir, trace, true, log);
    const bool converged = run.result.report.converged;
    const Solution sol{run.spec.times, run.spec.epsilon, std::move(run.result.state)};

    auto marg = open_out(dir / "interpolated.csv");
    marg << "t,x,v,mass\n";
    for (double t : req.times) {
        const auto mu = marginal_at(t, sol);
        const auto& g = mu.grid();
        for (std::size_t s = 0; s < g.n_states(); ++s) {
            const auto z = g.point(s);
            marg << t << ',' << z.x << ',' << z.v << ',' << mu[s] << '\n';
        }
    }
    auto path = open_out(dir / "mean_path.csv");
    path << "t,mean_x,mean_v\n";
    for (const auto& p : mean_path(sol, req.times)) path << p.t << ',' << p.mean_x << ',' << p.mean_v << '\n';
    return converged ? kExitOk : kExitNotConverged;
}

std::vector<double> default_sample_times(const std::vector<double>& knots) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double h = knots[i + 1] - knots[i];
        for (double f : {0.25, 0.5, 0.75}) out.push_back(knots[i] + f * h);
    }
    return out;
}

int cmd_sweep_epsilon(const RunRequest& req, std::ostream& log) {
    if (req.values.empty()) throw Error(ErrorKind::InvalidArgument, "sweep-epsilon needs --values");
    const auto base = load_spec(req.config);
    const auto dir = output_dir(req, base);
    OutputLock lock(dir);

    std::vector<double> knot_means;
    for (const auto& rho : base.marginals) knot_means.push_back(position_moments(rho).first);
    const auto spline = natural_cubic_spline(base.times, knot_means);
    const auto times = req.times.empty() ? default_sample_times(base.times) : req.times;

    auto table = open_out(dir / "sweep_epsilon.csv");
    table << "epsilon,t,mean_x,spline_x,abs_error\n";
    auto summary = open_out(dir / "sweep_epsilon_summary.csv");
    summary << "epsilon,sweeps,converged,final_violation,max_abs_error\n";

    bool all_converged = true;
    for (double eps : req.values) {
        if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon values must be positive");
        auto spec = base;
        spec.epsilon = eps;
        auto run = solve_spec(std::move(spec), dir, false, false, log);
        all_converged = all_converged && run.result.report.converged;
        const Solution sol{run.spec.times, eps, std::move(run.result.state)};
        double worst = 0.0;
        for (const auto& p : mean_path(sol, times)) {
            const double ref = spline(p.t);
            const double err = std::abs(p.mean_x - ref);
            worst = std::max(worst, err);
            table << eps << ',' << p.t << ',' << p.mean_x << ',' << ref << ',' << err << '\n';
        }
        summary << eps << ',' << run.result.report.sweeps << ',' << (run.result.report.converged ? 1 : 0) << ','
                << run.result.report.final_violation << ',' << worst << '\n';
        log << "  eps=" << eps << " max |mean_x - spline| = " << worst << '\n';
    }
    return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_oracle_spline(const RunRequest& req, std::ostream& log) {
    const auto table = csv::read(req.knots);
    if (table.header.size() != 2 || table.header[0] != "t" || table.header[1] != "x") {
        throw Error(ErrorKind::ParseError, req.knots.string() + ": expected header 't,x'");
    }
    std::vector<double> ts;
    std::vector<double> xs;
    for (const auto& row : table.rows) {
        ts.push_back(row[0]);
        xs.push_back(row[1]);
    }
    const auto spline = natural_cubic_spline(ts, xs);
    std::vector<double> samples = req.times;
    if (samples.empty()) {
        const std::size_t n = std::max<std::size_t>(req.samples, 2);
        for (std::size_t k = 0; k < n; ++k) {
            samples.push_back(ts.front() + (ts.back() - ts.front()) * static_cast<double>(k) / static_cast<double>(n - 1));
        }
    }
    const auto emit = [&](std::ostream& out) {
        out << std::setprecision(17) << "t,S\n";
        for (double t : samples) out << t << ',' << spline(t) << '\n';
    };
    if (req.out) {
        fs::create_directories(*req.out);
        auto out = open_out(*req.out / "spline.csv");
        emit(out);
    } else {
        emit(log);
    }
    return kExitOk;
}

}  // namespace

void configure_threads() {
#ifdef _OPENMP
    if (const char* env = std::getenv("MMSB_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && n > 0) omp_set_num_threads(static_cast<int>(n));
    }
#endif
}

int run(const RunRequest& req, std::ostream& log, std::ostream& err) {
    try {
        configure_threads();
        if (req.command == "solve") return cmd_solve(req, log);
        if (req.command == "interpolate") return cmd_interpolate(req, log);
        if (req.command == "sweep-epsilon") return cmd_sweep_epsilon(req, log);
        if (req.command == "oracle-spline") return cmd_oracle_spline(req, log);
        err << "error: unknown command '" << req.command << "'\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace mmsb
