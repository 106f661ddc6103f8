#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mmsb/app.hpp"
#include "mmsb/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-marginal Schrodinger bridge solver over (position, velocity) phase space"};
    app.require_subcommand(1);

    mmsb::RunRequest req;
    std::string times;
    std::string values;
    std::string out;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", req.config, "Problem config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory (overrides [output] directory)");
        sub->add_flag("--trace", req.trace, "Write per-sweep diagnostics to trace.csv");
    };

    auto* solve = app.add_subcommand("solve", "Run the Bregman projection solver");
    add_common(solve);

    auto* interp = app.add_subcommand("interpolate", "Solve, then reconstruct marginals at intermediate times");
    add_common(interp);
    interp->add_option("--times", times, "Comma-separated times within [t_0, t_N]")->required();

    auto* sweep = app.add_subcommand("sweep-epsilon", "Solve for several noise levels and compare with the natural spline");
    add_common(sweep);
    sweep->add_option("--values", values, "Comma-separated epsilon values")->required();
    sweep->add_option("--times", times, "Comparison times (default: quarter points of each interval)");

    auto* spline = app.add_subcommand("oracle-spline", "Sample the natural cubic spline through t,x knots");
    spline->add_option("--knots", req.knots, "CSV with header t,x")->required()->check(CLI::ExistingFile);
    spline->add_option("--times", times, "Comma-separated sample times");
    spline->add_option("--samples", req.samples, "Number of evenly spaced samples when --times is absent");
    spline->add_option("--out", out, "Output directory for spline.csv (default: standard output)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!times.empty()) req.times = mmsb::parse_number_list(times, "--times");
        if (!values.empty()) req.values = mmsb::parse_number_list(values, "--values");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mmsb::kExitFailure;
    }
    if (!out.empty()) req.out = out;
    req.command = app.get_subcommands().front()->get_name();
    return mmsb::run(req, std::cout, std::cerr);
}
