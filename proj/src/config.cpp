#include "mmsb/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include "csv.hpp"
#include "mmsb/error.hpp"

namespace mmsb {

namespace {

struct Entry {
    std::string value;
    std::size_t line = 0;
};

using Sections = std::map<std::string, std::map<std::string, Entry>>;

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"problem", {"times", "epsilon", "cost_mode"}},
        {"grid", {"x_min", "x_max", "n_x", "v_min", "v_max", "n_v"}},
        {"marginals", {"files"}},
        {"solver", {"tolerance", "max_sweeps", "representation", "order", "seed", "kernel_memory_mb"}},
        {"output", {"directory", "trace", "dump_kernels"}},
    };
    return keys;
}

Sections read_sections(std::istream& in, const std::string& source) {
    Sections sections;
    std::string current;
    std::string raw;
    std::size_t line_no = 0;
    const auto fail = [&](const std::string& msg) {
        throw Error(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find_first_of("#;");
        const std::string line = csv::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            current = csv::trim(line.substr(1, line.size() - 2));
            if (!known_keys().contains(current)) fail("unknown section [" + current + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        if (current.empty()) fail("key outside of any section");
        const std::string key = csv::trim(line.substr(0, eq));
        const std::string value = csv::trim(line.substr(eq + 1));
        if (!known_keys().at(current).contains(key)) fail("unknown key '" + key + "' in [" + current + "]");
        if (value.empty()) fail("empty value for '" + key + "'");
        auto& slot = sections[current][key];
        if (slot.line != 0) fail("duplicate key '" + key + "'");
        slot = {value, line_no};
    }
    return sections;
}

class Reader {
public:
    Reader(const Sections& s, std::string source) : sections_(s), source_(std::move(source)) {}

    std::optional<Entry> find(const std::string& section, const std::string& key) const {
        const auto sec = sections_.find(section);
        if (sec == sections_.end()) return std::nullopt;
        const auto it = sec->second.find(key);
        if (it == sec->second.end()) return std::nullopt;
        return it->second;
    }

    Entry require(const std::string& section, const std::string& key) const {
        auto e = find(section, key);
        if (!e) throw Error(ErrorKind::ValidationError, key + ": missing required key in [" + section + "]");
        return *e;
    }

    [[noreturn]] void fail(const Entry& e, const std::string& msg) const {
        throw Error(ErrorKind::ParseError, source_ + ":" + std::to_string(e.line) + ": " + msg);
    }

    double number(const Entry& e, const std::string& key) const {
        try {
            return csv::parse_double(e.value, key);
        } catch (const Error&) {
            fail(e, key + ": not a number: '" + e.value + "'");
        }
    }

    std::size_t count(const Entry& e, const std::string& key) const {
        const double v = number(e, key);
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) fail(e, key + ": expected a nonnegative integer");
        return static_cast<std::size_t>(v);
    }

    bool flag(const Entry& e, const std::string& key) const {
        if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
        if (e.value == "false" || e.value == "0" || e.value == "no") return false;
        fail(e, key + ": expected true or false");
    }

    template <typename F>
    auto parsed(const Entry& e, F&& parse) const {
        try {
            return parse(e.value);
        } catch (const Error& err) {
            fail(e, err.what());
        }
    }

private:
    const Sections& sections_;
    std::string source_;
};

}  // namespace

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const auto& field : csv::split(text)) out.push_back(csv::parse_double(field, what));
    return out;
}

ProblemSpec parse_spec(std::istream& in, const std::filesystem::path& base_dir, const std::string& source) {
    const Sections sections = read_sections(in, source);
    const Reader r(sections, source);
    ProblemSpec spec;

    const auto times = r.require("problem", "times");
    spec.times = r.parsed(times, [](const std::string& v) { return parse_number_list(v, "times"); });
    spec.epsilon = r.number(r.require("problem", "epsilon"), "epsilon");
    if (auto e = r.find("problem", "cost_mode")) spec.cost_mode = r.parsed(*e, parse_cost_mode);

    spec.bounds.x_min = r.number(r.require("grid", "x_min"), "x_min");
    spec.bounds.x_max = r.number(r.require("grid", "x_max"), "x_max");
    spec.bounds.n_x = r.count(r.require("grid", "n_x"), "n_x");
    spec.bounds.v_min = r.number(r.require("grid", "v_min"), "v_min");
    spec.bounds.v_max = r.number(r.require("grid", "v_max"), "v_max");
    spec.bounds.n_v = r.count(r.require("grid", "n_v"), "n_v");

    for (const auto& f : csv::split(r.require("marginals", "files").value)) {
        const std::filesystem::path p(f);
        spec.marginal_files.push_back(p.is_absolute() ? p : base_dir / p);
    }

    if (auto e = r.find("solver", "tolerance")) spec.tolerance = r.number(*e, "tolerance");
    if (auto e = r.find("solver", "max_sweeps")) spec.max_sweeps = r.count(*e, "max_sweeps");
    if (auto e = r.find("solver", "representation")) spec.representation = r.parsed(*e, parse_representation);
    if (auto e = r.find("solver", "order")) spec.order = r.parsed(*e, parse_sweep_order);
    if (auto e = r.find("solver", "seed")) spec.seed = r.count(*e, "seed");
    if (auto e = r.find("solver", "kernel_memory_mb")) spec.kernel_memory_mb = r.count(*e, "kernel_memory_mb");
    if (auto e = r.find("output", "directory")) {
        const std::filesystem::path p(e->value);
        spec.output_dir = p.is_absolute() ? p : base_dir / p;
    } else {
        spec.output_dir = base_dir / "out";
    }
    if (auto e = r.find("output", "trace")) spec.trace = r.flag(*e, "trace");
    if (auto e = r.find("output", "dump_kernels")) spec.dump_kernels = r.flag(*e, "dump_kernels");

    // Invariants.
    if (spec.times.size() < 2) throw Error(ErrorKind::ValidationError, "times: need at least two constraint times");
    for (std::size_t i = 1; i < spec.times.size(); ++i) {
        if (!(spec.times[i] > spec.times[i - 1])) {
            throw Error(ErrorKind::ValidationError, "times: must be strictly increasing");
        }
    }
    if (!(spec.epsilon > 0.0)) throw Error(ErrorKind::ValidationError, "epsilon: must be positive");
    if (!(spec.tolerance > 0.0)) throw Error(ErrorKind::ValidationError, "tolerance: must be positive");
    if (spec.marginal_files.size() != spec.times.size()) {
        throw Error(ErrorKind::ValidationError, "files: need one marginal file per time (" +
                                                    std::to_string(spec.times.size()) + "), got " +
                                                    std::to_string(spec.marginal_files.size()));
    }
    const auto& b = spec.bounds;
    if (b.n_x == 0 || b.n_v == 0) throw Error(ErrorKind::ValidationError, "grid: node counts must be positive");
    if ((b.n_x > 1 && !(b.x_max > b.x_min)) || (b.n_v > 1 && !(b.v_max > b.v_min))) {
        throw Error(ErrorKind::ValidationError, "grid: bounds must be increasing");
    }
    try {
        spec.grid = std::make_shared<const PhaseGrid>(PhaseGrid::uniform(b.x_min, b.x_max, b.n_x, b.v_min, b.v_max, b.n_v));
    } catch (const Error& e) {
        throw Error(ErrorKind::ValidationError, std::string("grid: ") + e.what());
    }

    for (const auto& path : spec.marginal_files) {
        if (!std::filesystem::is_regular_file(path)) {
            throw Error(ErrorKind::ValidationError, "marginal file not found: " + path.string());
        }
        spec.marginals.push_back(read_marginal_csv(path, *spec.grid));
    }
    return spec;
}

ProblemSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ValidationError, "cannot read config " + path.string());
    return parse_spec(in, path.parent_path(), path.string());
}

Problem ProblemSpec::problem() const {
    Problem p;
    p.times = times;
    p.epsilon = epsilon;
    p.grid = grid;
    p.cost_mode = cost_mode;
    p.marginals = marginals;
    return p;
}

SolverOptions ProblemSpec::solver_options() const {
    SolverOptions o;
    o.tolerance = tolerance;
    o.max_sweeps = max_sweeps;
    o.representation = representation;
    o.order = order;
    o.seed = seed;
    o.kernel_memory_budget = kernel_memory_mb * (std::size_t{1} << 20);
    return o;
}

}  // namespace mmsb
