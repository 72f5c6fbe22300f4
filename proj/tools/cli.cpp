#include "cli.hpp"

#include "cbm/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace cbm::cli {

using json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot read file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

template <class T>
T parse_number(const std::string& text, const std::string& what) {
    T v{};
    const char* b = text.data();
    const char* e = b + text.size();
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) throw ConfigError(what + ": '" + text + "' is not a valid number");
    return v;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& origin) {
    KeyValues kv;
    kv.origin_ = origin;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const std::string where = origin + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
        if (!kv.values_.emplace(key, value).second)
            throw ConfigError(where + ": duplicate key '" + key + "'");
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) { return parse(read_file(path), path); }

std::string KeyValues::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
    return it->second;
}

std::int64_t KeyValues::integer(const std::string& key) const {
    return parse_number<std::int64_t>(str(key), origin_ + ": " + key);
}

double KeyValues::real(const std::string& key) const {
    const std::string s = str(key);
    // from_chars for double is fine on this toolchain, but accept "1e-6" style too.
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v))
        throw ConfigError(origin_ + ": " + key + ": '" + s + "' is not a valid number");
    return v;
}

bool KeyValues::boolean(const std::string& key) const {
    const std::string s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(origin_ + ": " + key + ": '" + s + "' is not a boolean");
}

std::vector<double> KeyValues::reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(str(key))) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (end != item.c_str() + item.size() || !std::isfinite(v))
            throw ConfigError(origin_ + ": " + key + ": '" + item + "' is not a valid number");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(origin_ + ": " + key + ": empty list");
    return out;
}

std::vector<std::uint64_t> KeyValues::seeds(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(str(key)))
        out.push_back(parse_number<std::uint64_t>(item, origin_ + ": " + key));
    if (out.empty()) throw ConfigError(origin_ + ": " + key + ": empty list");
    return out;
}

void KeyValues::require_known(std::span<const std::string> known) const {
    for (const auto& [k, v] : values_)
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError(origin_ + ": unknown key '" + k + "'");
}

ReservoirTask parse_task(const std::string& name) {
    if (name == "stm") return ReservoirTask::stm;
    if (name == "pc") return ReservoirTask::pc;
    if (name == "narma10") return ReservoirTask::narma10;
    throw ConfigError("unknown task '" + name + "' (expected stm, pc or narma10)");
}

std::string task_name(ReservoirTask t) {
    switch (t) {
        case ReservoirTask::stm: return "stm";
        case ReservoirTask::pc: return "pc";
        case ReservoirTask::narma10: return "narma10";
    }
    return "?";
}

ReservoirTaskConfig task_preset(ReservoirTask task) {
    ReservoirTaskConfig c;
    c.task = task;
    ReservoirParams& p = c.params;
    p.size = 1024;
    p.frame_steps = 256;
    p.washout_frames = 50;
    p.weight_bits = 8;
    p.density = 0.005;
    p.input_range = 256;
    p.input_density = 1.0;
    p.bias_range = 0;
    p.temp = Temperature::snap(128);
    p.dynamics.dt_exp = -8;
    if (task == ReservoirTask::narma10) {
        // Dense, coarse, strongly biased couplings at a low temperature.
        p.weight_bits = 3;
        p.density = 1.0;
        p.bias_range = 256;
        p.temp = Temperature::snap(32);
    }
    c.split.lambdas = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0};
    c.max_delay = 30;
    c.seeds = {1, 2, 3};
    return c;
}

namespace {

const std::vector<std::string> kTaskKeys{
    "task",          "reservoir_size", "frame_steps",   "washout_frames", "weight_bits",
    "density",       "input_range",    "input_density", "bias_range",     "temperature",
    "t0_exp",        "alpha_code",     "dt_exp",        "x_frac_bits",    "exp_frac_bits",
    "carry_residual", "train",         "test",          "validation_fraction", "lambdas",
    "max_delay",     "seeds"};

std::size_t positive(std::int64_t v, const std::string& what) {
    if (v <= 0) throw ConfigError(what + " must be positive");
    return static_cast<std::size_t>(v);
}

}  // namespace

ReservoirTaskConfig apply_task_config(ReservoirTaskConfig c, const KeyValues& kv) {
    kv.require_known(kTaskKeys);
    ReservoirParams& p = c.params;
    if (kv.has("task")) c.task = parse_task(kv.str("task"));
    if (kv.has("reservoir_size")) p.size = positive(kv.integer("reservoir_size"), "reservoir_size");
    if (kv.has("frame_steps")) p.frame_steps = positive(kv.integer("frame_steps"), "frame_steps");
    if (kv.has("washout_frames")) p.washout_frames = positive(kv.integer("washout_frames"), "washout_frames");
    if (kv.has("weight_bits")) p.weight_bits = static_cast<int>(kv.integer("weight_bits"));
    if (kv.has("density")) p.density = kv.real("density");
    if (kv.has("input_range")) p.input_range = static_cast<int>(kv.integer("input_range"));
    if (kv.has("input_density")) p.input_density = kv.real("input_density");
    if (kv.has("bias_range")) p.bias_range = static_cast<int>(kv.integer("bias_range"));
    if (kv.has("temperature") && (kv.has("t0_exp") || kv.has("alpha_code")))
        throw ConfigError(kv.origin() + ": give either temperature or t0_exp/alpha_code");
    try {
        if (kv.has("temperature")) {
            const double t = kv.real("temperature");
            if (!(t > 0)) throw ConfigError(kv.origin() + ": temperature must be positive");
            p.temp = Temperature::snap(t);
        }
        if (kv.has("t0_exp") || kv.has("alpha_code"))
            p.temp = Temperature(kv.has("t0_exp") ? static_cast<int>(kv.integer("t0_exp")) : p.temp.t0_exp,
                                 kv.has("alpha_code") ? static_cast<int>(kv.integer("alpha_code"))
                                                      : p.temp.alpha_code);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(kv.origin() + ": " + e.what());
    }
    if (kv.has("dt_exp")) p.dynamics.dt_exp = static_cast<int>(kv.integer("dt_exp"));
    if (kv.has("x_frac_bits")) p.dynamics.x_frac_bits = static_cast<int>(kv.integer("x_frac_bits"));
    if (kv.has("exp_frac_bits")) p.dynamics.exp.frac_bits = static_cast<int>(kv.integer("exp_frac_bits"));
    if (kv.has("carry_residual")) p.dynamics.carry_residual = kv.boolean("carry_residual");
    if (kv.has("train")) c.split.train = positive(kv.integer("train"), "train");
    if (kv.has("test")) c.split.test = positive(kv.integer("test"), "test");
    if (kv.has("validation_fraction")) c.split.validation_fraction = kv.real("validation_fraction");
    if (kv.has("lambdas")) c.split.lambdas = kv.reals("lambdas");
    if (kv.has("max_delay")) c.max_delay = positive(kv.integer("max_delay"), "max_delay");
    if (kv.has("seeds")) c.seeds = kv.seeds("seeds");
    if (!(p.density >= 0 && p.density <= 1)) throw ConfigError(kv.origin() + ": density must lie in [0, 1]");
    if (!(p.input_density >= 0 && p.input_density <= 1))
        throw ConfigError(kv.origin() + ": input_density must lie in [0, 1]");
    if (!(c.split.validation_fraction > 0 && c.split.validation_fraction < 1))
        throw ConfigError(kv.origin() + ": validation_fraction must lie in (0, 1)");
    for (const double l : c.split.lambdas)
        if (!(l > 0)) throw ConfigError(kv.origin() + ": lambdas must be positive");
    return c;
}

ReservoirRunResult run_reservoir_task(const ReservoirTaskConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const RcConfig rc = make_rc_config(cfg.params, derive_seed(seed, 3));
    ReservoirRunResult r;
    r.task = cfg.task;
    r.seed = seed;
    r.points = rc.washout_frames + cfg.split.train + cfg.split.test;
    if (cfg.task == ReservoirTask::narma10) {
        const NarmaResult n = narma10_task(rc, cfg.split, seed);
        r.score = n.nrmse;
        r.nrmse = n.nrmse;
        r.baseline_nrmse = n.baseline_nrmse;
        r.lambda = n.lambda;
        r.counters = n.counters;
    } else {
        const MemoryTask t = cfg.task == ReservoirTask::stm ? MemoryTask::stm : MemoryTask::parity;
        const MemoryCapacityResult m = metric_memory_capacity(t, rc, cfg.max_delay, seed, cfg.split);
        r.score = m.capacity;
        r.r2 = m.r2;
        r.counters = m.counters;
    }
    // The readout is fitted after the run; charge what the event-driven
    // readout would have cost on the same trajectory.
    r.counters.output_macs = r.counters.flips_total * (cfg.task == ReservoirTask::narma10 ? 1 : cfg.max_delay);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

unsigned thread_cap() {
    if (const char* env = std::getenv("CBM_THREADS"); env && *env) {
        unsigned v = 0;
        const std::string s(env);
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v == 0)
            throw ConfigError("CBM_THREADS must be a positive integer, got '" + s + "'");
        return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Runs fn(i) for i in [0, count) on up to `threads` threads.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        const std::lock_guard lock(m);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

json mac_json(const MacCounters& c) {
    json j;
    j["steps"] = c.steps;
    j["flips"] = c.flips_total;
    j["macs_total"] = c.macs_total;
    j["macs_dense_equivalent"] = c.macs_dense_equivalent;
    j["input_macs"] = c.input_macs;
    j["output_macs"] = c.output_macs;
    if (c.steps > 0 && c.neurons > 0) {
        const MacReport r = mac_report(c);
        j["flip_rate"] = r.avg_flip_rate;
        j["macs_per_step"] = r.macs_per_step;
        j["macs_per_step_per_neuron"] = r.macs_per_step_per_neuron;
        j["reduction_fraction"] = r.reduction_fraction;
    } else {
        j["flip_rate"] = 0.0;
        j["macs_per_step"] = 0.0;
        j["macs_per_step_per_neuron"] = 0.0;
        j["reduction_fraction"] = 1.0;
    }
    return j;
}

MacCounters merge(const MacCounters& a, const MacCounters& b) {
    MacCounters c = a;
    c.macs_total += b.macs_total;
    c.macs_dense_equivalent += b.macs_dense_equivalent;
    c.steps += b.steps;
    c.flips_total += b.flips_total;
    c.neurons = b.neurons ? b.neurons : a.neurons;
    c.input_macs += b.input_macs;
    c.output_macs += b.output_macs;
    return c;
}

json temperature_json(const Temperature& t) {
    return {{"t0_exp", t.t0_exp}, {"alpha_code", t.alpha_code}, {"effective", t.effective()}};
}

json dynamics_json(const DynamicsConfig& d) {
    return {{"exp_frac_bits", d.exp.frac_bits},
            {"exp_max", d.exp.max_exp},
            {"x_frac_bits", d.x_frac_bits},
            {"dt_exp", d.dt_exp},
            {"carry_residual", d.carry_residual},
            {"sequential", d.sequential}};
}

json task_config_json(const ReservoirTaskConfig& c) {
    const ReservoirParams& p = c.params;
    json j;
    j["task"] = task_name(c.task);
    j["reservoir_size"] = p.size;
    j["frame_steps"] = p.frame_steps;
    j["washout_frames"] = p.washout_frames;
    j["weight_bits"] = p.weight_bits;
    j["density"] = p.density;
    j["input_range"] = p.input_range;
    j["input_density"] = p.input_density;
    j["bias_range"] = p.bias_range;
    j["temperature"] = temperature_json(p.temp);
    j["dynamics"] = dynamics_json(p.dynamics);
    j["train"] = c.split.train;
    j["test"] = c.split.test;
    j["validation_fraction"] = c.split.validation_fraction;
    j["lambdas"] = c.split.lambdas;
    if (c.task != ReservoirTask::narma10) j["max_delay"] = c.max_delay;
    j["seeds"] = c.seeds;
    return j;
}

json reservoir_result_json(const ReservoirRunResult& r) {
    json j;
    j["seed"] = r.seed;
    j["score"] = r.score;
    if (r.task == ReservoirTask::narma10) {
        j["nrmse"] = r.nrmse;
        j["baseline_nrmse"] = r.baseline_nrmse;
        j["lambda"] = r.lambda;
    } else {
        j["capacity"] = r.score;
        j["r2"] = r.r2;
    }
    j["macs"] = mac_json(r.counters);
    j["wall_clock_s"] = r.seconds;
    j["wall_clock_per_point_s"] = r.points ? r.seconds / static_cast<double>(r.points) : 0.0;
    return j;
}

void write_report(const json& report, const std::string& path, std::ostream& out) {
    const std::string text = report.dump(2) + "\n";
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot write report to '" + path + "'");
    f << text;
    if (!f) throw FileError("failed writing report to '" + path + "'");
}

void write_trace_csv(const std::string& path, std::span<const SaSolution> sols) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot write trace to '" + path + "'");
    f << "seed,step,flips,energy,best_energy\n";
    for (const auto& s : sols)
        for (const auto& t : s.trace)
            f << s.seed << ',' << t.step << ',' << t.flips << ',' << t.energy << ',' << t.best_energy << '\n';
    if (!f) throw FileError("failed writing trace to '" + path + "'");
}

std::vector<std::uint64_t> replica_seeds(std::uint64_t seed, std::size_t replicas) {
    std::vector<std::uint64_t> s(replicas);
    for (std::size_t k = 0; k < replicas; ++k) s[k] = seed + k;
    return s;
}

int bits_for(std::int64_t max_abs) {
    int bits = 2;
    while (((std::int64_t{1} << (bits - 1)) - 1) < max_abs) ++bits;
    return bits;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Mean flip rate over trace samples after the first `burn_in` fraction of steps.
double flip_rate_after(const SaSolution& s, std::size_t n, double burn_in) {
    if (s.trace.empty()) return 0.0;
    const auto cut = static_cast<std::uint64_t>(std::ceil(burn_in * static_cast<double>(s.counters.steps)));
    std::uint64_t flips = 0, samples = 0;
    for (const auto& t : s.trace)
        if (t.step > cut) {
            flips += t.flips;
            ++samples;
        }
    return samples ? static_cast<double>(flips) / (static_cast<double>(samples) * static_cast<double>(n)) : 0.0;
}

struct SaParams {
    std::uint64_t steps = 10000;
    double t_start = 8;
    double t_end = 0.5;
    std::uint64_t sample_every = 0;
};

json solution_json(const SaSolution& s, bool with_assignment) {
    json j;
    j["seed"] = s.seed;
    j["cut_value"] = s.cut_value;
    j["best_energy"] = s.best_energy;
    if (with_assignment) j["assignment"] = s.assignment;
    const MacReport r = mac_report(s.counters);
    j["flip_rate"] = r.avg_flip_rate;
    j["macs_per_step_per_neuron"] = r.macs_per_step_per_neuron;
    j["reduction_fraction"] = r.reduction_fraction;
    return j;
}

json trace_json(const SaSolution& s) {
    json t = json::array();
    for (const auto& x : s.trace)
        t.push_back({{"step", x.step}, {"flips", x.flips}, {"energy", x.energy}, {"best_energy", x.best_energy}});
    return t;
}

// ---- solve ---------------------------------------------------------------

struct SolveArgs {
    std::string instance;
    SaParams sa;
    int weight_bits = 0;  // 0 = smallest width that fits
    std::uint64_t seed = 1;
    std::size_t replicas = 1;
    std::string out;
    std::string trace_csv;
};

int cmd_solve(const SolveArgs& a, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string text = read_file(a.instance);
    const bool is_qubo = std::filesystem::path(a.instance).extension() == ".json";
    const Schedule sched = make_schedule(a.sa.t_start, a.sa.t_end, a.sa.steps);
    AnnealOptions opts;
    opts.sample_every = a.sa.sample_every ? a.sa.sample_every : (a.trace_csv.empty() ? 0 : 1);
    const auto seeds = replica_seeds(a.seed, a.replicas);

    json cfg;
    cfg["instance"] = a.instance;
    cfg["format"] = is_qubo ? "qubo-json" : "maxcut-edge-list";
    std::vector<SaSolution> sols;
    std::optional<Graph> graph;
    std::optional<Qubo> qubo;
    int bits = a.weight_bits;
    WeightMatrix w;
    if (is_qubo) {
        qubo = parse_qubo_json(text);
        std::int64_t m = 0;
        for (const auto& e : qubo->quadratic) m = std::max<std::int64_t>(m, std::abs(static_cast<std::int64_t>(e.w)));
        if (bits == 0) bits = bits_for(m);
        w = qubo_to_cbm(*qubo, bits);
        cfg["n"] = qubo->n;
        cfg["quadratic_terms"] = qubo->quadratic.size();
    } else {
        graph = parse_maxcut(text);
        std::int64_t m = 0;
        for (const auto& e : graph->edges) m = std::max<std::int64_t>(m, std::abs(static_cast<std::int64_t>(e.w)));
        if (bits == 0) bits = bits_for(m);
        w = maxcut_to_cbm(*graph, bits);
        cfg["n"] = graph->n;
        cfg["edges"] = graph->edges.size();
    }
    cfg["steps"] = a.sa.steps;
    cfg["t_start"] = a.sa.t_start;
    cfg["t_end"] = a.sa.t_end;
    cfg["weight_bits"] = bits;
    cfg["seed"] = a.seed;
    cfg["replicas"] = a.replicas;
    cfg["sample_every"] = opts.sample_every;
    cfg["dynamics"] = dynamics_json(opts.dynamics);

    sols = anneal_replicas(w, sched, seeds, opts, thread_cap());
    std::size_t best = 0;
    MacCounters total;
    json results = json::array();
    for (std::size_t k = 0; k < sols.size(); ++k) {
        SaSolution& s = sols[k];
        if (graph) {
            const std::int64_t cut = cut_value(*graph, s.assignment);
            if (cut != s.cut_value) throw std::logic_error("tracked cut disagrees with recomputed cut");
        }
        json r = solution_json(s, true);
        if (qubo) {
            r.erase("cut_value");
            r["objective"] = qubo_objective(*qubo, s.assignment);
        }
        results.push_back(std::move(r));
        total = merge(total, s.counters);
        if (s.best_energy < sols[best].best_energy) best = k;
    }
    json report;
    report["mode"] = "solve";
    report["config"] = cfg;
    report["seed"] = a.seed;
    report["best"] = results[best];
    report["results"] = results;
    report["macs"] = mac_json(total);
    if (opts.sample_every) report["trace"] = trace_json(sols[best]);
    report["wall_clock_s"] = elapsed(t0);
    if (!a.trace_csv.empty()) write_trace_csv(a.trace_csv, sols);
    write_report(report, a.out, out);
    return kOk;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
    std::size_t neurons = 1000;
    SaParams sa{10000, 64, 1, 1};
    int weight_bits = 2;
    std::uint64_t seed = 1;
    std::size_t replicas = 1;
    std::string out;
    std::string trace_csv;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const Graph g = random_complete_pm1(a.neurons, derive_seed(a.seed, 4));
    const WeightMatrix w = maxcut_to_cbm(g, a.weight_bits);
    const Schedule sched = make_schedule(a.sa.t_start, a.sa.t_end, a.sa.steps);
    AnnealOptions opts;
    opts.sample_every = a.sa.sample_every ? a.sa.sample_every : 1;
    const auto seeds = replica_seeds(a.seed, a.replicas);
    const auto t_run = std::chrono::steady_clock::now();
    const auto sols = anneal_replicas(w, sched, seeds, opts, thread_cap());
    const double run_s = elapsed(t_run);

    json cfg;
    cfg["instance"] = "random complete graph, +/-1 weights";
    cfg["instance_seed"] = derive_seed(a.seed, 4);
    cfg["neurons"] = a.neurons;
    cfg["steps"] = a.sa.steps;
    cfg["t_start"] = a.sa.t_start;
    cfg["t_end"] = a.sa.t_end;
    cfg["weight_bits"] = a.weight_bits;
    cfg["seed"] = a.seed;
    cfg["replicas"] = a.replicas;
    cfg["sample_every"] = opts.sample_every;
    cfg["dynamics"] = dynamics_json(opts.dynamics);

    json results = json::array();
    MacCounters total;
    std::vector<double> burn;
    for (const auto& s : sols) {
        json r = solution_json(s, false);
        const double fr = flip_rate_after(s, a.neurons, 0.1);
        r["flip_rate_after_burn_in"] = fr;
        burn.push_back(fr);
        results.push_back(std::move(r));
        total = merge(total, s.counters);
    }
    json report;
    report["mode"] = "bench";
    report["config"] = cfg;
    report["seed"] = a.seed;
    report["results"] = results;
    report["flip_rate_after_burn_in"] = median(burn);
    report["macs"] = mac_json(total);
    report["steps_per_second"] =
        run_s > 0 ? static_cast<double>(a.sa.steps * a.replicas) / run_s : 0.0;
    report["wall_clock_s"] = elapsed(t0);
    if (!a.trace_csv.empty()) write_trace_csv(a.trace_csv, sols);
    write_report(report, a.out, out);
    return kOk;
}

// ---- reservoir -----------------------------------------------------------

struct ReservoirArgs {
    std::string task;
    std::string config;
    std::size_t neurons = 0;
    std::size_t frame_steps = 0;
    int weight_bits = 0;
    std::optional<std::uint64_t> seed;
    std::size_t replicas = 0;
    std::size_t max_delay = 0;
    std::size_t train = 0;
    std::size_t test = 0;
    std::string out;
};

ReservoirTaskConfig resolve_task(const ReservoirArgs& a) {
    std::optional<KeyValues> kv;
    if (!a.config.empty()) kv = KeyValues::load(a.config);
    ReservoirTask task = ReservoirTask::narma10;
    if (!a.task.empty()) task = parse_task(a.task);
    else if (kv && kv->has("task")) task = parse_task(kv->str("task"));
    ReservoirTaskConfig c = task_preset(task);
    if (kv) c = apply_task_config(c, *kv);
    c.task = task;
    if (a.neurons) c.params.size = a.neurons;
    if (a.frame_steps) c.params.frame_steps = a.frame_steps;
    if (a.weight_bits) c.params.weight_bits = a.weight_bits;
    if (a.max_delay) c.max_delay = a.max_delay;
    if (a.train) c.split.train = a.train;
    if (a.test) c.split.test = a.test;
    if (a.seed || a.replicas) {
        const std::uint64_t base = a.seed ? *a.seed : c.seeds.front();
        c.seeds = replica_seeds(base, a.replicas ? a.replicas : 1);
    }
    if (c.task != ReservoirTask::narma10 && c.params.washout_frames < c.max_delay)
        throw ConfigError("washout_frames must be at least max_delay");
    if (c.task == ReservoirTask::narma10 && c.params.washout_frames < 9)
        throw ConfigError("washout_frames must be at least 9 for narma10");
    if (c.params.frame_steps < 256)
        throw ConfigError("frame_steps must be at least 256 to carry 8-bit PWM inputs");
    return c;
}

int cmd_reservoir(const ReservoirArgs& a, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const ReservoirTaskConfig c = resolve_task(a);
    std::vector<ReservoirRunResult> runs(c.seeds.size());
    parallel_for(runs.size(), thread_cap(), [&](std::size_t k) { runs[k] = run_reservoir_task(c, c.seeds[k]); });
    std::sort(runs.begin(), runs.end(), [](const auto& x, const auto& y) { return x.seed < y.seed; });

    json results = json::array();
    std::vector<double> scores;
    MacCounters total;
    for (const auto& r : runs) {
        results.push_back(reservoir_result_json(r));
        scores.push_back(r.score);
        total = merge(total, r.counters);
    }
    json report;
    report["mode"] = "reservoir";
    report["task"] = task_name(c.task);
    report["config"] = task_config_json(c);
    report["seed"] = c.seeds.front();
    report["score"] = median(scores);
    if (c.task == ReservoirTask::narma10) report["nrmse"] = median(scores);
    report["results"] = results;
    report["macs"] = mac_json(total);
    report["wall_clock_s"] = elapsed(t0);
    write_report(report, a.out, out);
    return kOk;
}

// ---- dual ----------------------------------------------------------------

struct DualArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct ClusterSpec {
    ClusterKind kind = ClusterKind::sa;
    std::size_t size = 0;
    // SA
    std::string instance;
    SaParams sa;
    int weight_bits = 0;
    // RC
    ReservoirTaskConfig rc;
    std::string task_config;
};

int cmd_dual(const DualArgs& a, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const KeyValues kv = KeyValues::load(a.config);
    const std::filesystem::path base = std::filesystem::path(a.config).parent_path();
    std::vector<std::string> known{"neurons", "seed"};
    std::vector<ClusterSpec> specs;
    for (std::size_t c = 1;; ++c) {
        const std::string p = "cluster" + std::to_string(c) + ".";
        if (!kv.has(p + "kind")) break;
        for (const char* k : {"kind", "size", "instance", "steps", "t_start", "t_end", "weight_bits",
                              "sample_every", "task", "config", "train", "test"})
            known.push_back(p + k);
        ClusterSpec s;
        const std::string kind = kv.str(p + "kind");
        if (kind == "sa") s.kind = ClusterKind::sa;
        else if (kind == "rc") s.kind = ClusterKind::rc;
        else throw ConfigError(kv.origin() + ": " + p + "kind must be sa or rc");
        s.size = positive(kv.integer(p + "size"), p + "size");
        if (s.kind == ClusterKind::sa) {
            s.instance = kv.has(p + "instance") ? kv.str(p + "instance") : "random";
            if (kv.has(p + "steps")) s.sa.steps = positive(kv.integer(p + "steps"), p + "steps");
            if (kv.has(p + "t_start")) s.sa.t_start = kv.real(p + "t_start");
            if (kv.has(p + "t_end")) s.sa.t_end = kv.real(p + "t_end");
            if (kv.has(p + "weight_bits")) s.weight_bits = static_cast<int>(kv.integer(p + "weight_bits"));
            if (kv.has(p + "sample_every")) s.sa.sample_every = positive(kv.integer(p + "sample_every"), p + "sample_every");
        } else {
            ReservoirArgs ra;
            if (kv.has(p + "task")) ra.task = kv.str(p + "task");
            if (kv.has(p + "config")) {
                const std::filesystem::path cp(kv.str(p + "config"));
                ra.config = (cp.is_relative() ? base / cp : cp).string();
                s.task_config = ra.config;
            }
            if (kv.has(p + "train")) ra.train = positive(kv.integer(p + "train"), p + "train");
            if (kv.has(p + "test")) ra.test = positive(kv.integer(p + "test"), p + "test");
            ra.neurons = s.size;
            s.rc = resolve_task(ra);
        }
        specs.push_back(std::move(s));
    }
    kv.require_known(known);
    if (specs.empty()) throw ConfigError(kv.origin() + ": no clusters (expected cluster1.kind, ...)");
    std::size_t used = 0;
    for (const auto& s : specs) used += s.size;
    const std::size_t n = kv.has("neurons") ? positive(kv.integer("neurons"), "neurons") : used;
    if (used > n) throw ConfigError(kv.origin() + ": clusters need " + std::to_string(used) + " neurons, machine has " + std::to_string(n));
    const std::uint64_t seed = a.seed ? *a.seed : (kv.has("seed") ? static_cast<std::uint64_t>(kv.integer("seed")) : 1);

    std::vector<std::pair<ClusterKind, std::size_t>> sizes;
    for (const auto& s : specs) sizes.emplace_back(s.kind, s.size);
    const Partition part = Partition::contiguous(n, sizes);

    // Per-cluster problem data, all seeded from the cluster's derived seed.
    std::vector<Graph> graphs(specs.size());
    std::vector<WeightMatrix> sa_weights(specs.size());
    std::vector<RcConfig> rc_configs(specs.size());
    std::vector<Narma10Series> narma(specs.size());
    std::vector<std::vector<std::uint8_t>> bits(specs.size());
    std::vector<const WeightMatrix*> sources(specs.size());
    std::vector<ClusterTask> tasks;
    for (std::size_t c = 0; c < specs.size(); ++c) {
        const ClusterSpec& s = specs[c];
        const std::uint64_t cs = cluster_seed(seed, c);
        if (s.kind == ClusterKind::sa) {
            if (s.instance == "random") {
                graphs[c] = random_complete_pm1(s.size, derive_seed(cs, 4));
            } else {
                const std::filesystem::path ip(s.instance);
                graphs[c] = parse_maxcut(read_file((ip.is_relative() ? base / ip : ip).string()));
                if (graphs[c].n != s.size)
                    throw ConfigError("cluster" + std::to_string(c + 1) + ": instance has " +
                                      std::to_string(graphs[c].n) + " vertices but the cluster has " +
                                      std::to_string(s.size));
            }
            std::int64_t m = 0;
            for (const auto& e : graphs[c].edges) m = std::max<std::int64_t>(m, std::abs(static_cast<std::int64_t>(e.w)));
            sa_weights[c] = maxcut_to_cbm(graphs[c], s.weight_bits ? s.weight_bits : bits_for(m));
            sources[c] = &sa_weights[c];
            SaTask t{make_schedule(s.sa.t_start, s.sa.t_end, s.sa.steps), {}};
            t.options.sample_every = s.sa.sample_every;
            tasks.emplace_back(std::move(t));
        } else {
            rc_configs[c] = make_rc_config(s.rc.params, derive_seed(cs, 3));
            sources[c] = &rc_configs[c].weights;
            std::vector<std::uint8_t> levels;
            if (s.rc.task == ReservoirTask::narma10) {
                narma[c] = narma10_series(rc_configs[c], s.rc.split, cs);
                levels = quantize_narma_inputs(narma[c].u);
            } else {
                bits[c] = memory_bits(rc_configs[c], s.rc.split, cs);
                levels = memory_levels(bits[c]);
            }
            tasks.emplace_back(RcTask{&rc_configs[c], std::move(levels)});
        }
    }
    const WeightMatrix w = build_masked_weights(part, sources);
    const auto t_run = std::chrono::steady_clock::now();
    const DualResult d = run_dual(part, w, tasks, seed);
    const double run_s = elapsed(t_run);

    json cfg;
    cfg["config_file"] = a.config;
    cfg["neurons"] = n;
    cfg["seed"] = seed;
    json clusters = json::array();
    std::size_t sa_k = 0, rc_k = 0, first = 0;
    for (std::size_t c = 0; c < specs.size(); ++c) {
        const ClusterSpec& s = specs[c];
        json cc;
        cc["index"] = c + 1;
        cc["kind"] = s.kind == ClusterKind::sa ? "sa" : "rc";
        cc["size"] = s.size;
        cc["first_neuron"] = first;
        cc["seed"] = cluster_seed(seed, c);
        first += s.size;
        json res;
        if (s.kind == ClusterKind::sa) {
            cc["instance"] = s.instance;
            cc["steps"] = s.sa.steps;
            cc["t_start"] = s.sa.t_start;
            cc["t_end"] = s.sa.t_end;
            cc["weight_bits"] = sa_weights[c].weight_bits();
            const SaSolution& sol = d.sa[sa_k++];
            if (cut_value(graphs[c], sol.assignment) != sol.cut_value)
                throw std::logic_error("tracked cut disagrees with recomputed cut");
            res = solution_json(sol, true);
            if (!sol.trace.empty()) res["trace"] = trace_json(sol);
        } else {
            cc["task_config"] = task_config_json(s.rc);
            if (!s.task_config.empty()) cc["task_config_file"] = s.task_config;
            const FeatureMatrix& fm = d.rc[rc_k++];
            res["task"] = task_name(s.rc.task);
            if (s.rc.task == ReservoirTask::narma10) {
                const NarmaResult nr = narma10_score(fm, narma[c], rc_configs[c].washout_frames, s.rc.split);
                res["score"] = nr.nrmse;
                res["nrmse"] = nr.nrmse;
                res["baseline_nrmse"] = nr.baseline_nrmse;
                res["lambda"] = nr.lambda;
            } else {
                const MemoryCapacityResult mr = memory_capacity_score(
                    fm, bits[c], s.rc.task == ReservoirTask::stm ? MemoryTask::stm : MemoryTask::parity,
                    s.rc.max_delay, rc_configs[c].washout_frames, s.rc.split);
                res["score"] = mr.capacity;
                res["capacity"] = mr.capacity;
                res["r2"] = mr.r2;
            }
        }
        MacCounters mc = d.per_cluster[c];
        if (s.kind == ClusterKind::rc)
            mc.output_macs = mc.flips_total * (s.rc.task == ReservoirTask::narma10 ? 1 : s.rc.max_delay);
        res["macs"] = mac_json(mc);
        cc["result"] = res;
        clusters.push_back(std::move(cc));
    }
    cfg["clusters"] = clusters.size();
    json report;
    report["mode"] = "dual";
    report["config"] = cfg;
    report["seed"] = seed;
    report["steps"] = d.steps;
    report["clusters"] = clusters;
    report["macs"] = mac_json(d.shared);
    report["run_wall_clock_s"] = run_s;
    report["wall_clock_s"] = elapsed(t0);
    write_report(report, a.out, out);
    return kOk;
}

}  // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Chaotic Boltzmann machine simulator: annealing, reservoir computing and dual runs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "cbm 0.1.0");

    SolveArgs solve;
    auto* s = app.add_subcommand("solve", "anneal a max-cut edge list or QUBO JSON instance");
    s->add_option("--instance", solve.instance, "max-cut edge list, or QUBO when the name ends in .json")->required();
    s->add_option("--steps", solve.sa.steps, "annealing steps")->check(CLI::PositiveNumber);
    s->add_option("--t-start", solve.sa.t_start, "initial temperature")->check(CLI::PositiveNumber);
    s->add_option("--t-end", solve.sa.t_end, "final temperature")->check(CLI::PositiveNumber);
    s->add_option("--weight-bits", solve.weight_bits, "coupling code width (default: smallest that fits)")->check(CLI::Range(2, 16));
    s->add_option("--seed", solve.seed, "base seed; replica k uses seed + k");
    s->add_option("--replicas", solve.replicas, "independent anneals")->check(CLI::PositiveNumber);
    s->add_option("--sample-every", solve.sa.sample_every, "trace sampling period in steps");
    s->add_option("--out", solve.out, "JSON report path (default: stdout)");
    s->add_option("--trace-csv", solve.trace_csv, "energy trace CSV path");

    ReservoirArgs res;
    std::uint64_t res_seed = 0;
    auto* r = app.add_subcommand("reservoir", "run a reservoir benchmark (stm, pc, narma10)");
    r->add_option("--task", res.task, "stm | pc | narma10")->check(CLI::IsMember({"stm", "pc", "narma10"}));
    r->add_option("--config", res.config, "task config file (key = value)");
    r->add_option("--neurons,--size", res.neurons, "reservoir size")->check(CLI::PositiveNumber);
    r->add_option("--frame-steps", res.frame_steps, "machine steps per input frame")->check(CLI::PositiveNumber);
    r->add_option("--weight-bits", res.weight_bits, "recurrent code width")->check(CLI::Range(2, 16));
    auto* rs = r->add_option("--seed", res_seed, "first seed");
    r->add_option("--replicas", res.replicas, "number of seeds")->check(CLI::PositiveNumber);
    r->add_option("--max-delay", res.max_delay, "largest delay for memory tasks")->check(CLI::PositiveNumber);
    r->add_option("--train", res.train, "training frames")->check(CLI::PositiveNumber);
    r->add_option("--test", res.test, "test frames")->check(CLI::PositiveNumber);
    r->add_option("--out", res.out, "JSON report path (default: stdout)");

    DualArgs dual;
    std::uint64_t dual_seed = 0;
    auto* d = app.add_subcommand("dual", "run SA and RC clusters on one partitioned machine");
    d->add_option("--config", dual.config, "partition config file (key = value)")->required();
    auto* ds = d->add_option("--seed", dual_seed, "master seed (overrides the config)");
    d->add_option("--out", dual.out, "JSON report path (default: stdout)");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "anneal a random complete +/-1 graph and report MAC statistics");
    b->add_option("--neurons", bench.neurons, "graph size")->check(CLI::PositiveNumber);
    b->add_option("--steps", bench.sa.steps, "annealing steps")->check(CLI::PositiveNumber);
    b->add_option("--t-start", bench.sa.t_start, "initial temperature")->check(CLI::PositiveNumber);
    b->add_option("--t-end", bench.sa.t_end, "final temperature")->check(CLI::PositiveNumber);
    b->add_option("--weight-bits", bench.weight_bits, "coupling code width")->check(CLI::Range(2, 16));
    b->add_option("--seed", bench.seed, "base seed");
    b->add_option("--replicas", bench.replicas, "independent anneals")->check(CLI::PositiveNumber);
    b->add_option("--out", bench.out, "JSON report path (default: stdout)");
    b->add_option("--trace-csv", bench.trace_csv, "energy trace CSV path");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("cbm");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return kUsage;
    }

    try {
        if (*s) return cmd_solve(solve, out);
        if (*r) {
            if (rs->count()) res.seed = res_seed;
            return cmd_reservoir(res, out);
        }
        if (*d) {
            if (ds->count()) dual.seed = dual_seed;
            return cmd_dual(dual, out);
        }
        return cmd_bench(bench, out);
    } catch (const FileError& e) {
        err << "file error: " << e.what() << "\n";
        return kFile;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << "\n";
        return kInput;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kRuntime;
    }
}

}  // namespace cbm::cli
