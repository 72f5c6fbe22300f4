#include "cbm/sa.hpp"

#include "cbm/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

namespace cbm {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& what) {
    throw ParseError("line " + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::int64_t to_int(std::string_view tok, std::size_t line) {
    std::int64_t v = 0;
    const auto* end = tok.data() + tok.size();
    const char* begin = tok.data();
    if (!tok.empty() && tok.front() == '+') ++begin;
    auto [p, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || p != end) fail(line, "not an integer: '" + std::string(tok) + "'");
    return v;
}

}  // namespace

Graph parse_maxcut(std::string_view text) {
    Graph g;
    std::size_t line_no = 0;
    std::size_t expected = 0;
    bool have_header = false;
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (!have_header) {
            if (toks.size() != 2) fail(line_no, "expected header 'n m'");
            const auto n = to_int(toks[0], line_no);
            const auto m = to_int(toks[1], line_no);
            if (n < 1) fail(line_no, "vertex count must be positive");
            if (m < 0) fail(line_no, "edge count must be nonnegative");
            g.n = static_cast<std::size_t>(n);
            expected = static_cast<std::size_t>(m);
            have_header = true;
            continue;
        }
        if (toks.size() != 3) fail(line_no, "expected 'i j w'");
        const auto a = to_int(toks[0], line_no);
        const auto b = to_int(toks[1], line_no);
        const auto w = to_int(toks[2], line_no);
        const auto n = static_cast<std::int64_t>(g.n);
        if (a < 1 || a > n || b < 1 || b > n)
            fail(line_no, "vertex out of range 1.." + std::to_string(g.n));
        if (a == b) fail(line_no, "self-loop on vertex " + std::to_string(a));
        if (w < INT32_MIN || w > INT32_MAX) fail(line_no, "weight out of range");
        const auto i = static_cast<std::uint32_t>(std::min(a, b) - 1);
        const auto j = static_cast<std::uint32_t>(std::max(a, b) - 1);
        if (!seen.emplace(i, j).second)
            fail(line_no, "duplicate edge " + std::to_string(a) + "-" + std::to_string(b));
        if (g.edges.size() == expected) fail(line_no, "more edges than the header declares");
        g.edges.push_back({i, j, static_cast<std::int32_t>(w)});
    }
    if (!have_header) throw ParseError("empty max-cut file");
    if (g.edges.size() != expected)
        throw ParseError("header declares " + std::to_string(expected) + " edges, found " +
                         std::to_string(g.edges.size()));
    return g;
}

Graph load_maxcut(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_maxcut(ss.str());
}

Graph random_complete_pm1(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Graph g{n, {}};
    g.edges.reserve(n * (n - 1) / 2);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
            g.edges.push_back({i, j, (rng() >> 63) ? 1 : -1});
    return g;
}

Graph random_graph(std::size_t n, double density, std::uint64_t seed, bool signed_weights) {
    Rng rng(seed);
    Graph g{n, {}};
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j) {
            const bool present = uniform01(rng) < density;
            const bool negative = (rng() >> 63) != 0;
            if (present) g.edges.push_back({i, j, signed_weights && negative ? -1 : 1});
        }
    return g;
}

Qubo parse_qubo_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("QUBO JSON: ") + e.what());
    }
    Qubo q;
    try {
        const auto n = j.at("n").get<std::int64_t>();
        if (n < 1) throw ParseError("QUBO n must be positive");
        q.n = static_cast<std::size_t>(n);
        q.linear.assign(q.n, 0);
        if (j.contains("linear")) {
            const auto lin = j.at("linear").get<std::vector<std::int32_t>>();
            if (lin.size() != q.n) throw ParseError("QUBO linear term count differs from n");
            q.linear = lin;
        }
        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        if (j.contains("quadratic")) {
            for (const auto& t : j.at("quadratic")) {
                const auto a = t.at(0).get<std::int64_t>();
                const auto b = t.at(1).get<std::int64_t>();
                const auto v = t.at(2).get<std::int32_t>();
                if (a < 0 || b < 0 || a >= n || b >= n || a == b)
                    throw ParseError("QUBO quadratic index out of range");
                const auto i = static_cast<std::uint32_t>(std::min(a, b));
                const auto k = static_cast<std::uint32_t>(std::max(a, b));
                if (!seen.emplace(i, k).second) throw ParseError("QUBO duplicate quadratic term");
                q.quadratic.push_back({i, k, v});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("QUBO JSON: ") + e.what());
    }
    return q;
}

WeightMatrix qubo_to_cbm(const Qubo& q, int weight_bits) {
    WeightMatrix w(q.n, weight_bits, 1);
    for (const auto& e : q.quadratic) w.set_code(e.i, e.j, -e.w);
    for (std::size_t i = 0; i < q.n; ++i) w.set_bias(i, -q.linear[i]);
    return w;
}

std::int64_t qubo_objective(const Qubo& q, std::span<const std::uint8_t> x) {
    if (x.size() != q.n) throw std::invalid_argument("assignment length differs from QUBO size");
    std::int64_t f = 0;
    for (std::size_t i = 0; i < q.n; ++i)
        if (x[i]) f += q.linear[i];
    for (const auto& e : q.quadratic)
        if (x[e.i] && x[e.j]) f += e.w;
    return f;
}

WeightMatrix maxcut_to_cbm(const Graph& g, int weight_bits) {
    WeightMatrix w(g.n, weight_bits, 2);
    std::vector<std::int64_t> bias(g.n, 0);
    for (const auto& e : g.edges) {
        if (std::abs(static_cast<std::int64_t>(e.w)) > w.max_code())
            throw std::invalid_argument("edge weight " + std::to_string(e.w) +
                                        " does not fit in " + std::to_string(weight_bits) +
                                        "-bit couplings");
        w.set_code(e.i, e.j, -e.w);
        bias[e.i] += e.w;
        bias[e.j] += e.w;
    }
    for (std::size_t i = 0; i < g.n; ++i) w.set_bias(i, static_cast<std::int32_t>(bias[i]));
    return w;
}

std::int64_t cut_value(const Graph& g, std::span<const std::uint8_t> a) {
    if (a.size() != g.n)
        throw std::invalid_argument("assignment has " + std::to_string(a.size()) +
                                    " entries, graph has " + std::to_string(g.n) + " vertices");
    std::int64_t c = 0;
    for (const auto& e : g.edges)
        if ((a[e.i] != 0) != (a[e.j] != 0)) c += e.w;
    return c;
}

Schedule::Schedule(std::vector<ScheduleSegment> segments) : segments_(std::move(segments)) {
    double prev = INFINITY;
    for (const auto& s : segments_) {
        if (s.steps < 1) throw std::invalid_argument("schedule segment must have at least one step");
        const double t = s.temp.effective();
        if (t > prev) throw std::invalid_argument("schedule temperature must be nonincreasing");
        prev = t;
        total_ += s.steps;
    }
}

Schedule Schedule::constant(const Temperature& t, std::uint64_t steps) {
    return Schedule({{steps, t, t.effective()}});
}

Schedule make_schedule(double t_start, double t_end, std::uint64_t steps) {
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    if (!(t_start >= t_end)) throw std::invalid_argument("t_start must be >= t_end");
    if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
    std::vector<ScheduleSegment> segs;
    segs.reserve(steps);
    const double ratio = t_end / t_start;
    for (std::uint64_t k = 0; k < steps; ++k) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
        const double t = k + 1 == steps && steps > 1 ? t_end : t_start * std::pow(ratio, frac);
        segs.push_back({1, Temperature::snap(t), t});
    }
    return Schedule(std::move(segs));
}

SolutionTracker::SolutionTracker(std::uint64_t seed, std::uint64_t sample_every)
    : sample_every_(sample_every) {
    sol_.seed = seed;
}

void SolutionTracker::start(std::int64_t energy, std::span<const std::uint8_t> s) {
    energy_ = energy;
    sol_.best_energy = energy;
    sol_.assignment.assign(s.begin(), s.end());
}

void SolutionTracker::observe(std::uint64_t step, std::size_t flips, std::int64_t energy_delta,
                              std::span<const std::uint8_t> s) {
    energy_ += energy_delta;
    if (energy_ < sol_.best_energy) {
        sol_.best_energy = energy_;
        std::copy(s.begin(), s.end(), sol_.assignment.begin());
    }
    if (sample_every_ != 0 && step % sample_every_ == 0)
        sol_.trace.push_back({step, flips, energy_, sol_.best_energy});
}

SaSolution SolutionTracker::solution(const MacCounters& counters) const {
    SaSolution out = sol_;
    out.cut_value = -out.best_energy;
    out.counters = counters;
    return out;
}

Annealer::Annealer(const WeightMatrix& weights, const Schedule& schedule, std::uint64_t seed,
                   AnnealOptions opts)
    : weights_(&weights),
      schedule_(&schedule),
      opts_(opts),
      state_(init_state(weights, seed, opts.dynamics)),
      tracker_(seed, opts.sample_every) {
    tracker_.start(energy(state_, weights), state_.s);
}

bool Annealer::step() {
    const auto& segs = schedule_->segments();
    while (segment_ < segs.size() && in_segment_ == segs[segment_].steps) {
        ++segment_;
        in_segment_ = 0;
    }
    if (segment_ == segs.size()) return false;
    const auto r = scheduled_step(state_, *weights_, segs[segment_].temp, opts_.dynamics,
                                  counters_, {}, opts_.accounting);
    ++in_segment_;
    tracker_.observe(state_.step, r.flips.size(), r.energy_delta, state_.s);
    return true;
}

SaSolution anneal(const WeightMatrix& weights, const Schedule& schedule, std::uint64_t seed,
                  const AnnealOptions& opts) {
    Annealer a(weights, schedule, seed, opts);
    a.run();
    return a.result();
}

std::vector<SaSolution> anneal_replicas(const WeightMatrix& weights, const Schedule& schedule,
                                        std::span<const std::uint64_t> seeds,
                                        const AnnealOptions& opts, unsigned threads) {
    std::vector<SaSolution> out(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < seeds.size(); k = next++)
            out[k] = anneal(weights, schedule, seeds[k], opts);
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    std::stable_sort(out.begin(), out.end(),
                     [](const SaSolution& a, const SaSolution& b) { return a.seed < b.seed; });
    return out;
}

SaSolution solve_maxcut(const Graph& g, const Schedule& schedule, std::uint64_t seed,
                        const AnnealOptions& opts, int weight_bits) {
    const WeightMatrix w = maxcut_to_cbm(g, weight_bits);
    SaSolution sol = anneal(w, schedule, seed, opts);
    const std::int64_t cut = cut_value(g, sol.assignment);
    if (cut != sol.cut_value)
        throw std::logic_error("tracked cut " + std::to_string(sol.cut_value) +
                               " differs from recomputed cut " + std::to_string(cut));
    return sol;
}

}  // namespace cbm
