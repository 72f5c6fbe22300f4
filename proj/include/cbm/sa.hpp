#pragma once

// Combinatorial optimization on the machine: max-cut / QUBO ingestion,
// mapping to couplings, annealing schedules and solution evaluation.

#include "cbm/core.hpp"
#include "cbm/ddmac.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cbm {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Edge {
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    std::int32_t w = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected weighted graph with 0 <= i < j < n and no duplicate pairs.
struct Graph {
    std::size_t n = 0;
    std::vector<Edge> edges;
};

/// Parses "n m" followed by m lines "i j w" (1-indexed vertices).
Graph parse_maxcut(std::string_view text);
Graph load_maxcut(const std::string& path);

/// Complete graph with i.i.d. +/-1 weights.
Graph random_complete_pm1(std::size_t n, std::uint64_t seed);
/// Each pair present with probability `density`, weight +/-1 (or +1 when `signed_weights` is false).
Graph random_graph(std::size_t n, double density, std::uint64_t seed, bool signed_weights = true);

/// Minimize sum_i linear_i x_i + sum_(i,j,v) v x_i x_j over x in {0,1}^n.
struct Qubo {
    std::size_t n = 0;
    std::vector<std::int32_t> linear;
    std::vector<Edge> quadratic;
};

/// {"n": .., "linear": [..], "quadratic": [[i, j, v], ..]} with 0-indexed i != j.
Qubo parse_qubo_json(std::string_view text);
/// Energy of the mapped machine equals the QUBO objective.
WeightMatrix qubo_to_cbm(const Qubo& q, int weight_bits);
std::int64_t qubo_objective(const Qubo& q, std::span<const std::uint8_t> x);

/// Couplings W_ij = -2 w_ij (codes -w_ij at scale 2) and biases b_i = sum_j w_ij,
/// so that energy(S) = -cut(S) for every assignment.
WeightMatrix maxcut_to_cbm(const Graph& g, int weight_bits = 2);

std::int64_t cut_value(const Graph& g, std::span<const std::uint8_t> assignment);

struct ScheduleSegment {
    std::uint64_t steps = 1;
    Temperature temp;
    double target = 1.0;  ///< unsnapped temperature the segment approximates
};

class Schedule {
public:
    Schedule() = default;
    /// Throws when a segment is empty or effective temperature increases.
    explicit Schedule(std::vector<ScheduleSegment> segments);

    static Schedule constant(const Temperature& t, std::uint64_t steps);

    const std::vector<ScheduleSegment>& segments() const { return segments_; }
    std::uint64_t total_steps() const { return total_; }

private:
    std::vector<ScheduleSegment> segments_;
    std::uint64_t total_ = 0;
};

/// Geometric interpolation from t_start to t_end over `steps` points, each
/// snapped to the nearest representable (T0, alpha) pair.
Schedule make_schedule(double t_start, double t_end, std::uint64_t steps);

struct TraceSample {
    std::uint64_t step = 0;
    std::uint64_t flips = 0;  ///< flips during this step
    std::int64_t energy = 0;
    std::int64_t best_energy = 0;
};

struct SaSolution {
    std::vector<std::uint8_t> assignment;  ///< best-seen S
    std::int64_t best_energy = 0;
    /// -best_energy; the cut value when the weights come from maxcut_to_cbm.
    std::int64_t cut_value = 0;
    std::vector<TraceSample> trace;
    MacCounters counters;
    std::uint64_t seed = 0;
};

struct AnnealOptions {
    DynamicsConfig dynamics{};
    std::uint64_t sample_every = 0;  ///< 0 disables the trace
    MacAccounting accounting = MacAccounting::dense;
};

/// Tracks best-seen energy/assignment and trace samples for one SA problem.
class SolutionTracker {
public:
    SolutionTracker(std::uint64_t seed, std::uint64_t sample_every);
    void start(std::int64_t energy, std::span<const std::uint8_t> s);
    /// Call after the step's flips were applied; `step` is the completed step count.
    void observe(std::uint64_t step, std::size_t flips, std::int64_t energy_delta,
                 std::span<const std::uint8_t> s);

    std::int64_t energy() const { return energy_; }
    SaSolution solution(const MacCounters& counters) const;

private:
    SaSolution sol_;
    std::uint64_t sample_every_;
    std::int64_t energy_ = 0;
};

/// Best-seen tracking annealer over a fully connected machine.
class Annealer {
public:
    Annealer(const WeightMatrix& weights, const Schedule& schedule, std::uint64_t seed,
             AnnealOptions opts = {});

    /// Runs one step; returns false once the schedule is exhausted.
    bool step();
    void run() { while (step()) {} }

    const CbmState& state() const { return state_; }
    std::int64_t current_energy() const { return tracker_.energy(); }
    SaSolution result() const { return tracker_.solution(counters_); }

private:
    const WeightMatrix* weights_;
    const Schedule* schedule_;
    AnnealOptions opts_;
    CbmState state_;
    MacCounters counters_;
    SolutionTracker tracker_;
    std::size_t segment_ = 0;
    std::uint64_t in_segment_ = 0;
};

SaSolution anneal(const WeightMatrix& weights, const Schedule& schedule, std::uint64_t seed,
                  const AnnealOptions& opts = {});

/// One anneal per seed, spread over up to `threads` threads; results in seed order.
std::vector<SaSolution> anneal_replicas(const WeightMatrix& weights, const Schedule& schedule,
                                        std::span<const std::uint64_t> seeds,
                                        const AnnealOptions& opts, unsigned threads);

/// anneal on maxcut_to_cbm(g) with the cut recomputed from the assignment.
/// Throws std::logic_error if the tracked and recomputed cut disagree.
SaSolution solve_maxcut(const Graph& g, const Schedule& schedule, std::uint64_t seed,
                        const AnnealOptions& opts = {}, int weight_bits = 2);

}  // namespace cbm
