#pragma once

// Test-only references: a dense, non-incremental simulator of the neuron
// dynamics and exhaustive max-cut.

#include "cbm/core.hpp"
#include "cbm/sa.hpp"

#include <cstdint>
#include <vector>

namespace cbm::oracle {

enum class Precision {
    mirror,  ///< same fixed-point grid as the engine, computed by a separate route
    real,    ///< double-precision X, exponent and 2^x
};

struct PrecisionProfile {
    Precision mode = Precision::mirror;
    DynamicsConfig dynamics{};
    /// Real mode only: use each segment's unsnapped target temperature.
    bool use_target_temperature = false;
};

struct DenseFrame {
    std::uint64_t step = 0;
    std::vector<double> x;
    std::vector<std::uint8_t> s;
    std::vector<std::int32_t> z;
};

struct DenseTrace {
    std::vector<DenseFrame> frames;                 ///< every `record_every` steps (and step 0)
    std::vector<std::vector<std::uint32_t>> flips;  ///< flipped neurons per step, ascending
    std::vector<std::int64_t> energies;             ///< energy after each step
    std::int64_t best_energy = 0;
    std::vector<std::uint8_t> best_s;
};

/// Runs `steps` steps of `schedule` with Z recomputed from scratch every step.
/// Throws for N > 4096 or when the schedule is shorter than `steps`.
DenseTrace dense_simulate(const WeightMatrix& weights, const Schedule& schedule,
                          std::uint64_t seed, std::uint64_t steps,
                          const PrecisionProfile& profile, std::uint64_t record_every = 0);

struct MaxcutOptimum {
    std::int64_t value = 0;
    std::vector<std::uint8_t> assignment;
};

/// Exhaustive search with vertex 0 fixed to side 0. Throws for n > 24.
MaxcutOptimum brute_force_maxcut(const Graph& g);

}  // namespace cbm::oracle
