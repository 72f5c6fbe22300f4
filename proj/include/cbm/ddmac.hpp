#pragma once

// Delta-driven multiply-accumulate scheduling: local fields are maintained
// from flip events only, and every multiply-accumulate is counted against the
// dense N^2-per-step baseline.

#include "cbm/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cbm {

struct MacCounters {
    std::uint64_t macs_total = 0;
    std::uint64_t macs_dense_equivalent = 0;
    std::uint64_t steps = 0;
    std::uint64_t flips_total = 0;
    std::uint64_t neurons = 0;       ///< N used for the flip-rate denominator
    std::uint64_t input_macs = 0;    ///< reservoir input drive updates
    std::uint64_t output_macs = 0;   ///< readout accumulator updates

    friend bool operator==(const MacCounters&, const MacCounters&) = default;
};

enum class MacAccounting {
    dense,   ///< a flip costs N MACs
    masked,  ///< a flip costs its connected fan-out
};

/// Folds one step with `flips` flips and `macs` executed MACs into `c`.
void account_step(MacCounters& c, std::size_t n, std::size_t flips, std::uint64_t macs);

/// Adds the flipped neuron's fan-out to Z and returns the energy change.
/// No accounting; the flip must already be committed to S.
std::int64_t propagate_flip(CbmState& state, const WeightMatrix& weights, const FlipEvent& flip);

/// Updates Z from the flips of the step that just ended and accounts the
/// MACs. Returns the resulting change in energy (flips applied in list order).
/// Throws if the flips do not belong to the step just completed.
std::int64_t apply_flips(CbmState& state, const WeightMatrix& weights,
                         std::span<const FlipEvent> flips, MacCounters& counters,
                         MacAccounting accounting = MacAccounting::dense);

struct StepResult {
    std::vector<FlipEvent> flips;
    std::int64_t energy_delta = 0;
};

/// machine_step followed by apply_flips. With cfg.sequential set, each flip's
/// fan-out is applied before the next neuron integrates.
StepResult scheduled_step(CbmState& state, const WeightMatrix& weights, const Temperature& temp,
                          const DynamicsConfig& cfg, MacCounters& counters,
                          std::span<const std::int32_t> drive = {},
                          MacAccounting accounting = MacAccounting::dense);

struct MacReport {
    double avg_flip_rate = 0;
    double macs_per_step = 0;
    double macs_per_step_per_neuron = 0;
    double reduction_fraction = 0;
};

/// Throws std::invalid_argument when no steps were counted.
MacReport mac_report(const MacCounters& counters, std::size_t n);
MacReport mac_report(const MacCounters& counters);

}  // namespace cbm
