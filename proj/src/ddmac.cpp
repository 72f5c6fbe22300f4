#include "cbm/ddmac.hpp"

#include <stdexcept>

namespace cbm {

void account_step(MacCounters& c, std::size_t n, std::size_t flips, std::uint64_t macs) {
    c.neurons = n;
    c.steps += 1;
    c.flips_total += flips;
    c.macs_total += macs;
    c.macs_dense_equivalent += static_cast<std::uint64_t>(n) * n;
}

namespace {

std::int64_t fan_out(CbmState& state, const WeightMatrix& weights, const FlipEvent& f) {
    const int d = f.new_s ? 1 : -1;
    const std::int64_t de = -static_cast<std::int64_t>(d) * state.z[f.neuron];
    const auto r = weights.row(f.neuron);
    std::int32_t* z = state.z.data();
    const std::size_t n = r.size();
    if (d > 0) {
        for (std::size_t i = 0; i < n; ++i) z[i] += r[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) z[i] -= r[i];
    }
    return de;
}

}  // namespace

std::int64_t propagate_flip(CbmState& state, const WeightMatrix& weights, const FlipEvent& flip) {
    return fan_out(state, weights, flip);
}

namespace {

std::uint64_t flip_cost(const WeightMatrix& weights, const FlipEvent& f, MacAccounting a) {
    return a == MacAccounting::dense ? weights.size() : weights.fan_out(f.neuron);
}

}  // namespace

std::int64_t apply_flips(CbmState& state, const WeightMatrix& weights,
                         std::span<const FlipEvent> flips, MacCounters& counters,
                         MacAccounting accounting) {
    if (state.size() != weights.size()) throw std::invalid_argument("state/weight size mismatch");
    std::int64_t de = 0;
    std::uint64_t macs = 0;
    for (const auto& f : flips) {
        if (f.step + 1 != state.step)
            throw std::invalid_argument("stale flip list: flip from step " +
                                        std::to_string(f.step) + " applied at step " +
                                        std::to_string(state.step));
        if (state.s[f.neuron] != (f.new_s ? 1 : 0))
            throw std::invalid_argument("flip was not committed to the state");
        de += fan_out(state, weights, f);
        macs += flip_cost(weights, f, accounting);
    }
    account_step(counters, weights.size(), flips.size(), macs);
    return de;
}

StepResult scheduled_step(CbmState& state, const WeightMatrix& weights, const Temperature& temp,
                          const DynamicsConfig& cfg, MacCounters& counters,
                          std::span<const std::int32_t> drive, MacAccounting accounting) {
    StepResult out;
    if (!cfg.sequential) {
        out.flips = machine_step(state, weights, temp, cfg, drive);
        out.energy_delta = apply_flips(state, weights, out.flips, counters, accounting);
        return out;
    }
    if (state.size() != weights.size()) throw std::invalid_argument("state/weight size mismatch");
    std::uint64_t macs = 0;
    for (std::uint32_t i = 0; i < state.size(); ++i) {
        const std::int32_t d = drive.empty() ? 0 : drive[i];
        if (auto f = neuron_step(state, i, temp, cfg, d)) {
            state.s[i] = f->new_s ? 1 : 0;
            out.energy_delta += fan_out(state, weights, *f);
            macs += flip_cost(weights, *f, accounting);
            out.flips.push_back(*f);
        }
    }
    ++state.step;
    account_step(counters, weights.size(), out.flips.size(), macs);
    return out;
}

MacReport mac_report(const MacCounters& c, std::size_t n) {
    if (c.steps == 0) throw std::invalid_argument("MAC report needs at least one step");
    if (n == 0) throw std::invalid_argument("MAC report needs a positive neuron count");
    MacReport r;
    const double steps = static_cast<double>(c.steps);
    r.avg_flip_rate = static_cast<double>(c.flips_total) / (steps * static_cast<double>(n));
    r.macs_per_step = static_cast<double>(c.macs_total) / steps;
    r.macs_per_step_per_neuron = r.macs_per_step / static_cast<double>(n);
    r.reduction_fraction =
        c.macs_dense_equivalent == 0
            ? 1.0
            : 1.0 - static_cast<double>(c.macs_total) / static_cast<double>(c.macs_dense_equivalent);
    return r;
}

MacReport mac_report(const MacCounters& c) { return mac_report(c, c.neurons); }

}  // namespace cbm
