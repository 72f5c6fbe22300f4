#include "cbm/core.hpp"

#include "cbm/rng.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cbm {

WeightMatrix::WeightMatrix(std::size_t n, int weight_bits, int scale)
    : n_(n), weight_bits_(weight_bits), scale_(scale) {
    if (n == 0) throw std::invalid_argument("weight matrix needs at least one neuron");
    if (weight_bits < 2 || weight_bits > 16)
        throw std::invalid_argument("weight_bits must be in [2, 16]");
    if (scale < 1) throw std::invalid_argument("weight scale must be positive");
    w_.assign(n * n, 0);
    bias_.assign(n, 0);
    mask_.assign(n * n, 1);
    for (std::size_t i = 0; i < n; ++i) mask_[i * n + i] = 0;
    fan_out_.assign(n, n - 1);
}

void WeightMatrix::set_code(std::size_t i, std::size_t j, int code) {
    if (i >= n_ || j >= n_) throw std::out_of_range("weight index out of range");
    if (i == j) {
        if (code != 0) throw std::invalid_argument("self-coupling must be zero");
        return;
    }
    if (code > max_code() || code < -max_code())
        throw std::invalid_argument("weight code " + std::to_string(code) + " exceeds " +
                                    std::to_string(weight_bits_) + "-bit range");
    if (!connected(i, j) && code != 0)
        throw std::invalid_argument("cannot set weight on a disconnected pair");
    w_[i * n_ + j] = w_[j * n_ + i] = code * scale_;
}

void WeightMatrix::disconnect(std::size_t i, std::size_t j) {
    if (i >= n_ || j >= n_) throw std::out_of_range("weight index out of range");
    if (i == j || !connected(i, j)) return;
    if (weight(i, j) != 0) throw std::invalid_argument("disconnecting a nonzero weight");
    mask_[i * n_ + j] = mask_[j * n_ + i] = 0;
    --fan_out_[i];
    --fan_out_[j];
}

CbmState init_state(std::size_t n, std::uint64_t seed, const DynamicsConfig& cfg) {
    if (n == 0) throw std::invalid_argument("cannot initialize an empty machine");
    Rng rng(seed);
    CbmState st;
    st.x.resize(n);
    st.s.resize(n);
    st.z.assign(n, 0);
    for (auto& x : st.x) x = static_cast<std::uint32_t>(rng() >> (64 - cfg.x_frac_bits));
    for (auto& s : st.s) s = static_cast<std::uint8_t>(rng() >> 63);
    return st;
}

CbmState init_state(const WeightMatrix& weights, std::uint64_t seed, const DynamicsConfig& cfg) {
    CbmState st = init_state(weights.size(), seed, cfg);
    recompute_fields(st, weights);
    return st;
}

std::vector<std::int32_t> dense_fields(const WeightMatrix& weights,
                                       std::span<const std::uint8_t> s) {
    if (s.size() != weights.size()) throw std::invalid_argument("state/weight size mismatch");
    std::vector<std::int32_t> z(weights.biases().begin(), weights.biases().end());
    for (std::size_t j = 0; j < s.size(); ++j) {
        if (!s[j]) continue;
        const auto r = weights.row(j);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += r[i];
    }
    return z;
}

void recompute_fields(CbmState& state, const WeightMatrix& weights) {
    state.z = dense_fields(weights, state.s);
}

namespace {

struct Kernel {
    const Exp2Table* table;
    int inc_shift;
    std::uint32_t one;
    bool carry;

    explicit Kernel(const DynamicsConfig& cfg)
        : table(cfg.exp.frac_bits == ExpFormat{}.frac_bits ? &Exp2Table::default_table()
                                                             : nullptr),
          inc_shift(cfg.dt_exp + cfg.x_frac_bits),
          one(cfg.x_one()),
          carry(cfg.carry_residual) {}

    // Returns true when the neuron reached its boundary this step.
    bool advance(std::uint32_t& x, bool s, std::int64_t z, const Temperature& temp,
                 const ExpFormat& fmt) const {
        const FixedExp e = atms_scale(z, s, temp, fmt);
        const std::uint64_t inc = table->from_raw(e.raw).scaled(inc_shift);
        if (!s) {
            const std::uint64_t nx = std::uint64_t{x} + inc;
            if (nx >= one) {
                x = carry ? one - static_cast<std::uint32_t>(std::min<std::uint64_t>(nx - one, one))
                          : one;
                return true;
            }
            x = static_cast<std::uint32_t>(nx);
            return false;
        }
        if (inc >= x) {
            x = carry ? static_cast<std::uint32_t>(std::min<std::uint64_t>(inc - x, one)) : 0;
            return true;
        }
        x -= static_cast<std::uint32_t>(inc);
        return false;
    }
};

// Kernels for non-default exponent precision own their table.
struct KernelHolder {
    std::optional<Exp2Table> own;
    Kernel k;
    explicit KernelHolder(const DynamicsConfig& cfg) : k(cfg) {
        if (!k.table) {
            own.emplace(cfg.exp.frac_bits);
            k.table = &*own;
        }
    }
};

}  // namespace

std::optional<FlipEvent> neuron_step(CbmState& state, std::size_t i, const Temperature& temp,
                                     const DynamicsConfig& cfg, std::int32_t drive) {
    if (i >= state.size()) throw std::out_of_range("neuron index out of range");
    const KernelHolder h(cfg);
    const bool s = state.s[i] != 0;
    if (h.k.advance(state.x[i], s, std::int64_t{state.z[i]} + drive, temp, cfg.exp))
        return FlipEvent{static_cast<std::uint32_t>(i), !s, state.step};
    return std::nullopt;
}

void integrate(CbmState& state, std::span<const std::uint32_t> neurons, const Temperature& temp,
               const DynamicsConfig& cfg, std::span<const std::int32_t> drive,
               std::vector<FlipEvent>& flips) {
    const KernelHolder h(cfg);
    const bool driven = !drive.empty();
    if (driven && drive.size() != state.size())
        throw std::invalid_argument("drive vector size mismatch");
    for (const std::uint32_t i : neurons) {
        const bool s = state.s[i] != 0;
        const std::int64_t z = std::int64_t{state.z[i]} + (driven ? drive[i] : 0);
        if (h.k.advance(state.x[i], s, z, temp, cfg.exp)) flips.push_back({i, !s, state.step});
    }
}

void integrate(CbmState& state, std::size_t first, std::size_t last, const Temperature& temp,
               const DynamicsConfig& cfg, std::span<const std::int32_t> drive,
               std::vector<FlipEvent>& flips) {
    if (first > last || last > state.size()) throw std::out_of_range("neuron range out of bounds");
    const KernelHolder h(cfg);
    const bool driven = !drive.empty();
    if (driven && drive.size() != state.size())
        throw std::invalid_argument("drive vector size mismatch");
    std::uint32_t* x = state.x.data();
    const std::uint8_t* sv = state.s.data();
    const std::int32_t* zv = state.z.data();
    for (std::size_t i = first; i < last; ++i) {
        const bool s = sv[i] != 0;
        const std::int64_t z = std::int64_t{zv[i]} + (driven ? drive[i] : 0);
        if (h.k.advance(x[i], s, z, temp, cfg.exp))
            flips.push_back({static_cast<std::uint32_t>(i), !s, state.step});
    }
}

void commit_flips(CbmState& state, std::span<const FlipEvent> flips) {
    for (const auto& f : flips) state.s[f.neuron] = f.new_s ? 1 : 0;
}

std::vector<FlipEvent> machine_step(CbmState& state, const WeightMatrix& weights,
                                    const Temperature& temp, const DynamicsConfig& cfg,
                                    std::span<const std::int32_t> drive) {
    if (state.size() != weights.size())
        throw std::invalid_argument("state has " + std::to_string(state.size()) +
                                    " neurons, weights have " + std::to_string(weights.size()));
    std::vector<FlipEvent> flips;
    integrate(state, 0, state.size(), temp, cfg, drive, flips);
    commit_flips(state, flips);
    ++state.step;
    return flips;
}

std::int64_t energy(std::span<const std::uint8_t> s, const WeightMatrix& weights) {
    if (s.size() != weights.size()) throw std::invalid_argument("state/weight size mismatch");
    std::int64_t e = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s[i]) continue;
        e -= weights.bias(i);
        const auto r = weights.row(i);
        for (std::size_t j = i + 1; j < s.size(); ++j)
            if (s[j]) e -= r[j];
    }
    return e;
}

std::int64_t energy(const CbmState& state, const WeightMatrix& weights) {
    return energy(state.s, weights);
}

}  // namespace cbm
