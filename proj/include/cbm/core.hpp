#pragma once

// Discrete-time chaotic Boltzmann machine.
//
// Each neuron i carries an internal state X_i in [0, 1] (unsigned fixed
// point), a binary output S_i and an integer local field
// Z_i = b_i + sum_j W_ij S_j. Per step, X_i moves toward the boundary
// opposite to S_i at rate dt * 2^((1 - 2 S_i) Z_i / T); reaching the
// boundary flips S_i.

#include "cbm/atms.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cbm {

/// Symmetric integer couplings and biases with a connectivity mask.
///
/// Couplings are stored as signed codes of `weight_bits` bits (|code| <
/// 2^(weight_bits - 1)) times an integer `scale`, which lets an encoding
/// that needs even weights keep the narrow code width.
class WeightMatrix {
public:
    WeightMatrix() = default;
    /// All pairs start connected with zero weight.
    explicit WeightMatrix(std::size_t n, int weight_bits = 2, int scale = 1);

    std::size_t size() const { return n_; }
    int weight_bits() const { return weight_bits_; }
    int scale() const { return scale_; }

    /// Sets W_ij = W_ji = scale * code. Throws on diagonal, range or masked pairs.
    void set_code(std::size_t i, std::size_t j, int code);
    int code(std::size_t i, std::size_t j) const { return weight(i, j) / scale_; }
    std::int32_t weight(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }

    void set_bias(std::size_t i, std::int32_t b) { bias_.at(i) = b; }
    std::int32_t bias(std::size_t i) const { return bias_[i]; }
    std::span<const std::int32_t> biases() const { return bias_; }

    /// Disconnects i and j (symmetric); the weight must already be zero.
    void disconnect(std::size_t i, std::size_t j);
    bool connected(std::size_t i, std::size_t j) const { return mask_[i * n_ + j] != 0; }

    /// Row j, equal to column j by symmetry.
    std::span<const std::int32_t> row(std::size_t j) const {
        return {w_.data() + j * n_, n_};
    }
    /// Number of connected partners of j.
    std::size_t fan_out(std::size_t j) const { return fan_out_[j]; }

    /// Largest allowed |code|.
    int max_code() const { return (1 << (weight_bits_ - 1)) - 1; }

private:
    std::size_t n_ = 0;
    int weight_bits_ = 2;
    int scale_ = 1;
    std::vector<std::int32_t> w_;
    std::vector<std::int32_t> bias_;
    std::vector<std::uint8_t> mask_;
    std::vector<std::size_t> fan_out_;
};

/// Per-step arithmetic configuration.
struct DynamicsConfig {
    ExpFormat exp{};
    int x_frac_bits = 16;  ///< X stored as Q0.x_frac_bits
    int dt_exp = -8;       ///< step size dt = 2^dt_exp
    /// Carry the boundary overshoot into the next half-cycle instead of clamping.
    bool carry_residual = false;
    /// Apply each flip's fan-out before integrating the next neuron.
    bool sequential = false;

    std::uint32_t x_one() const { return std::uint32_t{1} << x_frac_bits; }
};

struct CbmState {
    std::vector<std::uint32_t> x;  ///< internal state, x_one() represents 1.0
    std::vector<std::uint8_t> s;
    std::vector<std::int32_t> z;
    std::uint64_t step = 0;

    std::size_t size() const { return s.size(); }
    friend bool operator==(const CbmState&, const CbmState&) = default;
};

struct FlipEvent {
    std::uint32_t neuron = 0;
    bool new_s = false;
    std::uint64_t step = 0;  ///< step during which the flip happened

    friend bool operator==(const FlipEvent&, const FlipEvent&) = default;
};

/// Seeded uniform X and fair-coin S. Fields are left at zero.
CbmState init_state(std::size_t n, std::uint64_t seed, const DynamicsConfig& cfg = {});
/// init_state plus a dense field computation against `weights`.
CbmState init_state(const WeightMatrix& weights, std::uint64_t seed,
                    const DynamicsConfig& cfg = {});

/// Z = b + W S computed densely.
std::vector<std::int32_t> dense_fields(const WeightMatrix& weights,
                                       std::span<const std::uint8_t> s);
void recompute_fields(CbmState& state, const WeightMatrix& weights);

/// Integrates X_i for one step against Z_i + drive. Does not commit S_i.
std::optional<FlipEvent> neuron_step(CbmState& state, std::size_t i, const Temperature& temp,
                                     const DynamicsConfig& cfg = {}, std::int32_t drive = 0);

/// Integrates the neurons in `neurons` (step-entry Z) and appends their flips.
/// `drive`, when non-empty, is indexed by neuron and added to Z transiently.
void integrate(CbmState& state, std::span<const std::uint32_t> neurons,
               const Temperature& temp, const DynamicsConfig& cfg,
               std::span<const std::int32_t> drive, std::vector<FlipEvent>& flips);
/// Same, over the contiguous range [first, last).
void integrate(CbmState& state, std::size_t first, std::size_t last, const Temperature& temp,
               const DynamicsConfig& cfg, std::span<const std::int32_t> drive,
               std::vector<FlipEvent>& flips);

/// Writes the flipped S values. Does not touch Z or the step counter.
void commit_flips(CbmState& state, std::span<const FlipEvent> flips);

/// One synchronous sweep: integrate all neurons, commit flips, advance the step.
/// Z is left stale; the scheduler updates it from the returned flips.
std::vector<FlipEvent> machine_step(CbmState& state, const WeightMatrix& weights,
                                    const Temperature& temp, const DynamicsConfig& cfg = {},
                                    std::span<const std::int32_t> drive = {});

/// E = -sum_{i<j} W_ij S_i S_j - sum_i b_i S_i.
std::int64_t energy(std::span<const std::uint8_t> s, const WeightMatrix& weights);
std::int64_t energy(const CbmState& state, const WeightMatrix& weights);

}  // namespace cbm
