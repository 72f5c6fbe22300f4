#pragma once

// Reservoir computing on the machine: PWM input encoding, frame-averaged
// features, ridge readout, and the NARMA10 / STM / parity-check harnesses.

#include "cbm/core.hpp"
#include "cbm/ddmac.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cbm {

/// Knobs for generating a random reservoir.
struct ReservoirParams {
    std::size_t size = 256;
    int weight_bits = 4;            ///< recurrent code width (codes in +/-(2^(bits-1)-1))
    double density = 1.0;           ///< fraction of connected recurrent pairs
    int input_range = 8;            ///< input weights uniform in [-range, range]
    double input_density = 1.0;     ///< fraction of neurons that receive the input
    int bias_range = 0;             ///< biases uniform in [-range, range]
    Temperature temp{};             ///< fixed reservoir temperature
    std::size_t frame_steps = 256;
    std::size_t washout_frames = 50;
    DynamicsConfig dynamics{};
};

struct RcConfig {
    std::size_t reservoir_size = 0;
    std::size_t frame_steps = 256;
    std::vector<std::int32_t> input_weights;
    WeightMatrix weights;
    Temperature temp{};
    std::size_t washout_frames = 0;
    DynamicsConfig dynamics{};

    /// Throws when frame_steps is not a power of two >= 2 or sizes disagree.
    void validate() const;
};

/// Symmetric random recurrent codes, input weights and biases from `seed`.
RcConfig make_rc_config(const ReservoirParams& p, std::uint64_t seed);

/// Pulse-width modulation: P_t = 1 for t < u. Throws if u > frame_steps.
std::vector<std::uint8_t> pwm_encode(unsigned u, std::size_t frame_steps = 256);

/// Trained linear output layer, features (with trailing constant column) -> outputs.
struct Readout {
    Eigen::MatrixXd weights;  ///< (features + 1) x outputs
    double lambda = 1e-6;
    double residual = 0;      ///< training residual ||F W - Y||^2

    Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const { return features * weights; }
};

/// Rows = frames after washout, columns = reservoir neurons + constant 1.
struct FeatureMatrix {
    Eigen::MatrixXd values;
    MacCounters counters;
    /// Readout outputs accumulated through the flip path, when a readout was supplied.
    std::optional<Eigen::MatrixXd> outputs;
};

/// Per-frame bookkeeping for one reservoir: input pulse state, and feature
/// and readout accumulators that are only touched on flip events.
/// Neuron indices are local to the reservoir.
class FrameAccumulator {
public:
    FrameAccumulator(const RcConfig& config, const Readout* readout = nullptr);

    /// Starts a frame presenting `u`; `entry_step` is the machine step count
    /// before the frame's first step and `s` the reservoir's S at that point.
    void begin_frame(unsigned u, std::uint64_t entry_step, std::span<const std::uint8_t> s);
    /// Whether the input pulse is high during the next step.
    bool pulse_on() const { return frame_pos_ < pulse_; }
    /// Records the flips of the step that just completed (machine step count
    /// `completed_step`).
    void after_step(std::span<const FlipEvent> flips, std::uint64_t completed_step);
    bool frame_done() const { return frame_pos_ == frame_steps_; }
    /// Closes the frame and returns the time-averaged S per neuron.
    std::span<const double> end_frame(std::span<const std::uint8_t> s);
    /// Readout outputs of the last closed frame (empty without a readout).
    std::span<const double> outputs() const { return outputs_; }
    /// Input-drive and readout MACs.
    const MacCounters& io_counters() const { return io_; }

private:
    const Readout* readout_;
    std::size_t n_;
    std::size_t frame_steps_;
    unsigned pulse_ = 0;
    std::size_t frame_pos_ = 0;
    std::uint64_t end_step_ = 0;
    std::vector<std::uint64_t> on_since_;
    std::vector<std::uint64_t> on_time_;
    std::vector<double> features_;
    std::vector<double> rate_;   // sum_i W_out[i, k] S_i
    std::vector<double> accum_;  // time integral of rate_ over the frame
    std::vector<double> outputs_;
    MacCounters io_;
};

/// A standalone reservoir machine.
class ReservoirRunner {
public:
    ReservoirRunner(const RcConfig& config, std::uint64_t seed, const Readout* readout = nullptr);

    /// Presents one input for frame_steps steps; returns the frame's features.
    std::span<const double> step_frame(unsigned u);
    std::span<const double> last_outputs() const { return acc_.outputs(); }

    const CbmState& state() const { return state_; }
    /// Recurrent counters merged with input/readout MACs.
    MacCounters counters() const;

private:
    const RcConfig* config_;
    CbmState state_;
    MacCounters counters_;
    FrameAccumulator acc_;
};

/// Runs every input through the reservoir, dropping the washout frames.
FeatureMatrix run_reservoir(const RcConfig& config, std::span<const std::uint8_t> inputs,
                            std::uint64_t seed, const Readout* readout = nullptr);

/// Closed-form ridge regression; throws on non-finite input or lambda <= 0.
Readout train_readout(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                      double lambda);

/// Ridge fits sharing one Gram matrix across many lambdas.
class RidgeSolver {
public:
    RidgeSolver(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets);
    Eigen::MatrixXd solve(double lambda) const;

private:
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd cross_;
};

struct Narma10Series {
    std::vector<double> u;  ///< inputs in [0, 0.5]
    std::vector<double> y;  ///< y[t] is the output after input u[t]
};

/// Outputs beyond this magnitude mark a divergent series.
constexpr double kNarmaDivergence = 10.0;
/// Standard 10th-order NARMA with zero initial history. Input draws whose
/// series diverges are replaced by the next draw. Throws for length <= 10.
Narma10Series narma10_gen(std::size_t length, std::uint64_t seed);
/// The same recurrence driven by a given input sequence.
Narma10Series narma10_from_inputs(std::vector<double> u);

/// sqrt(mean((pred - target)^2) / var(target)); throws on zero variance.
double metric_nrmse(std::span<const double> pred, std::span<const double> target);
/// Squared Pearson correlation (0 when either side is constant).
double squared_correlation(std::span<const double> a, std::span<const double> b);

/// Inputs in [0, 0.5] scaled linearly to 8-bit PWM levels.
std::vector<std::uint8_t> quantize_narma_inputs(std::span<const double> u);
constexpr double kNarmaInputScale = 255.0 / 0.5;

struct SplitSpec {
    std::size_t train = 4000;
    std::size_t test = 1000;
    double validation_fraction = 0.2;  ///< tail of the train block used to pick lambda
    std::vector<double> lambdas{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
};

struct NarmaResult {
    double nrmse = 0;
    double baseline_nrmse = 0;  ///< order-10 linear regression on past inputs
    double lambda = 0;
    double baseline_lambda = 0;
    MacCounters counters;
    std::vector<double> prediction;
    std::vector<double> target;
};

/// Input/target series sized for washout + train + test frames.
Narma10Series narma10_series(const RcConfig& config, const SplitSpec& split, std::uint64_t seed);
/// Fits the readout and the order-10 baseline on features of `series`
/// (feature row r corresponds to series index washout + r).
NarmaResult narma10_score(const FeatureMatrix& features, const Narma10Series& series,
                          std::size_t washout, const SplitSpec& split);
/// narma10_series, run_reservoir (seeded from `seed`), narma10_score.
NarmaResult narma10_task(const RcConfig& config, const SplitSpec& split, std::uint64_t seed);

enum class MemoryTask { stm, parity };

struct MemoryCapacityResult {
    double capacity = 0;
    std::vector<double> r2;  ///< r2[k - 1] for delay k
    MacCounters counters;
};

/// I.i.d. fair bits sized for washout + train + test frames.
std::vector<std::uint8_t> memory_bits(const RcConfig& config, const SplitSpec& split,
                                      std::uint64_t seed);
/// Bits mapped to the PWM levels {0, 255}.
std::vector<std::uint8_t> memory_levels(std::span<const std::uint8_t> bits);
/// For each delay k trains a readout on u[t-k] (STM) or u[t] ^ ... ^ u[t-k]
/// (parity) and sums the test-set squared correlations.
MemoryCapacityResult memory_capacity_score(const FeatureMatrix& features,
                                           std::span<const std::uint8_t> bits, MemoryTask task,
                                           std::size_t max_delay, std::size_t washout,
                                           const SplitSpec& split);
/// memory_bits, run_reservoir (seeded from `seed`), memory_capacity_score.
MemoryCapacityResult metric_memory_capacity(MemoryTask task, const RcConfig& config,
                                            std::size_t max_delay, std::uint64_t seed,
                                            const SplitSpec& split);

/// Picks the lambda with the lowest validation error per target column, refits
/// on the whole training block, and returns test predictions (rows = test rows).
struct FitResult {
    Eigen::MatrixXd test_prediction;
    std::vector<double> lambdas;
};
FitResult fit_validated(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                        const SplitSpec& split);

}  // namespace cbm
