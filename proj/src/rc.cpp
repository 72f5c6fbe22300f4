#include "cbm/rc.hpp"

#include "cbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace cbm {

void RcConfig::validate() const {
    if (reservoir_size < 1) throw std::invalid_argument("reservoir needs at least one neuron");
    if (frame_steps < 2 || (frame_steps & (frame_steps - 1)) != 0)
        throw std::invalid_argument("frame_steps must be a power of two >= 2");
    if (weights.size() != reservoir_size)
        throw std::invalid_argument("recurrent weights do not match reservoir_size");
    if (input_weights.size() != reservoir_size)
        throw std::invalid_argument("input weights (" + std::to_string(input_weights.size()) +
                                    ") do not match reservoir_size (" +
                                    std::to_string(reservoir_size) + ")");
}

RcConfig make_rc_config(const ReservoirParams& p, std::uint64_t seed) {
    RcConfig c;
    c.reservoir_size = p.size;
    c.frame_steps = p.frame_steps;
    c.temp = p.temp;
    c.washout_frames = p.washout_frames;
    c.dynamics = p.dynamics;
    c.weights = WeightMatrix(p.size, p.weight_bits, 1);
    Rng rng(seed);
    const int m = c.weights.max_code();
    for (std::size_t i = 0; i < p.size; ++i)
        for (std::size_t j = i + 1; j < p.size; ++j) {
            const bool keep = uniform01(rng) < p.density;
            const auto code = static_cast<int>(uniform_int(rng, -m, m));
            if (keep) c.weights.set_code(i, j, code);
            else c.weights.disconnect(i, j);
        }
    c.input_weights.resize(p.size);
    for (auto& w : c.input_weights) {
        const bool fed = uniform01(rng) < p.input_density;
        const auto v = static_cast<std::int32_t>(uniform_int(rng, -p.input_range, p.input_range));
        w = fed ? v : 0;
    }
    for (std::size_t i = 0; i < p.size; ++i)
        c.weights.set_bias(i, static_cast<std::int32_t>(uniform_int(rng, -p.bias_range, p.bias_range)));
    c.validate();
    return c;
}

std::vector<std::uint8_t> pwm_encode(unsigned u, std::size_t frame_steps) {
    if (u > frame_steps)
        throw std::invalid_argument("input " + std::to_string(u) + " exceeds frame length " +
                                    std::to_string(frame_steps));
    std::vector<std::uint8_t> p(frame_steps, 0);
    std::fill_n(p.begin(), u, 1);
    return p;
}

FrameAccumulator::FrameAccumulator(const RcConfig& config, const Readout* readout)
    : readout_(readout),
      n_(config.reservoir_size),
      frame_steps_(config.frame_steps),
      on_since_(n_, 0),
      on_time_(n_, 0),
      features_(n_, 0.0) {
    if (readout_) {
        if (static_cast<std::size_t>(readout_->weights.rows()) != n_ + 1)
            throw std::invalid_argument("readout rows must equal reservoir_size + 1");
        const auto k = static_cast<std::size_t>(readout_->weights.cols());
        accum_.assign(k, 0.0);
        outputs_.assign(k, 0.0);
    }
    io_.neurons = n_;
}

void FrameAccumulator::begin_frame(unsigned u, std::uint64_t entry_step,
                                   std::span<const std::uint8_t> s) {
    if (u > frame_steps_)
        throw std::invalid_argument("input " + std::to_string(u) + " exceeds frame length");
    if (s.size() != n_) throw std::invalid_argument("reservoir state size mismatch");
    pulse_ = u;
    frame_pos_ = 0;
    end_step_ = entry_step;
    // The pulse rises at the frame start and falls at step u.
    if (u > 0) io_.input_macs += n_;
    if (u > 0 && u < frame_steps_) io_.input_macs += n_;
    for (std::size_t i = 0; i < n_; ++i) {
        on_time_[i] = 0;
        on_since_[i] = entry_step + 1;
    }
    if (readout_) {
        if (rate_.empty()) {
            rate_.assign(accum_.size(), 0.0);
            for (std::size_t i = 0; i < n_; ++i)
                if (s[i])
                    for (std::size_t k = 0; k < rate_.size(); ++k)
                        rate_[k] += readout_->weights(static_cast<Eigen::Index>(i),
                                                      static_cast<Eigen::Index>(k));
        }
        std::fill(accum_.begin(), accum_.end(), 0.0);
    }
}

void FrameAccumulator::after_step(std::span<const FlipEvent> flips, std::uint64_t completed_step) {
    for (const auto& f : flips) {
        if (f.new_s) on_since_[f.neuron] = completed_step;
        else on_time_[f.neuron] += completed_step - on_since_[f.neuron];
        if (readout_) {
            const double d = f.new_s ? 1.0 : -1.0;
            for (std::size_t k = 0; k < rate_.size(); ++k)
                rate_[k] += d * readout_->weights(static_cast<Eigen::Index>(f.neuron),
                                                  static_cast<Eigen::Index>(k));
            io_.output_macs += rate_.size();
        }
    }
    for (std::size_t k = 0; k < accum_.size(); ++k) accum_[k] += rate_[k];
    end_step_ = completed_step;
    ++frame_pos_;
}

std::span<const double> FrameAccumulator::end_frame(std::span<const std::uint8_t> s) {
    if (!frame_done()) throw std::logic_error("frame closed before its last step");
    const double inv = 1.0 / static_cast<double>(frame_steps_);
    for (std::size_t i = 0; i < n_; ++i) {
        std::uint64_t on = on_time_[i];
        if (s[i]) on += end_step_ + 1 - on_since_[i];
        features_[i] = static_cast<double>(on) * inv;
    }
    if (readout_) {
        const auto bias_row = static_cast<Eigen::Index>(n_);
        for (std::size_t k = 0; k < outputs_.size(); ++k)
            outputs_[k] = accum_[k] * inv + readout_->weights(bias_row, static_cast<Eigen::Index>(k));
    }
    return features_;
}

namespace {

const RcConfig& validated(const RcConfig& c) {
    c.validate();
    return c;
}

}  // namespace

ReservoirRunner::ReservoirRunner(const RcConfig& config, std::uint64_t seed, const Readout* readout)
    : config_(&config), acc_(validated(config), readout) {
    state_ = init_state(config.weights, seed, config.dynamics);
}

std::span<const double> ReservoirRunner::step_frame(unsigned u) {
    const RcConfig& c = *config_;
    acc_.begin_frame(u, state_.step, state_.s);
    std::vector<FlipEvent> flips;
    while (!acc_.frame_done()) {
        flips.clear();
        const std::span<const std::int32_t> drive =
            acc_.pulse_on() ? std::span<const std::int32_t>(c.input_weights) : std::span<const std::int32_t>{};
        integrate(state_, 0, state_.size(), c.temp, c.dynamics, drive, flips);
        commit_flips(state_, flips);
        ++state_.step;
        apply_flips(state_, c.weights, flips, counters_);
        acc_.after_step(flips, state_.step);
    }
    return acc_.end_frame(state_.s);
}

MacCounters ReservoirRunner::counters() const {
    MacCounters c = counters_;
    c.input_macs = acc_.io_counters().input_macs;
    c.output_macs = acc_.io_counters().output_macs;
    return c;
}

FeatureMatrix run_reservoir(const RcConfig& config, std::span<const std::uint8_t> inputs,
                            std::uint64_t seed, const Readout* readout) {
    if (inputs.empty()) throw std::invalid_argument("reservoir needs at least one input");
    config.validate();
    ReservoirRunner runner(config, seed, readout);
    const std::size_t n = config.reservoir_size;
    const std::size_t rows =
        inputs.size() > config.washout_frames ? inputs.size() - config.washout_frames : 0;
    FeatureMatrix out;
    out.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n + 1));
    if (readout) out.outputs.emplace(static_cast<Eigen::Index>(rows), readout->weights.cols());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const auto f = runner.step_frame(inputs[t]);
        if (t < config.washout_frames) continue;
        const auto r = static_cast<Eigen::Index>(t - config.washout_frames);
        for (std::size_t i = 0; i < n; ++i) out.values(r, static_cast<Eigen::Index>(i)) = f[i];
        out.values(r, static_cast<Eigen::Index>(n)) = 1.0;
        if (readout) {
            const auto o = runner.last_outputs();
            for (std::size_t k = 0; k < o.size(); ++k) (*out.outputs)(r, static_cast<Eigen::Index>(k)) = o[k];
        }
    }
    out.counters = runner.counters();
    return out;
}

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " contains NaN or Inf");
}

}  // namespace

RidgeSolver::RidgeSolver(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets) {
    if (features.rows() != targets.rows())
        throw std::invalid_argument("feature and target row counts differ");
    require_finite(features, "feature matrix");
    require_finite(targets, "target matrix");
    gram_ = features.transpose() * features;
    cross_ = features.transpose() * targets;
}

Eigen::MatrixXd RidgeSolver::solve(double lambda) const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("ridge lambda must be positive");
    Eigen::MatrixXd a = gram_;
    a.diagonal().array() += lambda;
    return a.ldlt().solve(cross_);
}

Readout train_readout(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                      double lambda) {
    const RidgeSolver solver(features, targets);
    Readout r;
    r.lambda = lambda;
    r.weights = solver.solve(lambda);
    r.residual = (features * r.weights - targets).squaredNorm();
    return r;
}

FitResult fit_validated(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                        const SplitSpec& split) {
    const auto need = static_cast<Eigen::Index>(split.train + split.test);
    if (features.rows() < need || targets.rows() < need)
        throw std::invalid_argument("not enough rows for the train/test split (" +
                                    std::to_string(features.rows()) + " < " +
                                    std::to_string(need) + ")");
    if (split.lambdas.empty()) throw std::invalid_argument("empty lambda grid");
    const auto train = static_cast<Eigen::Index>(split.train);
    const auto fit = static_cast<Eigen::Index>(
        std::llround(static_cast<double>(split.train) * (1.0 - split.validation_fraction)));
    if (fit < 1 || fit >= train) throw std::invalid_argument("validation split leaves no rows");
    const auto test = static_cast<Eigen::Index>(split.test);
    const Eigen::Index cols = targets.cols();

    const RidgeSolver fit_solver(features.topRows(fit), targets.topRows(fit));
    const auto val_f = features.middleRows(fit, train - fit);
    const auto val_y = targets.middleRows(fit, train - fit);
    std::vector<double> best_err(static_cast<std::size_t>(cols), INFINITY);
    FitResult out;
    out.lambdas.assign(static_cast<std::size_t>(cols), split.lambdas.front());
    for (const double lambda : split.lambdas) {
        const Eigen::MatrixXd w = fit_solver.solve(lambda);
        const Eigen::VectorXd err = (val_f * w - val_y).colwise().squaredNorm();
        for (Eigen::Index k = 0; k < cols; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (err(k) < best_err[kk]) {
                best_err[kk] = err(k);
                out.lambdas[kk] = lambda;
            }
        }
    }

    const RidgeSolver full(features.topRows(train), targets.topRows(train));
    const auto test_f = features.middleRows(train, test);
    out.test_prediction.resize(test, cols);
    std::map<double, Eigen::MatrixXd> solved;
    for (Eigen::Index k = 0; k < cols; ++k) {
        const double lambda = out.lambdas[static_cast<std::size_t>(k)];
        auto it = solved.find(lambda);
        if (it == solved.end()) it = solved.emplace(lambda, full.solve(lambda)).first;
        out.test_prediction.col(k) = test_f * it->second.col(k);
    }
    return out;
}

Narma10Series narma10_gen(std::size_t length, std::uint64_t seed) {
    if (length <= 10) throw std::invalid_argument("NARMA10 needs more than 10 samples");
    Rng rng(seed);
    // Some input draws drive the recurrence to infinity; draw again from the
    // same stream until the output stays bounded.
    for (;;) {
        std::vector<double> u(length);
        for (auto& v : u) v = 0.5 * uniform01(rng);
        Narma10Series s = narma10_from_inputs(std::move(u));
        if (std::all_of(s.y.begin(), s.y.end(), [](double y) { return std::abs(y) <= kNarmaDivergence; }))
            return s;
    }
}

Narma10Series narma10_from_inputs(std::vector<double> u) {
    if (u.empty()) throw std::invalid_argument("NARMA10 needs at least one input");
    Narma10Series s;
    s.u = std::move(u);
    const std::size_t length = s.u.size();
    s.y.assign(length, 0.0);
    auto y_at = [&](std::ptrdiff_t t) { return t < 0 ? 0.0 : s.y[static_cast<std::size_t>(t)]; };
    auto u_at = [&](std::ptrdiff_t t) { return t < 0 ? 0.0 : s.u[static_cast<std::size_t>(t)]; };
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(length); ++t) {
        const double prev = y_at(t - 1);
        double window = 0.0;
        for (std::ptrdiff_t i = 0; i < 10; ++i) window += y_at(t - 1 - i);
        s.y[static_cast<std::size_t>(t)] =
            0.3 * prev + 0.05 * prev * window + 1.5 * u_at(t - 9) * u_at(t) + 0.1;
    }
    return s;
}

double metric_nrmse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty())
        throw std::invalid_argument("NRMSE needs equal nonempty sequences");
    const double n = static_cast<double>(target.size());
    double mean = 0;
    for (const double t : target) mean += t;
    mean /= n;
    double var = 0, mse = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        var += (target[i] - mean) * (target[i] - mean);
        mse += (pred[i] - target[i]) * (pred[i] - target[i]);
    }
    if (var == 0.0) throw std::invalid_argument("NRMSE undefined for a constant target");
    return std::sqrt(mse / var);
}

double squared_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("correlation needs equal nonempty sequences");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab * sab / (saa * sbb);
}

std::vector<std::uint8_t> quantize_narma_inputs(std::span<const double> u) {
    std::vector<std::uint8_t> q(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        q[i] = static_cast<std::uint8_t>(std::clamp(std::lround(u[i] * kNarmaInputScale), 0L, 255L));
    return q;
}

Narma10Series narma10_series(const RcConfig& config, const SplitSpec& split, std::uint64_t seed) {
    if (config.washout_frames < 9) throw std::invalid_argument("NARMA10 needs washout >= 9 frames");
    return narma10_gen(config.washout_frames + split.train + split.test, derive_seed(seed, 1));
}

NarmaResult narma10_score(const FeatureMatrix& fm, const Narma10Series& series,
                          std::size_t washout, const SplitSpec& split) {
    if (washout < 9) throw std::invalid_argument("NARMA10 needs washout >= 9 frames");
    const auto rows = static_cast<Eigen::Index>(split.train + split.test);
    if (series.y.size() < washout + static_cast<std::size_t>(rows))
        throw std::invalid_argument("NARMA10 series shorter than washout + train + test");
    Eigen::MatrixXd y(rows, 1);
    Eigen::MatrixXd lagged(rows, 11);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = washout + static_cast<std::size_t>(r);
        y(r, 0) = series.y[t];
        for (Eigen::Index k = 0; k < 10; ++k) lagged(r, k) = series.u[t - static_cast<std::size_t>(k)];
        lagged(r, 10) = 1.0;
    }

    NarmaResult out;
    out.counters = fm.counters;
    const FitResult rc = fit_validated(fm.values.topRows(std::min(rows, fm.values.rows())), y, split);
    const FitResult ar = fit_validated(lagged, y, split);
    const auto test_y = y.bottomRows(static_cast<Eigen::Index>(split.test));
    out.target.assign(test_y.data(), test_y.data() + test_y.rows());
    out.prediction.assign(rc.test_prediction.data(), rc.test_prediction.data() + rc.test_prediction.rows());
    out.nrmse = metric_nrmse(out.prediction, out.target);
    std::vector<double> base(ar.test_prediction.data(), ar.test_prediction.data() + ar.test_prediction.rows());
    out.baseline_nrmse = metric_nrmse(base, out.target);
    out.lambda = rc.lambdas.front();
    out.baseline_lambda = ar.lambdas.front();
    return out;
}

NarmaResult narma10_task(const RcConfig& config, const SplitSpec& split, std::uint64_t seed) {
    const Narma10Series series = narma10_series(config, split, seed);
    const FeatureMatrix fm =
        run_reservoir(config, quantize_narma_inputs(series.u), derive_seed(seed, 0));
    return narma10_score(fm, series, config.washout_frames, split);
}

std::vector<std::uint8_t> memory_bits(const RcConfig& config, const SplitSpec& split,
                                      std::uint64_t seed) {
    const std::size_t length = config.washout_frames + split.train + split.test;
    Rng rng(derive_seed(seed, 2));
    std::vector<std::uint8_t> bits(length);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
    return bits;
}

std::vector<std::uint8_t> memory_levels(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> levels(bits.size());
    for (std::size_t t = 0; t < bits.size(); ++t) levels[t] = bits[t] ? 255 : 0;
    return levels;
}

MemoryCapacityResult memory_capacity_score(const FeatureMatrix& fm,
                                           std::span<const std::uint8_t> bits, MemoryTask task,
                                           std::size_t max_delay, std::size_t washout,
                                           const SplitSpec& split) {
    if (max_delay < 1) throw std::invalid_argument("max_delay must be at least 1");
    if (washout < max_delay)
        throw std::invalid_argument("washout must cover max_delay frames of history");
    const auto rows = static_cast<Eigen::Index>(split.train + split.test);
    if (bits.size() < washout + static_cast<std::size_t>(rows))
        throw std::invalid_argument("input bits shorter than washout + train + test");
    Eigen::MatrixXd targets(rows, static_cast<Eigen::Index>(max_delay));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = washout + static_cast<std::size_t>(r);
        std::uint8_t parity = bits[t];
        for (std::size_t k = 1; k <= max_delay; ++k) {
            parity ^= bits[t - k];
            targets(r, static_cast<Eigen::Index>(k - 1)) =
                task == MemoryTask::stm ? bits[t - k] : parity;
        }
    }
    const FitResult fit = fit_validated(fm.values.topRows(std::min(rows, fm.values.rows())), targets, split);
    MemoryCapacityResult out;
    out.counters = fm.counters;
    const auto test_t = targets.bottomRows(static_cast<Eigen::Index>(split.test));
    for (std::size_t k = 0; k < max_delay; ++k) {
        const Eigen::VectorXd p = fit.test_prediction.col(static_cast<Eigen::Index>(k));
        const Eigen::VectorXd t = test_t.col(static_cast<Eigen::Index>(k));
        const double r2 = squared_correlation({p.data(), static_cast<std::size_t>(p.size())},
                                              {t.data(), static_cast<std::size_t>(t.size())});
        out.r2.push_back(r2);
        out.capacity += r2;
    }
    return out;
}

MemoryCapacityResult metric_memory_capacity(MemoryTask task, const RcConfig& config,
                                            std::size_t max_delay, std::uint64_t seed,
                                            const SplitSpec& split) {
    if (max_delay < 1) throw std::invalid_argument("max_delay must be at least 1");
    if (config.washout_frames < max_delay)
        throw std::invalid_argument("washout must cover max_delay frames of history");
    const auto bits = memory_bits(config, split, seed);
    const FeatureMatrix fm = run_reservoir(config, memory_levels(bits), derive_seed(seed, 0));
    return memory_capacity_score(fm, bits, task, max_delay, config.washout_frames, split);
}

}  // namespace cbm
