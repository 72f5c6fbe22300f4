#pragma once

// Fixed-point arithmetic for the neuron datapath: the adaptive temperature
// multiply splitting (T = T0 / alpha) and a table-driven base-2 exponential.

#include <cstdint>
#include <vector>

namespace cbm {

/// Effective temperature T = 2^t0_exp / (alpha_code / 32).
///
/// alpha_code is a 6-bit multiplier in [32, 63], so alpha lies in [1, 2) and
/// the pair covers a dense geometric grid of temperatures.
struct Temperature {
    int t0_exp = 0;
    int alpha_code = 32;

    static constexpr int kAlphaShift = 5;
    static constexpr int kAlphaMin = 32;
    static constexpr int kAlphaMax = 63;
    static constexpr int kT0ExpMin = -4;
    static constexpr int kT0ExpMax = 16;

    /// Throws std::invalid_argument when the pair is out of range.
    Temperature(int t0_exp_ = 0, int alpha_code_ = 32);

    double alpha() const { return static_cast<double>(alpha_code) / kAlphaMin; }
    double t0() const;
    double effective() const { return t0() / alpha(); }

    /// Nearest representable temperature (in log distance) to `t`.
    static Temperature snap(double t);

    friend bool operator==(const Temperature&, const Temperature&) = default;
};

/// Precision knobs for the exponent path.
struct ExpFormat {
    int frac_bits = 6;   ///< fractional bits F of the exponent argument
    int max_exp = 16;    ///< saturation bound E_max
};

/// Signed fixed-point exponent argument, value = raw / 2^frac_bits.
struct FixedExp {
    std::int32_t raw = 0;
    int frac_bits = 6;

    double value() const;
    friend bool operator==(const FixedExp&, const FixedExp&) = default;
};

/// Unsigned power of two, value = mantissa * 2^(exponent - kMantissaBits).
struct Exp2Fixed {
    static constexpr int kMantissaBits = 15;
    std::uint32_t mantissa = 1u << kMantissaBits;
    int exponent = 0;

    double value() const;
    /// Value scaled by 2^shift, rounded to the nearest integer (ties up).
    std::uint64_t scaled(int shift) const {
        const int k = exponent - kMantissaBits + shift;
        if (k >= 0) return k >= 40 ? std::uint64_t{1} << 62 : std::uint64_t{mantissa} << k;
        if (k < -32) return 0;
        return (std::uint64_t{mantissa} + (std::uint64_t{1} << (-k - 1))) >> -k;
    }
};

/// Computes (1 - 2s) * z * alpha / T0 as a 6-bit multiply followed by a shift.
///
/// The shift rounds toward +infinity so that any exact value above the
/// forced-flip threshold stays above it after quantization. Results saturate
/// at +/- E_max.
inline FixedExp atms_scale(std::int64_t z, bool s, const Temperature& temp,
                           const ExpFormat& fmt = {}) {
    const std::int64_t product = (s ? -z : z) * temp.alpha_code;
    const int shift = temp.t0_exp + Temperature::kAlphaShift - fmt.frac_bits;
    const std::int64_t limit = static_cast<std::int64_t>(fmt.max_exp) << fmt.frac_bits;
    std::int64_t raw;
    if (shift >= 0) {
        raw = -((-product) >> shift);
    } else if (product > (limit >> -shift) || -product > (limit >> -shift)) {
        raw = product > 0 ? limit : -limit;
    } else {
        raw = product * (std::int64_t{1} << -shift);
    }
    raw = raw > limit ? limit : (raw < -limit ? -limit : raw);
    return FixedExp{static_cast<std::int32_t>(raw), fmt.frac_bits};
}

/// True iff (1 - 2s) * z / 2^t0_exp > 8, evaluated without alpha.
bool forced_flip_check(std::int64_t z, bool s, int t0_exp);

/// 2^e via integer-part shift and a 2^F-entry table over the fractional part.
class Exp2Table {
public:
    explicit Exp2Table(int frac_bits = 6);

    int frac_bits() const { return frac_bits_; }
    Exp2Fixed operator()(FixedExp e) const;
    Exp2Fixed from_raw(std::int32_t raw) const {
        // Arithmetic shift floors, leaving a nonnegative fraction index.
        const std::int32_t ip = raw >> frac_bits_;
        const auto frac = static_cast<std::uint32_t>(raw - ip * (std::int32_t{1} << frac_bits_));
        return Exp2Fixed{mantissa_[frac], ip};
    }

    /// Shared table for the default format.
    static const Exp2Table& default_table();

private:
    int frac_bits_;
    std::vector<std::uint32_t> mantissa_;
};

/// 2^e using the default table (F must match ExpFormat{}.frac_bits or a
/// table for e.frac_bits is built on the fly).
Exp2Fixed exp2_fixed(FixedExp e);

}  // namespace cbm
