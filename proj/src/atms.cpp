#include "cbm/atms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cbm {

Temperature::Temperature(int t0_exp_, int alpha_code_)
    : t0_exp(t0_exp_), alpha_code(alpha_code_) {
    if (alpha_code < kAlphaMin || alpha_code > kAlphaMax)
        throw std::invalid_argument("alpha_code out of [32, 63]: " + std::to_string(alpha_code));
    if (t0_exp < kT0ExpMin || t0_exp > kT0ExpMax)
        throw std::invalid_argument("t0_exp out of range: " + std::to_string(t0_exp));
}

double Temperature::t0() const { return std::ldexp(1.0, t0_exp); }

Temperature Temperature::snap(double t) {
    if (!(t > 0.0) || !std::isfinite(t))
        throw std::invalid_argument("temperature must be positive and finite");
    const double target = std::log2(t);
    Temperature best;
    double best_dist = std::numeric_limits<double>::infinity();
    // T0 / alpha lies in (T0 / 2, T0], so only the two neighbouring T0 values can win.
    const int hi = static_cast<int>(std::ceil(target));
    for (int e = hi; e <= hi + 1; ++e) {
        const int t0e = std::clamp(e, kT0ExpMin, kT0ExpMax);
        for (int a = kAlphaMin; a <= kAlphaMax; ++a) {
            const double lt = t0e - std::log2(static_cast<double>(a) / kAlphaMin);
            const double d = std::abs(lt - target);
            if (d < best_dist) {
                best_dist = d;
                best = Temperature(t0e, a);
            }
        }
    }
    return best;
}

double FixedExp::value() const { return std::ldexp(static_cast<double>(raw), -frac_bits); }

double Exp2Fixed::value() const {
    return std::ldexp(static_cast<double>(mantissa), exponent - kMantissaBits);
}

bool forced_flip_check(std::int64_t z, bool s, int t0_exp) {
    const std::int64_t signed_z = s ? -z : z;
    if (t0_exp >= 0) return signed_z > (std::int64_t{8} << t0_exp);
    // 8 * 2^t0_exp < signed_z  <=>  8 < signed_z * 2^-t0_exp
    return signed_z * (std::int64_t{1} << -t0_exp) > 8;
}

Exp2Table::Exp2Table(int frac_bits) : frac_bits_(frac_bits) {
    if (frac_bits < 0 || frac_bits > 20)
        throw std::invalid_argument("exponent fraction bits out of [0, 20]");
    const std::size_t size = std::size_t{1} << frac_bits;
    mantissa_.resize(size);
    for (std::size_t f = 0; f < size; ++f) {
        const double m = std::exp2(static_cast<double>(f) / static_cast<double>(size));
        mantissa_[f] = static_cast<std::uint32_t>(
            std::llround(std::ldexp(m, Exp2Fixed::kMantissaBits)));
    }
}

Exp2Fixed Exp2Table::operator()(FixedExp e) const {
    if (e.frac_bits != frac_bits_)
        throw std::invalid_argument("FixedExp fraction bits do not match table");
    return from_raw(e.raw);
}

const Exp2Table& Exp2Table::default_table() {
    static const Exp2Table table(ExpFormat{}.frac_bits);
    return table;
}

Exp2Fixed exp2_fixed(FixedExp e) {
    if (e.frac_bits == ExpFormat{}.frac_bits) return Exp2Table::default_table()(e);
    return Exp2Table(e.frac_bits)(e);
}

}  // namespace cbm
