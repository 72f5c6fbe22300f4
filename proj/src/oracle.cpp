#include "cbm/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace cbm::oracle {

namespace {

using i128 = __int128;

i128 floor_div(i128 a, i128 b) {
    i128 q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// ceil(signed_z * alpha / (32 * 2^t0) * 2^F) on the exponent grid, saturated.
std::int64_t exponent_raw(std::int64_t signed_z, const Temperature& t, const ExpFormat& fmt) {
    i128 num = static_cast<i128>(signed_z) * t.alpha_code;
    i128 den = 32;
    if (t.t0_exp >= 0) den <<= t.t0_exp; else num <<= -t.t0_exp;
    num <<= fmt.frac_bits;
    const i128 ceil = -floor_div(-num, den);
    const i128 lim = static_cast<i128>(fmt.max_exp) << fmt.frac_bits;
    return static_cast<std::int64_t>(ceil > lim ? lim : (ceil < -lim ? -lim : ceil));
}

// Increment in X ulps for an exponent on the grid.
std::uint64_t increment_ulps(std::int64_t raw, const DynamicsConfig& cfg) {
    const std::int64_t unit = std::int64_t{1} << cfg.exp.frac_bits;
    std::int64_t ip = raw / unit;
    if (raw % unit != 0 && raw < 0) --ip;
    const std::int64_t frac = raw - ip * unit;
    const double m = std::nearbyint(
        std::ldexp(std::exp2(static_cast<double>(frac) / static_cast<double>(unit)), 15));
    const double v = std::ldexp(m, static_cast<int>(ip) + cfg.dt_exp + cfg.x_frac_bits - 15);
    if (v >= 0x1p62) return std::uint64_t{1} << 62;
    return static_cast<std::uint64_t>(std::floor(v + 0.5));
}

}  // namespace

DenseTrace dense_simulate(const WeightMatrix& weights, const Schedule& schedule,
                          std::uint64_t seed, std::uint64_t steps,
                          const PrecisionProfile& profile, std::uint64_t record_every) {
    const std::size_t n = weights.size();
    if (n > 4096) throw std::invalid_argument("dense oracle limited to 4096 neurons");
    if (schedule.total_steps() < steps) throw std::invalid_argument("schedule shorter than run");
    const DynamicsConfig& cfg = profile.dynamics;

    const CbmState init = init_state(n, seed, cfg);
    std::vector<std::uint8_t> s = init.s;
    std::vector<std::uint64_t> xq(init.x.begin(), init.x.end());
    const double one_q = std::ldexp(1.0, cfg.x_frac_bits);
    std::vector<double> xr(n);
    for (std::size_t i = 0; i < n; ++i) xr[i] = static_cast<double>(init.x[i]) / one_q;
    const std::uint64_t one = cfg.x_one();

    auto fields = [&] {
        std::vector<std::int32_t> z(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::int64_t acc = weights.bias(i);
            for (std::size_t j = 0; j < n; ++j)
                if (s[j]) acc += weights.weight(i, j);
            z[i] = static_cast<std::int32_t>(acc);
        }
        return z;
    };
    auto energy_of = [&](const std::vector<std::int32_t>& z) {
        // sum_i S_i Z_i counts each coupling twice.
        std::int64_t twice = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (s[i]) twice += static_cast<std::int64_t>(z[i]) + weights.bias(i);
        return -twice / 2;
    };
    auto record = [&](DenseTrace& tr, std::uint64_t step, const std::vector<std::int32_t>& z) {
        DenseFrame f{step, {}, s, z};
        f.x.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            f.x[i] = profile.mode == Precision::real ? xr[i] : static_cast<double>(xq[i]) / one_q;
        tr.frames.push_back(std::move(f));
    };

    DenseTrace tr;
    std::vector<std::int32_t> z = fields();
    tr.best_energy = energy_of(z);
    tr.best_s = s;
    if (record_every) record(tr, 0, z);

    std::size_t seg = 0;
    std::uint64_t used = 0;
    for (std::uint64_t t = 1; t <= steps; ++t) {
        while (used == schedule.segments()[seg].steps) { ++seg; used = 0; }
        const ScheduleSegment& sg = schedule.segments()[seg];
        ++used;
        std::vector<std::uint32_t> flipped;
        for (std::size_t i = 0; i < n; ++i) {
            const std::int64_t sz = s[i] ? -static_cast<std::int64_t>(z[i]) : z[i];
            bool flip = false;
            if (profile.mode == Precision::mirror) {
                const std::uint64_t inc = increment_ulps(exponent_raw(sz, sg.temp, cfg.exp), cfg);
                if (!s[i]) {
                    flip = xq[i] + inc >= one;
                    if (flip) xq[i] = cfg.carry_residual ? one - std::min(xq[i] + inc - one, one) : one;
                    else xq[i] += inc;
                } else {
                    flip = inc >= xq[i];
                    if (flip) xq[i] = cfg.carry_residual ? std::min(inc - xq[i], one) : 0;
                    else xq[i] -= inc;
                }
            } else {
                const double temp = profile.use_target_temperature ? sg.target : sg.temp.effective();
                const double inc = std::exp2(static_cast<double>(sz) / temp + cfg.dt_exp);
                if (!s[i]) {
                    flip = xr[i] + inc >= 1.0;
                    xr[i] = flip ? 1.0 : xr[i] + inc;
                } else {
                    flip = xr[i] - inc <= 0.0;
                    xr[i] = flip ? 0.0 : xr[i] - inc;
                }
            }
            if (flip) flipped.push_back(static_cast<std::uint32_t>(i));
        }
        for (const auto i : flipped) s[i] ^= 1;
        z = fields();
        const std::int64_t e = energy_of(z);
        tr.energies.push_back(e);
        if (e < tr.best_energy) {
            tr.best_energy = e;
            tr.best_s = s;
        }
        tr.flips.push_back(std::move(flipped));
        if (record_every && t % record_every == 0) record(tr, t, z);
    }
    return tr;
}

MaxcutOptimum brute_force_maxcut(const Graph& g) {
    const std::size_t n = g.n;
    if (n > 24) throw std::invalid_argument("brute force limited to 24 vertices");
    if (n == 0) throw std::invalid_argument("empty graph");
    std::vector<std::int64_t> adj(n * n, 0);
    for (const auto& e : g.edges) {
        adj[e.i * n + e.j] += e.w;
        adj[e.j * n + e.i] += e.w;
    }
    // Gray-code walk over vertices 1..n-1; vertex 0 stays on side 0.
    std::vector<std::uint8_t> side(n, 0);
    std::int64_t cut = 0;
    MaxcutOptimum best{0, side};
    const std::uint64_t count = std::uint64_t{1} << (n - 1);
    for (std::uint64_t k = 1; k < count; ++k) {
        const std::size_t v = static_cast<std::size_t>(__builtin_ctzll(k)) + 1;
        std::int64_t same = 0, diff = 0;
        for (std::size_t u = 0; u < n; ++u) {
            if (u == v) continue;
            (side[u] == side[v] ? same : diff) += adj[v * n + u];
        }
        cut += same - diff;
        side[v] ^= 1;
        if (cut > best.value) {
            best.value = cut;
            best.assignment = side;
        }
    }
    return best;
}

}  // namespace cbm::oracle
