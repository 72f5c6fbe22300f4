#include "cbm/ddmac.hpp"
#include "cbm/oracle.hpp"
#include "cbm/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

using namespace cbm;
using namespace cbm::oracle;

namespace {

WeightMatrix random_weights(std::size_t n, int bits, std::uint64_t seed) {
    WeightMatrix w(n, bits);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        w.set_bias(i, static_cast<std::int32_t>(uniform_int(rng, -6, 6)));
        for (std::size_t j = i + 1; j < n; ++j)
            w.set_code(i, j, static_cast<int>(uniform_int(rng, -w.max_code(), w.max_code())));
    }
    return w;
}

// Engine flips per step, ascending, under the same schedule.
std::vector<std::vector<std::uint32_t>> engine_flips(const WeightMatrix& w, const Schedule& sched,
                                                     std::uint64_t seed,
                                                     const DynamicsConfig& cfg) {
    CbmState st = init_state(w, seed, cfg);
    MacCounters c;
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& seg : sched.segments())
        for (std::uint64_t k = 0; k < seg.steps; ++k) {
            const auto r = scheduled_step(st, w, seg.temp, cfg, c);
            std::vector<std::uint32_t> ids;
            for (const auto& f : r.flips) ids.push_back(f.neuron);
            std::sort(ids.begin(), ids.end());
            out.push_back(std::move(ids));
        }
    return out;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("mirror mode reproduces the engine") {
    const auto w = random_weights(64, 4, 17);
    const Schedule sched = make_schedule(128, 1, 10000);
    PrecisionProfile prof;
    const DenseTrace tr = dense_simulate(w, sched, 5, 10000, prof);
    const auto eng = engine_flips(w, sched, 5, prof.dynamics);
    REQUIRE(tr.flips.size() == eng.size());
    std::size_t total = 0;
    for (std::size_t t = 0; t < eng.size(); ++t) {
        REQUIRE(tr.flips[t] == eng[t]);
        total += eng[t].size();
    }
    CHECK(total > 1000);
}

TEST_CASE("mirror mode with a wide exponent table and residual carry") {
    const auto w = random_weights(32, 6, 3);
    const Schedule sched = make_schedule(32, 1, 4000);
    PrecisionProfile prof;
    prof.dynamics.exp.frac_bits = 12;
    prof.dynamics.carry_residual = true;
    prof.dynamics.dt_exp = -6;
    const DenseTrace tr = dense_simulate(w, sched, 8, 4000, prof);
    CHECK(tr.flips == engine_flips(w, sched, 8, prof.dynamics));
}

TEST_CASE("fields in the dense trace match the energy") {
    const auto w = random_weights(20, 4, 2);
    const Schedule sched = Schedule::constant(Temperature(2, 32), 500);
    PrecisionProfile prof;
    const DenseTrace tr = dense_simulate(w, sched, 1, 500, prof, 50);
    CHECK(tr.frames.size() == 11);
    for (const auto& f : tr.frames) {
        CHECK(f.z == dense_fields(w, f.s));
        if (f.step > 0) CHECK(tr.energies[f.step - 1] == energy(f.s, w));
    }
    std::int64_t best = energy(tr.frames[0].s, w);
    for (const auto e : tr.energies) best = std::min(best, e);
    CHECK(tr.best_energy == best);
    CHECK(energy(tr.best_s, w) == best);
}

TEST_CASE("real mode increments are exact powers of two") {
    WeightMatrix w(3, 4);
    w.set_code(0, 1, 2);
    w.set_code(1, 2, -1);
    w.set_bias(0, 1);
    const Schedule sched = Schedule::constant(Temperature(0, 32), 3);
    PrecisionProfile prof;
    prof.mode = Precision::real;
    const DenseTrace tr = dense_simulate(w, sched, 4, 3, prof, 1);
    for (std::size_t k = 1; k < tr.frames.size(); ++k) {
        const auto& a = tr.frames[k - 1];
        const auto& b = tr.frames[k];
        for (std::size_t i = 0; i < 3; ++i) {
            if (a.s[i] != b.s[i]) continue;
            const int sz = a.s[i] ? -a.z[i] : a.z[i];
            const double inc = std::ldexp(1.0, sz - 8);
            CHECK(std::abs(b.x[i] - a.x[i]) == inc);
        }
    }
}

TEST_CASE("zero couplings drift linearly") {
    const WeightMatrix w(4, 2);
    const Schedule sched = Schedule::constant(Temperature(0, 32), 2000);
    for (const auto mode : {Precision::mirror, Precision::real}) {
        PrecisionProfile prof;
        prof.mode = mode;
        const DenseTrace tr = dense_simulate(w, sched, 12, 2000, prof, 1);
        for (std::size_t i = 0; i < 4; ++i) {
            std::vector<std::uint64_t> when;
            for (std::size_t t = 0; t < tr.flips.size(); ++t)
                for (const auto j : tr.flips[t])
                    if (j == i) when.push_back(t);
            REQUIRE(when.size() >= 3);
            // After the first boundary hit, a full traverse takes 2^8 steps.
            for (std::size_t k = 1; k < when.size(); ++k) CHECK(when[k] - when[k - 1] == 256);
            // Before it, the distance to the boundary sets the timing.
            const double x0 = tr.frames[0].x[i];
            const double dist = tr.frames[0].s[i] ? x0 : 1.0 - x0;
            CHECK(static_cast<double>(when[0] + 1) == std::ceil(dist * 256.0));
        }
    }
}

TEST_CASE("guards") {
    const WeightMatrix w(4, 2);
    PrecisionProfile prof;
    CHECK_THROWS_AS(dense_simulate(w, Schedule::constant(Temperature(0, 32), 10), 1, 11, prof),
                    std::invalid_argument);
    CHECK_THROWS_AS(dense_simulate(WeightMatrix(4097, 2), Schedule::constant(Temperature(0, 32), 1),
                                   1, 1, prof),
                    std::invalid_argument);
    Graph big;
    big.n = 25;
    CHECK_THROWS_AS(brute_force_maxcut(big), std::invalid_argument);
}

TEST_CASE("brute force examples") {
    CHECK(brute_force_maxcut(parse_maxcut("3 3\n1 2 1\n1 3 1\n2 3 1")).value == 2);
    CHECK(brute_force_maxcut(parse_maxcut("2 1\n1 2 -1")).value == 0);
    CHECK(brute_force_maxcut(parse_maxcut("4 6\n1 2 1\n1 3 1\n1 4 1\n2 3 1\n2 4 1\n3 4 1")).value ==
          4);
}

TEST_CASE("brute force agrees with naive enumeration") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Graph g = random_graph(9, 0.7, seed);
        const auto best = brute_force_maxcut(g);
        CHECK(cut_value(g, best.assignment) == best.value);
        CHECK(best.assignment[0] == 0);
        std::int64_t naive = 0;
        for (std::uint32_t m = 0; m < 512; ++m) {
            std::vector<std::uint8_t> s(9);
            for (std::size_t i = 0; i < 9; ++i) s[i] = (m >> i) & 1u;
            naive = std::max(naive, cut_value(g, s));
        }
        CHECK(best.value == naive);
    }
}

}  // TEST_SUITE
