#include "cbm/ddmac.hpp"
#include "cbm/rng.hpp"

#include <doctest.h>

#include <stdexcept>

using namespace cbm;

namespace {

WeightMatrix random_weights(std::size_t n, int bits, std::uint64_t seed) {
    WeightMatrix w(n, bits);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        w.set_bias(i, static_cast<std::int32_t>(uniform_int(rng, -8, 8)));
        for (std::size_t j = i + 1; j < n; ++j)
            w.set_code(i, j, static_cast<int>(uniform_int(rng, -w.max_code(), w.max_code())));
    }
    return w;
}

}  // namespace

TEST_SUITE("ddmac") {

TEST_CASE("empty flip list leaves Z and counters alone") {
    const auto w = random_weights(8, 4, 3);
    CbmState st = init_state(w, 3);
    machine_step(st, w, Temperature(0, 32));
    const auto z = st.z;
    MacCounters c;
    CHECK(apply_flips(st, w, {}, c) == 0);
    CHECK(st.z == z);
    CHECK(c.macs_total == 0);
    CHECK(c.steps == 1);
    CHECK(c.macs_dense_equivalent == 64);
}

TEST_CASE("single flip adds the column") {
    const auto w = random_weights(6, 4, 5);
    CbmState st = init_state(w, 5);
    st.s.assign(6, 0);
    recompute_fields(st, w);
    const auto before = st.z;
    st.s[2] = 1;
    st.step = 1;
    MacCounters c;
    const FlipEvent f{2, true, 0};
    apply_flips(st, w, std::span(&f, 1), c);
    for (std::size_t i = 0; i < 6; ++i) CHECK(st.z[i] == before[i] + w.weight(i, 2));
    CHECK(st.z == dense_fields(w, st.s));
    CHECK(c.macs_total == 6);
}

TEST_CASE("energy delta matches recomputation") {
    const auto w = random_weights(10, 4, 11);
    CbmState st = init_state(w, 11);
    Rng rng(99);
    for (int k = 0; k < 200; ++k) {
        const auto j = static_cast<std::uint32_t>(uniform_int(rng, 0, 9));
        const std::int64_t e0 = energy(st, w);
        st.s[j] ^= 1;
        const std::int64_t d = propagate_flip(st, w, FlipEvent{j, st.s[j] != 0, st.step});
        CHECK(energy(st, w) - e0 == d);
    }
    CHECK(st.z == dense_fields(w, st.s));
}

TEST_CASE("stale or uncommitted flips are rejected") {
    const auto w = random_weights(4, 2, 1);
    CbmState st = init_state(w, 1);
    st.step = 5;
    MacCounters c;
    const FlipEvent stale{0, st.s[0] != 0, 2};
    CHECK_THROWS_AS(apply_flips(st, w, std::span(&stale, 1), c), std::invalid_argument);
    const FlipEvent uncommitted{0, st.s[0] == 0, 4};
    CHECK_THROWS_AS(apply_flips(st, w, std::span(&uncommitted, 1), c), std::invalid_argument);
}

TEST_CASE("incremental Z stays exact over long random runs") {
    for (const std::size_t n : {16u, 64u}) {
        CAPTURE(n);
        const auto w = random_weights(n, 4, n);
        CbmState st = init_state(w, n + 1);
        MacCounters c;
        std::uint64_t flips = 0;
        for (int t = 0; t < 20000; ++t) {
            // Alternate hot and cold phases so both sparse and busy steps occur.
            const Temperature temp = (t / 1000) % 2 ? Temperature(3, 40) : Temperature(-2, 32);
            flips += scheduled_step(st, w, temp, {}, c).flips.size();
            if (t % 100 == 0) REQUIRE(st.z == dense_fields(w, st.s));
        }
        CHECK(st.z == dense_fields(w, st.s));
        CHECK(flips > 0);
        CHECK(c.flips_total == flips);
        CHECK(c.macs_total == flips * n);
        CHECK(c.macs_total <= c.macs_dense_equivalent);
    }
}

TEST_CASE("energy deltas telescope") {
    const auto w = random_weights(32, 4, 8);
    CbmState st = init_state(w, 8);
    MacCounters c;
    std::int64_t e = energy(st, w);
    for (int t = 0; t < 3000; ++t) {
        e += scheduled_step(st, w, Temperature(1, 32), {}, c).energy_delta;
        if (t % 50 == 0) REQUIRE(e == energy(st, w));
    }
    DynamicsConfig seq;
    seq.sequential = true;
    for (int t = 0; t < 3000; ++t) {
        e += scheduled_step(st, w, Temperature(1, 32), seq, c).energy_delta;
        if (t % 50 == 0) REQUIRE(e == energy(st, w));
    }
    CHECK(st.z == dense_fields(w, st.s));
}

TEST_CASE("DDMAC trajectory equals dense recomputation") {
    const auto w = random_weights(24, 4, 21);
    CbmState a = init_state(w, 4);
    CbmState b = a;
    MacCounters c;
    for (int t = 0; t < 5000; ++t) {
        const Temperature temp(1, 32 + t % 32);
        scheduled_step(a, w, temp, {}, c);
        machine_step(b, w, temp);
        recompute_fields(b, w);
        REQUIRE(a == b);
    }
}

TEST_CASE("masked accounting counts fan-out") {
    WeightMatrix w(5, 2);
    w.set_code(0, 1, 1);
    w.disconnect(0, 2);
    w.disconnect(0, 3);
    CHECK(w.fan_out(0) == 2);
    CbmState st = init_state(w, 2);
    st.step = 1;
    st.s[0] ^= 1;
    const FlipEvent f{0, st.s[0] != 0, 0};
    MacCounters dense, masked;
    CbmState st2 = st;
    apply_flips(st, w, std::span(&f, 1), dense, MacAccounting::dense);
    apply_flips(st2, w, std::span(&f, 1), masked, MacAccounting::masked);
    CHECK(dense.macs_total == 5);
    CHECK(masked.macs_total == 2);
    CHECK(st.z == st2.z);
}

TEST_CASE("mac report examples") {
    MacCounters c;
    for (int t = 0; t < 100; ++t) account_step(c, 10, 0, 0);
    auto r = mac_report(c);
    CHECK(r.reduction_fraction == 1.0);
    CHECK(r.avg_flip_rate == 0.0);

    MacCounters d;
    d.steps = 1000;
    d.neurons = 1024;
    d.flips_total = 10240;
    d.macs_total = 10240ull * 1024;
    d.macs_dense_equivalent = 1000ull * 1024 * 1024;
    r = mac_report(d);
    CHECK(r.avg_flip_rate == doctest::Approx(0.01));
    CHECK(r.macs_per_step == doctest::Approx(10240.0 * 1024 / 1000));
    CHECK(r.macs_per_step_per_neuron == doctest::Approx(10.24));
    CHECK(r.reduction_fraction == doctest::Approx(0.99));

    CHECK_THROWS_AS(mac_report(MacCounters{}), std::invalid_argument);
    CHECK_THROWS_AS(mac_report(c, 0), std::invalid_argument);
}

TEST_CASE("counters are monotone") {
    const auto w = random_weights(16, 4, 2);
    CbmState st = init_state(w, 2);
    MacCounters c, prev;
    for (int t = 0; t < 2000; ++t) {
        scheduled_step(st, w, Temperature(2, 32), {}, c);
        REQUIRE(c.macs_total >= prev.macs_total);
        REQUIRE(c.macs_dense_equivalent > prev.macs_dense_equivalent);
        REQUIRE(c.flips_total >= prev.flips_total);
        prev = c;
    }
    const auto r = mac_report(c);
    CHECK(r.reduction_fraction >= 0.0);
    CHECK(r.reduction_fraction <= 1.0);
    CHECK(r.avg_flip_rate <= 1.0);
}

}  // TEST_SUITE
