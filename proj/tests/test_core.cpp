#include "cbm/core.hpp"
#include "cbm/ddmac.hpp"
#include "cbm/rng.hpp"

#include <doctest.h>

#include <numeric>
#include <stdexcept>

using namespace cbm;

namespace {

WeightMatrix random_weights(std::size_t n, int bits, std::uint64_t seed, int bias_range = 4) {
    WeightMatrix w(n, bits);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        w.set_bias(i, static_cast<std::int32_t>(uniform_int(rng, -bias_range, bias_range)));
        for (std::size_t j = i + 1; j < n; ++j)
            w.set_code(i, j, static_cast<int>(uniform_int(rng, -w.max_code(), w.max_code())));
    }
    return w;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("weight matrix invariants") {
    WeightMatrix w(4, 2, 2);
    w.set_code(0, 1, -1);
    CHECK(w.weight(0, 1) == -2);
    CHECK(w.weight(1, 0) == -2);
    CHECK(w.code(1, 0) == -1);
    CHECK_THROWS(w.set_code(0, 2, 2));  // 2-bit codes are within +/-1
    CHECK_THROWS(w.set_code(1, 1, 1));
    CHECK_THROWS(w.disconnect(0, 1));   // nonzero weight
    w.disconnect(2, 3);
    CHECK_FALSE(w.connected(3, 2));
    CHECK(w.fan_out(2) == 2);
    CHECK_THROWS(w.set_code(2, 3, 1));
    CHECK_THROWS(WeightMatrix(0));
}

TEST_CASE("init_state is deterministic and uniform") {
    const auto a = init_state(4, 7);
    const auto b = init_state(4, 7);
    CHECK(a == b);
    CHECK_FALSE(a == init_state(4, 8));
    CHECK_THROWS_AS(init_state(0, 1), std::invalid_argument);

    const DynamicsConfig cfg;
    const auto big = init_state(1024, 1, cfg);
    double mean = 0;
    std::size_t ones = 0;
    for (std::size_t i = 0; i < 1024; ++i) {
        CHECK(big.x[i] < cfg.x_one());
        mean += static_cast<double>(big.x[i]) / cfg.x_one();
        ones += big.s[i];
    }
    mean /= 1024;
    CHECK(mean >= 0.45);
    CHECK(mean <= 0.55);
    CHECK(ones > 400);
    CHECK(ones < 624);
}

TEST_CASE("init with weights computes dense fields") {
    const auto w = random_weights(20, 3, 2);
    const auto st = init_state(w, 9);
    for (std::size_t i = 0; i < 20; ++i) {
        std::int64_t z = w.bias(i);
        for (std::size_t j = 0; j < 20; ++j) z += st.s[j] ? w.weight(i, j) : 0;
        CHECK(st.z[i] == z);
    }
}

TEST_CASE("neuron_step drift at zero field") {
    CbmState st = init_state(1, 1);
    st.s[0] = 0;
    st.z[0] = 0;
    st.x[0] = 1u << 15;  // 0.5
    CHECK_FALSE(neuron_step(st, 0, Temperature(0, 32)).has_value());
    CHECK(st.x[0] == 33024);  // 0.50390625 in Q0.16
    CHECK(static_cast<double>(st.x[0]) / 65536.0 == 0.50390625);
}

TEST_CASE("neuron_step forced flip and stable satisfied neuron") {
    CbmState st = init_state(1, 1);
    st.s[0] = 0;
    st.z[0] = 257;
    st.x[0] = 0;
    auto f = neuron_step(st, 0, Temperature(5, 32));
    REQUIRE(f.has_value());
    CHECK(f->new_s);
    CHECK(st.x[0] == DynamicsConfig{}.x_one());

    st.s[0] = 1;
    st.z[0] = 5000;
    st.x[0] = 100;
    CHECK_FALSE(neuron_step(st, 0, Temperature(0, 32)).has_value());
    CHECK(st.x[0] == 100);
}

TEST_CASE("downward crossing clamps at zero") {
    CbmState st = init_state(1, 1);
    st.s[0] = 1;
    st.z[0] = -64;  // exponent +64/T0: fast descent
    st.x[0] = 1000;
    const auto f = neuron_step(st, 0, Temperature(3, 32));
    REQUIRE(f.has_value());
    CHECK_FALSE(f->new_s);
    CHECK(st.x[0] == 0);
}

TEST_CASE("residual carry keeps the overshoot") {
    DynamicsConfig cfg;
    cfg.carry_residual = true;
    CbmState st = init_state(1, 1, cfg);
    st.s[0] = 0;
    st.z[0] = 0;
    st.x[0] = cfg.x_one() - 56;  // increment at zero field is 256 ulps
    REQUIRE(neuron_step(st, 0, Temperature(0, 32), cfg).has_value());
    CHECK(st.x[0] == cfg.x_one() - 200);
}

TEST_CASE("machine_step uniform drift") {
    WeightMatrix w(8);
    CbmState st = init_state(w, 3);
    for (std::size_t i = 0; i < 8; ++i) {
        st.x[i] = 1u << 15;
        st.s[i] = 0;
        st.z[i] = 0;
    }
    const auto flips = machine_step(st, w, Temperature(0, 32));
    CHECK(flips.empty());
    CHECK(st.step == 1);
    for (const auto x : st.x) CHECK(x == 33024);
}

TEST_CASE("machine_step reports the single forced neuron") {
    WeightMatrix w(6);
    CbmState st = init_state(w, 3);
    for (std::size_t i = 0; i < 6; ++i) {
        st.x[i] = 1u << 15;
        st.s[i] = 0;
        st.z[i] = 0;
    }
    st.z[4] = 300;
    const auto flips = machine_step(st, w, Temperature(5, 32));
    REQUIRE(flips.size() == 1);
    CHECK(flips[0].neuron == 4);
    CHECK(flips[0].new_s);
    CHECK(flips[0].step == 0);
    CHECK(st.s[4] == 1);
}

TEST_CASE("machine_step rejects dimension mismatch") {
    WeightMatrix w(4);
    CbmState st = init_state(5, 1);
    CHECK_THROWS_AS(machine_step(st, w, Temperature()), std::invalid_argument);
}

TEST_CASE("trajectories are deterministic and X stays in [0, 1]") {
    const auto w = random_weights(32, 3, 4);
    auto run = [&] {
        CbmState st = init_state(w, 21);
        MacCounters c;
        std::vector<std::vector<FlipEvent>> log;
        for (int t = 0; t < 2000; ++t) {
            auto r = scheduled_step(st, w, Temperature(2, 40), {}, c);
            for (const auto x : st.x) REQUIRE(x <= DynamicsConfig{}.x_one());
            log.push_back(std::move(r.flips));
        }
        return std::make_pair(st, log);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("energy examples") {
    WeightMatrix w2(2);
    w2.set_code(0, 1, 1);
    CHECK(energy(std::vector<std::uint8_t>{0, 0}, w2) == 0);
    CHECK(energy(std::vector<std::uint8_t>{1, 1}, w2) == -1);

    WeightMatrix w3(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) w3.set_code(i, j, -1);
    CHECK(energy(std::vector<std::uint8_t>{1, 1, 1}, w3) == 3);

    w3.set_bias(1, 5);
    CHECK(energy(std::vector<std::uint8_t>{0, 1, 0}, w3) == -5);
}

TEST_CASE("sequential order propagates flips within the step") {
    // Neuron 0 is forced up; with +1 coupling neuron 1 then sees a forcing field.
    WeightMatrix w(2, 16);
    w.set_code(0, 1, 2000);
    w.set_bias(0, 1000);
    CbmState st = init_state(w, 1);
    st.s = {0, 0};
    st.x = {0, 0};
    recompute_fields(st, w);
    DynamicsConfig seq;
    seq.sequential = true;
    MacCounters c;
    CbmState st2 = st;
    const auto r = scheduled_step(st, w, Temperature(0, 32), seq, c);
    CHECK(r.flips.size() == 2);
    MacCounters c2;
    const auto r2 = scheduled_step(st2, w, Temperature(0, 32), {}, c2);
    CHECK(r2.flips.size() == 1);
    CHECK(st.z == dense_fields(w, st.s));
    CHECK(st2.z == dense_fields(w, st2.s));
}

}  // TEST_SUITE
