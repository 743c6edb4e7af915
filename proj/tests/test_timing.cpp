#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "timing.hpp"

#include <cstdlib>
#include <random>

using namespace glitchsim::timing;

namespace {
std::string repo_root() {
    const char* r = std::getenv("GLITCHSIM_ROOT");
    return r ? r : "../..";
}
TimingProfile default_profile() {
    return load_profile(repo_root() + "/profiles/default.profile");
}
GlitchSpec spec(double off, double width) {
    return GlitchSpec{off, width, Trigger{}};
}
}  // namespace

TEST_CASE("glitch period is the offset/width sum") {
    CHECK(glitch_period(spec(0.833, 2.967)) == doctest::Approx(3.800).epsilon(1e-9));
    CHECK(glitch_period(spec(0.833, 3.567)) == doctest::Approx(4.400).epsilon(1e-9));
    // degenerate offset
    CHECK(glitch_period(spec(1e-12, 2.0)) == doctest::Approx(2.0));
}

TEST_CASE("glitch period is strictly increasing in both arguments") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(0.01, 9.0);
    for (int i = 0; i < 2000; ++i) {
        double o = d(rng), w = d(rng), bump = d(rng) * 0.1 + 1e-9;
        CHECK(glitch_period(spec(o + bump, w)) > glitch_period(spec(o, w)));
        CHECK(glitch_period(spec(o, w + bump)) > glitch_period(spec(o, w)));
    }
}

TEST_CASE("violated bits on the shipped default profile") {
    auto p = default_profile();

    // effective period at or above the slowest arrival: nothing violated
    for (const auto& [name, arr] : p.endpoints) {
        CHECK(violated_bits(p, name, 19.99) == 0);
        CHECK(violated_bits(p, name, p.clock_period_ns) == 0);
    }

    // whole decoder input stale at 3.5ns (brute-force over bits)
    uint32_t m = violated_bits(p, kEpIfIdIn, 3.5);
    CHECK(m == 0xFFFFFFFFu);
    for (int b = 0; b < 32; ++b) CHECK(((m >> b) & 1) == 1);

    // only the top-byte group still in flight at 5.15ns
    CHECK(violated_bits(p, kEpIfIdOut, 5.15) == 0xFF000000u);

    // decoder input clean but decoder output fully stale at 4.8ns
    CHECK(violated_bits(p, kEpIfIdIn, 4.8) == 0);
    CHECK(violated_bits(p, kEpIfIdOut, 4.8) == 0xFFFFFFFFu);

    // rd field survives in the mid band
    CHECK(violated_bits(p, kEpIfIdIn, 4.1) == 0xFFFFF07Fu);

    CHECK_THROWS(violated_bits(p, "no.such.endpoint", 3.0));
}

TEST_CASE("violation monotonicity: a shorter period never heals a bit") {
    auto p = default_profile();
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> d(0.0, 21.0);
    for (const auto& [name, arr] : p.endpoints) {
        for (int i = 0; i < 500; ++i) {
            double t1 = d(rng), t2 = d(rng);
            if (t1 > t2) std::swap(t1, t2);
            uint32_t m1 = violated_bits(p, name, t1);
            uint32_t m2 = violated_bits(p, name, t2);
            CHECK((m2 & ~m1) == 0);  // m2 subset of m1
        }
    }
}

TEST_CASE("slack shifts the violation threshold per mnemonic") {
    auto p = default_profile();
    CHECK(p.slack_for("auipc", kEpIfIdIn) == doctest::Approx(2.8));
    CHECK(p.slack_for("c.lwsp", kEpIfIdIn) == doctest::Approx(-0.25));
    CHECK(p.slack_for("c.lwsp", kEpExWbResult) == doctest::Approx(1.8));
    CHECK(p.slack_for("lw", kEpIfIdIn) == 0.0);
    CHECK(p.slack_for("jal", kEpExWbNextPc) == 0.0);

    // with 2.8ns of slack the auipc decoder-input path is already safe at 3.5
    CHECK(violated_bits(p, kEpIfIdIn, 3.5, p.slack_for("auipc", kEpIfIdIn)) == 0);
    // negative slack keeps c.lwsp violable past the nominal band edge
    CHECK(violated_bits(p, kEpIfIdOut, 5.40, p.slack_for("c.lwsp", kEpIfIdOut)) != 0);
}

TEST_CASE("apply_violation policies") {
    CHECK(apply_violation(0x12345678, 0xFFFFFFFF, 0, Policy::Zero, 1) == 0x12345678);
    CHECK(apply_violation(0x12345678, 0xFFFFFFFF, 0xFFFFFFFF, Policy::Zero, 1) == 0);
    CHECK(apply_violation(0, 0xFFFFFFFF, 0xF0000000, Policy::Stale, 1) == 0xF0000000);
    CHECK(apply_violation(0xFFFFFFFF, 0, 0x000000FF, Policy::Zero, 1) == 0xFFFFFF00);

    // deterministic: same inputs and seed give the same output
    uint32_t a = apply_violation(0x12345678, 0x9ABCDEF0, 0x00FF00FF, Policy::SeededRandom, 42);
    uint32_t b = apply_violation(0x12345678, 0x9ABCDEF0, 0x00FF00FF, Policy::SeededRandom, 42);
    CHECK(a == b);
    // non-violated bits always keep the intended value
    CHECK((a & ~0x00FF00FFu) == (0x12345678u & ~0x00FF00FFu));
    // different seeds give different corrupt bits at least sometimes
    bool differs = false;
    for (uint64_t s = 0; s < 16 && !differs; ++s)
        differs = apply_violation(0x12345678, 0x9ABCDEF0, 0x00FF00FF, Policy::SeededRandom, s) != a;
    CHECK(differs);
}

TEST_CASE("profile validation names the offending endpoint and bit") {
    auto p = default_profile();
    CHECK(validate_profile(p).empty());

    auto bad = p;
    bad.endpoints["ex_wb.result"][5] = 25.0;  // past the clock period
    auto v1 = validate_profile(bad);
    REQUIRE(!v1.empty());
    CHECK(v1[0].find("ex_wb.result") != std::string::npos);
    CHECK(v1[0].find("bit 5") != std::string::npos);

    auto order = p;
    order.endpoints["if_id.in"][3] = 6.0;  // d1 arrival after the d2 arrival
    auto v2 = validate_profile(order);
    REQUIRE(!v2.empty());
    CHECK(v2[0].find("bit 3") != std::string::npos);

    auto neg = p;
    neg.endpoints["wb.value"][0] = -1.0;
    CHECK(!validate_profile(neg).empty());
}

TEST_CASE("profile parser rejects malformed input") {
    CHECK_THROWS(parse_profile("clock_period_ns banana\n"));
    CHECK_THROWS(parse_profile("bits 3:0 1.0\n"));  // bits outside endpoint
    CHECK_THROWS(parse_profile("endpoint e width 99\n"));
    CHECK_THROWS(parse_profile("endpoint e width 8\n  bits 9:9 1.0\n"));
    // an endpoint left without arrivals for some bits is a schema error
    CHECK_THROWS(parse_profile("clock_period_ns 20\nendpoint e width 8\n  bits 3:0 1.0\n"));
}

TEST_CASE("profile hash is stable over content") {
    auto p1 = default_profile();
    auto p2 = default_profile();
    CHECK(p1.content_hash == p2.content_hash);
    CHECK(!p1.content_hash.empty());
    auto other = parse_profile("clock_period_ns 20\nendpoint e width 4\n  bits * 1.0\n");
    CHECK(other.content_hash != p1.content_hash);
}
