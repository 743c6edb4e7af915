#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace glitchsim::timing {

enum class Stage { IF, ID, EX, WB };
const char* stage_name(Stage s);
std::optional<Stage> stage_from_name(std::string_view name);

enum class Policy { Zero, Stale, SeededRandom };
const char* policy_name(Policy p);
std::optional<Policy> policy_from_name(std::string_view name);

struct Trigger {
    uint32_t target_pc = 0;
    Stage target_stage = Stage::IF;
    uint32_t occurrence = 1;  // fire on the n-th dynamic instance
    bool operator==(const Trigger&) const = default;
};

struct GlitchSpec {
    double t_offset_ns = 0;
    double t_width_ns = 0;
    Trigger trigger;
    bool operator==(const GlitchSpec&) const = default;
};

// Effective shortened period at the glitched edge.
inline double glitch_period(const GlitchSpec& spec) {
    return spec.t_offset_ns + spec.t_width_ns;
}

// Canonical endpoint names used by the machine model. "if_id.in" is the
// compressed-decoder input latch (segment d1), "if_id.out" the decoder
// output side of the if_id register (segment d2); the remaining endpoints
// carry coarse per-word arrival groups.
inline constexpr const char* kEpIfIdIn = "if_id.in";
inline constexpr const char* kEpIfIdOut = "if_id.out";
inline constexpr const char* kEpIdExInstr = "id_ex.instr";
inline constexpr const char* kEpIdExOpA = "id_ex.op_a";
inline constexpr const char* kEpIdExOpB = "id_ex.op_b";
inline constexpr const char* kEpExWbResult = "ex_wb.result";
inline constexpr const char* kEpExWbNextPc = "ex_wb.next_pc";
inline constexpr const char* kEpWbValue = "wb.value";

struct TimingProfile {
    double clock_period_ns = 20.0;
    // endpoint name -> per-bit arrival times (index 0 = bit 0)
    std::map<std::string, std::vector<double>> endpoints;
    // (mnemonic, endpoint-or-"*") -> slack in ns, subtracted from arrivals
    std::map<std::pair<std::string, std::string>, double> slacks;
    std::string content_hash;  // FNV-1a of the profile text

    bool has_endpoint(std::string_view name) const {
        return endpoints.count(std::string(name)) != 0;
    }
    double slack_for(std::string_view mnemonic, std::string_view endpoint) const;
};

// Bit i set iff arrival[i] - slack > t_glitch: that bit's data had not
// arrived at the glitched edge. Throws std::out_of_range on an unknown
// endpoint.
uint32_t violated_bits(const TimingProfile& profile, std::string_view endpoint,
                       double t_glitch_ns, double slack_ns = 0.0);

// Substitute latched values on violated bits per policy. Non-violated bits
// take value_intended; violated bits take 0 (Zero), value_previous (Stale)
// or deterministic pseudo-random bits derived from seed (SeededRandom).
uint32_t apply_violation(uint32_t value_intended, uint32_t value_previous, uint32_t mask,
                         Policy policy, uint64_t seed);

// Profile file parsing. parse_profile throws std::runtime_error on schema
// errors; validate_profile returns the list of invariant violations (empty
// means valid); load_profile does both and throws if anything is wrong.
TimingProfile parse_profile(std::string_view text);
std::vector<std::string> validate_profile(const TimingProfile& profile);
TimingProfile load_profile(const std::string& path);

uint64_t splitmix64(uint64_t x);
std::string fnv1a_hex(std::string_view data);

}  // namespace glitchsim::timing
