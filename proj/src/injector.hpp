#pragma once

#include "machine.hpp"
#include "timing.hpp"

namespace glitchsim::inject {

// A single armed clock glitch. Fires at most once per run, at the first
// edge where the target pc's dynamic instance occupies the target stage;
// every latch port owned by that stage at that edge gets its violated bits
// substituted per the policy.
class ArmedGlitch final : public sim::LatchHook {
public:
    ArmedGlitch(timing::GlitchSpec spec, const timing::TimingProfile& profile,
                timing::Policy policy, uint64_t seed);

    void on_edge(sim::EdgeContext& edge, std::vector<sim::LatchEvent>& events) override;
    bool should_fire(const sim::EdgeContext& edge) const;

    const timing::GlitchSpec& spec() const { return spec_; }
    bool fired() const { return fired_; }
    uint64_t fired_cycle() const { return fired_cycle_; }
    bool fired_while_stalled() const { return fired_stalled_; }

private:
    timing::GlitchSpec spec_;
    const timing::TimingProfile& profile_;
    timing::Policy policy_;
    uint64_t seed_;
    bool fired_ = false;
    uint64_t fired_cycle_ = 0;
    bool fired_stalled_ = false;
};

// Validate a spec against a profile (positive offset/width, glitch shorter
// than the clock period, occurrence >= 1). Returns an error message or "".
std::string validate_spec(const timing::GlitchSpec& spec, const timing::TimingProfile& profile);

}  // namespace glitchsim::inject
