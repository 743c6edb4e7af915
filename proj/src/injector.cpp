#include "injector.hpp"

#include <stdexcept>

namespace glitchsim::inject {

ArmedGlitch::ArmedGlitch(timing::GlitchSpec spec, const timing::TimingProfile& profile,
                         timing::Policy policy, uint64_t seed)
    : spec_(spec), profile_(profile), policy_(policy), seed_(seed) {
    auto err = validate_spec(spec, profile);
    if (!err.empty()) throw std::invalid_argument(err);
}

bool ArmedGlitch::should_fire(const sim::EdgeContext& edge) const {
    if (fired_) return false;
    const auto& s = edge.stages[size_t(spec_.trigger.target_stage)];
    return s.valid && s.pc == spec_.trigger.target_pc &&
           s.occurrence == spec_.trigger.occurrence;
}

void ArmedGlitch::on_edge(sim::EdgeContext& edge, std::vector<sim::LatchEvent>& events) {
    if (!should_fire(edge)) return;
    auto& s = edge.stages[size_t(spec_.trigger.target_stage)];
    fired_ = true;
    fired_cycle_ = edge.cycle;
    fired_stalled_ = s.stalled;

    const double t_glitch = timing::glitch_period(spec_);
    for (sim::LatchSlot* slot : s.slots) {
        if (!profile_.has_endpoint(slot->endpoint)) continue;  // unmodeled: never late
        double slack = profile_.slack_for(s.mnemonic, slot->endpoint);
        uint32_t mask =
            timing::violated_bits(profile_, slot->endpoint, t_glitch, slack) & slot->width_mask;
        if (mask == 0) continue;
        slot->mask = mask;
        slot->latched = timing::apply_violation(slot->intended, slot->previous, mask, policy_,
                                                seed_);
        events.push_back(sim::LatchEvent{edge.cycle, slot->endpoint, mask, slot->intended,
                                         slot->latched});
    }
}

std::string validate_spec(const timing::GlitchSpec& spec, const timing::TimingProfile& profile) {
    if (spec.t_offset_ns <= 0) return "glitch offset must be positive";
    if (spec.t_width_ns <= 0) return "glitch width must be positive";
    if (timing::glitch_period(spec) >= profile.clock_period_ns)
        return "glitch must shorten the cycle: offset + width must stay below the clock period";
    if (spec.trigger.occurrence < 1) return "trigger occurrence must be at least 1";
    return "";
}

}  // namespace glitchsim::inject
