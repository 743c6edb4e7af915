#include "classifier.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace glitchsim::classify {

using sim::RetireRecord;
using sim::RunResult;

namespace {

// Legal retires only; illegal slots are flushed and carry no architectural
// payload beyond the zero-write, which is judged separately.
std::vector<const RetireRecord*> legal_stream(const RunResult& r) {
    std::vector<const RetireRecord*> out;
    for (const auto& rec : r.retire_trace)
        if (!rec.illegal) out.push_back(&rec);
    return out;
}

// the retire record of a specific fetched instance
const RetireRecord* instance_at(const RunResult& r, uint32_t pc, uint32_t fetch_occ) {
    for (const auto& rec : r.retire_trace)
        if (rec.pc == pc && rec.fetch_occurrence == fetch_occ) return &rec;
    return nullptr;
}

std::string element_for_endpoint(const std::string& ep) {
    if (ep.rfind("if_id", 0) == 0) return "if_id";
    if (ep.rfind("id_ex", 0) == 0) return "id_ex";
    if (ep.rfind("ex_wb", 0) == 0) return "ex_wb";
    return "regfile";
}

}  // namespace

const char* category_name(Category c) {
    switch (c) {
        case Category::NoEffect: return "no_effect";
        case Category::InstructionSkip: return "instruction_skip";
        case Category::DataZeroization: return "data_zeroization";
        case Category::PartialDataCorruption: return "partial_data_corruption";
        case Category::PcRedirection: return "pc_redirection";
        case Category::CrashOrHang: return "crash_or_hang";
        case Category::OtherStateMismatch: return "other_state_mismatch";
        case Category::MultiEffect: return "multi_effect";
    }
    return "?";
}

isa::FieldDiff attribute_fields(isa::RawInstr golden_word, isa::RawInstr corrupted_word) {
    return isa::diff_fields(isa::decode(golden_word), isa::decode(corrupted_word));
}

std::optional<uint32_t> resolve_fetch_occurrence(const sim::RunResult& golden, uint32_t pc,
                                                 uint32_t arch_occurrence) {
    uint32_t seen = 0;
    for (const auto& rec : golden.retire_trace)
        if (rec.pc == pc && !rec.illegal && ++seen == arch_occurrence)
            return rec.fetch_occurrence;
    return std::nullopt;
}

FaultOutcome classify(const RunResult& golden, const RunResult& glitched,
                      const TargetInfo& target) {
    if (!golden.latch_events.empty())
        throw std::invalid_argument("classify: golden run carries latch events");

    FaultOutcome out;
    out.illegal_raised =
        glitched.final_state.illegal_count > golden.final_state.illegal_count;

    // no_effect iff the architectural outcome is bit-identical; a latch event
    // whose bits happened to match leaves no observable fault
    if (golden.retire_trace == glitched.retire_trace &&
        golden.final_state == glitched.final_state)
        return out;

    // field attribution from the earliest corrupted instruction-word latch
    for (const char* ep : {timing::kEpIfIdIn, timing::kEpIfIdOut, timing::kEpIdExInstr}) {
        auto it = std::find_if(glitched.latch_events.begin(), glitched.latch_events.end(),
                               [&](const sim::LatchEvent& e) { return e.endpoint == ep; });
        if (it != glitched.latch_events.end()) {
            isa::RawInstr g = ep == timing::kEpIfIdIn
                                  ? isa::RawInstr::from_bits(it->value_intended)
                                  : isa::RawInstr{it->value_intended, 32};
            isa::RawInstr c = ep == timing::kEpIfIdIn
                                  ? isa::RawInstr{it->value_latched & (g.length == 16 ? 0xFFFFu
                                                                                      : ~0u),
                                                  g.length}
                                  : isa::RawInstr{it->value_latched, 32};
            out.field_diff = attribute_fields(g, c);
            break;
        }
    }

    if (!glitched.latch_events.empty()) {
        out.first_divergence = {{glitched.latch_events.front().cycle,
                                 element_for_endpoint(glitched.latch_events.front().endpoint)}};
    }

    // --- target-anchored evidence -------------------------------------
    const RetireRecord* g_rec = instance_at(golden, target.pc, target.occurrence);
    if (g_rec && g_rec->illegal) g_rec = nullptr;
    const RetireRecord* c_rec = instance_at(glitched, target.pc, target.occurrence);

    bool skip_ev = false, zero_ev = false, partial_ev = false;
    if (g_rec && c_rec) {
        if (c_rec->illegal && !c_rec->rd_written) skip_ev = true;
        if (g_rec->rd_written && c_rec->rd_written &&
            g_rec->rd_written->first == c_rec->rd_written->first) {
            uint32_t gv = g_rec->rd_written->second;
            uint32_t cv = c_rec->rd_written->second;
            if (cv != gv) {
                if (cv == 0 && gv != 0) zero_ev = true;
                else partial_ev = true;
            }
        }
    } else if (g_rec && !c_rec && out.illegal_raised) {
        skip_ev = true;
    }

    // --- retired-pc stream comparison ----------------------------------
    // Tolerated differences: deletion of exactly the attacked slot and
    // realignment junk fetched from strictly inside the corrupted slot's
    // byte range. Anything else is a control-flow departure.
    bool redirect_ev = false;
    {
        auto gs = legal_stream(golden);
        auto cs = legal_stream(glitched);
        uint32_t tgt_len = g_rec ? g_rec->fetched.length / 8 : 4;
        auto in_window = [&](uint32_t pc) {
            return pc > target.pc && pc < target.pc + tgt_len;
        };
        size_t i = 0, j = 0;
        bool target_deleted = false;
        while (i < gs.size() && j < cs.size()) {
            if (gs[i]->pc == cs[j]->pc) {
                ++i;
                ++j;
                continue;
            }
            if (!target_deleted && gs[i]->pc == target.pc &&
                gs[i]->fetch_occurrence == target.occurrence) {
                target_deleted = true;
                ++i;
                continue;
            }
            if (in_window(cs[j]->pc)) {
                ++j;
                continue;
            }
            redirect_ev = true;
            break;
        }
        while (!redirect_ev && j < cs.size()) {
            if (in_window(cs[j]->pc)) ++j;
            else redirect_ev = true;
        }
        if (!redirect_ev && i < gs.size()) {
            // glitched run ended early: a wild fetch pc is a redirect, a
            // frozen or truncated run with an intact prefix is a crash
            if (glitched.halt == sim::HaltReason::PcOutOfRange) redirect_ev = true;
        }
    }

    bool crash_ev = glitched.halt != sim::HaltReason::CleanHalt &&
                    golden.halt == sim::HaltReason::CleanHalt;

    if (zero_ev) out.members.push_back(Category::DataZeroization);
    else if (partial_ev) out.members.push_back(Category::PartialDataCorruption);
    if (skip_ev && !zero_ev && !partial_ev) out.members.push_back(Category::InstructionSkip);
    if (redirect_ev) out.members.push_back(Category::PcRedirection);

    if (out.members.size() >= 2) {
        out.category = Category::MultiEffect;
        out.critical = true;
    } else if (out.members.size() == 1) {
        out.category = out.members.front();
        out.critical = true;
    } else if (crash_ev) {
        out.category = Category::CrashOrHang;
        out.members.clear();
    } else {
        out.category = Category::OtherStateMismatch;
    }

    if (out.category == Category::InstructionSkip && out.illegal_raised) out.case_id = 1;
    else if (out.category == Category::DataZeroization)
        out.case_id = out.illegal_raised ? 2 : 3;
    else if (out.category == Category::PartialDataCorruption && !out.illegal_raised)
        out.case_id = 4;

    if (!out.first_divergence) {
        // fault surfaced without a recorded latch event: anchor on the first
        // retire difference
        size_t n = std::min(golden.retire_trace.size(), glitched.retire_trace.size());
        for (size_t k = 0; k < n; ++k) {
            if (!(golden.retire_trace[k] == glitched.retire_trace[k])) {
                out.first_divergence = {{glitched.retire_trace[k].cycle_retired, "retire_stream"}};
                break;
            }
        }
    }
    return out;
}

std::vector<BandPoint> case_bands_check(const isa::ProgramImage& image, uint32_t entry_pc,
                                        const timing::TimingProfile& profile,
                                        const TargetInfo& target, double t_offset,
                                        const std::vector<double>& widths,
                                        const sim::MachineConfig& cfg) {
    std::vector<BandPoint> out;
    auto golden = sim::run_pipeline(image, entry_pc, cfg);
    TargetInfo resolved = target;
    if (auto occ = resolve_fetch_occurrence(golden, target.pc, target.occurrence))
        resolved.occurrence = *occ;
    for (double w : widths) {
        timing::GlitchSpec spec{
            t_offset, w, timing::Trigger{resolved.pc, timing::Stage::IF, resolved.occurrence}};
        inject::ArmedGlitch glitch(spec, profile, cfg.policy, cfg.seed);
        auto glitched = sim::run_pipeline(image, entry_pc, cfg, &glitch);
        auto o = classify(golden, glitched, resolved);
        out.push_back(BandPoint{w, timing::glitch_period(spec), o.category, o.case_id,
                                o.illegal_raised});
    }
    return out;
}

std::string outcome_to_json(const FaultOutcome& o) {
    std::ostringstream os;
    os << "{\"category\":\"" << category_name(o.category) << "\"";
    os << ",\"case\":";
    if (o.case_id) os << o.case_id;
    else os << "null";
    os << ",\"illegal_raised\":" << (o.illegal_raised ? "true" : "false");
    os << ",\"critical\":" << (o.critical ? "true" : "false");
    os << ",\"field_diff\":";
    if (o.field_diff) {
        os << "{\"changed\":[";
        for (size_t i = 0; i < o.field_diff->changed_fields.size(); ++i) {
            if (i) os << ",";
            os << "\"" << isa::field_kind_name(o.field_diff->changed_fields[i]) << "\"";
        }
        os << "],\"class\":\"" << isa::outcome_class_name(o.field_diff->outcome_class) << "\"}";
    } else {
        os << "null";
    }
    os << ",\"first_divergence\":";
    if (o.first_divergence) {
        os << "{\"cycle\":" << o.first_divergence->first << ",\"element\":\""
           << o.first_divergence->second << "\"}";
    } else {
        os << "null";
    }
    os << ",\"members\":[";
    for (size_t i = 0; i < o.members.size(); ++i) {
        if (i) os << ",";
        os << "\"" << category_name(o.members[i]) << "\"";
    }
    os << "]}";
    return os.str();
}

}  // namespace glitchsim::classify
