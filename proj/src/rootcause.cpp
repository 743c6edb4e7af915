#include "rootcause.hpp"

#include "injector.hpp"
#include "json.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace glitchsim::rootcause {

using json = nlohmann::ordered_json;

namespace {

std::string hex32(uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::setw(8) << std::setfill('0') << std::hex << v;
    return os.str();
}

std::string field_element(const std::string& endpoint) {
    if (endpoint == timing::kEpIfIdIn) return "if_id.instr_raw";
    if (endpoint == timing::kEpIfIdOut) return "if_id.decoder_out";
    if (endpoint == timing::kEpWbValue) return "regfile.write_bus";
    return endpoint;  // id_ex.* / ex_wb.* names match the register fields
}

}  // namespace

std::optional<std::pair<uint64_t, std::string>> first_divergence(
    const std::vector<sim::Snapshot>& golden, const std::vector<sim::Snapshot>& glitched) {
    size_t n = std::min(golden.size(), glitched.size());
    for (size_t i = 0; i < n; ++i) {
        const auto& g = golden[i];
        const auto& c = glitched[i];
        if (g.if_id.valid != c.if_id.valid || g.if_id.pc != c.if_id.pc ||
            g.if_id.raw != c.if_id.raw || g.if_id.out != c.if_id.out ||
            g.if_id.in_mask != c.if_id.in_mask || g.if_id.out_mask != c.if_id.out_mask)
            return {{g.cycle, "if_id"}};
        if (g.id_ex.valid != c.id_ex.valid || g.id_ex.pc != c.id_ex.pc ||
            g.id_ex.instr != c.id_ex.instr || g.id_ex.op_a != c.id_ex.op_a ||
            g.id_ex.op_b != c.id_ex.op_b || g.id_ex.result_mask != c.id_ex.result_mask)
            return {{g.cycle, "id_ex"}};
        if (g.ex_wb.valid != c.ex_wb.valid || g.ex_wb.pc != c.ex_wb.pc ||
            g.ex_wb.value != c.ex_wb.value || g.ex_wb.addr != c.ex_wb.addr ||
            g.ex_wb.result_mask != c.ex_wb.result_mask)
            return {{g.cycle, "ex_wb"}};
        if (g.pc_if != c.pc_if) return {{g.cycle, "pc_if"}};
        if (g.regs != c.regs) return {{g.cycle, "regfile"}};
        if (g.illegal_count != c.illegal_count) return {{g.cycle, "illegal_flag"}};
    }
    if (golden.size() != glitched.size()) {
        uint64_t cycle = n < golden.size() ? golden[n].cycle : glitched[n].cycle;
        return {{cycle, "halt"}};
    }
    return std::nullopt;
}

CausalChain trace_root_cause(const TraceInputs& in) {
    if (!in.image || !in.profile) throw std::invalid_argument("trace_root_cause: null inputs");

    sim::MachineConfig cfg;
    cfg.max_cycles = in.watchdog_cycles;
    cfg.policy = in.policy;
    cfg.seed = in.seed;

    std::vector<sim::Snapshot> golden_snaps, glitched_snaps;
    cfg.snapshots = &golden_snaps;
    auto golden = sim::run_pipeline(*in.image, in.entry_pc, cfg);

    // the input occurrence counts architectural executions; the trigger arms
    // on the matching fetch
    timing::GlitchSpec spec = in.spec;
    if (auto occ = classify::resolve_fetch_occurrence(golden, spec.trigger.target_pc,
                                                      spec.trigger.occurrence))
        spec.trigger.occurrence = *occ;

    inject::ArmedGlitch glitch(spec, *in.profile, in.policy, in.seed);
    cfg.snapshots = &glitched_snaps;
    auto glitched = sim::run_pipeline(*in.image, in.entry_pc, cfg, &glitch);

    CausalChain chain;
    chain.spec = spec;
    chain.policy = in.policy;
    chain.profile_hash = in.profile->content_hash;

    // the attacked instance's mnemonic, from the image
    {
        auto mem_word = [&](uint32_t a) {
            uint32_t w = 0;
            for (int k = 3; k >= 0; --k) {
                auto it = in.image->bytes.find(a + uint32_t(k));
                w = w << 8 | (it == in.image->bytes.end() ? 0 : it->second);
            }
            return w;
        };
        auto d = isa::decode(isa::RawInstr::from_bits(mem_word(spec.trigger.target_pc)));
        chain.target_mnemonic = isa::mnemonic_name(d.mnemonic);
    }

    classify::TargetInfo target{spec.trigger.target_pc, spec.trigger.occurrence,
                                chain.target_mnemonic};
    chain.outcome = classify::classify(golden, glitched, target);

    if (golden.retire_trace == glitched.retire_trace &&
        golden.final_state == glitched.final_state) {
        chain.empty = true;
        return chain;
    }
    if (glitched.latch_events.empty())
        throw std::logic_error(
            "model inconsistency: runs diverge without any latch event");

    chain.empty = false;
    chain.latch_events = glitched.latch_events;
    for (const auto& e : glitched.latch_events)
        chain.corrupted_fields.push_back(CausalChain::FieldCorruption{
            e.cycle, field_element(e.endpoint), e.value_intended, e.value_latched});
    chain.field_diff = chain.outcome.field_diff;
    chain.first_divergence = first_divergence(golden_snaps, glitched_snaps);

    // architectural effects, in trace order
    if (chain.outcome.illegal_raised)
        chain.effects.push_back("illegal flag raised (" +
                                std::to_string(golden.final_state.illegal_count) + " -> " +
                                std::to_string(glitched.final_state.illegal_count) + ")");
    {
        // the attacked instance's write, if any
        const sim::RetireRecord* g_rec = nullptr;
        const sim::RetireRecord* c_rec = nullptr;
        for (const auto& r : golden.retire_trace)
            if (r.pc == target.pc && r.fetch_occurrence == target.occurrence) g_rec = &r;
        for (const auto& r : glitched.retire_trace)
            if (r.pc == target.pc && r.fetch_occurrence == target.occurrence) c_rec = &r;
        if (g_rec && g_rec->rd_written && (!c_rec || !c_rec->rd_written))
            chain.effects.push_back("retire of " + std::string(hex32(target.pc)) +
                                    " skipped: rd x" +
                                    std::to_string(int(g_rec->rd_written->first)) +
                                    " not written (golden wrote " +
                                    hex32(g_rec->rd_written->second) + ")");
        if (g_rec && c_rec && g_rec->rd_written && c_rec->rd_written &&
            g_rec->rd_written->second != c_rec->rd_written->second)
            chain.effects.push_back(
                "rd x" + std::to_string(int(c_rec->rd_written->first)) + " written " +
                hex32(c_rec->rd_written->second) + ", golden wrote " +
                hex32(g_rec->rd_written->second));
    }
    for (size_t i = 0; i < 32; ++i)
        if (golden.final_state.regs[i] != glitched.final_state.regs[i]) {
            chain.effects.push_back("final x" + std::to_string(i) + ": golden " +
                                    hex32(golden.final_state.regs[i]) + ", glitched " +
                                    hex32(glitched.final_state.regs[i]));
            break;  // the first differing register is enough for the report
        }
    {
        size_t n = std::min(golden.retire_trace.size(), glitched.retire_trace.size());
        for (size_t i = 0; i < n; ++i) {
            if (golden.retire_trace[i].pc != glitched.retire_trace[i].pc) {
                chain.effects.push_back("retired-pc stream departs at " +
                                        hex32(glitched.retire_trace[i].pc) + " (golden " +
                                        hex32(golden.retire_trace[i].pc) + ")");
                break;
            }
        }
    }
    if (glitched.halt != golden.halt)
        chain.effects.push_back(std::string("halt: ") + sim::halt_reason_name(glitched.halt) +
                                " at pc " + hex32(glitched.final_state.pc));
    return chain;
}

std::string render_chain(const CausalChain& chain, ChainFormat format) {
    if (format == ChainFormat::Json) {
        json j;
        j["tool_version"] = "0.1.0";
        j["profile_hash"] = chain.profile_hash;
        j["target"] = {{"pc", chain.spec.trigger.target_pc},
                       {"mnemonic", chain.target_mnemonic},
                       {"stage", timing::stage_name(chain.spec.trigger.target_stage)},
                       {"occurrence", chain.spec.trigger.occurrence}};
        j["glitch"] = {{"offset_ns", chain.spec.t_offset_ns},
                       {"width_ns", chain.spec.t_width_ns},
                       {"t_glitch_ns", timing::glitch_period(chain.spec)},
                       {"policy", timing::policy_name(chain.policy)}};
        if (chain.empty) {
            j["divergence"] = nullptr;
            return j.dump(2);
        }
        json events = json::array();
        for (const auto& e : chain.latch_events)
            events.push_back({{"cycle", e.cycle},
                              {"endpoint", e.endpoint},
                              {"mask", e.violated_mask},
                              {"intended", e.value_intended},
                              {"latched", e.value_latched}});
        j["latch_events"] = events;
        json fields = json::array();
        for (const auto& f : chain.corrupted_fields)
            fields.push_back({{"cycle", f.cycle},
                              {"element", f.element},
                              {"before", f.before},
                              {"after", f.after}});
        j["corrupted_fields"] = fields;
        if (chain.field_diff) {
            json changed = json::array();
            for (auto k : chain.field_diff->changed_fields)
                changed.push_back(isa::field_kind_name(k));
            j["field_diff"] = {{"changed", changed},
                               {"class",
                                isa::outcome_class_name(chain.field_diff->outcome_class)}};
        } else {
            j["field_diff"] = nullptr;
        }
        j["effects"] = chain.effects;
        j["outcome"] = json::parse(classify::outcome_to_json(chain.outcome));
        if (chain.first_divergence)
            j["first_divergence"] = {{"cycle", chain.first_divergence->first},
                                     {"element", chain.first_divergence->second}};
        else
            j["first_divergence"] = nullptr;
        return j.dump(2);
    }

    std::ostringstream os;
    os << "tool 0.1.0, profile " << chain.profile_hash << "\n";
    os << "glitch: offset=" << chain.spec.t_offset_ns << "ns width=" << chain.spec.t_width_ns
       << "ns t_glitch=" << timing::glitch_period(chain.spec) << "ns policy="
       << timing::policy_name(chain.policy) << "\n";
    os << "target: " << chain.target_mnemonic << "@" << hex32(chain.spec.trigger.target_pc)
       << " stage=" << timing::stage_name(chain.spec.trigger.target_stage)
       << " occurrence=" << chain.spec.trigger.occurrence << "\n";
    if (chain.empty) {
        os << "no divergence: the glitched run matches the golden run\n";
        return os.str();
    }
    os << "latch events:\n";
    for (const auto& e : chain.latch_events)
        os << "  cycle " << e.cycle << ": " << e.endpoint << " mask=" << hex32(e.violated_mask)
           << " intended=" << hex32(e.value_intended) << " latched=" << hex32(e.value_latched)
           << "\n";
    os << "corrupted pipeline fields:\n";
    for (const auto& f : chain.corrupted_fields)
        os << "  cycle " << f.cycle << ": " << f.element << " " << hex32(f.before) << " -> "
           << hex32(f.after) << "\n";
    if (chain.field_diff) {
        os << "field attribution: " << isa::outcome_class_name(chain.field_diff->outcome_class);
        if (!chain.field_diff->changed_fields.empty()) {
            os << " (changed:";
            for (auto k : chain.field_diff->changed_fields)
                os << " " << isa::field_kind_name(k);
            os << ")";
        }
        os << "\n";
    }
    os << "architectural effects:\n";
    for (const auto& e : chain.effects) os << "  - " << e << "\n";
    os << "classification: " << classify::category_name(chain.outcome.category);
    if (chain.outcome.case_id) os << " (case " << chain.outcome.case_id << ")";
    os << (chain.outcome.critical ? ", critical" : ", non-critical") << "\n";
    if (chain.first_divergence)
        os << "first divergence: cycle " << chain.first_divergence->first << ", "
           << chain.first_divergence->second << "\n";
    return os.str();
}

}  // namespace glitchsim::rootcause
