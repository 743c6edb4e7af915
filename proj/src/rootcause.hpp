#pragma once

#include "classifier.hpp"

#include <optional>
#include <string>
#include <vector>

namespace glitchsim::rootcause {

// Causal chain from a glitched latch down to the architectural effect:
// glitch parameters -> latch events -> corrupted pipeline-register fields ->
// decoded-field attribution -> architectural effects, with the earliest
// diverging state element located by per-cycle snapshot comparison.
struct CausalChain {
    bool empty = true;  // no divergence at all
    timing::GlitchSpec spec;
    std::string target_mnemonic;
    timing::Policy policy = timing::Policy::Zero;
    std::string profile_hash;

    std::vector<sim::LatchEvent> latch_events;

    struct FieldCorruption {
        uint64_t cycle = 0;
        std::string element;  // pipeline register field, e.g. "if_id.instr_raw"
        uint32_t before = 0;
        uint32_t after = 0;
    };
    std::vector<FieldCorruption> corrupted_fields;

    std::optional<isa::FieldDiff> field_diff;
    std::vector<std::string> effects;
    classify::FaultOutcome outcome;
    std::optional<std::pair<uint64_t, std::string>> first_divergence;
};

struct TraceInputs {
    const isa::ProgramImage* image = nullptr;
    uint32_t entry_pc = 0;
    const timing::TimingProfile* profile = nullptr;
    timing::GlitchSpec spec;
    timing::Policy policy = timing::Policy::Zero;
    uint64_t seed = 0;
    uint64_t watchdog_cycles = 100000;
};

// Re-runs the golden and glitched simulations with full state snapshots and
// builds the chain. Throws std::logic_error when the runs diverge without
// any recorded latch event (a model inconsistency).
CausalChain trace_root_cause(const TraceInputs& in);

// Earliest cycle at which any compared state element differs. Elements are
// checked in a fixed order per cycle: if_id, id_ex, ex_wb, pc_if, regfile,
// illegal_flag.
std::optional<std::pair<uint64_t, std::string>> first_divergence(
    const std::vector<sim::Snapshot>& golden, const std::vector<sim::Snapshot>& glitched);

enum class ChainFormat { Text, Json };
std::string render_chain(const CausalChain& chain, ChainFormat format);

}  // namespace glitchsim::rootcause
