#pragma once

#include "injector.hpp"
#include "isa.hpp"
#include "machine.hpp"
#include "timing.hpp"

#include <optional>
#include <string>
#include <vector>

namespace glitchsim::classify {

enum class Category {
    NoEffect,
    InstructionSkip,
    DataZeroization,
    PartialDataCorruption,
    PcRedirection,
    CrashOrHang,
    OtherStateMismatch,
    MultiEffect,
};
const char* category_name(Category c);

// The attacked dynamic instance. `occurrence` counts fetches of the pc
// (wrong-path fetches included), matching the trigger's view.
struct TargetInfo {
    uint32_t pc = 0;
    uint32_t occurrence = 1;
    std::string mnemonic;
};

// Map the n-th architectural execution of a pc in a golden run to its fetch
// occurrence (instructions in a branch shadow get wrong-path fetches first).
// Returns nullopt when the golden run has no such execution.
std::optional<uint32_t> resolve_fetch_occurrence(const sim::RunResult& golden, uint32_t pc,
                                                 uint32_t arch_occurrence);

struct FaultOutcome {
    Category category = Category::NoEffect;
    int case_id = 0;  // 1..4 per (category, illegal flag); 0 = none
    bool illegal_raised = false;
    bool critical = false;
    std::optional<isa::FieldDiff> field_diff;
    std::optional<std::pair<uint64_t, std::string>> first_divergence;  // (cycle, element)
    std::vector<Category> members;  // populated for MultiEffect
};

// Diff a glitched run against its golden run. The golden run must be
// fault-free (no latch events). Throws std::invalid_argument otherwise.
FaultOutcome classify(const sim::RunResult& golden, const sim::RunResult& glitched,
                      const TargetInfo& target);

// Field-level attribution of a corrupted fetch-slot word.
isa::FieldDiff attribute_fields(isa::RawInstr golden_word, isa::RawInstr corrupted_word);

// Sweep t_width at a fixed offset against one target and classify each run.
struct BandPoint {
    double t_width = 0;
    double t_glitch = 0;
    Category category = Category::NoEffect;
    int case_id = 0;
    bool illegal_raised = false;
};
std::vector<BandPoint> case_bands_check(const isa::ProgramImage& image, uint32_t entry_pc,
                                        const timing::TimingProfile& profile,
                                        const TargetInfo& target, double t_offset,
                                        const std::vector<double>& widths,
                                        const sim::MachineConfig& cfg = {});

// Stable JSON rendering of an outcome (documented schema).
std::string outcome_to_json(const FaultOutcome& o);

}  // namespace glitchsim::classify
