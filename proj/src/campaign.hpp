#pragma once

#include "classifier.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace glitchsim::campaign {

struct TargetSpec {
    std::string mnemonic;
    uint32_t pc = 0;
    uint32_t occurrence = 1;
    bool operator==(const TargetSpec&) const = default;
};

struct SweepGrid {
    std::vector<double> offsets_ns;
    std::vector<double> widths_ns;
    std::vector<timing::Stage> stages;
    std::vector<TargetSpec> targets;
    size_t total() const {
        return offsets_ns.size() * widths_ns.size() * stages.size() * targets.size();
    }
};

// 17 evenly spaced points covering 0.278ns..8.89ns inclusive.
std::vector<double> default_axis();

// Default grid: full axis on offsets and widths, all four stages, the first
// occurrence of each default target mnemonic located in the image.
extern const std::array<const char*, 8> kDefaultTargetMnemonics;
SweepGrid default_grid(const isa::ProgramImage& image);

struct CampaignRunSpec {
    TargetSpec target;
    timing::Stage stage = timing::Stage::IF;
    double t_offset_ns = 0;
    double t_width_ns = 0;
    timing::GlitchSpec glitch() const {
        return {t_offset_ns, t_width_ns, timing::Trigger{target.pc, stage, target.occurrence}};
    }
    bool operator==(const CampaignRunSpec&) const = default;
};

// Deterministic lexicographic enumeration: target, stage, offset, width.
// Throws std::invalid_argument on an empty grid dimension.
std::vector<CampaignRunSpec> enumerate_grid(const SweepGrid& grid);

struct RunRecord {
    size_t index = 0;
    CampaignRunSpec spec;
    classify::FaultOutcome outcome;
    bool fired = false;
    std::string events_digest;
};

enum class StagePair { IfId, IdEx, ExWb };
const char* stage_pair_name(StagePair p);

// Risk assessment table: per-instruction, per-stage-pair percentages of all
// observed critical faults; cells sum to 100 whenever any critical fault
// exists.
struct RATable {
    std::vector<std::string> instructions;
    std::vector<std::array<uint64_t, 3>> counts;
    std::vector<std::array<double, 3>> cells;
    uint64_t total_critical = 0;
};

// Stage-pair attribution of one critical run: the register named by its
// first violated endpoint.
StagePair attribute_stage_pair(const RunRecord& rec);

RATable build_rat(const std::vector<RunRecord>& records,
                  const std::vector<std::string>& row_order);

struct Reduction {
    uint64_t total = 0;
    uint64_t critical = 0;
    double percent = 0;            // two decimals, round-half-even
    double percent_truncated = 0;  // two decimals, truncated
};
Reduction reduction_stats(uint64_t total, uint64_t critical);

struct CampaignConfig {
    isa::ProgramImage image;
    uint32_t entry_pc = 0;
    timing::TimingProfile profile;
    SweepGrid grid;
    timing::Policy policy = timing::Policy::Zero;
    uint64_t seed = 1;
    uint64_t watchdog_cycles = 10000;
    int parallelism = 1;
};

struct CampaignResult {
    std::vector<RunRecord> records;
    RATable rat;
    Reduction reduction;
    std::vector<std::string> errors;  // dropped targets etc.
    uint64_t total = 0;
    uint64_t critical = 0;
};

// Execute the sweep. Results are independent of parallelism and execution
// order. When record_sink is non-null, one JSON line per record streams to
// it in index order as runs complete; `resumed` carries records recovered
// from an interrupted sweep (a prefix of the enumeration) that are kept
// as-is instead of re-running.
CampaignResult run_campaign(const CampaignConfig& cfg, std::ostream* record_sink = nullptr,
                            const std::vector<RunRecord>& resumed = {});

// Artifact rendering.
std::string record_to_json(const RunRecord& rec);
RunRecord record_from_json(const std::string& line);
std::string rat_to_csv(const RATable& rat);
std::string summary_to_json(const CampaignConfig& cfg, const CampaignResult& result);

// Filesystem front end used by the CLI: writes records.jsonl, rat.csv and
// summary.json under out_dir; with resume=true, completed records already in
// records.jsonl are kept and the sweep continues after them.
std::string run_campaign_to_dir(const CampaignConfig& cfg, const std::string& out_dir,
                                bool resume);

}  // namespace glitchsim::campaign
