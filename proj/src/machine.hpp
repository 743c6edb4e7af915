#pragma once

#include "isa.hpp"
#include "timing.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace glitchsim::sim {

using timing::Stage;

// Sparse little-endian byte memory, zero-initialized everywhere.
struct Memory {
    std::map<uint32_t, std::array<uint8_t, 4096>> pages;

    uint8_t load8(uint32_t a) const {
        auto it = pages.find(a >> 12);
        return it == pages.end() ? 0 : it->second[a & 0xFFF];
    }
    void store8(uint32_t a, uint8_t v) { pages[a >> 12][a & 0xFFF] = v; }
    uint16_t load16(uint32_t a) const { return uint16_t(load8(a) | load8(a + 1) << 8); }
    uint32_t load32(uint32_t a) const {
        return uint32_t(load16(a)) | uint32_t(load16(a + 2)) << 16;
    }
    void store32(uint32_t a, uint32_t v) {
        for (int i = 0; i < 4; ++i) store8(a + uint32_t(i), uint8_t(v >> (8 * i)));
    }
    bool operator==(const Memory&) const = default;
};

struct ArchState {
    uint32_t pc = 0;  // fetch pc (pipeline) / next pc (reference)
    std::array<uint32_t, 32> regs{};
    Memory mem;
    uint32_t illegal_count = 0;
    uint64_t cycle = 0;
    bool operator==(const ArchState&) const = default;
};

enum class HaltReason { CleanHalt, WatchdogTimeout, PcOutOfRange };
const char* halt_reason_name(HaltReason h);

struct RetireRecord {
    uint64_t cycle_retired = 0;  // cycle at which the result is visible
    uint64_t cycle_fetched = 0;
    uint32_t fetch_occurrence = 0;  // n-th fetch of this pc (wrong-path included)
    uint32_t pc = 0;
    isa::RawInstr fetched;       // the encoding memory held at this pc
    isa::DecodedInstr instr;     // what actually executed (corrupted view when glitched)
    std::optional<std::pair<uint8_t, uint32_t>> rd_written;
    bool illegal = false;
    bool operator==(const RetireRecord&) const = default;
};

struct LatchEvent {
    uint64_t cycle = 0;
    std::string endpoint;
    uint32_t violated_mask = 0;
    uint32_t value_intended = 0;
    uint32_t value_latched = 0;
    bool operator==(const LatchEvent&) const = default;
};

struct RunResult {
    std::vector<RetireRecord> retire_trace;
    ArchState final_state;
    std::vector<LatchEvent> latch_events;
    HaltReason halt = HaltReason::CleanHalt;
    bool operator==(const RunResult&) const = default;
};

// One latch port at a clock edge. A hook may substitute `latched` and set
// `mask`; the machine then behaves per the corrupted value.
struct LatchSlot {
    const char* endpoint = "";
    uint32_t intended = 0;
    uint32_t previous = 0;
    uint32_t latched = 0;
    uint32_t mask = 0;
    uint32_t width_mask = 0xFFFFFFFFu;  // 0xFFFF for 16-bit fetch slots
};

struct StageView {
    bool valid = false;
    uint32_t pc = 0;
    uint32_t occurrence = 0;  // n-th fetch of this pc in the run
    bool stalled = false;
    std::string_view mnemonic;            // intended mnemonic, "" when illegal
    std::vector<LatchSlot*> slots;        // latches owned by this stage this edge
};

struct EdgeContext {
    uint64_t cycle = 0;
    std::array<StageView, 4> stages;  // indexed by Stage
};

// Injector interface: called once per clock edge before values commit.
// An implementation corrupts slot values and appends one LatchEvent per
// corrupted slot.
class LatchHook {
public:
    virtual ~LatchHook() = default;
    virtual void on_edge(EdgeContext& edge, std::vector<LatchEvent>& events) = 0;
};

// Per-cycle state snapshot used by the root-cause tracer. The violated-bit
// masks are part of the captured register state: a late-latched bit whose
// value happened to match still leaves the register in a deviant state that
// propagates down the result path.
struct Snapshot {
    uint64_t cycle = 0;
    uint32_t pc_if = 0;
    struct {
        bool valid = false;
        uint32_t pc = 0, raw = 0, out = 0;
        uint32_t in_mask = 0, out_mask = 0;
    } if_id;
    struct {
        bool valid = false;
        uint32_t pc = 0, instr = 0, op_a = 0, op_b = 0;
        uint32_t result_mask = 0;
    } id_ex;
    struct {
        bool valid = false;
        uint32_t pc = 0, value = 0, addr = 0;
        uint32_t result_mask = 0;
    } ex_wb;
    std::array<uint32_t, 32> regs{};
    uint32_t illegal_count = 0;
};

struct MachineConfig {
    uint64_t max_cycles = 100000;
    std::optional<uint32_t> illegal_handler;  // redirect target for the illegal path
    std::optional<uint32_t> fetch_limit;      // defaults to the image end
    timing::Policy policy = timing::Policy::Zero;
    uint64_t seed = 0;
    std::ostream* trace = nullptr;            // per-cycle text trace sink
    std::vector<Snapshot>* snapshots = nullptr;
};

// Cycle-accurate 4-stage pipeline (IF, ID, EX, WB). The injector hook, when
// present, may corrupt latched values at one clock edge.
RunResult run_pipeline(const isa::ProgramImage& image, uint32_t entry_pc,
                       const MachineConfig& cfg = {}, LatchHook* hook = nullptr);

// Single-step reference interpreter with no pipeline model; architecturally
// equivalent to run_pipeline on fault-free runs. cycle numbers count steps.
RunResult run_reference(const isa::ProgramImage& image, uint32_t entry_pc,
                        const MachineConfig& cfg = {});

// jal target arithmetic: pc_id plus the sign-extended even immediate,
// wrapping mod 2^32.
uint32_t jal_target(uint32_t pc_id, int32_t imm_uj);

// Equality of the architectural outcome, ignoring model-specific cycle
// counts: retire (pc, encoding, rd writes, illegal) plus registers, memory,
// illegal count and halt reason.
bool arch_equivalent(const RunResult& a, const RunResult& b);

}  // namespace glitchsim::sim
