#include "machine.hpp"

#include <cassert>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace glitchsim::sim {

using isa::DecodedInstr;
using isa::Mnemonic;
using isa::RawInstr;
using timing::apply_violation;
using timing::Policy;

namespace {

constexpr uint32_t kRdFieldMask = 0x0F80;  // bits 11:7 in both 16/32-bit encodings

// The operation a compressed mnemonic executes as.
Mnemonic canonical_op(Mnemonic m) {
    switch (m) {
        case Mnemonic::C_ADDI:
        case Mnemonic::C_LI:
        case Mnemonic::C_NOP: return Mnemonic::ADDI;
        case Mnemonic::C_MV: return Mnemonic::ADD;
        case Mnemonic::C_LWSP: return Mnemonic::LW;
        case Mnemonic::C_J: return Mnemonic::JAL;
        case Mnemonic::C_JR: return Mnemonic::JALR;
        default: return m;
    }
}

// Immediate extracted from a (possibly corrupted) 32-bit payload word using
// the intended instruction's expanded format.
int32_t imm_from_payload(const DecodedInstr& intended, uint32_t w) {
    switch (canonical_op(intended.mnemonic)) {
        case Mnemonic::SW: return isa::extract_imm(w, isa::Format::S);
        case Mnemonic::BEQ:
        case Mnemonic::BNE:
        case Mnemonic::BLT:
        case Mnemonic::BGE: return isa::extract_imm(w, isa::Format::B);
        case Mnemonic::LUI:
        case Mnemonic::AUIPC: return isa::extract_imm(w, isa::Format::U);
        case Mnemonic::JAL: return isa::extract_imm(w, isa::Format::J);
        case Mnemonic::ADD:
        case Mnemonic::SUB:
        case Mnemonic::AND:
        case Mnemonic::OR:
        case Mnemonic::XOR:
        case Mnemonic::SLTU: return 0;
        default: return isa::extract_imm(w, isa::Format::I);
    }
}

struct IfIdReg {
    bool valid = false;
    uint32_t pc = 0;
    uint32_t occurrence = 0;
    uint64_t fetch_cycle = 0;
    RawInstr fetched;       // clean word from memory
    RawInstr raw_in;        // decoder input after latch corruption
    uint32_t out_word = 0;  // decoder output after latch corruption
    uint32_t in_mask = 0;
    uint32_t out_mask = 0;
};

struct IdExReg {
    bool valid = false;
    uint32_t pc = 0;
    uint32_t occurrence = 0;
    uint64_t fetch_cycle = 0;
    RawInstr fetched;
    DecodedInstr exec;
    bool illegal = false;
    bool zero_write = false;
    uint8_t zero_write_rd = 0;
    uint32_t op_a = 0;
    uint32_t op_b = 0;
    uint32_t result_mask = 0;
};

struct ExWbReg {
    bool valid = false;
    uint32_t pc = 0;
    uint32_t occurrence = 0;
    uint64_t fetch_cycle = 0;
    RawInstr fetched;
    DecodedInstr exec;
    bool illegal = false;
    bool zero_write = false;
    uint8_t zero_write_rd = 0;
    bool is_load = false;
    bool is_store = false;
    bool misaligned = false;
    uint32_t addr = 0;         // load/store address
    uint32_t value = 0;        // result / link / store data
    uint32_t result_mask = 0;  // applied to the loaded data at WB
};

struct Dispatch {
    DecodedInstr exec;
    bool illegal = false;
    bool zero_write = false;
    uint8_t zero_write_rd = 0;
    uint32_t result_mask = 0;
    bool corrupt_ops = false;  // run the comparison on corrupted operand values
};

// Decide what a fetched slot executes. Legality is judged on the decoder
// input word; the decoder output word is the execution payload. A corrupted
// payload that decodes to a different legal instruction substitutes it
// wholesale; any other nonzero corruption keeps the intended operation but
// reads the immediate from the corrupted payload and carries the violated
// mask onto the result path. An illegal input whose rd field survived the
// latch arms the zero-write path.
Dispatch dispatch_slot(const IfIdReg& s) {
    Dispatch d;
    DecodedInstr in_dec = isa::decode(s.raw_in);
    if (!in_dec.legal) {
        d.illegal = true;
        d.exec = in_dec;
        if (s.in_mask != 0 && (s.in_mask & kRdFieldMask) == 0) {
            auto rd = uint8_t((s.raw_in.bits >> 7) & 31);
            if (rd != 0) {
                d.zero_write = true;
                d.zero_write_rd = rd;
            }
        }
        return d;
    }
    d.exec = in_dec;
    if (s.out_mask == 0) return d;

    if (s.out_word != in_dec.expanded && (s.out_word & 3u) == 3u) {
        DecodedInstr sub = isa::decode(RawInstr{s.out_word, 32});
        if (sub.legal) {
            sub.expanded_from_compressed = in_dec.expanded_from_compressed;
            d.exec = sub;
            return d;
        }
    }
    d.exec.imm = imm_from_payload(in_dec, s.out_word);
    d.result_mask = s.out_mask;
    d.corrupt_ops = in_dec.is_branch();
    return d;
}

struct WbEffect {
    bool write = false;
    uint8_t rd = 0;
    uint32_t value = 0;
    bool store = false;
    uint32_t store_addr = 0;
    uint32_t store_data = 0;
    bool halt = false;
    bool count_illegal = false;
};

uint32_t instr_len(RawInstr r) { return r.length / 8; }

void trace_instr(std::ostream& os, const char* tag, bool valid, uint32_t pc,
                 const DecodedInstr* d) {
    os << tag << "=";
    if (!valid) {
        os << "[--------]";
        return;
    }
    os << "[" << std::setw(8) << std::setfill('0') << std::hex << pc;
    if (d) os << " " << (d->legal ? isa::mnemonic_name(d->mnemonic) : "illegal");
    os << "]" << std::dec;
}

}  // namespace

const char* halt_reason_name(HaltReason h) {
    switch (h) {
        case HaltReason::CleanHalt: return "clean_halt";
        case HaltReason::WatchdogTimeout: return "watchdog_timeout";
        case HaltReason::PcOutOfRange: return "pc_out_of_range";
    }
    return "?";
}

uint32_t jal_target(uint32_t pc_id, int32_t imm_uj) {
    if (imm_uj & 1) throw std::invalid_argument("jal_target: odd immediate");
    return pc_id + uint32_t(imm_uj);
}

RunResult run_pipeline(const isa::ProgramImage& image, uint32_t entry_pc,
                       const MachineConfig& cfg, LatchHook* hook) {
    RunResult rr;
    ArchState& arch = rr.final_state;
    for (auto [a, b] : image.bytes) arch.mem.store8(a, b);
    arch.pc = entry_pc;

    const uint32_t fetch_limit =
        cfg.fetch_limit.value_or(std::max(image.end_addr(), entry_pc + 4));
    const uint32_t bus_value = apply_violation(0, 0, 0xFFFFFFFFu, cfg.policy, cfg.seed);

    IfIdReg if_id;
    IdExReg id_ex;
    ExWbReg ex_wb;
    std::unordered_map<uint32_t, uint32_t> fetch_counts;

    bool done = false;
    rr.halt = HaltReason::WatchdogTimeout;

    while (!done && arch.cycle < cfg.max_cycles) {
        const uint64_t cycle = arch.cycle + 1;

        // ------------------------------------------------------------------
        // WB: finalize the oldest slot.
        // ------------------------------------------------------------------
        WbEffect wb;
        LatchSlot wb_slot;
        bool wb_slot_active = false;
        if (ex_wb.valid) {
            if (ex_wb.illegal) {
                wb.count_illegal = true;
                if (ex_wb.zero_write) {
                    wb.write = true;
                    wb.rd = ex_wb.zero_write_rd;
                    wb.value = bus_value;
                }
            } else if (ex_wb.misaligned) {
                wb.count_illegal = true;
            } else if (ex_wb.is_load) {
                uint32_t data = arch.mem.load32(ex_wb.addr);
                uint8_t rd = ex_wb.exec.rd.value_or(0);
                if (ex_wb.result_mask)
                    data = apply_violation(data, arch.regs[rd], ex_wb.result_mask, cfg.policy,
                                           cfg.seed);
                if (rd != 0) {
                    wb.write = true;
                    wb.rd = rd;
                    wb.value = data;
                }
            } else if (ex_wb.is_store) {
                wb.store = true;
                wb.store_addr = ex_wb.addr;
                wb.store_data = ex_wb.value;
            } else if (ex_wb.exec.is_halt()) {
                wb.halt = true;
            } else if (ex_wb.exec.writes_rd() && ex_wb.exec.rd.value() != 0) {
                wb.write = true;
                wb.rd = ex_wb.exec.rd.value();
                wb.value = ex_wb.value;
            }
            if (wb.write) {
                wb_slot = LatchSlot{timing::kEpWbValue, wb.value, arch.regs[wb.rd], wb.value, 0,
                                    0xFFFFFFFFu};
                wb_slot_active = true;
            }
        }

        // ------------------------------------------------------------------
        // EX: compute results, addresses and control flow.
        // ------------------------------------------------------------------
        LatchSlot ex_result_slot, ex_nextpc_slot;
        bool ex_result_active = false, ex_nextpc_active = false;
        ExWbReg ex_next;
        bool ex_taken = false;
        if (id_ex.valid) {
            ex_next.valid = true;
            ex_next.pc = id_ex.pc;
            ex_next.occurrence = id_ex.occurrence;
            ex_next.fetch_cycle = id_ex.fetch_cycle;
            ex_next.fetched = id_ex.fetched;
            ex_next.exec = id_ex.exec;
            ex_next.illegal = id_ex.illegal;
            ex_next.zero_write = id_ex.zero_write;
            ex_next.zero_write_rd = id_ex.zero_write_rd;
            ex_next.result_mask = id_ex.result_mask;

            if (!id_ex.illegal) {
                const DecodedInstr& e = id_ex.exec;
                uint32_t a = id_ex.op_a, b = id_ex.op_b;
                uint32_t result = 0;
                bool has_result = false;
                switch (canonical_op(e.mnemonic)) {
                    case Mnemonic::ADD: result = a + b; has_result = true; break;
                    case Mnemonic::SUB: result = a - b; has_result = true; break;
                    case Mnemonic::AND: result = a & b; has_result = true; break;
                    case Mnemonic::OR: result = a | b; has_result = true; break;
                    case Mnemonic::XOR: result = a ^ b; has_result = true; break;
                    case Mnemonic::SLTU: result = a < b ? 1 : 0; has_result = true; break;
                    case Mnemonic::ADDI: result = a + uint32_t(e.imm); has_result = true; break;
                    case Mnemonic::SLLI: result = a << (e.imm & 31); has_result = true; break;
                    case Mnemonic::SRLI: result = a >> (e.imm & 31); has_result = true; break;
                    case Mnemonic::LUI: result = uint32_t(e.imm); has_result = true; break;
                    case Mnemonic::AUIPC:
                        result = id_ex.pc + uint32_t(e.imm);
                        has_result = true;
                        break;
                    case Mnemonic::JAL:
                        result = id_ex.pc + instr_len(id_ex.fetched);
                        has_result = true;
                        ex_taken = true;
                        ex_next.addr = jal_target(id_ex.pc, e.imm & ~1);
                        break;
                    case Mnemonic::JALR:
                        result = id_ex.pc + instr_len(id_ex.fetched);
                        has_result = true;
                        ex_taken = true;
                        ex_next.addr = (a + uint32_t(e.imm)) & ~1u;
                        break;
                    case Mnemonic::BEQ:
                    case Mnemonic::BNE:
                    case Mnemonic::BLT:
                    case Mnemonic::BGE: {
                        switch (canonical_op(e.mnemonic)) {
                            case Mnemonic::BEQ: ex_taken = a == b; break;
                            case Mnemonic::BNE: ex_taken = a != b; break;
                            case Mnemonic::BLT: ex_taken = int32_t(a) < int32_t(b); break;
                            default: ex_taken = int32_t(a) >= int32_t(b); break;
                        }
                        ex_next.addr = id_ex.pc + uint32_t(e.imm & ~1);
                        break;
                    }
                    case Mnemonic::LW:
                        ex_next.is_load = true;
                        ex_next.addr = a + uint32_t(e.imm);
                        ex_next.misaligned = (ex_next.addr & 3u) != 0;
                        break;
                    case Mnemonic::SW:
                        ex_next.is_store = true;
                        ex_next.addr = a + uint32_t(e.imm);
                        ex_next.value = b;
                        ex_next.misaligned = (ex_next.addr & 3u) != 0;
                        break;
                    default:
                        break;  // ecall/ebreak carry no result
                }
                if (has_result) {
                    if (ex_next.result_mask) {
                        uint8_t rd = e.rd.value_or(0);
                        result = apply_violation(result, arch.regs[rd], ex_next.result_mask,
                                                 cfg.policy, cfg.seed);
                        ex_next.result_mask = 0;
                    }
                    ex_next.value = result;
                }

                if (ex_next.is_load) {
                    ex_result_slot = LatchSlot{timing::kEpExWbResult, ex_next.addr, ex_wb.addr,
                                               ex_next.addr, 0, 0xFFFFFFFFu};
                    ex_result_active = true;
                } else if (ex_next.is_store) {
                    ex_result_slot = LatchSlot{timing::kEpExWbResult, ex_next.value, ex_wb.value,
                                               ex_next.value, 0, 0xFFFFFFFFu};
                    ex_result_active = true;
                } else if (has_result && e.rd.value_or(0) != 0) {
                    ex_result_slot = LatchSlot{timing::kEpExWbResult, ex_next.value, ex_wb.value,
                                               ex_next.value, 0, 0xFFFFFFFFu};
                    ex_result_active = true;
                }
                if (e.is_branch() || e.is_jump()) {
                    uint32_t fallthrough = id_ex.pc + instr_len(id_ex.fetched);
                    uint32_t intended_next = ex_taken ? ex_next.addr : fallthrough;
                    ex_nextpc_slot = LatchSlot{timing::kEpExWbNextPc, intended_next, arch.pc,
                                               intended_next, 0, 0xFFFFFFFFu};
                    ex_nextpc_active = true;
                }
            }
        }

        // ------------------------------------------------------------------
        // ID: legality, corruption dispatch, operand read, hazards.
        // ------------------------------------------------------------------
        IdExReg id_next;
        LatchSlot id_instr_slot, id_opa_slot, id_opb_slot;
        bool id_slots_active = false;
        bool stall = false;
        bool illegal_redirect = false;
        uint32_t illegal_next_pc = 0;
        if (if_id.valid) {
            Dispatch d = dispatch_slot(if_id);
            id_next.valid = true;
            id_next.pc = if_id.pc;
            id_next.occurrence = if_id.occurrence;
            id_next.fetch_cycle = if_id.fetch_cycle;
            id_next.fetched = if_id.fetched;
            id_next.exec = d.exec;
            id_next.illegal = d.illegal;
            id_next.zero_write = d.zero_write;
            id_next.zero_write_rd = d.zero_write_rd;
            id_next.result_mask = d.result_mask;

            if (d.illegal) {
                illegal_redirect = true;
                illegal_next_pc = cfg.illegal_handler ? *cfg.illegal_handler
                                                      : if_id.pc + instr_len(if_id.raw_in);
            } else {
                // forwarding: EX result this cycle, then the pending WB value,
                // then the register file. A load in EX forces a one-cycle stall.
                auto read_operand = [&](uint8_t r, bool& need_stall) -> uint32_t {
                    if (r == 0) return 0;
                    if (id_ex.valid && !id_ex.illegal && id_ex.exec.writes_rd() &&
                        id_ex.exec.rd.value() == r) {
                        if (id_ex.exec.is_load()) {
                            need_stall = true;
                            return 0;
                        }
                        return ex_next.value;
                    }
                    if (id_ex.valid && id_ex.illegal && id_ex.zero_write &&
                        id_ex.zero_write_rd == r)
                        return bus_value;
                    if (wb.write && wb.rd == r) return wb.value;
                    return arch.regs[r];
                };
                const DecodedInstr& e = d.exec;
                bool uses_rs2 = e.format == isa::Format::R || e.format == isa::Format::S ||
                                e.format == isa::Format::B || e.mnemonic == Mnemonic::C_MV;
                if (e.rs1) id_next.op_a = read_operand(*e.rs1, stall);
                if (e.rs2 && uses_rs2) id_next.op_b = read_operand(*e.rs2, stall);
                if (d.corrupt_ops && !stall) {
                    id_next.op_a = apply_violation(id_next.op_a, id_ex.op_a, d.result_mask,
                                                   cfg.policy, cfg.seed);
                    id_next.op_b = apply_violation(id_next.op_b, id_ex.op_b, d.result_mask,
                                                   cfg.policy, cfg.seed);
                    id_next.result_mask = 0;
                }
            }
            if (!stall && !d.illegal) {
                uint32_t exec_word = d.exec.legal ? d.exec.expanded : if_id.out_word;
                id_instr_slot = LatchSlot{timing::kEpIdExInstr, exec_word,
                                          id_ex.exec.legal ? id_ex.exec.expanded : 0, exec_word,
                                          0, 0xFFFFFFFFu};
                id_opa_slot = LatchSlot{timing::kEpIdExOpA, id_next.op_a, id_ex.op_a,
                                        id_next.op_a, 0, 0xFFFFFFFFu};
                id_opb_slot = LatchSlot{timing::kEpIdExOpB, id_next.op_b, id_ex.op_b,
                                        id_next.op_b, 0, 0xFFFFFFFFu};
                id_slots_active = true;
            }
        }

        // ------------------------------------------------------------------
        // IF: fetch and run the compressed decoder.
        // ------------------------------------------------------------------
        IfIdReg if_next;
        LatchSlot if_in_slot, if_out_slot;
        bool if_slots_active = false;
        bool fetch_oor = false;
        if (!stall) {
            if ((arch.pc & 1u) != 0 || arch.pc >= fetch_limit) {
                fetch_oor = true;
            } else {
                uint32_t half = arch.mem.load16(arch.pc);
                RawInstr raw = (half & 3u) == 3u ? RawInstr{arch.mem.load32(arch.pc), 32}
                                                 : RawInstr{half, 16};
                uint32_t out = raw.bits;
                if (raw.length == 16) {
                    auto e = isa::expand_compressed(uint16_t(raw.bits));
                    out = e.value_or(raw.bits);  // ID flags unsupported encodings
                }
                if_next.valid = true;
                if_next.pc = arch.pc;
                if_next.occurrence = ++fetch_counts[arch.pc];
                if_next.fetch_cycle = cycle;
                if_next.fetched = raw;
                if_next.raw_in = raw;
                if_next.out_word = out;
                if_in_slot = LatchSlot{timing::kEpIfIdIn, raw.bits, if_id.raw_in.bits, raw.bits,
                                       0, raw.length == 16 ? 0xFFFFu : 0xFFFFFFFFu};
                if_out_slot =
                    LatchSlot{timing::kEpIfIdOut, out, if_id.out_word, out, 0, 0xFFFFFFFFu};
                if_slots_active = true;
            }
        }

        // ------------------------------------------------------------------
        // Edge: hand the latch ports to the injector hook, then commit.
        // ------------------------------------------------------------------
        EdgeContext edge;
        edge.cycle = cycle;
        {
            auto& s = edge.stages[size_t(Stage::IF)];
            s.valid = if_next.valid;
            s.pc = if_next.pc;
            s.occurrence = if_next.occurrence;
            s.stalled = stall;
            if (if_next.valid)
                s.mnemonic = isa::mnemonic_name(isa::decode(if_next.fetched).mnemonic);
            if (if_slots_active) s.slots = {&if_in_slot, &if_out_slot};
        }
        {
            auto& s = edge.stages[size_t(Stage::ID)];
            s.valid = if_id.valid;
            s.pc = if_id.pc;
            s.occurrence = if_id.occurrence;
            s.stalled = stall;
            if (if_id.valid) s.mnemonic = isa::mnemonic_name(isa::decode(if_id.raw_in).mnemonic);
            if (id_slots_active) s.slots = {&id_instr_slot, &id_opa_slot, &id_opb_slot};
            if (stall && if_id.valid) {
                // the if_id register re-latches its own content this edge
                if_in_slot = LatchSlot{timing::kEpIfIdIn, if_id.raw_in.bits, if_id.raw_in.bits,
                                       if_id.raw_in.bits, 0,
                                       if_id.raw_in.length == 16 ? 0xFFFFu : 0xFFFFFFFFu};
                if_out_slot = LatchSlot{timing::kEpIfIdOut, if_id.out_word, if_id.out_word,
                                        if_id.out_word, 0, 0xFFFFFFFFu};
                s.slots = {&if_in_slot, &if_out_slot};
            }
        }
        {
            auto& s = edge.stages[size_t(Stage::EX)];
            s.valid = id_ex.valid;
            s.pc = id_ex.pc;
            s.occurrence = id_ex.occurrence;
            if (id_ex.valid && !id_ex.illegal)
                s.mnemonic = isa::mnemonic_name(id_ex.exec.mnemonic);
            if (ex_result_active) s.slots.push_back(&ex_result_slot);
            if (ex_nextpc_active) s.slots.push_back(&ex_nextpc_slot);
        }
        {
            auto& s = edge.stages[size_t(Stage::WB)];
            s.valid = ex_wb.valid;
            s.pc = ex_wb.pc;
            s.occurrence = ex_wb.occurrence;
            if (ex_wb.valid && !ex_wb.illegal)
                s.mnemonic = isa::mnemonic_name(ex_wb.exec.mnemonic);
            if (wb_slot_active) s.slots.push_back(&wb_slot);
        }

        if (hook) hook->on_edge(edge, rr.latch_events);

        // WB commit
        if (wb.write) {
            uint32_t v = wb_slot_active ? wb_slot.latched : wb.value;
            wb.value = v;
            arch.regs[wb.rd] = v;
        }
        if (wb.store && !ex_wb.misaligned) arch.mem.store32(wb.store_addr, wb.store_data);
        if (wb.count_illegal) ++arch.illegal_count;
        arch.regs[0] = 0;
        if (ex_wb.valid) {
            RetireRecord rec;
            rec.cycle_retired = cycle + 1;  // counter value once the write is visible
            rec.cycle_fetched = ex_wb.fetch_cycle;
            rec.fetch_occurrence = ex_wb.occurrence;
            rec.pc = ex_wb.pc;
            rec.fetched = ex_wb.fetched;
            rec.instr = ex_wb.exec;
            rec.illegal = ex_wb.illegal || ex_wb.misaligned;
            if (wb.write && wb.rd != 0) rec.rd_written = {{wb.rd, wb.value}};
            rr.retire_trace.push_back(rec);
        }

        // control flow: an EX redirect outranks the ID illegal path
        bool redirect = false;
        uint32_t redirect_pc = 0;
        if (ex_nextpc_active) {
            bool corrupted_differs = ex_nextpc_slot.latched != ex_nextpc_slot.intended;
            if (ex_taken || corrupted_differs) {
                redirect = true;
                redirect_pc = ex_nextpc_slot.latched;
            }
        }

        if (cfg.trace) {
            auto& os = *cfg.trace;
            os << "cycle=" << cycle << " ";
            trace_instr(os, "if", if_next.valid, if_next.pc, nullptr);
            os << " ";
            DecodedInstr idd = if_id.valid ? isa::decode(if_id.raw_in) : DecodedInstr{};
            trace_instr(os, "id", if_id.valid, if_id.pc, &idd);
            os << " ";
            trace_instr(os, "ex", id_ex.valid, id_ex.pc, id_ex.valid ? &id_ex.exec : nullptr);
            os << " ";
            trace_instr(os, "wb", ex_wb.valid, ex_wb.pc, ex_wb.valid ? &ex_wb.exec : nullptr);
            if (wb.write)
                os << " wr x" << std::dec << int(wb.rd) << "=0x" << std::hex << wb.value
                   << std::dec;
            if (redirect) os << " redirect=0x" << std::hex << redirect_pc << std::dec;
            if (stall) os << " stall";
            os << "\n";
        }

        if (wb.halt) {
            rr.halt = HaltReason::CleanHalt;
            done = true;
        }

        // pipeline register commit
        ex_wb = ex_next;
        if (redirect) {
            id_ex = IdExReg{};
            if_id = IfIdReg{};
            arch.pc = redirect_pc;
        } else if (stall) {
            id_ex = IdExReg{};
            if (if_id.valid) {
                if_id.raw_in =
                    RawInstr{if_in_slot.latched & if_in_slot.width_mask, if_id.raw_in.length};
                if_id.out_word = if_out_slot.latched;
                if_id.in_mask |= if_in_slot.mask & if_in_slot.width_mask;
                if_id.out_mask |= if_out_slot.mask;
            }
        } else {
            // fold any corruption at the id_ex latch into the payload
            if (id_next.valid && !id_next.illegal && id_slots_active) {
                id_next.op_a = id_opa_slot.latched;
                id_next.op_b = id_opb_slot.latched;
                if (id_instr_slot.mask != 0) {
                    uint32_t w = id_instr_slot.latched;
                    const DecodedInstr intended = id_next.exec;
                    bool substituted = false;
                    if (w != id_instr_slot.intended && (w & 3u) == 3u) {
                        DecodedInstr sub = isa::decode(RawInstr{w, 32});
                        if (sub.legal) {
                            id_next.exec = sub;
                            substituted = true;
                        }
                    }
                    if (!substituted) {
                        id_next.exec = intended;
                        id_next.exec.imm = imm_from_payload(intended, w);
                        id_next.result_mask |= id_instr_slot.mask;
                    }
                }
            }
            id_ex = id_next;
            if (illegal_redirect) {
                if_id = IfIdReg{};
                arch.pc = illegal_next_pc;
            } else if (fetch_oor) {
                if_id = IfIdReg{};  // nothing to latch; older slots keep draining
            } else {
                if_id = if_next;
                if (if_next.valid) {
                    if_id.raw_in =
                        RawInstr::from_bits(if_in_slot.latched & if_in_slot.width_mask);
                    if_id.out_word = if_out_slot.latched;
                    if_id.in_mask = if_in_slot.mask & if_in_slot.width_mask;
                    if_id.out_mask = if_out_slot.mask;
                    arch.pc = if_next.pc + instr_len(if_next.fetched);
                }
            }
        }

        arch.cycle = cycle;
        assert(arch.regs[0] == 0);

        // a drained pipeline with an unfetchable pc is a crashed run
        if (!done && !if_id.valid && !id_ex.valid && !ex_wb.valid &&
            ((arch.pc & 1u) != 0 || arch.pc >= fetch_limit)) {
            rr.halt = HaltReason::PcOutOfRange;
            done = true;
        }

        if (cfg.snapshots) {
            Snapshot snap;
            snap.cycle = cycle;
            snap.pc_if = arch.pc;
            snap.if_id = {if_id.valid, if_id.pc,    if_id.raw_in.bits,
                          if_id.out_word, if_id.in_mask, if_id.out_mask};
            snap.id_ex = {id_ex.valid, id_ex.pc,
                          id_ex.valid && id_ex.exec.legal ? id_ex.exec.expanded : 0, id_ex.op_a,
                          id_ex.op_b,   id_ex.result_mask};
            snap.ex_wb = {ex_wb.valid, ex_wb.pc, ex_wb.value, ex_wb.addr, ex_wb.result_mask};
            snap.regs = arch.regs;
            snap.illegal_count = arch.illegal_count;
            cfg.snapshots->push_back(snap);
        }
    }
    return rr;
}

RunResult run_reference(const isa::ProgramImage& image, uint32_t entry_pc,
                        const MachineConfig& cfg) {
    RunResult rr;
    ArchState& arch = rr.final_state;
    for (auto [a, b] : image.bytes) arch.mem.store8(a, b);
    arch.pc = entry_pc;
    const uint32_t fetch_limit =
        cfg.fetch_limit.value_or(std::max(image.end_addr(), entry_pc + 4));
    rr.halt = HaltReason::WatchdogTimeout;
    std::unordered_map<uint32_t, uint32_t> exec_counts;

    while (arch.cycle < cfg.max_cycles) {
        uint64_t step = ++arch.cycle;
        uint32_t pc = arch.pc;
        if ((pc & 1u) != 0 || pc >= fetch_limit) {
            rr.halt = HaltReason::PcOutOfRange;
            break;
        }
        uint32_t half = arch.mem.load16(pc);
        RawInstr raw =
            (half & 3u) == 3u ? RawInstr{arch.mem.load32(pc), 32} : RawInstr{half, 16};
        DecodedInstr d = isa::decode(raw);

        RetireRecord rec;
        rec.cycle_retired = step;
        rec.cycle_fetched = step;
        rec.fetch_occurrence = ++exec_counts[pc];
        rec.pc = pc;
        rec.fetched = raw;
        rec.instr = d;

        if (!d.legal) {
            ++arch.illegal_count;
            rec.illegal = true;
            rr.retire_trace.push_back(rec);
            arch.pc = cfg.illegal_handler ? *cfg.illegal_handler : pc + raw.length / 8;
            continue;
        }

        uint32_t len = raw.length / 8;
        uint32_t next = pc + len;
        uint32_t a = d.rs1 ? arch.regs[*d.rs1] : 0;
        uint32_t b = d.rs2 ? arch.regs[*d.rs2] : 0;
        std::optional<uint32_t> result;
        bool halt = false;
        switch (canonical_op(d.mnemonic)) {
            case Mnemonic::ADD: result = a + b; break;
            case Mnemonic::SUB: result = a - b; break;
            case Mnemonic::AND: result = a & b; break;
            case Mnemonic::OR: result = a | b; break;
            case Mnemonic::XOR: result = a ^ b; break;
            case Mnemonic::SLTU: result = a < b ? 1 : 0; break;
            case Mnemonic::ADDI: result = a + uint32_t(d.imm); break;
            case Mnemonic::SLLI: result = a << (d.imm & 31); break;
            case Mnemonic::SRLI: result = a >> (d.imm & 31); break;
            case Mnemonic::LUI: result = uint32_t(d.imm); break;
            case Mnemonic::AUIPC: result = pc + uint32_t(d.imm); break;
            case Mnemonic::JAL:
                result = pc + len;
                next = jal_target(pc, d.imm);
                break;
            case Mnemonic::JALR:
                result = pc + len;
                next = (a + uint32_t(d.imm)) & ~1u;
                break;
            case Mnemonic::BEQ:
                if (a == b) next = pc + uint32_t(d.imm);
                break;
            case Mnemonic::BNE:
                if (a != b) next = pc + uint32_t(d.imm);
                break;
            case Mnemonic::BLT:
                if (int32_t(a) < int32_t(b)) next = pc + uint32_t(d.imm);
                break;
            case Mnemonic::BGE:
                if (int32_t(a) >= int32_t(b)) next = pc + uint32_t(d.imm);
                break;
            case Mnemonic::LW: {
                uint32_t addr = a + uint32_t(d.imm);
                if (addr & 3u) {
                    ++arch.illegal_count;
                    rec.illegal = true;
                } else {
                    result = arch.mem.load32(addr);
                }
                break;
            }
            case Mnemonic::SW: {
                uint32_t addr = a + uint32_t(d.imm);
                if (addr & 3u) {
                    ++arch.illegal_count;
                    rec.illegal = true;
                } else {
                    arch.mem.store32(addr, b);
                }
                break;
            }
            case Mnemonic::ECALL:
            case Mnemonic::EBREAK:
                halt = true;
                break;
            default:
                break;
        }
        if (result && d.rd && *d.rd != 0) {
            arch.regs[*d.rd] = *result;
            rec.rd_written = {{*d.rd, *result}};
        }
        arch.regs[0] = 0;
        rr.retire_trace.push_back(rec);
        arch.pc = next;
        if (halt) {
            rr.halt = HaltReason::CleanHalt;
            break;
        }
    }
    return rr;
}

bool arch_equivalent(const RunResult& a, const RunResult& b) {
    if (a.halt != b.halt) return false;
    if (a.retire_trace.size() != b.retire_trace.size()) return false;
    for (size_t i = 0; i < a.retire_trace.size(); ++i) {
        const auto& x = a.retire_trace[i];
        const auto& y = b.retire_trace[i];
        if (x.pc != y.pc || x.fetched != y.fetched || x.rd_written != y.rd_written ||
            x.illegal != y.illegal)
            return false;
    }
    return a.final_state.regs == b.final_state.regs && a.final_state.mem == b.final_state.mem &&
           a.final_state.illegal_count == b.final_state.illegal_count;
}

}  // namespace glitchsim::sim
