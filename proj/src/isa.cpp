#include "isa.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace glitchsim::isa {

namespace {

inline uint32_t bits(uint32_t v, int hi, int lo) {
    return (v >> lo) & ((1u << (hi - lo + 1)) - 1);
}
inline int32_t sext(uint32_t v, int width) {
    uint32_t m = 1u << (width - 1);
    return int32_t((v ^ m) - m);
}

inline uint32_t enc_i(int32_t imm, uint32_t rs1, uint32_t f3, uint32_t rd, uint32_t op) {
    return (uint32_t(imm & 0xFFF) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op;
}
inline uint32_t enc_r(uint32_t f7, uint32_t rs2, uint32_t rs1, uint32_t f3, uint32_t rd,
                      uint32_t op) {
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op;
}
inline uint32_t enc_s(int32_t imm, uint32_t rs2, uint32_t rs1, uint32_t f3, uint32_t op) {
    uint32_t u = uint32_t(imm & 0xFFF);
    return (bits(u, 11, 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) |
           (bits(u, 4, 0) << 7) | op;
}
inline uint32_t enc_b(int32_t imm, uint32_t rs2, uint32_t rs1, uint32_t f3, uint32_t op) {
    uint32_t u = uint32_t(imm & 0x1FFF);
    return (bits(u, 12, 12) << 31) | (bits(u, 10, 5) << 25) | (rs2 << 20) | (rs1 << 15) |
           (f3 << 12) | (bits(u, 4, 1) << 8) | (bits(u, 11, 11) << 7) | op;
}
inline uint32_t enc_u(uint32_t imm31_12, uint32_t rd, uint32_t op) {
    return (imm31_12 << 12) | (rd << 7) | op;
}
inline uint32_t enc_j(int32_t imm, uint32_t rd, uint32_t op) {
    uint32_t u = uint32_t(imm & 0x1FFFFF);
    return (bits(u, 20, 20) << 31) | (bits(u, 10, 1) << 21) | (bits(u, 11, 11) << 20) |
           (bits(u, 19, 12) << 12) | (rd << 7) | op;
}

inline int32_t imm_i(uint32_t w) { return sext(bits(w, 31, 20), 12); }
inline int32_t imm_s(uint32_t w) { return sext(bits(w, 31, 25) << 5 | bits(w, 11, 7), 12); }
inline int32_t imm_b(uint32_t w) {
    return sext(bits(w, 31, 31) << 12 | bits(w, 7, 7) << 11 | bits(w, 30, 25) << 5 |
                    bits(w, 11, 8) << 1,
                13);
}
inline int32_t imm_j(uint32_t w) {
    return sext(bits(w, 31, 31) << 20 | bits(w, 19, 12) << 12 | bits(w, 20, 20) << 11 |
                    bits(w, 30, 21) << 1,
                21);
}

struct MnemonicInfo {
    Mnemonic m;
    const char* name;
};
constexpr MnemonicInfo kMnemonics[] = {
    {Mnemonic::ILLEGAL, "illegal"}, {Mnemonic::LUI, "lui"},     {Mnemonic::AUIPC, "auipc"},
    {Mnemonic::JAL, "jal"},         {Mnemonic::JALR, "jalr"},   {Mnemonic::BEQ, "beq"},
    {Mnemonic::BNE, "bne"},         {Mnemonic::BLT, "blt"},     {Mnemonic::BGE, "bge"},
    {Mnemonic::LW, "lw"},           {Mnemonic::SW, "sw"},       {Mnemonic::ADDI, "addi"},
    {Mnemonic::SLLI, "slli"},       {Mnemonic::SRLI, "srli"},   {Mnemonic::ADD, "add"},
    {Mnemonic::SUB, "sub"},         {Mnemonic::AND, "and"},     {Mnemonic::OR, "or"},
    {Mnemonic::XOR, "xor"},         {Mnemonic::SLTU, "sltu"},   {Mnemonic::ECALL, "ecall"},
    {Mnemonic::EBREAK, "ebreak"},   {Mnemonic::C_ADDI, "c.addi"},
    {Mnemonic::C_LWSP, "c.lwsp"},   {Mnemonic::C_MV, "c.mv"},   {Mnemonic::C_LI, "c.li"},
    {Mnemonic::C_JR, "c.jr"},       {Mnemonic::C_J, "c.j"},     {Mnemonic::C_NOP, "c.nop"},
};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

// Decode a 32-bit encoding against the supported subset. Does not handle
// compressed words; returns a DecodedInstr with legal=false on no match.
DecodedInstr decode32(uint32_t w) {
    DecodedInstr d;
    d.raw = RawInstr{w, 32};
    d.expanded = w;
    uint32_t op = bits(w, 6, 0);
    uint32_t f3 = bits(w, 14, 12);
    uint32_t f7 = bits(w, 31, 25);
    uint8_t rd = uint8_t(bits(w, 11, 7));
    uint8_t rs1 = uint8_t(bits(w, 19, 15));
    uint8_t rs2 = uint8_t(bits(w, 24, 20));

    auto ok = [&](Mnemonic m, Format f) {
        d.mnemonic = m;
        d.format = f;
        d.legal = true;
    };

    switch (op) {
        case 0b0110111:
            ok(Mnemonic::LUI, Format::U);
            d.rd = rd;
            d.imm = int32_t(w & 0xFFFFF000u);
            break;
        case 0b0010111:
            ok(Mnemonic::AUIPC, Format::U);
            d.rd = rd;
            d.imm = int32_t(w & 0xFFFFF000u);
            break;
        case 0b1101111:
            ok(Mnemonic::JAL, Format::J);
            d.rd = rd;
            d.imm = imm_j(w);
            break;
        case 0b1100111:
            if (f3 == 0) {
                ok(Mnemonic::JALR, Format::I);
                d.rd = rd;
                d.rs1 = rs1;
                d.imm = imm_i(w);
            }
            break;
        case 0b1100011: {
            Mnemonic m = Mnemonic::ILLEGAL;
            if (f3 == 0b000) m = Mnemonic::BEQ;
            else if (f3 == 0b001) m = Mnemonic::BNE;
            else if (f3 == 0b100) m = Mnemonic::BLT;
            else if (f3 == 0b101) m = Mnemonic::BGE;
            if (m != Mnemonic::ILLEGAL) {
                ok(m, Format::B);
                d.rs1 = rs1;
                d.rs2 = rs2;
                d.imm = imm_b(w);
            }
            break;
        }
        case 0b0000011:
            if (f3 == 0b010) {
                ok(Mnemonic::LW, Format::I);
                d.rd = rd;
                d.rs1 = rs1;
                d.imm = imm_i(w);
            }
            break;
        case 0b0100011:
            if (f3 == 0b010) {
                ok(Mnemonic::SW, Format::S);
                d.rs1 = rs1;
                d.rs2 = rs2;
                d.imm = imm_s(w);
            }
            break;
        case 0b0010011:
            if (f3 == 0b000) {
                ok(Mnemonic::ADDI, Format::I);
                d.rd = rd;
                d.rs1 = rs1;
                d.imm = imm_i(w);
            } else if (f3 == 0b001 && f7 == 0) {
                ok(Mnemonic::SLLI, Format::I);
                d.rd = rd;
                d.rs1 = rs1;
                d.imm = int32_t(rs2);
            } else if (f3 == 0b101 && f7 == 0) {
                ok(Mnemonic::SRLI, Format::I);
                d.rd = rd;
                d.rs1 = rs1;
                d.imm = int32_t(rs2);
            }
            break;
        case 0b0110011: {
            Mnemonic m = Mnemonic::ILLEGAL;
            if (f7 == 0b0000000) {
                if (f3 == 0b000) m = Mnemonic::ADD;
                else if (f3 == 0b011) m = Mnemonic::SLTU;
                else if (f3 == 0b100) m = Mnemonic::XOR;
                else if (f3 == 0b110) m = Mnemonic::OR;
                else if (f3 == 0b111) m = Mnemonic::AND;
            } else if (f7 == 0b0100000 && f3 == 0b000) {
                m = Mnemonic::SUB;
            }
            if (m != Mnemonic::ILLEGAL) {
                ok(m, Format::R);
                d.rd = rd;
                d.rs1 = rs1;
                d.rs2 = rs2;
            }
            break;
        }
        case 0b1110011:
            if (w == 0x00000073u) ok(Mnemonic::ECALL, Format::I);
            else if (w == 0x00100073u) ok(Mnemonic::EBREAK, Format::I);
            break;
        default:
            break;
    }
    return d;
}

struct CompressedView {
    Mnemonic mnemonic;
    Format format;
    uint32_t expanded;
};

std::optional<CompressedView> decode_compressed(uint16_t v) {
    uint32_t quadrant = bits(v, 1, 0);
    uint32_t f3 = bits(v, 15, 13);
    uint32_t rdrs1 = bits(v, 11, 7);
    uint32_t rs2 = bits(v, 6, 2);
    int32_t imm6 = sext(bits(v, 12, 12) << 5 | bits(v, 6, 2), 6);

    if (v == 0) return std::nullopt;  // reserved-illegal

    if (quadrant == 0b01) {
        switch (f3) {
            case 0b000:
                if (v == 0x0001)
                    return CompressedView{Mnemonic::C_NOP, Format::CI, enc_i(0, 0, 0, 0, 0b0010011)};
                // rd=0 or imm=0 are hints; they expand like any other c.addi
                return CompressedView{Mnemonic::C_ADDI, Format::CI,
                                      enc_i(imm6, rdrs1, 0, rdrs1, 0b0010011)};
            case 0b010:
                return CompressedView{Mnemonic::C_LI, Format::CI,
                                      enc_i(imm6, 0, 0, rdrs1, 0b0010011)};
            case 0b101: {
                int32_t imm = sext(bits(v, 12, 12) << 11 | bits(v, 8, 8) << 10 |
                                       bits(v, 10, 9) << 8 | bits(v, 6, 6) << 7 |
                                       bits(v, 7, 7) << 6 | bits(v, 2, 2) << 5 |
                                       bits(v, 11, 11) << 4 | bits(v, 5, 3) << 1,
                                   12);
                return CompressedView{Mnemonic::C_J, Format::CJ, enc_j(imm, 0, 0b1101111)};
            }
            default:
                return std::nullopt;
        }
    }
    if (quadrant == 0b10) {
        switch (f3) {
            case 0b010: {  // c.lwsp
                if (rdrs1 == 0) return std::nullopt;  // reserved
                uint32_t uimm = bits(v, 3, 2) << 6 | bits(v, 12, 12) << 5 | bits(v, 6, 4) << 2;
                return CompressedView{Mnemonic::C_LWSP, Format::CI,
                                      enc_i(int32_t(uimm), 2, 0b010, rdrs1, 0b0000011)};
            }
            case 0b100:
                if (bits(v, 12, 12) == 0) {
                    if (rs2 != 0)
                        return CompressedView{Mnemonic::C_MV, Format::CR,
                                              enc_r(0, rs2, 0, 0, rdrs1, 0b0110011)};
                    if (rdrs1 == 0) return std::nullopt;  // reserved
                    return CompressedView{Mnemonic::C_JR, Format::CR,
                                          enc_i(0, rdrs1, 0, 0, 0b1100111)};
                }
                return std::nullopt;  // c.add/c.jalr/c.ebreak are outside the subset
            default:
                return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace

const char* mnemonic_name(Mnemonic m) {
    for (const auto& e : kMnemonics)
        if (e.m == m) return e.name;
    return "?";
}

std::optional<Mnemonic> mnemonic_from_name(std::string_view name) {
    std::string n = lower(name);
    for (const auto& e : kMnemonics)
        if (n == e.name) return e.m;
    return std::nullopt;
}

std::optional<uint32_t> expand_compressed(uint16_t raw16) {
    if ((raw16 & 3u) == 3u)
        throw std::invalid_argument("expand_compressed: input is a 32-bit-format word");
    auto cv = decode_compressed(raw16);
    if (!cv) return std::nullopt;
    return cv->expanded;
}

DecodedInstr decode(RawInstr raw) {
    if (raw.length == 16) {
        uint16_t v = uint16_t(raw.bits);
        auto cv = decode_compressed(v);
        if (!cv) {
            DecodedInstr d;
            d.raw = raw;
            d.legal = false;
            auto f = extract_positional(raw);
            d.rd = uint8_t(f.rd & 31);
            d.rs1 = uint8_t(f.rs1 & 31);
            d.imm = f.imm;
            return d;
        }
        DecodedInstr d = decode32(cv->expanded);
        d.mnemonic = cv->mnemonic;
        d.format = cv->format;
        d.raw = raw;
        d.expanded_from_compressed = true;
        return d;
    }
    return decode32(raw.bits);
}

PositionalFields extract_positional(RawInstr raw) {
    PositionalFields f;
    uint32_t w = raw.bits;
    if (raw.length == 16) {
        f.opcode = bits(w, 1, 0) | bits(w, 15, 13) << 2;
        f.rd = bits(w, 11, 7);
        f.rs1 = bits(w, 11, 7);
        f.rs2 = bits(w, 6, 2);
        f.funct = bits(w, 12, 12);
        f.imm = sext(bits(w, 12, 12) << 5 | bits(w, 6, 2), 6);
        return f;
    }
    f.opcode = bits(w, 6, 0);
    f.rd = bits(w, 11, 7);
    f.rs1 = bits(w, 19, 15);
    f.rs2 = bits(w, 24, 20);
    f.funct = bits(w, 14, 12) | bits(w, 31, 25) << 3;
    switch (f.opcode) {
        case 0b0100011: f.imm = imm_s(w); break;
        case 0b1100011: f.imm = imm_b(w); break;
        case 0b0110111:
        case 0b0010111: f.imm = int32_t(w & 0xFFFFF000u); break;
        case 0b1101111: f.imm = imm_j(w); break;
        default: f.imm = imm_i(w); break;
    }
    return f;
}

int32_t extract_imm(uint32_t word, Format format) {
    switch (format) {
        case Format::S: return imm_s(word);
        case Format::B: return imm_b(word);
        case Format::U: return int32_t(word & 0xFFFFF000u);
        case Format::J: return imm_j(word);
        case Format::R: return 0;
        default: return imm_i(word);
    }
}

const char* field_kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::Opcode: return "opcode";
        case FieldKind::Rd: return "rd";
        case FieldKind::Rs1: return "rs1";
        case FieldKind::Rs2: return "rs2";
        case FieldKind::Funct: return "funct";
        case FieldKind::Imm: return "imm";
    }
    return "?";
}

const char* outcome_class_name(OutcomeClass c) {
    switch (c) {
        case OutcomeClass::Unchanged: return "unchanged";
        case OutcomeClass::AOpcodeAltered: return "a_opcode_altered";
        case OutcomeClass::BDestCorrupted: return "b_dest_corrupted";
        case OutcomeClass::CSourceCorrupted: return "c_source_corrupted";
        case OutcomeClass::DFunctOrImmCorrupted: return "d_funct_or_imm_corrupted";
        case OutcomeClass::BecameIllegal: return "became_illegal";
    }
    return "?";
}

namespace {

// Per-field view honoring the word's own format: fields the format does not
// define are absent, so e.g. a J-type immediate change is not misread as an
// rs2 change just because the bit ranges overlap.
struct FieldView {
    std::optional<uint32_t> opcode, rd, rs1, rs2, funct;
    std::optional<int32_t> imm;
};

FieldView field_view(RawInstr raw) {
    FieldView v;
    auto f = extract_positional(raw);
    v.opcode = f.opcode;
    if (raw.length == 16) {
        v.rd = f.rd;
        v.rs2 = f.rs2;
        v.funct = f.funct;
        v.imm = f.imm;
        return v;
    }
    switch (f.opcode) {
        case 0b0110111:  // lui
        case 0b0010111:  // auipc
        case 0b1101111:  // jal
            v.rd = f.rd;
            v.imm = f.imm;
            break;
        case 0b0100011:  // store
        case 0b1100011:  // branch
            v.funct = f.funct & 7;
            v.rs1 = f.rs1;
            v.rs2 = f.rs2;
            v.imm = f.imm;
            break;
        case 0b0110011:  // register-register
            v.rd = f.rd;
            v.funct = f.funct;
            v.rs1 = f.rs1;
            v.rs2 = f.rs2;
            break;
        default:  // I-type and fallback
            v.rd = f.rd;
            v.funct = f.funct & 7;
            v.rs1 = f.rs1;
            v.imm = f.imm;
            break;
    }
    return v;
}

}  // namespace

FieldDiff diff_fields(const DecodedInstr& golden, const DecodedInstr& corrupted) {
    FieldDiff out;
    auto g = field_view(golden.raw);
    auto c = field_view(corrupted.raw);
    if (g.opcode != c.opcode) out.changed_fields.push_back(FieldKind::Opcode);
    if (g.rd != c.rd) out.changed_fields.push_back(FieldKind::Rd);
    if (g.rs1 != c.rs1) out.changed_fields.push_back(FieldKind::Rs1);
    if (g.rs2 != c.rs2) out.changed_fields.push_back(FieldKind::Rs2);
    if (g.funct != c.funct) out.changed_fields.push_back(FieldKind::Funct);
    if (g.imm != c.imm) out.changed_fields.push_back(FieldKind::Imm);

    auto changed = [&](FieldKind k) {
        return std::find(out.changed_fields.begin(), out.changed_fields.end(), k) !=
               out.changed_fields.end();
    };

    if (!corrupted.legal) {
        out.outcome_class = OutcomeClass::BecameIllegal;
    } else if (!golden.legal) {
        out.outcome_class = OutcomeClass::AOpcodeAltered;
    } else if (out.changed_fields.empty()) {
        out.outcome_class = OutcomeClass::Unchanged;
    } else if (changed(FieldKind::Opcode)) {
        out.outcome_class = OutcomeClass::AOpcodeAltered;
    } else if (changed(FieldKind::Rd)) {
        out.outcome_class = OutcomeClass::BDestCorrupted;
    } else if (changed(FieldKind::Rs1) || changed(FieldKind::Rs2)) {
        out.outcome_class = OutcomeClass::CSourceCorrupted;
    } else {
        out.outcome_class = OutcomeClass::DFunctOrImmCorrupted;
    }
    return out;
}

std::string disassemble(const DecodedInstr& d) {
    std::ostringstream os;
    auto reg = [](std::optional<uint8_t> r) { return "x" + std::to_string(int(r.value())); };
    if (!d.legal) {
        os << ".word 0x" << std::hex << d.raw.bits;
        return os.str();
    }
    switch (d.mnemonic) {
        case Mnemonic::LUI:
        case Mnemonic::AUIPC:
            os << mnemonic_name(d.mnemonic) << " " << reg(d.rd) << ", 0x" << std::hex
               << ((uint32_t(d.imm) >> 12) & 0xFFFFF);
            break;
        case Mnemonic::JAL:
            os << "jal " << reg(d.rd) << ", " << d.imm;
            break;
        case Mnemonic::JALR:
            os << "jalr " << reg(d.rd) << ", " << d.imm << "(" << reg(d.rs1) << ")";
            break;
        case Mnemonic::BEQ:
        case Mnemonic::BNE:
        case Mnemonic::BLT:
        case Mnemonic::BGE:
            os << mnemonic_name(d.mnemonic) << " " << reg(d.rs1) << ", " << reg(d.rs2) << ", "
               << d.imm;
            break;
        case Mnemonic::LW:
            os << "lw " << reg(d.rd) << ", " << d.imm << "(" << reg(d.rs1) << ")";
            break;
        case Mnemonic::SW:
            os << "sw " << reg(d.rs2) << ", " << d.imm << "(" << reg(d.rs1) << ")";
            break;
        case Mnemonic::ADDI:
        case Mnemonic::SLLI:
        case Mnemonic::SRLI:
            os << mnemonic_name(d.mnemonic) << " " << reg(d.rd) << ", " << reg(d.rs1) << ", "
               << d.imm;
            break;
        case Mnemonic::ADD:
        case Mnemonic::SUB:
        case Mnemonic::AND:
        case Mnemonic::OR:
        case Mnemonic::XOR:
        case Mnemonic::SLTU:
            os << mnemonic_name(d.mnemonic) << " " << reg(d.rd) << ", " << reg(d.rs1) << ", "
               << reg(d.rs2);
            break;
        case Mnemonic::ECALL:
        case Mnemonic::EBREAK:
            os << mnemonic_name(d.mnemonic);
            break;
        case Mnemonic::C_ADDI:
            os << "c.addi " << reg(d.rd) << ", " << d.imm;
            break;
        case Mnemonic::C_LI:
            os << "c.li " << reg(d.rd) << ", " << d.imm;
            break;
        case Mnemonic::C_LWSP:
            os << "c.lwsp " << reg(d.rd) << ", " << d.imm << "(x2)";
            break;
        case Mnemonic::C_MV:
            os << "c.mv " << reg(d.rd) << ", " << reg(d.rs2);
            break;
        case Mnemonic::C_JR:
            os << "c.jr " << reg(d.rs1);
            break;
        case Mnemonic::C_J:
            os << "c.j " << d.imm;
            break;
        case Mnemonic::C_NOP:
            os << "c.nop";
            break;
        default:
            os << ".word 0x" << std::hex << d.raw.bits;
    }
    return os.str();
}

std::vector<uint8_t> ProgramImage::flat() const {
    std::vector<uint8_t> out(end_addr(), 0);
    for (auto [a, b] : bytes) out[a] = b;
    return out;
}

// ---------------------------------------------------------------------------
// Mini-assembler
// ---------------------------------------------------------------------------

namespace {

struct Token {
    std::string text;
};

std::optional<uint32_t> parse_reg(const std::string& t) {
    static const std::map<std::string, uint32_t> aliases = {
        {"zero", 0}, {"ra", 1},  {"sp", 2},  {"gp", 3},  {"tp", 4},  {"t0", 5},
        {"t1", 6},   {"t2", 7},  {"s0", 8},  {"fp", 8},  {"s1", 9},  {"a0", 10},
        {"a1", 11},  {"a2", 12}, {"a3", 13}, {"a4", 14}, {"a5", 15}, {"a6", 16},
        {"a7", 17},  {"s2", 18}, {"s3", 19}, {"s4", 20}, {"s5", 21}, {"s6", 22},
        {"s7", 23},  {"s8", 24}, {"s9", 25}, {"s10", 26}, {"s11", 27}, {"t3", 28},
        {"t4", 29},  {"t5", 30}, {"t6", 31},
    };
    std::string s = lower(t);
    if (auto it = aliases.find(s); it != aliases.end()) return it->second;
    if (s.size() >= 2 && s[0] == 'x') {
        for (size_t i = 1; i < s.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
        long n = std::stol(s.substr(1));
        if (n >= 0 && n < 32) return uint32_t(n);
    }
    return std::nullopt;
}

std::optional<int64_t> parse_int(const std::string& t) {
    if (t.empty()) return std::nullopt;
    size_t pos = 0;
    try {
        long long v = std::stoll(t, &pos, 0);
        if (pos != t.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

struct Operand {
    enum Kind { Reg, Imm, Mem, Label } kind;
    uint32_t reg = 0;
    int64_t imm = 0;
    uint32_t base = 0;
    std::string label;
};

struct Patch {
    uint32_t pc;
    int line;
    Mnemonic mnemonic;
    uint32_t rd_or_rs1 = 0;
    uint32_t rs2 = 0;
    std::string label;
};

[[noreturn]] void fail(int line, const std::string& msg) { throw AsmError{line, msg}; }

void check_range(int line, int64_t v, int64_t lo, int64_t hi, const char* what) {
    if (v < lo || v > hi)
        fail(line, std::string(what) + " out of range: " + std::to_string(v));
}
void check_even(int line, int64_t v, const char* what) {
    if (v & 1) fail(line, std::string(what) + " must be even");
}

uint16_t enc_ci_q1(uint32_t f3, uint32_t rd, int64_t imm) {
    uint32_t u = uint32_t(imm & 0x3F);
    return uint16_t(f3 << 13 | bits(u, 5, 5) << 12 | rd << 7 | bits(u, 4, 0) << 2 | 0b01);
}

uint16_t enc_cj(int64_t imm) {
    uint32_t u = uint32_t(imm & 0xFFF);
    uint32_t f = bits(u, 11, 11) << 12 | bits(u, 4, 4) << 11 | bits(u, 9, 8) << 9 |
                 bits(u, 10, 10) << 8 | bits(u, 6, 6) << 7 | bits(u, 7, 7) << 6 |
                 bits(u, 3, 1) << 3 | bits(u, 5, 5) << 2;
    return uint16_t(0b101 << 13 | f | 0b01);
}

}  // namespace

ProgramImage assemble(std::string_view source) {
    ProgramImage img;
    uint32_t pc = 0;
    std::vector<Patch> patches;
    std::map<std::string, uint32_t> labels;

    auto emit16 = [&](uint16_t h) {
        img.put_half(pc, h);
        pc += 2;
    };
    auto emit32 = [&](uint32_t w) {
        img.put_word(pc, w);
        pc += 4;
    };

    std::istringstream in{std::string(source)};
    std::string rawline;
    int lineno = 0;
    while (std::getline(in, rawline)) {
        ++lineno;
        std::string line = rawline;
        if (auto h = line.find_first_of("#;"); h != std::string::npos) line.erase(h);

        // peel off labels
        for (;;) {
            size_t i = line.find_first_not_of(" \t");
            if (i == std::string::npos) {
                line.clear();
                break;
            }
            size_t colon = line.find(':');
            size_t word_end = line.find_first_of(" \t", i);
            if (colon != std::string::npos && (word_end == std::string::npos || colon < word_end)) {
                std::string name = line.substr(i, colon - i);
                if (name.empty()) fail(lineno, "empty label");
                if (labels.count(name)) fail(lineno, "duplicate label '" + name + "'");
                labels[name] = pc;
                line.erase(0, colon + 1);
                continue;
            }
            line.erase(0, i);
            break;
        }
        if (line.empty()) continue;

        // split mnemonic and operand list
        size_t sp = line.find_first_of(" \t");
        std::string mn = lower(line.substr(0, sp));
        std::string rest = sp == std::string::npos ? "" : line.substr(sp);

        std::vector<Operand> ops;
        {
            std::string cur;
            auto flush = [&]() {
                size_t a = cur.find_first_not_of(" \t");
                if (a == std::string::npos) {
                    if (!cur.empty()) fail(lineno, "empty operand");
                    return;
                }
                size_t b = cur.find_last_not_of(" \t");
                std::string t = cur.substr(a, b - a + 1);
                cur.clear();
                Operand o;
                if (auto r = parse_reg(t)) {
                    o.kind = Operand::Reg;
                    o.reg = *r;
                } else if (auto paren = t.find('('); paren != std::string::npos && t.back() == ')') {
                    std::string immpart = t.substr(0, paren);
                    std::string regpart = t.substr(paren + 1, t.size() - paren - 2);
                    auto base = parse_reg(regpart);
                    if (!base) fail(lineno, "bad base register '" + regpart + "'");
                    auto iv = immpart.empty() ? std::optional<int64_t>(0) : parse_int(immpart);
                    if (!iv) fail(lineno, "bad offset '" + immpart + "'");
                    o.kind = Operand::Mem;
                    o.base = *base;
                    o.imm = *iv;
                } else if (auto iv = parse_int(t)) {
                    o.kind = Operand::Imm;
                    o.imm = *iv;
                } else {
                    o.kind = Operand::Label;
                    o.label = t;
                }
                ops.push_back(o);
            };
            for (char c : rest) {
                if (c == ',') flush();
                else cur += c;
            }
            if (!cur.empty() && cur.find_first_not_of(" \t") != std::string::npos) flush();
        }

        auto want = [&](size_t n) {
            if (ops.size() != n)
                fail(lineno, mn + ": expected " + std::to_string(n) + " operands, got " +
                                 std::to_string(ops.size()));
        };
        auto reg_at = [&](size_t i) -> uint32_t {
            if (ops[i].kind != Operand::Reg) fail(lineno, mn + ": operand " + std::to_string(i + 1) + " must be a register");
            return ops[i].reg;
        };
        auto imm_at = [&](size_t i) -> int64_t {
            if (ops[i].kind != Operand::Imm) fail(lineno, mn + ": operand " + std::to_string(i + 1) + " must be an immediate");
            return ops[i].imm;
        };
        // branch/jump target: either a numeric pc-relative offset or a label
        auto target_at = [&](size_t i, Mnemonic m, uint32_t a, uint32_t b) -> std::optional<int64_t> {
            if (ops[i].kind == Operand::Imm) return ops[i].imm;
            if (ops[i].kind == Operand::Label) {
                if (auto it = labels.find(ops[i].label); it != labels.end())
                    return int64_t(it->second) - int64_t(pc);
                patches.push_back({pc, lineno, m, a, b, ops[i].label});
                return std::nullopt;  // placeholder emitted, patched later
            }
            fail(lineno, mn + ": bad target operand");
        };

        if (mn == ".org") {
            want(1);
            int64_t a = imm_at(0);
            if (a < pc) fail(lineno, ".org going backwards");
            pc = uint32_t(a);
            continue;
        }
        if (mn == ".word") {
            if (ops.empty()) fail(lineno, ".word needs at least one value");
            for (auto& o : ops) {
                if (o.kind != Operand::Imm) fail(lineno, ".word values must be immediates");
                emit32(uint32_t(o.imm));
            }
            continue;
        }

        auto m = mnemonic_from_name(mn);
        if (!m) fail(lineno, "unsupported mnemonic '" + mn + "'");

        switch (*m) {
            case Mnemonic::LUI:
            case Mnemonic::AUIPC: {
                want(2);
                int64_t u = imm_at(1);
                check_range(lineno, u, 0, 0xFFFFF, "upper immediate");
                emit32(enc_u(uint32_t(u), reg_at(0),
                             *m == Mnemonic::LUI ? 0b0110111 : 0b0010111));
                break;
            }
            case Mnemonic::JAL: {
                uint32_t rd = 1;
                size_t ti = 0;
                if (ops.size() == 2) {
                    rd = reg_at(0);
                    ti = 1;
                } else if (ops.size() != 1) {
                    fail(lineno, "jal: expected 'jal rd, target' or 'jal target'");
                }
                auto t = target_at(ti, Mnemonic::JAL, rd, 0);
                int64_t off = t.value_or(0);
                check_range(lineno, off, -(1 << 20), (1 << 20) - 1, "jump offset");
                check_even(lineno, off, "jump offset");
                emit32(enc_j(int32_t(off), rd, 0b1101111));
                break;
            }
            case Mnemonic::JALR: {
                want(2);
                if (ops[1].kind != Operand::Mem) fail(lineno, "jalr: expected 'jalr rd, imm(rs1)'");
                check_range(lineno, ops[1].imm, -2048, 2047, "immediate");
                emit32(enc_i(int32_t(ops[1].imm), ops[1].base, 0, reg_at(0), 0b1100111));
                break;
            }
            case Mnemonic::BEQ:
            case Mnemonic::BNE:
            case Mnemonic::BLT:
            case Mnemonic::BGE: {
                want(3);
                uint32_t rs1 = reg_at(0), rs2 = reg_at(1);
                auto t = target_at(2, *m, rs1, rs2);
                int64_t off = t.value_or(0);
                check_range(lineno, off, -4096, 4095, "branch offset");
                check_even(lineno, off, "branch offset");
                uint32_t f3 = *m == Mnemonic::BEQ   ? 0b000
                              : *m == Mnemonic::BNE ? 0b001
                              : *m == Mnemonic::BLT ? 0b100
                                                    : 0b101;
                emit32(enc_b(int32_t(off), rs2, rs1, f3, 0b1100011));
                break;
            }
            case Mnemonic::LW: {
                want(2);
                if (ops[1].kind != Operand::Mem) fail(lineno, "lw: expected 'lw rd, imm(rs1)'");
                check_range(lineno, ops[1].imm, -2048, 2047, "load offset");
                emit32(enc_i(int32_t(ops[1].imm), ops[1].base, 0b010, reg_at(0), 0b0000011));
                break;
            }
            case Mnemonic::SW: {
                want(2);
                if (ops[1].kind != Operand::Mem) fail(lineno, "sw: expected 'sw rs2, imm(rs1)'");
                check_range(lineno, ops[1].imm, -2048, 2047, "store offset");
                emit32(enc_s(int32_t(ops[1].imm), reg_at(0), ops[1].base, 0b010, 0b0100011));
                break;
            }
            case Mnemonic::ADDI: {
                want(3);
                int64_t v = imm_at(2);
                check_range(lineno, v, -2048, 2047, "immediate");
                emit32(enc_i(int32_t(v), reg_at(1), 0b000, reg_at(0), 0b0010011));
                break;
            }
            case Mnemonic::SLLI:
            case Mnemonic::SRLI: {
                want(3);
                int64_t v = imm_at(2);
                check_range(lineno, v, 0, 31, "shift amount");
                emit32(enc_i(int32_t(v), reg_at(1), *m == Mnemonic::SLLI ? 0b001 : 0b101,
                             reg_at(0), 0b0010011));
                break;
            }
            case Mnemonic::ADD:
            case Mnemonic::SUB:
            case Mnemonic::AND:
            case Mnemonic::OR:
            case Mnemonic::XOR:
            case Mnemonic::SLTU: {
                want(3);
                uint32_t f7 = *m == Mnemonic::SUB ? 0b0100000 : 0;
                uint32_t f3 = *m == Mnemonic::ADD   ? 0b000
                              : *m == Mnemonic::SUB ? 0b000
                              : *m == Mnemonic::SLTU ? 0b011
                              : *m == Mnemonic::XOR ? 0b100
                              : *m == Mnemonic::OR  ? 0b110
                                                    : 0b111;
                emit32(enc_r(f7, reg_at(2), reg_at(1), f3, reg_at(0), 0b0110011));
                break;
            }
            case Mnemonic::ECALL:
                want(0);
                emit32(0x00000073u);
                break;
            case Mnemonic::EBREAK:
                want(0);
                emit32(0x00100073u);
                break;
            case Mnemonic::C_ADDI:
            case Mnemonic::C_LI: {
                want(2);
                int64_t v = imm_at(1);
                check_range(lineno, v, -32, 31, "immediate");
                uint32_t rd = reg_at(0);
                if (*m == Mnemonic::C_ADDI && rd == 0 && v == 0)
                    fail(lineno, "c.addi x0, 0 is c.nop");
                emit16(enc_ci_q1(*m == Mnemonic::C_ADDI ? 0b000 : 0b010, rd, v));
                break;
            }
            case Mnemonic::C_LWSP: {
                want(2);
                int64_t off;
                if (ops[1].kind == Operand::Mem) {
                    if (ops[1].base != 2) fail(lineno, "c.lwsp base must be x2");
                    off = ops[1].imm;
                } else {
                    off = imm_at(1);
                }
                uint32_t rd = reg_at(0);
                if (rd == 0) fail(lineno, "c.lwsp rd must not be x0");
                check_range(lineno, off, 0, 252, "stack offset");
                if (off & 3) fail(lineno, "stack offset must be a multiple of 4");
                uint32_t u = uint32_t(off);
                emit16(uint16_t(0b010 << 13 | bits(u, 5, 5) << 12 | rd << 7 |
                                bits(u, 4, 2) << 4 | bits(u, 7, 6) << 2 | 0b10));
                break;
            }
            case Mnemonic::C_MV: {
                want(2);
                uint32_t rd = reg_at(0), rs2 = reg_at(1);
                if (rs2 == 0) fail(lineno, "c.mv rs2 must not be x0");
                emit16(uint16_t(0b1000 << 12 | rd << 7 | rs2 << 2 | 0b10));
                break;
            }
            case Mnemonic::C_JR: {
                want(1);
                uint32_t rs1 = reg_at(0);
                if (rs1 == 0) fail(lineno, "c.jr rs1 must not be x0");
                emit16(uint16_t(0b1000 << 12 | rs1 << 7 | 0b10));
                break;
            }
            case Mnemonic::C_J: {
                want(1);
                auto t = target_at(0, Mnemonic::C_J, 0, 0);
                int64_t off = t.value_or(0);
                check_range(lineno, off, -2048, 2047, "jump offset");
                check_even(lineno, off, "jump offset");
                emit16(enc_cj(off));
                break;
            }
            case Mnemonic::C_NOP:
                want(0);
                emit16(0x0001);
                break;
            default:
                fail(lineno, "unsupported mnemonic '" + mn + "'");
        }
    }

    img.symbols = labels;
    for (const auto& p : patches) {
        auto it = labels.find(p.label);
        if (it == labels.end()) fail(p.line, "undefined label '" + p.label + "'");
        int64_t off = int64_t(it->second) - int64_t(p.pc);
        check_even(p.line, off, "target offset");
        switch (p.mnemonic) {
            case Mnemonic::JAL:
                check_range(p.line, off, -(1 << 20), (1 << 20) - 1, "jump offset");
                img.put_word(p.pc, enc_j(int32_t(off), p.rd_or_rs1, 0b1101111));
                break;
            case Mnemonic::C_J:
                check_range(p.line, off, -2048, 2047, "jump offset");
                img.put_half(p.pc, enc_cj(off));
                break;
            default: {
                check_range(p.line, off, -4096, 4095, "branch offset");
                uint32_t f3 = p.mnemonic == Mnemonic::BEQ   ? 0b000
                              : p.mnemonic == Mnemonic::BNE ? 0b001
                              : p.mnemonic == Mnemonic::BLT ? 0b100
                                                            : 0b101;
                img.put_word(p.pc, enc_b(int32_t(off), p.rs2, p.rd_or_rs1, f3, 0b1100011));
            }
        }
    }
    return img;
}

std::vector<Target> find_targets(const ProgramImage& image,
                                 const std::vector<std::string>& mnemonics) {
    std::vector<Target> out;
    if (image.empty() || mnemonics.empty()) return out;
    std::vector<Mnemonic> wanted;
    for (const auto& name : mnemonics) {
        auto m = mnemonic_from_name(name);
        if (!m) throw std::runtime_error("unknown mnemonic '" + name + "'");
        wanted.push_back(*m);
    }
    auto byte_at = [&](uint32_t a) -> uint8_t {
        auto it = image.bytes.find(a);
        return it == image.bytes.end() ? 0 : it->second;
    };
    uint32_t base = image.bytes.begin()->first;
    uint32_t end = image.end_addr();
    uint32_t a = base;
    while (a < end) {
        uint32_t half = byte_at(a) | uint32_t(byte_at(a + 1)) << 8;
        uint32_t len = (half & 3u) == 3u ? 4 : 2;
        if (a + len > end) {
            std::ostringstream os;
            os << "undecodable trailing region at 0x" << std::hex << a;
            throw std::runtime_error(os.str());
        }
        uint32_t word = half;
        if (len == 4) word |= uint32_t(byte_at(a + 2)) << 16 | uint32_t(byte_at(a + 3)) << 24;
        auto d = decode(RawInstr::from_bits(word));
        if (d.legal &&
            std::find(wanted.begin(), wanted.end(), d.mnemonic) != wanted.end())
            out.push_back(Target{a, d});
        a += len;
    }
    return out;
}

void save_image(const ProgramImage& image, const std::string& bin_path,
                const std::string& sym_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + bin_path);
    auto f = image.flat();
    bin.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size()));
    std::ofstream sym(sym_path);
    if (!sym) throw std::runtime_error("cannot write " + sym_path);
    for (const auto& [name, addr] : image.symbols) {
        sym << name << " 0x" << std::hex << addr << "\n";
    }
}

ProgramImage load_image(const std::string& bin_path, const std::string& sym_path) {
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read " + bin_path);
    ProgramImage img;
    std::vector<char> data((std::istreambuf_iterator<char>(bin)),
                           std::istreambuf_iterator<char>());
    for (uint32_t i = 0; i < data.size(); ++i) img.bytes[i] = uint8_t(data[i]);
    std::ifstream sym(sym_path);
    if (sym) {
        std::string name, addr;
        while (sym >> name >> addr) img.symbols[name] = uint32_t(std::stoul(addr, nullptr, 0));
    }
    return img;
}

}  // namespace glitchsim::isa
