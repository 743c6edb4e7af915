#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace glitchsim::isa {

// Raw fetch word. Length is fully determined by the two lowest bits:
// a value with bits[1:0] == 0b11 is a 32-bit encoding, anything else is
// a 16-bit compressed encoding occupying the low halfword.
struct RawInstr {
    uint32_t bits = 0;
    unsigned length = 32;  // 16 or 32

    static RawInstr from_bits(uint32_t w) {
        if ((w & 0x3u) == 0x3u)
            return RawInstr{w, 32};
        return RawInstr{w & 0xFFFFu, 16};
    }
    bool operator==(const RawInstr&) const = default;
};

enum class Mnemonic {
    ILLEGAL,
    // RV32I
    LUI, AUIPC, JAL, JALR,
    BEQ, BNE, BLT, BGE,
    LW, SW,
    ADDI, SLLI, SRLI,
    ADD, SUB, AND, OR, XOR, SLTU,
    ECALL, EBREAK,
    // C extension (kept distinct so targets can be matched by compressed form)
    C_ADDI, C_LWSP, C_MV, C_LI, C_JR, C_J, C_NOP,
};

enum class Format { R, I, S, B, U, J, CI, CR, CL, CSS, CB, CJ };

const char* mnemonic_name(Mnemonic m);
std::optional<Mnemonic> mnemonic_from_name(std::string_view name);  // case-insensitive

struct DecodedInstr {
    Mnemonic mnemonic = Mnemonic::ILLEGAL;
    Format format = Format::I;
    std::optional<uint8_t> rd;
    std::optional<uint8_t> rs1;
    std::optional<uint8_t> rs2;
    int32_t imm = 0;
    RawInstr raw;                       // the fetched encoding (16 or 32 bit)
    uint32_t expanded = 0;              // 32-bit word after compressed expansion
    bool expanded_from_compressed = false;
    bool legal = false;

    bool operator==(const DecodedInstr&) const = default;
    bool writes_rd() const { return legal && rd.has_value(); }
    bool is_branch() const {
        return mnemonic == Mnemonic::BEQ || mnemonic == Mnemonic::BNE ||
               mnemonic == Mnemonic::BLT || mnemonic == Mnemonic::BGE;
    }
    bool is_jump() const {
        return mnemonic == Mnemonic::JAL || mnemonic == Mnemonic::JALR ||
               mnemonic == Mnemonic::C_J || mnemonic == Mnemonic::C_JR;
    }
    bool is_load() const { return mnemonic == Mnemonic::LW || mnemonic == Mnemonic::C_LWSP; }
    bool is_store() const { return mnemonic == Mnemonic::SW; }
    bool is_halt() const { return mnemonic == Mnemonic::ECALL || mnemonic == Mnemonic::EBREAK; }
};

// Decode a fetched word. 16-bit encodings are expanded first; illegality of a
// compressed word is judged on the 16-bit encoding (the expander's input side).
DecodedInstr decode(RawInstr raw);
inline DecodedInstr decode(uint32_t word) { return decode(RawInstr::from_bits(word)); }

// Expand a 16-bit compressed encoding to its 32-bit equivalent.
// Returns nullopt for encodings outside the supported subset (including the
// reserved all-zero halfword). Precondition: raw16 has bits[1:0] != 0b11.
std::optional<uint32_t> expand_compressed(uint16_t raw16);

// Positional field extraction that never fails; used to attribute corruption
// in words that do not decode legally. Fields are pulled by the fixed RV32
// bit positions (opcode[6:0], rd[11:7], funct3[14:12], rs1[19:15],
// rs2[24:20], funct7[31:25]); imm is taken per the opcode's natural format
// with an I-type fallback.
struct PositionalFields {
    uint32_t opcode = 0;
    uint32_t rd = 0;
    uint32_t rs1 = 0;
    uint32_t rs2 = 0;
    uint32_t funct = 0;  // funct3 | funct7 << 3
    int32_t imm = 0;
};
PositionalFields extract_positional(RawInstr raw);

// Immediate extraction from a 32-bit word by explicit format (I/S/B/U/J).
int32_t extract_imm(uint32_t word, Format format);

enum class FieldKind { Opcode, Rd, Rs1, Rs2, Funct, Imm };
enum class OutcomeClass {
    Unchanged,
    AOpcodeAltered,
    BDestCorrupted,
    CSourceCorrupted,
    DFunctOrImmCorrupted,
    BecameIllegal,
};
const char* field_kind_name(FieldKind k);
const char* outcome_class_name(OutcomeClass c);

struct FieldDiff {
    std::vector<FieldKind> changed_fields;  // ascending FieldKind order
    OutcomeClass outcome_class = OutcomeClass::Unchanged;
    bool operator==(const FieldDiff&) const = default;
};

// Field-level diff of two decodes of the same fetch slot. Severity precedence:
// became_illegal > opcode > rd > rs > funct/imm.
FieldDiff diff_fields(const DecodedInstr& golden, const DecodedInstr& corrupted);

// Canonical disassembly accepted back by the assembler (branch/jump targets
// are printed as numeric pc-relative offsets).
std::string disassemble(const DecodedInstr& d);

struct ProgramImage {
    // Sparse byte image; flat serialization spans [0, max_addr].
    std::map<uint32_t, uint8_t> bytes;
    std::map<std::string, uint32_t> symbols;

    void put_word(uint32_t addr, uint32_t w) {
        for (int i = 0; i < 4; ++i) bytes[addr + i] = uint8_t(w >> (8 * i));
    }
    void put_half(uint32_t addr, uint16_t h) {
        bytes[addr] = uint8_t(h);
        bytes[addr + 1] = uint8_t(h >> 8);
    }
    bool empty() const { return bytes.empty(); }
    uint32_t end_addr() const { return bytes.empty() ? 0 : bytes.rbegin()->first + 1; }
    std::vector<uint8_t> flat() const;
};

struct AsmError {
    int line = 0;
    std::string message;
};

// Single-pass mini-assembler with a label back-patch table.
// Throws AsmError on syntax errors, unsupported mnemonics and out-of-range
// immediates. Grammar is documented in the README.
ProgramImage assemble(std::string_view source);

struct Target {
    uint32_t pc = 0;
    DecodedInstr instr;
};

// Walk the image from its lowest address, honoring 16/32-bit slot lengths,
// and report every occurrence of the requested mnemonics in ascending pc
// order. Matching is case-insensitive on mnemonic names.
std::vector<Target> find_targets(const ProgramImage& image,
                                 const std::vector<std::string>& mnemonics);

// Image serialization: flat little-endian binary from address 0 plus a
// sidecar text file of "symbol 0xADDR" lines.
void save_image(const ProgramImage& image, const std::string& bin_path,
                const std::string& sym_path);
ProgramImage load_image(const std::string& bin_path, const std::string& sym_path);

}  // namespace glitchsim::isa
