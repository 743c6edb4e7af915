#pragma once

// Random straight-line-with-forward-branches program generator for the
// pipeline-vs-reference differential tests. Memory traffic stays inside a
// data window far above the code so stores can never rewrite instructions.

#include "isa.hpp"

#include <random>
#include <sstream>
#include <string>

namespace testgen {

inline std::string random_program(std::mt19937_64& rng, int body_len) {
    std::ostringstream os;
    auto r = [&](int lo, int hi) { return lo + int(rng() % uint64_t(hi - lo + 1)); };

    os << "  lui x10, 0x2\n";  // data base 0x2000
    os << "  lui x2, 0x2\n";   // stack base 0x2000
    for (int i = 1; i <= 8; ++i)
        os << "  addi x" << i + 16 << ", x0, " << r(-2048, 2047) << "\n";
    for (int i = 0; i < 4; ++i) os << "  sw x" << 17 + i << ", " << 4 * i << "(x10)\n";

    auto reg = [&]() { return "x" + std::to_string(r(1, 15)); };
    auto reg_nz = reg;

    for (int i = 0; i < body_len; ++i) {
        os << "L" << i << ":\n";
        int jump_room = body_len - i - 1;
        switch (r(0, 21)) {
            case 0: os << "  add " << reg() << ", " << reg() << ", " << reg() << "\n"; break;
            case 1: os << "  sub " << reg() << ", " << reg() << ", " << reg() << "\n"; break;
            case 2: os << "  and " << reg() << ", " << reg() << ", " << reg() << "\n"; break;
            case 3: os << "  or " << reg() << ", " << reg() << ", " << reg() << "\n"; break;
            case 4: os << "  xor " << reg() << ", " << reg() << ", " << reg() << "\n"; break;
            case 5: os << "  sltu " << reg() << ", " << reg() << ", " << reg() << "\n"; break;
            case 6: os << "  addi " << reg() << ", " << reg() << ", " << r(-2048, 2047) << "\n"; break;
            case 7: os << "  slli " << reg() << ", " << reg() << ", " << r(0, 31) << "\n"; break;
            case 8: os << "  srli " << reg() << ", " << reg() << ", " << r(0, 31) << "\n"; break;
            case 9: os << "  lui " << reg() << ", 0x" << std::hex << r(0, 0xFFFFF) << std::dec << "\n"; break;
            case 10: os << "  auipc " << reg() << ", 0x" << std::hex << r(0, 0xFF) << std::dec << "\n"; break;
            case 11:
                os << "  lui x10, 0x2\n";
                os << "  lw " << reg() << ", " << 4 * r(0, 63) << "(x10)\n";
                break;
            case 12:
                os << "  lui x10, 0x2\n";
                os << "  sw " << reg() << ", " << 4 * r(0, 63) << "(x10)\n";
                break;
            case 13:
                // load-use pair to exercise the stall path
                os << "  lui x10, 0x2\n";
                os << "  lw x5, " << 4 * r(0, 63) << "(x10)\n";
                os << "  addi x6, x5, 1\n";
                break;
            case 14: os << "  c.addi " << reg_nz() << ", " << r(-32, 31) << "\n"; break;
            case 15: os << "  c.li " << reg() << ", " << r(-32, 31) << "\n"; break;
            case 16: os << "  c.mv " << reg() << ", " << reg_nz() << "\n"; break;
            case 17:
                os << "  lui x2, 0x2\n";
                os << "  c.lwsp " << reg_nz() << ", " << 4 * r(0, 63) << "(x2)\n";
                break;
            case 18: os << "  c.nop\n"; break;
            case 19:
                if (jump_room > 0) {
                    const char* b[] = {"beq", "bne", "blt", "bge"};
                    os << "  " << b[r(0, 3)] << " " << reg() << ", " << reg() << ", L"
                       << i + r(1, std::min(jump_room, 6)) << "\n";
                }
                break;
            case 20:
                if (jump_room > 0)
                    os << "  jal " << reg() << ", L" << i + r(1, std::min(jump_room, 6)) << "\n";
                break;
            case 21:
                if (jump_room > 0)
                    os << "  c.j L" << i + r(1, std::min(jump_room, 6)) << "\n";
                break;
        }
    }
    os << "L" << body_len << ":\n";
    os << "  ebreak\n";
    return os.str();
}

}  // namespace testgen
