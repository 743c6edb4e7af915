// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Usage: acceptance [repo_root]

#include "campaign.hpp"
#include "gen_programs.hpp"
#include "rootcause.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

using namespace glitchsim;
using timing::GlitchSpec;
using timing::Policy;
using timing::Stage;
using timing::Trigger;

namespace {

std::string g_root = "..";
int g_failures = 0;
std::vector<std::string> g_notes;

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    printf("%s  %d %-28s %s\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
           detail.c_str());
    fflush(stdout);
    if (!pass) ++g_failures;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

isa::ProgramImage demo_image() { return isa::assemble(slurp(g_root + "/workloads/demo.s")); }
isa::ProgramImage loop_image() { return isa::assemble(slurp(g_root + "/workloads/loop.s")); }
timing::TimingProfile default_profile() {
    return timing::load_profile(g_root + "/profiles/default.profile");
}

// ---------------------------------------------------------------------------
// 1. Grid exactness: the default campaign enumerates exactly 9248 specs.
// ---------------------------------------------------------------------------
void criterion_grid() {
    auto t0 = now_seconds();
    auto img = demo_image();
    auto grid = campaign::default_grid(img);
    auto specs = campaign::enumerate_grid(grid);
    double dt = now_seconds() - t0;
    bool pass = specs.size() == 9248 && grid.offsets_ns.size() == 17 &&
                grid.widths_ns.size() == 17 && grid.stages.size() == 4 &&
                grid.targets.size() == 8 && dt < 1.0;
    std::ostringstream d;
    d << "specs=" << specs.size() << " (17x17x4x" << grid.targets.size() << "), " << dt << "s";
    report(1, "grid-exactness", pass, d.str());
}

// ---------------------------------------------------------------------------
// 2. Glitch arithmetic: offset+width sums at 1e-9, including the two rows
//    whose printed sums disagree with the formula (kept as known values).
// ---------------------------------------------------------------------------
void criterion_arithmetic() {
    bool pass = true;
    auto eq = [](double a, double b) { return std::fabs(a - b) < 1e-9; };
    pass &= eq(timing::glitch_period({0.833, 2.967, {}}), 3.800);
    pass &= eq(timing::glitch_period({0.833, 3.567, {}}), 4.400);
    // adopted formula for the upper rows: 0.833+3.667 = 4.500, 0.833+4.289 = 5.122
    pass &= eq(timing::glitch_period({0.833, 3.667, {}}), 4.500);
    pass &= eq(timing::glitch_period({0.833, 4.289, {}}), 5.122);
    // the printed row values 4.504 and 5.112 are known inconsistencies
    // against the sum formula and must stay distinguishable from it
    pass &= !eq(4.504, 4.500) && !eq(5.112, 5.122);
    report(2, "glitch-arithmetic", pass,
           "sums 3.800/4.400/4.500/5.122 exact; printed 4.504/5.112 recorded as "
           "formula deviations");
}

// ---------------------------------------------------------------------------
// 3. Case-band reproduction on the demo lw target.
// ---------------------------------------------------------------------------
void criterion_case_bands() {
    auto t0 = now_seconds();
    auto img = demo_image();
    auto profile = default_profile();
    std::vector<double> widths;
    for (double w = 1.5; w <= 5.3; w += 0.0125) widths.push_back(w);
    for (double edge : {3.800, 4.400, 5.122, 5.172})
        widths.push_back(edge - 0.833);  // land exactly on each band edge
    std::sort(widths.begin(), widths.end());

    auto pts = classify::case_bands_check(img, 0, profile, {0x386, 1, "lw"}, 0.833, widths);
    bool pass = true;
    int last_case = 1;
    std::set<int> seen;
    for (const auto& p : pts) {
        int expect;
        if (p.t_glitch <= 3.800) expect = 1;
        else if (p.t_glitch <= 4.400) expect = 2;
        else if (p.t_glitch <= 5.122) expect = 3;
        else if (p.t_glitch <= 5.172) expect = 4;
        else expect = 0;
        if (p.case_id != expect) {
            pass = false;
            g_notes.push_back("band mismatch at t_glitch=" + std::to_string(p.t_glitch));
            break;
        }
        if ((p.case_id == 1 || p.case_id == 2) && !p.illegal_raised) pass = false;
        if ((p.case_id == 3 || p.case_id == 4) && p.illegal_raised) pass = false;
        if (p.case_id && last_case && p.case_id < last_case) pass = false;  // contiguity
        last_case = p.case_id;
        seen.insert(p.case_id);
    }
    for (int c : {0, 1, 2, 3, 4})
        if (!seen.count(c)) pass = false;
    double dt = now_seconds() - t0;
    pass &= dt < 10.0;
    std::ostringstream d;
    d << pts.size() << " sweep points, bands (<=3.800], (3.800,4.400], (4.400,5.122], "
      << "(5.122,5.172], flag on 1-2 only, " << dt << "s";
    report(3, "case-band-reproduction", pass, d.str());
}

// ---------------------------------------------------------------------------
// 4. Demo value reproduction.
// ---------------------------------------------------------------------------
void criterion_demo_values() {
    auto img = demo_image();
    auto profile = default_profile();
    bool pass = true;

    auto golden = sim::run_pipeline(img, 0);
    pass &= golden.halt == sim::HaltReason::CleanHalt;
    pass &= golden.final_state.regs[11] == 0x42026ada;
    bool lw_retired = false;
    for (const auto& rec : golden.retire_trace)
        if (rec.pc == 0x386 && rec.rd_written &&
            rec.rd_written->first == 11 && rec.rd_written->second == 0x42026ada)
            lw_retired = true;
    pass &= lw_retired;

    auto run_width = [&](double t_glitch) {
        GlitchSpec spec{0.833, t_glitch - 0.833, Trigger{0x386, Stage::IF, 1}};
        inject::ArmedGlitch g(spec, profile, Policy::Zero, 1);
        return sim::run_pipeline(img, 0, {}, &g);
    };
    pass &= run_width(4.1).final_state.regs[11] == 0;  // case 2
    pass &= run_width(4.8).final_state.regs[11] == 0;  // case 3
    uint32_t v4 = run_width(5.15).final_state.regs[11];
    pass &= v4 != 0x42026ada && ((v4 ^ 0x42026ada) & ~0xFF000000u) == 0;  // case 4

    std::ostringstream d;
    d << "golden x11=0x42026ada at pc 0x386; case2/3 zero; case4 top-byte only (x11=0x"
      << std::hex << v4 << ")";
    report(4, "demo-value-reproduction", pass, d.str());
}

// ---------------------------------------------------------------------------
// 5. Differential oracle: pipeline vs reference, zero mismatches.
// ---------------------------------------------------------------------------
void criterion_differential() {
    auto t0 = now_seconds();
    bool pass = true;
    uint64_t instructions = 0;

    for (const auto& img : {demo_image(), loop_image()}) {
        auto a = sim::run_pipeline(img, 0);
        auto b = sim::run_reference(img, 0);
        if (!sim::arch_equivalent(a, b)) pass = false;
        instructions += b.retire_trace.size();
    }

    std::mt19937_64 rng(424242);
    for (int p = 0; p < 240 && pass; ++p) {
        auto img = isa::assemble(testgen::random_program(rng, 50));
        sim::MachineConfig cfg;
        cfg.max_cycles = 50000;
        auto a = sim::run_pipeline(img, 0, cfg);
        auto b = sim::run_reference(img, 0, cfg);
        if (!sim::arch_equivalent(a, b)) {
            pass = false;
            g_notes.push_back("differential mismatch in random program " + std::to_string(p));
        }
        instructions += b.retire_trace.size();
    }
    double dt = now_seconds() - t0;
    pass &= instructions >= 10000 && dt < 30.0;
    std::ostringstream d;
    d << instructions << " retired instructions compared, " << dt << "s";
    report(5, "differential-oracle", pass, d.str());
}

// ---------------------------------------------------------------------------
// 6. Risk-table structural properties.
// ---------------------------------------------------------------------------
void criterion_rat() {
    bool pass = true;

    // synthetic arithmetic check: 37/248 and 28/248
    {
        std::vector<campaign::RunRecord> records;
        auto add = [&](const std::string& mn, int n) {
            for (int i = 0; i < n; ++i) {
                campaign::RunRecord rec;
                rec.spec.target.mnemonic = mn;
                rec.outcome.critical = true;
                rec.outcome.first_divergence = {{1, "if_id"}};
                records.push_back(rec);
            }
        };
        add("jal", 37);
        add("lw", 28);
        add("bne", 183);
        auto rat = campaign::build_rat(records, {"jal", "lw", "bne"});
        auto r2 = [](double v) { return std::round(v * 100.0) / 100.0; };
        pass &= rat.total_critical == 248;
        pass &= r2(rat.cells[0][0]) == 14.92;
        pass &= r2(rat.cells[1][0]) == 11.29;
    }

    // structural properties of the real demo sweep (absolute percentages are
    // profile-dependent and not comparison targets; the ranking is)
    campaign::CampaignConfig cfg;
    cfg.image = demo_image();
    cfg.profile = default_profile();
    cfg.grid = campaign::default_grid(cfg.image);
    cfg.parallelism = 4;
    auto result = campaign::run_campaign(cfg);
    pass &= result.critical > 0;
    double sum = 0;
    std::vector<std::pair<double, std::string>> rows;
    for (size_t r = 0; r < result.rat.instructions.size(); ++r) {
        double row = result.rat.cells[r][0] + result.rat.cells[r][1] + result.rat.cells[r][2];
        rows.push_back({row, result.rat.instructions[r]});
        sum += row;
    }
    pass &= std::fabs(sum - 100.0) <= 1e-9 * 100.0;
    std::sort(rows.rbegin(), rows.rend());
    std::set<std::string> top2 = {rows[0].second, rows[1].second};
    pass &= top2 == std::set<std::string>{"jal", "lw"};

    std::ostringstream d;
    d << "sum=" << sum << "%, synthetic cells 14.92/11.29, top rows " << rows[0].second << "+"
      << rows[1].second;
    report(6, "risk-table-structure", pass, d.str());
}

// ---------------------------------------------------------------------------
// 7. Reduction arithmetic.
// ---------------------------------------------------------------------------
void criterion_reduction() {
    auto r = campaign::reduction_stats(9248, 248);
    bool pass = std::fabs(r.percent - 97.32) < 1e-12 &&
                std::fabs(r.percent_truncated - 97.31) < 1e-12;
    std::ostringstream d;
    d << "9248->248: " << r.percent << "% round-half-even, " << r.percent_truncated
      << "% truncated";
    report(7, "reduction-arithmetic", pass, d.str());
}

// ---------------------------------------------------------------------------
// 8. Determinism and the single-glitch contract.
// ---------------------------------------------------------------------------
void criterion_determinism() {
    bool pass = true;
    auto img = demo_image();
    auto profile = default_profile();

    // bit-identical artifacts regardless of parallelism
    campaign::CampaignConfig cfg;
    cfg.image = img;
    cfg.profile = profile;
    cfg.grid.offsets_ns = {0.833, 2.171, 4.046};
    cfg.grid.widths_ns = {2.967, 3.3, 4.0, 4.4, 5.0};
    cfg.grid.stages = {Stage::IF, Stage::ID, Stage::EX, Stage::WB};
    cfg.grid.targets = campaign::default_grid(img).targets;
    cfg.seed = 5;
    std::ostringstream rec1, rec4;
    cfg.parallelism = 1;
    auto a = campaign::run_campaign(cfg, &rec1);
    cfg.parallelism = 4;
    auto b = campaign::run_campaign(cfg, &rec4);
    pass &= rec1.str() == rec4.str();
    pass &= campaign::rat_to_csv(a.rat) == campaign::rat_to_csv(b.rat);
    pass &= campaign::summary_to_json(cfg, a) == campaign::summary_to_json(cfg, b);

    // every glitched run carries latch events on at most one cycle, across
    // every stage and policy
    int checked = 0;
    for (auto stage : {Stage::IF, Stage::ID, Stage::EX, Stage::WB}) {
        for (auto policy : {Policy::Zero, Policy::Stale, Policy::SeededRandom}) {
            for (double w : {2.0, 3.3, 4.0, 4.6}) {
                GlitchSpec spec{0.833, w, Trigger{0x386, stage, 1}};
                inject::ArmedGlitch g(spec, profile, policy, 17);
                sim::MachineConfig mc;
                mc.policy = policy;
                mc.seed = 17;
                auto rr = sim::run_pipeline(img, 0, mc, &g);
                std::set<uint64_t> cycles;
                for (const auto& e : rr.latch_events) cycles.insert(e.cycle);
                if (cycles.size() > 1) pass = false;
                ++checked;
            }
        }
    }

    // a never-firing glitch is bit-identical to the golden run
    auto golden = sim::run_pipeline(img, 0);
    GlitchSpec never{0.833, 3.3, Trigger{0x7770, Stage::IF, 1}};
    inject::ArmedGlitch g(never, profile, Policy::Zero, 1);
    auto nf = sim::run_pipeline(img, 0, {}, &g);
    pass &= nf == golden;

    std::ostringstream d;
    d << "artifacts identical across parallelism 1/4; " << checked
      << " runs single-edge; no-fire run bit-identical";
    report(8, "determinism-single-glitch", pass, d.str());
}

// ---------------------------------------------------------------------------
// 9. Root-cause localization over the full default sweep's IF slice.
// ---------------------------------------------------------------------------
void criterion_rootcause() {
    auto t0 = now_seconds();
    auto img = demo_image();
    auto profile = default_profile();

    campaign::CampaignConfig cfg;
    cfg.image = img;
    cfg.profile = profile;
    cfg.grid = campaign::default_grid(img);
    cfg.parallelism = 4;
    auto result = campaign::run_campaign(cfg);

    bool pass = result.total == 9248;
    int traced = 0;
    for (const auto& rec : result.records) {
        if (rec.spec.stage != Stage::IF || !rec.outcome.critical) continue;
        rootcause::TraceInputs in;
        in.image = &img;
        in.profile = &profile;
        in.spec = rec.spec.glitch();
        in.watchdog_cycles = cfg.watchdog_cycles;
        auto chain = rootcause::trace_root_cause(in);
        ++traced;
        if (!chain.first_divergence || chain.first_divergence->second != "if_id") {
            pass = false;
            std::ostringstream note;
            note << "IF fault at offset=" << rec.spec.t_offset_ns
                 << " width=" << rec.spec.t_width_ns << " target=" << rec.spec.target.mnemonic
                 << " diverges at "
                 << (chain.first_divergence ? chain.first_divergence->second : "nowhere");
            g_notes.push_back(note.str());
            break;
        }
    }
    double dt = now_seconds() - t0;
    pass &= traced > 0 && dt < 60.0;
    std::ostringstream d;
    d << result.total << "-run sweep, " << traced << " IF-stage critical faults all first "
      << "diverge at if_id, " << dt << "s";
    report(9, "root-cause-localization", pass, d.str());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_root = argv[1];
    try {
        criterion_grid();
        criterion_arithmetic();
        criterion_case_bands();
        criterion_demo_values();
        criterion_differential();
        criterion_rat();
        criterion_reduction();
        criterion_determinism();
        criterion_rootcause();
    } catch (const std::exception& e) {
        printf("FAIL  suite aborted: %s\n", e.what());
        return 99;
    }
    for (const auto& n : g_notes) printf("note: %s\n", n.c_str());
    printf("%s: %d criterion(s) failed\n", g_failures ? "FAILURE" : "SUCCESS", g_failures);
    return g_failures;
}
