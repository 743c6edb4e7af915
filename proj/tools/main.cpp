// glitchsim command line: assemble workloads, run golden and glitched
// simulations, execute parameter sweeps, and emit risk-table and root-cause
// reports. Talks to the core exclusively through the C API.

#include "glitchsim/glitchsim.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct StringDeleter {
    void operator()(char* s) const { gs_string_free(s); }
};
using owned_str = std::unique_ptr<char, StringDeleter>;

struct ImageDeleter {
    void operator()(gs_image* i) const { gs_image_free(i); }
};
using owned_image = std::unique_ptr<gs_image, ImageDeleter>;

struct ProfileDeleter {
    void operator()(gs_profile* p) const { gs_profile_free(p); }
};
using owned_profile = std::unique_ptr<gs_profile, ProfileDeleter>;

struct RunDeleter {
    void operator()(gs_run* r) const { gs_run_free(r); }
};
using owned_run = std::unique_ptr<gs_run, RunDeleter>;

int fail(gs_status st, const owned_str& err, const std::string& what) {
    std::cerr << "error: " << what;
    if (err) std::cerr << ": " << err.get();
    std::cerr << "\n";
    return st == GS_ERR_INVALID ? kExitUsage : kExitRuntime;
}

bool read_file(const std::string& path, std::string& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::stringstream ss;
    ss << in.rdbuf();
    out = ss.str();
    return true;
}

bool write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return bool(out);
}

// workloads are either mini-assembler source (.s) or a flat binary image
int load_workload(const std::string& path, const std::string& syms, owned_image& img) {
    gs_status st;
    char* raw_err = nullptr;
    gs_image* out = nullptr;
    if (path.size() > 2 && path.substr(path.size() - 2) == ".s") {
        std::string text;
        if (!read_file(path, text)) {
            std::cerr << "error: cannot read workload '" << path << "'\n";
            return kExitUsage;
        }
        st = gs_assemble(text.c_str(), &out, &raw_err);
    } else {
        st = gs_image_load(path.c_str(), syms.empty() ? nullptr : syms.c_str(), &out, &raw_err);
    }
    owned_str err(raw_err);
    if (st != GS_OK) return fail(st, err, "loading workload '" + path + "'");
    img.reset(out);
    return kExitOk;
}

int load_profile(const std::string& path, owned_profile& profile) {
    char* raw_err = nullptr;
    gs_profile* out = nullptr;
    gs_status st = gs_profile_load(path.c_str(), &out, &raw_err);
    owned_str err(raw_err);
    if (st != GS_OK) return fail(st, err, "loading profile '" + path + "'");
    profile.reset(out);
    return kExitOk;
}

uint32_t parse_pc(const std::string& s) { return uint32_t(std::stoul(s, nullptr, 0)); }

int emit_run(const owned_run& run, const std::string& report_path,
             const std::string& trace_path) {
    char* raw = nullptr;
    char* raw_err = nullptr;
    gs_status st = gs_run_report(run.get(), &raw, &raw_err);
    owned_str report(raw), err(raw_err);
    if (st != GS_OK) return fail(st, err, "rendering report");
    if (report_path.empty()) {
        std::cout << report.get() << "\n";
    } else if (!write_file(report_path, std::string(report.get()) + "\n")) {
        std::cerr << "error: cannot write '" << report_path << "'\n";
        return kExitRuntime;
    }
    if (!trace_path.empty()) {
        char* raw_trace = nullptr;
        st = gs_run_trace_text(run.get(), &raw_trace, &raw_err);
        owned_str trace(raw_trace), err2(raw_err);
        if (st != GS_OK) return fail(st, err2, "rendering trace");
        if (!write_file(trace_path, trace.get())) {
            std::cerr << "error: cannot write '" << trace_path << "'\n";
            return kExitRuntime;
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clock-glitch fault-injection simulator and campaign tool"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    // ---- assemble -----------------------------------------------------
    auto* cmd_asm = app.add_subcommand("assemble", "assemble a workload source file");
    std::string asm_src, asm_out = "a.bin", asm_sym;
    cmd_asm->add_option("source", asm_src, "mini-assembler source file")->required();
    cmd_asm->add_option("-o,--output", asm_out, "output binary path");
    cmd_asm->add_option("--sym", asm_sym, "symbol sidecar path (default: output + .sym)");

    // ---- run ------------------------------------------------------------
    auto* cmd_run = app.add_subcommand("run", "fault-free run with state report");
    std::string run_workload, run_syms, run_trace, run_report;
    std::string run_entry = "0";
    uint64_t run_max_cycles = 100000;
    cmd_run->add_option("--workload", run_workload, "workload (.s or .bin)")->required();
    cmd_run->add_option("--syms", run_syms, "symbol sidecar for .bin workloads");
    cmd_run->add_option("--entry", run_entry, "entry pc");
    cmd_run->add_option("--max-cycles", run_max_cycles, "watchdog cycle limit");
    cmd_run->add_option("--trace", run_trace, "write the per-cycle trace to this file");
    cmd_run->add_option("-o,--report", run_report, "write the report here (default stdout)");

    // ---- glitch ---------------------------------------------------------
    auto* cmd_glitch = app.add_subcommand("glitch", "single glitched run with outcome report");
    std::string gl_workload, gl_syms, gl_profile, gl_target_pc, gl_stage = "IF";
    std::string gl_policy = "zero", gl_trace, gl_report, gl_entry = "0";
    double gl_offset = 0, gl_width = 0;
    uint32_t gl_occurrence = 1;
    uint64_t gl_seed = 1, gl_max_cycles = 100000;
    cmd_glitch->add_option("--workload", gl_workload, "workload (.s or .bin)")->required();
    cmd_glitch->add_option("--syms", gl_syms, "symbol sidecar for .bin workloads");
    cmd_glitch->add_option("--profile", gl_profile, "timing profile")->required();
    cmd_glitch->add_option("--offset", gl_offset, "glitch offset in ns")->required();
    cmd_glitch->add_option("--width", gl_width, "glitch width in ns")->required();
    cmd_glitch->add_option("--target-pc", gl_target_pc, "target pc (hex ok)")->required();
    cmd_glitch->add_option("--stage", gl_stage, "pipeline stage: IF, ID, EX or WB");
    cmd_glitch->add_option("--occurrence", gl_occurrence, "n-th execution of the target pc");
    cmd_glitch->add_option("--policy", gl_policy, "violated-bit policy: zero, stale, seeded_random");
    cmd_glitch->add_option("--seed", gl_seed, "seed for the seeded_random policy");
    cmd_glitch->add_option("--entry", gl_entry, "entry pc");
    cmd_glitch->add_option("--max-cycles", gl_max_cycles, "watchdog cycle limit");
    cmd_glitch->add_option("--trace", gl_trace, "write the per-cycle trace to this file");
    cmd_glitch->add_option("-o,--report", gl_report, "write the report here (default stdout)");

    // ---- sweep ----------------------------------------------------------
    auto* cmd_sweep = app.add_subcommand("sweep", "run a glitch-parameter campaign");
    std::string sw_config, sw_out;
    bool sw_resume = false;
    int sw_parallelism = -1;
    long long sw_seed = -1;
    std::string sw_policy;
    cmd_sweep->add_option("--config", sw_config, "campaign config JSON")->required();
    cmd_sweep->add_option("--out", sw_out, "output directory (overrides config)");
    cmd_sweep->add_flag("--resume", sw_resume, "continue an interrupted sweep");
    cmd_sweep->add_option("--parallelism", sw_parallelism, "worker threads (overrides config)");
    cmd_sweep->add_option("--seed", sw_seed, "seed (overrides config)");
    cmd_sweep->add_option("--policy", sw_policy, "policy (overrides config)");

    // ---- rat -------------------------------------------------------------
    auto* cmd_rat = app.add_subcommand("rat", "risk table from sweep records");
    std::string rat_records, rat_csv;
    cmd_rat->add_option("--records", rat_records, "records.jsonl from a sweep")->required();
    cmd_rat->add_option("--csv", rat_csv, "write the table here (default stdout)");

    // ---- trace -----------------------------------------------------------
    auto* cmd_trace = app.add_subcommand("trace", "root-cause chain for one glitch");
    std::string tr_workload, tr_syms, tr_profile, tr_target_pc, tr_stage = "IF";
    std::string tr_policy = "zero", tr_entry = "0";
    double tr_offset = 0, tr_width = 0;
    uint32_t tr_occurrence = 1;
    uint64_t tr_seed = 1;
    bool tr_json = false;
    cmd_trace->add_option("--workload", tr_workload, "workload (.s or .bin)")->required();
    cmd_trace->add_option("--syms", tr_syms, "symbol sidecar for .bin workloads");
    cmd_trace->add_option("--profile", tr_profile, "timing profile")->required();
    cmd_trace->add_option("--offset", tr_offset, "glitch offset in ns")->required();
    cmd_trace->add_option("--width", tr_width, "glitch width in ns")->required();
    cmd_trace->add_option("--target-pc", tr_target_pc, "target pc (hex ok)")->required();
    cmd_trace->add_option("--stage", tr_stage, "pipeline stage");
    cmd_trace->add_option("--occurrence", tr_occurrence, "n-th execution of the target pc");
    cmd_trace->add_option("--policy", tr_policy, "violated-bit policy");
    cmd_trace->add_option("--seed", tr_seed, "seed for the seeded_random policy");
    cmd_trace->add_option("--entry", tr_entry, "entry pc");
    cmd_trace->add_flag("--json", tr_json, "emit the chain as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*cmd_asm) {
            std::string text;
            if (!read_file(asm_src, text)) {
                std::cerr << "error: cannot read '" << asm_src << "'\n";
                return kExitUsage;
            }
            gs_image* raw_img = nullptr;
            char* raw_err = nullptr;
            gs_status st = gs_assemble(text.c_str(), &raw_img, &raw_err);
            owned_image img(raw_img);
            owned_str err(raw_err);
            if (st != GS_OK) return fail(st, err, "assembling '" + asm_src + "'");
            std::string sym = asm_sym.empty() ? asm_out + ".sym" : asm_sym;
            raw_err = nullptr;
            st = gs_image_save(img.get(), asm_out.c_str(), sym.c_str(), &raw_err);
            owned_str err2(raw_err);
            if (st != GS_OK) return fail(st, err2, "writing '" + asm_out + "'");
            return kExitOk;
        }

        if (*cmd_run || *cmd_glitch) {
            bool glitched = bool(*cmd_glitch);
            owned_image img;
            int rc = load_workload(glitched ? gl_workload : run_workload,
                                   glitched ? gl_syms : run_syms, img);
            if (rc != kExitOk) return rc;
            owned_profile profile;
            if (glitched) {
                rc = load_profile(gl_profile, profile);
                if (rc != kExitOk) return rc;
            }
            json cfg;
            cfg["entry_pc"] = parse_pc(glitched ? gl_entry : run_entry);
            cfg["max_cycles"] = glitched ? gl_max_cycles : run_max_cycles;
            cfg["trace"] = !(glitched ? gl_trace : run_trace).empty();
            if (glitched) {
                cfg["policy"] = gl_policy;
                cfg["seed"] = gl_seed;
                cfg["glitch"] = {{"offset_ns", gl_offset},
                                 {"width_ns", gl_width},
                                 {"target_pc", parse_pc(gl_target_pc)},
                                 {"stage", gl_stage},
                                 {"occurrence", gl_occurrence}};
            }
            gs_run* raw_run = nullptr;
            char* raw_err = nullptr;
            gs_status st = gs_run_create(img.get(), profile.get(), cfg.dump().c_str(), &raw_run,
                                  &raw_err);
            owned_run run(raw_run);
            owned_str err(raw_err);
            if (st != GS_OK) return fail(st, err, "running simulation");
            return emit_run(run, glitched ? gl_report : run_report,
                            glitched ? gl_trace : run_trace);
        }

        if (*cmd_sweep) {
            std::string text;
            if (!read_file(sw_config, text)) {
                std::cerr << "error: cannot read config '" << sw_config << "'\n";
                return kExitUsage;
            }
            json cfg;
            try {
                cfg = json::parse(text);
            } catch (const json::exception& e) {
                std::cerr << "error: bad config: " << e.what() << "\n";
                return kExitUsage;
            }
            if (sw_parallelism >= 0) cfg["parallelism"] = sw_parallelism;
            if (sw_seed >= 0) cfg["seed"] = sw_seed;
            if (!sw_policy.empty()) cfg["policy"] = sw_policy;
            std::string out_dir = !sw_out.empty()
                                      ? sw_out
                                      : cfg.value("output_dir", std::string("out"));
            char* raw_summary = nullptr;
            char* raw_err = nullptr;
            gs_status st = gs_sweep(cfg.dump().c_str(), out_dir.c_str(), sw_resume ? 1 : 0,
                                    &raw_summary, &raw_err);
            owned_str summary(raw_summary), err(raw_err);
            if (st != GS_OK) return fail(st, err, "running sweep");
            std::cout << summary.get() << "\n";
            return kExitOk;
        }

        if (*cmd_rat) {
            char* raw_csv = nullptr;
            char* raw_summary = nullptr;
            char* raw_err = nullptr;
            gs_status st = gs_rat_from_records(rat_records.c_str(), &raw_csv, &raw_summary,
                                               &raw_err);
            owned_str csv(raw_csv), summary(raw_summary), err(raw_err);
            if (st != GS_OK) return fail(st, err, "building risk table");
            if (rat_csv.empty()) {
                std::cout << csv.get();
            } else if (!write_file(rat_csv, csv.get())) {
                std::cerr << "error: cannot write '" << rat_csv << "'\n";
                return kExitRuntime;
            }
            std::cout << summary.get() << "\n";
            return kExitOk;
        }

        if (*cmd_trace) {
            owned_image img;
            int rc = load_workload(tr_workload, tr_syms, img);
            if (rc != kExitOk) return rc;
            owned_profile profile;
            rc = load_profile(tr_profile, profile);
            if (rc != kExitOk) return rc;
            json g = {{"offset_ns", tr_offset},     {"width_ns", tr_width},
                      {"target_pc", parse_pc(tr_target_pc)}, {"stage", tr_stage},
                      {"occurrence", tr_occurrence}, {"policy", tr_policy},
                      {"seed", tr_seed},            {"entry_pc", parse_pc(tr_entry)}};
            char* raw_report = nullptr;
            char* raw_err = nullptr;
            gs_status st = gs_trace_root_cause(img.get(), profile.get(), g.dump().c_str(),
                                               tr_json ? 1 : 0, &raw_report, &raw_err);
            owned_str report(raw_report), err(raw_err);
            if (st != GS_OK) return fail(st, err, "tracing root cause");
            std::cout << report.get() << "\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
