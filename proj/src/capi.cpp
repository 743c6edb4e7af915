#include "glitchsim/glitchsim.h"

#include "campaign.hpp"
#include "rootcause.hpp"

#include "json.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

using json = nlohmann::ordered_json;
namespace isa = glitchsim::isa;
namespace sim = glitchsim::sim;
namespace timing = glitchsim::timing;
namespace inject = glitchsim::inject;
namespace classify = glitchsim::classify;
namespace campaign = glitchsim::campaign;
namespace rootcause = glitchsim::rootcause;

extern "C" {
struct gs_image {
    isa::ProgramImage image;
};
struct gs_profile {
    timing::TimingProfile profile;
};
struct gs_run {
    sim::RunResult result;
    std::optional<sim::RunResult> golden;  // present for glitched runs
    std::optional<classify::FaultOutcome> outcome;
    std::optional<timing::GlitchSpec> spec;
    bool fired = false;
    std::string trace_text;
    std::string profile_hash;
    std::vector<std::string> warnings;
};
}

namespace {

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(malloc(s.size() + 1));
    if (out) memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_err(char** err, const std::string& msg) {
    if (err) *err = dup_string(msg);
}

template <typename Fn>
gs_status guarded(char** err, Fn&& fn) {
    try {
        return fn();
    } catch (const isa::AsmError& e) {
        set_err(err, "line " + std::to_string(e.line) + ": " + e.message);
        return GS_ERR_INVALID;
    } catch (const std::invalid_argument& e) {
        set_err(err, e.what());
        return GS_ERR_INVALID;
    } catch (const json::exception& e) {
        set_err(err, e.what());
        return GS_ERR_INVALID;
    } catch (const std::exception& e) {
        set_err(err, e.what());
        return GS_ERR_RUNTIME;
    }
}

std::string hex32(uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::setw(8) << std::setfill('0') << std::hex << v;
    return os.str();
}

timing::Stage parse_stage(const std::string& s) {
    auto st = timing::stage_from_name(s);
    if (!st) throw std::invalid_argument("unknown stage '" + s + "'");
    return *st;
}

timing::Policy parse_policy(const std::string& s) {
    auto p = timing::policy_from_name(s);
    if (!p) throw std::invalid_argument("unknown policy '" + s + "'");
    return *p;
}

isa::ProgramImage load_workload_path(const std::string& path, const std::string& syms) {
    if (path.size() > 2 && path.substr(path.size() - 2) == ".s") {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read workload '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return isa::assemble(ss.str());
    }
    return isa::load_image(path, syms);
}

json spec_json(const timing::GlitchSpec& s) {
    return json{{"offset_ns", s.t_offset_ns},
                {"width_ns", s.t_width_ns},
                {"t_glitch_ns", timing::glitch_period(s)},
                {"target_pc", s.trigger.target_pc},
                {"stage", timing::stage_name(s.trigger.target_stage)},
                {"occurrence", s.trigger.occurrence}};
}

}  // namespace

extern "C" {

const char* gs_version(void) { return "0.1.0"; }

void gs_string_free(char* s) { free(s); }

gs_status gs_assemble(const char* source, gs_image** out, char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!source || !out) throw std::invalid_argument("null argument");
        auto img = std::make_unique<gs_image>();
        img->image = isa::assemble(source);
        *out = img.release();
        return GS_OK;
    });
}

gs_status gs_image_save(const gs_image* img, const char* bin_path, const char* sym_path,
                        char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!img || !bin_path || !sym_path) throw std::invalid_argument("null argument");
        isa::save_image(img->image, bin_path, sym_path);
        return GS_OK;
    });
}

gs_status gs_image_load(const char* bin_path, const char* sym_path, gs_image** out,
                        char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!bin_path || !out) throw std::invalid_argument("null argument");
        auto img = std::make_unique<gs_image>();
        img->image = isa::load_image(bin_path, sym_path ? sym_path : "");
        *out = img.release();
        return GS_OK;
    });
}

void gs_image_free(gs_image* img) { delete img; }

gs_status gs_find_targets(const gs_image* img, const char* mnemonics_csv, char** json_out,
                          char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!img || !mnemonics_csv || !json_out) throw std::invalid_argument("null argument");
        std::vector<std::string> names;
        std::stringstream ss(mnemonics_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            size_t a = item.find_first_not_of(" \t");
            if (a == std::string::npos) continue;
            size_t b = item.find_last_not_of(" \t");
            names.push_back(item.substr(a, b - a + 1));
        }
        auto hits = isa::find_targets(img->image, names);
        json arr = json::array();
        for (const auto& t : hits)
            arr.push_back({{"mnemonic", isa::mnemonic_name(t.instr.mnemonic)},
                           {"pc", t.pc},
                           {"text", isa::disassemble(t.instr)}});
        *json_out = dup_string(arr.dump());
        return GS_OK;
    });
}

gs_status gs_profile_load(const char* path, gs_profile** out, char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!path || !out) throw std::invalid_argument("null argument");
        auto p = std::make_unique<gs_profile>();
        p->profile = timing::load_profile(path);
        *out = p.release();
        return GS_OK;
    });
}

void gs_profile_free(gs_profile* p) { delete p; }

const char* gs_profile_hash(const gs_profile* p) {
    return p ? p->profile.content_hash.c_str() : "";
}

gs_status gs_run_create(const gs_image* img, const gs_profile* profile, const char* run_json,
                 gs_run** out, char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!img || !out) throw std::invalid_argument("null argument");
        json j = run_json && *run_json ? json::parse(run_json) : json::object();

        sim::MachineConfig cfg;
        uint32_t entry = j.value("entry_pc", 0u);
        cfg.max_cycles = j.value("max_cycles", uint64_t(100000));
        cfg.policy = parse_policy(j.value("policy", "zero"));
        cfg.seed = j.value("seed", uint64_t(1));
        if (j.contains("illegal_handler"))
            cfg.illegal_handler = j["illegal_handler"].get<uint32_t>();

        auto run = std::make_unique<gs_run>();
        std::ostringstream trace;
        if (j.value("trace", false)) cfg.trace = &trace;

        if (j.contains("glitch") && !j["glitch"].is_null()) {
            if (!profile)
                throw std::invalid_argument("a glitched run needs a timing profile");
            const auto& g = j["glitch"];
            timing::GlitchSpec spec;
            spec.t_offset_ns = g.at("offset_ns").get<double>();
            spec.t_width_ns = g.at("width_ns").get<double>();
            spec.trigger.target_pc = g.at("target_pc").get<uint32_t>();
            spec.trigger.target_stage = parse_stage(g.value("stage", "IF"));
            uint32_t arch_occ = g.value("occurrence", 1u);

            sim::MachineConfig gold_cfg = cfg;
            gold_cfg.trace = nullptr;
            auto golden = sim::run_pipeline(img->image, entry, gold_cfg);
            auto occ =
                classify::resolve_fetch_occurrence(golden, spec.trigger.target_pc, arch_occ);
            if (!occ)
                run->warnings.push_back("target pc never retires in the golden run");
            spec.trigger.occurrence = occ.value_or(arch_occ);

            inject::ArmedGlitch glitch(spec, profile->profile, cfg.policy, cfg.seed);
            run->result = sim::run_pipeline(img->image, entry, cfg, &glitch);
            run->fired = glitch.fired();
            if (!glitch.fired()) run->warnings.push_back("trigger never fired");
            classify::TargetInfo target{spec.trigger.target_pc, spec.trigger.occurrence, ""};
            run->outcome = classify::classify(golden, run->result, target);
            run->spec = spec;
            run->golden = std::move(golden);
            run->profile_hash = profile->profile.content_hash;
        } else {
            run->result = sim::run_pipeline(img->image, entry, cfg);
            if (profile) run->profile_hash = profile->profile.content_hash;
        }
        run->trace_text = trace.str();
        *out = run.release();
        return GS_OK;
    });
}

void gs_run_free(gs_run* r) { delete r; }

gs_status gs_run_report(const gs_run* r, char** json_out, char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!r || !json_out) throw std::invalid_argument("null argument");
        json j;
        j["tool_version"] = gs_version();
        j["profile_hash"] = r->profile_hash.empty() ? json(nullptr) : json(r->profile_hash);
        j["halt"] = sim::halt_reason_name(r->result.halt);
        j["cycles"] = r->result.final_state.cycle;
        j["retired"] = r->result.retire_trace.size();
        j["illegal_count"] = r->result.final_state.illegal_count;
        j["final_pc"] = hex32(r->result.final_state.pc);
        json regs;
        for (int i = 0; i < 32; ++i)
            regs["x" + std::to_string(i)] = hex32(r->result.final_state.regs[size_t(i)]);
        j["regs"] = regs;
        if (r->spec) {
            j["glitch"] = spec_json(*r->spec);
            j["fired"] = r->fired;
            json events = json::array();
            for (const auto& e : r->result.latch_events)
                events.push_back({{"cycle", e.cycle},
                                  {"endpoint", e.endpoint},
                                  {"mask", hex32(e.violated_mask)},
                                  {"intended", hex32(e.value_intended)},
                                  {"latched", hex32(e.value_latched)}});
            j["latch_events"] = events;
            j["outcome"] = json::parse(classify::outcome_to_json(*r->outcome));
        } else {
            j["glitch"] = nullptr;
        }
        j["warnings"] = r->warnings;
        *json_out = dup_string(j.dump(2));
        return GS_OK;
    });
}

gs_status gs_run_trace_text(const gs_run* r, char** text_out, char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!r || !text_out) throw std::invalid_argument("null argument");
        *text_out = dup_string(r->trace_text);
        return GS_OK;
    });
}

gs_status gs_sweep(const char* config_json, const char* out_dir, int resume,
                   char** summary_json, char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!config_json || !out_dir) throw std::invalid_argument("null argument");
        json j = json::parse(config_json);

        campaign::CampaignConfig cfg;
        if (!j.contains("workload")) throw std::invalid_argument("config: missing workload");
        if (!j.contains("profile")) throw std::invalid_argument("config: missing profile");
        cfg.image = load_workload_path(j["workload"].get<std::string>(), j.value("syms", ""));
        cfg.profile = timing::load_profile(j["profile"].get<std::string>());
        cfg.entry_pc = j.value("entry_pc", 0u);
        cfg.policy = parse_policy(j.value("policy", "zero"));
        cfg.seed = j.value("seed", uint64_t(1));
        cfg.watchdog_cycles = j.value("watchdog_cycles", uint64_t(10000));
        cfg.parallelism = j.value("parallelism", 1);
        if (cfg.policy == timing::Policy::SeededRandom && !j.contains("seed"))
            throw std::invalid_argument("config: the seeded_random policy requires a seed");

        json grid = j.value("grid", json("default"));
        if (grid.is_string() && grid.get<std::string>() == "default") {
            cfg.grid = campaign::default_grid(cfg.image);
        } else if (grid.is_object()) {
            cfg.grid.offsets_ns =
                grid.value("offsets_ns", campaign::default_axis());
            cfg.grid.widths_ns = grid.value("widths_ns", campaign::default_axis());
            if (grid.contains("stages")) {
                for (const auto& s : grid["stages"])
                    cfg.grid.stages.push_back(parse_stage(s.get<std::string>()));
            } else {
                cfg.grid.stages = {timing::Stage::IF, timing::Stage::ID, timing::Stage::EX,
                                   timing::Stage::WB};
            }
            if (grid.contains("targets")) {
                for (const auto& t : grid["targets"]) {
                    campaign::TargetSpec ts;
                    ts.mnemonic = t.at("mnemonic").get<std::string>();
                    ts.occurrence = t.value("occurrence", 1u);
                    if (t.contains("pc")) {
                        ts.pc = t["pc"].get<uint32_t>();
                    } else {
                        auto hits = isa::find_targets(cfg.image, {ts.mnemonic});
                        if (hits.empty())
                            throw std::invalid_argument("config: target mnemonic '" +
                                                        ts.mnemonic +
                                                        "' not found in the workload");
                        ts.pc = hits.front().pc;
                    }
                    cfg.grid.targets.push_back(ts);
                }
            } else {
                cfg.grid.targets = campaign::default_grid(cfg.image).targets;
            }
        } else {
            throw std::invalid_argument("config: grid must be \"default\" or an object");
        }
        if (cfg.grid.targets.empty())
            throw std::invalid_argument("config: no targets to sweep");

        auto summary = campaign::run_campaign_to_dir(cfg, out_dir, resume != 0);
        if (summary_json) *summary_json = dup_string(summary);
        return GS_OK;
    });
}

gs_status gs_rat_from_records(const char* records_path, char** csv_out, char** summary_json,
                              char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!records_path) throw std::invalid_argument("null argument");
        std::ifstream in(records_path);
        if (!in) throw std::runtime_error(std::string("cannot read ") + records_path);
        std::vector<campaign::RunRecord> records;
        std::vector<std::string> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            records.push_back(campaign::record_from_json(line));
            const auto& m = records.back().spec.target.mnemonic;
            if (std::find(rows.begin(), rows.end(), m) == rows.end()) rows.push_back(m);
        }
        auto rat = campaign::build_rat(records, rows);
        if (csv_out) *csv_out = dup_string(campaign::rat_to_csv(rat));
        if (summary_json) {
            // rank rows by their total share
            std::vector<std::pair<double, size_t>> ranked;
            for (size_t r = 0; r < rat.instructions.size(); ++r)
                ranked.push_back({rat.cells[r][0] + rat.cells[r][1] + rat.cells[r][2], r});
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                return a.first > b.first;
            });
            json out;
            out["tool_version"] = gs_version();
            out["total_records"] = records.size();
            out["total_critical"] = rat.total_critical;
            json rranked = json::array();
            for (const auto& [share, r] : ranked)
                rranked.push_back({{"instruction", rat.instructions[r]},
                                   {"row_percent", share},
                                   {"IF/ID", rat.cells[r][0]},
                                   {"ID/EX", rat.cells[r][1]},
                                   {"EX/WB", rat.cells[r][2]}});
            out["ranked"] = rranked;
            if (rat.total_critical == 0)
                out["warning"] = "no critical faults in the record set";
            *summary_json = dup_string(out.dump(2));
        }
        return GS_OK;
    });
}

gs_status gs_trace_root_cause(const gs_image* img, const gs_profile* profile,
                              const char* glitch_json, int as_json, char** report,
                              char** err) {
    return guarded(err, [&]() -> gs_status {
        if (!img || !profile || !glitch_json || !report)
            throw std::invalid_argument("null argument");
        json g = json::parse(glitch_json);
        rootcause::TraceInputs in;
        in.image = &img->image;
        in.profile = &profile->profile;
        in.spec.t_offset_ns = g.at("offset_ns").get<double>();
        in.spec.t_width_ns = g.at("width_ns").get<double>();
        in.spec.trigger.target_pc = g.at("target_pc").get<uint32_t>();
        in.spec.trigger.target_stage = parse_stage(g.value("stage", "IF"));
        in.spec.trigger.occurrence = g.value("occurrence", 1u);
        in.policy = parse_policy(g.value("policy", "zero"));
        in.seed = g.value("seed", uint64_t(1));
        in.entry_pc = g.value("entry_pc", 0u);
        in.watchdog_cycles = g.value("watchdog_cycles", uint64_t(100000));
        auto chain = rootcause::trace_root_cause(in);
        *report = dup_string(rootcause::render_chain(
            chain, as_json ? rootcause::ChainFormat::Json : rootcause::ChainFormat::Text));
        return GS_OK;
    });
}

}  // extern "C"
