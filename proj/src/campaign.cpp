#include "campaign.hpp"

#include "json.hpp"

#include <atomic>
#include <cfenv>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace glitchsim::campaign {

using json = nlohmann::ordered_json;

const std::array<const char*, 8> kDefaultTargetMnemonics = {
    "c.addi", "auipc", "jal", "bne", "bge", "c.lwsp", "c.mv", "lw"};

std::vector<double> default_axis() {
    std::vector<double> axis;
    const double lo = 0.278, hi = 8.89;
    for (int i = 0; i < 17; ++i) axis.push_back(lo + (hi - lo) * i / 16.0);
    return axis;
}

SweepGrid default_grid(const isa::ProgramImage& image) {
    SweepGrid g;
    g.offsets_ns = default_axis();
    g.widths_ns = default_axis();
    g.stages = {timing::Stage::IF, timing::Stage::ID, timing::Stage::EX, timing::Stage::WB};
    for (const char* m : kDefaultTargetMnemonics) {
        auto hits = isa::find_targets(image, {m});
        if (!hits.empty()) g.targets.push_back(TargetSpec{m, hits.front().pc, 1});
    }
    return g;
}

std::vector<CampaignRunSpec> enumerate_grid(const SweepGrid& grid) {
    if (grid.offsets_ns.empty() || grid.widths_ns.empty() || grid.stages.empty() ||
        grid.targets.empty())
        throw std::invalid_argument("enumerate_grid: empty grid dimension");
    std::vector<CampaignRunSpec> out;
    out.reserve(grid.total());
    for (const auto& t : grid.targets)
        for (auto stage : grid.stages)
            for (double o : grid.offsets_ns)
                for (double w : grid.widths_ns)
                    out.push_back(CampaignRunSpec{t, stage, o, w});
    return out;
}

const char* stage_pair_name(StagePair p) {
    switch (p) {
        case StagePair::IfId: return "IF/ID";
        case StagePair::IdEx: return "ID/EX";
        case StagePair::ExWb: return "EX/WB";
    }
    return "?";
}

StagePair attribute_stage_pair(const RunRecord& rec) {
    if (!rec.outcome.first_divergence) {
        // critical outcomes always carry a latch event; fall back per stage
        switch (rec.spec.stage) {
            case timing::Stage::IF: return StagePair::IfId;
            case timing::Stage::ID: return StagePair::IdEx;
            default: return StagePair::ExWb;
        }
    }
    const std::string& el = rec.outcome.first_divergence->second;
    if (el == "if_id") return StagePair::IfId;
    if (el == "id_ex") return StagePair::IdEx;
    return StagePair::ExWb;
}

RATable build_rat(const std::vector<RunRecord>& records,
                  const std::vector<std::string>& row_order) {
    RATable rat;
    rat.instructions = row_order;
    rat.counts.assign(row_order.size(), {0, 0, 0});
    rat.cells.assign(row_order.size(), {0.0, 0.0, 0.0});
    for (const auto& rec : records) {
        if (!rec.outcome.critical) continue;
        auto row = std::find(row_order.begin(), row_order.end(), rec.spec.target.mnemonic);
        if (row == row_order.end()) continue;
        auto col = size_t(attribute_stage_pair(rec));
        ++rat.counts[size_t(row - row_order.begin())][col];
        ++rat.total_critical;
    }
    if (rat.total_critical > 0) {
        for (size_t r = 0; r < rat.counts.size(); ++r)
            for (size_t c = 0; c < 3; ++c)
                rat.cells[r][c] = 100.0 * double(rat.counts[r][c]) / double(rat.total_critical);
    }
    return rat;
}

Reduction reduction_stats(uint64_t total, uint64_t critical) {
    if (total == 0) throw std::invalid_argument("reduction_stats: total must be positive");
    if (critical > total) throw std::invalid_argument("reduction_stats: critical exceeds total");
    Reduction r;
    r.total = total;
    r.critical = critical;
    double exact = 100.0 * (1.0 - double(critical) / double(total));
    // two decimals: round-half-even for the headline number, plus the
    // truncated variant some write-ups use
    r.percent = std::nearbyint(exact * 100.0) / 100.0;
    r.percent_truncated = std::floor(exact * 100.0) / 100.0;
    return r;
}

namespace {

std::string digest_events(const std::vector<sim::LatchEvent>& events) {
    std::ostringstream os;
    for (const auto& e : events)
        os << e.cycle << ":" << e.endpoint << ":" << e.violated_mask << ":" << e.value_intended
           << ":" << e.value_latched << ";";
    return timing::fnv1a_hex(os.str());
}

json spec_to_json(const CampaignRunSpec& s) {
    json j;
    j["target"] = {{"mnemonic", s.target.mnemonic},
                   {"pc", s.target.pc},
                   {"occurrence", s.target.occurrence}};
    j["stage"] = timing::stage_name(s.stage);
    j["offset_ns"] = s.t_offset_ns;
    j["width_ns"] = s.t_width_ns;
    return j;
}

}  // namespace

std::string record_to_json(const RunRecord& rec) {
    json j;
    j["idx"] = rec.index;
    j["spec"] = spec_to_json(rec.spec);
    j["outcome"] = json::parse(classify::outcome_to_json(rec.outcome));
    j["fired"] = rec.fired;
    j["events_digest"] = rec.events_digest;
    return j.dump();
}

RunRecord record_from_json(const std::string& line) {
    json j = json::parse(line);
    RunRecord rec;
    rec.index = j.at("idx").get<size_t>();
    const auto& s = j.at("spec");
    rec.spec.target.mnemonic = s.at("target").at("mnemonic").get<std::string>();
    rec.spec.target.pc = s.at("target").at("pc").get<uint32_t>();
    rec.spec.target.occurrence = s.at("target").at("occurrence").get<uint32_t>();
    rec.spec.stage = *timing::stage_from_name(s.at("stage").get<std::string>());
    rec.spec.t_offset_ns = s.at("offset_ns").get<double>();
    rec.spec.t_width_ns = s.at("width_ns").get<double>();
    const auto& o = j.at("outcome");
    std::string cat = o.at("category").get<std::string>();
    for (int c = 0; c <= int(classify::Category::MultiEffect); ++c)
        if (cat == classify::category_name(classify::Category(c)))
            rec.outcome.category = classify::Category(c);
    rec.outcome.case_id = o.at("case").is_null() ? 0 : o.at("case").get<int>();
    rec.outcome.illegal_raised = o.at("illegal_raised").get<bool>();
    rec.outcome.critical = o.at("critical").get<bool>();
    if (!o.at("first_divergence").is_null())
        rec.outcome.first_divergence = {
            {o.at("first_divergence").at("cycle").get<uint64_t>(),
             o.at("first_divergence").at("element").get<std::string>()}};
    rec.fired = j.at("fired").get<bool>();
    rec.events_digest = j.at("events_digest").get<std::string>();
    return rec;
}

CampaignResult run_campaign(const CampaignConfig& cfg, std::ostream* record_sink,
                            const std::vector<RunRecord>& resumed) {
    CampaignResult result;
    const size_t resume_from = resumed.size();

    sim::MachineConfig mcfg;
    mcfg.max_cycles = cfg.watchdog_cycles;
    mcfg.policy = cfg.policy;
    mcfg.seed = cfg.seed;
    auto golden = sim::run_pipeline(cfg.image, cfg.entry_pc, mcfg);

    // drop targets the golden run never executes; resolve the architectural
    // occurrence of the rest to the fetch occurrence the trigger arms on
    SweepGrid grid = cfg.grid;
    grid.targets.clear();
    std::map<std::pair<uint32_t, uint32_t>, uint32_t> trigger_occ;
    for (const auto& t : cfg.grid.targets) {
        auto occ = classify::resolve_fetch_occurrence(golden, t.pc, t.occurrence);
        if (occ) {
            grid.targets.push_back(t);
            trigger_occ[{t.pc, t.occurrence}] = *occ;
        } else {
            result.errors.push_back("target " + t.mnemonic + "@0x" +
                                    [&] {
                                        std::ostringstream os;
                                        os << std::hex << t.pc;
                                        return os.str();
                                    }() +
                                    " occurrence " + std::to_string(t.occurrence) +
                                    " never retires in the golden run");
        }
    }

    auto specs = enumerate_grid(grid);
    result.total = specs.size();
    result.records.resize(specs.size());
    if (resume_from > specs.size())
        throw std::invalid_argument("resume point beyond the end of the sweep");
    for (size_t i = 0; i < resume_from; ++i) {
        if (!(resumed[i].spec == specs[i]) || resumed[i].index != i)
            throw std::invalid_argument("resumed record " + std::to_string(i) +
                                        " does not match the configured sweep");
        result.records[i] = resumed[i];
    }

    std::atomic<size_t> next{resume_from};
    std::vector<std::atomic<bool>> ready(specs.size());
    for (auto& f : ready) f.store(false);
    std::mutex mu;
    std::condition_variable cv;

    auto run_one = [&](size_t i) {
        const auto& spec = specs[i];
        uint32_t occ = trigger_occ.at({spec.target.pc, spec.target.occurrence});
        uint64_t run_seed = timing::splitmix64(cfg.seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
        timing::GlitchSpec gspec{spec.t_offset_ns, spec.t_width_ns,
                                 timing::Trigger{spec.target.pc, spec.stage, occ}};
        inject::ArmedGlitch glitch(gspec, cfg.profile, cfg.policy, run_seed);
        sim::MachineConfig rcfg = mcfg;
        rcfg.seed = run_seed;
        auto glitched = sim::run_pipeline(cfg.image, cfg.entry_pc, rcfg, &glitch);
        RunRecord rec;
        rec.index = i;
        rec.spec = spec;
        rec.outcome = classify::classify(
            golden, glitched,
            classify::TargetInfo{spec.target.pc, occ, spec.target.mnemonic});
        rec.fired = glitch.fired();
        rec.events_digest = digest_events(glitched.latch_events);
        result.records[i] = std::move(rec);
    };

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= specs.size()) break;
            run_one(i);
            {
                std::lock_guard<std::mutex> lock(mu);
                ready[i].store(true, std::memory_order_release);
            }
            cv.notify_all();
        }
    };

    int threads = std::max(1, cfg.parallelism);
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);

    if (record_sink) {
        // stream records in index order as they complete
        for (size_t i = resume_from; i < specs.size(); ++i) {
            std::unique_lock<std::mutex> lock(mu);
            cv.wait(lock, [&] { return ready[i].load(std::memory_order_acquire); });
            lock.unlock();
            *record_sink << record_to_json(result.records[i]) << "\n";
            record_sink->flush();
        }
    }
    for (auto& t : pool) t.join();

    for (const auto& rec : result.records)
        if (rec.outcome.critical) ++result.critical;

    std::vector<std::string> rows;
    for (const auto& t : grid.targets) rows.push_back(t.mnemonic);
    result.rat = build_rat(result.records, rows);
    result.reduction = result.total ? reduction_stats(result.total, result.critical) : Reduction{};
    return result;
}

std::string rat_to_csv(const RATable& rat) {
    std::ostringstream os;
    os << "instruction,IF/ID,ID/EX,EX/WB\n";
    os.setf(std::ios::fixed);
    os.precision(2);
    for (size_t r = 0; r < rat.instructions.size(); ++r)
        os << rat.instructions[r] << "," << rat.cells[r][0] << "," << rat.cells[r][1] << ","
           << rat.cells[r][2] << "\n";
    os << "total_critical," << rat.total_critical << ",,\n";
    return os.str();
}

std::string summary_to_json(const CampaignConfig& cfg, const CampaignResult& result) {
    json j;
    j["tool_version"] = "0.1.0";
    j["profile_hash"] = cfg.profile.content_hash;
    j["policy"] = timing::policy_name(cfg.policy);
    j["seed"] = cfg.seed;
    j["watchdog_cycles"] = cfg.watchdog_cycles;
    j["entry_pc"] = cfg.entry_pc;
    json grid;
    grid["offsets_ns"] = cfg.grid.offsets_ns;
    grid["widths_ns"] = cfg.grid.widths_ns;
    json stages = json::array();
    for (auto s : cfg.grid.stages) stages.push_back(timing::stage_name(s));
    grid["stages"] = stages;
    json targets = json::array();
    for (const auto& t : cfg.grid.targets)
        targets.push_back({{"mnemonic", t.mnemonic}, {"pc", t.pc}, {"occurrence", t.occurrence}});
    grid["targets"] = targets;
    j["grid"] = grid;
    j["total"] = result.total;
    j["critical"] = result.critical;
    j["reduction"] = {{"total", result.reduction.total},
                      {"critical", result.reduction.critical},
                      {"percent", result.reduction.percent},
                      {"percent_truncated", result.reduction.percent_truncated}};
    std::map<std::string, uint64_t> categories;
    std::map<std::string, uint64_t> cases;
    for (const auto& rec : result.records) {
        ++categories[classify::category_name(rec.outcome.category)];
        if (rec.outcome.case_id) ++cases[std::to_string(rec.outcome.case_id)];
    }
    j["categories"] = categories;
    j["cases"] = cases;
    j["errors"] = result.errors;
    return j.dump(2);
}

std::string run_campaign_to_dir(const CampaignConfig& cfg, const std::string& out_dir,
                                bool resume) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::path records_path = fs::path(out_dir) / "records.jsonl";

    std::vector<RunRecord> resumed;
    std::string kept;
    if (resume && fs::exists(records_path)) {
        std::ifstream in(records_path);
        std::string line;
        std::ostringstream keep;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            RunRecord rec;
            try {
                rec = record_from_json(line);
            } catch (...) {
                break;  // truncated trailing line
            }
            if (rec.index != resumed.size()) break;
            keep << line << "\n";
            resumed.push_back(std::move(rec));
        }
        kept = keep.str();
    }

    std::ofstream out(records_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + records_path.string());
    out << kept;
    out.flush();

    auto result = run_campaign(cfg, &out, resumed);
    out.close();

    std::ofstream rat(fs::path(out_dir) / "rat.csv", std::ios::trunc);
    rat << rat_to_csv(result.rat);
    rat.close();

    auto summary = summary_to_json(cfg, result);
    std::ofstream sum(fs::path(out_dir) / "summary.json", std::ios::trunc);
    sum << summary << "\n";
    sum.close();
    return summary;
}

}  // namespace glitchsim::campaign
