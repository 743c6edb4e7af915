#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "json.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// End-to-end exercises of the command line binary (path via GLITCHSIM_CLI).

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string repo_root() {
    const char* r = std::getenv("GLITCHSIM_ROOT");
    return r ? r : "../..";
}

std::string cli_path() {
    const char* p = std::getenv("GLITCHSIM_CLI");
    REQUIRE_MESSAGE(p, "GLITCHSIM_CLI must point at the built binary");
    return p;
}

struct CliResult {
    int exit_code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    std::string cmd = cli_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    CliResult r;
    std::array<char, 4096> buf{};
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path tmp_dir() {
    auto d = fs::temp_directory_path() / "gs_cli_test";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("assemble reproduces the committed fixture byte for byte") {
    auto out = tmp_dir() / "demo_cli.bin";
    auto sym = tmp_dir() / "demo_cli.sym";
    auto r = run_cli("assemble " + repo_root() + "/workloads/demo.s -o " + out.string() +
                     " --sym " + sym.string());
    CHECK(r.exit_code == 0);
    CHECK(slurp(out) == slurp(repo_root() + "/workloads/fixtures/demo.bin"));
    CHECK(slurp(sym) == slurp(repo_root() + "/workloads/fixtures/demo.sym"));
}

TEST_CASE("assemble rejects bad source with exit 2 and a line number") {
    auto bad = tmp_dir() / "bad.s";
    std::ofstream(bad) << "addi x1, x1, 1\nbroken!\n";
    auto r = run_cli("assemble " + bad.string() + " -o " + (tmp_dir() / "x.bin").string());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("line 2") != std::string::npos);
}

TEST_CASE("assemble of an empty file yields an empty image and exit 0") {
    auto empty = tmp_dir() / "empty.s";
    std::ofstream(empty) << "";
    auto out = tmp_dir() / "empty.bin";
    auto r = run_cli("assemble " + empty.string() + " -o " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::file_size(out) == 0);
}

TEST_CASE("run reports the demo load value") {
    auto r = run_cli("run --workload " + repo_root() + "/workloads/demo.s");
    REQUIRE(r.exit_code == 0);
    auto j = json::parse(r.out);
    CHECK(j["regs"]["x11"] == "0x42026ada");
    CHECK(j["halt"] == "clean_halt");
}

TEST_CASE("run accepts the flat binary fixture too") {
    auto r = run_cli("run --workload " + repo_root() + "/workloads/fixtures/demo.bin");
    REQUIRE(r.exit_code == 0);
    auto j = json::parse(r.out);
    CHECK(j["regs"]["x11"] == "0x42026ada");
}

TEST_CASE("glitch reports a case 2 outcome in the mid band") {
    auto r = run_cli("glitch --workload " + repo_root() + "/workloads/demo.s --profile " +
                     repo_root() +
                     "/profiles/default.profile --offset 0.833 --width 3.3 --target-pc 0x386");
    REQUIRE(r.exit_code == 0);
    auto j = json::parse(r.out);
    CHECK(j["outcome"]["case"] == 2);
    CHECK(j["regs"]["x11"] == "0x00000000");
}

TEST_CASE("glitch at an unreachable pc warns and stays no_effect") {
    auto r = run_cli("glitch --workload " + repo_root() + "/workloads/demo.s --profile " +
                     repo_root() +
                     "/profiles/default.profile --offset 0.833 --width 3.3 --target-pc 0x7770");
    REQUIRE(r.exit_code == 0);
    auto j = json::parse(r.out);
    CHECK(j["outcome"]["category"] == "no_effect");
    bool warned = false;
    for (const auto& w : j["warnings"])
        if (w.get<std::string>().find("never fired") != std::string::npos) warned = true;
    CHECK(warned);
}

TEST_CASE("sweep, resume and rat work end to end") {
    auto dir = tmp_dir() / "sweep";
    fs::remove_all(dir);
    auto cfg_path = tmp_dir() / "config.json";
    json cfg = {{"workload", repo_root() + "/workloads/demo.s"},
                {"profile", repo_root() + "/profiles/default.profile"},
                {"grid",
                 {{"offsets_ns", {0.833, 1.5}},
                  {"widths_ns", {2.967, 3.3, 4.0, 4.6}},
                  {"stages", {"IF", "EX"}},
                  {"targets", {{{"mnemonic", "lw"}}, {{"mnemonic", "jal"}}}}}},
                {"seed", 11},
                {"parallelism", 2}};
    std::ofstream(cfg_path) << cfg.dump(2);

    auto r1 = run_cli("sweep --config " + cfg_path.string() + " --out " + dir.string());
    REQUIRE(r1.exit_code == 0);
    auto s1 = json::parse(r1.out);
    CHECK(s1["total"] == 32);
    auto records_full = slurp(dir / "records.jsonl");

    // chop the records file and resume; the artifacts must come back identical
    {
        std::istringstream in(records_full);
        std::ofstream out(dir / "records.jsonl", std::ios::trunc);
        std::string line;
        for (int i = 0; i < 7 && std::getline(in, line); ++i) out << line << "\n";
    }
    auto r2 = run_cli("sweep --config " + cfg_path.string() + " --out " + dir.string() +
                      " --resume");
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(dir / "records.jsonl") == records_full);
    CHECK(json::parse(r2.out) == s1);

    auto r3 = run_cli("rat --records " + (dir / "records.jsonl").string());
    REQUIRE(r3.exit_code == 0);
    CHECK(r3.out.find("instruction,IF/ID,ID/EX,EX/WB") != std::string::npos);

    // an empty target list is a usage error
    cfg["grid"]["targets"] = json::array();
    std::ofstream(cfg_path) << cfg.dump(2);
    auto r4 = run_cli("sweep --config " + cfg_path.string() + " --out " + dir.string());
    CHECK(r4.exit_code == 2);
}

TEST_CASE("the committed demo campaign config sweeps all 9248 runs") {
    auto dir = tmp_dir() / "default_sweep";
    fs::remove_all(dir);
    // the committed config uses repo-relative paths, so run from the root
    std::string cmd = "cd " + repo_root() + " && " + cli_path() +
                      " sweep --config configs/demo_campaign.json --out " + dir.string() +
                      " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    CliResult r;
    std::array<char, 4096> buf{};
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    REQUIRE_MESSAGE(r.exit_code == 0, r.out);
    auto j = json::parse(r.out);
    CHECK(j["total"] == 9248);
    CHECK(j["critical"].get<int>() > 0);
    CHECK(j["cases"].contains("1"));
    CHECK(j["cases"].contains("4"));
}

TEST_CASE("trace renders the chain and flags no-divergence specs") {
    auto r = run_cli("trace --workload " + repo_root() + "/workloads/demo.s --profile " +
                     repo_root() +
                     "/profiles/default.profile --offset 0.833 --width 3.3 --target-pc 0x386");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("first divergence") != std::string::npos);
    CHECK(r.out.find("if_id") != std::string::npos);

    auto r2 = run_cli("trace --workload " + repo_root() + "/workloads/demo.s --profile " +
                      repo_root() +
                      "/profiles/default.profile --offset 9.9 --width 9.9 --target-pc 0x386");
    REQUIRE(r2.exit_code == 0);
    CHECK(r2.out.find("no divergence") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("bogus-subcommand").exit_code == 2);
    CHECK(run_cli("run").exit_code == 2);                      // missing --workload
    CHECK(run_cli("sweep --config /no/such.json").exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
}
