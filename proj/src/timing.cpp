#include "timing.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace glitchsim::timing {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::IF: return "IF";
        case Stage::ID: return "ID";
        case Stage::EX: return "EX";
        case Stage::WB: return "WB";
    }
    return "?";
}

std::optional<Stage> stage_from_name(std::string_view name) {
    std::string n(name);
    for (auto& c : n) c = char(std::toupper(static_cast<unsigned char>(c)));
    if (n == "IF") return Stage::IF;
    if (n == "ID") return Stage::ID;
    if (n == "EX") return Stage::EX;
    if (n == "WB") return Stage::WB;
    return std::nullopt;
}

const char* policy_name(Policy p) {
    switch (p) {
        case Policy::Zero: return "zero";
        case Policy::Stale: return "stale";
        case Policy::SeededRandom: return "seeded_random";
    }
    return "?";
}

std::optional<Policy> policy_from_name(std::string_view name) {
    if (name == "zero") return Policy::Zero;
    if (name == "stale") return Policy::Stale;
    if (name == "seeded_random") return Policy::SeededRandom;
    return std::nullopt;
}

double TimingProfile::slack_for(std::string_view mnemonic, std::string_view endpoint) const {
    if (auto it = slacks.find({std::string(mnemonic), std::string(endpoint)});
        it != slacks.end())
        return it->second;
    if (auto it = slacks.find({std::string(mnemonic), "*"}); it != slacks.end())
        return it->second;
    return 0.0;
}

uint32_t violated_bits(const TimingProfile& profile, std::string_view endpoint,
                       double t_glitch_ns, double slack_ns) {
    auto it = profile.endpoints.find(std::string(endpoint));
    if (it == profile.endpoints.end())
        throw std::out_of_range("unknown endpoint '" + std::string(endpoint) + "'");
    uint32_t mask = 0;
    const auto& arr = it->second;
    for (size_t i = 0; i < arr.size(); ++i)
        if (arr[i] - slack_ns > t_glitch_ns) mask |= 1u << i;
    return mask;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

uint32_t apply_violation(uint32_t value_intended, uint32_t value_previous, uint32_t mask,
                         Policy policy, uint64_t seed) {
    uint32_t corrupt = 0;
    switch (policy) {
        case Policy::Zero:
            corrupt = 0;
            break;
        case Policy::Stale:
            corrupt = value_previous;
            break;
        case Policy::SeededRandom: {
            uint64_t h = seed;
            h = splitmix64(h ^ value_intended);
            h = splitmix64(h ^ value_previous);
            h = splitmix64(h ^ mask);
            corrupt = uint32_t(h);
            break;
        }
    }
    return (value_intended & ~mask) | (corrupt & mask);
}

std::string fnv1a_hex(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

[[noreturn]] void schema_error(int line, const std::string& msg) {
    throw std::runtime_error("profile line " + std::to_string(line) + ": " + msg);
}

}  // namespace

TimingProfile parse_profile(std::string_view text) {
    TimingProfile p;
    p.content_hash = fnv1a_hex(text);

    struct Pending {
        std::string name;
        unsigned width = 0;
        std::vector<double> arrivals;   // NaN = unassigned
        std::optional<double> fallback; // value of "bits *"
        int line = 0;
    };
    std::optional<Pending> cur;

    auto finish = [&](Pending& pe) {
        for (size_t i = 0; i < pe.arrivals.size(); ++i) {
            if (std::isnan(pe.arrivals[i])) {
                if (!pe.fallback)
                    schema_error(pe.line, "endpoint '" + pe.name + "' leaves bit " +
                                              std::to_string(i) + " without an arrival");
                pe.arrivals[i] = *pe.fallback;
            }
        }
        p.endpoints[pe.name] = pe.arrivals;
    };

    std::istringstream in{std::string(text)};
    std::string rawline;
    int lineno = 0;
    bool have_period = false;
    while (std::getline(in, rawline)) {
        ++lineno;
        std::string line = rawline;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;

        if (word == "clock_period_ns") {
            if (!(ls >> p.clock_period_ns)) schema_error(lineno, "bad clock_period_ns value");
            have_period = true;
        } else if (word == "segment" || word == "endpoint") {
            if (cur) finish(*cur);
            std::string name, kw;
            unsigned width = 0;
            if (!(ls >> name >> kw >> width) || kw != "width")
                schema_error(lineno, "expected '" + word + " <name> width <bits>'");
            if (width == 0 || width > 32) schema_error(lineno, "width must be 1..32");
            if (word == "segment") {
                if (name == "d1") name = kEpIfIdIn;
                else if (name == "d2") name = kEpIfIdOut;
                else schema_error(lineno, "unknown segment '" + name + "' (expected d1 or d2)");
            }
            cur = Pending{name, width, std::vector<double>(width, std::nan("")), std::nullopt,
                          lineno};
        } else if (word == "bits") {
            if (!cur) schema_error(lineno, "'bits' outside endpoint/segment");
            std::string range;
            double arrival;
            if (!(ls >> range >> arrival)) schema_error(lineno, "expected 'bits <range> <ns>'");
            if (range == "*") {
                cur->fallback = arrival;
            } else {
                unsigned hi = 0, lo = 0;
                if (auto colon = range.find(':'); colon != std::string::npos) {
                    try {
                        hi = unsigned(std::stoul(range.substr(0, colon)));
                        lo = unsigned(std::stoul(range.substr(colon + 1)));
                    } catch (...) { schema_error(lineno, "bad bit range '" + range + "'"); }
                } else {
                    try { hi = lo = unsigned(std::stoul(range)); }
                    catch (...) { schema_error(lineno, "bad bit range '" + range + "'"); }
                }
                if (hi < lo || hi >= cur->width)
                    schema_error(lineno, "bit range " + range + " outside width " +
                                             std::to_string(cur->width));
                for (unsigned b = lo; b <= hi; ++b) cur->arrivals[b] = arrival;
            }
        } else if (word == "slack") {
            std::string mnemonic, endpoint;
            double ns;
            if (!(ls >> mnemonic >> endpoint >> ns))
                schema_error(lineno, "expected 'slack <mnemonic> <endpoint|*> <ns>'");
            p.slacks[{mnemonic, endpoint}] = ns;
        } else {
            schema_error(lineno, "unknown directive '" + word + "'");
        }
    }
    if (cur) finish(*cur);
    if (!have_period && !p.endpoints.empty())
        throw std::runtime_error("profile: missing clock_period_ns");
    return p;
}

std::vector<std::string> validate_profile(const TimingProfile& profile) {
    std::vector<std::string> violations;
    for (const auto& [name, arr] : profile.endpoints) {
        for (size_t i = 0; i < arr.size(); ++i) {
            if (arr[i] < 0.0)
                violations.push_back("endpoint " + name + " bit " + std::to_string(i) +
                                     ": negative arrival");
            if (arr[i] >= profile.clock_period_ns)
                violations.push_back("endpoint " + name + " bit " + std::to_string(i) +
                                     ": arrival " + std::to_string(arr[i]) +
                                     " not below clock period");
        }
    }
    auto d1 = profile.endpoints.find(kEpIfIdIn);
    auto d2 = profile.endpoints.find(kEpIfIdOut);
    if (d1 != profile.endpoints.end() && d2 != profile.endpoints.end()) {
        size_t n = std::min(d1->second.size(), d2->second.size());
        for (size_t i = 0; i < n; ++i)
            if (d1->second[i] > d2->second[i])
                violations.push_back("segment ordering: d1 arrival exceeds d2 at bit " +
                                     std::to_string(i));
    }
    return violations;
}

TimingProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read profile '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    TimingProfile p = parse_profile(ss.str());
    auto violations = validate_profile(p);
    if (!violations.empty()) {
        std::string msg = "profile '" + path + "' invalid:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw std::runtime_error(msg);
    }
    return p;
}

}  // namespace glitchsim::timing
