// Run reporting: a RunReport collects check outcomes, convergence series and
// timings; writers emit report.json, summary.csv, convergence.csv and
// trajectories.jsonl. All numbers use shortest round-trip formatting, so a
// repeated run with the same seed produces byte-identical files.
#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnd/config.hpp"
#include "qnd/errors.hpp"
#include "qnd/history.hpp"
#include "qnd/ndm.hpp"
#include "qnd/version.hpp"

namespace qnd {

struct CheckRecord {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool hard = true;  // soft records only fail the run under --strict
};

struct SeriesRow {
    int depth = 0;
    std::string quantity;
    double residual = 0.0;
    double bound = 0.0;
};

struct RunReport {
    std::string kind;
    std::uint64_t seed = 0;
    OrderedJson config_echo;
    std::vector<CheckRecord> checks;
    std::vector<SeriesRow> series;
    std::map<std::string, double> timings_ms;
    std::vector<std::string> outputs;
    OrderedJson extra;  // kind-specific payloads (disintegration, stats)

    void add_check(std::string name, double residual, double tolerance, bool pass,
                   bool hard = true) {
        checks.push_back({std::move(name), residual, tolerance, pass, hard});
    }

    bool ok(bool strict = false) const {
        for (const auto& c : checks)
            if (!c.pass && (c.hard || strict)) return false;
        return true;
    }
};

inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open output file '" + path.string() + "'");
    return out;
}

// One line per trajectory, in trajectory-index order. Fields are fixed:
// trajectory, seed, stream, true_label, horizon, outcomes (comma string),
// final_posterior, frequency, classified_label, margin
// [, posterior_path when recorded].
inline void write_trajectories_jsonl(const std::filesystem::path& path,
                                     const std::vector<Trajectory>& trajectories) {
    auto out = open_output(path);
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
        const Trajectory& t = trajectories[k];
        OrderedJson j;
        j["trajectory"] = k;
        j["seed"] = t.seed;
        j["stream"] = t.stream;
        j["true_label"] = t.true_label;
        j["horizon"] = t.horizon;
        std::string word;
        for (std::size_t i = 0; i < t.outcomes.size(); ++i) {
            if (i) word += ',';
            word += t.outcomes[i] == 1 ? "1" : "-1";
        }
        j["outcomes"] = word;
        j["final_posterior"] = t.final_posterior;
        j["frequency"] = t.frequency;
        j["classified_label"] = t.classified_label;
        j["margin"] = t.margin;
        if (!t.posterior_path.empty()) j["posterior_path"] = t.posterior_path;
        out << j.dump() << '\n';
    }
}

// check,residual,tolerance,pass with a leading comment documenting columns.
inline void write_summary_csv(const std::filesystem::path& path, const RunReport& report) {
    auto out = open_output(path);
    out << "# columns: check,residual,tolerance,pass (pass is 1/0; soft checks marked *)\n";
    out << "check,residual,tolerance,pass\n";
    for (const auto& c : report.checks)
        out << c.name << (c.hard ? "" : "*") << ',' << format_number(c.residual) << ','
            << format_number(c.tolerance) << ',' << (c.pass ? 1 : 0) << '\n';
}

// depth,quantity,residual,bound sorted by depth; requires a nonempty series.
inline void emit_convergence_table(const std::filesystem::path& path, const RunReport& report) {
    if (report.series.empty())
        throw MissingSeries("emit_convergence_table: report holds no convergence series");
    std::vector<SeriesRow> rows = report.series;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SeriesRow& a, const SeriesRow& b) { return a.depth < b.depth; });
    auto out = open_output(path);
    out << "# columns: depth,quantity,residual,bound\n";
    out << "depth,quantity,residual,bound\n";
    for (const auto& r : rows)
        out << r.depth << ',' << r.quantity << ',' << format_number(r.residual) << ','
            << format_number(r.bound) << '\n';
}

inline OrderedJson report_to_json(const RunReport& report, bool strict) {
    OrderedJson j;
    j["version"] = kVersion;
    j["kind"] = report.kind;
    j["seed"] = report.seed;
    j["rng"] = {
        {"generator", "splitmix64 counter"},
        {"stream_rule",
         "word n of stream k under seed s is mix(key + (n+1)*golden) with "
         "key = mix(s + (2k+1)*golden); trajectory index k owns stream k"}};
    j["ok"] = report.ok(strict);
    j["strict"] = strict;
    OrderedJson checks = OrderedJson::array();
    for (const auto& c : report.checks)
        checks.push_back({{"name", c.name},
                          {"residual", c.residual},
                          {"tolerance", c.tolerance},
                          {"pass", c.pass},
                          {"hard", c.hard}});
    j["checks"] = checks;
    if (!report.series.empty()) {
        OrderedJson series = OrderedJson::array();
        for (const auto& r : report.series)
            series.push_back({{"depth", r.depth},
                              {"quantity", r.quantity},
                              {"residual", r.residual},
                              {"bound", r.bound}});
        j["series"] = series;
    }
    if (!report.extra.empty()) j["results"] = report.extra;
    j["timings_ms"] = report.timings_ms;
    j["outputs"] = report.outputs;
    j["config"] = report.config_echo;
    return j;
}

inline void write_report_json(const std::filesystem::path& path, const RunReport& report,
                              bool strict) {
    auto out = open_output(path);
    out << report_to_json(report, strict).dump(2) << '\n';
}

}  // namespace qnd
