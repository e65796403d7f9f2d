#pragma once

// JSON result documents and the per-seed text report.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "json.hpp"
#include "qparity/pipelines.hpp"

namespace qparity {

inline constexpr std::string_view kResultFormat = "qparity-result v1";
inline constexpr std::string_view kVersion = "0.1.0";

/// Named per-seed series besides the headline accuracies (swap cells etc.).
using Series = std::vector<std::pair<std::string, RealVector>>;

inline nlohmann::ordered_json result_to_json(const ExperimentResult& r, const Series& series = {},
                                             bool with_timestamp = true) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["format"] = kResultFormat;
    j["pipeline"] = r.pipeline;
    j["dataset"] = r.dataset;
    ordered_json cfg = ordered_json::object();
    for (const auto& [k, v] : r.config) {
        cfg[k] = v;
    }
    j["config"] = cfg;
    j["seeds"] = r.seeds;
    ordered_json per = ordered_json::array();
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
        ordered_json s;
        s["seed"] = r.seeds[i];
        s["accuracy"] = r.accuracies.at(i);
        if (i < r.words.size()) {
            s["words"] = r.words[i];
        }
        if (i < r.head_weights.size()) {
            ordered_json rows = ordered_json::array();
            for (std::size_t c = 0; c < r.head_weights[i].rows(); ++c) {
                auto row = r.head_weights[i].row(c);
                rows.push_back(RealVector(row.begin(), row.end()));
            }
            s["head"] = {{"weights", rows}, {"bias", r.head_bias.at(i)}};
        }
        per.push_back(s);
    }
    j["per_seed"] = per;
    j["aggregate"] = {{"mean", r.summary.mean}, {"std", r.summary.std}, {"best", r.summary.best}};
    if (!series.empty()) {
        ordered_json sj = ordered_json::object();
        for (const auto& [name, vals] : series) {
            const auto s = summarize(vals);
            sj[name] = {{"per_seed", vals}, {"mean", s.mean}, {"std", s.std}, {"best", s.best}};
        }
        j["series"] = sj;
    }
    j["notes"] = r.notes;
    j["warnings"] = r.warnings;
    ordered_json meta;
    meta["version"] = kVersion;
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now();
        meta["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    }
    j["metadata"] = meta;
    return j;
}

struct LoadedResult {
    ExperimentResult result;
    Series series;
};

inline LoadedResult result_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kResultFormat) {
        throw ParseError("result: unsupported format tag");
    }
    LoadedResult out;
    auto& r = out.result;
    r.pipeline = j.at("pipeline").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) {
        r.config.emplace_back(k, v.get<std::string>());
    }
    std::sort(r.config.begin(), r.config.end());
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& s : j.at("per_seed")) {
        r.accuracies.push_back(s.at("accuracy").get<double>());
        if (s.contains("words")) {
            r.words.push_back(s.at("words").get<std::vector<std::string>>());
        }
    }
    const auto& a = j.at("aggregate");
    r.summary = {a.at("mean").get<double>(), a.at("std").get<double>(), a.at("best").get<double>()};
    if (j.contains("series")) {
        for (const auto& [name, v] : j.at("series").items()) {
            out.series.emplace_back(name, v.at("per_seed").get<RealVector>());
        }
    }
    if (!r.aggregates_consistent()) {
        throw ParseError("result: stored aggregates do not match per-seed accuracies");
    }
    return out;
}

/// Writes via a temporary file in the same directory and renames into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
        out << text;
        if (!out.flush()) {
            throw Error("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string fmt1(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", percent);
    return buf;
}

/// Aligned table: one row per series, columns S<seed>..., Mean, Std, Best (percent, 1 decimal).
inline std::string render_report(const std::vector<std::pair<std::string, LoadedResult>>& results) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [label, lr] : results) {
        const auto& r = lr.result;
        std::vector<std::string> header{"Run"};
        for (auto s : r.seeds) {
            header.push_back("S" + std::to_string(s));
        }
        header.insert(header.end(), {"Mean", "Std", "Best"});
        if (rows.empty() || rows.front() != header) {
            if (!rows.empty()) {
                rows.push_back({});
            }
            rows.push_back(header);
        }
        auto add = [&](const std::string& name, const RealVector& acc) {
            std::vector<std::string> row{name};
            for (double a : acc) {
                row.push_back(fmt1(100.0 * a));
            }
            const auto s = summarize(acc);
            row.insert(row.end(), {fmt1(100.0 * s.mean), fmt1(100.0 * s.std), fmt1(100.0 * s.best)});
            rows.push_back(row);
        };
        add(label, r.accuracies);
        for (const auto& [name, vals] : lr.series) {
            add(label + " " + name, vals);
        }
    }
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        width.resize(std::max(width.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) {
                out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
            } else {
                out << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
            }
        }
        out << '\n';
    }
    return out.str();
}

} // namespace qparity
