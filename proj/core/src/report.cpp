#include "mipic/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mipic/errors.hpp"
#include "mipic/manifest.hpp"

namespace mipic::report {

namespace {

constexpr const char* kOrder[] = {"MIPIC", "w/o SIA", "w/o PIC", "w/o SIA+PIC", "MRL-only"};

std::size_t rank_of(const std::string& label) {
    for (std::size_t i = 0; i < std::size(kOrder); ++i) {
        if (label == kOrder[i]) return i;
    }
    return std::size(kOrder);
}

std::string format_double(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream in(line);
    std::string field;
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::optional<std::filesystem::path> find_report(const std::filesystem::path& dir) {
    for (const auto& p : {dir / "report.json", dir / "eval" / "report.json"}) {
        if (std::filesystem::exists(p)) return p;
    }
    return std::nullopt;
}

}  // namespace

std::string variant_label(const nlohmann::json& train) {
    if (!train.is_object()) return "MIPIC";
    if (train.value("mrl_only", false)) return "MRL-only";
    const bool no_sia = train.value("no_sia", false), no_pic = train.value("no_pic", false);
    if (no_sia && no_pic) return "w/o SIA+PIC";
    if (no_sia) return "w/o SIA";
    if (no_pic) return "w/o PIC";
    return "MIPIC";
}

std::optional<RunSummary> load_run(const std::filesystem::path& directory) {
    if (!std::filesystem::exists(directory / kManifestName)) {
        spdlog::warn("skipping {}: no {}", directory.string(), kManifestName);
        return std::nullopt;
    }
    const RunManifest manifest = read_manifest(directory);
    RunSummary run;
    run.directory = directory.string();
    run.label = manifest.command == "train" && manifest.config.contains("train")
                    ? variant_label(manifest.config.at("train"))
                    : directory.filename().string();

    if (std::ifstream trace(directory / "trace.jsonl"); trace) {
        std::string line, last;
        while (std::getline(trace, line)) {
            if (!line.empty()) last = line;
        }
        if (!last.empty()) {
            try {
                run.final_loss = nlohmann::json::parse(last).at("total").get<double>();
            } catch (const nlohmann::json::exception& e) {
                throw InputError("malformed trace in " + directory.string() + ": " + e.what());
            }
        }
    }
    if (auto path = find_report(directory)) {
        std::ifstream in(*path, std::ios::binary);
        try {
            const auto doc = nlohmann::json::parse(in);
            for (const auto& r : doc.at("reports")) run.reports.push_back(r.get<eval::EvalReport>());
        } catch (const nlohmann::json::exception& e) {
            throw InputError("malformed report " + path->string() + ": " + e.what());
        }
    } else {
        spdlog::warn("{} has no evaluation report", directory.string());
    }
    return run;
}

ComparisonTable build_table(std::span<const RunSummary> runs) {
    std::vector<std::size_t> order(runs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rank_of(runs[a].label) < rank_of(runs[b].label); });

    ComparisonTable table;
    std::map<std::string, std::size_t> seen;
    for (std::size_t i : order) ++seen[runs[i].label];
    for (std::size_t i : order) {
        const auto& r = runs[i];
        table.columns.push_back(seen[r.label] > 1
                                    ? r.label + " (" + std::filesystem::path(r.directory).filename().string() + ")"
                                    : r.label);
    }

    std::map<std::tuple<std::string, std::string, std::size_t>, std::size_t> index;
    for (std::size_t c = 0; c < order.size(); ++c) {
        for (const auto& rep : runs[order[c]].reports) {
            for (const auto& row : rep.rows) {
                const auto key = std::make_tuple(rep.dataset, rep.metric, row.dim);
                auto [it, inserted] = index.emplace(key, table.rows.size());
                if (inserted) {
                    table.rows.push_back({rep.dataset, rep.metric, row.dim, std::vector<std::optional<double>>(order.size())});
                }
                table.rows[it->second].values[c] = row.value;
            }
        }
    }
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const TableRow& a, const TableRow& b) {
        return std::tie(a.dataset, a.metric, a.dim) < std::tie(b.dataset, b.metric, b.dim);
    });
    return table;
}

std::string to_csv(const ComparisonTable& table) {
    std::string out = "dataset,metric,dim";
    for (const auto& c : table.columns) out += "," + c;
    out += '\n';
    for (const auto& row : table.rows) {
        out += row.dataset + "," + row.metric + "," + std::to_string(row.dim);
        for (const auto& v : row.values) out += "," + (v ? format_double(*v) : std::string());
        out += '\n';
    }
    return out;
}

ComparisonTable parse_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty comparison table");
    auto header = split(line, ',');
    if (header.size() < 3 || header[0] != "dataset" || header[1] != "metric" || header[2] != "dim") {
        throw InputError("comparison table header must start with dataset,metric,dim");
    }
    ComparisonTable table;
    table.columns.assign(header.begin() + 3, header.end());
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (f.size() != header.size()) throw InputError("comparison table line " + std::to_string(number) + ": wrong field count");
        TableRow row{f[0], f[1], static_cast<std::size_t>(std::stoull(f[2])), {}};
        for (std::size_t i = 3; i < f.size(); ++i) {
            row.values.push_back(f[i].empty() ? std::nullopt : std::optional<double>(std::stod(f[i])));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::json to_json(const ComparisonTable& table, std::span<const RunSummary> runs) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json values = nlohmann::json::array();
        for (const auto& v : r.values) values.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        rows.push_back({{"dataset", r.dataset}, {"metric", r.metric}, {"dim", r.dim}, {"values", values}});
    }
    nlohmann::json meta = nlohmann::json::array();
    for (const auto& run : runs) {
        meta.push_back({{"directory", run.directory},
                        {"label", run.label},
                        {"final_loss", run.final_loss ? nlohmann::json(*run.final_loss) : nlohmann::json(nullptr)}});
    }
    return {{"columns", table.columns}, {"rows", rows}, {"runs", meta}};
}

}  // namespace mipic::report
