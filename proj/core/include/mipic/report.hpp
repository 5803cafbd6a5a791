#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mipic/evaluator.hpp"

namespace mipic::report {

struct RunSummary {
    std::string directory;
    std::string label;
    std::optional<double> final_loss;
    std::vector<eval::EvalReport> reports;
};

/// "MIPIC", "w/o SIA", "w/o PIC", "w/o SIA+PIC" or "MRL-only" from a train config object.
std::string variant_label(const nlohmann::json& train_config);

/// Reads manifest.json, trace.jsonl and report.json (directly or under eval/).
/// Returns nullopt with a warning when the manifest is missing.
std::optional<RunSummary> load_run(const std::filesystem::path& directory);

struct TableRow {
    std::string dataset;
    std::string metric;
    std::size_t dim = 0;
    std::vector<std::optional<double>> values;  // one per column

    friend bool operator==(const TableRow&, const TableRow&) = default;
};

struct ComparisonTable {
    std::vector<std::string> columns;
    std::vector<TableRow> rows;

    friend bool operator==(const ComparisonTable&, const ComparisonTable&) = default;
};

/// Columns follow MIPIC, w/o SIA, w/o PIC, MRL-only, then anything else; repeated
/// labels are disambiguated with the run directory name.
ComparisonTable build_table(std::span<const RunSummary> runs);

std::string to_csv(const ComparisonTable& table);
ComparisonTable parse_csv(const std::string& csv);
nlohmann::json to_json(const ComparisonTable& table, std::span<const RunSummary> runs);

}  // namespace mipic::report
