#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mipic/encoder.hpp"
#include "mipic/matrix.hpp"
#include "mipic/vocab.hpp"

namespace mipic::eval {

/// Final-layer CLS states without dropout (n x D), before truncation.
Matrix embed_full(const Encoder& encoder, const Vocabulary& vocabulary, std::span<const std::string> sentences,
                  std::size_t batch_size = 64);
/// First `dim` columns, L2-normalised per row.
Matrix truncate(const Matrix& full, std::size_t dim);
Matrix embed(const Encoder& encoder, const Vocabulary& vocabulary, std::span<const std::string> sentences,
             std::size_t dim);

/// Row-wise dot products of two normalised embedding matrices.
std::vector<double> row_cosines(const Matrix& a, const Matrix& b);

/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks. Throws DegenerateError on a constant input.
double spearman(std::span<const double> predicted, std::span<const double> gold);

struct ThresholdResult {
    double threshold = 0.0;
    double accuracy = 0.0;
};

/// Candidates: -inf, midpoints between sorted distinct similarities, +inf.
/// A pair is predicted positive when sim > threshold; ties keep the lowest threshold.
std::vector<double> threshold_candidates(std::span<const double> sims);
double threshold_accuracy(std::span<const double> sims, std::span<const int> labels, double threshold);
ThresholdResult pair_threshold_accuracy(std::span<const double> sims, std::span<const int> labels);

struct ProbeOptions {
    double l2 = 1e-3;
    std::size_t iterations = 500;
    double learning_rate = 0.1;
};

/// Macro-F1 of a multinomial logistic regression over frozen features,
/// standardised with training statistics. The macro average runs over every
/// label seen in the test set or predicted.
double logistic_probe(const Matrix& train, std::span<const std::string> train_labels, const Matrix& test,
                      std::span<const std::string> test_labels, const ProbeOptions& options = {});
double macro_f1(std::span<const std::string> gold, std::span<const std::string> predicted);

struct StsDataset {
    std::vector<std::string> first, second;
    std::vector<double> scores;
};
struct PairDataset {
    std::vector<std::string> first, second;
    std::vector<int> labels;
};
struct ClassificationDataset {
    std::vector<std::string> sentences;
    std::vector<std::string> labels;
};

/// Tab-separated parsers; malformed rows raise InputError with "path:line".
StsDataset parse_sts(const std::filesystem::path& path);
PairDataset parse_pairs(const std::filesystem::path& path);
ClassificationDataset parse_classification(const std::filesystem::path& path);

struct MetricRow {
    std::size_t dim = 0;
    double value = 0.0;
    std::optional<double> threshold;  // pair classification only

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct EvalReport {
    std::string dataset;
    std::string task;    // "sts", "pairs" or "classification"
    std::string metric;  // "spearman", "pair_accuracy" or "probe_f1"
    std::string checkpoint;
    std::uint64_t seed = 0;
    std::vector<MetricRow> rows;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

struct EvalInputs {
    std::optional<std::filesystem::path> sts;
    std::optional<std::filesystem::path> pairs;
    std::optional<std::filesystem::path> cls_train;
    std::optional<std::filesystem::path> cls_test;
};

/// One report per supplied dataset, one row per dim. Each dim must be a nested dim.
std::vector<EvalReport> evaluate(const Encoder& encoder, const Vocabulary& vocabulary, const EvalInputs& inputs,
                                 std::span<const std::size_t> dims, const std::string& checkpoint_id,
                                 std::uint64_t seed = 0);

/// "dim,<metric>..." table with one column per report.
std::string reports_csv(std::span<const EvalReport> reports);
/// "# <dataset> <metric>" blocks of "dim value" lines.
std::string reports_plot_data(std::span<const EvalReport> reports);

}  // namespace mipic::eval
