#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mipic::synth {

struct SynthOptions {
    std::uint64_t seed = 0;
    std::size_t train_per_template = 13;
    std::size_t sts_pairs_per_grade = 100;
    std::size_t pair_examples_per_label = 100;
    std::size_t cls_train_per_family = 20;
    std::size_t cls_test_per_family = 10;
};

struct GeneratedSentence {
    std::string text;
    std::size_t family = 0;
    std::size_t template_id = 0;  // global, family * templates_per_family + local
};

struct ScoredPair {
    GeneratedSentence first;
    GeneratedSentence second;
    double score = 0.0;  // 1.0 paraphrase, 0.5 same family, 0.0 unrelated
};

struct LabeledPair {
    GeneratedSentence first;
    GeneratedSentence second;
    int label = 0;  // 1 paraphrase, 0 different family
};

struct Suite {
    std::vector<GeneratedSentence> train;
    std::vector<ScoredPair> sts;
    std::vector<LabeledPair> pairs;
    std::vector<GeneratedSentence> cls_train;
    std::vector<GeneratedSentence> cls_test;
};

std::size_t family_count();
std::size_t templates_per_family();
const std::string& family_name(std::size_t family);
/// Every word any template or filler can produce.
std::vector<std::string> vocabulary();

Suite generate(const SynthOptions& options);

/// Writes train.txt, sts.tsv, pairs.tsv, cls_train.tsv and cls_test.tsv.
/// Returns the written paths.
std::vector<std::filesystem::path> write_suite(const Suite& suite, const std::filesystem::path& directory);

}  // namespace mipic::synth
