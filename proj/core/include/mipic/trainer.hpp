#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mipic/checkpoint.hpp"
#include "mipic/config.hpp"
#include "mipic/objective.hpp"
#include "mipic/vocab.hpp"

namespace mipic {

enum class Schedule { Constant, Cosine };

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    std::size_t epochs = 10;
    /// When nonzero, training stops after this many steps (epochs are repeated as needed).
    std::size_t max_steps = 0;
    std::size_t batch_size = 16;
    Schedule schedule = Schedule::Cosine;
    /// Shuffling and dropout. Parameter initialisation uses ModelConfig::seed.
    std::uint64_t seed = 0;
    AblationFlags ablation;
    std::string corpus;
    /// Write a checkpoint every this many steps; 0 disables periodic checkpoints.
    std::size_t checkpoint_every = 0;
    bool save_optimizer_state = false;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Contents of a run config file: {"model": {...}, "train": {...}}.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

struct Corpus {
    Vocabulary vocabulary;
    std::vector<std::string> sentences;
    std::vector<std::vector<TokenId>> sequences;  // CLS-prefixed, at most max_len ids
};

/// One sentence per line; blank lines are skipped. The vocabulary is built
/// from the file unless one is supplied.
Corpus load_corpus(const std::filesystem::path& path, std::size_t max_len,
                   const std::optional<Vocabulary>& vocabulary = std::nullopt);

/// Decoupled weight decay Adam. Decay applies to matrices only (rows > 1),
/// leaving biases and layer-norm vectors undecayed.
class AdamW {
public:
    AdamW(ParameterList params, const TrainConfig& config);

    void step(double learning_rate);
    std::size_t steps() const noexcept { return state_.step; }
    const OptimizerState& state() const noexcept { return state_; }
    void restore(OptimizerState state);

private:
    ParameterList params_;
    double beta1_, beta2_, epsilon_, weight_decay_;
    OptimizerState state_;
};

double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps);
std::size_t total_steps(const TrainConfig& config, std::size_t corpus_size);
/// Dropout seed of one view at one step; a pure function of its arguments.
std::uint64_t view_seed(std::uint64_t seed, std::size_t step, unsigned view);

struct TrainResult {
    std::vector<LossBreakdown> trace;
    std::vector<double> step_seconds;
    std::size_t steps = 0;
};

struct TrainOutputs {
    /// Receives trace.jsonl, timing.jsonl, periodic checkpoints and model.json.
    std::optional<std::filesystem::path> directory;
};

/// Runs the optimisation loop in place on `model`. Throws NumericalError naming
/// the first non-finite loss term.
TrainResult train(MipicModel& model, const Corpus& corpus, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

/// First non-finite component of a breakdown ("L_simcse[d=4]", "L_att", ...), or empty.
std::string first_non_finite(const LossBreakdown& b);

}  // namespace mipic
