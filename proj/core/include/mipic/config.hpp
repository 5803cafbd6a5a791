#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mipic {

/// A chain supervision point: CLS state at `layer`, truncated to its first `dim` features.
struct Checkpoint {
    std::size_t layer = 0;
    std::size_t dim = 0;
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Architecture plus objective hyperparameters. Layer indices are 1-based
/// (layer 0 is the embedding output).
struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden_dim = 32;
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 64;
    double dropout_p = 0.1;
    std::size_t max_len = 32;

    /// Nested prefix widths, strictly increasing, last == hidden_dim.
    std::vector<std::size_t> nested_dims{4, 8, 16, 32};
    /// Optional per-prefix task weights; empty means the unweighted sum.
    std::vector<double> mrl_weights;
    std::vector<std::size_t> sia_layers{1, 2, 3, 4};
    std::vector<Checkpoint> checkpoints{{1, 4}, {2, 8}, {3, 16}, {4, 32}};
    /// One ratio per aligned prefix (all nested dims except the last).
    std::vector<double> gamma_schedule{0.2, 0.3, 0.4};
    std::size_t k_min = 8;

    double tau_att = 1.0;
    double tau_nce = 0.05;
    double tau_sim = 0.05;
    double alpha = 0.4;

    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;

    /// Index of `dim` within nested_dims; throws ConfigError if absent.
    std::size_t prefix_index(std::size_t dim) const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// 4 layers, D=32, dims {4,8,16,32}.
ModelConfig desk_model_config();
/// 2 layers, D=8, dims {2,4,8}; small enough for exhaustive finite differences.
ModelConfig tiny_model_config();

/// Human-readable field-level differences ("hidden_dim: 32 != 16").
std::vector<std::string> diff(const ModelConfig& expected, const ModelConfig& actual);

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace mipic
