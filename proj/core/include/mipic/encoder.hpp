#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mipic/autograd.hpp"
#include "mipic/config.hpp"
#include "mipic/vocab.hpp"

namespace mipic {

struct NamedParameter {
    std::string name;
    Node node;
};
using ParameterList = std::vector<NamedParameter>;

std::size_t parameter_count(const ParameterList& params);
void zero_grads(const ParameterList& params);

/// Padded batch of token sequences. Position 0 of every row is CLS.
struct TokenBatch {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;               // m + 1
    std::vector<TokenId> token_ids;        // batch_size x seq_len, row-major
    std::vector<std::uint8_t> attn_mask;   // 1 for real tokens, 0 for padding
    std::vector<std::size_t> effective_lengths;  // non-pad tokens per row, CLS included

    /// Pads to the longest sequence. Each sequence must start with CLS.
    static TokenBatch from_sequences(std::span<const std::vector<TokenId>> sequences);

    TokenId id(std::size_t b, std::size_t t) const { return token_ids[b * seq_len + t]; }
    ColumnMask mask_row(std::size_t b) const { return {attn_mask.data() + b * seq_len, seq_len}; }
    /// Contextual (non-CLS, non-pad) token count of row b.
    std::size_t contextual_length(std::size_t b) const { return effective_lengths[b] - 1; }
};

/// Hidden states of every layer for one batch. layers[0] is the embedding
/// output; layers[l] is the output of transformer block l. Each entry stacks
/// the batch as (batch_size * seq_len) x D.
struct LayerStates {
    std::vector<Node> layers;
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<std::size_t> effective_lengths;
    /// Filled only when requested: attention[l-1][b * heads + h] is seq_len x seq_len.
    std::vector<std::vector<Matrix>> attention;

    std::size_t num_layers() const { return layers.size() - 1; }
    const Node& layer(std::size_t l) const;
    /// Rows of sentence b at layer l, padding excluded (CLS at row 0).
    Node sentence(std::size_t l, std::size_t b) const;
};

/// CLS row of every sentence at `layer` (batch x D).
Node pool_cls(const LayerStates& states, std::size_t layer);

/// Pre-norm transformer encoder with learned absolute positions.
class Encoder {
public:
    Encoder(const ModelConfig& config, std::mt19937_64& init_rng);

    /// Training-mode forward pass; dropout masks are a pure function of view_seed.
    LayerStates encode(const TokenBatch& batch, std::uint64_t view_seed, bool record_attention = false) const;
    /// Dropout-free forward pass.
    LayerStates encode_inference(const TokenBatch& batch, bool record_attention = false) const;

    ParameterList parameters() const;
    const ModelConfig& config() const noexcept { return config_; }

    /// Exact parameter count implied by a config.
    static std::size_t parameter_count_for(const ModelConfig& config);

private:
    struct Block {
        Node ln1_gain, ln1_bias;
        Node wq, bq, wk, bk, wv, bv, wo, bo;
        Node ln2_gain, ln2_bias;
        Node w1, b1, w2, b2;
    };

    LayerStates run(const TokenBatch& batch, double dropout_p, std::uint64_t view_seed, bool record_attention) const;
    Node attention(const Node& x, const Block& block, const TokenBatch& batch, std::vector<Matrix>* record) const;
    void validate(const TokenBatch& batch) const;

    ModelConfig config_;
    Node token_embedding_;
    Node position_embedding_;
    std::vector<Block> blocks_;
};

/// Scaled-normal init (std = 1/sqrt(fan_in)) for a fan_in x fan_out map.
Matrix init_linear(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace mipic
