#include "mipic/encoder.hpp"

#include <cmath>

#include "mipic/errors.hpp"

namespace mipic {

std::size_t parameter_count(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.node.value().size();
    return n;
}

void zero_grads(const ParameterList& params) {
    for (const auto& p : params) p.node.zero_grad();
}

TokenBatch TokenBatch::from_sequences(std::span<const std::vector<TokenId>> sequences) {
    if (sequences.empty()) throw InputError("empty batch");
    TokenBatch batch;
    batch.batch_size = sequences.size();
    for (const auto& s : sequences) {
        if (s.empty() || s.front() != Vocabulary::kCls) throw InputError("every sequence must start with CLS");
        batch.seq_len = std::max(batch.seq_len, s.size());
    }
    batch.token_ids.assign(batch.batch_size * batch.seq_len, Vocabulary::kPad);
    batch.attn_mask.assign(batch.batch_size * batch.seq_len, 0);
    for (std::size_t b = 0; b < sequences.size(); ++b) {
        for (std::size_t t = 0; t < sequences[b].size(); ++t) {
            batch.token_ids[b * batch.seq_len + t] = sequences[b][t];
            batch.attn_mask[b * batch.seq_len + t] = 1;
        }
        batch.effective_lengths.push_back(sequences[b].size());
    }
    return batch;
}

const Node& LayerStates::layer(std::size_t l) const {
    if (l >= layers.size()) {
        throw ConfigError("layer " + std::to_string(l) + " out of range (encoder has " +
                          std::to_string(num_layers()) + " layers)");
    }
    return layers[l];
}

Node LayerStates::sentence(std::size_t l, std::size_t b) const {
    if (b >= batch_size) throw InputError("sentence index out of range");
    return slice_rows(layer(l), b * seq_len, effective_lengths[b]);
}

Node pool_cls(const LayerStates& states, std::size_t layer) {
    std::vector<std::size_t> rows(states.batch_size);
    for (std::size_t b = 0; b < states.batch_size; ++b) rows[b] = b * states.seq_len;
    return gather_rows(states.layer(layer), rows);
}

Matrix init_linear(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    Matrix m(fan_in, fan_out);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

namespace {

Matrix init_embedding(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

Node linear(const Node& x, const Node& w, const Node& b) { return add_row(matmul(x, w), b); }

}  // namespace

Encoder::Encoder(const ModelConfig& config, std::mt19937_64& init_rng) : config_(config) {
    config_.validate();
    if (config_.vocab_size <= Vocabulary::kNumSpecial) throw ConfigError("vocab_size must exceed the special tokens");
    const std::size_t d = config_.hidden_dim, f = config_.ffn_dim;
    token_embedding_ = Node::parameter(init_embedding(config_.vocab_size, d, init_rng));
    position_embedding_ = Node::parameter(init_embedding(config_.max_len, d, init_rng));
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        Block b;
        b.ln1_gain = Node::parameter(Matrix(1, d, 1.0));
        b.ln1_bias = Node::parameter(Matrix(1, d));
        b.wq = Node::parameter(init_linear(d, d, init_rng));
        b.bq = Node::parameter(Matrix(1, d));
        b.wk = Node::parameter(init_linear(d, d, init_rng));
        b.bk = Node::parameter(Matrix(1, d));
        b.wv = Node::parameter(init_linear(d, d, init_rng));
        b.bv = Node::parameter(Matrix(1, d));
        b.wo = Node::parameter(init_linear(d, d, init_rng));
        b.bo = Node::parameter(Matrix(1, d));
        b.ln2_gain = Node::parameter(Matrix(1, d, 1.0));
        b.ln2_bias = Node::parameter(Matrix(1, d));
        b.w1 = Node::parameter(init_linear(d, f, init_rng));
        b.b1 = Node::parameter(Matrix(1, f));
        b.w2 = Node::parameter(init_linear(f, d, init_rng));
        b.b2 = Node::parameter(Matrix(1, d));
        blocks_.push_back(std::move(b));
    }
}

ParameterList Encoder::parameters() const {
    ParameterList out{{"embed.token", token_embedding_}, {"embed.position", position_embedding_}};
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const auto& b = blocks_[l];
        const std::string p = "layer" + std::to_string(l + 1) + ".";
        out.push_back({p + "ln1.gain", b.ln1_gain});
        out.push_back({p + "ln1.bias", b.ln1_bias});
        out.push_back({p + "attn.wq", b.wq});
        out.push_back({p + "attn.bq", b.bq});
        out.push_back({p + "attn.wk", b.wk});
        out.push_back({p + "attn.bk", b.bk});
        out.push_back({p + "attn.wv", b.wv});
        out.push_back({p + "attn.bv", b.bv});
        out.push_back({p + "attn.wo", b.wo});
        out.push_back({p + "attn.bo", b.bo});
        out.push_back({p + "ln2.gain", b.ln2_gain});
        out.push_back({p + "ln2.bias", b.ln2_bias});
        out.push_back({p + "ffn.w1", b.w1});
        out.push_back({p + "ffn.b1", b.b1});
        out.push_back({p + "ffn.w2", b.w2});
        out.push_back({p + "ffn.b2", b.b2});
    }
    return out;
}

std::size_t Encoder::parameter_count_for(const ModelConfig& c) {
    const std::size_t d = c.hidden_dim, f = c.ffn_dim;
    const std::size_t per_block = 4 * d            // two layer norms
                                  + 4 * (d * d + d)  // q, k, v, o
                                  + (d * f + f) + (f * d + d);
    return (c.vocab_size + c.max_len) * d + c.num_layers * per_block;
}

void Encoder::validate(const TokenBatch& batch) const {
    if (batch.batch_size == 0 || batch.seq_len == 0) throw InputError("empty batch");
    if (batch.seq_len > config_.max_len) {
        throw InputError("batch length " + std::to_string(batch.seq_len) + " exceeds max_len " +
                         std::to_string(config_.max_len));
    }
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
        if (batch.effective_lengths[b] < 1 || batch.id(b, 0) != Vocabulary::kCls || batch.mask_row(b)[0] == 0) {
            throw InputError("row " + std::to_string(b) + " must start with an unmasked CLS token");
        }
    }
    for (TokenId id : batch.token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(config_.vocab_size));
        }
    }
}

LayerStates Encoder::encode(const TokenBatch& batch, std::uint64_t view_seed, bool record_attention) const {
    return run(batch, config_.dropout_p, view_seed, record_attention);
}

LayerStates Encoder::encode_inference(const TokenBatch& batch, bool record_attention) const {
    return run(batch, 0.0, 0, record_attention);
}

Node Encoder::attention(const Node& x, const Block& block, const TokenBatch& batch,
                        std::vector<Matrix>* record) const {
    const std::size_t heads = config_.num_heads;
    const std::size_t head_dim = config_.hidden_dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const Node q = linear(x, block.wq, block.bq);
    const Node k = linear(x, block.wk, block.bk);
    const Node v = linear(x, block.wv, block.bv);
    const std::size_t t = batch.seq_len;

    std::vector<Node> sentences;
    sentences.reserve(batch.batch_size);
    std::vector<Node> head_out(heads);
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
        const Node qb = slice_rows(q, b * t, t);
        const Node kbt = transpose(slice_rows(k, b * t, t));
        const Node vb = slice_rows(v, b * t, t);
        for (std::size_t h = 0; h < heads; ++h) {
            const Node scores = scale(matmul(slice_cols(qb, h * head_dim, head_dim),
                                             slice_rows(kbt, h * head_dim, head_dim)),
                                      inv_sqrt);
            const Node probs = softmax_rows(scores, 1.0, batch.mask_row(b));
            if (record) record->push_back(probs.value());
            head_out[h] = matmul(probs, slice_cols(vb, h * head_dim, head_dim));
        }
        sentences.push_back(heads == 1 ? head_out[0] : concat_cols(head_out));
    }
    const Node merged = sentences.size() == 1 ? sentences[0] : concat_rows(sentences);
    return linear(merged, block.wo, block.bo);
}

LayerStates Encoder::run(const TokenBatch& batch, double dropout_p, std::uint64_t view_seed,
                         bool record_attention) const {
    validate(batch);
    std::mt19937_64 rng(view_seed);

    const std::size_t n = batch.batch_size * batch.seq_len;
    std::vector<std::size_t> token_rows(n), position_rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        token_rows[i] = static_cast<std::size_t>(batch.token_ids[i]);
        position_rows[i] = i % batch.seq_len;
    }
    Node x = add(gather_rows(token_embedding_, token_rows), gather_rows(position_embedding_, position_rows));
    x = dropout(x, dropout_p, rng);

    LayerStates states;
    states.batch_size = batch.batch_size;
    states.seq_len = batch.seq_len;
    states.effective_lengths = batch.effective_lengths;
    states.layers.reserve(blocks_.size() + 1);
    states.layers.push_back(x);
    if (record_attention) states.attention.resize(blocks_.size());

    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const Block& blk = blocks_[l];
        const Node attn =
            attention(layer_norm(x, blk.ln1_gain, blk.ln1_bias), blk, batch,
                      record_attention ? &states.attention[l] : nullptr);
        x = add(x, dropout(attn, dropout_p, rng));
        const Node hidden = gelu(linear(layer_norm(x, blk.ln2_gain, blk.ln2_bias), blk.w1, blk.b1));
        x = add(x, dropout(linear(hidden, blk.w2, blk.b2), dropout_p, rng));
        states.layers.push_back(x);
    }
    return states;
}

}  // namespace mipic
