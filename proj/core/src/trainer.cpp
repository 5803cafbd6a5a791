#include "mipic/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mipic/errors.hpp"
#include "mipic/json_util.hpp"

namespace mipic {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (epochs == 0 && max_steps == 0) throw ConfigError("either epochs or max_steps must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},
         {"betas", {c.beta1, c.beta2}},
         {"epsilon", c.epsilon},
         {"weight_decay", c.weight_decay},
         {"epochs", c.epochs},
         {"max_steps", c.max_steps},
         {"batch_size", c.batch_size},
         {"schedule", c.schedule == Schedule::Cosine ? "cosine" : "constant"},
         {"seed", c.seed},
         {"no_sia", c.ablation.no_sia},
         {"no_pic", c.ablation.no_pic},
         {"mrl_only", c.ablation.mrl_only},
         {"corpus", c.corpus},
         {"checkpoint_every", c.checkpoint_every},
         {"save_optimizer_state", c.save_optimizer_state}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    constexpr std::string_view where = "train";
    json_util::reject_unknown_keys(j,
                                   {"learning_rate", "betas", "epsilon", "weight_decay", "epochs", "max_steps",
                                    "batch_size", "schedule", "seed", "no_sia", "no_pic", "mrl_only", "corpus",
                                    "checkpoint_every", "save_optimizer_state"},
                                   where);
    using json_util::read_if_present;
    read_if_present(j, "learning_rate", c.learning_rate, where);
    if (j.contains("betas")) {
        std::vector<double> betas;
        read_if_present(j, "betas", betas, where);
        if (betas.size() != 2) throw ConfigError("train.betas: expected two values");
        c.beta1 = betas[0];
        c.beta2 = betas[1];
    }
    read_if_present(j, "epsilon", c.epsilon, where);
    read_if_present(j, "weight_decay", c.weight_decay, where);
    read_if_present(j, "epochs", c.epochs, where);
    read_if_present(j, "max_steps", c.max_steps, where);
    read_if_present(j, "batch_size", c.batch_size, where);
    if (j.contains("schedule")) {
        std::string s;
        read_if_present(j, "schedule", s, where);
        if (s == "cosine") {
            c.schedule = Schedule::Cosine;
        } else if (s == "constant") {
            c.schedule = Schedule::Constant;
        } else {
            throw ConfigError("train.schedule: expected 'cosine' or 'constant', got '" + s + "'");
        }
    }
    read_if_present(j, "seed", c.seed, where);
    read_if_present(j, "no_sia", c.ablation.no_sia, where);
    read_if_present(j, "no_pic", c.ablation.no_pic, where);
    read_if_present(j, "mrl_only", c.ablation.mrl_only, where);
    read_if_present(j, "corpus", c.corpus, where);
    read_if_present(j, "checkpoint_every", c.checkpoint_every, where);
    read_if_present(j, "save_optimizer_state", c.save_optimizer_state, where);
}

void to_json(nlohmann::json& j, const RunConfig& c) { j = {{"model", c.model}, {"train", c.train}}; }

void from_json(const nlohmann::json& j, RunConfig& c) {
    json_util::reject_unknown_keys(j, {"model", "train"}, "config");
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return j.get<RunConfig>();
}

Corpus load_corpus(const std::filesystem::path& path, std::size_t max_len, const std::optional<Vocabulary>& vocabulary) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus " + path.string());
    Corpus out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (tokenize(line).empty()) continue;
        out.sentences.push_back(line);
    }
    if (out.sentences.empty()) throw InputError("corpus " + path.string() + " has no sentences");
    out.vocabulary = vocabulary ? *vocabulary : Vocabulary::build(out.sentences);
    for (const auto& s : out.sentences) out.sequences.push_back(out.vocabulary.encode(s, max_len));
    return out;
}

AdamW::AdamW(ParameterList params, const TrainConfig& config)
    : params_(std::move(params)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.epsilon),
      weight_decay_(config.weight_decay) {
    for (const auto& p : params_) {
        state_.m.emplace_back(p.node.rows(), p.node.cols());
        state_.v.emplace_back(p.node.rows(), p.node.cols());
    }
}

void AdamW::restore(OptimizerState state) {
    if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
        throw ConfigError("optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!state.m[i].same_shape(params_[i].node.value()) || !state.v[i].same_shape(params_[i].node.value())) {
            throw ConfigError("optimizer state shape mismatch for " + params_[i].name);
        }
    }
    state_ = std::move(state);
}

void AdamW::step(double lr) {
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Node node = params_[i].node;
        auto w = node.mutable_value().data();
        const auto g = node.grad().data();
        auto m = state_.m[i].data();
        auto v = state_.v[i].data();
        const double decay = node.rows() > 1 ? weight_decay_ : 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon_);
            w[k] -= lr * (update + decay * w[k]);
        }
    }
}

double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total) {
    if (config.schedule == Schedule::Constant || total == 0) return config.learning_rate;
    constexpr double kPi = 3.14159265358979323846;
    const double progress = static_cast<double>(step) / static_cast<double>(total);
    return config.learning_rate * 0.5 * (1.0 + std::cos(kPi * progress));
}

std::size_t total_steps(const TrainConfig& config, std::size_t corpus_size) {
    if (config.max_steps > 0) return config.max_steps;
    const std::size_t per_epoch = (corpus_size + config.batch_size - 1) / config.batch_size;
    return per_epoch * config.epochs;
}

std::uint64_t view_seed(std::uint64_t seed, std::size_t step, unsigned view) {
    return splitmix64(splitmix64(seed) ^ splitmix64((static_cast<std::uint64_t>(step) << 1) | view));
}

std::string first_non_finite(const LossBreakdown& b) {
    for (std::size_t i = 0; i < b.simcse.size(); ++i) {
        if (!std::isfinite(b.simcse[i])) return "L_simcse[d=" + std::to_string(b.dims.at(i)) + "]";
    }
    if (!std::isfinite(b.mrl)) return "L_MRL";
    for (const auto& t : b.sia_terms) {
        if (!std::isfinite(t.att)) return "L_att[layer=" + std::to_string(t.layer) + ",d=" + std::to_string(t.dim) + "]";
        if (!std::isfinite(t.cka)) return "L_CKA[layer=" + std::to_string(t.layer) + ",d=" + std::to_string(t.dim) + "]";
    }
    if (!std::isfinite(b.sia)) return "L_SIA";
    for (std::size_t i = 0; i < b.chain.size(); ++i) {
        if (!std::isfinite(b.chain[i])) return "L_chain[" + std::to_string(i) + "]";
    }
    if (!std::isfinite(b.pic)) return "L_PIC";
    if (!std::isfinite(b.total)) return "L_MIPIC";
    return {};
}

TrainResult train(MipicModel& model, const Corpus& corpus, const TrainConfig& config, const TrainOutputs& outputs) {
    config.validate();
    if (corpus.sequences.empty()) throw InputError("cannot train on an empty corpus");
    if (corpus.vocabulary.size() != model.config().vocab_size) {
        throw ConfigError("corpus vocabulary has " + std::to_string(corpus.vocabulary.size()) +
                          " ids but the model expects " + std::to_string(model.config().vocab_size));
    }

    const ParameterList params = model.parameters();
    AdamW optimizer(params, config);
    const std::size_t n = corpus.sequences.size();
    const std::size_t steps = total_steps(config, n);

    std::ofstream trace_out, timing_out;
    if (outputs.directory) {
        std::filesystem::create_directories(*outputs.directory);
        trace_out = open_out(*outputs.directory / "trace.jsonl");
        timing_out = open_out(*outputs.directory / "timing.jsonl");
        corpus.vocabulary.save(*outputs.directory / "vocab.txt");
    }

    TrainResult result;
    std::vector<std::size_t> order(n);
    std::size_t cursor = n;  // forces a shuffle on the first step
    std::size_t epoch = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        const auto start = std::chrono::steady_clock::now();
        if (cursor >= n) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::mt19937_64 shuffle_rng(splitmix64(config.seed ^ splitmix64(0xe90c0000ULL + epoch)));
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            cursor = 0;
            ++epoch;
        }
        const std::size_t end = std::min(n, cursor + config.batch_size);
        std::vector<std::vector<TokenId>> seqs;
        for (std::size_t i = cursor; i < end; ++i) seqs.push_back(corpus.sequences[order[i]]);
        cursor = end;
        const TokenBatch batch = TokenBatch::from_sequences(seqs);

        const ViewSeeds seeds{view_seed(config.seed, step, 0), view_seed(config.seed, step, 1)};
        auto terms = mipic_loss(batch, model, config.ablation, seeds);
        LossBreakdown& b = terms.breakdown;
        b.step = step;
        b.learning_rate = learning_rate_at(config, step, steps);
        if (const auto bad = first_non_finite(b); !bad.empty()) {
            throw NumericalError("non-finite loss at step " + std::to_string(step) + ": " + bad + " is NaN or infinite");
        }
        zero_grads(params);
        backward(terms.total);
        optimizer.step(b.learning_rate);

        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (outputs.directory) {
            trace_out << nlohmann::json(b).dump() << '\n';
            timing_out << nlohmann::json{{"step", step}, {"seconds", seconds}}.dump() << '\n';
            if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
                save_checkpoint(*outputs.directory / ("checkpoint-" + std::to_string(step + 1) + ".json"), model,
                                corpus.vocabulary, config.save_optimizer_state ? &optimizer.state() : nullptr);
            }
        }
        if (step % 50 == 0 || step + 1 == steps) {
            spdlog::info("step {}/{} loss {:.5f} (mrl {:.5f} sia {:.5f} pic {:.5f}) lr {:.2e}", step + 1, steps,
                         b.total, b.mrl, b.sia, b.pic, b.learning_rate);
        }
        result.trace.push_back(std::move(b));
        result.step_seconds.push_back(seconds);
    }
    zero_grads(params);
    result.steps = steps;
    if (outputs.directory) {
        save_checkpoint(*outputs.directory / "model.json", model, corpus.vocabulary,
                        config.save_optimizer_state ? &optimizer.state() : nullptr);
        if (!trace_out || !timing_out) throw IoError("failed writing training trace");
    }
    return result;
}

}  // namespace mipic
