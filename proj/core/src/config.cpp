#include "mipic/config.hpp"

#include <algorithm>
#include <sstream>

#include "mipic/errors.hpp"
#include "mipic/json_util.hpp"

namespace mipic {

namespace {

template <typename T>
bool strictly_increasing(const std::vector<T>& v) {
    return std::adjacent_find(v.begin(), v.end(), [](const T& a, const T& b) { return !(a < b); }) == v.end();
}

void check(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

void ModelConfig::validate() const {
    check(hidden_dim > 0, "hidden_dim must be positive");
    check(num_layers > 0, "num_layers must be positive");
    check(num_heads > 0 && hidden_dim % num_heads == 0, "num_heads must divide hidden_dim");
    check(ffn_dim > 0, "ffn_dim must be positive");
    check(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must lie in [0, 1)");
    check(max_len >= 2, "max_len must leave room for CLS and one token");

    check(!nested_dims.empty(), "nested_dims must not be empty");
    check(nested_dims.front() > 0, "nested_dims must be positive");
    check(strictly_increasing(nested_dims), "nested_dims must be strictly increasing");
    check(nested_dims.back() == hidden_dim, "nested_dims must end at hidden_dim");
    check(mrl_weights.empty() || mrl_weights.size() == nested_dims.size(),
          "mrl_weights must be empty or match nested_dims");
    check(std::all_of(mrl_weights.begin(), mrl_weights.end(), [](double w) { return w >= 0.0; }),
          "mrl_weights must be non-negative");

    check(strictly_increasing(sia_layers), "sia_layers must be strictly increasing");
    for (auto l : sia_layers) check(l >= 1 && l <= num_layers, "sia_layers entries must lie in [1, num_layers]");

    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        const auto& c = checkpoints[i];
        check(c.layer >= 1 && c.layer <= num_layers, "checkpoint layer must lie in [1, num_layers]");
        check(std::find(nested_dims.begin(), nested_dims.end(), c.dim) != nested_dims.end(),
              "checkpoint dim " + std::to_string(c.dim) + " is not a nested dim");
        if (i > 0) {
            check(checkpoints[i - 1].layer < c.layer, "checkpoint layers must be strictly increasing");
            check(checkpoints[i - 1].dim < c.dim, "checkpoint dims must be strictly increasing");
        }
    }

    check(gamma_schedule.size() + 1 == nested_dims.size(),
          "gamma_schedule needs one ratio per aligned prefix (nested_dims.size() - 1)");
    for (std::size_t i = 0; i < gamma_schedule.size(); ++i) {
        check(gamma_schedule[i] > 0.0 && gamma_schedule[i] <= 1.0, "gamma_schedule entries must lie in (0, 1]");
        if (i > 0) check(gamma_schedule[i - 1] <= gamma_schedule[i], "gamma_schedule must be non-decreasing");
    }

    check(tau_att > 0.0 && tau_nce > 0.0 && tau_sim > 0.0, "temperatures must be positive");
    check(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
}

std::size_t ModelConfig::prefix_index(std::size_t dim) const {
    auto it = std::find(nested_dims.begin(), nested_dims.end(), dim);
    if (it == nested_dims.end()) throw ConfigError("dim " + std::to_string(dim) + " is not a nested dim");
    return static_cast<std::size_t>(it - nested_dims.begin());
}

ModelConfig desk_model_config() { return ModelConfig{}; }

ModelConfig tiny_model_config() {
    ModelConfig c;
    c.vocab_size = 12;
    c.hidden_dim = 8;
    c.num_layers = 2;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.dropout_p = 0.1;
    c.max_len = 7;
    c.nested_dims = {2, 4, 8};
    c.sia_layers = {1, 2};
    c.checkpoints = {{1, 2}, {2, 8}};
    c.gamma_schedule = {0.4, 0.7};
    c.k_min = 2;
    return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    nlohmann::json cps = nlohmann::json::array();
    for (const auto& cp : c.checkpoints) cps.push_back({{"layer", cp.layer}, {"dim", cp.dim}});
    j = nlohmann::json{{"vocab_size", c.vocab_size},
                       {"hidden_dim", c.hidden_dim},
                       {"num_layers", c.num_layers},
                       {"num_heads", c.num_heads},
                       {"ffn_dim", c.ffn_dim},
                       {"dropout_p", c.dropout_p},
                       {"max_len", c.max_len},
                       {"nested_dims", c.nested_dims},
                       {"mrl_weights", c.mrl_weights},
                       {"sia_layers", c.sia_layers},
                       {"checkpoints", cps},
                       {"gamma_schedule", c.gamma_schedule},
                       {"k_min", c.k_min},
                       {"tau_att", c.tau_att},
                       {"tau_nce", c.tau_nce},
                       {"tau_sim", c.tau_sim},
                       {"alpha", c.alpha},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    using json_util::read_if_present;
    constexpr std::string_view where = "model";
    json_util::reject_unknown_keys(
        j,
        {"vocab_size", "hidden_dim", "num_layers", "num_heads", "ffn_dim", "dropout_p", "max_len", "nested_dims",
         "mrl_weights", "sia_layers", "checkpoints", "gamma_schedule", "k_min", "tau_att", "tau_nce", "tau_sim",
         "alpha", "seed"},
        where);
    read_if_present(j, "vocab_size", c.vocab_size, where);
    read_if_present(j, "hidden_dim", c.hidden_dim, where);
    read_if_present(j, "num_layers", c.num_layers, where);
    read_if_present(j, "num_heads", c.num_heads, where);
    read_if_present(j, "ffn_dim", c.ffn_dim, where);
    read_if_present(j, "dropout_p", c.dropout_p, where);
    read_if_present(j, "max_len", c.max_len, where);
    read_if_present(j, "nested_dims", c.nested_dims, where);
    read_if_present(j, "mrl_weights", c.mrl_weights, where);
    read_if_present(j, "sia_layers", c.sia_layers, where);
    read_if_present(j, "gamma_schedule", c.gamma_schedule, where);
    read_if_present(j, "k_min", c.k_min, where);
    read_if_present(j, "tau_att", c.tau_att, where);
    read_if_present(j, "tau_nce", c.tau_nce, where);
    read_if_present(j, "tau_sim", c.tau_sim, where);
    read_if_present(j, "alpha", c.alpha, where);
    read_if_present(j, "seed", c.seed, where);
    if (auto it = j.find("checkpoints"); it != j.end()) {
        if (!it->is_array()) throw ConfigError("model.checkpoints: expected an array");
        c.checkpoints.clear();
        for (const auto& cp : *it) {
            json_util::reject_unknown_keys(cp, {"layer", "dim"}, "model.checkpoints[]");
            if (!cp.contains("layer") || !cp.contains("dim")) {
                throw ConfigError("model.checkpoints[]: both 'layer' and 'dim' are required");
            }
            Checkpoint parsed;
            read_if_present(cp, "layer", parsed.layer, "model.checkpoints[]");
            read_if_present(cp, "dim", parsed.dim, "model.checkpoints[]");
            c.checkpoints.push_back(parsed);
        }
    }
}

std::vector<std::string> diff(const ModelConfig& expected, const ModelConfig& actual) {
    const nlohmann::json a = expected;
    const nlohmann::json b = actual;
    std::vector<std::string> out;
    for (const auto& [key, value] : a.items()) {
        if (b.at(key) != value) out.push_back(key + ": " + value.dump() + " != " + b.at(key).dump());
    }
    return out;
}

}  // namespace mipic
