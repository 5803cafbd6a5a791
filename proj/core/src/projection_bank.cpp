#include "mipic/projection_bank.hpp"

#include <algorithm>
#include <string>

#include "mipic/errors.hpp"

namespace mipic {

Node ChainProjector::apply(const Node& z) const {
    return add_row(matmul(gelu(add_row(matmul(z, w1), b1)), w2), b2);
}

ProjectionBank::ProjectionBank(const ModelConfig& config, std::mt19937_64& init_rng) {
    const std::size_t d = config.hidden_dim;
    for (std::size_t layer : config.sia_layers) {
        for (std::size_t i = 0; i + 1 < config.nested_dims.size(); ++i) {
            sia_.emplace(std::pair{layer, i}, Node::parameter(init_linear(config.nested_dims[i], d, init_rng)));
        }
    }
    for (std::size_t i = 0; i + 1 < config.checkpoints.size(); ++i) {
        ChainProjector phi;
        phi.step = i;
        phi.in_dim = config.checkpoints[i].dim;
        phi.out_dim = config.checkpoints[i + 1].dim;
        const std::size_t hidden = std::max(phi.in_dim, phi.out_dim);
        phi.w1 = Node::parameter(init_linear(phi.in_dim, hidden, init_rng));
        phi.b1 = Node::parameter(Matrix(1, hidden));
        phi.w2 = Node::parameter(init_linear(hidden, phi.out_dim, init_rng));
        phi.b2 = Node::parameter(Matrix(1, phi.out_dim));
        projectors_.push_back(std::move(phi));
    }
}

const Node& ProjectionBank::sia_projection(std::size_t layer, std::size_t prefix) const {
    auto it = sia_.find({layer, prefix});
    if (it == sia_.end()) {
        throw ConfigError("no SIA projection for layer " + std::to_string(layer) + ", prefix " +
                          std::to_string(prefix));
    }
    return it->second;
}

ParameterList ProjectionBank::sia_parameters() const {
    ParameterList out;
    for (const auto& [key, node] : sia_) {
        out.push_back({"sia.P.layer" + std::to_string(key.first) + ".prefix" + std::to_string(key.second), node});
    }
    return out;
}

ParameterList ProjectionBank::pic_parameters() const {
    ParameterList out;
    for (const auto& phi : projectors_) {
        const std::string p = "pic.phi" + std::to_string(phi.step) + ".";
        out.push_back({p + "w1", phi.w1});
        out.push_back({p + "b1", phi.b1});
        out.push_back({p + "w2", phi.w2});
        out.push_back({p + "b2", phi.b2});
    }
    return out;
}

ParameterList ProjectionBank::parameters() const {
    ParameterList out = sia_parameters();
    auto pic = pic_parameters();
    out.insert(out.end(), pic.begin(), pic.end());
    return out;
}

}  // namespace mipic
