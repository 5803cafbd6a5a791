#include "mipic/pic.hpp"

#include "mipic/errors.hpp"

namespace mipic::pic {

Node info_nce(const Node& anchors, const Node& positives, double tau) {
    if (!anchors.value().same_shape(positives.value())) {
        throw DimensionError("info_nce: shape mismatch " + anchors.value().shape_str() + " vs " +
                             positives.value().shape_str());
    }
    if (anchors.rows() == 0) throw DimensionError("info_nce: empty batch");
    if (!(tau > 0.0)) throw ConfigError("info_nce: temperature must be positive");
    const std::size_t n = anchors.rows();
    const Node sims = matmul(l2_normalize_rows(anchors), transpose(l2_normalize_rows(positives)));
    const Node log_p = log_softmax_rows(sims, tau);
    const Node diag = sum(hadamard(log_p, Node::constant(Matrix::identity(n))));
    return scale(diag, -1.0 / static_cast<double>(n));
}

std::vector<Node> checkpoint_embeddings(const LayerStates& states, const std::vector<Checkpoint>& checkpoints) {
    std::vector<Node> out;
    out.reserve(checkpoints.size());
    for (const auto& c : checkpoints) {
        if (c.layer > states.num_layers()) {
            throw ConfigError("checkpoint layer " + std::to_string(c.layer) + " exceeds encoder depth " +
                              std::to_string(states.num_layers()));
        }
        const Node cls = pool_cls(states, c.layer);
        if (c.dim == 0 || c.dim > cls.cols()) {
            throw ConfigError("checkpoint width " + std::to_string(c.dim) + " outside [1, " +
                              std::to_string(cls.cols()) + "]");
        }
        out.push_back(prefix_cols(cls, c.dim));
    }
    return out;
}

Node chain_infonce(const Node& z_lo, const Node& z_hi, const ChainProjector& phi, double tau_nce) {
    if (z_lo.cols() != phi.in_dim || z_hi.cols() != phi.out_dim) {
        throw DimensionError("chain_infonce: projector " + std::to_string(phi.in_dim) + "->" +
                             std::to_string(phi.out_dim) + " does not fit " + z_lo.value().shape_str() + " -> " +
                             z_hi.value().shape_str());
    }
    return info_nce(phi.apply(z_lo), z_hi, tau_nce);
}

ChainLoss pic_total(const LayerStates& states, const std::vector<Checkpoint>& checkpoints,
                    const std::vector<ChainProjector>& projectors, double tau_nce) {
    if (checkpoints.size() < 2) throw ConfigError("PIC needs at least two checkpoints");
    if (projectors.size() != checkpoints.size() - 1) {
        throw ConfigError("PIC: expected " + std::to_string(checkpoints.size() - 1) + " projectors, got " +
                          std::to_string(projectors.size()));
    }
    const auto z = checkpoint_embeddings(states, checkpoints);
    ChainLoss out;
    std::vector<Node> terms;
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
        terms.push_back(chain_infonce(z[i], z[i + 1], projectors[i], tau_nce));
        out.steps.push_back(terms.back().item());
    }
    out.total = terms.size() == 1 ? terms[0] : add_n(terms);
    return out;
}

}  // namespace mipic::pic
