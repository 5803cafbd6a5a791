#pragma once

// Chained InfoNCE between truncated CLS embeddings at consecutive
// (layer, width) checkpoints.

#include <cstddef>
#include <vector>

#include "mipic/autograd.hpp"
#include "mipic/config.hpp"
#include "mipic/encoder.hpp"
#include "mipic/projection_bank.hpp"

namespace mipic::pic {

/// -mean_b log softmax_b'(cos(a_b, p_b') / tau)[b]: row b of `anchors` is positive
/// with row b of `positives` and negative with every other row. Zero when N = 1.
Node info_nce(const Node& anchors, const Node& positives, double tau);

/// z_i = first d_i columns of the CLS state at layer l_i, one per checkpoint.
std::vector<Node> checkpoint_embeddings(const LayerStates& states, const std::vector<Checkpoint>& checkpoints);

/// InfoNCE between phi(z_lo) and z_hi; gradient reaches both checkpoints.
Node chain_infonce(const Node& z_lo, const Node& z_hi, const ChainProjector& phi, double tau_nce);

struct ChainLoss {
    Node total;
    std::vector<double> steps;  // L_chain per adjacent pair
};

ChainLoss pic_total(const LayerStates& states, const std::vector<Checkpoint>& checkpoints,
                    const std::vector<ChainProjector>& projectors, double tau_nce);

}  // namespace mipic::pic
