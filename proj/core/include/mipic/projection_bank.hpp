#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "mipic/autograd.hpp"
#include "mipic/config.hpp"
#include "mipic/encoder.hpp"

namespace mipic {

/// φ: R^{d_in} -> R^{d_out}, linear -> GELU -> linear with hidden width max(d_in, d_out).
struct ChainProjector {
    std::size_t step = 0;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Node w1, b1, w2, b2;

    Node apply(const Node& z) const;
};

/// Training-only auxiliary parameters: one up-projection P (d_i x D) per
/// (SIA layer, aligned prefix) pair and one chain projector per adjacent
/// checkpoint pair. None of these are used at inference time.
class ProjectionBank {
public:
    ProjectionBank() = default;
    ProjectionBank(const ModelConfig& config, std::mt19937_64& init_rng);

    /// P for (layer, prefix index i); throws ConfigError if absent.
    const Node& sia_projection(std::size_t layer, std::size_t prefix) const;
    const std::vector<ChainProjector>& chain_projectors() const noexcept { return projectors_; }

    ParameterList sia_parameters() const;
    ParameterList pic_parameters() const;
    ParameterList parameters() const;

private:
    std::map<std::pair<std::size_t, std::size_t>, Node> sia_;
    std::vector<ChainProjector> projectors_;
};

}  // namespace mipic
