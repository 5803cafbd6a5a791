#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "mipic/config.hpp"
#include "mipic/matrix.hpp"
#include "mipic/objective.hpp"
#include "mipic/vocab.hpp"

namespace mipic {

/// AdamW moments, aligned with MipicModel::parameters().
struct OptimizerState {
    std::size_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

struct LoadedCheckpoint {
    ModelConfig config;
    Vocabulary vocabulary;
    std::unique_ptr<MipicModel> model;
    std::optional<OptimizerState> optimizer;
};

inline constexpr int kCheckpointVersion = 1;

/// Writes every parameter (encoder, SIA projections, chain projectors) with the
/// config and vocabulary. Optimizer moments are written only when given.
void save_checkpoint(const std::filesystem::path& path, const MipicModel& model, const Vocabulary& vocabulary,
                     const OptimizerState* optimizer = nullptr);

/// Throws IoError if unreadable, InputError on a corrupt file or version
/// mismatch, and ConfigError listing field differences when `expected` is
/// given and differs from the stored config.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace mipic
