#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "mipic/autograd.hpp"
#include "mipic/config.hpp"
#include "mipic/encoder.hpp"
#include "mipic/projection_bank.hpp"
#include "mipic/sia.hpp"

namespace mipic {

struct AblationFlags {
    bool no_sia = false;
    bool no_pic = false;
    /// Plain MRL: equivalent to alpha = 1 regardless of the configured alpha.
    bool mrl_only = false;

    bool sia_enabled() const { return !no_sia && !mrl_only; }
    bool pic_enabled() const { return !no_pic && !mrl_only; }
    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Per-step loss values. Unused components stay at zero.
struct LossBreakdown {
    std::size_t step = 0;
    double learning_rate = 0.0;  // set by the trainer
    double alpha = 0.0;
    std::vector<std::size_t> dims;
    std::vector<double> simcse;  // unweighted, one per nested dim
    double mrl = 0.0;
    std::vector<sia::TermValue> sia_terms;
    double att = 0.0;
    double cka = 0.0;
    double sia = 0.0;
    std::vector<double> chain;
    double pic = 0.0;
    double total = 0.0;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);
void from_json(const nlohmann::json& j, LossBreakdown& b);

/// Unsupervised SimCSE: in-batch cosine softmax with view-aligned positives.
Node simcse_loss(const Node& view1, const Node& view2, double tau_sim);

struct MrlLoss {
    Node total;
    std::vector<double> per_dim;
};

/// Σ_d w_d · SimCSE(prefix_d(view1), prefix_d(view2)); empty weights mean all ones.
MrlLoss mrl_loss(const Node& full_view1, const Node& full_view2, const std::vector<std::size_t>& dims,
                 double tau_sim, const std::vector<double>& weights = {});

/// Encoder plus the training-only projection bank, initialised from config.seed.
class MipicModel {
public:
    explicit MipicModel(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }
    const Encoder& encoder() const noexcept { return encoder_; }
    const ProjectionBank& bank() const noexcept { return bank_; }
    /// Encoder parameters followed by projection parameters.
    ParameterList parameters() const;

private:
    ModelConfig config_;
    std::mt19937_64 init_rng_;
    Encoder encoder_;
    ProjectionBank bank_;
};

struct ViewSeeds {
    std::uint64_t first = 0;
    std::uint64_t second = 1;
};

struct ObjectiveTerms {
    Node total;
    Node mrl;
    // Present only when the matching component is enabled.
    std::optional<Node> att;
    std::optional<Node> cka;
    std::optional<Node> sia;
    std::optional<Node> pic;
    LossBreakdown breakdown;
    std::vector<sia::LayerTeacher> teachers;
};

/// alpha · L_MRL + (1 − alpha)(L_SIA + L_PIC). SIA and PIC read view 1 only and
/// are not built when disabled or when the effective alpha is 1. `frozen`
/// replaces the SIA teachers (one per SIA layer).
ObjectiveTerms mipic_loss(const TokenBatch& batch, const MipicModel& model, const AblationFlags& flags,
                          const ViewSeeds& seeds, const std::vector<sia::LayerTeacher>* frozen = nullptr);

}  // namespace mipic
