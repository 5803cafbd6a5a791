#pragma once

// Self-distilled alignment between each truncated prefix and the full-width
// hidden states of the same layer: CLS-anchored token-importance matching
// (KL) plus linear CKA on the teacher's top-k tokens.

#include <cstddef>
#include <span>
#include <vector>

#include "mipic/autograd.hpp"
#include "mipic/config.hpp"
#include "mipic/encoder.hpp"
#include "mipic/projection_bank.hpp"

namespace mipic::sia {

/// Distribution over the contextual tokens (CLS and padding excluded) of one sentence.
struct ImportanceDistribution {
    Node probs;      // 1 x n
    Node log_probs;  // 1 x n; finite even where probs underflow
    std::size_t source_layer = 0;
    double temperature = 1.0;

    /// Constant distribution; log_probs uses probabilities clamped at 1e-12.
    static ImportanceDistribution from_probs(const Matrix& probs, std::size_t layer = 0, double temperature = 1.0);
};

/// Detached softmax(h_CLS · h_j / sqrt(D) / tau) over the contextual rows of `sentence` (CLS at row 0).
ImportanceDistribution teacher_importance(const Matrix& sentence, double tau, std::size_t layer = 0);

/// softmax(h_CLS · Pᵀ h_j[:d] / sqrt(D) / tau) with P of shape d x D. h_CLS is the
/// detached full-width anchor; gradients reach P and the contextual rows.
ImportanceDistribution student_importance(const Node& sentence, const Node& projection, double tau,
                                          std::size_t layer = 0);
/// Same, over bare contextual rows (n x D) with an explicit 1 x D anchor.
ImportanceDistribution student_importance(const Node& context, const Matrix& cls_anchor, const Node& projection,
                                          double tau, std::size_t layer = 0);

/// KL(student ‖ teacher) with teacher probabilities clamped at 1e-12.
Node attention_kl(const ImportanceDistribution& student, const ImportanceDistribution& teacher);

/// k_i = min(m, max(k_min, ceil(gamma_i * m))) for every ratio.
std::vector<std::size_t> topk_schedule(std::size_t m_effective, std::span<const double> gamma, std::size_t k_min);

struct NestedSelection {
    std::vector<std::size_t> k_values;
    /// index_sets[i] holds the k_values[i] most important token indices, in
    /// descending importance. Every set is a prefix of the next.
    std::vector<std::vector<std::size_t>> index_sets;
};

/// Top-k sets from one descending ordering (ties: smaller index first).
NestedSelection select_topk(std::span<const double> probs, std::span<const std::size_t> k_values);

/// Frozen teacher quantities for one sentence at one layer.
struct SentenceTeacher {
    Matrix cls;  // 1 x D anchor
    ImportanceDistribution importance;
    NestedSelection selection;
    Matrix context;  // n x D full-width contextual rows
};

struct LayerTeacher {
    std::size_t layer = 0;
    std::vector<SentenceTeacher> sentences;
};

LayerTeacher build_teacher(const LayerStates& states, std::size_t layer, const ModelConfig& config);

struct TermValue {
    std::size_t layer = 0;
    std::size_t dim = 0;
    double att = 0.0;  // batch mean
    double cka = 0.0;  // batch mean
};

struct LayerLoss {
    Node att;    // batch-mean Σ_i L_att
    Node cka;    // batch-mean Σ_i L_CKA
    Node total;  // att + cka
    std::vector<TermValue> terms;
    std::size_t cka_skipped = 0;     // k_i < 2
    std::size_t cka_degenerate = 0;  // zero self-HSIC
    LayerTeacher teacher;
};

/// Alignment loss at one layer, summed over aligned prefixes (the full width is
/// excluded) and averaged over the batch. `frozen`, when given, replaces the
/// teacher computed from `states` (used by finite-difference checks).
LayerLoss sia_layer_loss(const LayerStates& states, std::size_t layer, const ModelConfig& config,
                         const ProjectionBank& bank, const LayerTeacher* frozen = nullptr);

struct TotalLoss {
    Node att;
    Node cka;
    Node total;
    std::vector<LayerLoss> layers;
};

/// Σ over config.sia_layers. `frozen` must then hold one teacher per SIA layer.
TotalLoss sia_total(const LayerStates& states, const ModelConfig& config, const ProjectionBank& bank,
                    const std::vector<LayerTeacher>* frozen = nullptr);

}  // namespace mipic::sia
