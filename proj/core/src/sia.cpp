#include "mipic/sia.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mipic/errors.hpp"
#include "mipic/similarity.hpp"

namespace mipic::sia {

namespace {

constexpr double kProbFloor = 1e-12;

Matrix clamped_log(const Matrix& probs) {
    Matrix out = probs;
    for (double& v : out.data()) v = std::log(std::max(v, kProbFloor));
    return out;
}

void require_context(std::size_t rows) {
    if (rows < 2) throw DegenerateError("sentence has no contextual tokens to score");
}

}  // namespace

ImportanceDistribution ImportanceDistribution::from_probs(const Matrix& probs, std::size_t layer, double temperature) {
    return {Node::constant(probs), Node::constant(clamped_log(probs)), layer, temperature};
}

ImportanceDistribution teacher_importance(const Matrix& sentence, double tau, std::size_t layer) {
    require_context(sentence.rows());
    const std::size_t n = sentence.rows() - 1;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(sentence.cols()));
    Matrix scores(1, n);
    for (std::size_t j = 0; j < n; ++j) scores(0, j) = la::dot(sentence.row(0), sentence.row(j + 1)) * inv_sqrt_d;
    const Node s = Node::constant(std::move(scores));
    return {softmax_rows(s, tau), log_softmax_rows(s, tau), layer, tau};
}

ImportanceDistribution student_importance(const Node& context, const Matrix& cls_anchor, const Node& projection,
                                          double tau, std::size_t layer) {
    const std::size_t d_full = cls_anchor.cols();
    const std::size_t d_prefix = projection.rows();
    if (projection.cols() != d_full || d_prefix > context.cols() || context.cols() != d_full) {
        throw DimensionError("student_importance: projection " + projection.value().shape_str() +
                             " does not map a prefix of " + context.value().shape_str() + " to width " +
                             std::to_string(d_full));
    }
    if (context.rows() == 0) throw DegenerateError("sentence has no contextual tokens to score");
    const Node anchor = Node::constant(la::transpose(cls_anchor));  // D x 1
    const Node lifted = matmul(prefix_cols(context, d_prefix), projection);
    const Node scores = scale(transpose(matmul(lifted, anchor)), 1.0 / std::sqrt(static_cast<double>(d_full)));
    return {softmax_rows(scores, tau), log_softmax_rows(scores, tau), layer, tau};
}

ImportanceDistribution student_importance(const Node& sentence, const Node& projection, double tau,
                                          std::size_t layer) {
    require_context(sentence.rows());
    const Matrix anchor = la::gather_rows(sentence.value(), std::vector<std::size_t>{0});
    return student_importance(slice_rows(sentence, 1, sentence.rows() - 1), anchor, projection, tau, layer);
}

Node attention_kl(const ImportanceDistribution& student, const ImportanceDistribution& teacher) {
    if (!student.probs.value().same_shape(teacher.probs.value())) {
        throw DimensionError("attention_kl: support mismatch " + student.probs.value().shape_str() + " vs " +
                             teacher.probs.value().shape_str());
    }
    const Node log_teacher = Node::constant(clamped_log(teacher.probs.value()));
    return sum(hadamard(student.probs, sub(student.log_probs, log_teacher)));
}

std::vector<std::size_t> topk_schedule(std::size_t m_effective, std::span<const double> gamma, std::size_t k_min) {
    if (gamma.empty()) throw ConfigError("topk_schedule: empty gamma schedule");
    std::vector<std::size_t> out;
    out.reserve(gamma.size());
    for (double g : gamma) {
        if (!(g > 0.0 && g <= 1.0)) throw ConfigError("topk_schedule: gamma entries must lie in (0, 1]");
        // The epsilon keeps products such as 0.7 * 10 = 7.000000000000001 from rounding up.
        const auto ceil_k = static_cast<std::size_t>(std::ceil(g * static_cast<double>(m_effective) - 1e-9));
        out.push_back(std::min(m_effective, std::max(k_min, ceil_k)));
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] < out[i - 1]) throw ConfigError("topk_schedule: gamma schedule must be non-decreasing");
    }
    return out;
}

NestedSelection select_topk(std::span<const double> probs, std::span<const std::size_t> k_values) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    NestedSelection sel;
    sel.k_values.assign(k_values.begin(), k_values.end());
    for (std::size_t i = 0; i < k_values.size(); ++i) {
        if (i > 0 && k_values[i] < k_values[i - 1]) throw ConfigError("select_topk: k_values must be non-decreasing");
        const std::size_t k = std::min(k_values[i], order.size());
        sel.index_sets.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return sel;
}

LayerTeacher build_teacher(const LayerStates& states, std::size_t layer, const ModelConfig& config) {
    LayerTeacher teacher;
    teacher.layer = layer;
    const Matrix& full = states.layer(layer).value();
    for (std::size_t b = 0; b < states.batch_size; ++b) {
        const std::size_t len = states.effective_lengths[b];
        require_context(len);
        std::vector<std::size_t> rows(len);
        std::iota(rows.begin(), rows.end(), b * states.seq_len);
        const Matrix sentence = la::gather_rows(full, rows);
        SentenceTeacher st;
        st.cls = la::gather_rows(sentence, std::vector<std::size_t>{0});
        st.importance = teacher_importance(sentence, config.tau_att, layer);
        const auto k = topk_schedule(len - 1, config.gamma_schedule, config.k_min);
        st.selection = select_topk(st.importance.probs.value().data(), k);
        std::vector<std::size_t> ctx(len - 1);
        std::iota(ctx.begin(), ctx.end(), std::size_t{1});
        st.context = la::gather_rows(sentence, ctx);
        teacher.sentences.push_back(std::move(st));
    }
    return teacher;
}

LayerLoss sia_layer_loss(const LayerStates& states, std::size_t layer, const ModelConfig& config,
                         const ProjectionBank& bank, const LayerTeacher* frozen) {
    if (std::find(config.sia_layers.begin(), config.sia_layers.end(), layer) == config.sia_layers.end()) {
        throw ConfigError("layer " + std::to_string(layer) + " is not an SIA layer");
    }
    LayerLoss out;
    out.teacher = frozen ? *frozen : build_teacher(states, layer, config);
    if (out.teacher.sentences.size() != states.batch_size || out.teacher.layer != layer) {
        throw ConfigError("frozen SIA teacher does not match the batch");
    }
    const std::size_t prefixes = config.nested_dims.size() - 1;
    const double inv_batch = 1.0 / static_cast<double>(states.batch_size);
    out.terms.resize(prefixes);
    std::vector<Node> att_terms, cka_terms;

    for (std::size_t b = 0; b < states.batch_size; ++b) {
        const SentenceTeacher& st = out.teacher.sentences[b];
        const Node sentence = states.sentence(layer, b);
        const Node context = slice_rows(sentence, 1, sentence.rows() - 1);
        for (std::size_t i = 0; i < prefixes; ++i) {
            const std::size_t dim = config.nested_dims[i];
            const auto student =
                student_importance(context, st.cls, bank.sia_projection(layer, i), config.tau_att, layer);
            const Node kl = attention_kl(student, st.importance);
            out.terms[i].att += kl.item() * inv_batch;
            att_terms.push_back(kl);

            const auto& rows = st.selection.index_sets[i];
            if (rows.size() < 2) {
                ++out.cka_skipped;
                continue;
            }
            auto cka = sim::cka_loss(prefix_cols(gather_rows(context, rows), dim), la::gather_rows(st.context, rows));
            if (cka.degenerate) ++out.cka_degenerate;
            out.terms[i].cka += cka.loss.item() * inv_batch;
            cka_terms.push_back(cka.loss);
        }
    }
    for (std::size_t i = 0; i < prefixes; ++i) {
        out.terms[i].layer = layer;
        out.terms[i].dim = config.nested_dims[i];
    }
    out.att = att_terms.empty() ? Node::constant(Matrix::scalar(0.0)) : scale(add_n(att_terms), inv_batch);
    out.cka = cka_terms.empty() ? Node::constant(Matrix::scalar(0.0)) : scale(add_n(cka_terms), inv_batch);
    out.total = add(out.att, out.cka);
    return out;
}

TotalLoss sia_total(const LayerStates& states, const ModelConfig& config, const ProjectionBank& bank,
                    const std::vector<LayerTeacher>* frozen) {
    if (config.sia_layers.empty()) throw ConfigError("SIA requires at least one layer");
    if (frozen && frozen->size() != config.sia_layers.size()) {
        throw ConfigError("frozen SIA teachers do not match sia_layers");
    }
    TotalLoss out;
    std::vector<Node> att, cka;
    for (std::size_t i = 0; i < config.sia_layers.size(); ++i) {
        out.layers.push_back(
            sia_layer_loss(states, config.sia_layers[i], config, bank, frozen ? &(*frozen)[i] : nullptr));
        att.push_back(out.layers.back().att);
        cka.push_back(out.layers.back().cka);
    }
    out.att = att.size() == 1 ? att[0] : add_n(att);
    out.cka = cka.size() == 1 ? cka[0] : add_n(cka);
    out.total = add(out.att, out.cka);
    return out;
}

}  // namespace mipic::sia
