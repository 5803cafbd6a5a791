#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mipic/errors.hpp"
#include "mipic/objective.hpp"
#include "mipic/sia.hpp"
#include "support/finite_diff.hpp"

using namespace mipic;
using mipic::testing::check_gradients;
using mipic::testing::random_matrix;

namespace {

const std::vector<double> kDeskGamma{0.2, 0.3, 0.4};

Matrix random_distribution(std::size_t n, std::mt19937_64& rng) {
    Matrix p = random_matrix(1, n, rng, 0.01, 1.0);
    const double total = la::sum(p);
    for (double& v : p.data()) v /= total;
    return p;
}

TokenBatch small_batch(const std::vector<std::vector<TokenId>>& seqs) { return TokenBatch::from_sequences(seqs); }

}  // namespace

TEST(TopkSchedule, DeskExamples) {
    EXPECT_EQ(sia::topk_schedule(50, kDeskGamma, 8), (std::vector<std::size_t>{10, 15, 20}));
    EXPECT_EQ(sia::topk_schedule(20, kDeskGamma, 8), (std::vector<std::size_t>{8, 8, 8}));
    EXPECT_EQ(sia::topk_schedule(5, kDeskGamma, 8), (std::vector<std::size_t>{5, 5, 5}));
}

TEST(TopkSchedule, ExactProductsDoNotRoundUp) {
    EXPECT_EQ(sia::topk_schedule(10, std::vector<double>{0.7}, 1), (std::vector<std::size_t>{7}));
    EXPECT_EQ(sia::topk_schedule(10, std::vector<double>{0.3}, 1), (std::vector<std::size_t>{3}));
}

TEST(TopkSchedule, RejectsBadRatios) {
    EXPECT_THROW(sia::topk_schedule(10, std::vector<double>{}, 1), ConfigError);
    EXPECT_THROW(sia::topk_schedule(10, std::vector<double>{0.0}, 1), ConfigError);
    EXPECT_THROW(sia::topk_schedule(10, std::vector<double>{1.5}, 1), ConfigError);
    EXPECT_THROW(sia::topk_schedule(10, std::vector<double>{0.5, 0.2}, 1), ConfigError);
}

TEST(SelectTopk, OrdersByImportance) {
    const std::vector<double> p{0.1, 0.4, 0.2, 0.3};
    const auto sel = sia::select_topk(p, std::vector<std::size_t>{1, 3});
    EXPECT_EQ(sel.index_sets[0], (std::vector<std::size_t>{1}));
    EXPECT_EQ(sel.index_sets[1], (std::vector<std::size_t>{1, 3, 2}));
}

TEST(SelectTopk, TiesPreferLowerIndex) {
    const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
    const auto sel = sia::select_topk(p, std::vector<std::size_t>{2});
    EXPECT_EQ(sel.index_sets[0], (std::vector<std::size_t>{0, 1}));
}

TEST(SelectTopk, SetsAreNestedOnRandomInputs) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> m_dist(1, 64);
    std::uniform_int_distribution<int> tie_dist(0, 3);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = m_dist(rng);
        std::vector<double> p(m);
        // Coarse values so ties are common.
        for (double& v : p) v = tie_dist(rng) == 0 ? 0.5 : uniform01(rng);
        const auto k = sia::topk_schedule(m, kDeskGamma, 8);
        const auto sel = sia::select_topk(p, k);
        for (std::size_t i = 0; i < k.size(); ++i) {
            ASSERT_EQ(sel.index_sets[i].size(), k[i]);
            ASSERT_EQ(k[i], std::min(m, std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(kDeskGamma[i] * m - 1e-9)))));
        }
        for (std::size_t i = 0; i + 1 < k.size(); ++i) {
            const std::set<std::size_t> outer(sel.index_sets[i + 1].begin(), sel.index_sets[i + 1].end());
            for (std::size_t idx : sel.index_sets[i]) ASSERT_TRUE(outer.count(idx)) << "trial " << trial;
        }
    }
}

TEST(TeacherImportance, HandComputedThreeTokenSentence) {
    // CLS = (1, 0), tokens (2, 0) and (0, 1); scores 2/sqrt(2) and 0.
    const Matrix s{{1, 0}, {2, 0}, {0, 1}};
    const auto d = sia::teacher_importance(s, 1.0, 3);
    const double e = std::exp(std::sqrt(2.0));
    EXPECT_NEAR(d.probs.value()(0, 0), e / (e + 1.0), 1e-15);
    EXPECT_NEAR(d.probs.value()(0, 1), 1.0 / (e + 1.0), 1e-15);
    EXPECT_EQ(d.source_layer, 3u);
    EXPECT_FALSE(d.probs.requires_grad());

    const auto hot = sia::teacher_importance(s, 0.5, 3);
    EXPECT_GT(hot.probs.value()(0, 0), d.probs.value()(0, 0));
}

TEST(TeacherImportance, NeedsContextualTokens) {
    EXPECT_THROW(sia::teacher_importance(Matrix{{1, 0}}, 1.0), DegenerateError);
}

TEST(AttentionKl, HandValue) {
    const auto s = sia::ImportanceDistribution::from_probs(Matrix{{0.9, 0.1}});
    const auto t = sia::ImportanceDistribution::from_probs(Matrix{{0.5, 0.5}});
    EXPECT_NEAR(sia::attention_kl(s, t).item(), 0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-12);
    EXPECT_NEAR(sia::attention_kl(s, t).item(), 0.3681, 1e-4);
}

TEST(AttentionKl, NonNegativeAndZeroAtIdentity) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + trial % 12;
        const Matrix p = random_distribution(n, rng);
        const Matrix q = random_distribution(n, rng);
        const auto sp = sia::ImportanceDistribution::from_probs(p);
        ASSERT_GE(sia::attention_kl(sp, sia::ImportanceDistribution::from_probs(q)).item(), -1e-15);
        ASSERT_NEAR(sia::attention_kl(sp, sp).item(), 0.0, 1e-15);
    }
}

TEST(AttentionKl, RejectsSupportMismatch) {
    const auto a = sia::ImportanceDistribution::from_probs(Matrix{{0.5, 0.5}});
    const auto b = sia::ImportanceDistribution::from_probs(Matrix{{0.2, 0.3, 0.5}});
    EXPECT_THROW(sia::attention_kl(a, b), DimensionError);
}

TEST(StudentImportance, IdentityProjectionReproducesTeacher) {
    std::mt19937_64 rng(6);
    const Matrix s = random_matrix(5, 4, rng);
    const auto teacher = sia::teacher_importance(s, 1.0);
    const auto student = sia::student_importance(Node::constant(s), Node::constant(Matrix::identity(4)), 1.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(student.probs.value()(0, j), teacher.probs.value()(0, j), 1e-15);
    EXPECT_NEAR(sia::attention_kl(student, teacher).item(), 0.0, 1e-15);
}

TEST(StudentImportance, ZeroProjectionIsUniform) {
    std::mt19937_64 rng(7);
    const Matrix s = random_matrix(6, 4, rng);
    const auto student = sia::student_importance(Node::constant(s), Node::constant(Matrix(2, 4)), 1.0);
    for (double v : student.probs.value().data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(StudentImportance, RejectsWrongProjectionShape) {
    std::mt19937_64 rng(8);
    const Matrix s = random_matrix(4, 4, rng);
    EXPECT_THROW(sia::student_importance(Node::constant(s), Node::constant(Matrix(2, 3)), 1.0), DimensionError);
    EXPECT_THROW(sia::student_importance(Node::constant(s), Node::constant(Matrix(5, 4)), 1.0), DimensionError);
}

TEST(StudentImportance, KlGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    Node sentence = Node::parameter(random_matrix(5, 4, rng));
    Node p = Node::parameter(random_matrix(2, 4, rng));
    const auto teacher = sia::ImportanceDistribution::from_probs(random_distribution(4, rng));
    const Matrix anchor = la::gather_rows(sentence.value(), std::vector<std::size_t>{0});
    auto r = check_gradients(
        [&] {
            const auto s = sia::student_importance(slice_rows(sentence, 1, 4), anchor, p, 0.7);
            return sia::attention_kl(s, teacher);
        },
        {sentence, p});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(SiaLayerLoss, TeacherIsDetached) {
    ModelConfig c = tiny_model_config();
    MipicModel model(c);
    const auto batch = small_batch({{0, 3, 4, 5, 6}, {0, 7, 8, 9}});
    const auto states = model.encoder().encode(batch, 1);
    const auto loss = sia::sia_layer_loss(states, 1, c, model.bank());
    for (const auto& st : loss.teacher.sentences) {
        EXPECT_FALSE(st.importance.probs.requires_grad());
        EXPECT_FALSE(st.importance.log_probs.requires_grad());
    }
    EXPECT_TRUE(loss.total.requires_grad());
    EXPECT_EQ(loss.terms.size(), c.nested_dims.size() - 1);
    EXPECT_EQ(loss.teacher.sentences[1].context.rows(), 3u);
}

TEST(SiaLayerLoss, SkipsCkaWhenFewerThanTwoTokensSelected) {
    ModelConfig c = tiny_model_config();
    c.k_min = 1;
    MipicModel model(c);
    // Two contextual tokens: k = ceil(0.4 * 2) = 1 for the first prefix.
    const auto batch = small_batch({{0, 3, 4}, {0, 5, 6}});
    const auto loss = sia::sia_layer_loss(model.encoder().encode(batch, 1), 2, c, model.bank());
    EXPECT_EQ(loss.cka_skipped, 2u);
    EXPECT_TRUE(std::isfinite(loss.total.item()));
}

TEST(SiaLayerLoss, RejectsNonSiaLayer) {
    ModelConfig c = tiny_model_config();
    c.sia_layers = {2};
    MipicModel model(c);
    const auto states = model.encoder().encode(small_batch({{0, 3, 4, 5}}), 1);
    EXPECT_THROW(sia::sia_layer_loss(states, 1, c, model.bank()), ConfigError);
}

TEST(SiaTotal, FrozenTeacherReproducesLiveLoss) {
    ModelConfig c = tiny_model_config();
    MipicModel model(c);
    const auto states = model.encoder().encode(small_batch({{0, 3, 4, 5, 6}, {0, 7, 8, 9, 10, 11}}), 4);
    const auto live = sia::sia_total(states, c, model.bank());
    std::vector<sia::LayerTeacher> teachers;
    for (const auto& l : live.layers) teachers.push_back(l.teacher);
    const auto frozen = sia::sia_total(states, c, model.bank(), &teachers);
    EXPECT_EQ(frozen.total.item(), live.total.item());
    teachers.pop_back();
    EXPECT_THROW(sia::sia_total(states, c, model.bank(), &teachers), ConfigError);
}
