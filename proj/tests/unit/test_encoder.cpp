#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "mipic/encoder.hpp"
#include "mipic/errors.hpp"

using namespace mipic;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

Matrix cls_row(const LayerStates& s, std::size_t layer, std::size_t b) {
    return la::gather_rows(pool_cls(s, layer).value(), std::vector<std::size_t>{b});
}

}  // namespace

TEST(Vocabulary, BuildIsSortedAndDeduplicated) {
    const std::vector<std::string> sentences{"The cat sat", "the dog  sat"};
    const auto v = Vocabulary::build(sentences);
    EXPECT_EQ(v.tokens(), (std::vector<std::string>{"cat", "dog", "sat", "the"}));
    EXPECT_EQ(v.size(), 7u);
    EXPECT_EQ(v.id("cat"), 3);
    EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);
    EXPECT_EQ(v.token(Vocabulary::kCls), "[CLS]");
    EXPECT_THROW(v.token(99), InputError);
}

TEST(Vocabulary, EncodePrependsClsAndTruncates) {
    const auto v = Vocabulary::build(std::vector<std::string>{"a b c d"});
    EXPECT_EQ(v.encode("A b zz", 10), (std::vector<TokenId>{0, 3, 4, Vocabulary::kUnk}));
    EXPECT_EQ(v.encode("a b c d", 3), (std::vector<TokenId>{0, 3, 4}));
}

TEST(Vocabulary, SaveLoadRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "mipic_vocab_test";
    std::filesystem::create_directories(dir);
    const auto v = Vocabulary::build(std::vector<std::string>{"x y z w"});
    v.save(dir / "vocab.txt");
    EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
    EXPECT_THROW(Vocabulary::load(dir / "missing.txt"), IoError);
    EXPECT_THROW(Vocabulary(std::vector<std::string>{"a", "a"}), InputError);
    std::filesystem::remove_all(dir);
}

TEST(TokenBatch, PadsAndMasks) {
    const std::vector<std::vector<TokenId>> seqs{{0, 5, 6}, {0, 7}};
    const auto b = TokenBatch::from_sequences(seqs);
    EXPECT_EQ(b.batch_size, 2u);
    EXPECT_EQ(b.seq_len, 3u);
    EXPECT_EQ(b.id(1, 2), Vocabulary::kPad);
    EXPECT_EQ(b.attn_mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0}));
    EXPECT_EQ(b.effective_lengths, (std::vector<std::size_t>{3, 2}));
    EXPECT_EQ(b.contextual_length(1), 1u);
}

TEST(TokenBatch, RejectsMissingClsAndEmptyBatch) {
    EXPECT_THROW(TokenBatch::from_sequences(std::vector<std::vector<TokenId>>{{5, 6}}), InputError);
    EXPECT_THROW(TokenBatch::from_sequences(std::vector<std::vector<TokenId>>{}), InputError);
}

TEST(Encoder, ParameterCountMatchesFormula) {
    for (const auto& c : {tiny_model_config(), [] {
                              auto d = desk_model_config();
                              d.vocab_size = 200;
                              return d;
                          }()}) {
        std::mt19937_64 rng(0);
        Encoder e(c, rng);
        EXPECT_EQ(parameter_count(e.parameters()), Encoder::parameter_count_for(c));
    }
    // 12*8 + 7*8 embeddings; per layer 4 attention maps, FFN and two layer norms.
    const ModelConfig t = tiny_model_config();
    const std::size_t per_layer = 4 * (8 * 8 + 8) + (8 * 16 + 16) + (16 * 8 + 8) + 4 * 8;
    EXPECT_EQ(Encoder::parameter_count_for(t), 12 * 8 + 7 * 8 + 2 * per_layer);
}

TEST(Encoder, OutputShapes) {
    std::mt19937_64 rng(0);
    Encoder e(tiny_model_config(), rng);
    const std::vector<std::vector<TokenId>> seqs{{0, 3, 4, 5}, {0, 6}};
    const auto s = e.encode_inference(TokenBatch::from_sequences(seqs), true);
    EXPECT_EQ(s.num_layers(), 2u);
    EXPECT_EQ(s.layer(2).rows(), 8u);
    EXPECT_EQ(s.layer(2).cols(), 8u);
    EXPECT_EQ(s.sentence(1, 1).rows(), 2u);
    EXPECT_EQ(pool_cls(s, 2).rows(), 2u);
    ASSERT_EQ(s.attention.size(), 2u);
    ASSERT_EQ(s.attention[0].size(), 4u);  // batch * heads
    EXPECT_THROW(s.layer(3), ConfigError);
}

TEST(Encoder, AttentionIgnoresPadding) {
    std::mt19937_64 rng(0);
    Encoder e(tiny_model_config(), rng);
    const std::vector<std::vector<TokenId>> seqs{{0, 3, 4, 5, 6}, {0, 7}};
    const auto s = e.encode_inference(TokenBatch::from_sequences(seqs), true);
    const Matrix& a = s.attention[0][2];  // sentence 1, head 0
    for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t k = 2; k < 5; ++k) EXPECT_EQ(a(q, k), 0.0);
}

TEST(Encoder, RowsAreIndependentOfBatchmatesAndPadding) {
    std::mt19937_64 rng(0);
    Encoder e(tiny_model_config(), rng);
    const std::vector<std::vector<TokenId>> alone{{0, 7, 8}};
    const std::vector<std::vector<TokenId>> padded{{0, 3, 4, 5, 6, 9}, {0, 7, 8}};
    const auto a = e.encode_inference(TokenBatch::from_sequences(alone));
    const auto b = e.encode_inference(TokenBatch::from_sequences(padded));
    EXPECT_LT(max_abs_diff(cls_row(a, 2, 0), cls_row(b, 2, 1)), 1e-12);
}

TEST(Encoder, DropoutIsAPureFunctionOfViewSeed) {
    std::mt19937_64 rng(0);
    Encoder e(tiny_model_config(), rng);
    const auto batch = TokenBatch::from_sequences(std::vector<std::vector<TokenId>>{{0, 3, 4, 5}, {0, 6, 7}});
    const auto a = e.encode(batch, 42);
    const auto b = e.encode(batch, 42);
    const auto c = e.encode(batch, 43);
    EXPECT_EQ(a.layer(2).value(), b.layer(2).value());
    EXPECT_NE(a.layer(2).value(), c.layer(2).value());
    EXPECT_NE(a.layer(2).value(), e.encode_inference(batch).layer(2).value());
}

TEST(Encoder, RejectsOutOfRangeInputs) {
    std::mt19937_64 rng(0);
    Encoder e(tiny_model_config(), rng);
    EXPECT_THROW(e.encode_inference(TokenBatch::from_sequences(std::vector<std::vector<TokenId>>{{0, 12}})), InputError);
    EXPECT_THROW(e.encode_inference(TokenBatch::from_sequences(std::vector<std::vector<TokenId>>{{0, 3, 3, 3, 3, 3, 3, 3}})),
                 InputError);
}

TEST(ModelConfig, ValidationNamesTheProblem) {
    auto expect_error = [](ModelConfig c, const std::string& needle) {
        try {
            c.validate();
            ADD_FAILURE() << "expected ConfigError containing '" << needle << "'";
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    ModelConfig c = tiny_model_config();
    EXPECT_NO_THROW(c.validate());
    EXPECT_NO_THROW(desk_model_config().validate());

    auto bad = c;
    bad.nested_dims = {2, 2, 8};
    expect_error(bad, "strictly increasing");
    bad = c;
    bad.nested_dims = {2, 4};
    bad.gamma_schedule = {0.5};
    expect_error(bad, "end at hidden_dim");
    bad = c;
    bad.num_heads = 3;
    expect_error(bad, "num_heads");
    bad = c;
    bad.checkpoints = {{2, 2}, {1, 8}};
    expect_error(bad, "checkpoint layers");
    bad = c;
    bad.gamma_schedule = {0.4};
    expect_error(bad, "gamma_schedule");
    bad = c;
    bad.alpha = 1.5;
    expect_error(bad, "alpha");
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
    ModelConfig c = desk_model_config();
    c.vocab_size = 123;
    c.mrl_weights = {1, 1, 2, 2};
    const nlohmann::json j = c;
    EXPECT_EQ(j.get<ModelConfig>(), c);

    nlohmann::json bad = j;
    bad["hiden_dim"] = 4;
    EXPECT_THROW(bad.get<ModelConfig>(), ConfigError);
    EXPECT_EQ(nlohmann::json::object().get<ModelConfig>(), ModelConfig{});
}

TEST(ModelConfig, DiffListsChangedFields) {
    ModelConfig a = tiny_model_config(), b = a;
    EXPECT_TRUE(diff(a, b).empty());
    b.hidden_dim = 16;
    b.alpha = 0.5;
    const auto d = diff(a, b);
    ASSERT_EQ(d.size(), 2u);
    const std::string joined = d[0] + "\n" + d[1];
    EXPECT_NE(joined.find("hidden_dim: 8 != 16"), std::string::npos) << joined;
    EXPECT_NE(joined.find("alpha"), std::string::npos) << joined;
}
