#include "mipic/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <random>

#include "mipic/errors.hpp"
#include "mipic/objective.hpp"

namespace mipic {

namespace {

constexpr const char* kTermNames[] = {"L_MRL", "L_att", "L_CKA", "L_SIA", "L_PIC", "L_MIPIC"};
constexpr std::size_t kTerms = std::size(kTermNames);

TokenBatch random_batch(const ModelConfig& config, const GradcheckOptions& opt) {
    if (opt.max_tokens + 1 > config.max_len) {
        throw ConfigError("gradcheck: " + std::to_string(opt.max_tokens) + " tokens do not fit max_len " +
                          std::to_string(config.max_len));
    }
    std::mt19937_64 rng(opt.seed ^ 0x5eedULL);
    std::uniform_int_distribution<TokenId> tok(Vocabulary::kNumSpecial, static_cast<TokenId>(config.vocab_size) - 1);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t b = 0; b < opt.batch_size; ++b) {
        // Every other sentence is one token short so the padding path is exercised.
        const std::size_t n = (b % 2 == 1 && opt.max_tokens > 2) ? opt.max_tokens - 1 : opt.max_tokens;
        std::vector<TokenId> s{Vocabulary::kCls};
        for (std::size_t t = 0; t < n; ++t) s.push_back(tok(rng));
        seqs.push_back(std::move(s));
    }
    return TokenBatch::from_sequences(seqs);
}

std::array<Node, kTerms> term_nodes(const ObjectiveTerms& t) {
    auto need = [](const std::optional<Node>& n, const char* what) {
        if (!n) throw ConfigError(std::string("gradcheck: ") + what + " is disabled in this configuration");
        return *n;
    };
    return {t.mrl, need(t.att, "L_att"), need(t.cka, "L_CKA"), need(t.sia, "L_SIA"), need(t.pic, "L_PIC"), t.total};
}

}  // namespace

bool GradcheckReport::passed() const { return first_failure() == nullptr; }

const TermCheck* GradcheckReport::first_failure() const {
    for (const auto& t : terms) {
        if (!t.passed) return &t;
    }
    return nullptr;
}

void to_json(nlohmann::json& j, const TermCheck& t) {
    j = {{"term", t.term},
         {"worst_relative_error", t.worst_relative},
         {"worst_absolute_error", t.worst_absolute},
         {"worst_parameter", t.worst_parameter},
         {"analytic", t.analytic},
         {"numeric", t.numeric},
         {"entries", t.entries},
         {"passed", t.passed}};
}

void to_json(nlohmann::json& j, const GradcheckReport& r) {
    j = {{"parameter_count", r.parameter_count}, {"terms", r.terms}, {"seconds", r.seconds}, {"passed", r.passed()}};
}

GradcheckReport run_gradcheck(const ModelConfig& config, const GradcheckOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    if (config.alpha <= 0.0 || config.alpha >= 1.0) {
        throw ConfigError("gradcheck needs 0 < alpha < 1 so every term is present");
    }
    MipicModel model(config);
    const ParameterList params = model.parameters();
    GradcheckReport report;
    report.parameter_count = parameter_count(params);
    if (report.parameter_count >= opt.max_parameters) {
        throw ConfigError("gradcheck: " + std::to_string(report.parameter_count) + " parameters exceed the limit of " +
                          std::to_string(opt.max_parameters));
    }

    const TokenBatch batch = random_batch(config, opt);
    const AblationFlags flags;
    const ViewSeeds seeds{opt.seed * 2 + 11, opt.seed * 2 + 12};
    const auto teachers = mipic_loss(batch, model, flags, seeds).teachers;

    // Analytic gradients, one backward pass per term.
    std::vector<std::vector<Matrix>> analytic(kTerms);
    {
        const auto terms = term_nodes(mipic_loss(batch, model, flags, seeds, &teachers));
        for (std::size_t t = 0; t < kTerms; ++t) {
            zero_grads(params);
            backward(terms[t]);
            for (const auto& p : params) analytic[t].push_back(p.node.grad());
        }
        zero_grads(params);
    }

    auto evaluate = [&] {
        const auto terms = term_nodes(mipic_loss(batch, model, flags, seeds, &teachers));
        std::array<double, kTerms> v{};
        for (std::size_t t = 0; t < kTerms; ++t) v[t] = terms[t].item();
        return v;
    };

    report.terms.resize(kTerms);
    for (std::size_t t = 0; t < kTerms; ++t) report.terms[t].term = kTermNames[t];

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Node node = params[pi].node;
        Matrix& value = node.mutable_value();
        for (std::size_t r = 0; r < value.rows(); ++r) {
            for (std::size_t c = 0; c < value.cols(); ++c) {
                const double saved = value(r, c);
                value(r, c) = saved + opt.step;
                const auto plus = evaluate();
                value(r, c) = saved - opt.step;
                const auto minus = evaluate();
                value(r, c) = saved;
                for (std::size_t t = 0; t < kTerms; ++t) {
                    const double numeric = (plus[t] - minus[t]) / (2.0 * opt.step);
                    const double a = analytic[t][pi](r, c);
                    const double abs_err = std::abs(a - numeric);
                    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opt.floor});
                    TermCheck& tc = report.terms[t];
                    ++tc.entries;
                    tc.worst_absolute = std::max(tc.worst_absolute, abs_err);
                    if (rel > tc.worst_relative || tc.worst_parameter.empty()) {
                        tc.worst_relative = std::max(rel, tc.worst_relative);
                        tc.worst_parameter =
                            params[pi].name + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
                        tc.analytic = a;
                        tc.numeric = numeric;
                    }
                }
            }
        }
    }
    for (auto& tc : report.terms) tc.passed = tc.worst_relative < opt.tolerance;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace mipic
