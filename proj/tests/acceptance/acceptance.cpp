// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 2 3 10     run a subset
//
// Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mipic/checkpoint.hpp"
#include "mipic/evaluator.hpp"
#include "mipic/gradcheck.hpp"
#include "mipic/objective.hpp"
#include "mipic/pic.hpp"
#include "mipic/sia.hpp"
#include "mipic/similarity.hpp"
#include "mipic/synth.hpp"
#include "mipic/trainer.hpp"

using namespace mipic;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        passed = passed && ok;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream o;
    o << std::setprecision(precision) << v;
    return o.str();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = g(rng);
    return m;
}

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    Matrix q = random_matrix(n, n, rng);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double d = 0.0;
            for (std::size_t r = 0; r < n; ++r) d += q(r, c) * q(r, p);
            for (std::size_t r = 0; r < n; ++r) q(r, c) -= d * q(r, p);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < n; ++r) norm += q(r, c) * q(r, c);
        for (std::size_t r = 0; r < n; ++r) q(r, c) /= std::sqrt(norm);
    }
    return q;
}

// Shared synthetic suite and corpus for the training criteria.
struct SynthData {
    fs::path dir;
    Corpus corpus;
    eval::StsDataset sts;

    static SynthData& get() {
        static SynthData data = [] {
            SynthData d;
            d.dir = fs::temp_directory_path() / ("mipic_acceptance_" + std::to_string(std::random_device{}()));
            synth::write_suite(synth::generate({}), d.dir);
            d.corpus = load_corpus(d.dir / "train.txt", desk_model_config().max_len);
            d.sts = eval::parse_sts(d.dir / "sts.tsv");
            return d;
        }();
        return data;
    }
    ~SynthData() {
        std::error_code ec;
        if (!dir.empty()) fs::remove_all(dir, ec);
    }
};

ModelConfig desk_for_corpus(std::uint64_t seed) {
    ModelConfig c = desk_model_config();
    c.vocab_size = SynthData::get().corpus.vocabulary.size();
    c.seed = seed;
    return c;
}

TrainConfig smoke_train(std::uint64_t seed, std::size_t steps, bool mrl_only) {
    TrainConfig t;
    t.max_steps = steps;
    t.batch_size = 16;
    t.seed = seed;
    t.ablation.mrl_only = mrl_only;
    return t;
}

std::string dump_trace(const std::vector<LossBreakdown>& trace) {
    std::string out;
    for (const auto& b : trace) out += nlohmann::json(b).dump() + "\n";
    return out;
}

std::vector<double> sts_spearman(const MipicModel& model, std::span<const std::size_t> dims) {
    const auto& d = SynthData::get();
    const Matrix a = eval::embed_full(model.encoder(), d.corpus.vocabulary, d.sts.first);
    const Matrix b = eval::embed_full(model.encoder(), d.corpus.vocabulary, d.sts.second);
    std::vector<double> out;
    for (std::size_t dim : dims) out.push_back(eval::spearman(eval::row_cosines(eval::truncate(a, dim), eval::truncate(b, dim)), d.sts.scores));
    return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    const GradcheckReport r = run_gradcheck(tiny_model_config());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::set<std::string> required{"L_MRL", "L_SIA", "L_PIC", "L_MIPIC"};
    std::set<std::string> seen;
    for (const auto& t : r.terms) {
        seen.insert(t.term);
        o.check(t.worst_relative < 1e-4, t.term + " worst relative error " + fmt(t.worst_relative, 3) + " at " +
                                             t.worst_parameter + " over " + std::to_string(t.entries) + " entries");
    }
    for (const auto& name : required) o.check(seen.count(name) == 1, name + " checked");
    o.check(seconds < 60.0, std::to_string(r.parameter_count) + " parameters in " + fmt(seconds, 3) + " s");
    return o;
}

// tr(K H L H) with K = X Xᵀ, L = Y Yᵀ, accumulated in long double.
double gram_form_cka(const Matrix& x, const Matrix& y) {
    const std::size_t k = x.rows();
    auto centered_gram = [k](const Matrix& m) {
        std::vector<long double> g(k * k, 0.0L);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t c = 0; c < m.cols(); ++c) g[i * k + j] += static_cast<long double>(m(i, c)) * m(j, c);
        std::vector<long double> row(k, 0.0L), col(k, 0.0L);
        long double all = 0.0L;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) row[i] += g[i * k + j], col[j] += g[i * k + j], all += g[i * k + j];
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) g[i * k + j] += all / (k * k) - row[i] / k - col[j] / k;
        return g;
    };
    const auto kc = centered_gram(x), lc = centered_gram(y);
    long double xy = 0, xx = 0, yy = 0;
    for (std::size_t i = 0; i < k * k; ++i) xy += kc[i] * lc[i], xx += kc[i] * kc[i], yy += lc[i] * lc[i];
    return static_cast<double>(xy / std::sqrt(xx * yy));
}

Outcome cka_oracle() {
    Outcome o;
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> k_dist(3, 20), d_dist(1, 32);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t k = k_dist(rng);
        const Matrix x = random_matrix(k, d_dist(rng), rng);
        const Matrix y = random_matrix(k, d_dist(rng), rng);
        worst = std::max(worst, std::abs(sim::cka_linear(x, y).value - gram_form_cka(x, y)));
    }
    o.check(worst < 1e-8, "max |feature - Gram| over 100 shape triples = " + fmt(worst, 3));
    return o;
}

Outcome cka_invariances() {
    Outcome o;
    std::mt19937_64 rng(102);
    std::uniform_int_distribution<std::size_t> k_dist(3, 20), d_dist(1, 16);
    double orth = 0.0, scale = 0.0, self = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t k = k_dist(rng), ds = d_dist(rng), dt = d_dist(rng);
        const Matrix x = random_matrix(k, ds, rng), y = random_matrix(k, dt, rng);
        const double base = sim::cka_linear(x, y).value;
        const double rotated =
            sim::cka_linear(la::matmul(x, random_orthogonal(ds, rng)), la::matmul(y, random_orthogonal(dt, rng))).value;
        orth = std::max(orth, std::abs(rotated - base));
        for (double c : {0.1, 3.7, 100.0}) {
            scale = std::max(scale, std::abs(sim::cka_linear(la::scale(x, c), y).value - base));
            scale = std::max(scale, std::abs(sim::cka_linear(x, la::scale(y, c)).value - base));
        }
        self = std::max(self, std::abs(sim::cka_linear(x, x).value - 1.0));
    }
    std::size_t out_of_range = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t k = k_dist(rng);
        const double v = sim::cka_linear(random_matrix(k, d_dist(rng), rng), random_matrix(k, d_dist(rng), rng)).value;
        out_of_range += !(v >= 0.0 && v <= 1.0 + 1e-12);
    }
    o.check(orth < 1e-8, "orthogonal transforms: max change " + fmt(orth, 3));
    o.check(scale < 1e-8, "isotropic scaling {0.1, 3.7, 100}: max change " + fmt(scale, 3));
    o.check(self < 1e-10, "|CKA(X,X) - 1| max " + fmt(self, 3));
    o.check(out_of_range == 0, std::to_string(out_of_range) + " of 1000 pairs outside [0, 1]");
    return o;
}

Outcome nestedness() {
    Outcome o;
    const std::vector<double> gamma{0.2, 0.3, 0.4};
    const std::size_t k_min = 8;
    std::mt19937_64 rng(103);
    std::uniform_int_distribution<std::size_t> m_dist(1, 128);
    std::size_t violations = 0, size_errors = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t m = m_dist(rng);
        std::vector<double> p(m);
        for (double& v : p) v = (rng() % 4 == 0) ? 0.25 : uniform01(rng);
        const auto k = sia::topk_schedule(m, gamma, k_min);
        const auto sel = sia::select_topk(p, k);
        for (std::size_t j = 0; j < k.size(); ++j) {
            const auto expected =
                std::min(m, std::max(k_min, static_cast<std::size_t>(std::ceil(gamma[j] * static_cast<double>(m) - 1e-9))));
            size_errors += k[j] != expected || sel.index_sets[j].size() != k[j];
        }
        for (std::size_t j = 0; j + 1 < k.size(); ++j) {
            const std::set<std::size_t> outer(sel.index_sets[j + 1].begin(), sel.index_sets[j + 1].end());
            for (auto idx : sel.index_sets[j]) violations += outer.count(idx) == 0;
        }
    }
    o.check(violations == 0, std::to_string(violations) + " nestedness violations over 1000 vectors");
    o.check(size_errors == 0, std::to_string(size_errors) + " schedule/size mismatches");
    const auto k50 = sia::topk_schedule(50, gamma, k_min);
    o.check(k50.front() == 10, "m=50, gamma=0.2 gives k=" + std::to_string(k50.front()));
    return o;
}

Outcome contrastive_identities() {
    Outcome o;
    std::mt19937_64 rng(104);
    const Node one_a = Node::constant(random_matrix(1, 8, rng)), one_b = Node::constant(random_matrix(1, 8, rng));
    o.check(pic::info_nce(one_a, one_b, 0.05).item() == 0.0 && simcse_loss(one_a, one_b, 0.05).item() == 0.0,
            "InfoNCE and SimCSE are 0 at N=1");

    const Node eye = Node::constant(Matrix::identity(8));
    const double ortho = std::max(pic::info_nce(eye, eye, 0.05).item(), simcse_loss(eye, eye, 0.05).item());
    o.check(ortho < 1e-3, "identical positives, orthogonal negatives: " + fmt(ortho, 3));

    std::size_t tested = 0, broken = 0;
    std::normal_distribution<double> noise(0.0, 0.3);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + i % 15;
        const Matrix a = random_matrix(n, 6, rng);
        Matrix p = a;
        for (double& v : p.data()) v += noise(rng);
        const Matrix s = la::matmul_nt(la::l2_normalize_rows(a), la::l2_normalize_rows(p));
        bool dominant = true;
        for (std::size_t r = 0; r < n && dominant; ++r)
            for (std::size_t c = 0; c < n; ++c) dominant = dominant && s(r, r) >= s(r, c);
        if (!dominant) continue;
        ++tested;
        const double bound = std::log(static_cast<double>(n)) + 1e-9;
        broken += pic::info_nce(Node::constant(a), Node::constant(p), 0.05).item() > bound;
        broken += simcse_loss(Node::constant(a), Node::constant(p), 0.05).item() > bound;
    }
    o.check(tested > 100 && broken == 0,
            "log N bound: " + std::to_string(broken) + " violations over " + std::to_string(tested) + " batches");

    double min_kl = std::numeric_limits<double>::infinity(), max_self = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + i % 20;
        auto dist = [&] {
            Matrix m(1, n);
            double z = 0.0;
            for (double& v : m.data()) z += (v = std::exp(2.0 * random_matrix(1, 1, rng).item()));
            for (double& v : m.data()) v /= z;
            return sia::ImportanceDistribution::from_probs(m);
        };
        const auto p = dist(), q = dist();
        min_kl = std::min(min_kl, sia::attention_kl(p, q).item());
        max_self = std::max(max_self, std::abs(sia::attention_kl(p, p).item()));
    }
    o.check(min_kl >= 0.0, "min KL over 1000 pairs " + fmt(min_kl, 3));
    o.check(max_self == 0.0, "KL(p, p) max " + fmt(max_self, 3));
    return o;
}

Outcome ablation_exactness() {
    Outcome o;
    const auto& data = SynthData::get();
    const ModelConfig config = desk_for_corpus(0);
    const std::vector<std::vector<TokenId>> seqs(data.corpus.sequences.begin(), data.corpus.sequences.begin() + 16);
    const TokenBatch batch = TokenBatch::from_sequences(seqs);

    auto nonzero = [](const ParameterList& params) {
        std::size_t count = 0;
        for (const auto& p : params)
            for (double v : p.node.grad().data()) count += v != 0.0;
        return count;
    };
    {
        MipicModel model(config);
        zero_grads(model.parameters());
        AblationFlags flags;
        flags.no_sia = true;
        backward(mipic_loss(batch, model, flags, {1, 2}).total);
        const auto bad = nonzero(model.bank().sia_parameters());
        o.check(bad == 0 && nonzero(model.bank().pic_parameters()) > 0,
                "--no-sia: " + std::to_string(bad) + " nonzero P-gradient entries");
    }
    {
        MipicModel model(config);
        zero_grads(model.parameters());
        AblationFlags flags;
        flags.no_pic = true;
        backward(mipic_loss(batch, model, flags, {1, 2}).total);
        const auto bad = nonzero(model.bank().pic_parameters());
        o.check(bad == 0 && nonzero(model.bank().sia_parameters()) > 0,
                "--no-pic: " + std::to_string(bad) + " nonzero phi-gradient entries");
    }
    {
        MipicModel a(config);
        const auto ta = train(a, data.corpus, smoke_train(3, 20, true));
        ModelConfig one = config;
        one.alpha = 1.0;
        MipicModel b(one);
        const auto tb = train(b, data.corpus, smoke_train(3, 20, false));
        o.check(dump_trace(ta.trace) == dump_trace(tb.trace), "--mrl-only trace equals alpha=1 trace over 20 steps");
    }
    return o;
}

struct SmokeRun {
    double loss_ratio = 0.0;
    std::vector<double> spearman;  // dims 4, 8, 16, 32
    std::vector<double> step_seconds;
};

SmokeRun smoke_run(std::uint64_t seed, bool mrl_only) {
    const auto& data = SynthData::get();
    MipicModel model(desk_for_corpus(seed));
    const auto result = train(model, data.corpus, smoke_train(seed, 300, mrl_only));
    std::vector<double> head, tail;
    for (std::size_t i = 0; i < 50; ++i) {
        head.push_back(result.trace[i].total);
        tail.push_back(result.trace[result.trace.size() - 50 + i].total);
    }
    const std::vector<std::size_t> dims{4, 8, 16, 32};
    return {median(tail) / median(head), sts_spearman(model, dims), result.step_seconds};
}

Outcome smoke_training() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    constexpr std::uint64_t kSeeds = 5;
    std::vector<SmokeRun> full, plain;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        full.push_back(smoke_run(s, false));
        plain.push_back(smoke_run(s, true));
        std::cout << "  seed " << s << ": MIPIC loss ratio " << fmt(full.back().loss_ratio, 3) << ", spearman@4/8 "
                  << fmt(full.back().spearman[0], 3) << "/" << fmt(full.back().spearman[1], 3) << "; MRL-only "
                  << fmt(plain.back().loss_ratio, 3) << ", " << fmt(plain.back().spearman[0], 3) << "/"
                  << fmt(plain.back().spearman[1], 3) << std::endl;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    auto column = [](const std::vector<SmokeRun>& runs, auto fn) {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(fn(r));
        return v;
    };
    const auto ratios = column(full, [](const SmokeRun& r) { return r.loss_ratio; });
    const double worst_ratio = *std::max_element(ratios.begin(), ratios.end());
    o.check(worst_ratio < 0.7, "(a) end/start 50-step median loss, worst MIPIC seed " + fmt(worst_ratio, 3));

    const auto full4 = column(full, [](const SmokeRun& r) { return r.spearman[0]; });
    const auto full8 = column(full, [](const SmokeRun& r) { return r.spearman[1]; });
    const auto plain4 = column(plain, [](const SmokeRun& r) { return r.spearman[0]; });
    const auto plain8 = column(plain, [](const SmokeRun& r) { return r.spearman[1]; });
    const double worst4 = *std::min_element(full4.begin(), full4.end());
    o.check(worst4 >= 0.3, "(b) dim-4 STS Spearman, worst MIPIC seed " + fmt(worst4, 3));
    o.check(median(full4) >= median(plain4),
            "(c) median dim-4 Spearman MIPIC " + fmt(median(full4), 4) + " vs MRL-only " + fmt(median(plain4), 4));
    o.check(median(full8) >= median(plain8),
            "(c) median dim-8 Spearman MIPIC " + fmt(median(full8), 4) + " vs MRL-only " + fmt(median(plain8), 4));
    o.check(seconds < 600.0, "10 runs x 300 steps in " + fmt(seconds, 4) + " s");
    return o;
}

Outcome relative_cost() {
    Outcome o;
    const auto& data = SynthData::get();
    // Interleave the two variants so machine noise hits both alike.
    std::vector<double> full, plain;
    for (std::uint64_t s = 0; s < 3; ++s) {
        for (bool mrl_only : {false, true}) {
            MipicModel model(desk_for_corpus(s));
            const auto r = train(model, data.corpus, smoke_train(s, 20, mrl_only));
            auto& sink = mrl_only ? plain : full;
            sink.insert(sink.end(), r.step_seconds.begin() + 2, r.step_seconds.end());
        }
    }
    const double f = median(full), p = median(plain);
    o.check(f >= p, "median step " + fmt(f * 1e3, 3) + " ms (MIPIC) vs " + fmt(p * 1e3, 3) + " ms (MRL-only)");
    return o;
}

Outcome determinism_and_persistence() {
    Outcome o;
    const auto& data = SynthData::get();
    const ModelConfig config = desk_for_corpus(11);
    MipicModel a(config), b(config);
    const auto ta = train(a, data.corpus, smoke_train(11, 25, false));
    const auto tb = train(b, data.corpus, smoke_train(11, 25, false));
    o.check(dump_trace(ta.trace) == dump_trace(tb.trace), "identical seeds give bitwise-identical 25-step traces");

    const fs::path ckpt = data.dir / "acceptance-checkpoint.json";
    save_checkpoint(ckpt, a, data.corpus.vocabulary);
    const auto loaded = load_checkpoint(ckpt, &config);
    const auto batch = TokenBatch::from_sequences(
        std::vector<std::vector<TokenId>>(data.corpus.sequences.begin(), data.corpus.sequences.begin() + 64));
    const auto sa = a.encoder().encode_inference(batch), sb = loaded.model->encoder().encode_inference(batch);
    bool same = true;
    for (std::size_t l = 0; l <= config.num_layers; ++l) same = same && sa.layer(l).value() == sb.layer(l).value();
    o.check(same, "checkpoint round trip reproduces every layer's forward output exactly");

    eval::EvalInputs in;
    in.sts = data.dir / "sts.tsv";
    in.pairs = data.dir / "pairs.tsv";
    in.cls_train = data.dir / "cls_train.tsv";
    in.cls_test = data.dir / "cls_test.tsv";
    const std::vector<std::size_t> dims{4, 8, 16, 32};
    const auto r1 = eval::evaluate(a.encoder(), data.corpus.vocabulary, in, dims, "ckpt", 0);
    const auto r2 = eval::evaluate(loaded.model->encoder(), loaded.vocabulary, in, dims, "ckpt", 0);
    o.check(r1 == r2 && eval::reports_csv(r1) == eval::reports_csv(r2),
            "evaluation reports reproduce exactly from the reloaded checkpoint");
    return o;
}

std::vector<long double> oracle_ranks(std::span<const double> v) {
    std::vector<long double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (double x : v) less += x < v[i], equal += x == v[i];
        r[i] = 1.0L + less + (equal - 1) / 2.0L;
    }
    return r;
}

double oracle_spearman(std::span<const double> a, std::span<const double> b) {
    const auto ra = oracle_ranks(a), rb = oracle_ranks(b);
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) ma += ra[i], mb += rb[i];
    ma /= ra.size();
    mb /= rb.size();
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return static_cast<double>(sab / std::sqrt(saa * sbb));
}

Outcome metric_oracles() {
    Outcome o;
    std::mt19937_64 rng(110);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 5 + i % 60;
        std::vector<double> a(n), b(n);
        for (std::size_t j = 0; j < n; ++j) {
            a[j] = i % 2 ? static_cast<double>(rng() % 5) : uniform01(rng);
            b[j] = static_cast<double>(rng() % 11) / 2.0;
        }
        a[0] = -1.0;
        b[0] = -1.0;  // never constant
        worst = std::max(worst, std::abs(eval::spearman(a, b) - oracle_spearman(a, b)));
    }
    o.check(worst <= 1e-12, "Spearman vs rank-then-Pearson oracle, max error " + fmt(worst, 3));

    std::size_t mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + i % 50;
        std::vector<double> sims(n);
        std::vector<int> labels(n);
        for (std::size_t j = 0; j < n; ++j) {
            sims[j] = i % 2 ? static_cast<double>(rng() % 7) / 7.0 : 2.0 * uniform01(rng) - 1.0;
            labels[j] = static_cast<int>(rng() % 2);
        }
        // Exhaustive: every value, just below every value, and both infinities.
        std::vector<double> ts{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        for (double s : sims) ts.push_back(s), ts.push_back(std::nextafter(s, -2.0));
        double best = 0.0;
        for (double t : ts) {
            std::size_t correct = 0;
            for (std::size_t j = 0; j < n; ++j) correct += (sims[j] > t) == (labels[j] == 1);
            best = std::max(best, static_cast<double>(correct) / static_cast<double>(n));
        }
        mismatches += eval::pair_threshold_accuracy(sims, labels).accuracy != best;
    }
    o.check(mismatches == 0, "threshold sweep vs exhaustive scan: " + std::to_string(mismatches) + " of 100 differ");
    return o;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<Criterion> criteria{
        {1, "gradient correctness on the tiny config", gradient_correctness},
        {2, "CKA feature form equals Gram form", cka_oracle},
        {3, "CKA invariances and range", cka_invariances},
        {4, "nested top-k selection", nestedness},
        {5, "contrastive and KL identities", contrastive_identities},
        {6, "ablation exactness", ablation_exactness},
        {7, "smoke training on the synthetic suite", smoke_training},
        {8, "relative per-step cost", relative_cost},
        {9, "determinism and persistence", determinism_and_persistence},
        {10, "metric oracles", metric_oracles},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    bool all = true;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome.check(false, std::string("exception: ") + e.what());
        }
        for (const auto& note : outcome.notes) std::cout << "  " << note << '\n';
        std::cout << (outcome.passed ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.title << std::endl;
        all = all && outcome.passed;
    }
    return all ? 0 : 1;
}
