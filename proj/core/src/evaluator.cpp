#include "mipic/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mipic/errors.hpp"
#include "mipic/json_util.hpp"

namespace mipic::eval {

namespace {

std::string format_double(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw InputError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

// Calls fn(fields, where) for every non-blank line with exactly `columns` fields.
template <typename Fn>
void read_rows(const std::filesystem::path& path, std::size_t columns, Fn fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(number);
        auto fields = split_tabs(line);
        if (fields.size() != columns) {
            throw InputError(where + ": expected " + std::to_string(columns) + " tab-separated fields, found " +
                             std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i + 1 < columns; ++i) {
            if (tokenize(fields[i]).empty()) throw InputError(where + ": empty sentence in field " + std::to_string(i + 1));
        }
        fn(fields, where);
    }
    if (number == 0) throw InputError("dataset " + path.string() + " is empty");
}

double parse_real(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw InputError(where + ": '" + s + "' is not a finite number");
    return v;
}

}  // namespace

Matrix embed_full(const Encoder& encoder, const Vocabulary& vocabulary, std::span<const std::string> sentences,
                  std::size_t batch_size) {
    const std::size_t d = encoder.config().hidden_dim;
    Matrix out(sentences.size(), d);
    for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
        const std::size_t end = std::min(sentences.size(), start + batch_size);
        std::vector<std::vector<TokenId>> seqs;
        for (std::size_t i = start; i < end; ++i) seqs.push_back(vocabulary.encode(sentences[i], encoder.config().max_len));
        const LayerStates states = encoder.encode_inference(TokenBatch::from_sequences(seqs));
        const Matrix cls = pool_cls(states, encoder.config().num_layers).value();
        for (std::size_t i = start; i < end; ++i) {
            std::copy(cls.row(i - start).begin(), cls.row(i - start).end(), out.row(i).begin());
        }
    }
    return out;
}

Matrix truncate(const Matrix& full, std::size_t dim) {
    if (dim == 0 || dim > full.cols()) {
        throw ConfigError("embedding width " + std::to_string(dim) + " outside [1, " + std::to_string(full.cols()) + "]");
    }
    return la::l2_normalize_rows(la::slice_cols(full, 0, dim));
}

Matrix embed(const Encoder& encoder, const Vocabulary& vocabulary, std::span<const std::string> sentences,
             std::size_t dim) {
    return truncate(embed_full(encoder, vocabulary, sentences), dim);
}

std::vector<double> row_cosines(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw DimensionError("row_cosines: " + a.shape_str() + " vs " + b.shape_str());
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = la::dot(a.row(i), b.row(i));
    return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require_same_length(x.size(), y.size(), "pearson");
    if (x.size() < 2) throw InputError("pearson: need at least two observations");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateError("correlation is undefined for a constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> predicted, std::span<const double> gold) {
    require_same_length(predicted.size(), gold.size(), "spearman");
    const auto rp = average_ranks(predicted);
    const auto rg = average_ranks(gold);
    return pearson(rp, rg);
}

std::vector<double> threshold_candidates(std::span<const double> sims) {
    std::vector<double> sorted(sims.begin(), sims.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> out{-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) out.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    out.push_back(std::numeric_limits<double>::infinity());
    return out;
}

double threshold_accuracy(std::span<const double> sims, std::span<const int> labels, double threshold) {
    require_same_length(sims.size(), labels.size(), "threshold_accuracy");
    if (sims.empty()) throw InputError("threshold_accuracy: no pairs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < sims.size(); ++i) correct += (sims[i] > threshold ? 1 : 0) == labels[i];
    return static_cast<double>(correct) / static_cast<double>(sims.size());
}

ThresholdResult pair_threshold_accuracy(std::span<const double> sims, std::span<const int> labels) {
    require_same_length(sims.size(), labels.size(), "pair_threshold_accuracy");
    if (sims.empty()) throw InputError("pair_threshold_accuracy: no pairs");
    for (int l : labels) {
        if (l != 0 && l != 1) throw InputError("pair labels must be 0 or 1, got " + std::to_string(l));
    }
    // Sweep candidates in ascending order, moving pairs from predicted-positive
    // to predicted-negative as the threshold passes their similarity.
    std::vector<std::size_t> order(sims.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] < sims[b]; });
    std::size_t correct = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    std::size_t next = 0;
    ThresholdResult best{0.0, -1.0};
    for (double t : threshold_candidates(sims)) {
        while (next < order.size() && !(sims[order[next]] > t)) {
            correct += labels[order[next]] == 0 ? 1 : 0;
            correct -= labels[order[next]] == 1 ? 1 : 0;
            ++next;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(sims.size());
        if (acc > best.accuracy) best = {t, acc};
    }
    return best;
}

double macro_f1(std::span<const std::string> gold, std::span<const std::string> predicted) {
    require_same_length(gold.size(), predicted.size(), "macro_f1");
    if (gold.empty()) throw InputError("macro_f1: no examples");
    std::set<std::string> classes(gold.begin(), gold.end());
    classes.insert(predicted.begin(), predicted.end());
    double total = 0.0;
    for (const auto& c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            const bool g = gold[i] == c, p = predicted[i] == c;
            tp += g && p;
            fp += !g && p;
            fn += g && !p;
        }
        const double denom = static_cast<double>(2 * tp + fp + fn);
        total += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

double logistic_probe(const Matrix& train, std::span<const std::string> train_labels, const Matrix& test,
                      std::span<const std::string> test_labels, const ProbeOptions& options) {
    require_same_length(train.rows(), train_labels.size(), "logistic_probe (train)");
    require_same_length(test.rows(), test_labels.size(), "logistic_probe (test)");
    if (train.cols() != test.cols()) throw DimensionError("logistic_probe: train/test widths differ");
    const std::vector<std::string> classes = [&] {
        std::set<std::string> s(train_labels.begin(), train_labels.end());
        return std::vector<std::string>(s.begin(), s.end());
    }();
    if (classes.size() < 2) throw InputError("logistic_probe: training data needs at least two classes");
    for (const auto& l : std::set<std::string>(test_labels.begin(), test_labels.end())) {
        if (!std::binary_search(classes.begin(), classes.end(), l)) {
            spdlog::warn("test label '{}' never occurs in training data; its examples count as errors", l);
        }
    }

    const std::size_t n = train.rows(), d = train.cols(), k = classes.size();
    // Standardise with training statistics so the fixed step size suits any feature scale.
    const Matrix mu = la::col_mean(train);
    Matrix sd(1, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) sd(0, c) += (train(i, c) - mu(0, c)) * (train(i, c) - mu(0, c));
    }
    for (double& v : sd.data()) v = std::sqrt(v / static_cast<double>(n)) + 1e-12;
    auto standardise = [&](const Matrix& x) {
        Matrix out = x;
        for (std::size_t i = 0; i < out.rows(); ++i) {
            for (std::size_t c = 0; c < d; ++c) out(i, c) = (out(i, c) - mu(0, c)) / sd(0, c);
        }
        return out;
    };
    const Matrix x_train = standardise(train);
    const Matrix x_test = standardise(test);
    Matrix targets(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = std::lower_bound(classes.begin(), classes.end(), train_labels[i]) - classes.begin();
        targets(i, static_cast<std::size_t>(c)) = 1.0;
    }
    Matrix w(d, k), b(1, k);
    auto probabilities = [&](const Matrix& x) {
        Matrix logits = la::matmul(x, w);
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            auto row = logits.row(i);
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, row[c] += b(0, c));
            double z = 0.0;
            for (double& v : row) z += (v = std::exp(v - mx));
            for (double& v : row) v /= z;
        }
        return logits;
    };
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t it = 0; it < options.iterations; ++it) {
        Matrix residual = la::sub(probabilities(x_train), targets);
        Matrix gw = la::scale(la::matmul_tn(x_train, residual), inv_n);
        la::axpy(options.l2, w, gw);
        la::axpy(-options.learning_rate, gw, w);
        const Matrix gb = la::col_mean(residual);
        la::axpy(-options.learning_rate, gb, b);
    }

    const Matrix p = probabilities(x_test);
    std::vector<std::string> predicted;
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const auto row = p.row(i);
        predicted.push_back(classes[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())]);
    }
    return macro_f1(test_labels, predicted);
}

StsDataset parse_sts(const std::filesystem::path& path) {
    StsDataset out;
    read_rows(path, 3, [&](const std::vector<std::string>& f, const std::string& where) {
        out.first.push_back(f[0]);
        out.second.push_back(f[1]);
        out.scores.push_back(parse_real(f[2], where));
    });
    if (out.scores.size() < 2) throw InputError("STS dataset " + path.string() + " needs at least two pairs");
    return out;
}

PairDataset parse_pairs(const std::filesystem::path& path) {
    PairDataset out;
    read_rows(path, 3, [&](const std::vector<std::string>& f, const std::string& where) {
        if (f[2] != "0" && f[2] != "1") throw InputError(where + ": pair label must be 0 or 1, got '" + f[2] + "'");
        out.first.push_back(f[0]);
        out.second.push_back(f[1]);
        out.labels.push_back(f[2] == "1" ? 1 : 0);
    });
    return out;
}

ClassificationDataset parse_classification(const std::filesystem::path& path) {
    ClassificationDataset out;
    read_rows(path, 2, [&](const std::vector<std::string>& f, const std::string& where) {
        if (f[1].empty()) throw InputError(where + ": empty label");
        out.sentences.push_back(f[0]);
        out.labels.push_back(f[1]);
    });
    return out;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json e = {{"dim", row.dim}, {"value", row.value}};
        if (row.threshold) e["threshold"] = std::isfinite(*row.threshold) ? nlohmann::json(*row.threshold)
                                                                          : nlohmann::json(*row.threshold > 0 ? "inf" : "-inf");
        rows.push_back(std::move(e));
    }
    j = {{"dataset", r.dataset}, {"task", r.task},   {"metric", r.metric},
         {"checkpoint", r.checkpoint}, {"seed", r.seed}, {"rows", std::move(rows)}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
    json_util::reject_unknown_keys(j, {"dataset", "task", "metric", "checkpoint", "seed", "rows"}, "eval report");
    r = EvalReport{};
    j.at("dataset").get_to(r.dataset);
    j.at("task").get_to(r.task);
    j.at("metric").get_to(r.metric);
    j.at("checkpoint").get_to(r.checkpoint);
    j.at("seed").get_to(r.seed);
    for (const auto& e : j.at("rows")) {
        MetricRow row{e.at("dim").get<std::size_t>(), e.at("value").get<double>(), std::nullopt};
        if (auto t = e.find("threshold"); t != e.end()) {
            if (t->is_string()) {
                row.threshold = t->get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                               : -std::numeric_limits<double>::infinity();
            } else {
                row.threshold = t->get<double>();
            }
        }
        r.rows.push_back(row);
    }
}

std::vector<EvalReport> evaluate(const Encoder& encoder, const Vocabulary& vocabulary, const EvalInputs& inputs,
                                 std::span<const std::size_t> dims, const std::string& checkpoint_id,
                                 std::uint64_t seed) {
    if (dims.empty()) throw ConfigError("evaluate: no dims requested");
    for (std::size_t d : dims) encoder.config().prefix_index(d);
    if (inputs.cls_train.has_value() != inputs.cls_test.has_value()) {
        throw ConfigError("classification needs both a training and a test file");
    }
    auto make = [&](const std::filesystem::path& path, const char* task, const char* metric) {
        EvalReport r;
        r.dataset = path.filename().string();
        r.task = task;
        r.metric = metric;
        r.checkpoint = checkpoint_id;
        r.seed = seed;
        return r;
    };

    std::vector<EvalReport> out;
    if (inputs.sts) {
        const auto data = parse_sts(*inputs.sts);
        const Matrix a = embed_full(encoder, vocabulary, data.first);
        const Matrix b = embed_full(encoder, vocabulary, data.second);
        EvalReport r = make(*inputs.sts, "sts", "spearman");
        for (std::size_t d : dims) r.rows.push_back({d, spearman(row_cosines(truncate(a, d), truncate(b, d)), data.scores), {}});
        out.push_back(std::move(r));
    }
    if (inputs.pairs) {
        const auto data = parse_pairs(*inputs.pairs);
        const Matrix a = embed_full(encoder, vocabulary, data.first);
        const Matrix b = embed_full(encoder, vocabulary, data.second);
        EvalReport r = make(*inputs.pairs, "pairs", "pair_accuracy");
        for (std::size_t d : dims) {
            const auto res = pair_threshold_accuracy(row_cosines(truncate(a, d), truncate(b, d)), data.labels);
            r.rows.push_back({d, res.accuracy, res.threshold});
        }
        out.push_back(std::move(r));
    }
    if (inputs.cls_train) {
        const auto train = parse_classification(*inputs.cls_train);
        const auto test = parse_classification(*inputs.cls_test);
        const Matrix a = embed_full(encoder, vocabulary, train.sentences);
        const Matrix b = embed_full(encoder, vocabulary, test.sentences);
        EvalReport r = make(*inputs.cls_test, "classification", "probe_f1");
        for (std::size_t d : dims) {
            r.rows.push_back({d, logistic_probe(truncate(a, d), train.labels, truncate(b, d), test.labels), {}});
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) throw ConfigError("evaluate: no dataset given");
    return out;
}

std::string reports_csv(std::span<const EvalReport> reports) {
    std::set<std::size_t> dims;
    for (const auto& r : reports) {
        for (const auto& row : r.rows) dims.insert(row.dim);
    }
    std::string out = "dim";
    for (const auto& r : reports) out += "," + r.dataset + ":" + r.metric;
    out += '\n';
    for (std::size_t d : dims) {
        out += std::to_string(d);
        for (const auto& r : reports) {
            out += ',';
            for (const auto& row : r.rows) {
                if (row.dim == d) out += format_double(row.value);
            }
        }
        out += '\n';
    }
    return out;
}

std::string reports_plot_data(std::span<const EvalReport> reports) {
    std::string out;
    for (const auto& r : reports) {
        out += "# " + r.dataset + " " + r.metric + "\n";
        for (const auto& row : r.rows) out += std::to_string(row.dim) + " " + format_double(row.value) + "\n";
        out += '\n';
    }
    return out;
}

}  // namespace mipic::eval
