#include "mipic/objective.hpp"

#include "mipic/errors.hpp"
#include "mipic/json_util.hpp"
#include "mipic/pic.hpp"

namespace mipic {

void to_json(nlohmann::json& j, const LossBreakdown& b) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : b.sia_terms) terms.push_back({{"layer", t.layer}, {"dim", t.dim}, {"att", t.att}, {"cka", t.cka}});
    j = {{"step", b.step},   {"lr", b.learning_rate}, {"alpha", b.alpha}, {"dims", b.dims},   {"simcse", b.simcse},
         {"mrl", b.mrl},     {"sia_terms", terms}, {"att", b.att},   {"cka", b.cka},
         {"sia", b.sia},     {"chain", b.chain}, {"pic", b.pic},     {"total", b.total}};
}

void from_json(const nlohmann::json& j, LossBreakdown& b) {
    json_util::reject_unknown_keys(j, {"step", "lr", "alpha", "dims", "simcse", "mrl", "sia_terms", "att", "cka", "sia", "chain", "pic", "total"},
                        "loss breakdown");
    b = LossBreakdown{};
    j.at("step").get_to(b.step);
    j.at("lr").get_to(b.learning_rate);
    j.at("alpha").get_to(b.alpha);
    j.at("dims").get_to(b.dims);
    j.at("simcse").get_to(b.simcse);
    j.at("mrl").get_to(b.mrl);
    for (const auto& t : j.at("sia_terms")) {
        b.sia_terms.push_back({t.at("layer").get<std::size_t>(), t.at("dim").get<std::size_t>(),
                               t.at("att").get<double>(), t.at("cka").get<double>()});
    }
    j.at("att").get_to(b.att);
    j.at("cka").get_to(b.cka);
    j.at("sia").get_to(b.sia);
    j.at("chain").get_to(b.chain);
    j.at("pic").get_to(b.pic);
    j.at("total").get_to(b.total);
}

Node simcse_loss(const Node& view1, const Node& view2, double tau_sim) { return pic::info_nce(view1, view2, tau_sim); }

MrlLoss mrl_loss(const Node& full_view1, const Node& full_view2, const std::vector<std::size_t>& dims,
                 double tau_sim, const std::vector<double>& weights) {
    if (dims.empty()) throw ConfigError("mrl_loss: no nested dims");
    if (!weights.empty() && weights.size() != dims.size()) {
        throw ConfigError("mrl_loss: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(dims.size()) + " dims");
    }
    MrlLoss out;
    std::vector<Node> terms;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] == 0 || dims[i] > full_view1.cols()) {
            throw DimensionError("mrl_loss: prefix " + std::to_string(dims[i]) + " exceeds width " +
                                 std::to_string(full_view1.cols()));
        }
        Node l = simcse_loss(prefix_cols(full_view1, dims[i]), prefix_cols(full_view2, dims[i]), tau_sim);
        out.per_dim.push_back(l.item());
        terms.push_back(weights.empty() ? l : scale(l, weights[i]));
    }
    out.total = terms.size() == 1 ? terms[0] : add_n(terms);
    return out;
}

MipicModel::MipicModel(const ModelConfig& config)
    : config_((config.validate(), config)),
      init_rng_(config.seed),
      encoder_(config_, init_rng_),
      bank_(config_, init_rng_) {}

ParameterList MipicModel::parameters() const {
    ParameterList out = encoder_.parameters();
    auto extra = bank_.parameters();
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

ObjectiveTerms mipic_loss(const TokenBatch& batch, const MipicModel& model, const AblationFlags& flags,
                          const ViewSeeds& seeds, const std::vector<sia::LayerTeacher>* frozen) {
    const ModelConfig& cfg = model.config();
    const double alpha = flags.mrl_only ? 1.0 : cfg.alpha;
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    const bool aux = alpha < 1.0;

    const LayerStates v1 = model.encoder().encode(batch, seeds.first);
    const LayerStates v2 = model.encoder().encode(batch, seeds.second);
    const std::size_t last = cfg.num_layers;

    ObjectiveTerms out;
    LossBreakdown& b = out.breakdown;
    b.alpha = alpha;
    b.dims = cfg.nested_dims;

    auto mrl = mrl_loss(pool_cls(v1, last), pool_cls(v2, last), cfg.nested_dims, cfg.tau_sim, cfg.mrl_weights);
    out.mrl = mrl.total;
    b.simcse = std::move(mrl.per_dim);
    b.mrl = out.mrl.item();

    std::vector<Node> aux_terms;
    if (aux && flags.sia_enabled()) {
        auto s = sia::sia_total(v1, cfg, model.bank(), frozen);
        out.att = s.att;
        out.cka = s.cka;
        out.sia = s.total;
        b.att = s.att.item();
        b.cka = s.cka.item();
        b.sia = s.total.item();
        for (auto& layer : s.layers) {
            b.sia_terms.insert(b.sia_terms.end(), layer.terms.begin(), layer.terms.end());
            out.teachers.push_back(std::move(layer.teacher));
        }
        aux_terms.push_back(s.total);
    }
    if (aux && flags.pic_enabled()) {
        auto p = pic::pic_total(v1, cfg.checkpoints, model.bank().chain_projectors(), cfg.tau_nce);
        out.pic = p.total;
        b.chain = std::move(p.steps);
        b.pic = p.total.item();
        aux_terms.push_back(p.total);
    }

    if (!aux) {
        out.total = out.mrl;
    } else if (aux_terms.empty()) {
        out.total = scale(out.mrl, alpha);
    } else {
        const Node rest = aux_terms.size() == 1 ? aux_terms[0] : add(aux_terms[0], aux_terms[1]);
        out.total = add(scale(out.mrl, alpha), scale(rest, 1.0 - alpha));
    }
    b.total = out.total.item();
    return out;
}

}  // namespace mipic
