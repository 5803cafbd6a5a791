#include "mipic/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "mipic/errors.hpp"
#include "mipic/json_util.hpp"

namespace mipic {

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) { return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}}; }

Matrix matrix_from(const json& j, const std::string& where) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) {
        throw InputError(where + ": " + std::to_string(data.size()) + " values for shape " + std::to_string(rows) +
                         "x" + std::to_string(cols));
    }
    return Matrix(rows, cols, std::move(data));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MipicModel& model, const Vocabulary& vocabulary,
                     const OptimizerState* optimizer) {
    if (vocabulary.size() != model.config().vocab_size) {
        throw ConfigError("checkpoint: vocabulary has " + std::to_string(vocabulary.size()) +
                          " ids but the model expects " + std::to_string(model.config().vocab_size));
    }
    json params = json::array();
    for (const auto& p : model.parameters()) {
        json entry = matrix_json(p.node.value());
        entry["name"] = p.name;
        params.push_back(std::move(entry));
    }
    json doc = {{"format", "mipic-checkpoint"},
                {"version", kCheckpointVersion},
                {"model_config", model.config()},
                {"vocabulary", vocabulary.tokens()},
                {"parameters", std::move(params)}};
    if (optimizer) {
        json m = json::array(), v = json::array();
        for (const auto& x : optimizer->m) m.push_back(matrix_json(x));
        for (const auto& x : optimizer->v) v.push_back(matrix_json(x));
        doc["optimizer"] = {{"step", optimizer->step}, {"m", std::move(m)}, {"v", std::move(v)}};
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << doc.dump() << '\n';
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("corrupt checkpoint " + path.string() + ": " + e.what());
    }

    LoadedCheckpoint out;
    try {
        json_util::reject_unknown_keys(doc, {"format", "version", "model_config", "vocabulary", "parameters", "optimizer"},
                                       "checkpoint");
        if (doc.value("format", "") != "mipic-checkpoint") throw InputError(path.string() + " is not a mipic checkpoint");
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw InputError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
        }
        out.config = doc.at("model_config").get<ModelConfig>();
        if (expected) {
            const auto differences = diff(*expected, out.config);
            if (!differences.empty()) {
                std::string msg = "checkpoint config differs from the expected config:";
                for (const auto& d : differences) msg += "\n  " + d;
                throw ConfigError(msg);
            }
        }
        out.vocabulary = Vocabulary(doc.at("vocabulary").get<std::vector<std::string>>());
        out.model = std::make_unique<MipicModel>(out.config);

        const auto& stored = doc.at("parameters");
        const ParameterList params = out.model->parameters();
        if (stored.size() != params.size()) {
            throw InputError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model has " +
                             std::to_string(params.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto name = stored[i].at("name").get<std::string>();
            if (name != params[i].name) {
                throw InputError("checkpoint parameter " + std::to_string(i) + " is '" + name + "', expected '" +
                                 params[i].name + "'");
            }
            Matrix value = matrix_from(stored[i], name);
            Node node = params[i].node;
            if (!value.same_shape(node.value())) {
                throw InputError("checkpoint parameter '" + name + "' has shape " + value.shape_str() + ", expected " +
                                 node.value().shape_str());
            }
            node.mutable_value() = std::move(value);
        }

        if (auto it = doc.find("optimizer"); it != doc.end()) {
            OptimizerState st;
            st.step = it->at("step").get<std::size_t>();
            for (const auto& x : it->at("m")) st.m.push_back(matrix_from(x, "optimizer.m"));
            for (const auto& x : it->at("v")) st.v.push_back(matrix_from(x, "optimizer.v"));
            if (st.m.size() != params.size() || st.v.size() != params.size()) {
                throw InputError("checkpoint optimizer state does not match the parameter list");
            }
            out.optimizer = std::move(st);
        }
    } catch (const json::exception& e) {
        throw InputError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace mipic
