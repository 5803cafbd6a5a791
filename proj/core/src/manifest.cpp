#include "mipic/manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "mipic/errors.hpp"
#include "mipic/json_util.hpp"

namespace mipic {

void to_json(nlohmann::json& j, const RunManifest& m) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& d : m.inputs) inputs.push_back({{"path", d.path}, {"sha256", d.sha256}});
    j = {{"command", m.command},           {"config", m.config},   {"seed", m.seed},
         {"code_version", m.code_version}, {"inputs", inputs},     {"outputs", m.outputs},
         {"wall_seconds", m.wall_seconds}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
    json_util::reject_unknown_keys(j, {"command", "config", "seed", "code_version", "inputs", "outputs", "wall_seconds"},
                                   "manifest");
    j.at("command").get_to(m.command);
    m.config = j.at("config");
    j.at("seed").get_to(m.seed);
    j.at("code_version").get_to(m.code_version);
    m.inputs.clear();
    for (const auto& d : j.at("inputs")) m.inputs.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
    j.at("outputs").get_to(m.outputs);
    j.at("wall_seconds").get_to(m.wall_seconds);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string() + " for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 initialisation failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1) {
            throw IoError("SHA-256 update failed");
        }
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw IoError("SHA-256 finalisation failed");
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        char b[3];
        std::snprintf(b, sizeof b, "%02x", md[i]);
        hex += b;
    }
    return hex;
}

FileDigest digest(const std::filesystem::path& path) { return {path.string(), sha256_file(path)}; }

std::string code_version() { return MIPIC_VERSION; }

void write_manifest(const std::filesystem::path& directory, const RunManifest& manifest) {
    std::filesystem::create_directories(directory);
    const auto path = directory / kManifestName;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << nlohmann::json(manifest).dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& directory) {
    const auto path = directory / kManifestName;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in).get<RunManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace mipic
