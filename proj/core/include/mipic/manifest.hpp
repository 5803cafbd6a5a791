#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mipic {

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Provenance record written once per output directory as manifest.json.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::string code_version;
    std::vector<FileDigest> inputs;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
FileDigest digest(const std::filesystem::path& path);

std::string code_version();

inline constexpr const char* kManifestName = "manifest.json";
void write_manifest(const std::filesystem::path& directory, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& directory);

}  // namespace mipic
