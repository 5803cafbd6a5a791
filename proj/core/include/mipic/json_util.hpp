#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mipic/errors.hpp"

namespace mipic::json_util {

/// Throws ConfigError if `j` is not an object or carries a key outside `allowed`.
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_if_present(const nlohmann::json& j, const char* key, T& out, std::string_view where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        it->get_to(out);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(where) + "." + key + ": " + e.what());
    }
}

}  // namespace mipic::json_util
