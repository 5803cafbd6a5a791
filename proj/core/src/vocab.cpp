#include "mipic/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "mipic/errors.hpp"

namespace mipic {

std::vector<std::string> tokenize(std::string_view sentence) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : sentence) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw InputError("vocabulary line " + std::to_string(i + 1) + " is empty");
        const auto [_, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i + kNumSpecial));
        if (!inserted) throw InputError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
}

Vocabulary Vocabulary::build(std::span<const std::string> sentences) {
    std::set<std::string> distinct;
    for (const auto& s : sentences) {
        for (auto& t : tokenize(s)) distinct.insert(std::move(t));
    }
    return Vocabulary(std::vector<std::string>(distinct.begin(), distinct.end()));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw IoError("failed writing vocabulary file " + path.string());
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

std::string Vocabulary::token(TokenId id) const {
    switch (id) {
        case kCls: return "[CLS]";
        case kPad: return "[PAD]";
        case kUnk: return "[UNK]";
        default: break;
    }
    const auto i = static_cast<std::size_t>(id) - kNumSpecial;
    if (id < 0 || i >= tokens_.size()) throw InputError("token id " + std::to_string(id) + " out of range");
    return tokens_[i];
}

std::vector<TokenId> Vocabulary::encode(std::string_view sentence, std::size_t max_len) const {
    std::vector<TokenId> ids{kCls};
    for (const auto& t : tokenize(sentence)) {
        if (ids.size() >= max_len) break;
        ids.push_back(id(t));
    }
    return ids;
}

}  // namespace mipic
