#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mipic {

using TokenId = std::int32_t;

/// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view sentence);

/// Whitespace-token vocabulary with three reserved ids. The on-disk form lists
/// regular tokens one per line; line i (0-based) has id i + kNumSpecial.
class Vocabulary {
public:
    static constexpr TokenId kCls = 0;
    static constexpr TokenId kPad = 1;
    static constexpr TokenId kUnk = 2;
    static constexpr std::size_t kNumSpecial = 3;

    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    /// Distinct tokens of `sentences` in lexicographic order.
    static Vocabulary build(std::span<const std::string> sentences);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Number of ids including the specials.
    std::size_t size() const noexcept { return tokens_.size() + kNumSpecial; }
    TokenId id(std::string_view token) const;
    std::string token(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// CLS followed by at most max_len - 1 token ids.
    std::vector<TokenId> encode(std::string_view sentence, std::size_t max_len) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace mipic
