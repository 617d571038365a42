#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace prefstream {

/// Pluggable token accounting. The engine never tokenizes for a model; it only
/// needs counts for limits and a way to cut text from the left.
class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual std::vector<std::string_view> split(std::string_view text) const = 0;
    std::size_t count(std::string_view text) const { return split(text).size(); }
    /// Suffix of `text` holding its last `n` tokens.
    virtual std::string_view keep_last(std::string_view text, std::size_t n) const = 0;
};

/// Whitespace-delimited tokens.
class WhitespaceTokenCounter final : public TokenCounter {
public:
    std::vector<std::string_view> split(std::string_view text) const override;
    std::string_view keep_last(std::string_view text, std::size_t n) const override;
};

std::shared_ptr<const TokenCounter> default_token_counter();

} // namespace prefstream
