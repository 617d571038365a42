#include "prefstream/tokens.hpp"

namespace prefstream {

namespace {

bool is_space(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

} // namespace

std::vector<std::string_view> WhitespaceTokenCounter::split(std::string_view text) const {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string_view WhitespaceTokenCounter::keep_last(std::string_view text, std::size_t n) const {
    auto tokens = split(text);
    if (tokens.size() <= n) return text;
    if (n == 0) return {};
    const auto& first = tokens[tokens.size() - n];
    return text.substr(static_cast<std::size_t>(first.data() - text.data()));
}

std::shared_ptr<const TokenCounter> default_token_counter() {
    static const auto counter = std::make_shared<const WhitespaceTokenCounter>();
    return counter;
}

} // namespace prefstream
