#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace domeval {

struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Splits text into token spans. Token windows for chunking and the
/// chapter size cap are both measured through this interface, so a
/// byte-pair tokenizer can be dropped in without touching the corpus code.
class TokenEstimator {
public:
    virtual ~TokenEstimator() = default;
    virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;
    virtual std::size_t count(std::string_view text) const { return spans(text).size(); }
};

/// Default estimator: each ASCII punctuation character is one token, runs
/// of word characters (ASCII alphanumerics and any non-ASCII byte) become
/// one token per `max_piece` bytes, whitespace is never a token.
class HeuristicTokenEstimator final : public TokenEstimator {
public:
    explicit HeuristicTokenEstimator(std::size_t max_piece = 8) : max_piece_(max_piece) {}
    std::vector<TokenSpan> spans(std::string_view text) const override;
    std::size_t count(std::string_view text) const override;

private:
    std::size_t max_piece_;
};

const TokenEstimator& default_estimator();

bool is_word_byte(unsigned char c);

/// Lowercased word tokens with punctuation dropped. Shared tokenizer for the
/// surface metrics, the lexical mocks and the faithfulness fallback.
std::vector<std::string> word_tokens(std::string_view text);

bool is_stopword(std::string_view lowered_word);

/// word_tokens() minus stopwords.
std::vector<std::string> content_tokens(std::string_view text);

}  // namespace domeval
