#include "domeval/text.hpp"

#include <algorithm>
#include <cctype>

namespace domeval {

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

static bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::vector<TokenSpan> HeuristicTokenEstimator::spans(std::string_view text) const {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        auto c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
        } else if (is_word_byte(c)) {
            std::size_t j = i;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            for (std::size_t p = i; p < j; p += max_piece_)
                out.push_back({p, std::min(p + max_piece_, j)});
            i = j;
        } else {
            out.push_back({i, i + 1});
            ++i;
        }
    }
    return out;
}

std::size_t HeuristicTokenEstimator::count(std::string_view text) const {
    std::size_t total = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        auto c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
        } else if (is_word_byte(c)) {
            std::size_t j = i;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            total += (j - i + max_piece_ - 1) / max_piece_;
            i = j;
        } else {
            ++total;
            ++i;
        }
    }
    return total;
}

const TokenEstimator& default_estimator() {
    static const HeuristicTokenEstimator instance;
    return instance;
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {
const std::vector<std::string_view>& stopwords() {
    static const std::vector<std::string_view> words = [] {
        std::vector<std::string_view> w = {
            "a", "about", "above", "after", "again", "against", "all", "also", "am", "an",
            "and", "any", "are", "as", "at", "be", "been", "before", "being", "below",
            "between", "both", "but", "by", "can", "could", "did", "do", "does", "doing",
            "down", "during", "each", "few", "for", "from", "further", "had", "has", "have",
            "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into",
            "is", "it", "its", "itself", "just", "me", "more", "most", "my", "no", "nor", "not",
            "of", "off", "on", "once", "only", "or", "other", "our", "out", "over", "own",
            "same", "she", "should", "so", "some", "such", "than", "that", "the", "their",
            "them", "then", "there", "these", "they", "this", "those", "to", "too", "under",
            "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
            "while", "who", "whom", "why", "will", "with", "would", "you", "your",
        };
        std::sort(w.begin(), w.end());
        return w;
    }();
    return words;
}
}  // namespace

bool is_stopword(std::string_view w) {
    const auto& sw = stopwords();
    return std::binary_search(sw.begin(), sw.end(), w);
}

std::vector<std::string> content_tokens(std::string_view text) {
    auto words = word_tokens(text);
    std::erase_if(words, [](const std::string& w) { return is_stopword(w); });
    return words;
}

}  // namespace domeval
