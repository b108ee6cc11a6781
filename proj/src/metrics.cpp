#include "domeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "domeval/error.hpp"
#include "domeval/text.hpp"

namespace domeval::metrics {

namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const Tokens& toks, std::size_t n) {
    NgramCounts counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
        ++counts[Tokens(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
    return counts;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double cosine(const providers::Vector& a, const providers::Vector& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

PRF PRF::from(double p, double r) {
    PRF out{p, r, 0.0};
    if (p + r > 0.0) out.f1 = 2.0 * p * r / (p + r);
    return out;
}

double bleu(std::string_view candidate, std::span<const std::string> references, std::size_t max_n) {
    if (references.empty()) throw Error(ErrorCode::InvalidArgument, "bleu needs a reference");
    if (max_n == 0) throw Error(ErrorCode::InvalidArgument, "bleu max_n must be >= 1");
    auto cand = word_tokens(candidate);
    if (cand.empty()) throw Error(ErrorCode::EmptyCandidate, "candidate has no tokens");
    std::vector<Tokens> refs;
    for (const auto& r : references) refs.push_back(word_tokens(r));

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        auto cand_counts = ngram_counts(cand, n);
        std::map<Tokens, std::size_t> max_ref;
        for (const auto& r : refs)
            for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t matched = 0, total = 0;
        for (const auto& [g, c] : cand_counts) {
            total += c;
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(c, it->second);
        }
        double p;
        if (matched == 0) {
            if (n == 1) return 0.0;
            p = 1.0 / (static_cast<double>(total) + 1.0);
        } else {
            p = static_cast<double>(matched) / static_cast<double>(total);
        }
        log_sum += std::log(p);
    }

    // Closest reference length, shorter one on ties.
    const double c = static_cast<double>(cand.size());
    double r = static_cast<double>(refs.front().size());
    for (const auto& ref : refs) {
        double len = static_cast<double>(ref.size());
        if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r))
            r = len;
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return clamp01(bp * std::exp(log_sum / static_cast<double>(max_n)));
}

PRF rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "rouge_n needs n >= 1");
    auto cand = word_tokens(candidate);
    auto ref = word_tokens(reference);
    if (cand.empty() || ref.empty()) throw Error(ErrorCode::EmptyInput, "rouge_n on empty text");
    auto cc = ngram_counts(cand, n);
    auto rc = ngram_counts(ref, n);
    std::size_t overlap = 0, cand_total = 0, ref_total = 0;
    for (const auto& [g, c] : cc) {
        cand_total += c;
        auto it = rc.find(g);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    for (const auto& [g, c] : rc) ref_total += c;
    double p = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
    double r = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
    return PRF::from(p, r);
}

PRF rouge_l(std::string_view candidate, std::string_view reference) {
    auto cand = word_tokens(candidate);
    auto ref = word_tokens(reference);
    if (cand.empty() || ref.empty()) throw Error(ErrorCode::EmptyInput, "rouge_l on empty text");
    std::vector<std::size_t> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j)
            cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[ref.size()]);
    return PRF::from(lcs / static_cast<double>(cand.size()), lcs / static_cast<double>(ref.size()));
}

PRF bertscore_from_vectors(std::span<const providers::Vector> cand,
                           std::span<const providers::Vector> ref) {
    if (cand.empty() || ref.empty()) throw Error(ErrorCode::EmptyInput, "bertscore on empty text");
    const auto dim = cand.front().size();
    for (const auto& v : cand)
        if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "candidate token vectors");
    for (const auto& v : ref)
        if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "reference token vectors");

    std::vector<double> best_for_cand(cand.size(), 0.0), best_for_ref(ref.size(), 0.0);
    for (std::size_t i = 0; i < cand.size(); ++i) {
        for (std::size_t j = 0; j < ref.size(); ++j) {
            double s = clamp01(cosine(cand[i], ref[j]));
            best_for_cand[i] = std::max(best_for_cand[i], s);
            best_for_ref[j] = std::max(best_for_ref[j], s);
        }
    }
    double p = 0, r = 0;
    for (double s : best_for_cand) p += s;
    for (double s : best_for_ref) r += s;
    return PRF::from(p / static_cast<double>(cand.size()), r / static_cast<double>(ref.size()));
}

PRF bertscore(std::string_view candidate, std::string_view reference,
              const providers::EmbeddingProvider& emb) {
    if (emb.granularity() != providers::Granularity::token)
        throw Error(ErrorCode::GranularityMismatch, "bertscore needs a token-granular embedder");
    auto c = emb.embed_tokens(candidate);
    auto r = emb.embed_tokens(reference);
    return bertscore_from_vectors(c, r);
}

SimilarityReport score_pair(std::string_view candidate, std::string_view reference,
                            const providers::EmbeddingProvider& emb) {
    SimilarityReport rep;
    if (word_tokens(candidate).empty() || word_tokens(reference).empty()) return rep;
    std::string ref(reference);
    rep.bleu = bleu(candidate, std::span<const std::string>(&ref, 1));
    rep.rouge1 = rouge_n(candidate, reference, 1);
    rep.rouge2 = rouge_n(candidate, reference, 2);
    rep.rougeL = rouge_l(candidate, reference);
    rep.bertscore = bertscore(candidate, reference, emb);
    return rep;
}

SimilarityReport mean_report(std::span<const SimilarityReport> reports) {
    SimilarityReport m;
    if (reports.empty()) return m;
    auto add = [](PRF& acc, const PRF& x) {
        acc.precision += x.precision;
        acc.recall += x.recall;
        acc.f1 += x.f1;
    };
    for (const auto& r : reports) {
        m.bleu += r.bleu;
        add(m.rouge1, r.rouge1);
        add(m.rouge2, r.rouge2);
        add(m.rougeL, r.rougeL);
        add(m.bertscore, r.bertscore);
    }
    const double n = static_cast<double>(reports.size());
    auto div = [n](PRF& x) {
        x.precision /= n;
        x.recall /= n;
        x.f1 /= n;
    };
    m.bleu /= n;
    div(m.rouge1);
    div(m.rouge2);
    div(m.rougeL);
    div(m.bertscore);
    return m;
}

}  // namespace domeval::metrics
