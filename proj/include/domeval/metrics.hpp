#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/providers.hpp"

namespace domeval::metrics {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    /// F1 is the harmonic mean of P and R, 0 when both are 0.
    static PRF from(double precision, double recall);
};

struct SimilarityReport {
    double bleu = 0.0;
    PRF rouge1, rouge2, rougeL, bertscore;
};

/// Sentence-level BLEU: geometric mean of clipped n-gram precisions
/// (n = 1..max_n) times the brevity penalty against the closest reference
/// length. Precisions for n > 1 with zero matches use add-one smoothing,
/// (0 + 1) / (total + 1); unigram precision is never smoothed.
double bleu(std::string_view candidate, std::span<const std::string> references,
            std::size_t max_n = 4);

PRF rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);
PRF rouge_l(std::string_view candidate, std::string_view reference);

/// Greedy-matching BERTScore without IDF weighting or baseline rescaling.
/// Each token's best cosine match is clamped to [0, 1].
PRF bertscore(std::string_view candidate, std::string_view reference,
              const providers::EmbeddingProvider& token_embedder);

/// Same as bertscore() on precomputed token vectors.
PRF bertscore_from_vectors(std::span<const providers::Vector> candidate,
                           std::span<const providers::Vector> reference);

/// All five metrics for one candidate/reference pair. Empty candidates score
/// zero everywhere instead of raising.
SimilarityReport score_pair(std::string_view candidate, std::string_view reference,
                            const providers::EmbeddingProvider& token_embedder);

/// Arithmetic mean of per-item reports.
SimilarityReport mean_report(std::span<const SimilarityReport> reports);

}  // namespace domeval::metrics
