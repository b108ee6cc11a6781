#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace domeval::ranking {

/// Per-item scores of one system on one evaluation layer. Vectors compared
/// against each other must share item_ids in the same order.
struct ScoreVector {
    std::string system;
    std::string layer;
    std::vector<std::string> item_ids;
    std::vector<double> scores;
};

struct PairwiseResult {
    std::string system_a;
    std::string system_b;
    double mean_diff = 0.0;  // mean of a_i - b_i
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool significant = false;  // 0 lies outside [ci_low, ci_high]
};

struct LeaderboardEntry {
    std::string system;
    double mean_score = 0.0;
    int rank = 1;
};

struct Leaderboard {
    std::string layer;
    std::vector<LeaderboardEntry> entries;
    std::vector<PairwiseResult> pairwise;
};

/// Linear interpolation between closest ranks, position q * (n - 1).
double percentile(std::span<const double> sorted, double q);

/// Paired percentile bootstrap of the mean score difference. Each of the
/// n_iter rounds draws n item indices with replacement from
/// SeededRng(seed).index(n) in sequence; the 95% interval is the 2.5th and
/// 97.5th percentile of the resampled means.
PairwiseResult bootstrap_pair(const ScoreVector& a, const ScoreVector& b, std::size_t n_iter,
                              std::uint64_t seed);

/// Per-pair seed: the master seed mixed with a hash of both names in
/// lexicographic order, so results do not depend on evaluation order.
std::uint64_t pair_seed(std::uint64_t master, std::string_view a, std::string_view b);

/// rank(s) = 1 + number of systems with a higher mean and a significant
/// difference to s. Entries sorted by (rank, mean desc, name).
Leaderboard rank_with_ties(std::span<const ScoreVector> systems, std::size_t n_iter,
                           std::uint64_t seed, std::size_t workers = 4);

double median(std::vector<double> values);

struct SystemRanks {
    std::string system;
    /// category -> one rank per result in that category (e.g. per subset)
    std::map<std::string, std::vector<double>> ranks;
};

struct MedianRankRow {
    std::string system;
    std::map<std::string, double> category_rank;  // within-category median
    double median_rank = 0.0;
};

/// Within-category median first, then the median across `categories`.
/// Rows sorted by (median rank, mean of category ranks, input order).
/// Throws MissingCategory when a system has no rank for a category.
std::vector<MedianRankRow> median_rank(std::span<const SystemRanks> systems,
                                       std::span<const std::string> categories);

}  // namespace domeval::ranking
