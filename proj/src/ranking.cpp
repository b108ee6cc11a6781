#include "domeval/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/parallel.hpp"
#include "domeval/rng.hpp"
#include "domeval/util.hpp"

namespace domeval::ranking {

namespace {

double mean(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double percentile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "percentile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

PairwiseResult bootstrap_pair(const ScoreVector& a, const ScoreVector& b, std::size_t n_iter,
                              std::uint64_t seed) {
    if (a.scores.size() != b.scores.size() || a.item_ids != b.item_ids ||
        a.item_ids.size() != a.scores.size())
        throw Error(ErrorCode::MisalignedVectors, a.system + " vs " + b.system);
    const std::size_t n = a.scores.size();
    if (n < 2) throw Error(ErrorCode::TooFewItems, "bootstrap needs at least 2 items");
    if (n_iter == 0) throw Error(ErrorCode::InvalidArgument, "n_iter must be >= 1");
    if (n < 10) spdlog::warn("bootstrap {} vs {} on only {} items", a.system, b.system, n);

    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a.scores[i] - b.scores[i];

    SeededRng rng(seed);
    std::vector<double> means(n_iter);
    for (std::size_t it = 0; it < n_iter; ++it) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) sum += diff[rng.index(n)];
        means[it] = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());

    PairwiseResult r;
    r.system_a = a.system;
    r.system_b = b.system;
    r.mean_diff = mean(diff);
    r.ci_low = percentile(means, 0.025);
    r.ci_high = percentile(means, 0.975);
    r.significant = r.ci_low > 0.0 || r.ci_high < 0.0;
    return r;
}

std::uint64_t pair_seed(std::uint64_t master, std::string_view a, std::string_view b) {
    if (b < a) std::swap(a, b);
    std::string label(a);
    label.push_back('\0');
    label.append(b);
    return derive_seed(master, label);
}

Leaderboard rank_with_ties(std::span<const ScoreVector> systems, std::size_t n_iter,
                           std::uint64_t seed, std::size_t workers) {
    Leaderboard board;
    if (systems.empty()) return board;
    board.layer = systems.front().layer;

    // Canonical orientation: system_a is the lexicographically smaller name.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < systems.size(); ++i)
        for (std::size_t j = i + 1; j < systems.size(); ++j) {
            if (systems[i].system == systems[j].system)
                throw Error(ErrorCode::InvalidArgument, "duplicate system " + systems[i].system);
            if (systems[j].system < systems[i].system)
                pairs.emplace_back(j, i);
            else
                pairs.emplace_back(i, j);
        }

    board.pairwise.resize(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t k) {
        const auto& a = systems[pairs[k].first];
        const auto& b = systems[pairs[k].second];
        board.pairwise[k] = bootstrap_pair(a, b, n_iter, pair_seed(seed, a.system, b.system));
    });

    std::vector<int> better(systems.size(), 0);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& r = board.pairwise[k];
        if (!r.significant) continue;
        if (r.mean_diff > 0)
            ++better[pairs[k].second];
        else if (r.mean_diff < 0)
            ++better[pairs[k].first];
    }

    for (std::size_t i = 0; i < systems.size(); ++i)
        board.entries.push_back({systems[i].system, mean(systems[i].scores), 1 + better[i]});
    std::sort(board.entries.begin(), board.entries.end(), [](const auto& x, const auto& y) {
        if (x.rank != y.rank) return x.rank < y.rank;
        if (x.mean_score != y.mean_score) return x.mean_score > y.mean_score;
        return x.system < y.system;
    });
    return board;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "median of empty sample");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

std::vector<MedianRankRow> median_rank(std::span<const SystemRanks> systems,
                                       std::span<const std::string> categories) {
    if (categories.empty()) throw Error(ErrorCode::InvalidArgument, "no categories given");
    struct Keyed {
        MedianRankRow row;
        double mean_rank;
        std::size_t order;
    };
    std::vector<Keyed> rows;
    for (std::size_t s = 0; s < systems.size(); ++s) {
        const auto& sys = systems[s];
        Keyed k{{sys.system, {}, 0.0}, 0.0, s};
        std::vector<double> per_cat;
        for (const auto& cat : categories) {
            auto it = sys.ranks.find(cat);
            if (it == sys.ranks.end() || it->second.empty())
                throw Error(ErrorCode::MissingCategory, sys.system + " has no rank for " + cat);
            double m = median(it->second);
            k.row.category_rank[cat] = m;
            per_cat.push_back(m);
        }
        k.mean_rank = mean(per_cat);
        k.row.median_rank = median(per_cat);
        rows.push_back(std::move(k));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Keyed& x, const Keyed& y) {
        if (x.row.median_rank != y.row.median_rank) return x.row.median_rank < y.row.median_rank;
        if (x.mean_rank != y.mean_rank) return x.mean_rank < y.mean_rank;
        return x.order < y.order;
    });
    std::vector<MedianRankRow> out;
    for (auto& k : rows) out.push_back(std::move(k.row));
    return out;
}

}  // namespace domeval::ranking
