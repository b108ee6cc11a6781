#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "domeval/error.hpp"
#include "domeval/ranking.hpp"
#include "domeval/rng.hpp"

using namespace domeval;
using namespace domeval::ranking;

namespace {

ScoreVector make(std::string name, std::vector<double> scores) {
    ScoreVector v{std::move(name), "mcq", {}, std::move(scores)};
    for (std::size_t i = 0; i < v.scores.size(); ++i) v.item_ids.push_back("q" + std::to_string(i));
    return v;
}

// Independent reference: tallies how often each item is drawn, then forms
// the weighted mean; percentiles via nearest ranks and an explicit blend.
std::pair<double, double> reference_ci(const std::vector<double>& a, const std::vector<double>& b,
                                       std::size_t n_iter, std::uint64_t seed) {
    const std::size_t n = a.size();
    SeededRng rng(seed);
    std::vector<double> stats;
    for (std::size_t it = 0; it < n_iter; ++it) {
        std::vector<std::size_t> hits(n, 0);
        for (std::size_t k = 0; k < n; ++k) ++hits[rng.index(n)];
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(hits[i]) * (a[i] - b[i]);
        stats.push_back(s / static_cast<double>(n));
    }
    std::sort(stats.begin(), stats.end());
    auto q = [&](double p) {
        double h = (static_cast<double>(stats.size()) - 1.0) * p;
        double fl = std::floor(h);
        std::size_t i = static_cast<std::size_t>(fl);
        if (i + 1 >= stats.size()) return stats.back();
        return stats[i] * (1.0 - (h - fl)) + stats[i + 1] * (h - fl);
    };
    return {q(0.025), q(0.975)};
}

}  // namespace

TEST_CASE("percentile interpolates linearly") {
    std::vector<double> s{0, 10, 20, 30};
    CHECK(percentile(s, 0.0) == 0.0);
    CHECK(percentile(s, 1.0) == 30.0);
    CHECK(percentile(s, 0.5) == doctest::Approx(15.0));
    CHECK(percentile(s, 0.025) == doctest::Approx(0.75));
}

TEST_CASE("bootstrap_pair") {
    SUBCASE("identical vectors") {
        auto a = make("a", {0.2, 0.5, 0.9, 0.1});
        auto r = bootstrap_pair(a, make("b", a.scores), 1000, 7);
        CHECK(r.mean_diff == 0.0);
        CHECK(r.ci_low == 0.0);
        CHECK(r.ci_high == 0.0);
        CHECK_FALSE(r.significant);
    }
    SUBCASE("zero-variance differences") {
        for (std::size_t n : {2u, 5u, 30u}) {
            auto r = bootstrap_pair(make("a", std::vector<double>(n, 1.0)),
                                    make("b", std::vector<double>(n, 0.0)), 1000, 3);
            CHECK(r.ci_low == 1.0);
            CHECK(r.ci_high == 1.0);
            CHECK(r.significant);
        }
    }
    SUBCASE("matches the reference bootstrap on the shared index stream") {
        std::vector<double> a{1, 1, 0, 1, 0}, b{0, 1, 0, 0, 0};
        for (std::uint64_t seed : {0ull, 1ull, 42ull, 123456789ull}) {
            auto r = bootstrap_pair(make("a", a), make("b", b), 1000, seed);
            auto [lo, hi] = reference_ci(a, b, 1000, seed);
            CHECK(std::abs(r.ci_low - lo) <= 1e-12);
            CHECK(std::abs(r.ci_high - hi) <= 1e-12);
            CHECK(r.mean_diff == doctest::Approx(0.4));
            CHECK(r.significant == (lo > 0 || hi < 0));
        }
    }
    SUBCASE("errors") {
        auto a = make("a", {1, 0, 1});
        try {
            bootstrap_pair(a, make("b", {1, 0}), 10, 0);
            FAIL("expected MisalignedVectors");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::MisalignedVectors);
        }
        auto b = make("b", {1, 0, 1});
        b.item_ids[1] = "other";
        CHECK_THROWS_AS(bootstrap_pair(a, b, 10, 0), Error);
        try {
            bootstrap_pair(make("a", {1}), make("b", {0}), 10, 0);
            FAIL("expected TooFewItems");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::TooFewItems);
        }
    }
}

TEST_CASE("bootstrap properties") {
    SeededRng gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + gen.index(40);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = gen.uniform();
            b[i] = gen.uniform();
        }
        std::uint64_t seed = gen.next_u64();
        auto ab = bootstrap_pair(make("a", a), make("b", b), 300, seed);
        auto ba = bootstrap_pair(make("b", b), make("a", a), 300, seed);
        CHECK(ab.mean_diff == doctest::Approx(-ba.mean_diff).epsilon(1e-12));
        CHECK(ab.ci_low == doctest::Approx(-ba.ci_high).epsilon(1e-12));
        CHECK(ab.ci_high == doctest::Approx(-ba.ci_low).epsilon(1e-12));
        CHECK(ab.significant == ba.significant);

        double c = gen.uniform();
        auto sa = a, sb = b;
        for (auto& x : sa) x += c;
        for (auto& x : sb) x += c;
        auto shifted = bootstrap_pair(make("a", sa), make("b", sb), 300, seed);
        CHECK(shifted.significant == ab.significant);
        CHECK(ab.significant == (ab.ci_low > 0 || ab.ci_high < 0));
    }
}

TEST_CASE("pair_seed is symmetric and name-dependent") {
    CHECK(pair_seed(5, "x", "y") == pair_seed(5, "y", "x"));
    CHECK(pair_seed(5, "x", "y") != pair_seed(6, "x", "y"));
    CHECK(pair_seed(5, "ab", "c") != pair_seed(5, "a", "bc"));
}

TEST_CASE("rank_with_ties") {
    SUBCASE("all pairs significant") {
        std::vector<ScoreVector> s{make("low", std::vector<double>(20, 0.1)),
                                   make("high", std::vector<double>(20, 0.9)),
                                   make("mid", std::vector<double>(20, 0.5))};
        auto board = rank_with_ties(s, 1000, 1);
        REQUIRE(board.entries.size() == 3);
        CHECK(board.entries[0].system == "high");
        CHECK(board.entries[0].rank == 1);
        CHECK(board.entries[1].rank == 2);
        CHECK(board.entries[2].rank == 3);
        CHECK(board.pairwise.size() == 3);
    }
    SUBCASE("identical systems share rank 1") {
        std::vector<ScoreVector> s{make("a", {0.1, 0.7, 0.3}), make("b", {0.1, 0.7, 0.3})};
        auto board = rank_with_ties(s, 1000, 1);
        CHECK(board.entries[0].rank == 1);
        CHECK(board.entries[1].rank == 1);
    }
    SUBCASE("four systems with one non-significant pair") {
        // A and B differ by one item out of 20 (noisy, not significant);
        // everything else is separated by constant gaps.
        std::vector<double> base(20, 0.9);
        auto b = base;
        b[0] = 0.0;
        std::vector<ScoreVector> s{make("D", std::vector<double>(20, 0.0)), make("B", b),
                                   make("C", std::vector<double>(20, 0.5)), make("A", base)};
        auto board = rank_with_ties(s, 1000, 99);
        // Hand evaluation: A: nobody better -> 1. B: A vs B has differences
        // {0.9, 0 x19}, resampled CI includes 0 -> 1. C: A, B better -> 3.
        // D: A, B, C better -> 4.
        std::map<std::string, int> rank;
        for (const auto& e : board.entries) rank[e.system] = e.rank;
        CHECK(rank["A"] == 1);
        CHECK(rank["B"] == 1);
        CHECK(rank["C"] == 3);
        CHECK(rank["D"] == 4);
        CHECK(board.entries[0].system == "A");
        CHECK(board.entries[1].system == "B");
    }
    SUBCASE("order-independent and reproducible") {
        SeededRng gen(8);
        std::vector<ScoreVector> s;
        for (int k = 0; k < 5; ++k) {
            std::vector<double> v(15);
            for (auto& x : v) x = gen.uniform() * (0.5 + 0.1 * k);
            s.push_back(make("sys" + std::to_string(k), v));
        }
        auto first = rank_with_ties(s, 1000, 2024, 4);
        auto rev = s;
        std::reverse(rev.begin(), rev.end());
        auto second = rank_with_ties(rev, 1000, 2024, 1);
        REQUIRE(first.entries.size() == second.entries.size());
        for (std::size_t i = 0; i < first.entries.size(); ++i) {
            CHECK(first.entries[i].system == second.entries[i].system);
            CHECK(first.entries[i].rank == second.entries[i].rank);
            CHECK(first.entries[i].mean_score == second.entries[i].mean_score);
        }
        // Significant pairs never rank the lower mean strictly better.
        std::map<std::string, LeaderboardEntry> by;
        for (const auto& e : first.entries) by[e.system] = e;
        for (const auto& p : first.pairwise) {
            if (!p.significant) continue;
            const auto& x = by[p.system_a];
            const auto& y = by[p.system_b];
            if (x.mean_score < y.mean_score) CHECK(x.rank >= y.rank);
            if (y.mean_score < x.mean_score) CHECK(y.rank >= x.rank);
        }
    }
}

TEST_CASE("median and median_rank") {
    CHECK(median({1, 1, 2, 3}) == 1.5);
    CHECK(median({5, 4, 1, 1}) == 2.5);
    CHECK(median({7, 5, 7, 5.5}) == 6.25);  // midpoint of 5.5 and 7
    CHECK(median({3}) == 3.0);
    CHECK_THROWS_AS(median({}), Error);

    std::vector<std::string> cats{"mcq", "textsim"};
    std::vector<SystemRanks> sys{{"x", {{"mcq", {1, 3, 2}}, {"textsim", {4}}}},
                                 {"y", {{"mcq", {1}}, {"textsim", {1, 2}}}}};
    auto rows = median_rank(sys, cats);
    CHECK(rows[0].system == "y");
    CHECK(rows[0].category_rank.at("textsim") == 1.5);
    CHECK(rows[0].median_rank == 1.25);
    CHECK(rows[1].category_rank.at("mcq") == 2.0);
    CHECK(rows[1].median_rank == 3.0);

    std::vector<SystemRanks> missing{{"z", {{"mcq", {1}}}}};
    try {
        median_rank(missing, cats);
        FAIL("expected MissingCategory");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingCategory);
    }
}
