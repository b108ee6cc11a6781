#include "doctest.h"

#include <cmath>

#include "domeval/error.hpp"
#include "domeval/metrics.hpp"
#include "domeval/rng.hpp"
#include "metric_cases.hpp"

using namespace domeval;
using namespace domeval::metrics;
using domeval::providers::HashTokenEmbedder;
using domeval::providers::Vector;

namespace {

std::string random_sentence(SeededRng& rng, std::size_t max_len) {
    static const std::vector<std::string> vocab = {"qt", "wave", "heart", "rate", "lead",
                                                   "v1", "block", "the", "a", "sinus"};
    std::string s;
    std::size_t n = 1 + rng.index(max_len);
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + vocab[rng.index(vocab.size())];
    return s;
}

bool in_unit(const PRF& x) {
    return x.precision >= 0 && x.precision <= 1 && x.recall >= 0 && x.recall <= 1 && x.f1 >= 0 &&
           x.f1 <= 1;
}

}  // namespace

TEST_CASE("golden metric fixtures") {
    auto emb = testing::fixture_token_embedder();
    for (const auto& c : testing::metric_cases()) {
        INFO(c.name);
        auto got = testing::evaluate_case(c, emb);
        CHECK(std::abs(got.f1 - c.f) <= 1e-9);
        if (c.kind != testing::MetricKind::bleu) {
            CHECK(std::abs(got.precision - c.p) <= 1e-9);
            CHECK(std::abs(got.recall - c.r) <= 1e-9);
        }
    }
}

TEST_CASE("bleu") {
    std::vector<std::string> ref{"the cat sat on the mat"};
    CHECK(bleu("the cat sat on the mat", ref) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bleu("dog runs fast", ref) == 0.0);

    SUBCASE("hand oracle for a short candidate") {
        // Clipped precisions 3/3, 2/2, 1/1; no 4-grams so the add-one rule gives 1/1.
        // Brevity penalty exp(1 - 6/3).
        double expected = std::exp(1.0 - 6.0 / 3.0);
        CHECK(std::abs(bleu("the cat sat", ref) - expected) < 1e-12);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(bleu("", ref), Error);
        try {
            bleu("  ", ref);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyCandidate);
        }
        CHECK_THROWS_AS(bleu("x", std::vector<std::string>{}), Error);
    }
    SUBCASE("bleu(x, [x]) = 1 for non-empty x") {
        SeededRng rng(1);
        for (int i = 0; i < 200; ++i) {
            std::vector<std::string> x{random_sentence(rng, 12)};
            CHECK(bleu(x[0], x) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("rouge") {
    auto id = rouge_n("the qt interval", "the qt interval", 1);
    CHECK(id.f1 == 1.0);
    CHECK(rouge_l("the qt interval", "The QT interval!").f1 == 1.0);
    auto dis = rouge_l("alpha beta", "gamma delta");
    CHECK(dis.precision == 0.0);
    CHECK(dis.f1 == 0.0);
    auto big = rouge_n("a b", "a b", 5);
    CHECK(big.f1 == 0.0);
    CHECK_THROWS_AS(rouge_n("", "a", 1), Error);
    CHECK_THROWS_AS(rouge_l("a", "..."), Error);
    CHECK_THROWS_AS(rouge_n("a", "a", 0), Error);

    SUBCASE("precision(a, b) equals recall(b, a)") {
        SeededRng rng(2);
        for (int i = 0; i < 300; ++i) {
            auto a = random_sentence(rng, 10), b = random_sentence(rng, 10);
            for (std::size_t n = 1; n <= 3; ++n) {
                CHECK(rouge_n(a, b, n).precision == rouge_n(b, a, n).recall);
            }
            CHECK(rouge_l(a, b).precision == rouge_l(b, a).recall);
        }
    }
}

TEST_CASE("bertscore") {
    HashTokenEmbedder emb("tok", 64, 5);
    auto same = bertscore("sinus rhythm with a normal axis", "sinus rhythm with a normal axis", emb);
    CHECK(std::abs(same.f1 - 1.0) <= 1e-6);

    SUBCASE("orthogonal embeddings for disjoint vocabularies") {
        providers::TableTokenEmbedder t("t", {{"a", {1, 0, 0, 0}}, {"b", {0, 1, 0, 0}},
                                              {"c", {0, 0, 1, 0}}, {"d", {0, 0, 0, 1}}});
        auto s = bertscore("a b", "c d", t);
        CHECK(s.precision == 0.0);
        CHECK(s.recall == 0.0);
        CHECK(s.f1 == 0.0);
    }

    SUBCASE("3x2 fixture against a brute-force matrix scan") {
        auto t = testing::fixture_token_embedder();
        auto cand = t.embed_tokens("alpha beta gamma");
        auto ref = t.embed_tokens("delta eps");
        // Brute force: explicit 3x2 cosine matrix, then row and column maxima.
        double m[3][2];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) {
                double dot = 0, ni = 0, nj = 0;
                for (int k = 0; k < 3; ++k) {
                    dot += cand[i][k] * ref[j][k];
                    ni += cand[i][k] * cand[i][k];
                    nj += ref[j][k] * ref[j][k];
                }
                m[i][j] = std::max(0.0, dot / std::sqrt(ni * nj));
            }
        double p = (std::max(m[0][0], m[0][1]) + std::max(m[1][0], m[1][1]) +
                    std::max(m[2][0], m[2][1])) / 3.0;
        double r = (std::max({m[0][0], m[1][0], m[2][0]}) + std::max({m[0][1], m[1][1], m[2][1]})) / 2.0;
        auto s = bertscore("alpha beta gamma", "delta eps", t);
        CHECK(std::abs(s.precision - p) < 1e-12);
        CHECK(std::abs(s.recall - r) < 1e-12);
        CHECK(std::abs(s.f1 - 2 * p * r / (p + r)) < 1e-12);
    }

    SUBCASE("errors") {
        providers::HashEmbedder seq("seq", 8);
        CHECK_THROWS_AS(bertscore("a", "b", seq), Error);
        CHECK_THROWS_AS(bertscore("", "b", emb), Error);
        std::vector<Vector> a{{1, 0}}, b{{1, 0, 0}};
        try {
            bertscore_from_vectors(a, b);
            FAIL("expected DimensionMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DimensionMismatch);
        }
    }

    SUBCASE("identity is 1 for every embedder seed") {
        SeededRng rng(3);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            HashTokenEmbedder e("tok", 32 + seed, seed);
            auto s = random_sentence(rng, 15);
            CHECK(std::abs(bertscore(s, s, e).f1 - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("every reported value lies in [0, 1]") {
    HashTokenEmbedder emb("tok", 16, 9);  // small dimension forces hash collisions
    SeededRng rng(4);
    for (int i = 0; i < 300; ++i) {
        auto a = random_sentence(rng, 12), b = random_sentence(rng, 12);
        auto rep = score_pair(a, b, emb);
        CHECK(rep.bleu >= 0.0);
        CHECK(rep.bleu <= 1.0);
        CHECK(in_unit(rep.rouge1));
        CHECK(in_unit(rep.rouge2));
        CHECK(in_unit(rep.rougeL));
        CHECK(in_unit(rep.bertscore));
        for (const auto* x : {&rep.rouge1, &rep.rouge2, &rep.rougeL, &rep.bertscore}) {
            double expect = x->precision + x->recall > 0
                                ? 2 * x->precision * x->recall / (x->precision + x->recall)
                                : 0.0;
            CHECK(x->f1 == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("score_pair and mean_report") {
    HashTokenEmbedder emb("tok", 64, 1);
    auto empty = score_pair("", "reference text", emb);
    CHECK(empty.bleu == 0.0);
    CHECK(empty.rouge1.f1 == 0.0);

    std::vector<SimilarityReport> reps{score_pair("a b", "a b", emb), score_pair("a b", "c d", emb)};
    auto m = mean_report(reps);
    CHECK(m.rouge1.f1 == doctest::Approx(0.5));
    CHECK(m.bleu == doctest::Approx(0.5));
}
