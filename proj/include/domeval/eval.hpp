#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/datagen.hpp"
#include "domeval/providers.hpp"
#include "domeval/rag.hpp"
#include "domeval/ranking.hpp"

namespace domeval::eval {

enum class Layer { mcq, text_sim, judge, human };
std::string_view to_string(Layer l);  // mcq, textsim, judge, human
Layer parse_layer(std::string_view s);

enum class Subset { full, special, checked };
std::string_view to_string(Subset s);
Subset parse_subset(std::string_view s);

/// A system is a chat backend, optionally wrapped in a RAG pipeline.
struct SystemUnderTest {
    std::string name;
    providers::ChatClient* chat = nullptr;
    const rag::RagPipeline* rag = nullptr;
};

struct EvalRecord {
    std::string system;
    std::string item_id;
    Layer layer = Layer::mcq;
    std::string subset = "full";
    std::string response_text;
    double score = 0.0;
    bool flagged = false;
    std::string flag_reason;
    std::string detail = "{}";  // layer-specific JSON object
};

/// Throws InvalidArgument on a repeated (system, item_id, layer, subset).
void check_unique(std::span<const EvalRecord> records);

std::string records_to_jsonl(std::span<const EvalRecord> records);
std::vector<EvalRecord> records_from_jsonl(std::string_view jsonl);

// ---------------------------------------------------------------------------
// Subsets

/// MCQ: full = every non-training item; special = full items from special
/// documents; checked = expert-verified items.
std::vector<datagen::MCQItem> select_mcq(const std::vector<datagen::MCQItem>& items, Subset subset,
                                         const std::set<std::string>& special_docs = {});
/// QA: full = test split; special = test items from special documents;
/// checked = expert-verified items.
std::vector<datagen::QAPair> select_qa(const std::vector<datagen::QAPair>& items, Subset subset,
                                       const std::set<std::string>& special_docs);

// ---------------------------------------------------------------------------
// Multiple choice

/// Position -> original option index, seeded per item so every system sees
/// the same order.
std::array<int, 4> option_permutation(std::uint64_t seed, std::string_view item_id);

std::string_view mcq_system_prompt();
std::string mcq_prompt(std::string_view question, const std::array<std::string, 4>& shown);

/// First standalone capital A-D: not adjacent to a letter or digit.
std::optional<int> parse_answer_letter(std::string_view response);

/// Scores a stored response; recomputable offline.
EvalRecord score_mcq_response(const std::string& system, const datagen::MCQItem& item,
                              std::uint64_t seed, std::string response);

std::vector<EvalRecord> run_mcq(const SystemUnderTest& sys, const std::vector<datagen::MCQItem>& items,
                                std::uint64_t seed, std::string_view subset = "full",
                                std::size_t workers = 4);

// ---------------------------------------------------------------------------
// Free text

std::string_view qa_system_prompt();

EvalRecord score_text_response(const std::string& system, const datagen::QAPair& item,
                               std::string response, const providers::EmbeddingProvider& embedder);

/// Score = ROUGE-1 F1; detail holds BLEU, ROUGE-1/2/L and BERTScore.
std::vector<EvalRecord> run_text_sim(const SystemUnderTest& sys,
                                     const std::vector<datagen::QAPair>& items,
                                     const providers::EmbeddingProvider& token_embedder,
                                     std::string_view subset = "full", std::size_t workers = 4);

struct JudgeTemplate {
    std::string system;
    std::string user;  // {question} {reference} {context} {answer}
    static JudgeTemplate defaults();
};

enum class Verdict { correct, incorrect };

struct JudgeVerdict {
    Verdict verdict = Verdict::incorrect;
    std::string rationale;
};

/// Parses the first JSON object in the reply; nullopt when absent or when
/// "verdict" is not "correct" / "incorrect".
std::optional<JudgeVerdict> parse_verdict(std::string_view reply);

/// Chapter text lookup by context_ref.
using ContextLookup = std::map<std::string, std::string>;

std::vector<EvalRecord> run_judge(const SystemUnderTest& sys, const std::vector<datagen::QAPair>& items,
                                  const ContextLookup& contexts, providers::ChatClient& judge,
                                  std::string_view subset = "full",
                                  const JudgeTemplate& tmpl = JudgeTemplate::defaults(),
                                  std::size_t workers = 4);

// ---------------------------------------------------------------------------
// Human labels

enum class LabelCategory { correct, correct_incomplete, partially_incorrect, incorrect };

std::string_view to_string(LabelCategory c);
/// Accepts the canonical names plus "correct but incomplete" and
/// "partially correct" (both 0.75). Throws UnknownLabel.
LabelCategory parse_label(std::string_view s);
double label_score(LabelCategory c);

/// CSV with header system,item_id,category. When `known` is non-empty every
/// row must name a known (system, item_id) pair, else UnknownItem.
std::vector<EvalRecord> ingest_human_labels(
    std::string_view csv, const std::set<std::pair<std::string, std::string>>& known = {},
    std::string_view subset = "curated");

// ---------------------------------------------------------------------------
// Rankings from records

/// Per-system score vectors for one (layer, subset), aligned on sorted
/// item_id. Throws MisalignedVectors when systems cover different items.
std::vector<ranking::ScoreVector> score_vectors(std::span<const EvalRecord> records, Layer layer,
                                                std::string_view subset);

struct RankingReport {
    struct Board {
        Layer layer;
        std::string subset;
        ranking::Leaderboard leaderboard;
    };
    std::vector<Board> boards;
    std::vector<std::string> categories;
    std::vector<ranking::MedianRankRow> median;
};

/// One leaderboard per (layer, subset) present, then the median-rank table
/// with one category per layer.
RankingReport build_rankings(std::span<const EvalRecord> records, std::span<const Layer> layers,
                             std::size_t n_iter, std::uint64_t seed, std::size_t workers = 4);

std::string leaderboards_csv(const RankingReport& report);
std::string median_csv(const RankingReport& report);
std::string format_report(const RankingReport& report);

// ---------------------------------------------------------------------------
// Offline mocks

/// Judge that marks an answer correct when its ROUGE-1 F1 against the
/// reference reaches `threshold`. Reads the sections of the default judge
/// template back out of the prompt.
class MockJudgeChat final : public providers::ChatClient {
public:
    MockJudgeChat(std::string name, double threshold = 0.5);

protected:
    providers::ChatResponse complete(const providers::ChatRequest& req) override;

private:
    double threshold_;
};

/// Answerer that uses only what is in its prompt. With retrieved context it
/// picks the option (MCQ) or the sentence (free text) that overlaps the
/// context and question most; without context it guesses from a hash of
/// (seed, prompt). Gives RAG-wrapped systems a measurable edge offline.
class LexicalAnswerChat final : public providers::ChatClient {
public:
    LexicalAnswerChat(std::string name, std::uint64_t seed);

protected:
    providers::ChatResponse complete(const providers::ChatRequest& req) override;

private:
    std::uint64_t seed_;
};

}  // namespace domeval::eval
