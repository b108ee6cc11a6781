#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/corpus.hpp"
#include "domeval/providers.hpp"

namespace domeval::datagen {

enum class Split { unassigned, train, validation, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct QAPair {
    std::string id;
    std::string doc_id;
    std::size_t chapter_index = 0;
    std::string question;
    std::string answer;
    std::string context_ref;
    Split split = Split::unassigned;
    bool checked = false;
    double faithfulness = 0.0;
};

struct MCQItem {
    std::string id;
    std::string doc_id;
    std::size_t chapter_index = 0;
    std::string question;
    std::array<std::string, 4> options;
    int correct_index = 0;
    std::string context_ref;
    Split split = Split::unassigned;
    bool checked = false;
    bool special = false;
};

// Generator prompts, kept verbatim.
std::string_view qa_system_prompt();
std::string_view mcq_system_prompt();
std::string_view qa_format_instructions();
std::string_view mcq_format_instructions();
std::string qa_user_prompt(std::string_view context);
std::string mcq_user_prompt(std::string_view context);
/// Appended to the user message on the single repair retry.
inline constexpr std::string_view kRepairReminder = "Output: ONLY JSON.";

struct GenerationOptions {
    double faithfulness_threshold = 0.5;
    std::size_t max_items_per_chapter = 0;  // 0 keeps everything
    std::size_t max_chapter_tokens = 50000;
};

template <typename T>
struct Generated {
    std::vector<T> kept;
    std::vector<T> filtered;  // below the faithfulness threshold
    std::size_t malformed = 0;
    std::vector<std::string> refused_chapters;  // refs that raised GeneratorRefused
};

/// Prompts the generator with one chapter and parses its JSON reply. One
/// repair retry is made when the reply holds no JSON; GeneratorRefused after
/// that. Pairs are scored against the chapter and filtered at the threshold.
Generated<QAPair> generate_qa(const corpus::Chapter& chapter, providers::ChatClient& generator,
                              const providers::FaithfulnessScorer& scorer,
                              const GenerationOptions& opts = {});

/// Same contract for multiple-choice items. Items without exactly four
/// pairwise distinct options or with an unresolvable answer are dropped.
Generated<MCQItem> generate_mcq(const corpus::Chapter& chapter, providers::ChatClient& generator,
                                const GenerationOptions& opts = {});

/// Runs generate_qa / generate_mcq over every chapter on `workers` threads
/// and concatenates the results in chapter order. Refused chapters are
/// recorded and skipped; other errors propagate.
Generated<QAPair> generate_qa_all(const std::vector<corpus::Chapter>& chapters,
                                  providers::ChatClient& generator,
                                  const providers::FaithfulnessScorer& scorer,
                                  const GenerationOptions& opts = {}, std::size_t workers = 4);
Generated<MCQItem> generate_mcq_all(const std::vector<corpus::Chapter>& chapters,
                                    providers::ChatClient& generator,
                                    const GenerationOptions& opts = {}, std::size_t workers = 4);

/// Parses a reply into raw JSON items: a top-level array or an object with a
/// single array member. Returns false when no JSON can be found.
bool parse_items_payload(std::string_view reply, std::vector<std::string>& items_json);

struct Ratios {
    double train = 0.8, validation = 0.1, test = 0.1;
};

/// Largest-remainder apportionment of n items. Ties in the fractional part
/// go to train, then validation, then test.
std::array<std::size_t, 3> split_counts(std::size_t n, const Ratios& ratios);

/// Split label per position. Each doc_id is shuffled with its own derived
/// seed and apportioned independently; essential docs go fully to train.
std::vector<Split> assign_splits(std::span<const std::string> doc_ids, const Ratios& ratios,
                                 std::uint64_t seed, const std::set<std::string>& essential_docs);

template <typename Item>
void split_dataset(std::vector<Item>& items, const Ratios& ratios, std::uint64_t seed,
                   const std::set<std::string>& essential_docs) {
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& it : items) ids.push_back(it.doc_id);
    auto labels = assign_splits(ids, ratios, seed, essential_docs);
    for (std::size_t i = 0; i < items.size(); ++i) items[i].split = labels[i];
}

std::string normalize_question(std::string_view q);

/// Exact dedup on normalized question text; the first occurrence wins.
template <typename Item>
std::vector<Item> dedup(const std::vector<Item>& items) {
    std::set<std::string> seen;
    std::vector<Item> out;
    for (const auto& it : items)
        if (seen.insert(normalize_question(it.question)).second) out.push_back(it);
    return out;
}

std::size_t count_syllables(std::string_view word);

/// 206.835 - 1.015 (words / sentences) - 84.6 (syllables / words), unclamped.
double flesch_reading_ease(std::string_view text);

struct DatasetProfile {
    std::size_t n_items = 0;
    double mean_flesch = 0.0;  // over question texts
    std::map<std::string, std::size_t> split_counts;
};

DatasetProfile profile_questions(std::span<const std::string> questions,
                                 std::span<const Split> splits);
DatasetProfile profile(const std::vector<QAPair>& items);
DatasetProfile profile(const std::vector<MCQItem>& items);

/// Ids of items whose context_ref matches none of the chapters.
std::vector<std::string> validate_references(std::span<const std::string> context_refs,
                                             std::span<const std::string> item_ids,
                                             const std::vector<corpus::Chapter>& chapters);

std::string qa_to_jsonl(const std::vector<QAPair>& items);
std::vector<QAPair> qa_from_jsonl(std::string_view jsonl);
std::string mcq_to_jsonl(const std::vector<MCQItem>& items);
std::vector<MCQItem> mcq_from_jsonl(std::string_view jsonl);

/// Dataset kind of a JSONL file: "mcq" when records carry options.
std::string detect_kind(std::string_view jsonl);

/// Offline generator. Reads the chapter back out of the prompt and turns its
/// sentences into QA pairs (answer = sentence) or MCQ items (distractors
/// drawn from other sentences). Deterministic in (seed, prompt).
class MockGeneratorChat final : public providers::ChatClient {
public:
    MockGeneratorChat(std::string name, std::uint64_t seed, std::size_t max_items = 5);

protected:
    providers::ChatResponse complete(const providers::ChatRequest& req) override;

private:
    std::uint64_t seed_;
    std::size_t max_items_;
};

}  // namespace domeval::datagen
