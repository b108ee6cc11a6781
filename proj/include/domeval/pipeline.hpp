#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "domeval/config.hpp"
#include "domeval/corpus.hpp"
#include "domeval/datagen.hpp"
#include "domeval/eval.hpp"

namespace domeval::pipeline {

struct LoadedCorpus {
    std::vector<corpus::CorpusDocument> docs;
    std::vector<corpus::Chapter> chapters;
    std::set<std::string> essential;
    std::set<std::string> special;
};

/// Loads, cleans and splits the manifest into chapters.
LoadedCorpus load_corpus(const std::filesystem::path& manifest, const config::RunConfig& cfg);

template <typename Item>
struct Dataset {
    std::vector<Item> items;
    std::size_t filtered = 0;
    std::size_t malformed = 0;
    std::vector<std::string> refused_chapters;
};

/// Generate, optionally dedup, then split per document with essential
/// documents kept in train.
Dataset<datagen::QAPair> make_qa(const LoadedCorpus& corpus, providers::ChatClient& generator,
                                 const config::RunConfig& cfg, std::uint64_t seed);
/// As make_qa; items from special documents are flagged.
Dataset<datagen::MCQItem> make_mcq(const LoadedCorpus& corpus, providers::ChatClient& generator,
                                   const config::RunConfig& cfg, std::uint64_t seed);

eval::ContextLookup contexts(const std::vector<corpus::Chapter>& chapters);

/// Runs one layer for every system on the given subset.
std::vector<eval::EvalRecord> evaluate(eval::Layer layer, const std::vector<eval::SystemUnderTest>& systems,
                                       const std::vector<datagen::QAPair>& qa,
                                       const std::vector<datagen::MCQItem>& mcq, const LoadedCorpus& corpus,
                                       config::Registry& registry, eval::Subset subset, std::uint64_t seed);

/// {config_hash, seed, datasets: {name: hash}, endpoints: [{name, base_url, model}]}
std::string run_manifest(const config::RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& datasets);

/// datagen -> index -> eval mcq + textsim + judge -> rank, all files under
/// `out_dir`: chapters.jsonl, qa.jsonl, mcq.jsonl, chunks.jsonl, index.bin,
/// records/{mcq,textsim,judge}.jsonl, leaderboards.csv, median_rank.csv,
/// report.txt and manifest.json. Returns the written file names.
std::vector<std::string> run_end_to_end(const std::filesystem::path& manifest, const config::RunConfig& cfg,
                                        const std::filesystem::path& out_dir);

}  // namespace domeval::pipeline
