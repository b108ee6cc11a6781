#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/corpus.hpp"
#include "domeval/providers.hpp"

namespace domeval::rag {

struct StoreEntry {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
};

/// Flat exact-search store. Vectors are L2-normalized on insert, so the dot
/// product is the cosine. Immutable once built; concurrent reads are safe.
class VectorStore {
public:
    VectorStore(std::size_t dimension, std::string provider);

    /// Throws DimensionMismatch or InvalidArgument on a duplicate chunk_id.
    void add(StoreEntry entry, std::span<const float> vector);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dimension() const { return dimension_; }
    const std::string& provider() const { return provider_; }
    const StoreEntry& entry(std::size_t i) const { return entries_.at(i); }
    std::span<const float> vector(std::size_t i) const;

    /// Binary layout, little-endian:
    ///   "DEVIDX01" | u32 dimension | u32 metric (0 = cosine) | u64 count |
    ///   u32 len + provider name | count * dimension float32 |
    ///   u64 len + JSONL metadata {chunk_id, doc_id, text}
    std::string serialize() const;
    static VectorStore deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static VectorStore load(const std::filesystem::path& path);

private:
    std::size_t dimension_;
    std::string provider_;
    std::vector<float> data_;
    std::vector<StoreEntry> entries_;
    std::map<std::string, std::size_t> by_id_;
};

/// Embeds every chunk (in batches) into a new store.
VectorStore build_index(const std::vector<corpus::Chunk>& chunks,
                        const providers::EmbeddingProvider& embedder, std::size_t batch = 64);

struct RerankConfig {
    std::string provider = "lexical";
    std::size_t keep = 5;
};

struct RetrievalConfig {
    corpus::ChunkStrategy strategy = corpus::ChunkStrategy::recursive;
    std::size_t chunk_size = 1024;
    std::size_t chunk_overlap = 100;
    std::string embedding = "pubmedbert";
    std::size_t top_k = 20;
    std::optional<RerankConfig> rerank = RerankConfig{};

    /// top_k >= 1 and rerank.keep in [1, top_k].
    void validate() const;
    /// e.g. "recursive-1024+100/top20+rerank5/pubmedbert"
    std::string label() const;
};

/// The twelve retrieval configurations compared in the configuration sweep,
/// in the published order.
std::vector<RetrievalConfig> configuration_grid();

struct RetrievedChunk {
    std::string chunk_id;
    std::string doc_id;
    double score = 0.0;
    std::string text;
};

struct RetrievedContext {
    std::vector<RetrievedChunk> chunks;
    std::size_t total_tokens = 0;
};

/// Exact cosine top-k, ties by chunk_id ascending. With cfg.rerank the top-k
/// candidates are re-scored and the best `keep` returned in rerank order
/// (ties keep the cosine order). Throws EmptyStore.
RetrievedContext retrieve(const VectorStore& store, std::string_view query,
                          const providers::EmbeddingProvider& embedder, const RetrievalConfig& cfg,
                          const providers::Reranker* reranker = nullptr);

inline constexpr std::string_view kNoContextMarker = "(no context found)";

std::string_view default_rag_template();

struct AugmentedPrompt {
    providers::ChatRequest request;
    std::size_t prompt_tokens = 0;
};

/// Fills {question} and {context}. Chunks appear in rank order, each headed
/// "[n] Source: <doc_id>". Throws TemplateMissingPlaceholder.
AugmentedPrompt augment_prompt(std::string_view question, const RetrievedContext& ctx,
                               std::string_view tmpl = default_rag_template(),
                               std::string system = {});

std::string format_context(const RetrievedContext& ctx);

struct RagAnswer {
    std::string text;
    RetrievedContext retrieved;
    std::size_t prompt_tokens = 0;
};

struct RagPipeline {
    const VectorStore* store = nullptr;
    const providers::EmbeddingProvider* embedder = nullptr;
    const providers::Reranker* reranker = nullptr;
    RetrievalConfig config;
    std::string tmpl = std::string(default_rag_template());
    std::string system;
};

/// retrieve -> augment_prompt -> chat.
RagAnswer answer_with_rag(providers::ChatClient& chat, const RagPipeline& pipeline,
                          std::string_view question);

/// One store per distinct (chunking, embedding) combination of the grid.
struct SweepRow {
    RetrievalConfig config;
    std::map<std::string, double> metrics;
};

using EmbedderLookup = std::function<const providers::EmbeddingProvider&(const std::string&)>;
using SweepEvaluator =
    std::function<std::map<std::string, double>(const RagPipeline&)>;

std::vector<SweepRow> sweep(std::span<const RetrievalConfig> grid,
                            const std::vector<corpus::CorpusDocument>& docs,
                            const EmbedderLookup& embedders, const providers::Reranker* reranker,
                            const SweepEvaluator& evaluate);

}  // namespace domeval::rag
