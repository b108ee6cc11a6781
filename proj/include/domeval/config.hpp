#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/corpus.hpp"
#include "domeval/datagen.hpp"
#include "domeval/eval.hpp"
#include "domeval/providers.hpp"
#include "domeval/rag.hpp"

namespace domeval::config {

struct EmbedderSpec {
    std::string name;
    std::string kind = "hash";  // hash | hash-token | openai
    std::size_t dimension = 384;
    std::uint64_t seed = 0;
    providers::ModelEndpoint endpoint;  // openai only
};

struct RerankerSpec {
    std::string name;
    std::string kind = "lexical";  // lexical | http
    providers::ModelEndpoint endpoint;  // http only
};

struct RagSpec {
    std::string index;  // path to a saved VectorStore; built from the corpus when empty
    rag::RetrievalConfig retrieval;  // rerank.provider names a configured reranker
    std::string tmpl = std::string(rag::default_rag_template());
};

struct SystemSpec {
    std::string name;
    std::string endpoint;
    std::optional<RagSpec> rag;
};

struct DatagenSpec {
    std::string generator;
    datagen::GenerationOptions options;
    std::size_t max_chapters = 10;
    datagen::Ratios ratios;
    bool dedup = false;
};

/// Everything a run needs. Relative paths resolve against the config file's
/// directory. Endpoint base_url may be mock://<kind>?k=v for offline runs.
struct RunConfig {
    std::uint64_t seed = 42;
    std::size_t workers = 4;
    std::size_t n_iter = 1000;
    std::string corpus;  // manifest path
    std::vector<std::string> boilerplate;  // empty keeps the default patterns
    std::string audit_log;
    std::vector<providers::ModelEndpoint> endpoints;
    std::vector<EmbedderSpec> embedders;
    std::vector<RerankerSpec> rerankers;
    std::vector<SystemSpec> systems;
    std::string judge;
    eval::JudgeTemplate judge_template = eval::JudgeTemplate::defaults();
    std::string token_embedder = "bert-tokens";  // BERTScore embedder
    std::string chunk_embedder = "pubmedbert";
    DatagenSpec datagen;

    /// Built-in offline roster: mock generator, judge and answerers, hash
    /// embedders named "pubmedbert", "multilingual" and "bert-tokens", and a
    /// lexical reranker. Used when no config file is given.
    static RunConfig defaults();
    /// Fields absent from the JSON keep their defaults() values.
    static RunConfig parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);
    std::string to_json() const;
    /// Hex digest of to_json(), recorded in run manifests.
    std::string hash() const;

    const providers::ModelEndpoint& endpoint(const std::string& name) const;
    corpus::BoilerplatePatterns patterns() const;
};

/// Parses a RetrievalConfig object {strategy, chunk_size, chunk_overlap,
/// embedding, top_k, rerank: {provider, keep} | null}.
rag::RetrievalConfig parse_retrieval(std::string_view json_text);
std::string retrieval_to_json(const rag::RetrievalConfig& cfg);

/// Chat client for an endpoint. mock:// kinds: echo, fixed?text=,
/// random-letter?seed=, generator?seed=&max_items=, judge?threshold=,
/// lexical?seed=. Anything else must be http(s).
std::unique_ptr<providers::ChatClient> make_chat(const providers::ModelEndpoint& ep);
std::unique_ptr<providers::EmbeddingProvider> make_embedder(const EmbedderSpec& spec);
std::unique_ptr<providers::Reranker> make_reranker(const RerankerSpec& spec);

/// Owns the providers of a run config; lookups throw UnknownEndpoint.
/// An endpoint name that is itself a URL (mock:// or http) is accepted ad hoc.
class Registry {
public:
    explicit Registry(RunConfig cfg);
    ~Registry();

    const RunConfig& config() const { return cfg_; }
    providers::ChatClient& chat(const std::string& name);
    const providers::EmbeddingProvider& embedder(const std::string& name);
    const providers::Reranker* reranker(const std::string& name);

    /// Systems with their RAG pipelines. Stores come from the RagSpec index
    /// file or are built once per (chunking, embedding) from `docs`.
    std::vector<eval::SystemUnderTest> systems(const std::vector<corpus::CorpusDocument>& docs);

private:
    struct Impl;
    RunConfig cfg_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace domeval::config
