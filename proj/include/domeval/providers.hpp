#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace domeval::providers {

using Vector = std::vector<float>;

struct ModelEndpoint {
    std::string name;
    std::string base_url;     // http(s)://host[:port]/v1 or mock://<kind>[?k=v&...]
    std::string api_key_ref;  // environment variable holding the key; empty for none
    std::string model_id;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::chrono::milliseconds request_timeout{60000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_initial{500};
    int max_in_flight = 4;

    /// Throws InvalidArgument when temperature < 0 or max_retries < 0.
    void validate() const;
};

struct ChatRequest {
    std::string system;
    std::string user;
};

enum class FinishReason { stop, length, other };

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    Usage usage;
};

/// Line-delimited {timestamp, endpoint, request_hash, response_hash}.
class AuditLog {
public:
    explicit AuditLog(const std::filesystem::path& path);
    void record(std::string_view endpoint, std::string_view request, std::string_view response);

private:
    std::mutex mu_;
    std::ofstream out_;
};

/// Base for every chat backend. chat() bounds in-flight requests and writes
/// one audit line per successful call; backends implement complete().
class ChatClient {
public:
    explicit ChatClient(std::string name, int max_in_flight = 4);
    virtual ~ChatClient() = default;
    ChatClient(const ChatClient&) = delete;
    ChatClient& operator=(const ChatClient&) = delete;

    ChatResponse chat(const ChatRequest& req);
    const std::string& name() const { return name_; }
    void set_audit_log(std::shared_ptr<AuditLog> log) { audit_ = std::move(log); }

protected:
    virtual ChatResponse complete(const ChatRequest& req) = 0;

private:
    std::string name_;
    std::counting_semaphore<> slots_;
    std::shared_ptr<AuditLog> audit_;
};

// ---------------------------------------------------------------------------
// HTTP transport and the OpenAI-compatible wire protocol

struct HttpResponse {
    int status = 0;  // 0 means the connection itself failed
    std::string body;
    std::string error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& body,
                              const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib backed transport. base_url may carry a path prefix such as /v1.
std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::milliseconds timeout);

/// Sends one POST with the endpoint's retry policy: connection failures,
/// 429 and 5xx are retried with exponential backoff; 401/403 fail at once.
std::string post_with_retries(HttpTransport& transport, const ModelEndpoint& ep,
                              const std::string& path, const std::string& body);

/// Resolves the API key from the environment; empty ref means no key.
std::string resolve_api_key(const ModelEndpoint& ep);

class OpenAIChatClient final : public ChatClient {
public:
    OpenAIChatClient(ModelEndpoint ep, std::shared_ptr<HttpTransport> transport);
    static std::string request_body(const ModelEndpoint& ep, const ChatRequest& req);
    static ChatResponse parse_response(const std::string& body);

protected:
    ChatResponse complete(const ChatRequest& req) override;

private:
    ModelEndpoint ep_;
    std::shared_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Embeddings

enum class Granularity { sequence, token };

class EmbeddingProvider {
public:
    EmbeddingProvider(std::string name, std::size_t dimension, Granularity g)
        : name_(std::move(name)), dimension_(dimension), granularity_(g) {}
    virtual ~EmbeddingProvider() = default;

    const std::string& name() const { return name_; }
    std::size_t dimension() const { return dimension_; }
    Granularity granularity() const { return granularity_; }

    /// One vector per input text (sequence granularity).
    virtual std::vector<Vector> embed(std::span<const std::string> texts) const;
    /// One vector per word token of `text` (token granularity).
    virtual std::vector<Vector> embed_tokens(std::string_view text) const;

private:
    std::string name_;
    std::size_t dimension_;
    Granularity granularity_;
};

/// Feature-hashing bag-of-words embedder. Deterministic for (seed, text).
class HashEmbedder final : public EmbeddingProvider {
public:
    HashEmbedder(std::string name, std::size_t dimension, std::uint64_t seed = 0);
    std::vector<Vector> embed(std::span<const std::string> texts) const override;

private:
    std::uint64_t seed_;
};

/// Per-token sparse signed hash vectors: identical tokens map to identical
/// unit vectors, distinct tokens are near-orthogonal.
class HashTokenEmbedder final : public EmbeddingProvider {
public:
    HashTokenEmbedder(std::string name, std::size_t dimension, std::uint64_t seed = 0);
    std::vector<Vector> embed_tokens(std::string_view text) const override;

private:
    std::uint64_t seed_;
};

/// Token embedder backed by an explicit table; unknown tokens map to zero.
class TableTokenEmbedder final : public EmbeddingProvider {
public:
    TableTokenEmbedder(std::string name, std::map<std::string, Vector> table);
    std::vector<Vector> embed_tokens(std::string_view text) const override;

private:
    std::map<std::string, Vector> table_;
};

/// POST {base_url}/embeddings with {"model", "input": [...]}.
class OpenAIEmbeddingClient final : public EmbeddingProvider {
public:
    OpenAIEmbeddingClient(ModelEndpoint ep, std::size_t dimension,
                          std::shared_ptr<HttpTransport> transport);
    std::vector<Vector> embed(std::span<const std::string> texts) const override;

private:
    ModelEndpoint ep_;
    std::shared_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Rerankers score (query, document) pairs jointly.

class Reranker {
public:
    explicit Reranker(std::string name) : name_(std::move(name)) {}
    virtual ~Reranker() = default;
    const std::string& name() const { return name_; }
    virtual std::vector<double> score(std::string_view query,
                                      std::span<const std::string> documents) const = 0;

private:
    std::string name_;
};

/// Number of distinct word tokens shared by query and document.
class LexicalReranker final : public Reranker {
public:
    explicit LexicalReranker(std::string name = "lexical") : Reranker(std::move(name)) {}
    std::vector<double> score(std::string_view query,
                              std::span<const std::string> documents) const override;
};

/// POST {base_url}/rerank with {"model", "query", "documents"}; reads
/// results[].{index, relevance_score}.
class HttpReranker final : public Reranker {
public:
    HttpReranker(ModelEndpoint ep, std::shared_ptr<HttpTransport> transport);
    std::vector<double> score(std::string_view query,
                              std::span<const std::string> documents) const override;

private:
    ModelEndpoint ep_;
    std::shared_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Faithfulness

class FaithfulnessScorer {
public:
    virtual ~FaithfulnessScorer() = default;
    /// Grounding of `claim` in `context`, in [0, 1]. Both must be non-empty.
    virtual double score(std::string_view context, std::string_view claim) const = 0;
};

/// Offline fallback: length-weighted fraction of the claim's content-word
/// 1..3-grams that also occur in the context,
///   sum_n n * matched_n / sum_n n * total_n.
class LexicalFaithfulness final : public FaithfulnessScorer {
public:
    double score(std::string_view context, std::string_view claim) const override;
};

// ---------------------------------------------------------------------------
// Deterministic chat mocks

class EchoChat final : public ChatClient {
public:
    explicit EchoChat(std::string name = "echo") : ChatClient(std::move(name)) {}

protected:
    ChatResponse complete(const ChatRequest& req) override;
};

class FixedChat final : public ChatClient {
public:
    FixedChat(std::string name, std::string text)
        : ChatClient(std::move(name)), text_(std::move(text)) {}

protected:
    ChatResponse complete(const ChatRequest& req) override;

private:
    std::string text_;
};

class FunctionChat final : public ChatClient {
public:
    using Fn = std::function<std::string(const ChatRequest&)>;
    FunctionChat(std::string name, Fn fn) : ChatClient(std::move(name)), fn_(std::move(fn)) {}

protected:
    ChatResponse complete(const ChatRequest& req) override;

private:
    Fn fn_;
};

/// Returns scripted replies in order, repeating the last one.
class ScriptedChat final : public ChatClient {
public:
    ScriptedChat(std::string name, std::vector<std::string> replies);
    std::size_t calls() const;

protected:
    ChatResponse complete(const ChatRequest& req) override;

private:
    mutable std::mutex mu_;
    std::vector<std::string> replies_;
    std::size_t calls_ = 0;
};

/// Answers with one of A-D chosen by hashing (seed, request). Uniform over
/// letters and independent of call order.
class RandomLetterChat final : public ChatClient {
public:
    RandomLetterChat(std::string name, std::uint64_t seed)
        : ChatClient(std::move(name)), seed_(seed) {}

protected:
    ChatResponse complete(const ChatRequest& req) override;

private:
    std::uint64_t seed_;
};

/// Parses "mock://kind?key=value&..." into kind and parameters.
struct MockUrl {
    std::string kind;
    std::map<std::string, std::string> params;
    static std::optional<MockUrl> parse(std::string_view url);
    std::string get(const std::string& key, std::string fallback = {}) const;
};

}  // namespace domeval::providers
