#include "domeval/providers.hpp"

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/text.hpp"
#include "domeval/util.hpp"

namespace domeval::providers {

using json = nlohmann::ordered_json;

void ModelEndpoint::validate() const {
    if (temperature < 0.0)
        throw Error(ErrorCode::InvalidArgument, "endpoint '" + name + "': temperature < 0");
    if (max_retries < 0)
        throw Error(ErrorCode::InvalidArgument, "endpoint '" + name + "': max_retries < 0");
    if (max_in_flight < 1)
        throw Error(ErrorCode::InvalidArgument, "endpoint '" + name + "': max_in_flight < 1");
}

// ---------------------------------------------------------------------------

AuditLog::AuditLog(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw Error(ErrorCode::Io, "cannot open audit log " + path.string());
}

void AuditLog::record(std::string_view endpoint, std::string_view request,
                      std::string_view response) {
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char stamp[64];
    std::snprintf(stamp, sizeof stamp, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(ms.count()));
    json j;
    j["timestamp"] = stamp;
    j["endpoint"] = endpoint;
    j["request_hash"] = hex64(fnv1a64(request));
    j["response_hash"] = hex64(fnv1a64(response));
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
    out_.flush();
}

ChatClient::ChatClient(std::string name, int max_in_flight)
    : name_(std::move(name)), slots_(std::max(1, max_in_flight)) {}

ChatResponse ChatClient::chat(const ChatRequest& req) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{slots_};
    auto resp = complete(req);
    if (audit_) audit_->record(name_, req.system + '\x1f' + req.user, resp.text);
    return resp;
}

// ---------------------------------------------------------------------------

std::string resolve_api_key(const ModelEndpoint& ep) {
    if (ep.api_key_ref.empty()) return {};
    const char* v = std::getenv(ep.api_key_ref.c_str());
    if (v == nullptr || *v == '\0')
        throw Error(ErrorCode::AuthFailure, "environment variable " + ep.api_key_ref +
                                                " for endpoint '" + ep.name + "' is not set");
    return v;
}

std::string post_with_retries(HttpTransport& transport, const ModelEndpoint& ep,
                              const std::string& path, const std::string& body) {
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (auto key = resolve_api_key(ep); !key.empty()) headers["Authorization"] = "Bearer " + key;

    const int attempts = ep.max_retries + 1;
    HttpResponse last;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            auto delay = ep.backoff_initial * (1LL << std::min(attempt - 1, 10));
            std::this_thread::sleep_for(delay);
        }
        last = transport.post(path, body, headers);
        if (last.status >= 200 && last.status < 300) return last.body;
        if (last.status == 401 || last.status == 403)
            throw Error(ErrorCode::AuthFailure,
                        ep.name + ": HTTP " + std::to_string(last.status) + " " + last.body);
        const bool transient = last.status == 0 || last.status == 408 || last.status == 429 ||
                               last.status >= 500;
        if (!transient)
            throw Error(ErrorCode::EndpointUnreachable,
                        ep.name + ": HTTP " + std::to_string(last.status) + " " + last.body);
        spdlog::debug("{}: attempt {}/{} failed (status {} {})", ep.name, attempt + 1, attempts,
                      last.status, last.error);
    }
    if (last.status == 0)
        throw Error(ErrorCode::EndpointUnreachable,
                    ep.name + ": " + last.error + " after " + std::to_string(attempts) + " attempts");
    throw Error(ErrorCode::RetriesExhausted,
                ep.name + ": HTTP " + std::to_string(last.status) + " after " +
                    std::to_string(attempts) + " attempts");
}

OpenAIChatClient::OpenAIChatClient(ModelEndpoint ep, std::shared_ptr<HttpTransport> transport)
    : ChatClient(ep.name, ep.max_in_flight), ep_(std::move(ep)), transport_(std::move(transport)) {
    ep_.validate();
}

std::string OpenAIChatClient::request_body(const ModelEndpoint& ep, const ChatRequest& req) {
    json j;
    j["model"] = ep.model_id;
    j["messages"] = json::array();
    if (!req.system.empty()) j["messages"].push_back({{"role", "system"}, {"content", req.system}});
    j["messages"].push_back({{"role", "user"}, {"content", req.user}});
    j["temperature"] = ep.temperature;
    j["max_tokens"] = ep.max_output_tokens;
    return j.dump();
}

ChatResponse OpenAIChatClient::parse_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("chat response is not JSON: ") + e.what());
    }
    if (!j.contains("choices") || j["choices"].empty())
        throw Error(ErrorCode::Parse, "chat response has no choices");
    const auto& choice = j["choices"][0];
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_string() ? content.get<std::string>() : std::string();
    auto reason = choice.value("finish_reason", std::string("stop"));
    r.finish_reason = reason == "stop"     ? FinishReason::stop
                      : reason == "length" ? FinishReason::length
                                           : FinishReason::other;
    if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return r;
}

ChatResponse OpenAIChatClient::complete(const ChatRequest& req) {
    auto body = post_with_retries(*transport_, ep_, "/chat/completions", request_body(ep_, req));
    auto resp = parse_response(body);
    if (resp.finish_reason == FinishReason::length)
        throw Error(ErrorCode::ResponseTruncated,
                    ep_.name + ": response hit max_output_tokens=" +
                        std::to_string(ep_.max_output_tokens));
    return resp;
}

// ---------------------------------------------------------------------------

std::vector<Vector> EmbeddingProvider::embed(std::span<const std::string>) const {
    throw Error(ErrorCode::GranularityMismatch, "embedder '" + name_ + "' is token-granular");
}

std::vector<Vector> EmbeddingProvider::embed_tokens(std::string_view) const {
    throw Error(ErrorCode::GranularityMismatch, "embedder '" + name_ + "' is sequence-granular");
}

HashEmbedder::HashEmbedder(std::string name, std::size_t dimension, std::uint64_t seed)
    : EmbeddingProvider(std::move(name), dimension, Granularity::sequence), seed_(seed) {
    if (dimension == 0) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
}

std::vector<Vector> HashEmbedder::embed(std::span<const std::string> texts) const {
    if (texts.empty()) throw Error(ErrorCode::EmptyInput, "embed() needs at least one text");
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        Vector v(dimension(), 0.0f);
        for (const auto& w : word_tokens(t)) {
            // Two signed buckets per word keep collisions from cancelling exactly.
            for (std::uint64_t k = 0; k < 2; ++k) {
                auto h = splitmix64(fnv1a64(w, seed_ ^ (0x9e37ULL + k)));
                v[h % dimension()] += (h >> 63) ? 1.0f : -1.0f;
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

HashTokenEmbedder::HashTokenEmbedder(std::string name, std::size_t dimension, std::uint64_t seed)
    : EmbeddingProvider(std::move(name), dimension, Granularity::token), seed_(seed) {
    if (dimension == 0) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
}

std::vector<Vector> HashTokenEmbedder::embed_tokens(std::string_view text) const {
    std::vector<Vector> out;
    for (const auto& w : word_tokens(text)) {
        Vector v(dimension(), 0.0f);
        constexpr int kTaps = 4;
        for (std::uint64_t k = 0; k < kTaps; ++k) {
            auto h = splitmix64(fnv1a64(w, seed_ + 0x51ULL * (k + 1)));
            v[h % dimension()] += (h >> 63) ? 0.5f : -0.5f;
        }
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        if (norm == 0.0) {
            // All taps cancelled; fall back to a single unit bucket.
            v[splitmix64(fnv1a64(w, seed_)) % dimension()] = 1.0f;
            norm = 1.0;
        }
        norm = std::sqrt(norm);
        for (auto& x : v) x = static_cast<float>(x / norm);
        out.push_back(std::move(v));
    }
    return out;
}

TableTokenEmbedder::TableTokenEmbedder(std::string name, std::map<std::string, Vector> table)
    : EmbeddingProvider(std::move(name), table.empty() ? 1 : table.begin()->second.size(),
                        Granularity::token),
      table_(std::move(table)) {
    for (const auto& [tok, v] : table_)
        if (v.size() != dimension())
            throw Error(ErrorCode::DimensionMismatch, "table vector for '" + tok + "'");
}

std::vector<Vector> TableTokenEmbedder::embed_tokens(std::string_view text) const {
    std::vector<Vector> out;
    for (const auto& w : word_tokens(text)) {
        auto it = table_.find(w);
        out.push_back(it == table_.end() ? Vector(dimension(), 0.0f) : it->second);
    }
    return out;
}

OpenAIEmbeddingClient::OpenAIEmbeddingClient(ModelEndpoint ep, std::size_t dimension,
                                             std::shared_ptr<HttpTransport> transport)
    : EmbeddingProvider(ep.name, dimension, Granularity::sequence),
      ep_(std::move(ep)),
      transport_(std::move(transport)) {
    ep_.validate();
}

std::vector<Vector> OpenAIEmbeddingClient::embed(std::span<const std::string> texts) const {
    if (texts.empty()) throw Error(ErrorCode::EmptyInput, "embed() needs at least one text");
    json req;
    req["model"] = ep_.model_id;
    req["input"] = json::array();
    for (const auto& t : texts) req["input"].push_back(t);
    auto body = post_with_retries(*transport_, ep_, "/embeddings", req.dump());
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("embedding response is not JSON: ") + e.what());
    }
    std::vector<Vector> out(texts.size());
    const auto& data = j.at("data");
    if (data.size() != texts.size())
        throw Error(ErrorCode::Parse, "embedding response has " + std::to_string(data.size()) +
                                          " vectors for " + std::to_string(texts.size()) + " inputs");
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t idx = data[i].value("index", i);
        if (idx >= out.size()) throw Error(ErrorCode::Parse, "embedding index out of range");
        out[idx] = data[i].at("embedding").get<Vector>();
        if (out[idx].size() != dimension())
            throw Error(ErrorCode::DimensionMismatch,
                        ep_.name + ": expected dimension " + std::to_string(dimension()) +
                            ", got " + std::to_string(out[idx].size()));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> LexicalReranker::score(std::string_view query,
                                           std::span<const std::string> documents) const {
    auto q = word_tokens(query);
    std::set<std::string> qset(q.begin(), q.end());
    std::vector<double> out;
    out.reserve(documents.size());
    for (const auto& d : documents) {
        auto words = word_tokens(d);
        std::set<std::string> dset(words.begin(), words.end());
        double shared = 0;
        for (const auto& w : dset) shared += qset.count(w);
        out.push_back(shared);
    }
    return out;
}

HttpReranker::HttpReranker(ModelEndpoint ep, std::shared_ptr<HttpTransport> transport)
    : Reranker(ep.name), ep_(std::move(ep)), transport_(std::move(transport)) {
    ep_.validate();
}

std::vector<double> HttpReranker::score(std::string_view query,
                                        std::span<const std::string> documents) const {
    json req;
    req["model"] = ep_.model_id;
    req["query"] = query;
    req["documents"] = json::array();
    for (const auto& d : documents) req["documents"].push_back(d);
    auto body = post_with_retries(*transport_, ep_, "/rerank", req.dump());
    std::vector<double> out(documents.size(), 0.0);
    try {
        auto j = json::parse(body);
        for (const auto& r : j.at("results")) {
            auto idx = r.at("index").get<std::size_t>();
            if (idx < out.size()) out[idx] = r.at("relevance_score").get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("rerank response: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------

double LexicalFaithfulness::score(std::string_view context, std::string_view claim) const {
    if (is_blank(context) || is_blank(claim))
        throw Error(ErrorCode::EmptyInput, "faithfulness needs non-empty context and claim");
    auto ctx = content_tokens(context);
    auto clm = content_tokens(claim);
    double matched = 0.0, total = 0.0;
    for (std::size_t n = 1; n <= 3; ++n) {
        if (clm.size() < n) break;
        std::set<std::vector<std::string>> grams;
        for (std::size_t i = 0; i + n <= ctx.size(); ++i)
            grams.emplace(ctx.begin() + static_cast<long>(i), ctx.begin() + static_cast<long>(i + n));
        for (std::size_t i = 0; i + n <= clm.size(); ++i) {
            std::vector<std::string> g(clm.begin() + static_cast<long>(i),
                                       clm.begin() + static_cast<long>(i + n));
            total += static_cast<double>(n);
            if (grams.count(g)) matched += static_cast<double>(n);
        }
    }
    return total == 0.0 ? 0.0 : matched / total;
}

// ---------------------------------------------------------------------------

ChatResponse EchoChat::complete(const ChatRequest& req) { return {req.user, FinishReason::stop, {}}; }

ChatResponse FixedChat::complete(const ChatRequest&) { return {text_, FinishReason::stop, {}}; }

ChatResponse FunctionChat::complete(const ChatRequest& req) {
    return {fn_(req), FinishReason::stop, {}};
}

ScriptedChat::ScriptedChat(std::string name, std::vector<std::string> replies)
    : ChatClient(std::move(name)), replies_(std::move(replies)) {
    if (replies_.empty()) throw Error(ErrorCode::InvalidArgument, "ScriptedChat needs replies");
}

std::size_t ScriptedChat::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

ChatResponse ScriptedChat::complete(const ChatRequest&) {
    std::lock_guard lock(mu_);
    auto idx = std::min(calls_, replies_.size() - 1);
    ++calls_;
    return {replies_[idx], FinishReason::stop, {}};
}

ChatResponse RandomLetterChat::complete(const ChatRequest& req) {
    auto h = splitmix64(fnv1a64(req.user, fnv1a64(req.system, seed_)));
    static constexpr const char* kLetters[] = {"A", "B", "C", "D"};
    return {kLetters[h % 4], FinishReason::stop, {}};
}

std::optional<MockUrl> MockUrl::parse(std::string_view url) {
    constexpr std::string_view prefix = "mock://";
    if (!url.starts_with(prefix)) return std::nullopt;
    url.remove_prefix(prefix.size());
    MockUrl m;
    auto q = url.find('?');
    m.kind = std::string(url.substr(0, q));
    while (!m.kind.empty() && m.kind.back() == '/') m.kind.pop_back();
    if (q != std::string_view::npos) {
        auto rest = url.substr(q + 1);
        while (!rest.empty()) {
            auto amp = rest.find('&');
            auto pair = rest.substr(0, amp);
            auto eq = pair.find('=');
            if (eq == std::string_view::npos) m.params[std::string(pair)] = "";
            else m.params[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
            if (amp == std::string_view::npos) break;
            rest.remove_prefix(amp + 1);
        }
    }
    return m;
}

std::string MockUrl::get(const std::string& key, std::string fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

}  // namespace domeval::providers
