#include "domeval/config.hpp"

#include <mutex>
#include <set>

#include <nlohmann/json.hpp>

#include "domeval/error.hpp"
#include "domeval/util.hpp"

namespace domeval::config {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using providers::ModelEndpoint;

namespace {

ModelEndpoint endpoint_from(const json& j) {
    ModelEndpoint ep;
    ep.name = j.value("name", std::string());
    ep.base_url = j.at("base_url").get<std::string>();
    ep.api_key_ref = j.value("api_key_env", std::string());
    ep.model_id = j.value("model", std::string());
    ep.temperature = j.value("temperature", 0.0);
    ep.max_output_tokens = j.value("max_output_tokens", 1024);
    ep.request_timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    ep.max_retries = j.value("max_retries", 3);
    ep.backoff_initial = std::chrono::milliseconds(j.value("backoff_ms", 500));
    ep.max_in_flight = j.value("max_in_flight", 4);
    ep.validate();
    return ep;
}

json endpoint_to(const ModelEndpoint& ep) {
    return {{"name", ep.name},
            {"base_url", ep.base_url},
            {"api_key_env", ep.api_key_ref},
            {"model", ep.model_id},
            {"temperature", ep.temperature},
            {"max_output_tokens", ep.max_output_tokens},
            {"timeout_ms", ep.request_timeout.count()},
            {"max_retries", ep.max_retries},
            {"backoff_ms", ep.backoff_initial.count()},
            {"max_in_flight", ep.max_in_flight}};
}

rag::RetrievalConfig retrieval_from(const json& j) {
    rag::RetrievalConfig c;
    if (j.contains("strategy")) c.strategy = corpus::parse_chunk_strategy(j["strategy"].get<std::string>());
    c.chunk_size = j.value("chunk_size", c.chunk_size);
    c.chunk_overlap = j.value("chunk_overlap", c.chunk_overlap);
    c.embedding = j.value("embedding", c.embedding);
    c.top_k = j.value("top_k", c.top_k);
    if (j.contains("rerank")) {
        if (j["rerank"].is_null()) c.rerank.reset();
        else c.rerank = rag::RerankConfig{j["rerank"].value("provider", std::string("lexical")),
                                          j["rerank"].value("keep", std::size_t{5})};
    }
    c.validate();
    return c;
}

json retrieval_to(const rag::RetrievalConfig& c) {
    json j{{"strategy", corpus::to_string(c.strategy)},
           {"chunk_size", c.chunk_size},
           {"chunk_overlap", c.chunk_overlap},
           {"embedding", c.embedding},
           {"top_k", c.top_k}};
    j["rerank"] = c.rerank ? json{{"provider", c.rerank->provider}, {"keep", c.rerank->keep}} : json(nullptr);
    return j;
}

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

bool is_url(std::string_view s) {
    return s.starts_with("mock://") || s.starts_with("http://") || s.starts_with("https://");
}

}  // namespace

rag::RetrievalConfig parse_retrieval(std::string_view text) {
    try {
        return retrieval_from(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("retrieval config: ") + e.what());
    }
}

std::string retrieval_to_json(const rag::RetrievalConfig& cfg) { return retrieval_to(cfg).dump(2); }

RunConfig RunConfig::defaults() {
    RunConfig c;
    auto ep = [](std::string name, std::string url) {
        ModelEndpoint e;
        e.name = std::move(name);
        e.base_url = std::move(url);
        return e;
    };
    c.endpoints = {ep("generator", "mock://generator?seed=7&max_items=5"),
                   ep("judge", "mock://judge?threshold=0.5"),
                   ep("base", "mock://lexical?seed=1"),
                   ep("random", "mock://random-letter?seed=3"),
                   ep("echo", "mock://echo")};
    c.embedders = {{"pubmedbert", "hash", 384, 11, {}},
                   {"multilingual", "hash", 384, 12, {}},
                   {"bert-tokens", "hash-token", 256, 13, {}}};
    c.rerankers = {{"lexical", "lexical", {}}};
    c.systems = {{"base", "base", std::nullopt}, {"base+rag", "base", RagSpec{}}, {"random", "random", std::nullopt}};
    c.judge = "judge";
    c.datagen.generator = "generator";
    return c;
}

RunConfig RunConfig::parse(std::string_view text, const fs::path& base) {
    RunConfig c = defaults();
    try {
        auto j = json::parse(text);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.n_iter = j.value("n_iter", c.n_iter);
        c.corpus = resolve(base, j.value("corpus", c.corpus));
        c.boilerplate = j.value("boilerplate", c.boilerplate);
        c.audit_log = resolve(base, j.value("audit_log", c.audit_log));
        if (j.contains("endpoints")) {
            c.endpoints.clear();
            for (const auto& e : j["endpoints"]) c.endpoints.push_back(endpoint_from(e));
        }
        if (j.contains("embedders")) {
            c.embedders.clear();
            for (const auto& e : j["embedders"]) {
                EmbedderSpec s{e.at("name"), e.value("kind", std::string("hash")), e.value("dimension", std::size_t{384}),
                               e.value("seed", std::uint64_t{0}), {}};
                if (e.contains("endpoint")) s.endpoint = endpoint_from(e["endpoint"]);
                c.embedders.push_back(std::move(s));
            }
        }
        if (j.contains("rerankers")) {
            c.rerankers.clear();
            for (const auto& e : j["rerankers"]) {
                RerankerSpec s{e.at("name"), e.value("kind", std::string("lexical")), {}};
                if (e.contains("endpoint")) s.endpoint = endpoint_from(e["endpoint"]);
                c.rerankers.push_back(std::move(s));
            }
        }
        if (j.contains("systems")) {
            c.systems.clear();
            std::set<std::string> names;
            for (const auto& e : j["systems"]) {
                SystemSpec s{e.at("name"), e.at("endpoint"), std::nullopt};
                if (!names.insert(s.name).second) throw Error(ErrorCode::InvalidArgument, "duplicate system " + s.name);
                if (e.contains("rag") && !e["rag"].is_null()) {
                    const auto& r = e["rag"];
                    RagSpec rs;
                    rs.index = resolve(base, r.value("index", std::string()));
                    rs.retrieval = retrieval_from(r.value("retrieval", json::object()));
                    rs.tmpl = r.value("template", rs.tmpl);
                    s.rag = std::move(rs);
                }
                c.systems.push_back(std::move(s));
            }
        }
        c.judge = j.value("judge", c.judge);
        if (j.contains("judge_template")) {
            c.judge_template.system = j["judge_template"].value("system", c.judge_template.system);
            c.judge_template.user = j["judge_template"].value("user", c.judge_template.user);
        }
        c.token_embedder = j.value("token_embedder", c.token_embedder);
        c.chunk_embedder = j.value("chunk_embedder", c.chunk_embedder);
        if (j.contains("datagen")) {
            const auto& d = j["datagen"];
            c.datagen.generator = d.value("generator", c.datagen.generator);
            auto& o = c.datagen.options;
            o.faithfulness_threshold = d.value("faithfulness_threshold", o.faithfulness_threshold);
            o.max_items_per_chapter = d.value("max_items_per_chapter", o.max_items_per_chapter);
            o.max_chapter_tokens = d.value("max_chapter_tokens", o.max_chapter_tokens);
            c.datagen.max_chapters = d.value("max_chapters", c.datagen.max_chapters);
            c.datagen.dedup = d.value("dedup", c.datagen.dedup);
            if (d.contains("ratios")) {
                auto r = d["ratios"].get<std::vector<double>>();
                if (r.size() != 3) throw Error(ErrorCode::InvalidArgument, "datagen.ratios needs three values");
                c.datagen.ratios = {r[0], r[1], r[2]};
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("run config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path) { return parse(read_file(path), path.parent_path()); }

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["workers"] = workers;
    j["n_iter"] = n_iter;
    j["corpus"] = corpus;
    j["boilerplate"] = boilerplate;
    j["audit_log"] = audit_log;
    j["endpoints"] = json::array();
    for (const auto& e : endpoints) j["endpoints"].push_back(endpoint_to(e));
    j["embedders"] = json::array();
    for (const auto& e : embedders) {
        json x{{"name", e.name}, {"kind", e.kind}, {"dimension", e.dimension}, {"seed", e.seed}};
        if (e.kind == "openai") x["endpoint"] = endpoint_to(e.endpoint);
        j["embedders"].push_back(std::move(x));
    }
    j["rerankers"] = json::array();
    for (const auto& r : rerankers) {
        json x{{"name", r.name}, {"kind", r.kind}};
        if (r.kind == "http") x["endpoint"] = endpoint_to(r.endpoint);
        j["rerankers"].push_back(std::move(x));
    }
    j["systems"] = json::array();
    for (const auto& s : systems) {
        json x{{"name", s.name}, {"endpoint", s.endpoint}};
        if (s.rag)
            x["rag"] = {{"index", s.rag->index}, {"retrieval", retrieval_to(s.rag->retrieval)},
                        {"template", s.rag->tmpl}};
        j["systems"].push_back(std::move(x));
    }
    j["judge"] = judge;
    j["judge_template"] = {{"system", judge_template.system}, {"user", judge_template.user}};
    j["token_embedder"] = token_embedder;
    j["chunk_embedder"] = chunk_embedder;
    const auto& o = datagen.options;
    j["datagen"] = {{"generator", datagen.generator},
                    {"faithfulness_threshold", o.faithfulness_threshold},
                    {"max_items_per_chapter", o.max_items_per_chapter},
                    {"max_chapter_tokens", o.max_chapter_tokens},
                    {"max_chapters", datagen.max_chapters},
                    {"dedup", datagen.dedup},
                    {"ratios", {datagen.ratios.train, datagen.ratios.validation, datagen.ratios.test}}};
    return j.dump(2);
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json())); }

const ModelEndpoint& RunConfig::endpoint(const std::string& name) const {
    for (const auto& e : endpoints)
        if (e.name == name) return e;
    throw Error(ErrorCode::UnknownEndpoint, "no endpoint named " + name);
}

corpus::BoilerplatePatterns RunConfig::patterns() const {
    if (boilerplate.empty()) return corpus::BoilerplatePatterns::defaults();
    return {boilerplate};
}

// ---------------------------------------------------------------------------

std::unique_ptr<providers::ChatClient> make_chat(const ModelEndpoint& ep) {
    if (auto m = providers::MockUrl::parse(ep.base_url)) {
        const auto name = ep.name.empty() ? ep.base_url : ep.name;
        auto seed = [&](const char* fallback) { return std::stoull(m->get("seed", fallback)); };
        if (m->kind == "echo") return std::make_unique<providers::EchoChat>(name);
        if (m->kind == "fixed") return std::make_unique<providers::FixedChat>(name, m->get("text"));
        if (m->kind == "random-letter") return std::make_unique<providers::RandomLetterChat>(name, seed("0"));
        if (m->kind == "generator")
            return std::make_unique<datagen::MockGeneratorChat>(name, seed("0"), std::stoull(m->get("max_items", "5")));
        if (m->kind == "judge") return std::make_unique<eval::MockJudgeChat>(name, std::stod(m->get("threshold", "0.5")));
        if (m->kind == "lexical") return std::make_unique<eval::LexicalAnswerChat>(name, seed("0"));
        throw Error(ErrorCode::UnknownEndpoint, "unknown mock kind: " + m->kind);
    }
    if (!ep.base_url.starts_with("http://") && !ep.base_url.starts_with("https://"))
        throw Error(ErrorCode::UnknownEndpoint, "unsupported endpoint url: " + ep.base_url);
    ep.validate();
    return std::make_unique<providers::OpenAIChatClient>(ep, providers::make_http_transport(ep.base_url, ep.request_timeout));
}

std::unique_ptr<providers::EmbeddingProvider> make_embedder(const EmbedderSpec& s) {
    if (s.kind == "hash") return std::make_unique<providers::HashEmbedder>(s.name, s.dimension, s.seed);
    if (s.kind == "hash-token") return std::make_unique<providers::HashTokenEmbedder>(s.name, s.dimension, s.seed);
    if (s.kind == "openai")
        return std::make_unique<providers::OpenAIEmbeddingClient>(
            s.endpoint, s.dimension, providers::make_http_transport(s.endpoint.base_url, s.endpoint.request_timeout));
    throw Error(ErrorCode::InvalidArgument, "unknown embedder kind: " + s.kind);
}

std::unique_ptr<providers::Reranker> make_reranker(const RerankerSpec& s) {
    if (s.kind == "lexical") return std::make_unique<providers::LexicalReranker>(s.name);
    if (s.kind == "http")
        return std::make_unique<providers::HttpReranker>(
            s.endpoint, providers::make_http_transport(s.endpoint.base_url, s.endpoint.request_timeout));
    throw Error(ErrorCode::InvalidArgument, "unknown reranker kind: " + s.kind);
}

// ---------------------------------------------------------------------------

struct Registry::Impl {
    std::mutex mu;
    std::shared_ptr<providers::AuditLog> audit;
    std::map<std::string, std::unique_ptr<providers::ChatClient>> chats;
    std::map<std::string, std::unique_ptr<providers::EmbeddingProvider>> embedders;
    std::map<std::string, std::unique_ptr<providers::Reranker>> rerankers;
    std::map<std::string, std::unique_ptr<rag::VectorStore>> stores;
    std::vector<std::unique_ptr<rag::RagPipeline>> pipelines;
};

Registry::Registry(RunConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
    if (!cfg_.audit_log.empty()) {
        if (auto parent = fs::path(cfg_.audit_log).parent_path(); !parent.empty()) fs::create_directories(parent);
        impl_->audit = std::make_shared<providers::AuditLog>(cfg_.audit_log);
    }
}

Registry::~Registry() = default;

providers::ChatClient& Registry::chat(const std::string& name) {
    std::lock_guard lock(impl_->mu);
    auto& slot = impl_->chats[name];
    if (!slot) {
        if (is_url(name)) {
            ModelEndpoint ep;
            ep.name = name;
            ep.base_url = name;
            slot = make_chat(ep);
        } else {
            slot = make_chat(cfg_.endpoint(name));
        }
        if (impl_->audit) slot->set_audit_log(impl_->audit);
    }
    return *slot;
}

const providers::EmbeddingProvider& Registry::embedder(const std::string& name) {
    std::lock_guard lock(impl_->mu);
    auto& slot = impl_->embedders[name];
    if (!slot) {
        for (const auto& s : cfg_.embedders)
            if (s.name == name) slot = make_embedder(s);
        if (!slot) {
            impl_->embedders.erase(name);
            throw Error(ErrorCode::UnknownEndpoint, "no embedder named " + name);
        }
    }
    return *slot;
}

const providers::Reranker* Registry::reranker(const std::string& name) {
    if (name.empty()) return nullptr;
    std::lock_guard lock(impl_->mu);
    auto& slot = impl_->rerankers[name];
    if (!slot) {
        for (const auto& s : cfg_.rerankers)
            if (s.name == name) slot = make_reranker(s);
        if (!slot) {
            impl_->rerankers.erase(name);
            throw Error(ErrorCode::UnknownEndpoint, "no reranker named " + name);
        }
    }
    return slot.get();
}

std::vector<eval::SystemUnderTest> Registry::systems(const std::vector<corpus::CorpusDocument>& docs) {
    std::vector<eval::SystemUnderTest> out;
    for (const auto& s : cfg_.systems) {
        eval::SystemUnderTest sut{s.name, &chat(s.endpoint), nullptr};
        if (s.rag) {
            const auto& r = s.rag->retrieval;
            const auto& emb = embedder(r.embedding);
            const std::string key = s.rag->index.empty()
                                        ? std::string(corpus::to_string(r.strategy)) + "-" + std::to_string(r.chunk_size) +
                                              "+" + std::to_string(r.chunk_overlap) + "/" + r.embedding
                                        : "file:" + s.rag->index;
            auto& store = impl_->stores[key];
            if (!store) {
                if (!s.rag->index.empty()) {
                    store = std::make_unique<rag::VectorStore>(rag::VectorStore::load(s.rag->index));
                } else {
                    std::vector<corpus::Chunk> chunks;
                    for (const auto& d : docs)
                        for (auto& c : corpus::chunk_document(d, r.strategy, r.chunk_size, r.chunk_overlap))
                            chunks.push_back(std::move(c));
                    store = std::make_unique<rag::VectorStore>(rag::build_index(chunks, emb));
                }
            }
            if (store->dimension() != emb.dimension())
                throw Error(ErrorCode::DimensionMismatch, "index for " + s.name + " does not match embedder " + r.embedding);
            auto p = std::make_unique<rag::RagPipeline>();
            p->store = store.get();
            p->embedder = &emb;
            p->reranker = r.rerank ? reranker(r.rerank->provider) : nullptr;
            p->config = r;
            p->tmpl = s.rag->tmpl;
            sut.rag = p.get();
            impl_->pipelines.push_back(std::move(p));
        }
        out.push_back(sut);
    }
    return out;
}

}  // namespace domeval::config
