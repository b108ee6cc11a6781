#include "domeval/rag.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/util.hpp"

namespace domeval::rag {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kMagic = "DEVIDX01";

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view b) : b_(b) {}
    std::uint64_t le(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw Error(ErrorCode::Parse, "index file truncated");
    }
    std::string_view b_;
    std::size_t pos_ = 0;
};

}  // namespace

VectorStore::VectorStore(std::size_t dimension, std::string provider)
    : dimension_(dimension), provider_(std::move(provider)) {
    if (dimension_ == 0) throw Error(ErrorCode::InvalidArgument, "store dimension must be >= 1");
}

void VectorStore::add(StoreEntry entry, std::span<const float> vector) {
    if (vector.size() != dimension_)
        throw Error(ErrorCode::DimensionMismatch, "vector of dimension " + std::to_string(vector.size()) +
                                                      " for a store of dimension " +
                                                      std::to_string(dimension_));
    if (by_id_.contains(entry.chunk_id))
        throw Error(ErrorCode::InvalidArgument, "duplicate chunk_id " + entry.chunk_id);
    double norm = 0.0;
    for (float x : vector) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    for (float x : vector) data_.push_back(norm > 0.0 ? static_cast<float>(x / norm) : 0.0f);
    by_id_.emplace(entry.chunk_id, entries_.size());
    entries_.push_back(std::move(entry));
}

std::span<const float> VectorStore::vector(std::size_t i) const {
    if (i >= entries_.size()) throw Error(ErrorCode::InvalidArgument, "store index out of range");
    return std::span<const float>(data_).subspan(i * dimension_, dimension_);
}

std::string VectorStore::serialize() const {
    std::string out(kMagic);
    put_le(out, dimension_, 4);
    put_le(out, 0, 4);
    put_le(out, entries_.size(), 8);
    put_le(out, provider_.size(), 4);
    out += provider_;
    out.reserve(out.size() + data_.size() * 4);
    for (float x : data_) put_le(out, std::bit_cast<std::uint32_t>(x), 4);
    std::string meta;
    for (const auto& e : entries_) {
        json j;
        j["chunk_id"] = e.chunk_id;
        j["doc_id"] = e.doc_id;
        j["text"] = e.text;
        meta += j.dump();
        meta += '\n';
    }
    put_le(out, meta.size(), 8);
    out += meta;
    return out;
}

VectorStore VectorStore::deserialize(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(kMagic.size()) != kMagic) throw Error(ErrorCode::Parse, "not an index file");
    const auto dim = static_cast<std::size_t>(r.le(4));
    if (r.le(4) != 0) throw Error(ErrorCode::Parse, "unsupported index metric");
    const auto count = static_cast<std::size_t>(r.le(8));
    const auto provider_len = static_cast<std::size_t>(r.le(4));
    VectorStore store(dim, std::string(r.take(provider_len)));
    std::vector<float> data(dim * count);
    for (auto& x : data) x = std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4)));
    const auto meta_len = static_cast<std::size_t>(r.le(8));
    auto lines = split_lines(r.take(meta_len));
    if (!r.done()) throw Error(ErrorCode::Parse, "trailing bytes in index file");
    std::size_t i = 0;
    for (const auto& line : lines) {
        if (is_blank(line)) continue;
        if (i >= count) throw Error(ErrorCode::Parse, "index metadata count mismatch");
        json j = json::parse(line, nullptr, false);
        if (!j.is_object()) throw Error(ErrorCode::Parse, "bad index metadata record");
        StoreEntry e{j.value("chunk_id", std::string()), j.value("doc_id", std::string()),
                     j.value("text", std::string())};
        if (store.by_id_.contains(e.chunk_id))
            throw Error(ErrorCode::Parse, "duplicate chunk_id in index " + e.chunk_id);
        store.by_id_.emplace(e.chunk_id, store.entries_.size());
        store.entries_.push_back(std::move(e));
        ++i;
    }
    if (i != count) throw Error(ErrorCode::Parse, "index metadata count mismatch");
    // Stored vectors are already normalized; copy them bit for bit.
    store.data_ = std::move(data);
    return store;
}

void VectorStore::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

VectorStore VectorStore::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

VectorStore build_index(const std::vector<corpus::Chunk>& chunks,
                        const providers::EmbeddingProvider& embedder, std::size_t batch) {
    if (chunks.empty()) throw Error(ErrorCode::EmptyInput, "no chunks to index");
    batch = std::max<std::size_t>(1, batch);
    VectorStore store(embedder.dimension(), embedder.name());
    for (std::size_t b = 0; b < chunks.size(); b += batch) {
        const auto e = std::min(chunks.size(), b + batch);
        std::vector<std::string> texts;
        for (std::size_t i = b; i < e; ++i) texts.push_back(chunks[i].text);
        auto vecs = embedder.embed(texts);
        if (vecs.size() != texts.size())
            throw Error(ErrorCode::DimensionMismatch, "embedder returned the wrong number of vectors");
        for (std::size_t i = b; i < e; ++i)
            store.add({chunks[i].chunk_id, chunks[i].doc_id, chunks[i].text}, vecs[i - b]);
    }
    return store;
}

void RetrievalConfig::validate() const {
    if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be >= 1");
    if (rerank && (rerank->keep == 0 || rerank->keep > top_k))
        throw Error(ErrorCode::InvalidArgument, "rerank keep must be in [1, top_k]");
}

std::string RetrievalConfig::label() const {
    std::string s(corpus::to_string(strategy));
    if (strategy == corpus::ChunkStrategy::recursive)
        s += "-" + std::to_string(chunk_size) + "+" + std::to_string(chunk_overlap);
    s += "/top" + std::to_string(top_k);
    if (rerank) s += "+rerank" + std::to_string(rerank->keep);
    return s + "/" + embedding;
}

std::vector<RetrievalConfig> configuration_grid() {
    using corpus::ChunkStrategy;
    auto row = [](ChunkStrategy st, std::size_t k, std::optional<std::size_t> keep, const char* emb) {
        RetrievalConfig c;
        c.strategy = st;
        c.top_k = k;
        c.embedding = emb;
        c.rerank = keep ? std::optional<RerankConfig>(RerankConfig{"lexical", *keep}) : std::nullopt;
        return c;
    };
    const auto rec = ChunkStrategy::recursive, md = ChunkStrategy::markdown_header;
    return {
        row(rec, 20, 5, "pubmedbert"),   row(rec, 20, 5, "multilingual"),
        row(rec, 10, 5, "pubmedbert"),   row(rec, 10, 5, "multilingual"),
        row(rec, 10, {}, "multilingual"), row(rec, 5, {}, "pubmedbert"),
        row(rec, 5, {}, "multilingual"),  row(rec, 10, {}, "pubmedbert"),
        row(rec, 3, {}, "multilingual"),  row(md, 2, {}, "pubmedbert"),
        row(md, 2, {}, "multilingual"),   row(rec, 3, {}, "pubmedbert"),
    };
}

RetrievedContext retrieve(const VectorStore& store, std::string_view query,
                          const providers::EmbeddingProvider& embedder, const RetrievalConfig& cfg,
                          const providers::Reranker* reranker) {
    if (store.empty()) throw Error(ErrorCode::EmptyStore, "retrieval from an empty store");
    cfg.validate();
    if (embedder.dimension() != store.dimension())
        throw Error(ErrorCode::DimensionMismatch, "query embedder does not match the store");
    if (cfg.rerank && !reranker) throw Error(ErrorCode::InvalidArgument, "rerank configured without a reranker");

    std::string q(query);
    auto qv = embedder.embed(std::span<const std::string>(&q, 1)).at(0);
    if (qv.size() != store.dimension())
        throw Error(ErrorCode::DimensionMismatch, "query vector dimension");
    double qn = 0.0;
    for (float x : qv) qn += static_cast<double>(x) * x;
    qn = std::sqrt(qn);

    std::vector<double> scores(store.size(), 0.0);
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto v = store.vector(i);
        double dot = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) dot += static_cast<double>(v[d]) * qv[d];
        scores[i] = qn > 0.0 ? dot / qn : 0.0;
    }
    std::vector<std::size_t> order(store.size());
    std::iota(order.begin(), order.end(), 0);
    auto by_score = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return store.entry(a).chunk_id < store.entry(b).chunk_id;
    };
    const auto k = std::min(cfg.top_k, store.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(), by_score);
    order.resize(k);

    RetrievedContext ctx;
    for (auto i : order) {
        const auto& e = store.entry(i);
        ctx.chunks.push_back({e.chunk_id, e.doc_id, scores[i], e.text});
    }
    if (cfg.rerank) {
        std::vector<std::string> texts;
        for (const auto& c : ctx.chunks) texts.push_back(c.text);
        auto rs = reranker->score(query, texts);
        if (rs.size() != texts.size())
            throw Error(ErrorCode::InvalidArgument, "reranker returned the wrong number of scores");
        std::vector<std::size_t> ro(ctx.chunks.size());
        std::iota(ro.begin(), ro.end(), 0);
        std::stable_sort(ro.begin(), ro.end(), [&](std::size_t a, std::size_t b) { return rs[a] > rs[b]; });
        ro.resize(std::min(cfg.rerank->keep, ro.size()));
        std::vector<RetrievedChunk> kept;
        for (auto i : ro) {
            kept.push_back(ctx.chunks[i]);
            kept.back().score = rs[i];
        }
        ctx.chunks = std::move(kept);
    }
    for (const auto& c : ctx.chunks) ctx.total_tokens += corpus::estimate_tokens(c.text);
    return ctx;
}

std::string_view default_rag_template() {
    return "Use the following context to answer the question. If the context does not help, "
           "answer from your own medical knowledge.\n\n"
           "Context:\n{context}\n\n"
           "Question: {question}";
}

std::string format_context(const RetrievedContext& ctx) {
    if (ctx.chunks.empty()) return std::string(kNoContextMarker);
    std::string out;
    for (std::size_t i = 0; i < ctx.chunks.size(); ++i) {
        if (i) out += "\n\n";
        out += "[" + std::to_string(i + 1) + "] Source: " + ctx.chunks[i].doc_id + "\n";
        out += ctx.chunks[i].text;
    }
    return out;
}

AugmentedPrompt augment_prompt(std::string_view question, const RetrievedContext& ctx,
                               std::string_view tmpl, std::string system) {
    for (std::string_view ph : {"{question}", "{context}"})
        if (tmpl.find(ph) == std::string_view::npos)
            throw Error(ErrorCode::TemplateMissingPlaceholder, "template lacks " + std::string(ph));
    const auto context = format_context(ctx);
    AugmentedPrompt p;
    p.request.system = std::move(system);
    p.request.user = fill_template(tmpl, {{"question", question}, {"context", context}});
    p.prompt_tokens = corpus::estimate_tokens(p.request.system) + corpus::estimate_tokens(p.request.user);
    return p;
}

RagAnswer answer_with_rag(providers::ChatClient& chat, const RagPipeline& pipeline,
                          std::string_view question) {
    if (!pipeline.store || !pipeline.embedder)
        throw Error(ErrorCode::InvalidArgument, "rag pipeline needs a store and an embedder");
    RagAnswer ans;
    ans.retrieved = retrieve(*pipeline.store, question, *pipeline.embedder, pipeline.config, pipeline.reranker);
    auto prompt = augment_prompt(question, ans.retrieved, pipeline.tmpl, pipeline.system);
    ans.prompt_tokens = prompt.prompt_tokens;
    ans.text = chat.chat(prompt.request).text;
    return ans;
}

std::vector<SweepRow> sweep(std::span<const RetrievalConfig> grid,
                            const std::vector<corpus::CorpusDocument>& docs,
                            const EmbedderLookup& embedders, const providers::Reranker* reranker,
                            const SweepEvaluator& evaluate) {
    std::map<std::string, VectorStore> stores;
    std::vector<SweepRow> rows;
    for (const auto& cfg : grid) {
        cfg.validate();
        const auto& emb = embedders(cfg.embedding);
        std::string key = std::string(corpus::to_string(cfg.strategy)) + "/" +
                          std::to_string(cfg.chunk_size) + "/" + std::to_string(cfg.chunk_overlap) +
                          "/" + cfg.embedding;
        auto it = stores.find(key);
        if (it == stores.end()) {
            std::vector<corpus::Chunk> chunks;
            for (const auto& d : docs) {
                auto c = corpus::chunk_document(d, cfg.strategy, cfg.chunk_size, cfg.chunk_overlap);
                chunks.insert(chunks.end(), c.begin(), c.end());
            }
            spdlog::info("sweep: indexing {} chunks for {}", chunks.size(), key);
            it = stores.emplace(key, build_index(chunks, emb)).first;
        }
        RagPipeline p{&it->second, &emb, reranker, cfg, std::string(default_rag_template()), {}};
        rows.push_back({cfg, evaluate(p)});
    }
    return rows;
}

}  // namespace domeval::rag
