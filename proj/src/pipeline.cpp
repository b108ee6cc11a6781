#include "domeval/pipeline.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/rag.hpp"
#include "domeval/ranking.hpp"
#include "domeval/util.hpp"

namespace domeval::pipeline {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

LoadedCorpus load_corpus(const fs::path& manifest, const config::RunConfig& cfg) {
    LoadedCorpus out;
    out.docs = corpus::load_manifest(manifest, cfg.patterns());
    for (const auto& d : out.docs) {
        if (d.essential) out.essential.insert(d.id);
        if (d.special) out.special.insert(d.id);
        auto split = corpus::split_chapters(d, cfg.datagen.max_chapters, cfg.datagen.options.max_chapter_tokens);
        if (!split.dropped.empty())
            spdlog::warn("{}: {} chapter(s) beyond the cap dropped", d.id, split.dropped.size());
        for (auto& c : split.chapters) out.chapters.push_back(std::move(c));
    }
    return out;
}

Dataset<datagen::QAPair> make_qa(const LoadedCorpus& corpus, providers::ChatClient& generator,
                                 const config::RunConfig& cfg, std::uint64_t seed) {
    providers::LexicalFaithfulness scorer;
    auto g = datagen::generate_qa_all(corpus.chapters, generator, scorer, cfg.datagen.options, cfg.workers);
    Dataset<datagen::QAPair> out{std::move(g.kept), g.filtered.size(), g.malformed, std::move(g.refused_chapters)};
    if (cfg.datagen.dedup) out.items = datagen::dedup(out.items);
    datagen::split_dataset(out.items, cfg.datagen.ratios, seed, corpus.essential);
    return out;
}

Dataset<datagen::MCQItem> make_mcq(const LoadedCorpus& corpus, providers::ChatClient& generator,
                                   const config::RunConfig& cfg, std::uint64_t seed) {
    auto g = datagen::generate_mcq_all(corpus.chapters, generator, cfg.datagen.options, cfg.workers);
    Dataset<datagen::MCQItem> out{std::move(g.kept), g.filtered.size(), g.malformed, std::move(g.refused_chapters)};
    if (cfg.datagen.dedup) out.items = datagen::dedup(out.items);
    datagen::split_dataset(out.items, cfg.datagen.ratios, seed, corpus.essential);
    for (auto& m : out.items) m.special = corpus.special.contains(m.doc_id);
    return out;
}

eval::ContextLookup contexts(const std::vector<corpus::Chapter>& chapters) {
    eval::ContextLookup out;
    for (const auto& c : chapters) out[c.ref()] = c.text;
    return out;
}

std::vector<eval::EvalRecord> evaluate(eval::Layer layer, const std::vector<eval::SystemUnderTest>& systems,
                                       const std::vector<datagen::QAPair>& qa,
                                       const std::vector<datagen::MCQItem>& mcq, const LoadedCorpus& corpus,
                                       config::Registry& registry, eval::Subset subset, std::uint64_t seed) {
    const auto& cfg = registry.config();
    const std::string subset_name(eval::to_string(subset));
    std::vector<eval::EvalRecord> out;
    auto append = [&](std::vector<eval::EvalRecord> recs) {
        for (auto& r : recs) out.push_back(std::move(r));
    };
    switch (layer) {
        case eval::Layer::mcq: {
            auto items = eval::select_mcq(mcq, subset, corpus.special);
            for (const auto& s : systems) append(eval::run_mcq(s, items, seed, subset_name, cfg.workers));
            break;
        }
        case eval::Layer::text_sim: {
            auto items = eval::select_qa(qa, subset, corpus.special);
            const auto& emb = registry.embedder(cfg.token_embedder);
            for (const auto& s : systems) append(eval::run_text_sim(s, items, emb, subset_name, cfg.workers));
            break;
        }
        case eval::Layer::judge: {
            auto items = eval::select_qa(qa, subset, corpus.special);
            auto ctx = contexts(corpus.chapters);
            auto& judge = registry.chat(cfg.judge);
            for (const auto& s : systems)
                append(eval::run_judge(s, items, ctx, judge, subset_name, cfg.judge_template, cfg.workers));
            break;
        }
        case eval::Layer::human:
            throw Error(ErrorCode::InvalidArgument, "human labels are ingested, not generated");
    }
    std::size_t flagged = 0;
    for (const auto& r : out) flagged += r.flagged;
    spdlog::info("eval {}/{}: {} record(s), {} flagged", eval::to_string(layer), subset_name, out.size(), flagged);
    return out;
}

std::string run_manifest(const config::RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& datasets) {
    json j;
    j["config_hash"] = cfg.hash();
    j["seed"] = cfg.seed;
    j["datasets"] = json::object();
    for (const auto& [name, h] : datasets) j["datasets"][name] = h;
    j["endpoints"] = json::array();
    for (const auto& e : cfg.endpoints) j["endpoints"].push_back({{"name", e.name}, {"base_url", e.base_url}, {"model", e.model_id}});
    j["systems"] = json::array();
    for (const auto& s : cfg.systems)
        j["systems"].push_back({{"name", s.name}, {"endpoint", s.endpoint},
                                {"rag", s.rag ? json(s.rag->retrieval.label()) : json(nullptr)}});
    return j.dump(2) + "\n";
}

std::vector<std::string> run_end_to_end(const fs::path& manifest, const config::RunConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir / "records");
    std::vector<std::string> written;
    std::vector<std::pair<std::string, std::string>> hashes;
    auto put = [&](const std::string& name, const std::string& content) {
        write_file_atomic(out_dir / name, content);
        written.push_back(name);
        hashes.emplace_back(name, hex64(fnv1a64(content)));
    };

    config::Registry registry(cfg);
    auto corpus = load_corpus(manifest, cfg);
    put("chapters.jsonl", corpus::chapters_to_jsonl(corpus.chapters));

    auto& generator = registry.chat(cfg.datagen.generator);
    auto qa = make_qa(corpus, generator, cfg, derive_seed(cfg.seed, "split:qa"));
    auto mcq = make_mcq(corpus, generator, cfg, derive_seed(cfg.seed, "split:mcq"));
    put("qa.jsonl", datagen::qa_to_jsonl(qa.items));
    put("mcq.jsonl", datagen::mcq_to_jsonl(mcq.items));

    const rag::RetrievalConfig default_rag;
    std::vector<corpus::Chunk> chunks;
    for (const auto& d : corpus.docs)
        for (auto& c : corpus::chunk_document(d, default_rag.strategy, default_rag.chunk_size, default_rag.chunk_overlap))
            chunks.push_back(std::move(c));
    put("chunks.jsonl", corpus::chunks_to_jsonl(chunks));
    auto store = rag::build_index(chunks, registry.embedder(cfg.chunk_embedder));
    put("index.bin", store.serialize());

    auto systems = registry.systems(corpus.docs);
    std::vector<eval::EvalRecord> all;
    const eval::Layer layers[] = {eval::Layer::mcq, eval::Layer::text_sim, eval::Layer::judge};
    for (auto layer : layers) {
        auto recs = evaluate(layer, systems, qa.items, mcq.items, corpus, registry, eval::Subset::full,
                             derive_seed(cfg.seed, "eval:" + std::string(eval::to_string(layer))));
        put("records/" + std::string(eval::to_string(layer)) + ".jsonl", eval::records_to_jsonl(recs));
        for (auto& r : recs) all.push_back(std::move(r));
    }

    auto report = eval::build_rankings(all, layers, cfg.n_iter, derive_seed(cfg.seed, "rank"), cfg.workers);
    put("leaderboards.csv", eval::leaderboards_csv(report));
    put("median_rank.csv", eval::median_csv(report));
    put("report.txt", eval::format_report(report));
    write_file_atomic(out_dir / "manifest.json", run_manifest(cfg, hashes));
    written.push_back("manifest.json");
    return written;
}

}  // namespace domeval::pipeline
