#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "domeval/config.hpp"
#include "domeval/corpus.hpp"
#include "domeval/datagen.hpp"
#include "domeval/error.hpp"
#include "domeval/eval.hpp"
#include "domeval/grading.hpp"
#include "domeval/metrics.hpp"
#include "domeval/pipeline.hpp"
#include "domeval/rag.hpp"
#include "domeval/util.hpp"

using namespace domeval;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config_path;
    bool verbose = false;
    bool quiet = false;
    int workers = 0;

    config::RunConfig load() const {
        auto cfg = config_path.empty() ? config::RunConfig::defaults() : config::RunConfig::load(config_path);
        if (workers > 0) cfg.workers = static_cast<std::size_t>(workers);
        return cfg;
    }
};

void ensure_parent(const fs::path& p) {
    if (auto parent = p.parent_path(); !parent.empty()) fs::create_directories(parent);
}

void write_out(const fs::path& p, std::string_view content) {
    ensure_parent(p);
    write_file_atomic(p, content);
    spdlog::info("wrote {}", p.string());
}

std::string manifest_path(const config::RunConfig& cfg, const std::string& explicit_path) {
    if (!explicit_path.empty()) return explicit_path;
    if (!cfg.corpus.empty()) return cfg.corpus;
    throw Error(ErrorCode::InvalidArgument, "no corpus manifest: pass --corpus or set \"corpus\" in the config");
}

std::vector<std::string> read_lines(const fs::path& p) {
    auto lines = split_lines(read_file(p));
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

rag::RetrievalConfig retrieval_arg(const std::string& arg) {
    if (arg.empty() || arg == "default") return {};
    for (const auto& c : rag::configuration_grid())
        if (c.label() == arg) return c;
    if (fs::exists(arg)) return config::parse_retrieval(read_file(arg));
    throw Error(ErrorCode::InvalidArgument, "retrieval config is neither 'default', a grid label nor a file: " + arg);
}

std::string fmt_profile(const datagen::DatasetProfile& p) {
    std::string s = fmt::format("items: {}\nmean_flesch: {:.2f}\n", p.n_items, p.mean_flesch);
    for (const auto& [k, v] : p.split_counts) s += fmt::format("split.{}: {}\n", k, v);
    return s;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain LLM evaluation toolkit: dataset generation, RAG, metrics, evaluation layers, rankings "
                 "and blinded human grading."};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Run config JSON (endpoints, embedders, systems, judge, datagen)")
        ->check(CLI::ExistingFile);
    app.add_option("--workers", g.workers, "Worker threads (overrides config)");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");
    app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

    // corpus --------------------------------------------------------------
    auto* corpus_cmd = app.add_subcommand("corpus", "Clean, split and chunk a corpus");
    corpus_cmd->require_subcommand(1);
    struct {
        std::string manifest, out, strategy = "recursive";
        std::size_t size = 1024, overlap = 100;
    } ca;
    auto* chunk_cmd = corpus_cmd->add_subcommand("chunk", "Chunk every document into JSONL");
    chunk_cmd->add_option("--corpus", ca.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
    chunk_cmd->add_option("--strategy", ca.strategy, "recursive | markdown_header");
    chunk_cmd->add_option("--size", ca.size, "Chunk size in tokens");
    chunk_cmd->add_option("--overlap", ca.overlap, "Overlap in tokens");
    chunk_cmd->add_option("--out", ca.out, "Output JSONL")->required();
    auto* chapters_cmd = corpus_cmd->add_subcommand("chapters", "Split every document into chapters");
    chapters_cmd->add_option("--corpus", ca.manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
    chapters_cmd->add_option("--out", ca.out, "Output JSONL")->required();

    // datagen -------------------------------------------------------------
    auto* datagen_cmd = app.add_subcommand("datagen", "Generate and profile synthetic datasets");
    datagen_cmd->require_subcommand(1);
    struct {
        std::string manifest, generator, out, in;
        std::optional<std::uint64_t> seed;
    } da;
    CLI::App* gen_cmds[2];
    const char* gen_names[2] = {"qa", "mcq"};
    for (int i = 0; i < 2; ++i) {
        auto* c = datagen_cmd->add_subcommand(gen_names[i], i == 0 ? "Generate question-answer pairs"
                                                                  : "Generate multiple-choice items");
        c->add_option("--corpus", da.manifest, "Corpus manifest (default: config corpus)");
        c->add_option("--generator", da.generator, "Generator endpoint name or URL (default: config)");
        c->add_option("--seed", da.seed, "Split seed (default: config seed)");
        c->add_option("--out", da.out, "Output JSONL")->required();
        gen_cmds[i] = c;
    }
    auto* profile_cmd = datagen_cmd->add_subcommand("profile", "Item counts, split counts and mean Flesch score");
    profile_cmd->add_option("--in", da.in, "QA or MCQ JSONL")->required()->check(CLI::ExistingFile);

    // rag -----------------------------------------------------------------
    auto* rag_cmd = app.add_subcommand("rag", "Build indexes and answer with retrieval");
    rag_cmd->require_subcommand(1);
    struct {
        std::string chunks, embedding = "pubmedbert", out, index, retrieval = "default", endpoint, question;
        bool show_context = false;
    } ra;
    auto* index_cmd = rag_cmd->add_subcommand("index", "Embed chunks into a vector store");
    index_cmd->add_option("--chunks", ra.chunks, "Chunks JSONL from 'corpus chunk'")->required()->check(CLI::ExistingFile);
    index_cmd->add_option("--embedding", ra.embedding, "Embedder name from the config");
    index_cmd->add_option("--out", ra.out, "Index file")->required();
    auto* ask_cmd = rag_cmd->add_subcommand("ask", "Retrieve, augment and ask one question");
    ask_cmd->add_option("--index", ra.index, "Index file")->required()->check(CLI::ExistingFile);
    ask_cmd->add_option("--config", ra.retrieval, "Retrieval config: 'default', a grid label or a JSON file");
    ask_cmd->add_option("--endpoint", ra.endpoint, "Chat endpoint name or URL")->required();
    ask_cmd->add_option("--question", ra.question, "Question text")->required();
    ask_cmd->add_flag("--show-context", ra.show_context, "Print the retrieved chunks");
    auto* grid_cmd = rag_cmd->add_subcommand("grid", "List the retrieval configuration grid");

    // metrics -------------------------------------------------------------
    auto* metrics_cmd = app.add_subcommand("metrics", "Text similarity metrics");
    metrics_cmd->require_subcommand(1);
    struct {
        std::string pred, ref, embedder = "bert-tokens", csv;
    } ma;
    auto* score_cmd = metrics_cmd->add_subcommand("score", "Score line-aligned predictions against references");
    score_cmd->add_option("--pred", ma.pred, "Predictions, one per line")->required()->check(CLI::ExistingFile);
    score_cmd->add_option("--ref", ma.ref, "References, one per line")->required()->check(CLI::ExistingFile);
    score_cmd->add_option("--embedder", ma.embedder, "Token embedder for BERTScore");
    score_cmd->add_option("--csv", ma.csv, "Also write per-item CSV here");

    // eval ----------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Run an evaluation layer or ingest human labels");
    eval_cmd->require_subcommand(1);
    struct {
        std::string systems, dataset, subset = "full", out, manifest, csv, records, label_subset = "curated";
        std::optional<std::uint64_t> seed;
    } ea;
    CLI::App* layer_cmds[3];
    const char* layer_names[3] = {"mcq", "textsim", "judge"};
    for (int i = 0; i < 3; ++i) {
        auto* c = eval_cmd->add_subcommand(layer_names[i], fmt::format("Run the {} layer for every system", layer_names[i]));
        c->add_option("--systems", ea.systems, "Run config with the system roster")->check(CLI::ExistingFile);
        c->add_option("--dataset", ea.dataset, "QA or MCQ JSONL")->required()->check(CLI::ExistingFile);
        c->add_option("--subset", ea.subset, "full | special | checked")
            ->check(CLI::IsMember({"full", "special", "checked"}));
        c->add_option("--seed", ea.seed, "Option shuffle seed (default: config seed)");
        c->add_option("--corpus", ea.manifest, "Corpus manifest (contexts, special flags, RAG indexes)");
        c->add_option("--out", ea.out, "Records JSONL (default: records/<layer>-<subset>.jsonl)");
        layer_cmds[i] = c;
    }
    auto* ingest_cmd = eval_cmd->add_subcommand("ingest-human", "Convert a grading export into human-layer records");
    ingest_cmd->add_option("--csv", ea.csv, "Grading export CSV")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--records", ea.records, "Records JSONL whose (system, item_id) pairs must cover the CSV");
    ingest_cmd->add_option("--subset", ea.label_subset, "Subset name for the records");
    ingest_cmd->add_option("--out", ea.out, "Records JSONL")->required();

    // rank ----------------------------------------------------------------
    auto* rank_cmd = app.add_subcommand("rank", "Bootstrap leaderboards and the median-rank table");
    struct {
        std::vector<std::string> records;
        std::string layers = "mcq,textsim,judge,human", out;
        std::size_t n_iter = 1000;
        std::uint64_t seed = 42;
    } rk;
    rank_cmd->add_option("--records", rk.records, "Records JSONL files or directories")->required();
    rank_cmd->add_option("--layers", rk.layers, "Comma-separated layers");
    rank_cmd->add_option("--n-iter", rk.n_iter, "Bootstrap iterations");
    rank_cmd->add_option("--seed", rk.seed, "Bootstrap seed");
    rank_cmd->add_option("--out", rk.out, "Directory for leaderboards.csv and median_rank.csv");

    // serve ---------------------------------------------------------------
    auto* serve_cmd = app.add_subcommand("serve", "Blinded human-grading HTTP service");
    struct {
        int port = 8080;
        std::string data_dir = "grading-data", host = "127.0.0.1", token, cors = "*";
    } sa;
    serve_cmd->add_option("--port", sa.port, "Port");
    serve_cmd->add_option("--data-dir", sa.data_dir, "Session storage directory");
    serve_cmd->add_option("--host", sa.host, "Bind address");
    serve_cmd->add_option("--token", sa.token, "Shared bearer token")->envname("DOMEVAL_GRADING_TOKEN");
    serve_cmd->add_option("--cors-origin", sa.cors, "Access-Control-Allow-Origin value; empty disables");

    // run -----------------------------------------------------------------
    auto* run_cmd = app.add_subcommand("run", "End-to-end: datagen, index, eval mcq+textsim+judge, rank");
    struct {
        std::string manifest, out = "run";
        std::optional<std::uint64_t> seed;
    } rn;
    run_cmd->add_option("--corpus", rn.manifest, "Corpus manifest (default: config corpus)");
    run_cmd->add_option("--out", rn.out, "Output directory");
    run_cmd->add_option("--seed", rn.seed, "Master seed (default: config seed)");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("domeval"));
    spdlog::set_level(g.verbose ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (chunk_cmd->parsed()) {
            auto cfg = g.load();
            auto docs = corpus::load_manifest(ca.manifest, cfg.patterns());
            std::vector<corpus::Chunk> chunks;
            for (const auto& d : docs)
                for (auto& c : corpus::chunk_document(d, corpus::parse_chunk_strategy(ca.strategy), ca.size, ca.overlap))
                    chunks.push_back(std::move(c));
            write_out(ca.out, corpus::chunks_to_jsonl(chunks));
            std::cout << fmt::format("{} chunks from {} documents\n", chunks.size(), docs.size());
        } else if (chapters_cmd->parsed()) {
            auto cfg = g.load();
            auto corpus = pipeline::load_corpus(ca.manifest, cfg);
            write_out(ca.out, corpus::chapters_to_jsonl(corpus.chapters));
            std::cout << fmt::format("{} chapters from {} documents\n", corpus.chapters.size(), corpus.docs.size());
        } else if (gen_cmds[0]->parsed() || gen_cmds[1]->parsed()) {
            auto cfg = g.load();
            config::Registry reg(cfg);
            auto corpus = pipeline::load_corpus(manifest_path(cfg, da.manifest), cfg);
            auto& gen = reg.chat(da.generator.empty() ? cfg.datagen.generator : da.generator);
            const auto seed = da.seed.value_or(cfg.seed);
            datagen::DatasetProfile prof;
            std::size_t filtered = 0, malformed = 0, refused = 0;
            if (gen_cmds[0]->parsed()) {
                auto ds = pipeline::make_qa(corpus, gen, cfg, seed);
                write_out(da.out, datagen::qa_to_jsonl(ds.items));
                prof = datagen::profile(ds.items);
                filtered = ds.filtered, malformed = ds.malformed, refused = ds.refused_chapters.size();
            } else {
                auto ds = pipeline::make_mcq(corpus, gen, cfg, seed);
                write_out(da.out, datagen::mcq_to_jsonl(ds.items));
                prof = datagen::profile(ds.items);
                filtered = ds.filtered, malformed = ds.malformed, refused = ds.refused_chapters.size();
            }
            std::cout << fmt_profile(prof)
                      << fmt::format("filtered: {}\nmalformed: {}\nrefused_chapters: {}\n", filtered, malformed, refused);
        } else if (profile_cmd->parsed()) {
            const auto text = read_file(da.in);
            const auto kind = datagen::detect_kind(text);
            auto prof = kind == "mcq" ? datagen::profile(datagen::mcq_from_jsonl(text))
                                      : datagen::profile(datagen::qa_from_jsonl(text));
            std::cout << "kind: " << kind << "\n" << fmt_profile(prof);
        } else if (index_cmd->parsed()) {
            config::Registry reg(g.load());
            auto chunks = corpus::chunks_from_jsonl(read_file(ra.chunks));
            auto store = rag::build_index(chunks, reg.embedder(ra.embedding));
            ensure_parent(ra.out);
            store.save(ra.out);
            std::cout << fmt::format("indexed {} chunks ({} dims, {}) into {}\n", store.size(), store.dimension(),
                                     store.provider(), ra.out);
        } else if (ask_cmd->parsed()) {
            config::Registry reg(g.load());
            auto store = rag::VectorStore::load(ra.index);
            rag::RagPipeline p;
            p.store = &store;
            p.config = retrieval_arg(ra.retrieval);
            p.embedder = &reg.embedder(p.config.embedding);
            if (p.config.rerank) p.reranker = reg.reranker(p.config.rerank->provider);
            p.system = std::string(eval::qa_system_prompt());
            auto ans = rag::answer_with_rag(reg.chat(ra.endpoint), p, ra.question);
            if (ra.show_context) std::cout << rag::format_context(ans.retrieved) << "\n\n---\n";
            std::cout << ans.text << "\n";
            spdlog::info("{} chunk(s), {} prompt tokens", ans.retrieved.chunks.size(), ans.prompt_tokens);
        } else if (grid_cmd->parsed()) {
            int i = 0;
            for (const auto& c : rag::configuration_grid()) std::cout << ++i << "\t" << c.label() << "\n";
        } else if (score_cmd->parsed()) {
            config::Registry reg(g.load());
            auto pred = read_lines(ma.pred), ref = read_lines(ma.ref);
            if (pred.size() != ref.size())
                throw Error(ErrorCode::MisalignedVectors,
                            fmt::format("{} predictions vs {} references", pred.size(), ref.size()));
            const auto& emb = reg.embedder(ma.embedder);
            std::vector<metrics::SimilarityReport> reps;
            std::string csv = "item,bleu,rouge1_p,rouge1_r,rouge1_f1,rouge2_p,rouge2_r,rouge2_f1,rougeL_p,rougeL_r,"
                              "rougeL_f1,bertscore_p,bertscore_r,bertscore_f1\n";
            auto prf = [](const metrics::PRF& x) { return fmt::format("{},{},{}", x.precision, x.recall, x.f1); };
            std::cout << fmt::format("{:>6} {:>8} {:>8} {:>8} {:>8} {:>9}\n", "item", "BLEU", "ROUGE-1", "ROUGE-2",
                                     "ROUGE-L", "BERTScore");
            auto row = [&](const std::string& label, const metrics::SimilarityReport& r) {
                std::cout << fmt::format("{:>6} {:8.4f} {:8.4f} {:8.4f} {:8.4f} {:9.4f}\n", label, r.bleu, r.rouge1.f1,
                                         r.rouge2.f1, r.rougeL.f1, r.bertscore.f1);
                csv += fmt::format("{},{},{},{},{},{}\n", label, r.bleu, prf(r.rouge1), prf(r.rouge2), prf(r.rougeL),
                                   prf(r.bertscore));
            };
            for (std::size_t i = 0; i < pred.size(); ++i) {
                reps.push_back(metrics::score_pair(pred[i], ref[i], emb));
                row(std::to_string(i + 1), reps.back());
            }
            if (!reps.empty()) row("mean", metrics::mean_report(reps));
            if (!ma.csv.empty()) write_out(ma.csv, csv);
        } else if (layer_cmds[0]->parsed() || layer_cmds[1]->parsed() || layer_cmds[2]->parsed()) {
            auto cfg = ea.systems.empty() ? g.load() : config::RunConfig::load(ea.systems);
            if (g.workers > 0) cfg.workers = static_cast<std::size_t>(g.workers);
            config::Registry reg(cfg);
            const auto layer = layer_cmds[0]->parsed()   ? eval::Layer::mcq
                               : layer_cmds[1]->parsed() ? eval::Layer::text_sim
                                                         : eval::Layer::judge;
            const auto subset = eval::parse_subset(ea.subset);
            const auto text = read_file(ea.dataset);
            const auto kind = datagen::detect_kind(text);
            if ((layer == eval::Layer::mcq) != (kind == "mcq"))
                throw Error(ErrorCode::InvalidArgument, "dataset kind '" + kind + "' does not fit this layer");
            pipeline::LoadedCorpus corpus;
            const std::string manifest = ea.manifest.empty() ? cfg.corpus : ea.manifest;
            if (!manifest.empty()) corpus = pipeline::load_corpus(manifest, cfg);
            else if (layer == eval::Layer::judge)
                throw Error(ErrorCode::InvalidArgument, "the judge layer needs --corpus for source contexts");
            std::vector<datagen::QAPair> qa;
            std::vector<datagen::MCQItem> mcq;
            if (kind == "mcq") mcq = datagen::mcq_from_jsonl(text);
            else qa = datagen::qa_from_jsonl(text);
            auto systems = reg.systems(corpus.docs);
            const auto seed = ea.seed.value_or(cfg.seed);
            auto recs = pipeline::evaluate(layer, systems, qa, mcq, corpus, reg, subset, seed);
            const std::string out = ea.out.empty() ? fmt::format("records/{}-{}.jsonl", eval::to_string(layer), ea.subset)
                                                   : ea.out;
            write_out(out, eval::records_to_jsonl(recs));
            write_out(out + ".manifest.json",
                      pipeline::run_manifest(cfg, {{fs::path(ea.dataset).filename().string(), hex64(fnv1a64(text))}}));
            std::map<std::string, std::pair<double, std::size_t>> means;
            for (const auto& r : recs) {
                means[r.system].first += r.score;
                ++means[r.system].second;
            }
            for (const auto& s : systems)
                if (means.contains(s.name))
                    std::cout << fmt::format("{:<32} {:.4f}  (n={})\n", s.name,
                                             means[s.name].first / means[s.name].second, means[s.name].second);
        } else if (ingest_cmd->parsed()) {
            std::set<std::pair<std::string, std::string>> known;
            if (!ea.records.empty())
                for (const auto& r : eval::records_from_jsonl(read_file(ea.records))) known.insert({r.system, r.item_id});
            auto recs = eval::ingest_human_labels(read_file(ea.csv), known, ea.label_subset);
            write_out(ea.out, eval::records_to_jsonl(recs));
            std::cout << fmt::format("{} human-layer record(s)\n", recs.size());
        } else if (rank_cmd->parsed()) {
            std::vector<fs::path> files;
            for (const auto& p : rk.records) {
                if (fs::is_directory(p)) {
                    std::vector<fs::path> in_dir;
                    for (const auto& e : fs::directory_iterator(p))
                        if (e.path().extension() == ".jsonl") in_dir.push_back(e.path());
                    std::sort(in_dir.begin(), in_dir.end());
                    files.insert(files.end(), in_dir.begin(), in_dir.end());
                } else {
                    files.emplace_back(p);
                }
            }
            std::vector<eval::EvalRecord> recs;
            for (const auto& f : files)
                for (auto& r : eval::records_from_jsonl(read_file(f))) recs.push_back(std::move(r));
            eval::check_unique(recs);
            std::vector<eval::Layer> layers;
            for (const auto& l : split_lines(replace_all(rk.layers, ",", "\n")))
                if (!is_blank(l)) layers.push_back(eval::parse_layer(trim(l)));
            auto report = eval::build_rankings(recs, layers, rk.n_iter, rk.seed,
                                               g.workers > 0 ? static_cast<std::size_t>(g.workers) : 4);
            std::cout << eval::format_report(report);
            if (!rk.out.empty()) {
                write_out(fs::path(rk.out) / "leaderboards.csv", eval::leaderboards_csv(report));
                write_out(fs::path(rk.out) / "median_rank.csv", eval::median_csv(report));
            }
        } else if (serve_cmd->parsed()) {
            grading::GradingStore store(sa.data_dir);
            grading::GradingServer server(store, {sa.token, sa.cors});
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            std::jthread watcher([&server](std::stop_token st) {
                while (!st.stop_requested() && !g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
                server.stop();
            });
            const bool ok = server.listen(sa.host, sa.port);
            watcher.request_stop();
            if (!ok && !g_stop) throw Error(ErrorCode::Io, fmt::format("cannot listen on {}:{}", sa.host, sa.port));
            spdlog::info("grading: stopped");
        } else if (run_cmd->parsed()) {
            auto cfg = g.load();
            if (rn.seed) cfg.seed = *rn.seed;
            auto files = pipeline::run_end_to_end(manifest_path(cfg, rn.manifest), cfg, rn.out);
            for (const auto& f : files) std::cout << (fs::path(rn.out) / f).string() << "\n";
            std::cout << read_file(fs::path(rn.out) / "report.txt");
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
