#include "doctest.h"

#include <filesystem>
#include <random>

#include "domeval/config.hpp"
#include "domeval/error.hpp"
#include "domeval/pipeline.hpp"
#include "domeval/util.hpp"

using namespace domeval;
using namespace domeval::config;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("domeval-config-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const std::string kManifest = std::string(DOMEVAL_FIXTURES) + "/corpus/manifest.json";

}  // namespace

TEST_CASE("run config parsing") {
    auto cfg = RunConfig::parse(R"({
        "seed": 9,
        "corpus": "corpus/manifest.json",
        "endpoints": [
            {"name": "gen", "base_url": "mock://generator?seed=2&max_items=3"},
            {"name": "remote", "base_url": "https://api.example.org/v1", "model": "m", "api_key_env": "KEY",
             "temperature": 0.2, "max_retries": 5, "timeout_ms": 1000}
        ],
        "systems": [
            {"name": "plain", "endpoint": "gen"},
            {"name": "rag", "endpoint": "gen",
             "rag": {"retrieval": {"chunk_size": 512, "chunk_overlap": 50, "top_k": 10, "rerank": null}}}
        ],
        "datagen": {"generator": "gen", "ratios": [0.7, 0.2, 0.1], "dedup": true}
    })", "/data/run");
    CHECK(cfg.seed == 9);
    CHECK(cfg.corpus == "/data/run/corpus/manifest.json");
    REQUIRE(cfg.endpoints.size() == 2);
    CHECK(cfg.endpoint("remote").max_retries == 5);
    CHECK(cfg.endpoint("remote").temperature == 0.2);
    CHECK(cfg.endpoint("remote").request_timeout.count() == 1000);
    REQUIRE(cfg.systems[1].rag);
    CHECK(cfg.systems[1].rag->retrieval.chunk_size == 512);
    CHECK_FALSE(cfg.systems[1].rag->retrieval.rerank);
    CHECK(cfg.datagen.ratios.train == 0.7);
    CHECK(cfg.datagen.dedup);
    CHECK(cfg.embedders.size() == 3);  // defaults kept

    auto again = RunConfig::parse(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());
    CHECK(again.hash() == cfg.hash());
    CHECK(RunConfig::defaults().hash() != cfg.hash());

    CHECK_THROWS_AS(cfg.endpoint("nope"), Error);
    CHECK_THROWS_AS(RunConfig::parse(R"({"systems": [{"name": "a", "endpoint": "x"}, {"name": "a", "endpoint": "y"}]})"), Error);
    CHECK_THROWS_AS(RunConfig::parse(R"({"endpoints": [{"name": "a", "base_url": "mock://echo", "temperature": -1}]})"), Error);
    CHECK_THROWS_AS(RunConfig::parse("{not json"), Error);
    CHECK_THROWS_AS(parse_retrieval(R"({"top_k": 3, "rerank": {"keep": 5}})"), Error);
    CHECK(parse_retrieval(retrieval_to_json(rag::configuration_grid()[5])).label() == rag::configuration_grid()[5].label());
}

TEST_CASE("mock chat factory") {
    auto make = [](std::string url) {
        providers::ModelEndpoint ep;
        ep.name = "m";
        ep.base_url = std::move(url);
        return make_chat(ep);
    };
    CHECK(make("mock://echo")->chat({"", "hello"}).text == "hello");
    CHECK(make("mock://fixed?text=B")->chat({"", "x"}).text == "B");
    auto letter = make("mock://random-letter?seed=4")->chat({"", "x"}).text;
    CHECK((letter == "A" || letter == "B" || letter == "C" || letter == "D"));
    auto judge = make("mock://judge?threshold=0.5");
    auto tmpl = eval::JudgeTemplate::defaults();
    auto user = fill_template(tmpl.user, {{"context", "c"}, {"question", "q"}, {"reference", "qt long"}, {"answer", "qt long"}});
    CHECK(eval::parse_verdict(judge->chat({tmpl.system, user}).text)->verdict == eval::Verdict::correct);
    CHECK_NOTHROW(make("mock://generator?seed=1&max_items=2"));
    CHECK_NOTHROW(make("mock://lexical?seed=1"));
    CHECK_NOTHROW(make("http://localhost:1/v1"));
    try {
        make("mock://oracle");
        FAIL("expected UnknownEndpoint");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownEndpoint);
    }
    CHECK_THROWS_AS(make("ftp://host"), Error);
}

TEST_CASE("registry") {
    TempDir tmp;
    auto cfg = RunConfig::defaults();
    cfg.audit_log = (tmp.path / "audit" / "log.jsonl").string();
    Registry reg(cfg);
    auto& a = reg.chat("echo");
    CHECK(&a == &reg.chat("echo"));
    CHECK(reg.chat("mock://fixed?text=hi").chat({"", "x"}).text == "hi");
    a.chat({"", "ping"});
    CHECK(split_lines(read_file(cfg.audit_log)).size() >= 1);
    CHECK(reg.embedder("pubmedbert").dimension() == 384);
    CHECK(reg.embedder("bert-tokens").granularity() == providers::Granularity::token);
    CHECK_THROWS_AS(reg.embedder("missing"), Error);
    CHECK(reg.reranker("") == nullptr);
    CHECK(reg.reranker("lexical") != nullptr);
    CHECK_THROWS_AS(reg.chat("missing"), Error);

    auto corpus = pipeline::load_corpus(kManifest, cfg);
    auto systems = reg.systems(corpus.docs);
    REQUIRE(systems.size() == 3);
    CHECK(systems[0].rag == nullptr);
    REQUIRE(systems[1].rag != nullptr);
    CHECK(systems[1].rag->store->size() > 0);
    CHECK(systems[1].rag->reranker != nullptr);
    CHECK(systems[0].chat == systems[1].chat);

    // A saved index is loaded instead of rebuilt.
    auto store = *systems[1].rag->store;
    store.save(tmp.path / "idx.bin");
    auto cfg2 = RunConfig::defaults();
    cfg2.systems[1].rag->index = (tmp.path / "idx.bin").string();
    Registry reg2(cfg2);
    auto s2 = reg2.systems({});
    CHECK(s2[1].rag->store->serialize() == store.serialize());
    cfg2.systems[1].rag->retrieval.embedding = "bert-tokens";
    Registry reg3(cfg2);
    CHECK_THROWS_AS(reg3.systems({}), Error);
}

TEST_CASE("pipeline datasets") {
    auto cfg = RunConfig::defaults();
    Registry reg(cfg);
    auto corpus = pipeline::load_corpus(kManifest, cfg);
    CHECK(corpus.docs.size() == 5);
    CHECK(corpus.essential.size() == 1);
    CHECK(corpus.special.size() == 2);
    auto qa = pipeline::make_qa(corpus, reg.chat("generator"), cfg, 5);
    auto mcq = pipeline::make_mcq(corpus, reg.chat("generator"), cfg, 5);
    CHECK_FALSE(qa.items.empty());
    for (const auto& p : qa.items)
        if (corpus.essential.contains(p.doc_id)) CHECK(p.split == datagen::Split::train);
    for (const auto& m : mcq.items) CHECK(m.special == corpus.special.contains(m.doc_id));
    auto ctx = pipeline::contexts(corpus.chapters);
    for (const auto& p : qa.items) CHECK(ctx.contains(p.context_ref));

    auto systems = reg.systems(corpus.docs);
    auto recs = pipeline::evaluate(eval::Layer::mcq, systems, qa.items, mcq.items, corpus, reg, eval::Subset::special, 1);
    for (const auto& r : recs) CHECK(r.subset == "special");
    CHECK_THROWS_AS(pipeline::evaluate(eval::Layer::human, systems, qa.items, mcq.items, corpus, reg, eval::Subset::full, 1),
                    Error);
}

TEST_CASE("end-to-end run is reproducible") {
    TempDir tmp;
    auto cfg = RunConfig::defaults();
    cfg.n_iter = 200;
    auto files = pipeline::run_end_to_end(kManifest, cfg, tmp.path / "a");
    pipeline::run_end_to_end(kManifest, cfg, tmp.path / "b");
    CHECK(files.size() == 12);
    for (const auto& f : files) CHECK_MESSAGE(read_file(tmp.path / "a" / f) == read_file(tmp.path / "b" / f), f);
    cfg.seed = 43;
    pipeline::run_end_to_end(kManifest, cfg, tmp.path / "c");
    CHECK(read_file(tmp.path / "a" / "manifest.json") != read_file(tmp.path / "c" / "manifest.json"));
}
