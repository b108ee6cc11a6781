#include "doctest.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "domeval/corpus.hpp"
#include "domeval/datagen.hpp"
#include "domeval/error.hpp"
#include "domeval/eval.hpp"
#include "domeval/util.hpp"

using namespace domeval;
using namespace domeval::eval;
using datagen::MCQItem;
using datagen::QAPair;
using datagen::Split;
using providers::ChatRequest;
using providers::EchoChat;
using providers::FixedChat;
using providers::FunctionChat;
using providers::HashTokenEmbedder;
using providers::RandomLetterChat;
using providers::ScriptedChat;

namespace {

MCQItem mcq(std::string id, int correct, Split split = Split::test, std::string doc = "doc") {
    MCQItem m;
    m.id = std::move(id);
    m.doc_id = std::move(doc);
    m.question = "Which statement about " + m.id + " is correct?";
    m.options = {"option zero " + m.id, "option one " + m.id, "option two " + m.id, "option three " + m.id};
    m.correct_index = correct;
    m.context_ref = m.doc_id + "#0";
    m.split = split;
    return m;
}

QAPair qa(std::string id, std::string question, std::string answer, Split split = Split::test) {
    QAPair p;
    p.id = std::move(id);
    p.doc_id = "doc";
    p.question = std::move(question);
    p.answer = std::move(answer);
    p.context_ref = "doc#0";
    p.split = split;
    return p;
}

// Reads the shown options back out of the MCQ prompt and answers with the
// letter whose text matches the item's correct option.
class OracleMcqChat final : public providers::ChatClient {
public:
    explicit OracleMcqChat(std::map<std::string, std::string> correct_by_question)
        : ChatClient("oracle"), correct_(std::move(correct_by_question)) {}

protected:
    providers::ChatResponse complete(const ChatRequest& req) override {
        auto stem = req.user.substr(0, req.user.find("\n\n"));
        const auto& want = correct_.at(stem);
        for (const auto& line : split_lines(req.user))
            if (line.size() > 3 && line[1] == ')' && line.substr(3) == want) return {line.substr(0, 1), {}, {}};
        return {"?", {}, {}};
    }

private:
    std::map<std::string, std::string> correct_;
};

EvalRecord rec(std::string sys, std::string item, Layer layer, double score, std::string subset = "full") {
    EvalRecord r;
    r.system = std::move(sys);
    r.item_id = std::move(item);
    r.layer = layer;
    r.score = score;
    r.subset = std::move(subset);
    return r;
}

}  // namespace

TEST_CASE("answer letter parsing") {
    CHECK(parse_answer_letter("B") == 1);
    CHECK(parse_answer_letter("Answer: C.") == 2);
    CHECK(parse_answer_letter("(D)") == 3);
    CHECK(parse_answer_letter("The answer is A") == 0);
    CHECK(parse_answer_letter("AB") == std::nullopt);
    CHECK(parse_answer_letter("E") == std::nullopt);
    CHECK(parse_answer_letter("a") == std::nullopt);
    CHECK(parse_answer_letter("") == std::nullopt);
    CHECK(parse_answer_letter("Both A and B") == 0);
}

TEST_CASE("option permutation") {
    std::set<std::array<int, 4>> seen;
    for (int i = 0; i < 200; ++i) {
        auto p = option_permutation(7, "item" + std::to_string(i));
        auto s = p;
        std::sort(s.begin(), s.end());
        CHECK(s == std::array<int, 4>{0, 1, 2, 3});
        CHECK(p == option_permutation(7, "item" + std::to_string(i)));
        seen.insert(p);
    }
    CHECK(seen.size() == 24);
    int differ = 0;
    for (int i = 0; i < 50; ++i)
        differ += option_permutation(1, "x" + std::to_string(i)) != option_permutation(2, "x" + std::to_string(i));
    CHECK(differ > 25);
}

TEST_CASE("MCQ layer") {
    std::vector<MCQItem> items;
    std::map<std::string, std::string> correct;
    for (int i = 0; i < 40; ++i) {
        items.push_back(mcq("m" + std::to_string(i), i % 4));
        correct[items.back().question] = items.back().options[items.back().correct_index];
    }

    SUBCASE("always-correct system scores 1") {
        OracleMcqChat chat(correct);
        auto recs = run_mcq({"oracle", &chat, nullptr}, items, 11);
        REQUIRE(recs.size() == items.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(recs[i].item_id == items[i].id);
            CHECK(recs[i].score == 1.0);
            CHECK_FALSE(recs[i].flagged);
        }
    }
    SUBCASE("invalid letter is flagged and scores 0") {
        FixedChat chat("bad", "E");
        auto recs = run_mcq({"bad", &chat, nullptr}, items, 11);
        for (const auto& r : recs) {
            CHECK(r.score == 0.0);
            CHECK(r.flagged);
            CHECK(r.flag_reason == "unparseable");
            CHECK(r.response_text == "E");
        }
    }
    SUBCASE("transport failure becomes a flagged record") {
        FunctionChat chat("down", [](const ChatRequest&) -> std::string {
            throw Error(ErrorCode::EndpointUnreachable, "connection refused");
        });
        auto recs = run_mcq({"down", &chat, nullptr}, items, 11);
        REQUIRE(recs.size() == items.size());
        for (const auto& r : recs) {
            CHECK(r.flagged);
            CHECK(r.flag_reason.starts_with("error: "));
        }
    }
    SUBCASE("offline rescoring reproduces the record") {
        RandomLetterChat chat("rnd", 5);
        auto recs = run_mcq({"rnd", &chat, nullptr}, items, 11);
        for (std::size_t i = 0; i < recs.size(); ++i) {
            auto again = score_mcq_response("rnd", items[i], 11, recs[i].response_text);
            CHECK(again.score == recs[i].score);
            CHECK(again.detail == recs[i].detail);
        }
    }
    SUBCASE("every system sees the same option order") {
        std::vector<std::string> a, b;
        FunctionChat ca("a", [&](const ChatRequest& r) { return a.push_back(r.user), std::string("A"); });
        FunctionChat cb("b", [&](const ChatRequest& r) { return b.push_back(r.user), std::string("B"); });
        run_mcq({"a", &ca, nullptr}, items, 11, "full", 1);
        run_mcq({"b", &cb, nullptr}, items, 11, "full", 1);
        CHECK(a == b);
    }
}

TEST_CASE("MCQ statistics on 1000 items") {
    std::vector<MCQItem> items;
    for (int i = 0; i < 1000; ++i) items.push_back(mcq("s" + std::to_string(i), static_cast<int>(i * 7 % 4)));
    RandomLetterChat chat("rnd", 99);
    auto recs = run_mcq({"rnd", &chat, nullptr}, items, 2024);
    double acc = 0;
    for (const auto& r : recs) acc += r.score;
    acc /= 1000.0;
    const double sigma = std::sqrt(0.25 * 0.75 / 1000.0);
    CHECK(std::abs(acc - 0.25) <= 3 * sigma);

    std::array<int, 4> pos{};
    for (const auto& it : items) {
        auto p = option_permutation(2024, it.id);
        for (int k = 0; k < 4; ++k)
            if (p[k] == it.correct_index) ++pos[k];
    }
    for (int k = 0; k < 4; ++k) CHECK(std::abs(pos[k] / 1000.0 - 0.25) <= 0.05);
}

TEST_CASE("subset selection") {
    std::vector<MCQItem> m = {mcq("a", 0, Split::train, "sp"), mcq("b", 0, Split::validation, "sp"),
                              mcq("c", 0, Split::test, "other"), mcq("d", 0, Split::train, "other")};
    m[3].checked = true;
    auto ids = [](const auto& v) {
        std::vector<std::string> out;
        for (const auto& x : v) out.push_back(x.id);
        return out;
    };
    CHECK(ids(select_mcq(m, Subset::full)) == std::vector<std::string>{"b", "c"});
    CHECK(ids(select_mcq(m, Subset::special, {"sp"})) == std::vector<std::string>{"b"});
    CHECK(ids(select_mcq(m, Subset::checked)) == std::vector<std::string>{"d"});

    std::vector<QAPair> q = {qa("x", "q", "a", Split::train), qa("y", "q", "a", Split::validation),
                             qa("z", "q", "a", Split::test)};
    CHECK(ids(select_qa(q, Subset::full, {})) == std::vector<std::string>{"z"});
    CHECK(ids(select_qa(q, Subset::special, {"doc"})) == std::vector<std::string>{"z"});
    CHECK(select_qa(q, Subset::special, {"nope"}).empty());
}

TEST_CASE("text similarity layer") {
    HashTokenEmbedder emb("tok", 256, 1);
    std::vector<QAPair> items = {qa("t1", "first?", "the qt interval is long"),
                                 qa("t2", "second?", "sinus rhythm at normal rate"),
                                 qa("t3", "third?", "bundle branch block")};

    SUBCASE("exact answer scores 1") {
        std::map<std::string, std::string> ans;
        for (const auto& it : items) ans[it.question] = it.answer;
        FunctionChat chat("exact", [&](const ChatRequest& r) { return ans.at(r.user); });
        for (const auto& r : run_text_sim({"exact", &chat, nullptr}, items, emb)) {
            CHECK(r.score == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(r.layer == Layer::text_sim);
        }
    }
    SUBCASE("unrelated answer scores 0") {
        FixedChat chat("off", "completely unrelated words here");
        for (const auto& r : run_text_sim({"off", &chat, nullptr}, items, emb)) CHECK(r.score == 0.0);
    }
    SUBCASE("hand-computed unigram F1") {
        // t1: 3 shared of 3 / 5 -> P 1, R 0.6, F1 0.75
        // t2: "rhythm rate fast" shares 2 of 3 / 5 -> P 2/3, R 0.4, F1 0.5
        // t3: "left bundle branch block" shares 3 of 4 / 3 -> P 0.75, R 1, F1 6/7
        std::map<std::string, std::string> ans = {{"first?", "qt interval long"},
                                                  {"second?", "rhythm rate fast"},
                                                  {"third?", "left bundle branch block"}};
        FunctionChat chat("part", [&](const ChatRequest& r) { return ans.at(r.user); });
        auto recs = run_text_sim({"part", &chat, nullptr}, items, emb);
        CHECK(recs[0].score == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(recs[1].score == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(recs[2].score == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
        auto d = nlohmann::json::parse(recs[0].detail);
        for (auto key : {"bleu", "rouge1", "rouge2", "rougeL", "bertscore"}) CHECK(d.contains(key));
    }
    SUBCASE("empty response is flagged") {
        FixedChat chat("empty", "");
        for (const auto& r : run_text_sim({"empty", &chat, nullptr}, items, emb)) {
            CHECK(r.flagged);
            CHECK(r.score == 0.0);
        }
    }
}

TEST_CASE("verdict parsing") {
    CHECK(parse_verdict(R"({"verdict": "correct", "rationale": "ok"})")->verdict == Verdict::correct);
    auto v = parse_verdict("Here is my assessment:\n```json\n{\"verdict\": \"Incorrect\", \"rationale\": \"wrong lead\"}\n```");
    REQUIRE(v);
    CHECK(v->verdict == Verdict::incorrect);
    CHECK(v->rationale == "wrong lead");
    CHECK_FALSE(parse_verdict("correct"));
    CHECK_FALSE(parse_verdict(R"({"verdict": "maybe"})"));
    CHECK_FALSE(parse_verdict(R"({"score": 3})"));
}

TEST_CASE("judge layer") {
    std::vector<QAPair> items = {qa("j1", "What prolongs the QT interval?", "hypokalemia prolongs the qt interval"),
                                 qa("j2", "What is normal sinus rate?", "between sixty and one hundred")};
    ContextLookup ctx = {{"doc#0", "Hypokalemia prolongs the QT interval. Normal sinus rate is 60 to 100."}};
    std::map<std::string, std::string> ans = {{items[0].question, "hypokalemia prolongs the qt interval"},
                                              {items[1].question, "about two hundred"}};
    FunctionChat sys("sys", [&](const ChatRequest& r) { return ans.at(r.user); });

    SUBCASE("mock judge on exact and wrong answers") {
        MockJudgeChat judge("judge");
        auto recs = run_judge({"sys", &sys, nullptr}, items, ctx, judge);
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].score == 1.0);
        CHECK(recs[1].score == 0.0);
        CHECK_FALSE(recs[0].flagged);
        CHECK(nlohmann::json::parse(recs[0].detail)["verdict"] == "correct");
    }
    SUBCASE("judge prompt carries every section") {
        std::string seen;
        FunctionChat judge("j", [&](const ChatRequest& r) {
            seen = r.user;
            return std::string(R"({"verdict":"correct","rationale":"fine"})");
        });
        run_judge({"sys", &sys, nullptr}, {items[0]}, ctx, judge);
        CHECK(seen.find(ctx["doc#0"]) != std::string::npos);
        CHECK(seen.find(items[0].question) != std::string::npos);
        CHECK(seen.find("Reference answer:\nhypokalemia prolongs the qt interval") != std::string::npos);
        CHECK(seen.find("Answer to evaluate:\nhypokalemia prolongs the qt interval") != std::string::npos);
        CHECK(seen.find('{' + std::string("answer}")) == std::string::npos);
    }
    SUBCASE("one repair retry") {
        ScriptedChat judge("j", {"I think it is right.", R"({"verdict":"correct"})"});
        auto recs = run_judge({"sys", &sys, nullptr}, {items[0]}, ctx, judge, "full", JudgeTemplate::defaults(), 1);
        CHECK(judge.calls() == 2);
        CHECK(recs[0].score == 1.0);
        CHECK_FALSE(recs[0].flagged);
    }
    SUBCASE("unparseable after repair is flagged") {
        ScriptedChat judge("j", {"no", "still no"});
        auto recs = run_judge({"sys", &sys, nullptr}, {items[0]}, ctx, judge, "full", JudgeTemplate::defaults(), 1);
        CHECK(judge.calls() == 2);
        CHECK(recs[0].flagged);
        CHECK(recs[0].flag_reason == "judge_unparseable");
        CHECK(recs[0].score == 0.0);
    }
    SUBCASE("missing context is flagged") {
        MockJudgeChat judge("judge");
        auto recs = run_judge({"sys", &sys, nullptr}, items, {}, judge);
        for (const auto& r : recs) CHECK(r.flag_reason == "unknown_context");
    }
}

TEST_CASE("human labels") {
    CHECK(label_score(parse_label("correct")) == 1.0);
    CHECK(label_score(parse_label("Correct but incomplete")) == 0.75);
    CHECK(label_score(parse_label("correct_incomplete")) == 0.75);
    CHECK(label_score(parse_label("partially correct")) == 0.75);
    CHECK(label_score(parse_label("Partially-Incorrect")) == 0.25);
    CHECK(label_score(parse_label(" incorrect ")) == 0.0);
    CHECK_THROWS_AS(parse_label("mostly right"), Error);
    try {
        parse_label("wrong");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownLabel);
    }

    std::string csv = "system,item_id,category\n"
                      "a,q1,correct\n"
                      "a,q2,\"correct but incomplete\"\n"
                      "b,q1,partially incorrect\r\n"
                      "b,q2,incorrect\n";
    auto recs = ingest_human_labels(csv);
    REQUIRE(recs.size() == 4);
    CHECK(recs[1].score == 0.75);
    CHECK(recs[2].score == 0.25);
    CHECK(recs[3].score == 0.0);
    CHECK(recs[0].layer == Layer::human);
    CHECK(recs[0].subset == "curated");
    CHECK(nlohmann::json::parse(recs[1].detail)["category"] == "correct_incomplete");

    std::set<std::pair<std::string, std::string>> known = {{"a", "q1"}, {"a", "q2"}, {"b", "q1"}};
    try {
        ingest_human_labels(csv, known);
        FAIL("expected UnknownItem");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownItem);
    }
    CHECK_THROWS_AS(ingest_human_labels("system,item_id,category\na,q1,great\n"), Error);
    CHECK_THROWS_AS(ingest_human_labels("system,item\na,q1\n"), Error);
    CHECK_THROWS_AS(ingest_human_labels("system,item_id,category\na,q1,correct\na,q1,incorrect\n"), Error);
}

TEST_CASE("CSV helpers") {
    auto rows = parse_csv("a,\"b,c\",\"say \"\"hi\"\"\"\n\nx,\"multi\nline\",\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "say \"hi\""});
    CHECK(rows[1] == std::vector<std::string>{"x", "multi\nline", ""});
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("q\"q") == "\"q\"\"q\"");
    CHECK_THROWS_AS(parse_csv("\"open"), Error);
    for (std::string s : {"plain", "a,b", "x\"y", "line\nbreak", ""}) CHECK(parse_csv(csv_field(s) + ",z\n")[0][0] == s);
}

TEST_CASE("records") {
    std::vector<EvalRecord> recs = {rec("a", "i1", Layer::mcq, 1.0), rec("a", "i1", Layer::judge, 0.0),
                                    rec("b", "i1", Layer::mcq, 0.0)};
    recs[2].flagged = true;
    recs[2].flag_reason = "unparseable";
    recs[2].response_text = "line one\nline \"two\"";
    recs[2].detail = R"({"letter":null})";
    CHECK_NOTHROW(check_unique(recs));
    auto back = records_from_jsonl(records_to_jsonl(recs));
    REQUIRE(back.size() == 3);
    CHECK(back[2].flagged);
    CHECK(back[2].flag_reason == "unparseable");
    CHECK(back[2].response_text == recs[2].response_text);
    CHECK(back[2].detail == recs[2].detail);
    CHECK(back[1].layer == Layer::judge);
    CHECK(records_to_jsonl(back) == records_to_jsonl(recs));

    recs.push_back(rec("a", "i1", Layer::mcq, 0.0));
    CHECK_THROWS_AS(check_unique(recs), Error);
    recs.back().subset = "special";
    CHECK_NOTHROW(check_unique(recs));
    CHECK_THROWS_AS(records_from_jsonl(R"({"system":"a","item_id":"x","layer":"mcq","score":2})"), Error);
    CHECK_THROWS_AS(records_from_jsonl(R"({"system":"a","item_id":"x","layer":"vibes","score":1})"), Error);
}

TEST_CASE("score vectors and rankings") {
    std::vector<EvalRecord> recs;
    for (int i = 0; i < 30; ++i) {
        auto id = "q" + std::to_string(100 - i);
        recs.push_back(rec("strong", id, Layer::mcq, 1.0));
        recs.push_back(rec("weak", id, Layer::mcq, i % 5 == 0 ? 1.0 : 0.0));
        recs.push_back(rec("strong", id, Layer::judge, i % 3 == 0 ? 0.0 : 1.0));
        recs.push_back(rec("weak", id, Layer::judge, i % 3 == 0 ? 0.0 : 1.0));
    }
    auto v = score_vectors(recs, Layer::mcq, "full");
    REQUIRE(v.size() == 2);
    CHECK(v[0].system == "strong");
    CHECK(std::is_sorted(v[0].item_ids.begin(), v[0].item_ids.end()));
    CHECK(v[0].item_ids == v[1].item_ids);
    CHECK(score_vectors(recs, Layer::text_sim, "full").empty());

    std::vector<Layer> layers = {Layer::mcq, Layer::judge, Layer::text_sim};
    auto rep = build_rankings(recs, layers, 500, 3);
    REQUIRE(rep.boards.size() == 2);
    CHECK(rep.categories == std::vector<std::string>{"mcq", "judge"});
    CHECK(rep.boards[0].leaderboard.entries[0].system == "strong");
    CHECK(rep.boards[0].leaderboard.entries[1].rank == 2);
    CHECK(rep.boards[1].leaderboard.entries[0].rank == 1);
    CHECK(rep.boards[1].leaderboard.entries[1].rank == 1);
    REQUIRE(rep.median.size() == 2);
    CHECK(rep.median[0].system == "strong");
    CHECK(rep.median[0].median_rank == 1.0);
    CHECK(rep.median[1].median_rank == 1.5);
    CHECK(median_csv(rep) == "system,mcq,judge,median_rank\nstrong,1,1,1\nweak,2,1,1.5\n");
    CHECK(leaderboards_csv(rep).starts_with("layer,subset,rank,system,mean_score\nmcq,full,1,strong,1\n"));
    CHECK(format_report(rep).find("median") != std::string::npos);

    auto again = build_rankings(recs, layers, 500, 3);
    CHECK(leaderboards_csv(again) == leaderboards_csv(rep));

    recs.pop_back();
    try {
        score_vectors(recs, Layer::judge, "full");
        FAIL("expected MisalignedVectors");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MisalignedVectors);
    }
}

TEST_CASE("retrieval gives the lexical answerer an edge") {
    auto docs = corpus::load_manifest(std::string(DOMEVAL_FIXTURES) + "/corpus/manifest.json");
    std::vector<corpus::Chapter> chapters;
    std::vector<corpus::Chunk> chunks;
    for (const auto& d : docs) {
        for (auto& c : corpus::split_chapters(d).chapters) chapters.push_back(std::move(c));
        for (auto& c : corpus::chunk_document(d, corpus::ChunkStrategy::recursive, 256, 32)) chunks.push_back(std::move(c));
    }
    datagen::MockGeneratorChat gen("gen", 4, 6);
    auto items = datagen::generate_mcq_all(chapters, gen).kept;
    REQUIRE(items.size() >= 20);

    providers::HashEmbedder emb("hash", 256, 1);
    providers::LexicalReranker rr;
    auto store = rag::build_index(chunks, emb);
    rag::RagPipeline pipe{&store, &emb, &rr, {}, std::string(rag::default_rag_template()), {}};
    pipe.config.top_k = 10;
    pipe.config.rerank = rag::RerankConfig{"lexical", 3};

    LexicalAnswerChat base("base", 1), aug("aug", 1);
    auto plain = run_mcq({"base", &base, nullptr}, items, 5);
    auto with_rag = run_mcq({"base+rag", &aug, &pipe}, items, 5);
    double a = 0, b = 0;
    for (const auto& r : plain) a += r.score;
    for (const auto& r : with_rag) b += r.score;
    MESSAGE("plain " << a / items.size() << " rag " << b / items.size());
    CHECK(b > a);
    CHECK(nlohmann::json::parse(with_rag[0].detail)["retrieved"].size() == 3);

    MockJudgeChat judge("judge");
    ContextLookup ctx;
    for (const auto& c : chapters) ctx[c.ref()] = c.text;
    providers::LexicalFaithfulness faith;
    auto qa_items = datagen::generate_qa_all(chapters, gen, faith).kept;
    auto j = run_judge({"base+rag", &aug, &pipe}, qa_items, ctx, judge);
    std::size_t unknown = 0;
    for (const auto& r : j) unknown += r.flag_reason == "unknown_context";
    CHECK(unknown == 0);
    CHECK(j.size() == qa_items.size());
}
