#include "doctest.h"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <thread>

#include <nlohmann/json.hpp>

#include "domeval/error.hpp"
#include "domeval/providers.hpp"
#include "domeval/util.hpp"

using namespace domeval;
using namespace domeval::providers;
using namespace std::chrono_literals;

namespace {

class ScriptedTransport final : public HttpTransport {
public:
    explicit ScriptedTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}
    HttpResponse post(const std::string& path, const std::string& body,
                      const std::map<std::string, std::string>& headers) override {
        last_path = path;
        last_body = body;
        last_headers = headers;
        auto r = script_[std::min(attempts, script_.size() - 1)];
        ++attempts;
        return r;
    }
    std::size_t attempts = 0;
    std::string last_path, last_body;
    std::map<std::string, std::string> last_headers;

private:
    std::vector<HttpResponse> script_;
};

std::string ok_body(const std::string& text, const std::string& reason = "stop") {
    nlohmann::json j;
    j["choices"] = {{{"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", reason}}};
    j["usage"] = {{"prompt_tokens", 12}, {"completion_tokens", 3}};
    return j.dump();
}

ModelEndpoint fast_endpoint(int retries) {
    ModelEndpoint ep;
    ep.name = "test-model";
    ep.base_url = "http://127.0.0.1:1/v1";
    ep.model_id = "m";
    ep.max_retries = retries;
    ep.backoff_initial = 1ms;
    return ep;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::Io;
}

std::string vector_digest(const Vector& v) {
    std::string bytes(v.size() * sizeof(float), '\0');
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return hex64(fnv1a64(bytes));
}

}  // namespace

TEST_CASE("echo mock returns the user text") {
    EchoChat chat;
    CHECK(chat.chat({"sys", "hello there"}).text == "hello there");
}

TEST_CASE("chat retries transient failures") {
    SUBCASE("500 twice then 200 with max_retries=3") {
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{
            {500, "oops", ""}, {500, "oops", ""}, {200, ok_body("fine"), ""}});
        OpenAIChatClient client(fast_endpoint(3), t);
        auto resp = client.chat({"", "q"});
        CHECK(resp.text == "fine");
        CHECK(t->attempts == 3);
        CHECK(resp.usage.prompt_tokens == 12);
        CHECK(t->last_path == "/chat/completions");
    }
    SUBCASE("permanently failing endpoint with max_retries=1") {
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{503, "", ""}});
        OpenAIChatClient client(fast_endpoint(1), t);
        CHECK(code_of([&] { client.chat({"", "q"}); }) == ErrorCode::RetriesExhausted);
        CHECK(t->attempts == 2);
    }
    SUBCASE("connection failures end as EndpointUnreachable") {
        auto t = std::make_shared<ScriptedTransport>(
            std::vector<HttpResponse>{{0, "", "Connection"}});
        OpenAIChatClient client(fast_endpoint(2), t);
        CHECK(code_of([&] { client.chat({"", "q"}); }) == ErrorCode::EndpointUnreachable);
        CHECK(t->attempts == 3);
    }
    SUBCASE("auth failures are not retried") {
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{401, "no", ""}});
        OpenAIChatClient client(fast_endpoint(5), t);
        CHECK(code_of([&] { client.chat({"", "q"}); }) == ErrorCode::AuthFailure);
        CHECK(t->attempts == 1);
    }
    SUBCASE("truncated responses raise") {
        auto t = std::make_shared<ScriptedTransport>(
            std::vector<HttpResponse>{{200, ok_body("partial", "length"), ""}});
        OpenAIChatClient client(fast_endpoint(0), t);
        CHECK(code_of([&] { client.chat({"", "q"}); }) == ErrorCode::ResponseTruncated);
    }
    SUBCASE("missing API key variable") {
        auto ep = fast_endpoint(0);
        ep.api_key_ref = "DOMEVAL_TEST_KEY_THAT_IS_NOT_SET";
        auto t = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, ok_body("x"), ""}});
        OpenAIChatClient client(ep, t);
        CHECK(code_of([&] { client.chat({"", "q"}); }) == ErrorCode::AuthFailure);
        CHECK(t->attempts == 0);
    }
}

TEST_CASE("endpoint validation") {
    auto ep = fast_endpoint(0);
    ep.temperature = -0.1;
    CHECK(code_of([&] { ep.validate(); }) == ErrorCode::InvalidArgument);
    ep.temperature = 0;
    ep.max_retries = -1;
    CHECK(code_of([&] { ep.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("OpenAI-compatible wire format against a local server") {
    httplib::Server server;
    std::string seen_auth;
    nlohmann::json seen_chat, seen_embed;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_chat = nlohmann::json::parse(req.body);
        res.set_content(ok_body("pong"), "application/json");
    });
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        seen_embed = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["data"] = nlohmann::json::array();
        for (std::size_t i = 0; i < seen_embed["input"].size(); ++i)
            out["data"].push_back({{"index", i}, {"embedding", {1.0 * i, 2.0, 3.0}}});
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("DOMEVAL_TEST_KEY", "secret", 1);
    ModelEndpoint ep;
    ep.name = "local";
    ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    ep.api_key_ref = "DOMEVAL_TEST_KEY";
    ep.model_id = "llama-test";
    ep.temperature = 0.0;
    ep.max_output_tokens = 77;
    ep.request_timeout = 5000ms;

    auto transport = make_http_transport(ep.base_url, ep.request_timeout);
    OpenAIChatClient chat(ep, transport);
    auto resp = chat.chat({"be brief", "ping"});
    CHECK(resp.text == "pong");
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_chat["model"] == "llama-test");
    CHECK(seen_chat["max_tokens"] == 77);
    CHECK(seen_chat["messages"][0]["role"] == "system");
    CHECK(seen_chat["messages"][1]["content"] == "ping");

    OpenAIEmbeddingClient emb(ep, 3, transport);
    std::vector<std::string> texts{"a", "b"};
    auto vecs = emb.embed(texts);
    REQUIRE(vecs.size() == 2);
    CHECK(vecs[1] == Vector{1.0f, 2.0f, 3.0f});
    CHECK(seen_embed["input"].size() == 2);

    OpenAIEmbeddingClient wrong_dim(ep, 4, transport);
    CHECK(code_of([&] { wrong_dim.embed(texts); }) == ErrorCode::DimensionMismatch);

    server.stop();
    th.join();
}

TEST_CASE("audit log writes one line per successful call") {
    auto path = std::filesystem::temp_directory_path() / "domeval_audit_test.jsonl";
    std::filesystem::remove(path);
    auto log = std::make_shared<AuditLog>(path);
    auto t = std::make_shared<ScriptedTransport>(
        std::vector<HttpResponse>{{500, "", ""}, {200, ok_body("done"), ""}});
    OpenAIChatClient client(fast_endpoint(2), t);
    client.set_audit_log(log);
    client.chat({"s", "u"});
    EchoChat echo("echo");
    echo.set_audit_log(log);
    echo.chat({"s", "u"});
    auto lines = split_lines(read_file(path));
    REQUIRE(lines.size() == 2);  // the retried 500 is not logged
    auto first = nlohmann::json::parse(lines[0]);
    CHECK(first["endpoint"] == "test-model");
    CHECK(first["request_hash"] == nlohmann::json::parse(lines[1])["request_hash"]);
    CHECK(first["response_hash"] == hex64(fnv1a64("done")));
    CHECK(first["timestamp"].get<std::string>().size() == 24);
    std::filesystem::remove(path);
}

TEST_CASE("in-flight requests are bounded per client") {
    std::atomic<int> active{0}, peak{0};
    ModelEndpoint ep = fast_endpoint(0);
    class Slow final : public ChatClient {
    public:
        Slow(std::atomic<int>& a, std::atomic<int>& p) : ChatClient("slow", 2), a_(a), p_(p) {}

    protected:
        ChatResponse complete(const ChatRequest&) override {
            int now = ++a_;
            int prev = p_.load();
            while (now > prev && !p_.compare_exchange_weak(prev, now)) {}
            std::this_thread::sleep_for(5ms);
            --a_;
            return {"ok", FinishReason::stop, {}};
        }

    private:
        std::atomic<int>& a_;
        std::atomic<int>& p_;
    } slow(active, peak);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { slow.chat({"", "x"}); });
    for (auto& th : threads) th.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("hash embedder") {
    HashEmbedder emb("mock", 64, 7);
    std::vector<std::string> same{"The QT interval", "The QT interval"};
    auto v = emb.embed(same);
    CHECK(v[0] == v[1]);
    CHECK(v[0].size() == 64);
    std::vector<std::string> diff{"The QT interval", "Atrial fibrillation"};
    auto d = emb.embed(diff);
    CHECK(d[0] != d[1]);
    CHECK(code_of([&] { emb.embed(std::vector<std::string>{}); }) == ErrorCode::EmptyInput);
    CHECK(code_of([&] { emb.embed_tokens("x"); }) == ErrorCode::GranularityMismatch);

    SUBCASE("golden vectors for a fixed 5-sentence fixture") {
        std::vector<std::string> fixture{
            "The QT interval spans ventricular depolarization and repolarization.",
            "Atrial fibrillation has no discernible P waves.",
            "Right bundle branch block widens the QRS complex.",
            "Reciprocal ST depression supports an ischemic cause.",
            "Lead V1 sits in the fourth intercostal space."};
        HashEmbedder golden("golden", 32, 0);
        auto vecs = golden.embed(fixture);
        REQUIRE(vecs.size() == 5);
        // Recorded once from this mock; any change in hashing or layout breaks them.
        const std::string expected[] = {"982b060655226848", "9aa4eed5ecbcde15", "47591d73716d2655",
                                        "dea0805163d51d15", "469c54141319aaf5"};
        for (std::size_t i = 0; i < 5; ++i) {
            INFO("sentence " << i << " digest " << vector_digest(vecs[i]));
            CHECK(vector_digest(vecs[i]) == expected[i]);
        }
    }
}

TEST_CASE("hash token embedder") {
    HashTokenEmbedder emb("tok", 128, 3);
    auto a = emb.embed_tokens("heart rate heart");
    REQUIRE(a.size() == 3);
    CHECK(a[0] == a[2]);
    double norm = 0;
    for (float x : a[0]) norm += x * x;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(code_of([&] { emb.embed(std::vector<std::string>{"x"}); }) == ErrorCode::GranularityMismatch);
}

TEST_CASE("lexical reranker counts shared distinct words") {
    LexicalReranker r;
    std::vector<std::string> docs{"the heart the heart", "rate of the heart", "unrelated"};
    auto s = r.score("heart rate", docs);
    CHECK(s == std::vector<double>{1, 2, 0});
}

TEST_CASE("fallback faithfulness scorer") {
    LexicalFaithfulness f;
    const std::string context =
        "Atrial fibrillation causes an irregular ventricular rhythm without P waves. "
        "Rate control is the usual first step.";

    SUBCASE("verbatim sentence scores 1") {
        CHECK(f.score(context, "Rate control is the usual first step.") == 1.0);
    }
    SUBCASE("no shared content words scores 0") {
        CHECK(f.score(context, "Potassium levels matter during surgery.") == 0.0);
    }
    SUBCASE("partial overlap on a 10-word claim") {
        // Claim content tokens: atrial fibrillation causes irregular rhythm elderly heart patients
        // Context content run: atrial fibrillation causes irregular ventricular rhythm without p waves
        //   unigrams 5/8 matched, bigrams 3/7, trigrams 2/6
        //   score = (1*5 + 2*3 + 3*2) / (1*8 + 2*7 + 3*6) = 17/40
        const std::string claim = "atrial fibrillation causes an irregular rhythm in elderly heart patients";
        CHECK(f.score(context, claim) == doctest::Approx(17.0 / 40.0).epsilon(1e-12));
    }
    SUBCASE("empty inputs are rejected") {
        CHECK(code_of([&] { f.score("", "x"); }) == ErrorCode::EmptyInput);
    }
}

TEST_CASE("random-letter mock is order independent and roughly uniform") {
    RandomLetterChat a("r", 42), b("r", 42);
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < 400; ++i) {
        auto q = "question " + std::to_string(i);
        auto x = a.chat({"", q}).text;
        CHECK(x == b.chat({"", q}).text);
        counts[x[0] - 'A']++;
    }
    for (int c : counts) CHECK(c > 60);
}

TEST_CASE("mock URL parsing") {
    auto m = MockUrl::parse("mock://random-letter?seed=7&x=1");
    REQUIRE(m);
    CHECK(m->kind == "random-letter");
    CHECK(m->get("seed") == "7");
    CHECK(m->get("missing", "d") == "d");
    CHECK_FALSE(MockUrl::parse("http://x"));
}
