#include "domeval/eval.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/metrics.hpp"
#include "domeval/parallel.hpp"
#include "domeval/rng.hpp"
#include "domeval/text.hpp"
#include "domeval/util.hpp"

namespace domeval::eval {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kReferenceMarker = "Reference answer:\n";
constexpr std::string_view kAnswerMarker = "\n\nAnswer to evaluate:\n";
constexpr std::string_view kVerdictMarker = "\n\nIs the answer to evaluate correct?";
constexpr std::string_view kJudgeRepair = "Respond ONLY with the JSON object.";

struct SystemReply {
    std::string text;
    std::vector<std::string> retrieved;
};

SystemReply ask(const SystemUnderTest& sys, std::string_view system_prompt, std::string_view query,
                std::string_view user) {
    if (!sys.chat) throw Error(ErrorCode::InvalidArgument, "system " + sys.name + " has no chat client");
    SystemReply r;
    if (sys.rag) {
        const auto& p = *sys.rag;
        auto ctx = rag::retrieve(*p.store, query, *p.embedder, p.config, p.reranker);
        auto prompt = rag::augment_prompt(user, ctx, p.tmpl, std::string(system_prompt));
        r.text = sys.chat->chat(prompt.request).text;
        for (const auto& c : ctx.chunks) r.retrieved.push_back(c.chunk_id);
    } else {
        r.text = sys.chat->chat({std::string(system_prompt), std::string(user)}).text;
    }
    return r;
}

EvalRecord failed_record(const std::string& system, const std::string& item_id, Layer layer,
                         std::string_view subset, std::string reason) {
    EvalRecord r;
    r.system = system;
    r.item_id = item_id;
    r.layer = layer;
    r.subset = std::string(subset);
    r.flagged = true;
    r.flag_reason = std::move(reason);
    return r;
}

json prf_json(const metrics::PRF& x) {
    return {{"precision", x.precision}, {"recall", x.recall}, {"f1", x.f1}};
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

std::string_view to_string(Layer l) {
    switch (l) {
        case Layer::mcq: return "mcq";
        case Layer::text_sim: return "textsim";
        case Layer::judge: return "judge";
        case Layer::human: return "human";
    }
    return "mcq";
}

Layer parse_layer(std::string_view s) {
    if (s == "mcq") return Layer::mcq;
    if (s == "textsim" || s == "text_sim") return Layer::text_sim;
    if (s == "judge") return Layer::judge;
    if (s == "human") return Layer::human;
    throw Error(ErrorCode::Parse, "unknown layer: " + std::string(s));
}

std::string_view to_string(Subset s) {
    switch (s) {
        case Subset::full: return "full";
        case Subset::special: return "special";
        case Subset::checked: return "checked";
    }
    return "full";
}

Subset parse_subset(std::string_view s) {
    if (s == "full") return Subset::full;
    if (s == "special") return Subset::special;
    if (s == "checked") return Subset::checked;
    throw Error(ErrorCode::Parse, "unknown subset: " + std::string(s));
}

void check_unique(std::span<const EvalRecord> records) {
    std::set<std::tuple<std::string, std::string, Layer, std::string>> seen;
    for (const auto& r : records)
        if (!seen.emplace(r.system, r.item_id, r.layer, r.subset).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate record " + r.system + "/" + r.item_id +
                                                        "/" + std::string(to_string(r.layer)) + "/" +
                                                        r.subset);
}

std::string records_to_jsonl(std::span<const EvalRecord> records) {
    std::string out;
    for (const auto& r : records) {
        json j;
        j["system"] = r.system;
        j["item_id"] = r.item_id;
        j["layer"] = to_string(r.layer);
        j["subset"] = r.subset;
        j["response_text"] = r.response_text;
        j["score"] = r.score;
        j["flagged"] = r.flagged;
        if (r.flagged) j["flag_reason"] = r.flag_reason;
        j["detail"] = json::parse(r.detail.empty() ? "{}" : r.detail);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<EvalRecord> records_from_jsonl(std::string_view jsonl) {
    std::vector<EvalRecord> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(jsonl)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            auto j = json::parse(line);
            EvalRecord r;
            r.system = j.at("system").get<std::string>();
            r.item_id = j.at("item_id").get<std::string>();
            r.layer = parse_layer(j.at("layer").get<std::string>());
            r.subset = j.value("subset", std::string("full"));
            r.response_text = j.value("response_text", std::string());
            r.score = j.at("score").get<double>();
            r.flagged = j.value("flagged", false);
            r.flag_reason = j.value("flag_reason", std::string());
            r.detail = j.contains("detail") ? j["detail"].dump() : "{}";
            if (r.score < 0.0 || r.score > 1.0)
                throw Error(ErrorCode::Parse, "score outside [0, 1] on line " + std::to_string(line_no));
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<datagen::MCQItem> select_mcq(const std::vector<datagen::MCQItem>& items, Subset subset,
                                         const std::set<std::string>& special_docs) {
    std::vector<datagen::MCQItem> out;
    for (const auto& it : items) {
        const bool eval_split = it.split != datagen::Split::train;
        const bool special = it.special || special_docs.contains(it.doc_id);
        bool keep = subset == Subset::full      ? eval_split
                    : subset == Subset::special ? eval_split && special
                                                : it.checked;
        if (keep) out.push_back(it);
    }
    return out;
}

std::vector<datagen::QAPair> select_qa(const std::vector<datagen::QAPair>& items, Subset subset,
                                       const std::set<std::string>& special_docs) {
    std::vector<datagen::QAPair> out;
    for (const auto& it : items) {
        const bool test = it.split == datagen::Split::test;
        bool keep = subset == Subset::full      ? test
                    : subset == Subset::special ? test && special_docs.contains(it.doc_id)
                                                : it.checked;
        if (keep) out.push_back(it);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::array<int, 4> option_permutation(std::uint64_t seed, std::string_view item_id) {
    std::array<int, 4> p{0, 1, 2, 3};
    SeededRng rng(derive_seed(seed, "mcq:" + std::string(item_id)));
    rng.shuffle(std::span<int>(p));
    return p;
}

std::string_view mcq_system_prompt() {
    return "You are taking a medical multiple-choice exam. Exactly one option is correct. "
           "Reply with the letter of the correct option only.";
}

std::string mcq_prompt(std::string_view question, const std::array<std::string, 4>& shown) {
    std::string s(question);
    s += "\n\n";
    for (std::size_t i = 0; i < 4; ++i) s += fmt::format("{}) {}\n", static_cast<char>('A' + i), shown[i]);
    s += "\nAnswer with a single letter (A, B, C or D).";
    return s;
}

std::optional<int> parse_answer_letter(std::string_view r) {
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] < 'A' || r[i] > 'D') continue;
        if (i > 0 && alnum(r[i - 1])) continue;
        if (i + 1 < r.size() && alnum(r[i + 1])) continue;
        return r[i] - 'A';
    }
    return std::nullopt;
}

EvalRecord score_mcq_response(const std::string& system, const datagen::MCQItem& item,
                              std::uint64_t seed, std::string response) {
    const auto perm = option_permutation(seed, item.id);
    int correct_pos = 0;
    for (int p = 0; p < 4; ++p)
        if (perm[p] == item.correct_index) correct_pos = p;
    EvalRecord r;
    r.system = system;
    r.item_id = item.id;
    r.layer = Layer::mcq;
    auto letter = parse_answer_letter(response);
    r.response_text = std::move(response);
    json d;
    d["permutation"] = perm;
    d["correct_letter"] = std::string(1, static_cast<char>('A' + correct_pos));
    if (letter) {
        d["letter"] = std::string(1, static_cast<char>('A' + *letter));
        r.score = *letter == correct_pos ? 1.0 : 0.0;
    } else {
        d["letter"] = nullptr;
        r.flagged = true;
        r.flag_reason = "unparseable";
    }
    r.detail = d.dump();
    return r;
}

std::vector<EvalRecord> run_mcq(const SystemUnderTest& sys, const std::vector<datagen::MCQItem>& items,
                                std::uint64_t seed, std::string_view subset, std::size_t workers) {
    if (items.empty()) throw Error(ErrorCode::EmptyInput, "no MCQ items to evaluate");
    std::vector<EvalRecord> out(items.size());
    parallel_for(items.size(), workers, [&](std::size_t i) {
        const auto& item = items[i];
        const auto perm = option_permutation(seed, item.id);
        std::array<std::string, 4> shown;
        for (int p = 0; p < 4; ++p) shown[p] = item.options[perm[p]];
        try {
            auto reply = ask(sys, mcq_system_prompt(), item.question, mcq_prompt(item.question, shown));
            auto r = score_mcq_response(sys.name, item, seed, std::move(reply.text));
            if (sys.rag) {
                auto d = json::parse(r.detail);
                d["retrieved"] = reply.retrieved;
                r.detail = d.dump();
            }
            r.subset = std::string(subset);
            out[i] = std::move(r);
        } catch (const std::exception& e) {
            out[i] = failed_record(sys.name, item.id, Layer::mcq, subset, std::string("error: ") + e.what());
        }
    });
    return out;
}

// ---------------------------------------------------------------------------

std::string_view qa_system_prompt() {
    return "You are a medical expert in electrocardiography. Answer the question accurately and concisely.";
}

EvalRecord score_text_response(const std::string& system, const datagen::QAPair& item,
                               std::string response, const providers::EmbeddingProvider& embedder) {
    EvalRecord r;
    r.system = system;
    r.item_id = item.id;
    r.layer = Layer::text_sim;
    auto rep = metrics::score_pair(response, item.answer, embedder);
    r.response_text = std::move(response);
    r.score = rep.rouge1.f1;
    if (word_tokens(r.response_text).empty()) {
        r.flagged = true;
        r.flag_reason = "empty_response";
    }
    json d;
    d["bleu"] = rep.bleu;
    d["rouge1"] = prf_json(rep.rouge1);
    d["rouge2"] = prf_json(rep.rouge2);
    d["rougeL"] = prf_json(rep.rougeL);
    d["bertscore"] = prf_json(rep.bertscore);
    r.detail = d.dump();
    return r;
}

std::vector<EvalRecord> run_text_sim(const SystemUnderTest& sys,
                                     const std::vector<datagen::QAPair>& items,
                                     const providers::EmbeddingProvider& token_embedder,
                                     std::string_view subset, std::size_t workers) {
    if (items.empty()) throw Error(ErrorCode::EmptyInput, "no QA items to evaluate");
    std::vector<EvalRecord> out(items.size());
    parallel_for(items.size(), workers, [&](std::size_t i) {
        const auto& item = items[i];
        std::string response;
        try {
            response = ask(sys, qa_system_prompt(), item.question, item.question).text;
        } catch (const std::exception& e) {
            out[i] = failed_record(sys.name, item.id, Layer::text_sim, subset, std::string("error: ") + e.what());
            return;
        }
        out[i] = score_text_response(sys.name, item, std::move(response), token_embedder);
        out[i].subset = std::string(subset);
    });
    return out;
}

// ---------------------------------------------------------------------------

JudgeTemplate JudgeTemplate::defaults() {
    JudgeTemplate t;
    t.system =
        "You are an expert examiner in cardiology and electrocardiography. You decide only whether an "
        "answer is factually correct, using the reference answer and the source context. You do not "
        "rank or score answers.";
    t.user = "Source context:\n{context}\n\nQuestion:\n{question}\n\n";
    t.user += kReferenceMarker;
    t.user += "{reference}";
    t.user += kAnswerMarker;
    t.user += "{answer}";
    t.user += kVerdictMarker;
    t.user += " Respond only with a JSON object of the form "
              "{\"verdict\": \"correct\" | \"incorrect\", \"rationale\": \"<one sentence>\"}.";
    return t;
}

std::optional<JudgeVerdict> parse_verdict(std::string_view reply) {
    auto text = extract_json(reply, '{');
    if (text.empty()) return std::nullopt;
    auto j = json::parse(text, nullptr, false);
    if (!j.is_object() || !j.contains("verdict") || !j["verdict"].is_string()) return std::nullopt;
    auto v = to_lower_ascii(trim(j["verdict"].get<std::string>()));
    JudgeVerdict out;
    if (v == "correct") out.verdict = Verdict::correct;
    else if (v == "incorrect") out.verdict = Verdict::incorrect;
    else return std::nullopt;
    if (j.contains("rationale") && j["rationale"].is_string()) out.rationale = j["rationale"].get<std::string>();
    return out;
}

std::vector<EvalRecord> run_judge(const SystemUnderTest& sys, const std::vector<datagen::QAPair>& items,
                                  const ContextLookup& contexts, providers::ChatClient& judge,
                                  std::string_view subset, const JudgeTemplate& tmpl,
                                  std::size_t workers) {
    if (items.empty()) throw Error(ErrorCode::EmptyInput, "no QA items to evaluate");
    std::vector<EvalRecord> out(items.size());
    parallel_for(items.size(), workers, [&](std::size_t i) {
        const auto& item = items[i];
        auto rec = failed_record(sys.name, item.id, Layer::judge, subset, "");
        rec.flagged = false;
        SystemReply reply;
        try {
            reply = ask(sys, qa_system_prompt(), item.question, item.question);
        } catch (const std::exception& e) {
            out[i] = failed_record(sys.name, item.id, Layer::judge, subset, std::string("error: ") + e.what());
            return;
        }
        rec.response_text = reply.text;
        json d;
        auto ctx = contexts.find(item.context_ref);
        if (ctx == contexts.end()) {
            rec.flagged = true;
            rec.flag_reason = "unknown_context";
        } else {
            providers::ChatRequest req{tmpl.system,
                                       fill_template(tmpl.user, {{"context", ctx->second},
                                                                 {"question", item.question},
                                                                 {"reference", item.answer},
                                                                 {"answer", reply.text}})};
            try {
                auto v = parse_verdict(judge.chat(req).text);
                if (!v) {
                    req.user += "\n\n";
                    req.user += kJudgeRepair;
                    v = parse_verdict(judge.chat(req).text);
                }
                if (v) {
                    rec.score = v->verdict == Verdict::correct ? 1.0 : 0.0;
                    d["verdict"] = v->verdict == Verdict::correct ? "correct" : "incorrect";
                    d["rationale"] = v->rationale;
                } else {
                    rec.flagged = true;
                    rec.flag_reason = "judge_unparseable";
                }
            } catch (const std::exception& e) {
                rec.flagged = true;
                rec.flag_reason = std::string("judge_error: ") + e.what();
            }
        }
        if (sys.rag) d["retrieved"] = reply.retrieved;
        rec.detail = d.empty() ? "{}" : d.dump();
        out[i] = std::move(rec);
    });
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(LabelCategory c) {
    switch (c) {
        case LabelCategory::correct: return "correct";
        case LabelCategory::correct_incomplete: return "correct_incomplete";
        case LabelCategory::partially_incorrect: return "partially_incorrect";
        case LabelCategory::incorrect: return "incorrect";
    }
    return "incorrect";
}

LabelCategory parse_label(std::string_view s) {
    std::string n = to_lower_ascii(trim(s));
    std::replace(n.begin(), n.end(), '_', ' ');
    std::replace(n.begin(), n.end(), '-', ' ');
    n = normalize_whitespace_lower(n);
    if (n == "correct") return LabelCategory::correct;
    if (n == "correct incomplete" || n == "correct but incomplete" || n == "partially correct")
        return LabelCategory::correct_incomplete;
    if (n == "partially incorrect") return LabelCategory::partially_incorrect;
    if (n == "incorrect") return LabelCategory::incorrect;
    throw Error(ErrorCode::UnknownLabel, "unknown label: " + std::string(s));
}

double label_score(LabelCategory c) {
    switch (c) {
        case LabelCategory::correct: return 1.0;
        case LabelCategory::correct_incomplete: return 0.75;
        case LabelCategory::partially_incorrect: return 0.25;
        case LabelCategory::incorrect: return 0.0;
    }
    return 0.0;
}

std::vector<EvalRecord> ingest_human_labels(std::string_view csv,
                                            const std::set<std::pair<std::string, std::string>>& known,
                                            std::string_view subset) {
    auto rows = parse_csv(csv);
    if (rows.empty()) throw Error(ErrorCode::Parse, "empty label CSV");
    int c_sys = -1, c_item = -1, c_cat = -1;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
        auto h = to_lower_ascii(trim(rows[0][i]));
        if (h == "system") c_sys = static_cast<int>(i);
        else if (h == "item_id") c_item = static_cast<int>(i);
        else if (h == "category" || h == "label") c_cat = static_cast<int>(i);
    }
    if (c_sys < 0 || c_item < 0 || c_cat < 0)
        throw Error(ErrorCode::Parse, "label CSV needs system, item_id and category columns");
    const auto width = static_cast<std::size_t>(std::max({c_sys, c_item, c_cat}));
    std::vector<EvalRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() <= width) throw Error(ErrorCode::Parse, "short CSV row " + std::to_string(r + 1));
        EvalRecord rec;
        rec.system = trim(row[c_sys]);
        rec.item_id = trim(row[c_item]);
        rec.layer = Layer::human;
        rec.subset = std::string(subset);
        if (!known.empty() && !known.contains({rec.system, rec.item_id}))
            throw Error(ErrorCode::UnknownItem, "no response for " + rec.system + "/" + rec.item_id);
        auto cat = parse_label(row[c_cat]);
        rec.score = label_score(cat);
        rec.detail = json{{"category", to_string(cat)}}.dump();
        out.push_back(std::move(rec));
    }
    check_unique(out);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<ranking::ScoreVector> score_vectors(std::span<const EvalRecord> records, Layer layer,
                                                std::string_view subset) {
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, double>> by_system;
    for (const auto& r : records) {
        if (r.layer != layer || r.subset != subset) continue;
        if (!by_system.contains(r.system)) order.push_back(r.system);
        if (!by_system[r.system].emplace(r.item_id, r.score).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate record for " + r.system + "/" + r.item_id);
    }
    std::vector<ranking::ScoreVector> out;
    const std::map<std::string, double>* first = nullptr;
    for (const auto& name : order) {
        const auto& items = by_system[name];
        if (first) {
            bool same = items.size() == first->size() &&
                        std::equal(items.begin(), items.end(), first->begin(),
                                   [](const auto& a, const auto& b) { return a.first == b.first; });
            if (!same)
                throw Error(ErrorCode::MisalignedVectors,
                            name + " covers different items on " + std::string(to_string(layer)) + "/" +
                                std::string(subset));
        }
        first = &items;
        ranking::ScoreVector v{name, std::string(to_string(layer)), {}, {}};
        for (const auto& [id, s] : items) {
            v.item_ids.push_back(id);
            v.scores.push_back(s);
        }
        out.push_back(std::move(v));
    }
    return out;
}

RankingReport build_rankings(std::span<const EvalRecord> records, std::span<const Layer> layers,
                             std::size_t n_iter, std::uint64_t seed, std::size_t workers) {
    RankingReport rep;
    std::vector<std::string> system_order;
    for (const auto& r : records)
        if (std::find(system_order.begin(), system_order.end(), r.system) == system_order.end())
            system_order.push_back(r.system);

    std::map<std::string, ranking::SystemRanks> ranks;
    for (auto layer : layers) {
        std::set<std::string> subsets;
        for (const auto& r : records)
            if (r.layer == layer) subsets.insert(r.subset);
        if (subsets.empty()) continue;
        rep.categories.emplace_back(to_string(layer));
        for (const auto& subset : subsets) {
            auto vectors = score_vectors(records, layer, subset);
            auto board = ranking::rank_with_ties(vectors, n_iter,
                                                 derive_seed(seed, std::string(to_string(layer)) + "/" + subset),
                                                 workers);
            board.layer = std::string(to_string(layer));
            for (const auto& e : board.entries) {
                auto& sr = ranks[e.system];
                sr.system = e.system;
                sr.ranks[std::string(to_string(layer))].push_back(e.rank);
            }
            rep.boards.push_back({layer, subset, std::move(board)});
        }
    }
    std::vector<ranking::SystemRanks> rows;
    for (const auto& name : system_order)
        if (ranks.contains(name)) rows.push_back(ranks[name]);
    if (!rows.empty() && !rep.categories.empty()) rep.median = ranking::median_rank(rows, rep.categories);
    return rep;
}

std::string leaderboards_csv(const RankingReport& report) {
    std::string out = "layer,subset,rank,system,mean_score\n";
    for (const auto& b : report.boards)
        for (const auto& e : b.leaderboard.entries)
            out += fmt::format("{},{},{},{},{}\n", to_string(b.layer), csv_field(b.subset), e.rank,
                               csv_field(e.system), num(e.mean_score));
    return out;
}

std::string median_csv(const RankingReport& report) {
    std::string out = "system";
    for (const auto& c : report.categories) out += "," + c;
    out += ",median_rank\n";
    for (const auto& row : report.median) {
        out += csv_field(row.system);
        for (const auto& c : report.categories) out += "," + num(row.category_rank.at(c));
        out += "," + num(row.median_rank) + "\n";
    }
    return out;
}

std::string format_report(const RankingReport& report) {
    std::string out;
    for (const auto& b : report.boards) {
        out += fmt::format("== {} / {} ==\n", to_string(b.layer), b.subset);
        for (const auto& e : b.leaderboard.entries)
            out += fmt::format("  {:>3}  {:<32} {:.4f}\n", e.rank, e.system, e.mean_score);
        for (const auto& p : b.leaderboard.pairwise)
            out += fmt::format("     {} vs {}: diff {:+.4f} CI [{:+.4f}, {:+.4f}]{}\n", p.system_a,
                               p.system_b, p.mean_diff, p.ci_low, p.ci_high,
                               p.significant ? " *" : "");
    }
    if (!report.median.empty()) {
        out += "== median rank (within-category median over subsets) ==\n";
        out += fmt::format("  {:<32}", "system");
        for (const auto& c : report.categories) out += fmt::format(" {:>8}", c);
        out += fmt::format(" {:>8}\n", "median");
        for (const auto& row : report.median) {
            out += fmt::format("  {:<32}", row.system);
            for (const auto& c : report.categories) out += fmt::format(" {:>8}", num(row.category_rank.at(c)));
            out += fmt::format(" {:>8}\n", num(row.median_rank));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

MockJudgeChat::MockJudgeChat(std::string name, double threshold)
    : ChatClient(std::move(name)), threshold_(threshold) {}

providers::ChatResponse MockJudgeChat::complete(const providers::ChatRequest& req) {
    const auto& u = req.user;
    auto rb = u.find(kReferenceMarker);
    auto ab = u.find(kAnswerMarker, rb == std::string::npos ? 0 : rb);
    auto ve = u.find(kVerdictMarker, ab == std::string::npos ? 0 : ab);
    if (rb == std::string::npos || ab == std::string::npos || ve == std::string::npos)
        return {"I cannot judge this request.", providers::FinishReason::stop, {}};
    rb += kReferenceMarker.size();
    const auto reference = u.substr(rb, ab - rb);
    ab += kAnswerMarker.size();
    const auto answer = u.substr(ab, ve - ab);
    double f1 = 0.0;
    if (!word_tokens(reference).empty() && !word_tokens(answer).empty())
        f1 = metrics::rouge_n(answer, reference, 1).f1;
    json j{{"verdict", f1 >= threshold_ ? "correct" : "incorrect"},
           {"rationale", fmt::format("token overlap F1 {:.3f}", f1)}};
    return {j.dump(), providers::FinishReason::stop, {}};
}

LexicalAnswerChat::LexicalAnswerChat(std::string name, std::uint64_t seed)
    : ChatClient(std::move(name)), seed_(seed) {}

namespace {

std::set<std::string> token_set(std::string_view s) {
    auto t = content_tokens(s);
    return {t.begin(), t.end()};
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const auto& x : a) n += b.count(x);
    return n;
}

}  // namespace

providers::ChatResponse LexicalAnswerChat::complete(const providers::ChatRequest& req) {
    std::string_view user = req.user;
    std::string context, question(user);
    const auto cb = user.find("Context:\n");
    const auto qb = user.find("\n\nQuestion: ");
    if (cb != std::string_view::npos && qb != std::string_view::npos && qb > cb) {
        context = user.substr(cb + 9, qb - cb - 9);
        question = user.substr(qb + 12);
        if (context == rag::kNoContextMarker) context.clear();
    }
    const auto h = splitmix64(fnv1a64(req.user, seed_));

    std::array<std::string, 4> options;
    int found = 0;
    for (const auto& line : split_lines(question)) {
        if (line.size() > 3 && line[0] == static_cast<char>('A' + found) && line[1] == ')' && line[2] == ' ') {
            options[found] = line.substr(3);
            if (++found == 4) break;
        }
    }
    if (found == 4) {
        if (context.empty()) return {std::string(1, static_cast<char>('A' + h % 4)), {}, {}};
        const auto ctx = token_set(context);
        auto stem = question.substr(0, question.find("\n\nA) "));
        const auto q = token_set(stem);
        std::set<std::string> q_in_ctx;
        for (const auto& w : q)
            if (ctx.contains(w)) q_in_ctx.insert(w);
        int best = static_cast<int>(h % 4);
        double best_score = -1.0;
        for (int i = 0; i < 4; ++i) {
            auto o = token_set(options[i]);
            double in_ctx = o.empty() ? 0.0 : static_cast<double>(overlap(o, ctx)) / static_cast<double>(o.size());
            double s = static_cast<double>(overlap(o, q_in_ctx)) + in_ctx;
            if (s > best_score) {
                best_score = s;
                best = i;
            }
        }
        return {std::string(1, static_cast<char>('A' + best)), {}, {}};
    }

    if (context.empty())
        return {"Based on general knowledge: " + trim(question), providers::FinishReason::stop, {}};
    const auto q = token_set(question);
    std::string best;
    std::size_t best_n = 0;
    std::string flat;
    for (const auto& line : split_lines(context)) {
        auto t = trim(line);
        if (t.empty() || t.starts_with("[") || t.starts_with("#") || t.starts_with("|")) continue;
        flat += t + " ";
    }
    std::size_t b = 0;
    for (std::size_t i = 0; i <= flat.size(); ++i) {
        bool end = i == flat.size() ||
                   ((flat[i] == '.' || flat[i] == '!' || flat[i] == '?') && i + 1 < flat.size() && flat[i + 1] == ' ');
        if (!end) continue;
        auto s = trim(std::string_view(flat).substr(b, std::min(i + 1, flat.size()) - b));
        b = i + 1;
        auto n = overlap(token_set(s), q);
        if (!s.empty() && n > best_n) {
            best_n = n;
            best = s;
        }
    }
    if (best.empty()) best = trim(flat.substr(0, std::min<std::size_t>(flat.size(), 200)));
    return {best, providers::FinishReason::stop, {}};
}

}  // namespace domeval::eval
