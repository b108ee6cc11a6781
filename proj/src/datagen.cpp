#include "domeval/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/parallel.hpp"
#include "domeval/rng.hpp"
#include "domeval/text.hpp"
#include "domeval/util.hpp"

namespace domeval::datagen {

using json = nlohmann::ordered_json;

namespace {

std::string item_id(const corpus::Chapter& ch, char kind, std::size_t k) {
    return ch.doc_id + "-c" + std::to_string(ch.index) + "-" + kind + std::to_string(k);
}

bool try_parse_items(std::string_view reply, std::vector<json>& items) {
    const auto arr_pos = reply.find('[');
    const auto obj_pos = reply.find('{');
    std::vector<char> order;
    if (arr_pos != std::string_view::npos && (obj_pos == std::string_view::npos || arr_pos < obj_pos))
        order = {'[', '{'};
    else
        order = {'{', '['};
    for (char open : order) {
        auto text = extract_json(reply, open);
        if (text.empty()) continue;
        json j = json::parse(text, nullptr, false);
        if (j.is_discarded()) continue;
        if (j.is_array()) {
            items.assign(j.begin(), j.end());
            return true;
        }
        if (j.is_object()) {
            if (j.contains("question")) {
                items = {j};
                return true;
            }
            for (auto& [key, value] : j.items()) {
                if (value.is_array()) {
                    items.assign(value.begin(), value.end());
                    return true;
                }
            }
        }
    }
    return false;
}

std::vector<json> request_items(providers::ChatClient& generator, const providers::ChatRequest& req,
                                const std::string& ref) {
    std::vector<json> items;
    auto reply = generator.chat(req).text;
    if (!is_blank(reply) && try_parse_items(reply, items)) return items;
    spdlog::info("generator reply for {} held no JSON, retrying once", ref);
    providers::ChatRequest repair = req;
    repair.user += "\n";
    repair.user += kRepairReminder;
    reply = generator.chat(repair).text;
    if (!is_blank(reply) && try_parse_items(reply, items)) return items;
    throw Error(ErrorCode::GeneratorRefused, "no JSON from generator for " + ref);
}

std::optional<std::string> string_field(const json& j, const char* key) {
    if (!j.is_object()) return std::nullopt;
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    auto s = trim(it->get<std::string>());
    if (s.empty()) return std::nullopt;
    return s;
}

// "B) text" -> "text" when the label matches the option position.
std::string strip_option_label(std::string s, std::size_t pos) {
    if (s.size() > 2) {
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
        if (c == static_cast<char>('A' + pos) && (s[1] == ')' || s[1] == '.' || s[1] == ':') &&
            std::isspace(static_cast<unsigned char>(s[2])))
            return trim(std::string_view(s).substr(3));
    }
    return s;
}

std::optional<int> resolve_correct(const json& c, const std::array<std::string, 4>& options) {
    if (c.is_number_integer()) {
        auto v = c.get<long long>();
        if (v >= 0 && v <= 3) return static_cast<int>(v);
        return std::nullopt;
    }
    if (!c.is_string()) return std::nullopt;
    auto s = trim(c.get<std::string>());
    if (s.empty()) return std::nullopt;
    auto norm = normalize_whitespace_lower(s);
    for (std::size_t i = 0; i < 4; ++i)
        if (normalize_whitespace_lower(options[i]) == norm) return static_cast<int>(i);
    char l = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    bool letter_only = s.size() == 1 || (s.size() == 2 && (s[1] == ')' || s[1] == '.'));
    if (l >= 'A' && l <= 'D' && (letter_only || s[1] == ')' || s[1] == '.' || s[1] == ':'))
        return l - 'A';
    if (s.size() == 1 && s[0] >= '0' && s[0] <= '3') return s[0] - '0';
    return std::nullopt;
}

void check_chapter(const corpus::Chapter& ch, const GenerationOptions& opts) {
    if (ch.token_estimate > opts.max_chapter_tokens)
        throw Error(ErrorCode::InvalidArgument, ch.ref() + " exceeds the chapter token limit");
}

}  // namespace

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
        case Split::unassigned: break;
    }
    return "unassigned";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation" || s == "val") return Split::validation;
    if (s == "test") return Split::test;
    if (s == "unassigned" || s.empty()) return Split::unassigned;
    throw Error(ErrorCode::Parse, "unknown split: " + std::string(s));
}

bool parse_items_payload(std::string_view reply, std::vector<std::string>& items_json) {
    std::vector<json> items;
    if (!try_parse_items(reply, items)) return false;
    items_json.clear();
    for (const auto& j : items) items_json.push_back(j.dump());
    return true;
}

Generated<QAPair> generate_qa(const corpus::Chapter& chapter, providers::ChatClient& generator,
                              const providers::FaithfulnessScorer& scorer,
                              const GenerationOptions& opts) {
    check_chapter(chapter, opts);
    providers::ChatRequest req{std::string(qa_system_prompt()), qa_user_prompt(chapter.text)};
    auto items = request_items(generator, req, chapter.ref());
    if (opts.max_items_per_chapter && items.size() > opts.max_items_per_chapter)
        items.resize(opts.max_items_per_chapter);

    Generated<QAPair> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        auto q = string_field(items[k], "question");
        auto a = string_field(items[k], "answer");
        if (!q || !a) {
            spdlog::info("{}: item {} dropped, missing question or answer", chapter.ref(), k);
            ++out.malformed;
            continue;
        }
        QAPair p;
        p.id = item_id(chapter, 'q', k);
        p.doc_id = chapter.doc_id;
        p.chapter_index = chapter.index;
        p.question = *q;
        p.answer = *a;
        p.context_ref = chapter.ref();
        p.faithfulness = scorer.score(chapter.text, p.answer);
        (p.faithfulness >= opts.faithfulness_threshold ? out.kept : out.filtered).push_back(std::move(p));
    }
    return out;
}

Generated<MCQItem> generate_mcq(const corpus::Chapter& chapter, providers::ChatClient& generator,
                                const GenerationOptions& opts) {
    check_chapter(chapter, opts);
    providers::ChatRequest req{std::string(mcq_system_prompt()), mcq_user_prompt(chapter.text)};
    auto items = request_items(generator, req, chapter.ref());
    if (opts.max_items_per_chapter && items.size() > opts.max_items_per_chapter)
        items.resize(opts.max_items_per_chapter);

    Generated<MCQItem> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& j = items[k];
        auto drop = [&](std::string_view why) {
            spdlog::info("{}: item {} dropped, {}", chapter.ref(), k, why);
            ++out.malformed;
        };
        auto q = string_field(j, "question");
        if (!q) {
            drop("missing question");
            continue;
        }
        const json* opts_json = j.contains("options") ? &j["options"] : nullptr;
        std::vector<std::string> raw;
        if (opts_json && opts_json->is_array()) {
            for (const auto& o : *opts_json)
                raw.push_back(o.is_string() ? trim(o.get<std::string>()) : std::string());
        } else if (opts_json && opts_json->is_object()) {
            for (const auto& [key, v] : opts_json->items())
                raw.push_back(v.is_string() ? trim(v.get<std::string>()) : std::string());
        }
        if (raw.size() != 4) {
            drop("needs exactly 4 options");
            continue;
        }
        MCQItem m;
        std::set<std::string> distinct;
        for (std::size_t i = 0; i < 4; ++i) {
            m.options[i] = strip_option_label(raw[i], i);
            if (!m.options[i].empty()) distinct.insert(normalize_whitespace_lower(m.options[i]));
        }
        if (distinct.size() != 4) {
            drop("options empty or not distinct");
            continue;
        }
        const json* corr = nullptr;
        for (const char* key : {"correct", "correct_index", "answer"})
            if (j.contains(key)) {
                corr = &j[key];
                break;
            }
        auto ci = corr ? resolve_correct(*corr, m.options) : std::nullopt;
        if (!ci) {
            drop("correct option unresolvable");
            continue;
        }
        m.id = item_id(chapter, 'm', k);
        m.doc_id = chapter.doc_id;
        m.chapter_index = chapter.index;
        m.question = *q;
        m.correct_index = *ci;
        m.context_ref = chapter.ref();
        out.kept.push_back(std::move(m));
    }
    return out;
}

namespace {

template <typename T, typename Fn>
Generated<T> generate_all(const std::vector<corpus::Chapter>& chapters, std::size_t workers, Fn fn) {
    std::vector<Generated<T>> parts(chapters.size());
    parallel_for(chapters.size(), workers, [&](std::size_t i) {
        try {
            parts[i] = fn(chapters[i]);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::GeneratorRefused) throw;
            spdlog::warn("{}", e.what());
            parts[i].refused_chapters.push_back(chapters[i].ref());
        }
    });
    Generated<T> all;
    for (auto& p : parts) {
        std::move(p.kept.begin(), p.kept.end(), std::back_inserter(all.kept));
        std::move(p.filtered.begin(), p.filtered.end(), std::back_inserter(all.filtered));
        all.malformed += p.malformed;
        all.refused_chapters.insert(all.refused_chapters.end(), p.refused_chapters.begin(),
                                    p.refused_chapters.end());
    }
    return all;
}

}  // namespace

Generated<QAPair> generate_qa_all(const std::vector<corpus::Chapter>& chapters,
                                  providers::ChatClient& generator,
                                  const providers::FaithfulnessScorer& scorer,
                                  const GenerationOptions& opts, std::size_t workers) {
    return generate_all<QAPair>(chapters, workers, [&](const corpus::Chapter& ch) {
        return generate_qa(ch, generator, scorer, opts);
    });
}

Generated<MCQItem> generate_mcq_all(const std::vector<corpus::Chapter>& chapters,
                                    providers::ChatClient& generator,
                                    const GenerationOptions& opts, std::size_t workers) {
    return generate_all<MCQItem>(chapters, workers, [&](const corpus::Chapter& ch) {
        return generate_mcq(ch, generator, opts);
    });
}

std::array<std::size_t, 3> split_counts(std::size_t n, const Ratios& ratios) {
    const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
    for (double x : r)
        if (!(x >= 0.0)) throw Error(ErrorCode::InvalidArgument, "split ratios must be >= 0");
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidArgument, "split ratios must sum to 1");

    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(n) * r[i];
        counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        rem[i] = std::max(0.0, quota - static_cast<double>(counts[i]));
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-12; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
    return counts;
}

std::vector<Split> assign_splits(std::span<const std::string> doc_ids, const Ratios& ratios,
                                 std::uint64_t seed, const std::set<std::string>& essential_docs) {
    std::vector<Split> labels(doc_ids.size(), Split::unassigned);
    std::map<std::string, std::vector<std::size_t>> by_doc;
    for (std::size_t i = 0; i < doc_ids.size(); ++i) by_doc[doc_ids[i]].push_back(i);
    for (auto& [doc, positions] : by_doc) {
        if (essential_docs.contains(doc)) {
            for (auto p : positions) labels[p] = Split::train;
            continue;
        }
        SeededRng rng(derive_seed(seed, doc));
        rng.shuffle(std::span<std::size_t>(positions));
        auto counts = split_counts(positions.size(), ratios);
        std::size_t k = 0;
        for (std::size_t i = 0; i < counts[0]; ++i) labels[positions[k++]] = Split::train;
        for (std::size_t i = 0; i < counts[1]; ++i) labels[positions[k++]] = Split::validation;
        for (std::size_t i = 0; i < counts[2]; ++i) labels[positions[k++]] = Split::test;
    }
    return labels;
}

std::string normalize_question(std::string_view q) { return normalize_whitespace_lower(q); }

std::size_t count_syllables(std::string_view word) {
    std::string w;
    for (unsigned char c : word)
        if (std::isalpha(c)) w.push_back(static_cast<char>(std::tolower(c)));
    if (w.empty()) return 1;
    auto vowel = [](char c) { return std::string_view("aeiouy").find(c) != std::string_view::npos; };
    std::size_t groups = 0;
    bool prev = false;
    for (char c : w) {
        bool v = vowel(c);
        if (v && !prev) ++groups;
        prev = v;
    }
    // Silent final e, except consonant + "le" as in "table".
    if (groups > 1 && w.back() == 'e') {
        bool consonant_le = w.size() >= 3 && w[w.size() - 2] == 'l' && !vowel(w[w.size() - 3]);
        if (!consonant_le) --groups;
    }
    return std::max<std::size_t>(1, groups);
}

double flesch_reading_ease(std::string_view text) {
    std::size_t words = 0, syllables = 0, sentences = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t b = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        auto tok = text.substr(b, i - b);
        if (std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalnum(c); })) {
            ++words;
            syllables += count_syllables(tok);
        }
    }
    if (words == 0) throw Error(ErrorCode::EmptyText, "flesch_reading_ease needs at least one word");
    // A sentence ends at a run of . ! ? followed by whitespace or the end.
    for (std::size_t k = 0; k < text.size();) {
        if (text[k] == '.' || text[k] == '!' || text[k] == '?') {
            std::size_t e = k;
            while (e < text.size() && (text[e] == '.' || text[e] == '!' || text[e] == '?')) ++e;
            if (e == text.size() || std::isspace(static_cast<unsigned char>(text[e]))) ++sentences;
            k = e;
        } else {
            ++k;
        }
    }
    sentences = std::max<std::size_t>(1, sentences);
    const double w = static_cast<double>(words);
    return 206.835 - 1.015 * (w / static_cast<double>(sentences)) -
           84.6 * (static_cast<double>(syllables) / w);
}

DatasetProfile profile_questions(std::span<const std::string> questions,
                                 std::span<const Split> splits) {
    DatasetProfile p;
    p.n_items = questions.size();
    double sum = 0.0;
    std::size_t scored = 0;
    for (const auto& q : questions) {
        if (word_tokens(q).empty()) continue;
        sum += flesch_reading_ease(q);
        ++scored;
    }
    p.mean_flesch = scored ? sum / static_cast<double>(scored) : 0.0;
    for (auto s : {Split::train, Split::validation, Split::test}) p.split_counts[std::string(to_string(s))] = 0;
    for (auto s : splits) ++p.split_counts[std::string(to_string(s))];
    return p;
}

DatasetProfile profile(const std::vector<QAPair>& items) {
    std::vector<std::string> q;
    std::vector<Split> s;
    for (const auto& it : items) {
        q.push_back(it.question);
        s.push_back(it.split);
    }
    return profile_questions(q, s);
}

DatasetProfile profile(const std::vector<MCQItem>& items) {
    std::vector<std::string> q;
    std::vector<Split> s;
    for (const auto& it : items) {
        q.push_back(it.question);
        s.push_back(it.split);
    }
    return profile_questions(q, s);
}

std::vector<std::string> validate_references(std::span<const std::string> context_refs,
                                             std::span<const std::string> item_ids,
                                             const std::vector<corpus::Chapter>& chapters) {
    std::set<std::string> known;
    for (const auto& c : chapters) known.insert(c.ref());
    std::vector<std::string> bad;
    for (std::size_t i = 0; i < context_refs.size(); ++i)
        if (!known.contains(context_refs[i])) bad.push_back(i < item_ids.size() ? item_ids[i] : context_refs[i]);
    return bad;
}

namespace {

std::size_t chapter_from_ref(const std::string& ref) {
    auto h = ref.rfind('#');
    if (h == std::string::npos) return 0;
    try {
        return static_cast<std::size_t>(std::stoul(ref.substr(h + 1)));
    } catch (const std::exception&) {
        return 0;
    }
}

template <typename Fn>
void for_each_record(std::string_view jsonl, Fn fn) {
    std::size_t line_no = 0;
    for (const auto& line : split_lines(jsonl)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            fn(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace

std::string qa_to_jsonl(const std::vector<QAPair>& items) {
    std::string out;
    for (const auto& p : items) {
        json j;
        j["id"] = p.id;
        j["doc_id"] = p.doc_id;
        j["question"] = p.question;
        j["answer"] = p.answer;
        j["context_ref"] = p.context_ref;
        j["split"] = to_string(p.split);
        j["checked"] = p.checked;
        j["faithfulness"] = p.faithfulness;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<QAPair> qa_from_jsonl(std::string_view jsonl) {
    std::vector<QAPair> out;
    for_each_record(jsonl, [&](const json& j) {
        QAPair p;
        p.id = j.at("id").get<std::string>();
        p.doc_id = j.at("doc_id").get<std::string>();
        p.question = j.at("question").get<std::string>();
        p.answer = j.at("answer").get<std::string>();
        p.context_ref = j.value("context_ref", std::string());
        p.chapter_index = chapter_from_ref(p.context_ref);
        p.split = parse_split(j.value("split", std::string()));
        p.checked = j.value("checked", false);
        p.faithfulness = j.value("faithfulness", 0.0);
        out.push_back(std::move(p));
    });
    return out;
}

std::string mcq_to_jsonl(const std::vector<MCQItem>& items) {
    std::string out;
    for (const auto& m : items) {
        json j;
        j["id"] = m.id;
        j["doc_id"] = m.doc_id;
        j["question"] = m.question;
        j["options"] = m.options;
        j["correct_index"] = m.correct_index;
        j["context_ref"] = m.context_ref;
        j["split"] = to_string(m.split);
        j["checked"] = m.checked;
        j["special"] = m.special;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<MCQItem> mcq_from_jsonl(std::string_view jsonl) {
    std::vector<MCQItem> out;
    for_each_record(jsonl, [&](const json& j) {
        MCQItem m;
        m.id = j.at("id").get<std::string>();
        m.doc_id = j.at("doc_id").get<std::string>();
        m.question = j.at("question").get<std::string>();
        const auto& o = j.at("options");
        if (!o.is_array() || o.size() != 4)
            throw Error(ErrorCode::Parse, m.id + ": options must hold exactly 4 entries");
        for (std::size_t i = 0; i < 4; ++i) m.options[i] = o[i].get<std::string>();
        m.correct_index = j.at("correct_index").get<int>();
        if (m.correct_index < 0 || m.correct_index > 3)
            throw Error(ErrorCode::Parse, m.id + ": correct_index out of range");
        m.context_ref = j.value("context_ref", std::string());
        m.chapter_index = chapter_from_ref(m.context_ref);
        m.split = parse_split(j.value("split", std::string()));
        m.checked = j.value("checked", false);
        m.special = j.value("special", false);
        out.push_back(std::move(m));
    });
    return out;
}

std::string detect_kind(std::string_view jsonl) {
    for (const auto& line : split_lines(jsonl)) {
        if (is_blank(line)) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_object() && j.contains("options")) return "mcq";
        return "qa";
    }
    return "qa";
}

// ---------------------------------------------------------------------------

MockGeneratorChat::MockGeneratorChat(std::string name, std::uint64_t seed, std::size_t max_items)
    : ChatClient(std::move(name)), seed_(seed), max_items_(max_items) {}

namespace {

std::string context_from_prompt(std::string user, bool mcq) {
    const std::string suffix = "\n" + std::string(kRepairReminder);
    if (user.ends_with(suffix)) user.resize(user.size() - suffix.size());
    const auto empty = mcq ? mcq_user_prompt("") : qa_user_prompt("");
    const auto marker = mcq ? mcq_user_prompt("\x01") : qa_user_prompt("\x01");
    const auto prefix_len = marker.find('\x01');
    if (user.size() < empty.size() || user.compare(0, prefix_len, empty, 0, prefix_len) != 0)
        return user;
    return user.substr(prefix_len, user.size() - empty.size());
}

std::vector<std::string> usable_sentences(const std::string& context) {
    std::string body;
    for (const auto& line : split_lines(context)) {
        auto t = trim(line);
        if (t.empty() || t.starts_with("#") || t.starts_with("|") || t.starts_with("```")) continue;
        body += t;
        body += ' ';
    }
    std::vector<std::string> out;
    std::size_t b = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
        bool end = (body[i] == '.' || body[i] == '!' || body[i] == '?') &&
                   (i + 1 == body.size() || body[i + 1] == ' ');
        if (!end) continue;
        auto s = trim(std::string_view(body).substr(b, i + 1 - b));
        if (word_tokens(s).size() >= 5 && content_tokens(s).size() >= 2) out.push_back(s);
        b = i + 1;
    }
    return out;
}

std::string topic_of(const std::string& sentence) {
    auto words = content_tokens(sentence);
    words.resize(std::min<std::size_t>(3, words.size()));
    std::string t;
    for (const auto& w : words) t += (t.empty() ? "" : " ") + w;
    return t;
}

}  // namespace

providers::ChatResponse MockGeneratorChat::complete(const providers::ChatRequest& req) {
    const bool mcq = req.system.find("multiple-choice") != std::string::npos;
    auto sentences = usable_sentences(context_from_prompt(req.user, mcq));
    json out = json::array();
    if (!sentences.empty()) {
        const auto h = splitmix64(fnv1a64(req.user, seed_));
        const std::size_t n = std::min(max_items_, sentences.size());
        for (std::size_t k = 0; k < n; ++k) {
            const auto& s = sentences[(h + k) % sentences.size()];
            if (!mcq) {
                out.push_back({{"question", "What does the text state about " + topic_of(s) + "?"},
                               {"answer", s}});
                continue;
            }
            std::vector<std::string> opts{s};
            std::set<std::string> seen{normalize_whitespace_lower(s)};
            for (std::size_t d = 1; d < sentences.size() && opts.size() < 4; ++d) {
                const auto& cand = sentences[(h + k + d) % sentences.size()];
                if (seen.insert(normalize_whitespace_lower(cand)).second) opts.push_back(cand);
            }
            for (int f = 1; opts.size() < 4; ++f)
                opts.push_back("None of the described findings applies (variant " + std::to_string(f) + ").");
            const auto correct = static_cast<std::size_t>(splitmix64(h + k) % 4);
            std::swap(opts[0], opts[correct]);
            out.push_back({{"question", "Which statement about " + topic_of(s) + " is correct?"},
                           {"options", opts},
                           {"correct", correct}});
        }
    }
    return {out.dump(), providers::FinishReason::stop, {}};
}

}  // namespace domeval::datagen
