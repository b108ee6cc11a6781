#include "domeval/grading.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <tuple>

#include <unistd.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/rng.hpp"
#include "domeval/util.hpp"

namespace domeval::grading {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

using Key = std::pair<std::string, std::string>;  // (item_id, blind_key)

struct GradingStore::Session {
    std::string id;
    std::string grader;
    SessionState state = SessionState::open;
    std::vector<SessionItem> items;
    std::map<Key, std::string> systems;
    std::map<Key, eval::LabelCategory> labels;
    std::FILE* log = nullptr;

    std::size_t total() const { return systems.size(); }
    Progress progress() const { return {labels.size(), total()}; }
};

std::string_view to_string(SessionState s) { return s == SessionState::open ? "open" : "complete"; }

namespace {

fs::path snapshot_path(const fs::path& dir, const std::string& id) { return dir / (id + ".session.json"); }
fs::path log_path(const fs::path& dir, const std::string& id) { return dir / (id + ".labels.jsonl"); }

eval::LabelCategory parse_category(std::string_view s) {
    try {
        return eval::parse_label(s);
    } catch (const Error&) {
        throw Error(ErrorCode::UnknownCategory, "unknown category: " + std::string(s));
    }
}

}  // namespace

GradingStore::GradingStore(fs::path data_dir, std::optional<std::uint64_t> seed) : dir_(std::move(data_dir)) {
    if (seed) {
        rng_state_ = *seed;
    } else {
        std::random_device rd;
        rng_state_ = (std::uint64_t{rd()} << 32) ^ rd();
    }
    fs::create_directories(dir_);
    std::vector<fs::path> snapshots;
    for (const auto& e : fs::directory_iterator(dir_)) {
        const auto name = e.path().filename().string();
        if (name.ends_with(".session.json")) snapshots.push_back(e.path());
    }
    std::sort(snapshots.begin(), snapshots.end());
    for (const auto& p : snapshots) load(p);
    if (!sessions_.empty()) spdlog::info("grading: loaded {} session(s) from {}", sessions_.size(), dir_.string());
}

GradingStore::~GradingStore() {
    for (auto& [id, s] : sessions_)
        if (s->log) std::fclose(s->log);
}

void GradingStore::load(const fs::path& snapshot) {
    auto s = std::make_unique<Session>();
    try {
        auto j = json::parse(read_file(snapshot));
        s->id = j.at("session_id").get<std::string>();
        s->grader = j.value("grader", std::string());
        s->state = j.value("state", std::string("open")) == "complete" ? SessionState::complete : SessionState::open;
        for (const auto& ji : j.at("items")) {
            SessionItem item{ji.at("item_id"), ji.at("question"), ji.value("context", std::string()), {}};
            for (const auto& ja : ji.at("answers")) {
                item.answers.push_back({ja.at("blind_key"), ja.at("text")});
                s->systems[{item.item_id, ja.at("blind_key")}] = ja.at("system").get<std::string>();
            }
            s->items.push_back(std::move(item));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, snapshot.string() + ": " + e.what());
    }

    const auto lp = log_path(dir_, s->id);
    if (fs::exists(lp)) {
        const auto lines = split_lines(read_file(lp));
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (is_blank(lines[i])) continue;
            auto j = json::parse(lines[i], nullptr, false);
            if (j.is_discarded()) {
                // Only a torn final write is tolerated.
                if (i + 1 == lines.size()) {
                    spdlog::warn("grading: ignoring torn last line in {}", lp.string());
                    continue;
                }
                throw Error(ErrorCode::Parse, lp.string() + ": corrupt line " + std::to_string(i + 1));
            }
            if (j.value("event", std::string()) == "complete") {
                s->state = SessionState::complete;
                continue;
            }
            Key k{j.at("item_id"), j.at("blind_key")};
            if (s->systems.contains(k)) s->labels[k] = parse_category(j.at("category").get<std::string>());
        }
    }
    auto id = s->id;
    sessions_[id] = std::move(s);
}

std::string GradingStore::fresh_token(std::size_t hex_chars) {
    rng_state_ += 0x9e3779b97f4a7c15ULL;
    return hex64(splitmix64(rng_state_)).substr(0, hex_chars);
}

void GradingStore::write_snapshot(const Session& s) const {
    json j;
    j["session_id"] = s.id;
    j["grader"] = s.grader;
    j["state"] = to_string(s.state);
    json items = json::array();
    for (const auto& it : s.items) {
        json answers = json::array();
        for (const auto& a : it.answers)
            answers.push_back({{"blind_key", a.blind_key}, {"text", a.text}, {"system", s.systems.at({it.item_id, a.blind_key})}});
        items.push_back({{"item_id", it.item_id}, {"question", it.question}, {"context", it.context}, {"answers", answers}});
    }
    j["items"] = std::move(items);
    write_file_atomic(snapshot_path(dir_, s.id), j.dump(2) + "\n");
}

void GradingStore::append_log(Session& s, const std::string& line) {
    if (!s.log) {
        s.log = std::fopen(log_path(dir_, s.id).c_str(), "ab");
        if (!s.log) throw Error(ErrorCode::Io, "cannot open label log for " + s.id);
    }
    const std::string data = line + "\n";
    if (std::fwrite(data.data(), 1, data.size(), s.log) != data.size() || std::fflush(s.log) != 0)
        throw Error(ErrorCode::Io, "cannot append to label log for " + s.id);
    ::fsync(::fileno(s.log));
}

std::string GradingStore::create_session(const std::vector<GradingItemInput>& items,
                                         const std::vector<std::string>& systems, const std::string& grader) {
    if (systems.empty()) throw Error(ErrorCode::MissingResponse, "session needs at least one system");
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "session needs at least one item");
    std::set<std::string> unique_systems(systems.begin(), systems.end());
    if (unique_systems.size() != systems.size()) throw Error(ErrorCode::InvalidArgument, "duplicate system name");
    std::set<std::string> ids;
    for (const auto& it : items) {
        if (!ids.insert(it.item_id).second) throw Error(ErrorCode::InvalidArgument, "duplicate item " + it.item_id);
        for (const auto& sys : systems)
            if (!it.responses.contains(sys))
                throw Error(ErrorCode::MissingResponse, sys + " has no response for " + it.item_id);
    }

    std::lock_guard lock(mu_);
    auto s = std::make_unique<Session>();
    do s->id = "s" + fresh_token(16);
    while (sessions_.contains(s->id));
    s->grader = grader;
    SeededRng rng(splitmix64(rng_state_ ^ fnv1a64(s->id)));
    for (const auto& in : items) {
        SessionItem item{in.item_id, in.question, in.context, {}};
        std::vector<std::string> order(systems);
        rng.shuffle(std::span<std::string>(order));
        std::set<std::string> keys;
        for (const auto& sys : order) {
            std::string key;
            do key = "k" + fresh_token(10);
            while (!keys.insert(key).second);
            item.answers.push_back({key, in.responses.at(sys)});
            s->systems[{in.item_id, key}] = sys;
        }
        s->items.push_back(std::move(item));
    }
    write_snapshot(*s);
    auto id = s->id;
    spdlog::info("grading: created session {} ({} answers)", id, s->total());
    sessions_[id] = std::move(s);
    return id;
}

GradingStore::Session& GradingStore::find(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session " + id);
    return *it->second;
}

SessionView GradingStore::view(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto& s = find(id);
    return {s.id, s.grader, s.state, s.items, s.progress()};
}

Progress GradingStore::progress(const std::string& id) const {
    std::lock_guard lock(mu_);
    return find(id).progress();
}

std::optional<NextAnswer> GradingStore::next(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto& s = find(id);
    for (const auto& it : s.items)
        for (const auto& a : it.answers)
            if (!s.labels.contains({it.item_id, a.blind_key}))
                return NextAnswer{it.item_id, it.question, it.context, a.blind_key, a.text};
    return std::nullopt;
}

LabelAck GradingStore::submit_label(const std::string& id, const std::string& item_id,
                                    const std::string& blind_key, std::string_view category) {
    std::lock_guard lock(mu_);
    auto& s = find(id);
    if (s.state == SessionState::complete) throw Error(ErrorCode::SessionClosed, "session " + id + " is complete");
    Key k{item_id, blind_key};
    if (!s.systems.contains(k)) throw Error(ErrorCode::UnknownKey, "no answer " + blind_key + " for " + item_id);
    const auto cat = parse_category(category);
    append_log(s, json{{"item_id", item_id}, {"blind_key", blind_key}, {"category", eval::to_string(cat)}}.dump());
    const bool first = !s.labels.contains(k);
    s.labels[k] = cat;
    return {s.progress(), first};
}

void GradingStore::complete(const std::string& id) {
    std::lock_guard lock(mu_);
    auto& s = find(id);
    if (s.state == SessionState::complete) return;
    if (s.labels.size() != s.total())
        throw Error(ErrorCode::SessionIncomplete, std::to_string(s.total() - s.labels.size()) + " answer(s) unlabeled");
    append_log(s, R"({"event":"complete"})");
    s.state = SessionState::complete;
    write_snapshot(s);
}

std::string GradingStore::export_csv(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto& s = find(id);
    if (s.state != SessionState::complete) throw Error(ErrorCode::SessionIncomplete, "session " + id + " is not complete");
    std::vector<std::tuple<std::string, std::string, std::string_view>> rows;
    for (const auto& [k, cat] : s.labels) rows.emplace_back(k.first, s.systems.at(k), eval::to_string(cat));
    std::sort(rows.begin(), rows.end());
    std::string out = "system,item_id,category\n";
    for (const auto& [item, sys, cat] : rows) out += csv_field(sys) + "," + csv_field(item) + "," + std::string(cat) + "\n";
    return out;
}

std::vector<std::string> GradingStore::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

std::vector<GradingItemInput> grading_items_from_records(std::span<const eval::EvalRecord> records,
                                                         const std::vector<datagen::QAPair>& qa,
                                                         const std::vector<std::string>& systems,
                                                         const std::vector<std::string>& item_ids,
                                                         const eval::ContextLookup& contexts) {
    std::map<Key, std::string> answers;  // (system, item) -> text
    for (const auto& r : records)
        if (r.layer == eval::Layer::text_sim || r.layer == eval::Layer::judge)
            answers.emplace(Key{r.system, r.item_id}, r.response_text);
    std::set<std::string> wanted(item_ids.begin(), item_ids.end());
    std::vector<GradingItemInput> out;
    for (const auto& p : qa) {
        if (!wanted.empty() && !wanted.contains(p.id)) continue;
        GradingItemInput in{p.id, p.question, {}, {}};
        if (auto c = contexts.find(p.context_ref); c != contexts.end()) in.context = c->second;
        for (const auto& sys : systems)
            if (auto a = answers.find({sys, p.id}); a != answers.end()) in.responses[sys] = a->second;
        out.push_back(std::move(in));
    }
    if (!wanted.empty() && out.size() != wanted.size())
        throw Error(ErrorCode::UnknownItem, "some requested items are not in the QA dataset");
    return out;
}

}  // namespace domeval::grading
