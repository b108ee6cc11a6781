#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domeval/eval.hpp"

namespace domeval::grading {

/// One question with every system's stored response.
struct GradingItemInput {
    std::string item_id;
    std::string question;
    std::string context;  // optional source excerpt shown to the grader
    std::map<std::string, std::string> responses;  // system -> answer text
};

struct BlindAnswer {
    std::string blind_key;
    std::string text;
};

struct SessionItem {
    std::string item_id;
    std::string question;
    std::string context;
    std::vector<BlindAnswer> answers;  // shuffled
};

enum class SessionState { open, complete };
std::string_view to_string(SessionState s);

struct Progress {
    std::size_t labeled = 0;
    std::size_t total = 0;
};

/// Blinded view of a session: no system names anywhere.
struct SessionView {
    std::string session_id;
    std::string grader;
    SessionState state = SessionState::open;
    std::vector<SessionItem> items;
    Progress progress;
};

struct NextAnswer {
    std::string item_id;
    std::string question;
    std::string context;
    std::string blind_key;
    std::string text;
};

struct LabelAck {
    Progress progress;
    bool first_submission = false;
};

/// Grading sessions persisted under `data_dir`:
///   <id>.session.json  snapshot incl. the server-side blind key map
///   <id>.labels.jsonl  append-only label log, flushed per submission
/// Construction reloads every session and replays its log.
class GradingStore {
public:
    /// `seed` fixes session ids and blind keys (tests); by default they come
    /// from std::random_device.
    explicit GradingStore(std::filesystem::path data_dir, std::optional<std::uint64_t> seed = {});
    ~GradingStore();
    GradingStore(const GradingStore&) = delete;
    GradingStore& operator=(const GradingStore&) = delete;

    /// Throws MissingResponse when `systems` is empty or a system lacks a
    /// response for an item; InvalidArgument on no items or duplicate ids.
    std::string create_session(const std::vector<GradingItemInput>& items,
                               const std::vector<std::string>& systems, const std::string& grader);

    SessionView view(const std::string& session_id) const;
    Progress progress(const std::string& session_id) const;
    /// First unlabeled answer in presentation order; nullopt when all are labeled.
    std::optional<NextAnswer> next(const std::string& session_id) const;

    /// Resubmission overwrites. Throws UnknownSession, SessionClosed,
    /// UnknownKey, UnknownCategory.
    LabelAck submit_label(const std::string& session_id, const std::string& item_id,
                          const std::string& blind_key, std::string_view category);

    /// Throws SessionIncomplete unless every answer is labeled. Idempotent.
    void complete(const std::string& session_id);

    /// CSV system,item_id,category ordered by (item_id, system).
    /// Throws SessionIncomplete unless the session is complete.
    std::string export_csv(const std::string& session_id) const;

    std::vector<std::string> session_ids() const;

private:
    struct Session;
    Session& find(const std::string& id) const;
    void load(const std::filesystem::path& snapshot);
    void write_snapshot(const Session& s) const;
    void append_log(Session& s, const std::string& line);
    std::string fresh_token(std::size_t hex_chars);

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::uint64_t rng_state_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
};

/// Builds grading inputs from evaluation records: the free-text answers of
/// `systems` on `item_ids` (every item when empty). Questions come from `qa`.
std::vector<GradingItemInput> grading_items_from_records(
    std::span<const eval::EvalRecord> records, const std::vector<datagen::QAPair>& qa,
    const std::vector<std::string>& systems, const std::vector<std::string>& item_ids = {},
    const eval::ContextLookup& contexts = {});

struct ServerOptions {
    std::string token;              // empty disables auth; else "Authorization: Bearer <token>"
    std::string cors_origin = "*";  // empty disables CORS headers
};

/// HTTP front end:
///   POST /sessions                    {grader, systems, items:[{item_id, question, context?, responses}]}
///   GET  /sessions/{id}               blinded session
///   GET  /sessions/{id}/next          next ungraded answer
///   POST /sessions/{id}/labels        {item_id, blind_key, category}
///   POST /sessions/{id}/complete
///   GET  /sessions/{id}/export.csv
class GradingServer {
public:
    GradingServer(GradingStore& store, ServerOptions options = {});
    ~GradingServer();

    /// Binds and serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    /// Binds to a free port and returns it; call serve() afterwards.
    int bind_any(const std::string& host);
    bool serve();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace domeval::grading
