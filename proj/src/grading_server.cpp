#include <httplib.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/grading.hpp"

namespace domeval::grading {

using json = nlohmann::ordered_json;

namespace {

json progress_json(const Progress& p) { return {{"labeled", p.labeled}, {"total", p.total}}; }

json view_json(const SessionView& v) {
    json items = json::array();
    for (const auto& it : v.items) {
        json answers = json::array();
        for (const auto& a : it.answers) answers.push_back({{"blind_key", a.blind_key}, {"text", a.text}});
        json ji{{"item_id", it.item_id}, {"question", it.question}};
        if (!it.context.empty()) ji["context"] = it.context;
        ji["answers"] = std::move(answers);
        items.push_back(std::move(ji));
    }
    return {{"session_id", v.session_id}, {"grader", v.grader}, {"state", to_string(v.state)},
            {"progress", progress_json(v.progress)}, {"items", std::move(items)}};
}

int status_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownKey: return 404;
        case ErrorCode::SessionClosed:
        case ErrorCode::SessionIncomplete: return 409;
        case ErrorCode::Io: return 500;
        default: return 400;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

std::string get_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string())
        throw Error(ErrorCode::Parse, std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

}  // namespace

struct GradingServer::Impl {
    GradingStore& store;
    ServerOptions options;
    httplib::Server server;

    Impl(GradingStore& s, ServerOptions o) : store(s), options(std::move(o)) { routes(); }

    template <typename Fn>
    httplib::Server::Handler guarded(Fn fn) {
        return [this, fn](const httplib::Request& req, httplib::Response& res) {
            if (!options.token.empty() && req.get_header_value("Authorization") != "Bearer " + options.token) {
                send_error(res, 401, "AuthFailure", "missing or invalid bearer token");
                return;
            }
            try {
                fn(req, res);
            } catch (const Error& e) {
                send_error(res, status_for(e.code()), to_string(e.code()), e.what());
            } catch (const json::exception& e) {
                send_error(res, 400, "Parse", e.what());
            }
        };
    }

    void routes() {
        server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
            if (options.cors_origin.empty()) return;
            res.set_header("Access-Control-Allow-Origin", options.cors_origin);
            res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        });
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body);
            std::vector<std::string> systems = body.value("systems", std::vector<std::string>{});
            std::vector<GradingItemInput> items;
            for (const auto& ji : body.at("items")) {
                GradingItemInput in{get_string(ji, "item_id"), get_string(ji, "question"),
                                    ji.value("context", std::string()), {}};
                for (const auto& [sys, text] : ji.at("responses").items()) in.responses[sys] = text.get<std::string>();
                items.push_back(std::move(in));
            }
            auto id = store.create_session(items, systems, body.value("grader", std::string()));
            send_json(res, 201, view_json(store.view(id)));
        }));

        server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, view_json(store.view(req.matches[1])));
        }));

        server.Get(R"(/sessions/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto view = store.view(id);
            auto next = store.next(id);
            json out{{"session_id", id}, {"state", to_string(view.state)}, {"done", !next.has_value()}};
            if (next) {
                out["item_id"] = next->item_id;
                out["question"] = next->question;
                if (!next->context.empty()) out["context"] = next->context;
                out["blind_key"] = next->blind_key;
                out["answer"] = next->text;
            }
            out["progress"] = progress_json(store.progress(id));
            out["categories"] = {"correct", "correct_incomplete", "partially_incorrect", "incorrect"};
            send_json(res, 200, out);
        }));

        server.Post(R"(/sessions/([^/]+)/labels)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body);
            auto ack = store.submit_label(req.matches[1], get_string(body, "item_id"), get_string(body, "blind_key"),
                                          get_string(body, "category"));
            send_json(res, 200, {{"ok", true}, {"first_submission", ack.first_submission},
                                 {"progress", progress_json(ack.progress)}});
        }));

        server.Post(R"(/sessions/([^/]+)/complete)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            store.complete(id);
            send_json(res, 200, {{"session_id", id}, {"state", "complete"}, {"progress", progress_json(store.progress(id))}});
        }));

        server.Get(R"(/sessions/([^/]+)/export\.csv)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            res.set_content(store.export_csv(req.matches[1]), "text/csv");
        }));
    }
};

GradingServer::GradingServer(GradingStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

GradingServer::~GradingServer() { stop(); }

bool GradingServer::listen(const std::string& host, int port) {
    spdlog::info("grading: listening on {}:{}", host, port);
    return impl_->server.listen(host, port);
}

int GradingServer::bind_any(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool GradingServer::serve() { return impl_->server.listen_after_bind(); }

void GradingServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void GradingServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace domeval::grading
