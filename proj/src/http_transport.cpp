#include <httplib.h>

#include "domeval/error.hpp"
#include "domeval/providers.hpp"

namespace domeval::providers {

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttplibTransport(const std::string& base_url, std::chrono::milliseconds timeout) {
        // Split "scheme://host[:port]/prefix" into the client origin and a path prefix.
        auto scheme_end = base_url.find("://");
        if (scheme_end == std::string::npos)
            throw Error(ErrorCode::InvalidArgument, "base_url needs a scheme: " + base_url);
        auto path_start = base_url.find('/', scheme_end + 3);
        origin_ = base_url.substr(0, path_start);
        if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        timeout_ = timeout;
    }

    HttpResponse post(const std::string& path, const std::string& body,
                      const std::map<std::string, std::string>& headers) override {
        httplib::Client cli(origin_);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
        auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        cli.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (k == "Content-Type") content_type = v;
            else h.emplace(k, v);
        }
        auto res = cli.Post(prefix_ + path, h, body, content_type);
        HttpResponse out;
        if (!res) {
            out.status = 0;
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
        return out;
    }

private:
    std::string origin_;
    std::string prefix_;
    std::chrono::milliseconds timeout_{};
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::milliseconds timeout) {
    return std::make_shared<HttplibTransport>(base_url, timeout);
}

}  // namespace domeval::providers
