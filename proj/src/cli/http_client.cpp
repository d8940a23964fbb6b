#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "psdeob/cli.hpp"

#include <chrono>

namespace psdeob {

namespace {

class HttpClient final : public FetchClient {
public:
    FetchResult fetch(const std::string& url, double timeout_seconds, std::size_t max_bytes) override {
        const auto sep = url.find("://");
        if (sep == std::string::npos) {
            return FetchResult::failure(FetchErrorKind::ClientError, "not an absolute URL: " + url);
        }
        const std::string scheme = to_lower(url.substr(0, sep));
        if (scheme != "http" && scheme != "https") {
            return FetchResult::failure(FetchErrorKind::ClientError, "unsupported scheme " + scheme);
        }
        const auto path_at = url.find('/', sep + 3);
        const std::string base = url.substr(0, path_at);
        const std::string path = path_at == std::string::npos ? "/" : url.substr(path_at);

        httplib::Client client(base);
        if (!client.is_valid()) {
            return FetchResult::failure(FetchErrorKind::ClientError, "cannot build a client for " + base);
        }
        const auto timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000.0));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        client.set_follow_location(true);

        std::string body;
        bool too_large = false;
        auto res = client.Get(path, [&](const char* data, std::size_t n) {
            if (body.size() + n > max_bytes) {
                too_large = true;
                return false;
            }
            body.append(data, n);
            return true;
        });
        if (too_large) {
            return FetchResult::failure(FetchErrorKind::FetchTooLarge,
                                        "payload exceeds " + std::to_string(max_bytes) + " bytes");
        }
        if (!res) {
            const auto e = res.error();
            const auto kind = (e == httplib::Error::ConnectionTimeout || e == httplib::Error::Read)
                                  ? FetchErrorKind::FetchTimeout
                                  : FetchErrorKind::ClientError;
            return FetchResult::failure(kind, httplib::to_string(e));
        }
        if (res->status < 200 || res->status >= 300) {
            return FetchResult::failure(FetchErrorKind::ClientError, "HTTP status " + std::to_string(res->status));
        }
        return FetchResult::success(std::move(body));
    }
};

}  // namespace

std::shared_ptr<FetchClient> make_http_client() { return std::make_shared<HttpClient>(); }

}  // namespace psdeob
