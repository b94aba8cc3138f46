#pragma once

// Live LLM client speaking the uniform JSON wire shape:
//   request  POST {"model": ..., "role": ..., "prompt": ...}
//   response {"text": ...}

#include <chrono>
#include <cstdlib>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pathforge/services.hpp"

namespace pathforge {

struct RetryPolicy {
  int attempts = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(1000),
                                                 std::chrono::milliseconds(2000)};
};

inline constexpr const char* kApiKeyEnv = "PATHFORGE_API_KEY";

/// Splits "http://host:port/path" into the origin and the request path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorKind::BadConfig, "endpoint lacks a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(ClientConfig config, RetryPolicy retry = {})
      : LlmClient(std::move(config)), retry_(std::move(retry)) {
    if (this->config().endpoint.empty()) throw Error(ErrorKind::BadConfig, "endpoint is empty");
    std::tie(origin_, path_) = split_endpoint(this->config().endpoint);
  }

 protected:
  std::string send(std::string_view prompt) override {
    nlohmann::json body{{"model", config().model_name},
                        {"role", std::string(to_string(role()))},
                        {"prompt", std::string(prompt)}};
    const std::string payload = body.dump();
    httplib::Headers headers;
    if (const char* key = std::getenv(kApiKeyEnv); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    ErrorKind last_kind = ErrorKind::Transport;
    std::string last_message;
    for (int attempt = 0; attempt < retry_.attempts; ++attempt) {
      if (attempt > 0) {
        auto idx = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), retry_.backoff.size() - 1);
        if (!retry_.backoff.empty()) std::this_thread::sleep_for(retry_.backoff[idx]);
      }
      httplib::Client cli(origin_);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(config().timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config().timeout - secs);
      cli.set_connection_timeout(secs.count(), usecs.count());
      cli.set_read_timeout(secs.count(), usecs.count());
      cli.set_write_timeout(secs.count(), usecs.count());

      auto res = cli.Post(path_, headers, payload, "application/json");
      if (!res) {
        auto err = res.error();
        last_kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) ? ErrorKind::Timeout
                                                                                               : ErrorKind::Transport;
        last_message = httplib::to_string(err);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        last_kind = ErrorKind::Transport;
        last_message = "HTTP status " + std::to_string(res->status);
        continue;
      }
      return parse_reply(res->body);
    }
    throw Error(last_kind, config().endpoint + " failed after " + std::to_string(retry_.attempts) +
                               " attempts: " + last_message);
  }

 public:
  static std::string parse_reply(const std::string& body) {
    auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorKind::MalformedReply, "reply is not a JSON object");
    auto it = doc.find("text");
    if (it == doc.end() || !it->is_string()) throw Error(ErrorKind::MalformedReply, "reply lacks a \"text\" string");
    return it->get<std::string>();
  }

 private:
  RetryPolicy retry_;
  std::string origin_;
  std::string path_;
};

}  // namespace pathforge
