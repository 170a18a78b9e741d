#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

namespace reflens {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatOptions {
  bool deterministic = true;  // temperature 0 where the endpoint supports it
  std::optional<int> max_tokens;
  // Merged into the request body verbatim; lets callers reach
  // endpoint-specific knobs (e.g. assistant-prefix continuation flags).
  nlohmann::json extra_body = nlohmann::json::object();
};

// Transport: could not reach the endpoint or request failed in flight.
// Protocol: endpoint answered, but not with a usable completion.
enum class ChatErrorKind { Transport, Protocol };

struct ChatOutcome {
  bool ok = false;
  std::string content;
  ChatErrorKind error_kind = ChatErrorKind::Transport;
  std::string error;

  static ChatOutcome success(std::string text) {
    ChatOutcome o;
    o.ok = true;
    o.content = std::move(text);
    return o;
  }
  static ChatOutcome failure(ChatErrorKind kind, std::string message) {
    ChatOutcome o;
    o.error_kind = kind;
    o.error = std::move(message);
    return o;
  }
};

// One non-streaming chat-completion round trip. Implementations must be safe
// to call from several threads at once.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatOutcome complete(const std::vector<ChatMessage>& messages,
                               const ChatOptions& options) = 0;
  virtual std::string model_name() const = 0;
};

struct EndpointConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8000/v1"
  std::string model;
  std::string api_key;  // empty for unauthenticated endpoints
  std::chrono::seconds timeout{120};
};

namespace detail {

// "http://host:port/path" -> {host-with-scheme-and-port, path}
inline std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  size_t scheme = base_url.find("://");
  size_t path_start = scheme == std::string::npos ? base_url.find('/')
                                                  : base_url.find('/', scheme + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string path = base_url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {base_url.substr(0, path_start), path};
}

}  // namespace detail

// Streams a chat completion, invoking on_bytes for every raw chunk as it
// arrives. on_bytes returning false cancels the upstream request (normal
// cancellation, reported as ok). Returns an error message on failure.
inline std::optional<std::string> stream_chat_completion(
    const EndpointConfig& endpoint, const std::string& request_body,
    const std::function<bool(std::string_view)>& on_bytes) {
  auto [host, base_path] = detail::split_base_url(endpoint.base_url);
  httplib::Client cli(host);
  cli.set_connection_timeout(endpoint.timeout);
  cli.set_read_timeout(endpoint.timeout);
  bool cancelled = false;
  httplib::Request req;
  req.method = "POST";
  req.path = base_path + "/chat/completions";
  req.body = request_body;
  req.set_header("Content-Type", "application/json");
  req.set_header("Accept", "text/event-stream");
  if (!endpoint.api_key.empty())
    req.set_header("Authorization", "Bearer " + endpoint.api_key);
  req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
    if (!on_bytes(std::string_view(data, len))) {
      cancelled = true;
      return false;
    }
    return true;
  };
  auto res = cli.send(req);
  if (cancelled) return std::nullopt;
  if (!res) return "stream request failed: " + httplib::to_string(res.error());
  if (res->status != 200) return "stream http status " + std::to_string(res->status);
  return std::nullopt;
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig config) : config_(std::move(config)) {}

  ChatOutcome complete(const std::vector<ChatMessage>& messages,
                       const ChatOptions& options) override {
    nlohmann::json body;
    body["model"] = config_.model;
    auto& msgs = body["messages"] = nlohmann::json::array();
    for (const ChatMessage& m : messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    if (options.deterministic) body["temperature"] = 0.0;
    if (options.max_tokens) body["max_tokens"] = *options.max_tokens;
    body["stream"] = false;
    for (auto it = options.extra_body.begin(); it != options.extra_body.end(); ++it)
      body[it.key()] = it.value();

    auto [host, base_path] = detail::split_base_url(config_.base_url);
    httplib::Client cli(host);
    cli.set_connection_timeout(config_.timeout);
    cli.set_read_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = cli.Post(base_path + "/chat/completions", headers, body.dump(),
                        "application/json");
    if (!res)
      return ChatOutcome::failure(ChatErrorKind::Transport,
                                  "request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      return ChatOutcome::failure(ChatErrorKind::Protocol,
                                  "http status " + std::to_string(res->status));
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
        parsed["choices"].empty())
      return ChatOutcome::failure(ChatErrorKind::Protocol, "malformed completion response");
    const auto& choice = parsed["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string())
      return ChatOutcome::failure(ChatErrorKind::Protocol, "no message content in response");
    return ChatOutcome::success(choice["message"]["content"].get<std::string>());
  }

  std::string model_name() const override { return config_.model; }

 private:
  EndpointConfig config_;
};

}  // namespace reflens
