#pragma once

#include <atomic>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "reflens/chat_client.hpp"
#include "reflens/earlystop.hpp"
#include "reflens/sse.hpp"
#include "reflens/tokens.hpp"

namespace reflens::proxy {

// Streaming chat-completions gateway with early stopping.
//
// Downstream speaks the usual chat-completions wire contract; upstream is
// the real model server. While thinking streams, non-intercepted frames are
// forwarded with their raw bytes untouched. When the session's budget-th
// candidate line appears, the upstream stream is cancelled, a fresh
// continuation request produces the final answer, and synthesized frames
// carry it downstream.

struct ProxyOptions {
  EndpointConfig upstream;
  earlystop::StopPolicy policy;
  earlystop::DetectorClient* cad = nullptr;  // null: no per-line detection
  earlystop::DetectorClient* qrc = nullptr;  // null: always the low budget
  TokenCounter counter = approximate_counter();
  std::string listen_host = "127.0.0.1";
  int listen_port = 0;  // 0: pick a free port
};

struct SessionSummary {
  std::string id;
  earlystop::SessionMetrics metrics;
  int budget = 1;
  std::string phase;
};

class AggregateMetrics {
 public:
  std::atomic<long long> sessions{0};
  std::atomic<long long> stopped_early{0};
  std::atomic<long long> passed_through{0};
  std::atomic<long long> thinking_tokens{0};
  std::atomic<long long> final_tokens{0};
  std::atomic<long long> detector_failures{0};
  std::atomic<long long> qrc_failures{0};
  std::atomic<long long> upstream_errors{0};

  void absorb(const earlystop::SessionMetrics& m) {
    ++sessions;
    if (m.stopped_early) ++stopped_early;
    thinking_tokens += m.thinking_tokens;
    final_tokens += m.final_tokens;
    detector_failures += m.detector_failures;
    if (m.qrc_failed) ++qrc_failures;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["sessions"] = sessions.load();
    j["stopped_early"] = stopped_early.load();
    j["passed_through"] = passed_through.load();
    j["thinking_tokens"] = thinking_tokens.load();
    j["final_tokens"] = final_tokens.load();
    j["total_output_tokens"] = thinking_tokens.load() + final_tokens.load();
    j["detector_failures"] = detector_failures.load();
    j["qrc_failures"] = qrc_failures.load();
    j["upstream_errors"] = upstream_errors.load();
    return j;
  }
};

namespace detail {

inline std::string last_user_message(const nlohmann::json& body) {
  if (!body.contains("messages") || !body["messages"].is_array()) return "";
  for (auto it = body["messages"].rbegin(); it != body["messages"].rend(); ++it) {
    if ((*it).value("role", "") == "user" && (*it).contains("content") &&
        (*it)["content"].is_string())
      return (*it)["content"].get<std::string>();
  }
  return "";
}

// Synthesized delta frame shaped like the upstream's chunks.
inline std::string make_delta_frame(const nlohmann::json& template_chunk, const std::string& text,
                                    bool finish) {
  nlohmann::ordered_json chunk;
  chunk["id"] = template_chunk.value("id", "earlystop");
  chunk["object"] = template_chunk.value("object", "chat.completion.chunk");
  chunk["created"] = template_chunk.value("created", 0);
  chunk["model"] = template_chunk.value("model", "");
  nlohmann::ordered_json choice;
  choice["index"] = 0;
  choice["delta"] = text.empty() ? nlohmann::ordered_json::object()
                                 : nlohmann::ordered_json{{"content", text}};
  choice["finish_reason"] = finish ? nlohmann::ordered_json("stop") : nlohmann::ordered_json();
  chunk["choices"] = nlohmann::ordered_json::array({choice});
  return sse::make_frame(chunk.dump());
}

}  // namespace detail

class ProxyServer {
 public:
  explicit ProxyServer(ProxyOptions options) : opt_(std::move(options)) {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handle_chat(req, res);
                 });
    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::ordered_json j;
      j["aggregate"] = metrics_.to_json();
      auto& sessions = j["recent_sessions"] = nlohmann::ordered_json::array();
      std::lock_guard<std::mutex> lock(recent_mu_);
      for (const SessionSummary& s : recent_) {
        nlohmann::ordered_json e;
        e["id"] = s.id;
        e["budget"] = s.budget;
        e["phase"] = s.phase;
        e["stopped_early"] = s.metrics.stopped_early;
        e["thinking_tokens"] = s.metrics.thinking_tokens;
        e["final_tokens"] = s.metrics.final_tokens;
        e["total_output_tokens"] = s.metrics.total_output_tokens();
        e["lines_scored"] = s.metrics.lines_scored;
        e["detector_failures"] = s.metrics.detector_failures;
        sessions.push_back(std::move(e));
      }
      res.set_content(j.dump(2), "application/json");
    });
  }

  ~ProxyServer() { stop(); }

  bool start() {
    if (opt_.listen_port == 0) {
      opt_.listen_port = server_.bind_to_any_port(opt_.listen_host);
      if (opt_.listen_port <= 0) return false;
    } else if (!server_.bind_to_port(opt_.listen_host, opt_.listen_port)) {
      return false;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return true;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return opt_.listen_port; }
  const AggregateMetrics& metrics() const { return metrics_; }

 private:
  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      res.status = 400;
      res.set_content(R"({"error":"request body is not valid JSON"})", "application/json");
      return;
    }
    if (!body.value("stream", false)) {
      forward_plain(req.body, res);
      return;
    }

    std::string question = detail::last_user_message(body);
    std::string request_model = body.value("model", opt_.upstream.model);
    auto budget = earlystop::choose_budget(question, opt_.qrc, opt_.policy);
    auto session = std::make_shared<earlystop::Session>(question, opt_.policy, opt_.counter);
    session->begin(budget, opt_.cad);
    std::string request_body = req.body;

    res.set_chunked_content_provider(
        "text/event-stream",
        [this, session, request_body, request_model](size_t, httplib::DataSink& sink) {
          run_stream(*session, request_body, request_model, sink);
          sink.done();
          return true;
        });
  }

  void forward_plain(const std::string& body, httplib::Response& res) {
    auto [host, base_path] = reflens::detail::split_base_url(opt_.upstream.base_url);
    httplib::Client cli(host);
    cli.set_connection_timeout(opt_.upstream.timeout);
    cli.set_read_timeout(opt_.upstream.timeout);
    httplib::Headers headers;
    if (!opt_.upstream.api_key.empty())
      headers.emplace("Authorization", "Bearer " + opt_.upstream.api_key);
    auto upstream = cli.Post(base_path + "/chat/completions", headers, body, "application/json");
    if (!upstream) {
      ++metrics_.upstream_errors;
      res.status = 502;
      res.set_content(R"({"error":"upstream unreachable"})", "application/json");
      return;
    }
    res.status = upstream->status;
    std::string content_type = upstream->get_header_value("Content-Type");
    res.set_content(upstream->body, content_type.empty() ? "application/json" : content_type);
  }

  void run_stream(earlystop::Session& session, const std::string& request_body,
                  const std::string& request_model, httplib::DataSink& sink) {
    sse::FrameSplitter splitter;
    nlohmann::json template_chunk = nlohmann::json::object();
    bool downstream_open = true;
    bool saw_done = false;

    auto emit = [&](const std::string& bytes) {
      if (!downstream_open || bytes.empty()) return;
      if (!sink.write(bytes.data(), bytes.size())) downstream_open = false;
    };

    auto upstream_error = stream_chat_completion(
        opt_.upstream, request_body, [&](std::string_view bytes) {
          for (sse::Frame& frame : splitter.feed(bytes)) {
            if (frame.done) {
              saw_done = true;
              session.finish_stream();
              emit(frame.raw);
              continue;
            }
            auto delta = sse::delta_text(frame);
            if (delta) {
              nlohmann::json parsed = nlohmann::json::parse(frame.data, nullptr, false);
              if (!parsed.is_discarded()) template_chunk = parsed;
            }
            if (!delta || session.phase() != earlystop::Phase::Streaming) {
              if (delta && session.phase() != earlystop::Phase::Streaming)
                session.add_final_text(*delta);
              emit(frame.raw);
              continue;
            }
            auto action = session.on_chunk(*delta);
            if (action == earlystop::StreamAction::StopThinking) {
              std::string kept = delta->substr(0, session.last_chunk_kept());
              if (!kept.empty())
                emit(detail::make_delta_frame(template_chunk, kept, false));
              return false;  // cancel upstream
            }
            emit(frame.raw);
          }
          return downstream_open;
        });

    if (session.phase() == earlystop::Phase::Finalizing) {
      EndpointConfig continuation_endpoint = opt_.upstream;
      continuation_endpoint.model = request_model;
      HttpChatClient continuation(continuation_endpoint);
      std::string question = session.question();
      earlystop::FinalizeResult final =
          finalize_with_problem(session, question, continuation);
      // The kept thinking already ends on a newline.
      std::string tail = opt_.policy.stop_symbol + "\n";
      if (final.ok) {
        emit(detail::make_delta_frame(template_chunk, tail + final.final_text, false));
        emit(detail::make_delta_frame(template_chunk, "", true));
      } else {
        nlohmann::ordered_json err;
        err["error"] = "continuation failed: " + final.error;
        err["thinking_so_far_tokens"] = session.metrics().thinking_tokens;
        emit(sse::make_frame(err.dump()));
      }
      emit(sse::done_frame());
    } else if (!saw_done) {
      // Upstream closed without a DONE marker (error or abrupt end).
      session.finish_stream();
      if (!splitter.pending().empty()) emit(splitter.pending());
      if (upstream_error) {
        ++metrics_.upstream_errors;
        nlohmann::ordered_json err;
        err["error"] = *upstream_error;
        emit(sse::make_frame(err.dump()));
      }
      emit(sse::done_frame());
    } else if (!splitter.pending().empty()) {
      // Trailing bytes after the DONE frame pass through untouched.
      emit(splitter.pending());
    }

    if (session.phase() == earlystop::Phase::PassedThrough) ++metrics_.passed_through;
    metrics_.absorb(session.metrics());
    record_session(session);
  }

  static earlystop::FinalizeResult finalize_with_problem(earlystop::Session& session,
                                                         const std::string& question,
                                                         ChatClient& client) {
    Problem p;
    p.id = "live";
    p.statement = question;
    p.gold_answer = "-";
    return earlystop::finalize(session, p, client);
  }

  void record_session(const earlystop::Session& session) {
    std::lock_guard<std::mutex> lock(recent_mu_);
    SessionSummary summary;
    summary.id = "s" + std::to_string(metrics_.sessions.load());
    summary.metrics = session.metrics();
    summary.budget = session.budget();
    summary.phase = to_string(session.phase());
    recent_.push_back(std::move(summary));
    while (recent_.size() > 32) recent_.pop_front();
  }

  ProxyOptions opt_;
  httplib::Server server_;
  std::thread thread_;
  AggregateMetrics metrics_;
  std::mutex recent_mu_;
  std::deque<SessionSummary> recent_;
};

}  // namespace reflens::proxy
