#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace reflens::sse {

// Server-sent-event framing for chat-completion streams. Frames keep their
// raw bytes so pass-through forwarding stays byte-identical; parsing happens
// on a copy.

struct Frame {
  std::string raw;   // full event block including the trailing blank line
  std::string data;  // concatenated data: field values
  bool done = false;  // data == "[DONE]"
};

class FrameSplitter {
 public:
  // Feed arbitrary byte chunks; returns every frame completed so far.
  std::vector<Frame> feed(std::string_view bytes) {
    buffer_.append(bytes);
    std::vector<Frame> frames;
    while (true) {
      size_t boundary = find_boundary();
      if (boundary == std::string::npos) break;
      size_t block_end = boundary + boundary_len_;
      Frame frame;
      frame.raw = buffer_.substr(0, block_end);
      frame.data = extract_data(frame.raw);
      frame.done = frame.data == "[DONE]";
      frames.push_back(std::move(frame));
      buffer_.erase(0, block_end);
    }
    return frames;
  }

  const std::string& pending() const { return buffer_; }

 private:
  size_t find_boundary() {
    size_t lf = buffer_.find("\n\n");
    size_t crlf = buffer_.find("\r\n\r\n");
    if (lf == std::string::npos && crlf == std::string::npos) return std::string::npos;
    if (crlf != std::string::npos && (lf == std::string::npos || crlf < lf)) {
      boundary_len_ = 4;
      return crlf;
    }
    boundary_len_ = 2;
    return lf;
  }

  static std::string extract_data(std::string_view block) {
    std::string data;
    size_t start = 0;
    while (start < block.size()) {
      size_t nl = block.find('\n', start);
      std::string_view line =
          block.substr(start, nl == std::string_view::npos ? block.size() - start : nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.rfind("data:", 0) == 0) {
        std::string_view value = line.substr(5);
        if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        if (!data.empty()) data.push_back('\n');
        data.append(value);
      }
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
    return data;
  }

  std::string buffer_;
  size_t boundary_len_ = 2;
};

inline std::string make_frame(const std::string& data) { return "data: " + data + "\n\n"; }

inline std::string done_frame() { return "data: [DONE]\n\n"; }

// Delta text of a chat-completion stream chunk. Reasoning-model servers put
// thinking either in delta.reasoning_content or plain delta.content; both are
// monitored.
inline std::optional<std::string> delta_text(const Frame& frame) {
  if (frame.done || frame.data.empty()) return std::nullopt;
  auto parsed = nlohmann::json::parse(frame.data, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
      parsed["choices"].empty())
    return std::nullopt;
  const auto& delta = parsed["choices"][0].contains("delta") ? parsed["choices"][0]["delta"]
                                                             : nlohmann::json();
  if (delta.contains("reasoning_content") && delta["reasoning_content"].is_string())
    return delta["reasoning_content"].get<std::string>();
  if (delta.contains("content") && delta["content"].is_string())
    return delta["content"].get<std::string>();
  return std::nullopt;
}

}  // namespace reflens::sse
