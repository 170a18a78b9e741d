#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "reflens/chat_client.hpp"
#include "reflens/earlystop.hpp"
#include "reflens/rollout.hpp"

namespace reflens::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One upstream endpoint. Auth tokens are never stored in the file; the
// config names an environment variable instead.
struct EndpointBlock {
  std::string base_url;
  std::string model;
  std::string api_key_env;  // name of the env var holding the token, may be empty
  int timeout_seconds = 120;

  EndpointConfig resolve() const {
    EndpointConfig ec;
    ec.base_url = base_url;
    ec.model = model;
    ec.timeout = std::chrono::seconds(timeout_seconds);
    if (!api_key_env.empty()) {
      const char* key = std::getenv(api_key_env.c_str());
      ec.api_key = key ? key : "";
    }
    return ec;
  }
};

struct ToolConfig {
  std::optional<EndpointBlock> extractor_llm;
  std::optional<EndpointBlock> generator_llm;
  std::optional<EndpointBlock> cad;
  std::optional<EndpointBlock> qrc;
  unsigned concurrency = 4;
  uint64_t seed = 0;
  CountingMode counting_mode = CountingMode::Approximate;
  std::string stop_symbol = "</think>";
  std::string report_dir = "reports";
  earlystop::StopPolicy policy;
};

namespace detail {

inline EndpointBlock parse_endpoint(const nlohmann::json& j, const std::string& name) {
  EndpointBlock block;
  if (!j.contains("base_url") || !j["base_url"].is_string())
    throw ConfigError("endpoint \"" + name + "\" needs a base_url");
  block.base_url = j["base_url"].get<std::string>();
  block.model = j.value("model", "");
  block.api_key_env = j.value("api_key_env", "");
  block.timeout_seconds = j.value("timeout_seconds", 120);
  if (block.timeout_seconds <= 0)
    throw ConfigError("endpoint \"" + name + "\" timeout must be positive");
  return block;
}

}  // namespace detail

inline ToolConfig parse_tool_config(const nlohmann::json& j) {
  ToolConfig cfg;
  if (j.contains("endpoints")) {
    const auto& eps = j["endpoints"];
    if (!eps.is_object()) throw ConfigError("\"endpoints\" must be an object");
    if (eps.contains("extractor"))
      cfg.extractor_llm = detail::parse_endpoint(eps["extractor"], "extractor");
    if (eps.contains("generator"))
      cfg.generator_llm = detail::parse_endpoint(eps["generator"], "generator");
    if (eps.contains("cad")) cfg.cad = detail::parse_endpoint(eps["cad"], "cad");
    if (eps.contains("qrc")) cfg.qrc = detail::parse_endpoint(eps["qrc"], "qrc");
  }
  cfg.concurrency = j.value("concurrency", 4u);
  if (cfg.concurrency == 0) throw ConfigError("concurrency must be at least 1");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ConfigError("seed must be an explicit integer");
    cfg.seed = j["seed"].get<uint64_t>();
  }
  if (j.contains("counting_mode")) {
    auto mode = counting_mode_from_string(j["counting_mode"].get<std::string>());
    if (!mode) throw ConfigError("counting_mode must be \"reported-by-api\" or \"approximate\"");
    cfg.counting_mode = *mode;
  }
  cfg.stop_symbol = j.value("stop_symbol", cfg.stop_symbol);
  cfg.report_dir = j.value("report_dir", cfg.report_dir);
  if (j.contains("policy")) {
    const auto& p = j["policy"];
    cfg.policy.cad_threshold = p.value("cad_threshold", cfg.policy.cad_threshold);
    cfg.policy.qrc_threshold = p.value("qrc_threshold", cfg.policy.qrc_threshold);
    cfg.policy.budget_low = p.value("budget_low", cfg.policy.budget_low);
    cfg.policy.budget_high = p.value("budget_high", cfg.policy.budget_high);
    cfg.policy.max_final_answer_tokens =
        p.value("max_final_answer_tokens", cfg.policy.max_final_answer_tokens);
    if (cfg.policy.qrc_threshold < 0 || cfg.policy.qrc_threshold > 1)
      throw ConfigError("qrc_threshold must be within [0, 1]");
    if (cfg.policy.budget_low < 1 || cfg.policy.budget_high < cfg.policy.budget_low)
      throw ConfigError("budgets must satisfy 1 <= budget_low <= budget_high");
  }
  cfg.policy.stop_symbol = cfg.stop_symbol;
  return cfg;
}

inline ToolConfig load_tool_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return parse_tool_config(j);
}

}  // namespace reflens::config
