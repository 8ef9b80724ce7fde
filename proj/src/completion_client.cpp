#include "curate/completion_client.hpp"

#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace curate {

ClientConfig ClientConfig::from_json(const nlohmann::json& j) {
  ClientConfig c;
  try {
    c.endpoint = j.at("endpoint").get<std::string>();
    c.model_name = j.at("model").get<std::string>();
    c.temperature = j.value("temperature", c.temperature);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff = std::chrono::milliseconds(j.value("backoff_ms", static_cast<long long>(c.backoff.count())));
    if (j.contains("api_key_env")) {
      const auto var = j["api_key_env"].get<std::string>();
      if (const char* v = std::getenv(var.c_str())) c.api_key = v;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid client config: ") + e.what());
  }
  if (c.max_retries < 0) throw Error("max_retries must be >= 0");
  return c;
}

HttpCompletionClient::HttpCompletionClient(ClientConfig cfg) : cfg_(std::move(cfg)) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.endpoint, m, url_re)) throw Error("invalid endpoint URL: " + cfg_.endpoint);
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base_.rfind("https://", 0) == 0) throw Error("built without TLS support; cannot use " + base_);
#endif
}

nlohmann::json HttpCompletionClient::build_request(const ClientConfig& cfg, std::string_view prompt) {
  nlohmann::json req;
  req["model"] = cfg.model_name;
  req["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", std::string(prompt)}}});
  req["temperature"] = cfg.temperature;
  return req;
}

std::string HttpCompletionClient::parse_response(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw CompletionError("response is not JSON");
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw CompletionError("assistant content is not a string");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw CompletionError("response lacks choices[0].message.content");
  }
}

std::string HttpCompletionClient::complete(std::string_view prompt) {
  httplib::Client cli(base_);
  cli.set_connection_timeout(cfg_.timeout);
  cli.set_read_timeout(cfg_.timeout);
  cli.set_write_timeout(cfg_.timeout);
  if (!cfg_.api_key.empty()) cli.set_bearer_token_auth(cfg_.api_key);
  const auto body = build_request(cfg_, prompt).dump();
  auto res = cli.Post(path_, body, "application/json");
  if (!res) throw CompletionError(cfg_.model_name + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw CompletionError(cfg_.model_name + ": HTTP " + std::to_string(res->status));
  }
  return parse_response(res->body);
}

std::string complete_with_retries(Completer& client, std::string_view prompt, const RetryPolicy& policy) {
  std::string reason = "no attempt made";
  auto wait = policy.backoff;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0 && wait.count() > 0) {
      std::this_thread::sleep_for(wait);
      wait *= 2;
    }
    try {
      auto out = client.complete(prompt);
      if (!trim(out).empty()) return out;
      reason = "empty completion";
    } catch (const CompletionError& e) {
      reason = e.what();
    }
  }
  throw CompletionError(client.name() + ": " + reason);
}

}  // namespace curate
