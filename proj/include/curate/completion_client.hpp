#pragma once

// Chat-completions client. Requests are
//   {"model": ..., "messages": [{"role": "user", "content": ...}], "temperature": ...}
// and the reply text is read from choices[0].message.content.

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "curate/text.hpp"
#include "json.hpp"

namespace curate {

class CompletionError : public Error {
 public:
  using Error::Error;
};

/// Anything that turns a prompt into a completion. Implementations throw
/// CompletionError on failure.
class Completer {
 public:
  virtual ~Completer() = default;
  virtual std::string complete(std::string_view prompt) = 0;
  virtual std::string name() const = 0;
};

struct ClientConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model_name;
  double temperature = 0.7;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
  std::string api_key;                     // sent as a bearer token when set

  static ClientConfig from_json(const nlohmann::json& j);
};

class HttpCompletionClient : public Completer {
 public:
  explicit HttpCompletionClient(ClientConfig cfg);

  /// One request, no retries.
  std::string complete(std::string_view prompt) override;
  std::string name() const override { return cfg_.model_name; }
  const ClientConfig& config() const { return cfg_; }

  static nlohmann::json build_request(const ClientConfig& cfg, std::string_view prompt);
  /// Throws CompletionError when the body lacks an assistant content string.
  static std::string parse_response(std::string_view body);

 private:
  ClientConfig cfg_;
  std::string base_;  // scheme://host:port
  std::string path_;
};

/// Wraps a callable; handy for fixtures and for local labelers.
class FunctionCompleter : public Completer {
 public:
  FunctionCompleter(std::string name, std::function<std::string(std::string_view)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}
  std::string complete(std::string_view prompt) override { return fn_(prompt); }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::function<std::string(std::string_view)> fn_;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds backoff{500};
};

/// Calls the completer up to 1 + max_retries times. An empty reply counts as
/// a failed attempt. Throws CompletionError with the last reason when every
/// attempt fails.
std::string complete_with_retries(Completer& client, std::string_view prompt, const RetryPolicy& policy);

}  // namespace curate
