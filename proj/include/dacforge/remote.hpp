#pragma once

/**
 * Remote completion backend speaking an OpenAI-compatible completions API.
 *
 * Request body: {model, prompt, n, temperature, top_p, max_tokens, logprobs}.
 * Choices are read for text, finish_reason ("length" marks truncation) and
 * token logprobs. Transport failures, 429 and 5xx responses are retried with
 * bounded exponential backoff; a failed request is retried whole, so the
 * returned list never contains duplicated completions from partial attempts.
 */

#include <chrono>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dacforge/policy.hpp"

namespace dacforge::policy {

struct RetryPolicy {
  int max_attempts = 4;
  int base_delay_ms = 250;
  int max_delay_ms = 4000;
};

struct RemoteConfig {
  std::string base_url;  // scheme://host[:port]
  std::string model;
  std::string api_key;
  std::string completions_path = "/v1/completions";
  bool request_logprobs = true;
  int connect_timeout_s = 10;
  int read_timeout_s = 300;
  RetryPolicy retry;

  /// DACFORGE_API_BASE, DACFORGE_MODEL, DACFORGE_API_KEY. Secrets come from the
  /// environment only.
  static RemoteConfig from_env() {
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? v : "";
    };
    RemoteConfig cfg;
    cfg.base_url = get("DACFORGE_API_BASE");
    cfg.model = get("DACFORGE_MODEL");
    cfg.api_key = get("DACFORGE_API_KEY");
    if (cfg.base_url.empty())
      throw std::runtime_error("remote backend: DACFORGE_API_BASE is not set");
    if (cfg.model.empty())
      throw std::runtime_error("remote backend: DACFORGE_MODEL is not set");
    return cfg;
  }
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config) : cfg_(std::move(config)) {
    if (cfg_.base_url.empty()) throw std::invalid_argument("remote backend: empty base URL");
  }

  std::vector<Completion> generate(const GenerationRequest& request) override {
    validate_request(request);
    nlohmann::json body{
        {"model", cfg_.model},
        {"prompt", request.prompt},
        {"n", request.n},
        {"temperature", request.temperature},
        {"top_p", request.top_p},
        {"max_tokens", request.max_tokens},
    };
    if (cfg_.request_logprobs) body["logprobs"] = 0;
    if (request.seed) body["seed"] = *request.seed;
    std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt < cfg_.retry.max_attempts; ++attempt) {
      if (attempt > 0) backoff(attempt);
      httplib::Client client(cfg_.base_url);
      client.set_connection_timeout(cfg_.connect_timeout_s, 0);
      client.set_read_timeout(cfg_.read_timeout_s, 0);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

      auto res = client.Post(cfg_.completions_path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;  // retryable; nothing was parsed, so nothing can duplicate
      }
      if (res->status != 200)
        throw std::runtime_error("remote backend: HTTP " + std::to_string(res->status) + ": " +
                                 res->body);
      return parse_response(res->body, request.n);
    }
    throw std::runtime_error("remote backend: giving up after " +
                             std::to_string(cfg_.retry.max_attempts) +
                             " attempts (last: " + last_error + ")");
  }

  std::string descriptor() const override { return "remote:" + cfg_.base_url + "#" + cfg_.model; }

 private:
  void backoff(int attempt) const {
    long delay = cfg_.retry.base_delay_ms;
    for (int i = 1; i < attempt; ++i) delay *= 2;
    delay = std::min<long>(delay, cfg_.retry.max_delay_ms);
    if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
  }

  static std::vector<Completion> parse_response(const std::string& body, int expected_n) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("remote backend: malformed JSON response: ") +
                               e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array())
      throw std::runtime_error("remote backend: response has no choices array");
    const auto& choices = j["choices"];
    if (static_cast<int>(choices.size()) != expected_n)
      throw std::runtime_error("remote backend: expected " + std::to_string(expected_n) +
                               " choices, got " + std::to_string(choices.size()));
    std::vector<Completion> out;
    out.reserve(choices.size());
    for (const auto& choice : choices) {
      Completion c;
      if (!choice.contains("text") || !choice["text"].is_string())
        throw std::runtime_error("remote backend: choice has no text");
      c.text = choice["text"].get<std::string>();
      c.truncated = choice.value("finish_reason", std::string()) == "length";
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("token_logprobs") &&
          choice["logprobs"]["token_logprobs"].is_array()) {
        std::vector<double> lps;
        for (const auto& v : choice["logprobs"]["token_logprobs"]) {
          // Some servers emit null for the first token.
          double lp = v.is_number() ? v.get<double>() : 0.0;
          lps.push_back(std::min(lp, 0.0));
        }
        c.token_count = static_cast<int>(lps.size());
        c.token_logprobs = std::move(lps);
      } else {
        c.token_count = approx_token_count(c.text);
      }
      validate_completion(c);
      out.push_back(std::move(c));
    }
    return out;
  }

  RemoteConfig cfg_;
};

}  // namespace dacforge::policy
