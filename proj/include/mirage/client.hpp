#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "mirage/errors.hpp"
#include "mirage/rng.hpp"
#include "mirage/types.hpp"

namespace mirage {

// ---------------------------------------------------------------------------
// Client interface
// ---------------------------------------------------------------------------

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  int n = 1;  // number of samples to draw for one prompt
};

// A source of free-text completions. Implementations must tolerate
// concurrent complete() calls.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string id() const = 0;
  virtual std::vector<std::string> complete(const std::string& prompt,
                                            const CompletionParams& params) = 0;
};

// ---------------------------------------------------------------------------
// Mock clients
// ---------------------------------------------------------------------------

// Answers from a prompt-to-text answer key; the perfect-model endpoint.
// Deterministic, so repeated samples of one prompt are identical.
class OracleClient : public ModelClient {
 public:
  explicit OracleClient(bool strict = true) : strict_(strict) {}

  void register_answer(const std::string& prompt, const std::string& answer) {
    answers_[prompt] = answer;
  }

  std::size_t known_prompts() const { return answers_.size(); }

  std::string id() const override { return "oracle"; }

  std::vector<std::string> complete(const std::string& prompt,
                                    const CompletionParams& params) override {
    auto it = answers_.find(prompt);
    if (it == answers_.end()) {
      if (strict_) {
        throw TransportError("oracle has no recorded answer for this prompt");
      }
      return std::vector<std::string>(std::max(1, params.n), std::string());
    }
    return std::vector<std::string>(std::max(1, params.n), it->second);
  }

 private:
  std::unordered_map<std::string, std::string> answers_;
  bool strict_;
};

// Emits well-formed but randomly chosen answers, derived purely from
// hash(prompt, sample index, seed); the chance-level endpoint. It sniffs the
// reply format (slot count, task, string vs numeric) from the prompt's
// required-format stanza.
class UniformRandomClient : public ModelClient {
 public:
  explicit UniformRandomClient(std::uint64_t seed = 0) : seed_(seed) {}

  std::string id() const override {
    return "random-" + std::to_string(seed_);
  }

  std::vector<std::string> complete(const std::string& prompt,
                                    const CompletionParams& params) override {
    std::vector<std::string> out;
    for (int s = 0; s < std::max(1, params.n); ++s) {
      Rng rng(mix64(hash_text(prompt) ^ mix64(seed_ + 0x9e37ull * s)));
      out.push_back(answer_one(prompt, rng));
    }
    return out;
  }

  static std::uint64_t hash_text(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  static int count_occurrences(const std::string& text,
                               const std::string& needle) {
    int n = 0;
    std::size_t at = 0;
    while ((at = text.find(needle, at)) != std::string::npos) {
      ++n;
      at += needle.size();
    }
    return n;
  }

  static std::string answer_one(const std::string& prompt, Rng& rng) {
    if (prompt.find("<<integer>>") != std::string::npos) {
      return "Answer: " + std::to_string(rng.next_int(0, 99));
    }
    const int dim = count_occurrences(prompt, "<<expression>>");
    if (dim == 0) return "Answer: 0";
    const bool string_mode =
        prompt.find("string transformation") != std::string::npos;
    const bool code_mode =
        prompt.find("python function") != std::string::npos;
    const bool example_task =
        prompt.find("Please answer the question based on rules") !=
        std::string::npos;

    if (example_task) {
      std::vector<std::string> slots;
      for (int i = 0; i < dim; ++i) {
        if (string_mode) {
          const int len = rng.next_int(1, 3);
          std::string s;
          for (int j = 0; j < len; ++j) {
            s += digit_to_letter(rng.next_int(0, 9));
          }
          slots.push_back(s);
        } else {
          slots.push_back(std::to_string(rng.next_int(0, 18)));
        }
      }
      std::string joined = slots.empty() ? std::string() : slots.front();
      for (std::size_t i = 1; i < slots.size(); ++i) joined += ", " + slots[i];
      if (code_mode) return "Answer: " + joined;
      return "Answer: [" + joined + "]";
    }

    // Rule-induction reply.
    std::vector<std::string> exprs;
    for (int i = 0; i < dim; ++i) {
      if (string_mode) {
        switch (rng.next_int(0, 2)) {
          case 0: exprs.push_back(var_letter(rng.next_int(0, dim - 1))); break;
          case 1:
            exprs.push_back(var_letter(rng.next_int(0, dim - 1)) +
                            std::string(1, digit_to_letter(rng.next_int(0, 9))));
            break;
          default:
            exprs.push_back(std::string(1, digit_to_letter(rng.next_int(0, 9))));
        }
        continue;
      }
      switch (rng.next_int(0, 3)) {
        case 0: exprs.push_back(var_letter(rng.next_int(0, dim - 1))); break;
        case 1: exprs.push_back(std::to_string(rng.next_int(0, 9))); break;
        case 2:
          exprs.push_back(std::to_string(rng.next_int(2, 9)) + "*" +
                          var_letter(rng.next_int(0, dim - 1)) + "+" +
                          std::to_string(rng.next_int(0, 9)));
          break;
        default:
          exprs.push_back(var_letter(rng.next_int(0, dim - 1)) + "+" +
                          var_letter(rng.next_int(0, dim - 1)));
      }
    }
    std::string joined = exprs.front();
    for (std::size_t i = 1; i < exprs.size(); ++i) joined += ", " + exprs[i];
    if (string_mode) {
      return "Rule: " + var_letters(dim) + " -> [" + joined + "]";
    }
    if (code_mode) {
      const std::string args = [&] {
        std::string a = var_letter(0);
        for (int i = 1; i < dim; ++i) a += ", " + var_letter(i);
        return a;
      }();
      return "Rule:\ndef f(" + args + "):\n    " + args + " = " + joined +
             "\n    return " + args;
    }
    if (prompt.find("list transformation") != std::string::npos) {
      std::string lhs = var_letter(0);
      for (int i = 1; i < dim; ++i) lhs += ", " + var_letter(i);
      return "Rule: [" + lhs + "] -> [" + joined + "]";
    }
    return "Rule: After the change, there are " + joined + ".";
  }

  std::uint64_t seed_;
};

// Replays a fixed sequence of response batches; for tests.
class ScriptedClient : public ModelClient {
 public:
  explicit ScriptedClient(std::vector<std::vector<std::string>> script)
      : script_(std::move(script)) {}

  std::string id() const override { return "scripted"; }

  std::vector<std::string> complete(const std::string& prompt,
                                    const CompletionParams& params) override {
    std::lock_guard<std::mutex> lock(mu_);
    prompts_.push_back(prompt);
    if (at_ >= script_.size()) {
      throw TransportError("scripted client exhausted after " +
                           std::to_string(at_) + " calls");
    }
    std::vector<std::string> out = script_[at_++];
    while (static_cast<int>(out.size()) < params.n && !out.empty()) {
      out.push_back(out.back());
    }
    return out;
  }

  std::vector<std::string> prompts() const {
    std::lock_guard<std::mutex> lock(mu_);
    return prompts_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::vector<std::string>> script_;
  std::vector<std::string> prompts_;
  std::size_t at_ = 0;
};

// Always returns the same text; with a non-answer text this is the
// never-correct endpoint.
class FixedClient : public ModelClient {
 public:
  explicit FixedClient(std::string text = "I cannot determine the rule.")
      : text_(std::move(text)) {}

  std::string id() const override { return "fixed"; }

  std::vector<std::string> complete(const std::string&,
                                    const CompletionParams& params) override {
    return std::vector<std::string>(std::max(1, params.n), text_);
  }

 private:
  std::string text_;
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

namespace detail {

inline std::string hash_hex_128(std::string_view s) {
  auto fnv = [&](std::uint64_t h) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  };
  const std::uint64_t a = fnv(1469598103934665603ull);
  const std::uint64_t b = fnv(0x6c62272e07bb0142ull);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx",
                static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return std::string(buf);
}

}  // namespace detail

// Content-addressed store of model responses on disk: one JSON file per
// (model, prompt, params) key. Writes go through a temp file and an atomic
// rename, so a crash never leaves a half-written entry and concurrent
// readers see either the old file or the new one.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::vector<std::string>> lookup(
      const std::string& model, const std::string& prompt,
      const CompletionParams& params) const {
    const std::filesystem::path file = path_for(model, prompt, params);
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CacheCorruption("unreadable cache entry " + file.string() + ": " +
                            e.what());
    }
    try {
      if (j.at("model").get<std::string>() != model ||
          j.at("prompt").get<std::string>() != prompt ||
          j.at("temperature").get<double>() != params.temperature ||
          j.at("max_tokens").get<int>() != params.max_tokens ||
          j.at("n").get<int>() != params.n) {
        throw CacheCorruption("cache entry key mismatch in " + file.string());
      }
      return j.at("responses").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw CacheCorruption("malformed cache entry " + file.string() + ": " +
                            e.what());
    }
  }

  void store(const std::string& model, const std::string& prompt,
             const CompletionParams& params,
             const std::vector<std::string>& responses) {
    nlohmann::json j;
    j["model"] = model;
    j["prompt"] = prompt;
    j["temperature"] = params.temperature;
    j["max_tokens"] = params.max_tokens;
    j["n"] = params.n;
    j["responses"] = responses;
    const std::filesystem::path file = path_for(model, prompt, params);

    std::lock_guard<std::mutex> lock(mu_);
    const std::filesystem::path tmp =
        file.string() + ".tmp" + std::to_string(++counter_);
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw TransportError("cannot write cache file " + tmp.string());
      }
      out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, file);
  }

 private:
  std::filesystem::path path_for(const std::string& model,
                                 const std::string& prompt,
                                 const CompletionParams& params) const {
    nlohmann::json key;
    key["model"] = model;
    key["prompt"] = prompt;
    key["temperature"] = params.temperature;
    key["max_tokens"] = params.max_tokens;
    key["n"] = params.n;
    return dir_ / (detail::hash_hex_128(key.dump()) + ".json");
  }

  std::filesystem::path dir_;
  std::mutex mu_;
  unsigned long counter_ = 0;
};

// ---------------------------------------------------------------------------
// Remote client
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 5;
  int initial_backoff_ms = 250;
  double multiplier = 2.0;
  int max_backoff_ms = 8000;
};

struct RemoteEndpoint {
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "MIRAGE_API_KEY";  // header omitted when unset
  int timeout_seconds = 120;
  RetryPolicy retry;
  int max_in_flight = 4;  // concurrent requests allowed through this client
};

// Chat-completions HTTP client: one user message per prompt, deterministic
// parameters in the body, exponential backoff on 429 and 5xx, hard failure
// on other errors once the attempt budget is spent. An optional cache is
// consulted before the network and filled after it.
class RemoteClient : public ModelClient {
 public:
  explicit RemoteClient(RemoteEndpoint endpoint,
                        std::shared_ptr<ResponseCache> cache = nullptr)
      : endpoint_(std::move(endpoint)), cache_(std::move(cache)) {
    if (endpoint_.max_in_flight < 1) {
      throw ConfigError("max_in_flight must be at least 1");
    }
  }

  std::string id() const override { return endpoint_.model; }

  std::vector<std::string> complete(const std::string& prompt,
                                    const CompletionParams& params) override {
    if (cache_) {
      if (auto hit = cache_->lookup(endpoint_.model, prompt, params)) {
        return *hit;
      }
    }
    Slot slot(*this);
    std::vector<std::string> responses = post_with_retry(prompt, params);
    if (cache_) cache_->store(endpoint_.model, prompt, params, responses);
    return responses;
  }

  unsigned requests_sent() const { return requests_sent_.load(); }

 private:
  struct Slot {
    explicit Slot(RemoteClient& c) : client(c) {
      std::unique_lock<std::mutex> lock(client.mu_);
      client.cv_.wait(lock, [&] {
        return client.in_flight_ < client.endpoint_.max_in_flight;
      });
      ++client.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard<std::mutex> lock(client.mu_);
        --client.in_flight_;
      }
      client.cv_.notify_one();
    }
    RemoteClient& client;
  };

  std::vector<std::string> post_with_retry(const std::string& prompt,
                                           const CompletionParams& params) {
    nlohmann::json body;
    body["model"] = endpoint_.model;
    body["messages"] =
        nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_tokens;
    body["n"] = params.n;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str());
        key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error = "no attempt made";
    int backoff_ms = endpoint_.retry.initial_backoff_ms;
    for (int attempt = 0; attempt < endpoint_.retry.max_attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms = std::min<int>(
            endpoint_.retry.max_backoff_ms,
            static_cast<int>(backoff_ms * endpoint_.retry.multiplier));
      }
      ++requests_sent_;
      httplib::Client http(endpoint_.base_url);
      http.set_connection_timeout(endpoint_.timeout_seconds, 0);
      http.set_read_timeout(endpoint_.timeout_seconds, 0);
      http.set_write_timeout(endpoint_.timeout_seconds, 0);
      auto res =
          http.Post(endpoint_.path, headers, payload, "application/json");
      if (!res) {
        last_error = "network error code " +
                     std::to_string(static_cast<int>(res.error()));
        continue;
      }
      if (res->status == 200) {
        return parse_completions(res->body);
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      throw TransportError("HTTP " + std::to_string(res->status) + " from " +
                           endpoint_.base_url + endpoint_.path + ": " +
                           res->body.substr(0, 200));
    }
    throw TransportError("gave up after " +
                         std::to_string(endpoint_.retry.max_attempts) +
                         " attempts; last error: " + last_error);
  }

  static std::vector<std::string> parse_completions(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("unparseable response body: ") +
                           e.what());
    }
    std::vector<std::string> out;
    try {
      for (const auto& choice : j.at("choices")) {
        out.push_back(choice.at("message").at("content").get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("unexpected response shape: ") +
                           e.what());
    }
    if (out.empty()) throw TransportError("response contained no choices");
    return out;
  }

  RemoteEndpoint endpoint_;
  std::shared_ptr<ResponseCache> cache_;
  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::atomic<unsigned> requests_sent_{0};
};

}  // namespace mirage
