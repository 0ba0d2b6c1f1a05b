#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "feedalign/errors.hpp"
#include "feedalign/rng.hpp"

namespace feedalign {

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  std::string model_id;
  double temperature = 0.0;
  int max_response_tokens = 0;
  // Retry salt. 0 for first attempts; bumped on judge-level retries so a
  // response that failed to parse is not replayed from the cache forever.
  int attempt = 0;

  bool operator==(const ChatRequest&) const = default;
};

inline nlohmann::ordered_json request_to_json(const ChatRequest& r) {
  return {{"system_text", r.system_text}, {"user_text", r.user_text},
          {"model_id", r.model_id},       {"temperature", r.temperature},
          {"max_response_tokens", r.max_response_tokens},
          {"attempt", r.attempt}};
}

// Content hash of the full request, rendered as 32 hex chars.
inline std::string request_cache_key(const ChatRequest& r) {
  const std::string canon = request_to_json(r).dump();
  const std::uint64_t h1 = fnv1a64(canon);
  const std::uint64_t h2 = fnv1a64(canon, 0x6c62272e07bb0142ull);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                static_cast<unsigned long long>(h1),
                static_cast<unsigned long long>(h2));
  return buf;
}

class ChatBackend {
public:
  virtual ~ChatBackend() = default;
  virtual std::string send(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

// Append-only directory of responses keyed by request content hash. Readers
// need no locking; writers are serialized per key and publish with an
// atomic rename. Stored files carry the full request so a hash collision is
// detected instead of silently replayed.
class ResponseCache {
public:
  explicit ResponseCache(std::string directory) : dir_(std::move(directory)) {
    std::filesystem::create_directories(dir_);
  }

  const std::string& directory() const { return dir_; }

  std::optional<std::string> lookup(const ChatRequest& request) const {
    const std::filesystem::path file = entry_path(request);
    std::ifstream in(file);
    if (!in) return std::nullopt;
    nlohmann::ordered_json entry =
        nlohmann::ordered_json::parse(in, nullptr, false);
    if (entry.is_discarded())
      throw Error("corrupt cache entry: " + file.string());
    if (entry.at("request") != request_to_json(request))
      throw Error("cache key collision at " + file.string());
    return entry.at("response").get<std::string>();
  }

  void store(const ChatRequest& request, const std::string& response) {
    const std::filesystem::path file = entry_path(request);
    std::lock_guard<std::mutex> guard(key_mutex(file.string()));
    nlohmann::ordered_json entry = {{"request", request_to_json(request)},
                                    {"response", response}};
    const std::filesystem::path tmp = file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error("cannot write cache entry: " + tmp.string());
      out << entry.dump();
    }
    std::filesystem::rename(tmp, file);
  }

private:
  std::filesystem::path entry_path(const ChatRequest& request) const {
    return std::filesystem::path(dir_) / (request_cache_key(request) + ".json");
  }

  std::mutex& key_mutex(const std::string& key) {
    std::lock_guard<std::mutex> guard(map_mutex_);
    return key_mutexes_[key];
  }

  std::string dir_;
  std::mutex map_mutex_;
  std::unordered_map<std::string, std::mutex> key_mutexes_;
};

// ---------------------------------------------------------------------------
// llm_call
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_retries = 3;
  int backoff_base_ms = 250;  // doubled per attempt; 0 disables sleeping
};

// Cache-through call with bounded exponential backoff on transient backend
// failures. `cache` may be null to force a live call.
inline std::string llm_call(ChatBackend& backend, const ChatRequest& request,
                            ResponseCache* cache,
                            const RetryPolicy& retry = {}) {
  if (cache) {
    if (std::optional<std::string> hit = cache->lookup(request)) return *hit;
  }
  int attempt = 0;
  for (;;) {
    try {
      std::string response = backend.send(request);
      if (cache) cache->store(request, response);
      return response;
    } catch (const BackendError& e) {
      if (!e.transient() || attempt >= retry.max_retries) throw;
      const int sleep_ms = retry.backoff_base_ms * (1 << attempt);
      if (sleep_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
      ++attempt;
    }
  }
}

// ---------------------------------------------------------------------------
// Mock backends
// ---------------------------------------------------------------------------

// Replays canned responses: rules are matched against the user text in
// insertion order, falling back to a fixed default. Pure in its inputs.
class ReplayBackend : public ChatBackend {
public:
  explicit ReplayBackend(std::string default_response = "")
      : default_response_(std::move(default_response)) {}

  void add_rule(std::string user_substring, std::string response) {
    rules_.emplace_back(std::move(user_substring), std::move(response));
  }

  std::string send(const ChatRequest& request) override {
    ++calls_;
    for (const auto& [needle, response] : rules_)
      if (request.user_text.find(needle) != std::string::npos) return response;
    return default_response_;
  }

  std::string id() const override { return "replay-mock"; }

  int calls() const { return calls_; }

private:
  std::string default_response_;
  std::vector<std::pair<std::string, std::string>> rules_;
  int calls_ = 0;
};

// Fails every call; used to prove that offline runs never touch a live
// backend.
class ThrowingBackend : public ChatBackend {
public:
  explicit ThrowingBackend(bool transient = false) : transient_(transient) {}

  std::string send(const ChatRequest&) override {
    throw BackendError("backend invoked unexpectedly", transient_);
  }

  std::string id() const override { return "throwing-mock"; }

private:
  bool transient_;
};

}  // namespace feedalign
