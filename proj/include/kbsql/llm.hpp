#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kbsql/json.hpp"

namespace kbsql {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct LlmParams {
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 1024;
  /// Distinguishes repeated samples of one prompt.
  int sample = 0;
};

struct LlmResponse {
  std::string text;
  /// Scripted clients may declare a latency; callers sleep that long to simulate it.
  std::optional<int> simulated_latency_ms;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws ProviderUnavailable (or NetworkDenied for a guarded live client).
  virtual LlmResponse complete(const std::vector<ChatMessage>& messages, const LlmParams& params) = 0;
  virtual std::string name() const = 0;
  virtual bool supports_sampling() const = 0;
};

/// SHA-256 over the canonical JSON of messages and sampling parameters.
std::string request_digest(const std::vector<ChatMessage>& messages, const LlmParams& params);
json request_to_json(const std::vector<ChatMessage>& messages, const LlmParams& params);

/// Deterministic client answering from a fixture: exact request digests first, then substring
/// rules in file order. Fixture layout:
///   {"responses": {"<digest>": {"text": ..., "latency_ms": ...}},
///    "rules": [{"contains": ..., "model": ..., "sample": ..., "text": ..., "latency_ms": ...}],
///    "default": {"text": ...}}
class ScriptedClient final : public LlmClient {
 public:
  struct Rule {
    std::vector<std::string> contains;  // all must occur in the concatenated prompt
    std::optional<std::string> model;
    std::optional<int> sample;
    LlmResponse response;
    bool fail = false;
  };

  ScriptedClient() = default;
  explicit ScriptedClient(const json& fixture);
  static std::shared_ptr<ScriptedClient> from_file(const std::filesystem::path& file);
  /// Merges every *.json fixture in a directory, in file-name order.
  static std::shared_ptr<ScriptedClient> from_directory(const std::filesystem::path& dir);

  void add_response(const std::string& digest, LlmResponse response);
  void add_rule(Rule rule);
  void set_default(LlmResponse response) { default_ = std::move(response); }
  void merge(const json& fixture);

  LlmResponse complete(const std::vector<ChatMessage>& messages, const LlmParams& params) override;
  std::string name() const override { return "scripted"; }
  bool supports_sampling() const override { return true; }

  std::size_t call_count() const;
  /// Digests of every request, in call order.
  std::vector<std::string> request_log() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, LlmResponse> responses_;
  std::vector<Rule> rules_;
  std::optional<LlmResponse> default_;
  std::vector<std::string> log_;
};

/// Wraps another client and stores each exchange keyed by request digest, producing a fixture
/// a ScriptedClient can replay.
class RecordingClient final : public LlmClient {
 public:
  explicit RecordingClient(std::shared_ptr<LlmClient> inner) : inner_(std::move(inner)) {}
  LlmResponse complete(const std::vector<ChatMessage>& messages, const LlmParams& params) override;
  std::string name() const override { return "recording:" + inner_->name(); }
  bool supports_sampling() const override { return inner_->supports_sampling(); }
  json fixture() const;

 private:
  std::shared_ptr<LlmClient> inner_;
  mutable std::mutex mutex_;
  json responses_ = json::object();
};

struct HttpLlmConfig {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string api_key;
  int timeout_s = 60;
};

/// OpenAI-style chat-completion client. Refuses to open a socket when KBSQL_DENY_NETWORK is set.
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpLlmConfig config) : config_(std::move(config)) {}
  LlmResponse complete(const std::vector<ChatMessage>& messages, const LlmParams& params) override;
  std::string name() const override { return "http"; }
  bool supports_sampling() const override { return true; }

  /// Live requests attempted by any instance in this process.
  static std::uint64_t live_call_count();

 private:
  HttpLlmConfig config_;
  static std::atomic<std::uint64_t> live_calls_;
};

/// True when KBSQL_DENY_NETWORK is set to anything but "" or "0".
bool network_denied();

/// Content of the last ```sql fenced block (or last unlabeled fence); nullopt if none.
std::optional<std::string> extract_fenced_sql(const std::string& text);

}  // namespace kbsql
