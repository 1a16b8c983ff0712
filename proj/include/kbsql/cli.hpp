#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "kbsql/config.hpp"
#include "kbsql/json.hpp"
#include "kbsql/llm.hpp"

namespace kbsql {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Forwards to another client and remembers the digest of every request.
class TracingClient final : public LlmClient {
 public:
  explicit TracingClient(std::shared_ptr<LlmClient> inner) : inner_(std::move(inner)) {}
  LlmResponse complete(const std::vector<ChatMessage>& messages, const LlmParams& params) override;
  std::string name() const override { return inner_->name(); }
  bool supports_sampling() const override { return inner_->supports_sampling(); }
  /// Sorted, so concurrent sampling does not change the trace.
  std::vector<std::string> digests() const;
  std::size_t calls() const;

 private:
  std::shared_ptr<LlmClient> inner_;
  mutable std::mutex mutex_;
  std::vector<std::string> digests_;
};

struct AskOptions {
  bool dry_run = false;
  json context = json::object();
  std::size_t preview_rows = 10;
};

/// Retrieval, generation (with test-time scaling per config), refinement and a result preview.
/// With dry_run the result holds only "prompt" and no LLM is called. Throws EmptyQuery and
/// whatever the underlying modules raise.
json cmd_ask(const std::string& query, const Config& config, const AskOptions& options = {});

struct UpdateOptions {
  /// Query time for profiled SQL when an item has none; now when unset.
  std::optional<Timestamp> query_time;
};

/// JSONL batch of {nl, sql?, context?}. Labeled lines go through mining and SQL profiling,
/// unlabeled ones through pseudo-label mining; everything is merged into the configured KB.
/// Item failures are counted and the batch continues.
json cmd_update(const std::string& jsonl, const Config& config, const UpdateOptions& options = {});

/// Full command line without the program name. Writes results to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kbsql
