#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kbsql/database.hpp"
#include "kbsql/index.hpp"
#include "kbsql/llm.hpp"

namespace kbsql {

struct SqlCandidate {
  std::string sql;
  std::optional<std::string> cot;
  std::string model;
  bool compile_ok = false;
  /// Digest of the canonical execution result; set iff compile_ok and execution succeeded.
  std::optional<std::string> exec_fingerprint;
  long long latency_ms = 0;
  std::optional<std::string> error;
  int sample = 0;

  json to_json() const;
};

// ---------------------------------------------------------------------------
// RAG agent

enum class RagMode { Static, Agentic };
RagMode parse_rag_mode(std::string_view text);

struct RagOptions {
  RagMode mode = RagMode::Static;
  std::size_t vector_k = 5;
  FusionPolicy policy = FusionPolicy::RoundRobin;
  /// Tool calls the agentic loop may make before it must stop.
  std::size_t step_budget = 4;
  bool summarize = false;
  std::string model = "rag";
};

/// Static mode: every DAAC match plus the top `vector_k` of the round-robin fused vector
/// searches (one per configured query serializer), trigger-filtered and fused. Agentic mode adds
/// the results of LLM-chosen tool calls. Throws IndexUnavailable when `indexes` is null or not
/// built.
KnowledgeBundle rag_retrieve(const std::string& query, const json& context, const IndexSet* indexes,
                             const RagOptions& options = {}, LlmClient* llm = nullptr);

// ---------------------------------------------------------------------------
// SQL generation

struct GenerationOptions {
  std::string dialect = "sqlite";
  /// Extra schema or profile text placed after the knowledge block.
  std::string profile_snippet;
  json context = json::object();
  /// Execute compiling candidates to fill exec_fingerprint.
  bool execute = true;
  /// Honor simulated latencies of scripted responses by sleeping.
  bool simulate_latency = false;
  const std::atomic<bool>* cancel = nullptr;
};

/// Prompt text for a question and bundle; items appear in bundle order.
std::string generation_prompt(const std::string& query, const KnowledgeBundle& bundle,
                              const GenerationOptions& options = {});

/// Throws NoSqlInResponse.
SqlCandidate generate_sql(const std::string& query, const KnowledgeBundle& bundle, LlmClient& llm,
                          const LlmParams& params, Database& db, const GenerationOptions& options = {});

/// EXPLAIN on SQLite, zero-row execution elsewhere. Returns the error message on failure.
std::optional<std::string> compile_check(Database& db, const std::string& sql);
/// Runs the SQL and stores its fingerprint (order-sensitive only under a top-level ORDER BY).
void execute_candidate(SqlCandidate& candidate, Database& db);

/// Verifies by execution; on error or empty result asks the LLM for a revision, at most
/// `max_rounds` times. Returns the last compiling candidate, else the input.
SqlCandidate refine_sql(const std::string& query, const SqlCandidate& candidate, const KnowledgeBundle& bundle,
                        Database& db, LlmClient& llm, int max_rounds, const LlmParams& params = {});

// ---------------------------------------------------------------------------
// Test-time scaling

enum class TieBreaker { FirstCompleted, LlmJudge, UserPref };
TieBreaker parse_tie_breaker(std::string_view text);
std::string_view to_string(TieBreaker t);

struct TieBreakConfig {
  TieBreaker kind = TieBreaker::FirstCompleted;
  LlmClient* judge = nullptr;
  std::string judge_model = "judge";
  /// Model names, most preferred first (user_pref).
  std::vector<std::string> preferred_models;
};

/// Largest group of equal fingerprints wins; its representative is the member with the lowest
/// latency. Throws AllCandidatesFailed, PreconditionViolation on empty input.
SqlCandidate majority_vote(const std::vector<SqlCandidate>& candidates, const TieBreakConfig& tie = {});

struct Rung {
  std::string model;
  int n = 2;
};

struct CascadeOptions {
  long long deadline_ms = 60000;
  TieBreakConfig tie;
  GenerationOptions generation;
  double temperature = 0.7;
  unsigned workers = 8;
};

struct CascadeResult {
  SqlCandidate winner;
  /// Candidates that finished before the decision, in completion order.
  std::vector<SqlCandidate> completed;
  std::string decided_by;  // agreement, majority, deadline
  std::size_t cancelled = 0;
};

/// Samples `n` candidates of `model` concurrently.
std::vector<SqlCandidate> sample_candidates(const std::string& query, const KnowledgeBundle& bundle, Database& db,
                                            LlmClient& llm, const std::string& model, int n,
                                            const CascadeOptions& options = {});

/// Every rung runs concurrently. With several rungs the first two completed candidates that
/// agree decide and the rest are cancelled; without agreement the final rung's majority wins,
/// then the majority over everything completed. A single rung is a plain majority vote over
/// its samples. After the deadline, majority over what completed. Throws AllCandidatesFailed,
/// DeadlineWithNoCandidate, PreconditionViolation.
CascadeResult cascade(const std::vector<Rung>& ladder, const std::string& query, const KnowledgeBundle& bundle,
                      Database& db, LlmClient& llm, const CascadeOptions& options = {});

}  // namespace kbsql
