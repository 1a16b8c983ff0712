#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kbsql/database.hpp"
#include "kbsql/embedding.hpp"
#include "kbsql/errors.hpp"
#include "kbsql/json.hpp"
#include "kbsql/kb_store.hpp"
#include "kbsql/llm.hpp"
#include "kbsql/profiler.hpp"
#include "kbsql/ukf.hpp"

namespace kbsql {

enum class Verification { SchemaVerified, ExecutionVerified, Unverified };
std::string_view to_string(Verification v);

struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string text;
};

struct Evidence {
  std::string query;
  std::optional<std::string> sql;
  std::optional<TextSpan> span;
};

struct MinedEntry {
  UkfRecord candidate;
  Evidence evidence;
  Verification verification = Verification::Unverified;

  json to_json() const;
};

/// Records of every verified entry, ready for KnowledgeBase::merge_incoming.
std::vector<UkfRecord> merge_batch(const std::vector<MinedEntry>& entries);

/// Thrown when the tool-call budget runs out; carries what was mined so far.
class BudgetExhaustedError : public Error {
 public:
  BudgetExhaustedError(std::vector<MinedEntry> partial, const std::string& message)
      : Error(ErrorCode::BudgetExhausted, message), partial_(std::move(partial)) {}
  const std::vector<MinedEntry>& partial() const { return partial_; }

 private:
  std::vector<MinedEntry> partial_;
};

struct MiningOptions {
  std::string model = "miner";
  /// Existing records that mined synonyms attach to. Without it every link becomes a
  /// Synonym record.
  const KnowledgeBase* kb = nullptr;
  /// Used by the retrieval path of unlabeled mining; profiled on demand when absent.
  std::shared_ptr<const DbProfile> profile;
  std::shared_ptr<const Embedder> embedder;
  /// Minimum fuzzy score for a retrieval hit.
  double min_fuzzy_score = 0.5;
  std::size_t fuzzy_k = 3;
  std::string creator = "miner";
  std::string collection = "mined";
};

/// Structured information extraction: asks `llm` for records following the named templates
/// and keeps the well-formed ones. Malformed items are dropped with a warning each; the count
/// goes to `dropped` when given. Throws ProviderUnavailable.
std::vector<UkfRecord> sie_extract(const std::string& chunk, LlmClient& llm, const std::vector<std::string>& templates,
                                   std::size_t* dropped = nullptr, const MiningOptions& options = {});

/// Links phrases of a labeled question to its gold SQL. With `failed_sql`, predicates present in
/// the gold query but missing from the failed one become Predicate entries. Throws GoldSqlFails.
std::vector<MinedEntry> mine_labeled(const std::string& nl, const std::string& gold_sql, Database& db, LlmClient& llm,
                                     const std::optional<std::string>& failed_sql = std::nullopt,
                                     const MiningOptions& options = {});

/// Retrieval over the profile plus an AST pseudo-label from a generated SQL; candidates both
/// paths agree on are verified against the schema and by probe queries. Every LLM call, fuzzy
/// lookup and probe costs one unit of `budget`. Throws BudgetExhaustedError.
std::vector<MinedEntry> mine_unlabeled(const std::string& nl, Database& db, const KnowledgeBase& kb, LlmClient& llm,
                                       std::size_t budget, MiningOptions options = {});

/// True when `SELECT 1 FROM table WHERE column = value LIMIT 1` returns a row.
bool probe_value(Database& db, const std::string& table, const std::string& column, const std::string& value);

/// First JSON object or array in an LLM reply (fenced or bare).
std::optional<json> extract_json(const std::string& text);

}  // namespace kbsql
