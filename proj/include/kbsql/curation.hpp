#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kbsql/database.hpp"
#include "kbsql/embedding.hpp"
#include "kbsql/index.hpp"
#include "kbsql/json.hpp"
#include "kbsql/kb_store.hpp"
#include "kbsql/llm.hpp"
#include "kbsql/time.hpp"

namespace kbsql {

// ---------------------------------------------------------------------------
// SQL profiling

struct ProfiledSql {
  std::string nl;
  Timestamp query_time{};
  std::vector<std::string> result_schema;
  std::vector<std::string> knowledge_summary;
  std::string header_comment;
  /// Header followed by the (possibly annotated) statement.
  std::string commented_sql;
  std::vector<std::string> corner_cases;
  /// False when every LLM rewrite was rejected and the raw SQL was kept.
  bool annotated = false;

  json to_json() const;
};

struct ProfileSqlOptions {
  std::string model = "profiler";
  /// LLM rewrites tried before falling back to the raw statement.
  int attempts = 2;
  /// Extra "key: value" lines shown under "User Profile".
  std::vector<std::pair<std::string, std::string>> user_profile;
};

/// "YYYY-MM-DD", with " HH:MM:SS" appended when the time of day is not midnight.
std::string format_query_time(Timestamp t);

/// Deterministic header lines (query, time, expected schema, knowledge). Every line is a
/// comment.
std::string sql_profile_header(const std::string& nl, Timestamp query_time, const std::vector<std::string>& schema,
                               const std::vector<std::string>& knowledge,
                               const std::vector<std::pair<std::string, std::string>>& user_profile = {});

/// Executes `sql` for its result schema, then asks `llm` (if any) for corner cases and inline
/// comments. A rewrite is accepted only if it executes to the same canonical result. Throws
/// SqlFails.
ProfiledSql profile_sql(const std::string& nl, const std::string& sql, Timestamp query_time,
                        const KnowledgeBundle& knowledge, Database& db, LlmClient* llm,
                        const ProfileSqlOptions& options = {});

// ---------------------------------------------------------------------------
// CoT generation

struct CotResult {
  std::string cot;
  std::string sql;
  bool verified = false;
  int repairs = 0;
};

struct CotOptions {
  std::string model = "reasoner";
  int max_repairs = 2;
  std::string dialect = "sqlite";
};

/// Asks `rlm` for reasoning plus SQL. On a result mismatch with the gold query the reasoning is
/// repaired against the gold SQL and re-verified by completing SQL from the repaired reasoning.
/// Throws GoldSqlFails, PreconditionViolation (max_repairs < 0).
CotResult generate_cot(const std::string& nl, const std::string& gold_sql, const KnowledgeBundle& bundle,
                       LlmClient& rlm, Database& db, const CotOptions& options = {});

// ---------------------------------------------------------------------------
// Scoring

/// Number of false outcomes.
double hardness(const std::vector<bool>& outcomes);

/// Judge dimensions followed by the deterministic brevity dimension.
const std::vector<std::string>& quality_dimensions();

using TokenCounter = std::function<std::size_t(const std::string&)>;
/// Whitespace-separated word count.
std::size_t count_tokens(const std::string& text);

struct QualityOptions {
  std::string model = "judge";
  std::size_t t_max = 4096;
};

struct QualityScore {
  double q = 0;
  std::map<std::string, double> dims;
};

/// 10 * clamp(1 - tokens / t_max, 0, 1).
double brevity_score(std::size_t tokens, std::size_t t_max);

/// Judge dimensions are clamped to [0, 10]. Throws ProviderUnavailable when the judge fails or
/// its reply lacks a dimension.
QualityScore quality(const std::string& cot, LlmClient& judge, const TokenCounter& counter = count_tokens,
                     const QualityOptions& options = {});

/// Mean cosine distance of each query to its k nearest neighbours. Throws PreconditionViolation
/// unless 0 < k < queries.size().
std::vector<double> diversity(const std::vector<std::string>& queries, std::size_t k, const Embedder& embedder);

struct ModelOutcome {
  std::string model;
  bool correct = false;
};

struct CurationRecord {
  std::string nl;
  std::string cot;
  std::string sql;
  std::vector<ModelOutcome> model_outcomes;
  double h = 0;
  double q = 0;
  double v = 0;
  double b = 0;
  double s = 0;
  std::map<std::string, double> quality_dims;

  json to_json() const;
  static CurationRecord from_json(const json& j);
};

struct CurationCoefficients {
  double alpha = 1.0;
  double beta_q = 1.0;
  double gamma = 1.0;
};

/// alpha*H + beta_q*Q + gamma*V + B. Throws PreconditionViolation for coefficients outside [0,1].
double curation_score(const CurationRecord& r, const CurationCoefficients& c);

/// Secondary key for records with equal S; larger comes first.
using CurationTieBreaker = std::function<double(const CurationRecord&)>;
/// Negative cot token count (shorter reasoning first).
double shorter_cot_first(const CurationRecord& r);

/// Fills S, sorts by S descending (ties by `tie`, then input order) and keeps `budget` records.
std::vector<CurationRecord> select_top(std::vector<CurationRecord> records, const CurationCoefficients& c,
                                       const CurationTieBreaker& tie, std::size_t budget);

/// One JSON object per line.
std::string to_jsonl(const std::vector<CurationRecord>& records);

// ---------------------------------------------------------------------------
// Synthesis

struct NlSqlPair {
  std::string nl;
  std::string sql;
  /// with, union, join, decomposed or transfer.
  std::string origin;

  json to_json() const;
};

enum class ComposeTemplate { With, Union, Join };
ComposeTemplate parse_compose_template(std::string_view text);
std::string_view to_string(ComposeTemplate t);

/// A simple query usable as a CTE. `{where}` in the text is replaced by the drawn predicates
/// (or a tautology). The name becomes the CTE name, so it must not shadow a table the seed reads.
struct SeedQuery {
  std::string name;
  std::string sql;
};

/// Predicates of one group are mutually exclusive; at most one is drawn per group.
struct OntologyGroup {
  std::string name;
  std::vector<std::string> predicates;
};

/// Derived measure over seed CTEs, e.g. profit = revenue.total - cost.total.
struct Indicator {
  std::string name;
  std::string expression;
  std::vector<std::string> inputs;
};

struct ComposeOptions {
  std::vector<Indicator> indicators;
  /// Predicate combinations tried per composite.
  std::size_t max_variants = 4;
  std::uint64_t seed = 7;
  std::string model = "synth";
};

/// At least one row and at least one non-NULL cell.
bool meaningful_result(const QueryResult& r);

/// Builds CTE composites from the seeds, keeps those with a meaningful result and asks `llm` to
/// phrase each as a question. Throws SqlFails when a seed does not execute.
std::vector<NlSqlPair> synthesize_composed(const std::vector<SeedQuery>& seeds,
                                           const std::vector<ComposeTemplate>& templates,
                                           const std::vector<OntologyGroup>& ontology, LlmClient& llm, Database& db,
                                           const ComposeOptions& options = {});

/// One pair per CTE or derived table of the outer query that executes on its own.
std::vector<NlSqlPair> synthesize_decomposed(const std::string& nl, const std::string& sql, LlmClient& llm,
                                             Database& db, const std::string& model = "synth");

/// Asks `llm` for structure-preserving queries on the target database; keeps those with a
/// meaningful result and phrases them as questions.
std::vector<NlSqlPair> query_transfer(const NlSqlPair& source, Database& target, const KnowledgeBase* kb,
                                      LlmClient& llm, const std::string& model = "synth");

/// Every ```sql (or unlabeled) fenced block, in order.
std::vector<std::string> extract_all_fenced_sql(const std::string& text);

}  // namespace kbsql
