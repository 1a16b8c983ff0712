#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kbsql/database.hpp"
#include "kbsql/json.hpp"
#include "kbsql/lemmatizer.hpp"
#include "kbsql/time.hpp"
#include "kbsql/ukf.hpp"

namespace kbsql {

class LlmClient;
class Embedder;

enum class InferredType { Numeric, Categorical, Text, Temporal };
std::string_view to_string(InferredType t);

struct NumericStats {
  double mean = 0, min = 0, p25 = 0, p50 = 0, p75 = 0, max = 0;
  bool is_integer = false;
};

struct TopValue {
  std::string value;
  std::int64_t count = 0;
  double frequency = 0;
  double cum_frequency = 0;
};

struct CategoricalStats {
  std::int64_t n_classes = 0;
  std::vector<TopValue> top_values;
  std::int64_t max_len = 0;
};

struct TemporalStats {
  std::string format;
  Timestamp min_time{};
  Timestamp max_time{};
};

struct ColumnProfile {
  std::string id;  // "table.column"
  std::string table;
  std::string name;
  std::string description;
  std::string declared_type;
  bool is_pk = false;
  bool is_fk = false;
  std::optional<ForeignKey> fk;
  InferredType inferred_type = InferredType::Text;
  std::int64_t row_count = 0;
  std::int64_t null_count = 0;
  std::optional<NumericStats> numeric_stats;
  std::optional<CategoricalStats> categorical_stats;
  std::optional<TemporalStats> temporal_stats;

  json to_json() const;
};

struct TableProfile {
  std::string name;
  std::string description;
  std::int64_t row_count = 0;
  std::vector<ColumnProfile> columns;
  std::vector<ForeignKey> foreign_keys;

  json to_json() const;
};

struct DbProfile {
  std::string connection;
  std::vector<TableProfile> tables;

  json to_json() const;
  const ColumnProfile* find_column(const std::string& table, const std::string& column) const;
};

/// Knobs for type inference. The temporal suspicion heuristics are name substrings and digit
/// patterns; both lists can be replaced.
struct ProfileOptions {
  double categorical_ratio = 0.1;
  std::int64_t categorical_max_distinct = 1000;
  double temporal_accept_ratio = 0.95;
  std::vector<std::string> temporal_name_hints = {"date", "time", "year", "month", "day", "period",
                                                  "created", "updated", "_at", "_dt", "timestamp"};
  std::vector<std::string> temporal_value_patterns = {
      R"(^\d{4}[-/.]\d{1,2}([-/.]\d{1,2})?([ T]\d{1,2}:\d{2}(:\d{2})?)?$)",
      R"(^(19|20)\d{2}(0[1-9]|1[0-2])((0[1-9]|[12]\d|3[01]))?$)",
      R"(^\d{1,2}[-/.]\d{1,2}[-/.]\d{2,4}$)"};
  std::size_t temporal_sample = 20;
  std::size_t top_k = 10;
  std::string model = "profiler";
};

struct TypeAnnotation {
  InferredType type = InferredType::Text;
  std::string format;  // strptime format when temporal
};

/// Fraction of values `format` parses completely (glibc strptime).
double strptime_parse_ratio(const std::vector<std::string>& values, const std::string& format);
std::optional<Timestamp> parse_with_format(const std::string& value, const std::string& format);

bool temporal_suspected(const std::string& column_name, const std::vector<Value>& values,
                        const ProfileOptions& options = {});

/// Rules first; a temporal suspicion consults `llm` for a format string, accepted only when it
/// parses at least `temporal_accept_ratio` of the non-null sample.
TypeAnnotation annotate_column_type(const std::vector<Value>& values, LlmClient* llm = nullptr,
                                    const std::string& column_name = "", const ProfileOptions& options = {});

/// Linear interpolation between closest ranks on sorted data.
double percentile(const std::vector<double>& sorted, double q);

ColumnProfile profile_column(Database& db, const std::string& table, const std::string& column,
                             LlmClient* llm = nullptr, const ProfileOptions& options = {});
TableProfile profile_table(Database& db, const std::string& table, LlmClient* llm = nullptr,
                           const ProfileOptions& options = {}, unsigned workers = 1);
DbProfile profile_db(Database& db, LlmClient* llm = nullptr, const ProfileOptions& options = {},
                     unsigned workers = 1);

struct ColumnSummary {
  std::string column;
  bool numeric = false;
  std::int64_t non_null = 0;
  std::int64_t nulls = 0;
  std::optional<double> min;
  std::optional<double> max;
};

struct TruncatedResult {
  std::vector<std::string> columns;
  std::vector<Row> rows;
  std::int64_t total_row_count = 0;
  bool truncated = false;
  std::vector<ColumnSummary> summary;
  std::optional<SqlError> error;

  json to_json() const;
  /// Compact text rendering for prompts.
  std::string to_text() const;
};

inline constexpr std::size_t kDefaultMaxRows = 50;

/// Never throws for SQL problems; they land in `error`. nullopt max_rows keeps every row.
TruncatedResult execute_sql_tool(Database& db, const std::string& sql,
                                 std::optional<std::size_t> max_rows = kDefaultMaxRows);

/// Summaries from a complete row set (reference for the streaming summaries).
std::vector<ColumnSummary> summarize_rows(const std::vector<std::string>& columns, const std::vector<Row>& rows);

/// |Q ∩ D| / |Q| over token n-gram sets of orders 1..gram_order. Throws EmptyQuery.
double jaccard_containment(const std::string& query, const std::string& candidate, int gram_order = 2,
                           const Lemmatizer& lemmatizer = *default_lemmatizer());
std::set<std::string> token_ngrams(const std::string& text, int gram_order,
                                   const Lemmatizer& lemmatizer = *default_lemmatizer());

enum class MatchChannel { Lexical, Semantic };
std::string_view to_string(MatchChannel c);

struct FuzzyHit {
  std::string value;
  double score = 0;
  MatchChannel channel = MatchChannel::Lexical;
  std::string detail;  // column id for fuzzy_column
};

/// Union of lexical top-k and semantic top-k, max score per value, sorted by score desc then value.
std::vector<FuzzyHit> fuzzy_match(const std::vector<std::string>& candidates, const std::string& keyword,
                                  std::size_t k, const Embedder* embedder = nullptr, int gram_order = 2);
/// Candidate values are the categorical top values of every profiled column.
std::vector<FuzzyHit> fuzzy_enum(const DbProfile& profile, const std::string& keyword, std::size_t k,
                                 const Embedder* embedder = nullptr);
/// Distinct values read from the database for one column.
std::vector<FuzzyHit> fuzzy_enum(Database& db, const std::string& table, const std::string& column,
                                 const std::string& keyword, std::size_t k, const Embedder* embedder = nullptr);
/// Over column names and descriptions; `detail` carries the column id.
std::vector<FuzzyHit> fuzzy_column(const DbProfile& profile, const std::string& keyword, std::size_t k,
                                   const Embedder* embedder = nullptr);

/// Table, Column and categorical Enum UKF records for a profile. Identity fields are fixed so re-profiling yields
/// the same ids.
std::vector<UkfRecord> profile_to_ukf(const DbProfile& profile);

}  // namespace kbsql
