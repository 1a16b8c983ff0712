#pragma once

#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "kbsql/database.hpp"
#include "kbsql/time.hpp"

namespace kbsql {

using Decimal = boost::multiprecision::cpp_dec_float_50;

/// Canonical cell: integers and reals collapse into one decimal numeric kind.
struct Cell {
  enum class Kind { Null, Boolean, Number, Text, DateTime };
  Kind kind = Kind::Null;
  bool boolean = false;
  Decimal number;
  std::string text;
  Timestamp time{};

  static Cell null() { return {}; }
  std::string to_string() const;
};

/// Numeric text ("3.50") becomes a number, ISO date/time text a datetime, other text is trimmed.
Cell canonicalize_cell(const Value& raw);
Cell canonicalize_cell(const json& raw);
/// Numbers are equal within 1e-6 * max(1, |a|, |b|); booleans compare as 0/1 against numbers.
bool cells_equal(const Cell& a, const Cell& b);

using CellRow = std::vector<Cell>;

struct ExecutionResult {
  std::vector<std::string> column_names;
  std::vector<CellRow> rows;
  std::optional<SqlError> error;

  static ExecutionResult from_query(const QueryResult& q);
  static ExecutionResult failure(SqlError error);
  /// {"columns": [...], "rows": [[...]]}
  static ExecutionResult from_json(const json& j);
};

/// Throws EmptyRow for an empty row, PreconditionViolation for beta <= 0.
double row_fbeta(const CellRow& p, const CellRow& g, double beta = 1.0);

using Matrix = std::vector<std::vector<double>>;

Matrix weight_matrix(const std::vector<CellRow>& pred, const std::vector<CellRow>& gold, double beta);
/// Maximum-weight one-to-one assignment (Hungarian, O(n^3)).
double wbm(const Matrix& w);
/// Optional out-param receives the assignment (row -> column, -1 when unassigned).
double wbm(const Matrix& w, std::vector<int>* assignment);
/// Maximum-weight non-crossing matching by dynamic programming.
double wbm_ni(const Matrix& w);

/// True iff the outermost query carries ORDER BY. Unparsable input counts as ordered.
bool detect_ordered(const std::string& sql);

double bfbeta_score(const ExecutionResult& pred, const ExecutionResult& gold, bool ordered, double beta = 1.0);
double bfbeta_score(const ExecutionResult& pred, const ExecutionResult& gold, const std::string& gold_sql,
                    double beta = 1.0);

/// Multiset (or sequence, when ordered) equality of canonicalized rows.
bool exact_ex(const ExecutionResult& pred, const ExecutionResult& gold, bool ordered);

/// Order-insensitive (unless ordered) SHA-256 of the canonical rows; stable under row reordering.
std::string result_fingerprint(const ExecutionResult& result, bool ordered);

struct EvalPair {
  std::string id;
  std::string pred_sql;
  std::string gold_sql;
};

struct EvalItem {
  std::string id;
  bool ex = false;
  double bfbeta = 0.0;
  std::string error;
  /// False when the gold query failed; such items are reported but not averaged.
  bool scored = true;
};

struct BatchReport {
  double ex = 0.0;
  double bfbeta = 0.0;
  std::size_t scored = 0;
  std::vector<EvalItem> items;

  json to_json() const;
  /// Header "id,ex,bfbeta,error".
  std::string to_csv() const;
};

BatchReport batch_accuracy(const std::vector<EvalPair>& pairs, Database& db, double beta = 1.0,
                           unsigned workers = 4);

}  // namespace kbsql
