#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kbsql/json.hpp"

namespace kbsql {

struct Blob {
  std::string bytes;
  bool operator==(const Blob&) const = default;
};

/// Raw value as delivered by a driver.
using Value = std::variant<std::monostate, bool, std::int64_t, double, std::string, Blob>;

bool is_null(const Value& v);
bool is_numeric(const Value& v);
/// Numeric view of integer/real/bool values.
std::optional<double> as_double(const Value& v);
/// Human readable form; NULL renders as "NULL".
std::string value_to_string(const Value& v);
json value_to_json(const Value& v);
Value value_from_json(const json& j);

using Row = std::vector<Value>;

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<Row> rows;
};

struct ForeignKey {
  std::string column;
  std::string ref_table;
  std::string ref_column;
};

struct ColumnInfo {
  std::string name;
  std::string declared_type;
  bool is_pk = false;
  bool not_null = false;
  std::optional<ForeignKey> fk;
};

struct TableSchema {
  std::string name;
  std::vector<ColumnInfo> columns;
  std::vector<ForeignKey> foreign_keys;
};

/// Error from executing a statement. `sqlstate` is a best-effort SQLSTATE class code.
struct SqlError {
  std::string message;
  std::string sqlstate;
};

/// Thin driver interface. Implementations serialize access internally.
class Database {
 public:
  using RowSink = std::function<void(const Row&)>;

  virtual ~Database() = default;
  /// Throws SqlFailure carrying the driver message and SQLSTATE class.
  virtual QueryResult query(const std::string& sql) = 0;
  /// Streams rows; returns column names. Same error contract as query().
  virtual std::vector<std::string> query_stream(const std::string& sql, const RowSink& sink) = 0;
  virtual std::vector<std::string> tables() = 0;
  virtual TableSchema schema(const std::string& table) = 0;
  virtual std::string dialect() const = 0;
  virtual std::string connection_string() const = 0;
};

/// SQL failure with structured details.
class SqlFailure : public std::runtime_error {
 public:
  explicit SqlFailure(SqlError err) : std::runtime_error(err.message), error_(std::move(err)) {}
  const SqlError& error() const { return error_; }

 private:
  SqlError error_;
};

/// Embedded single-file engine. `path` may be ":memory:" or a file:... URI.
class SqliteDatabase final : public Database {
 public:
  enum class Mode { Create, ReadWrite, ReadOnly };
  explicit SqliteDatabase(const std::string& path, Mode mode = Mode::Create);
  ~SqliteDatabase() override;

  QueryResult query(const std::string& sql) override;
  std::vector<std::string> query_stream(const std::string& sql, const RowSink& sink) override;
  std::vector<std::string> tables() override;
  TableSchema schema(const std::string& table) override;
  std::string dialect() const override { return "sqlite"; }
  std::string connection_string() const override { return "sqlite:" + path_; }

  /// Runs a script of statements with no result (fixtures, seeding).
  void execute_script(const std::string& sql);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string path_;
};

/// "sqlite:<path>", "sqlite::memory:" or a bare path. Never creates a missing file; throws
/// ConnectionFailed.
std::shared_ptr<Database> open_database(const std::string& connection, bool read_only = false);

/// Quotes an identifier for SQL text ("a""b").
std::string quote_identifier(const std::string& name);

}  // namespace kbsql
