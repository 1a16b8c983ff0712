#include "kbsql/database.hpp"

#include <cmath>
#include <cstdio>

#include "kbsql/errors.hpp"
#include "kbsql/text.hpp"
#include "sqlite_handle.hpp"

namespace kbsql {

bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }

bool is_numeric(const Value& v) {
  return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v);
}

std::optional<double> as_double(const Value& v) {
  if (auto p = std::get_if<std::int64_t>(&v)) return static_cast<double>(*p);
  if (auto p = std::get_if<double>(&v)) return *p;
  if (auto p = std::get_if<bool>(&v)) return *p ? 1.0 : 0.0;
  return std::nullopt;
}

namespace {

std::string format_double(double d) {
  if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", d);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  // Shortest form that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char tmp[40];
    std::snprintf(tmp, sizeof tmp, "%.*g", prec, d);
    if (std::strtod(tmp, nullptr) == d) return tmp;
  }
  return buf;
}

std::string hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 15]);
  }
  return out;
}

}  // namespace

std::string value_to_string(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "NULL"; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return format_double(d); }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(const Blob& b) const { return "x'" + hex(b.bytes) + "'"; }
  };
  return std::visit(Visitor{}, v);
}

json value_to_json(const Value& v) {
  struct Visitor {
    json operator()(std::monostate) const { return nullptr; }
    json operator()(bool b) const { return b; }
    json operator()(std::int64_t i) const { return i; }
    json operator()(double d) const { return std::isfinite(d) ? json(d) : json(format_double(d)); }
    json operator()(const std::string& s) const { return s; }
    json operator()(const Blob& b) const { return "x'" + hex(b.bytes) + "'"; }
  };
  return std::visit(Visitor{}, v);
}

Value value_from_json(const json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_unsigned()) return static_cast<std::int64_t>(j.get<std::uint64_t>());
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

std::string quote_identifier(const std::string& name) {
  return "\"" + text::replace_all(name, "\"", "\"\"") + "\"";
}

// ---------------------------------------------------------------------------

struct SqliteDatabase::Impl {
  detail::SqliteHandle db;
  std::mutex mutex;
};

SqliteDatabase::SqliteDatabase(const std::string& path, Mode mode) : impl_(std::make_unique<Impl>()), path_(path) {
  int flags = SQLITE_OPEN_URI | SQLITE_OPEN_FULLMUTEX;
  switch (mode) {
    case Mode::Create: flags |= SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE; break;
    case Mode::ReadWrite: flags |= SQLITE_OPEN_READWRITE; break;
    case Mode::ReadOnly: flags |= SQLITE_OPEN_READONLY; break;
  }
  impl_->db = detail::open_sqlite(path, flags);
}

SqliteDatabase::~SqliteDatabase() = default;

namespace {

std::string sqlstate_for(int code, const std::string& msg) {
  if (msg.find("syntax error") != std::string::npos || msg.find("incomplete input") != std::string::npos)
    return "42601";
  if (msg.find("no such table") != std::string::npos) return "42P01";
  if (msg.find("no such column") != std::string::npos) return "42703";
  if (msg.find("no such function") != std::string::npos) return "42883";
  if (msg.find("ambiguous column") != std::string::npos) return "42702";
  if ((code & 0xFF) == SQLITE_CONSTRAINT) return "23000";
  if ((code & 0xFF) == SQLITE_READONLY) return "25006";
  return "HY000";
}

[[noreturn]] void throw_sql(sqlite3* db) {
  std::string msg = sqlite3_errmsg(db);
  throw SqlFailure({msg, sqlstate_for(sqlite3_extended_errcode(db), msg)});
}

Value read_value(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_NULL: return std::monostate{};
    case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt, col));
    case SQLITE_FLOAT: return sqlite3_column_double(stmt, col);
    case SQLITE_BLOB: {
      const void* p = sqlite3_column_blob(stmt, col);
      int n = sqlite3_column_bytes(stmt, col);
      return Blob{p ? std::string(static_cast<const char*>(p), n) : std::string()};
    }
    default: return detail::column_text(stmt, col);
  }
}

}  // namespace

std::vector<std::string> SqliteDatabase::query_stream(const std::string& sql, const RowSink& sink) {
  std::lock_guard lock(impl_->mutex);
  sqlite3* db = impl_->db.get();
  const char* tail = sql.c_str();
  const char* end = sql.c_str() + sql.size();
  std::vector<std::string> columns;
  bool produced = false;
  // Multi-statement text: every statement runs, the last one producing rows wins the columns.
  while (tail < end) {
    sqlite3_stmt* raw = nullptr;
    if (sqlite3_prepare_v2(db, tail, static_cast<int>(end - tail), &raw, &tail) != SQLITE_OK) throw_sql(db);
    if (!raw) break;  // trailing whitespace or comment
    detail::StmtHandle stmt(raw);
    int ncol = sqlite3_column_count(raw);
    if (ncol > 0) {
      columns.clear();
      for (int c = 0; c < ncol; ++c) columns.emplace_back(sqlite3_column_name(raw, c));
      produced = true;
    }
    Row row(static_cast<std::size_t>(ncol));
    for (;;) {
      int rc = sqlite3_step(raw);
      if (rc == SQLITE_DONE) break;
      if (rc != SQLITE_ROW) throw_sql(db);
      for (int c = 0; c < ncol; ++c) row[c] = read_value(raw, c);
      if (sink) sink(row);
    }
  }
  if (!produced && text::trim(sql).empty()) throw SqlFailure({"empty statement", "42601"});
  return columns;
}

QueryResult SqliteDatabase::query(const std::string& sql) {
  QueryResult result;
  result.columns = query_stream(sql, [&](const Row& r) { result.rows.push_back(r); });
  return result;
}

void SqliteDatabase::execute_script(const std::string& sql) {
  std::lock_guard lock(impl_->mutex);
  detail::exec(impl_->db.get(), sql);
}

std::vector<std::string> SqliteDatabase::tables() {
  auto r = query("SELECT name FROM sqlite_master WHERE type IN ('table','view') AND name NOT LIKE 'sqlite_%' "
                 "ORDER BY name");
  std::vector<std::string> out;
  for (const auto& row : r.rows) out.push_back(value_to_string(row[0]));
  return out;
}

TableSchema SqliteDatabase::schema(const std::string& table) {
  TableSchema s;
  s.name = table;
  auto cols = query("SELECT name, type, \"notnull\", pk FROM pragma_table_info(" +
                    std::string("'") + text::replace_all(table, "'", "''") + "')");
  if (cols.rows.empty()) throw Error(ErrorCode::UnknownColumn, "unknown table '" + table + "'");
  for (const auto& row : cols.rows) {
    ColumnInfo c;
    c.name = value_to_string(row[0]);
    c.declared_type = is_null(row[1]) ? "" : value_to_string(row[1]);
    c.not_null = as_double(row[2]).value_or(0) != 0;
    c.is_pk = as_double(row[3]).value_or(0) != 0;
    s.columns.push_back(std::move(c));
  }
  auto fks = query("SELECT \"from\", \"table\", \"to\" FROM pragma_foreign_key_list('" +
                   text::replace_all(table, "'", "''") + "')");
  for (const auto& row : fks.rows) {
    ForeignKey fk{value_to_string(row[0]), value_to_string(row[1]), is_null(row[2]) ? "" : value_to_string(row[2])};
    s.foreign_keys.push_back(fk);
    for (auto& c : s.columns) {
      if (c.name == fk.column) c.fk = fk;
    }
  }
  return s;
}

std::shared_ptr<Database> open_database(const std::string& connection, bool read_only) {
  std::string path = connection;
  if (text::starts_with_ci(connection, "sqlite:")) {
    path = connection.substr(7);
    if (path.rfind("//", 0) == 0) path = path.substr(2);
  } else if (connection.find("://") != std::string::npos) {
    throw Error(ErrorCode::ConnectionFailed, "no driver for connection '" + connection + "'");
  }
  if (path.empty()) throw Error(ErrorCode::ConnectionFailed, "empty database path");
  if (path == ":memory:") return std::make_shared<SqliteDatabase>(path, SqliteDatabase::Mode::Create);
  return std::make_shared<SqliteDatabase>(path, read_only ? SqliteDatabase::Mode::ReadOnly
                                                          : SqliteDatabase::Mode::ReadWrite);
}

}  // namespace kbsql
