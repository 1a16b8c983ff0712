#pragma once

#include <memory>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <vector>

namespace kbsql {

struct Identifier {
  std::string text;
  char quote = 0;  // 0, '"', '`' or '['
  bool operator==(const Identifier&) const = default;
};

struct Select;
struct WindowSpec;

struct Expr {
  enum class Kind {
    Literal,
    Column,
    Star,
    Function,
    Unary,
    Binary,
    Between,
    In,
    Like,
    IsNull,
    Is,
    Case,
    Cast,
    Subquery,
    Exists,
    Paren,
    Tuple,
    Opaque,
  };
  enum class LiteralKind { String, Number, Null, Boolean, Typed, Param };

  Kind kind = Kind::Opaque;
  /// Literal text as written, operator, function name, type name or opaque text.
  std::string text;
  LiteralKind literal = LiteralKind::String;
  std::vector<Identifier> path;  // Column / Star qualifiers, then the column name
  bool negated = false;
  bool distinct = false;
  bool has_operand = false;  // CASE x WHEN ...
  bool has_else = false;
  std::vector<Expr> args;
  std::shared_ptr<Select> subquery;
  std::shared_ptr<WindowSpec> over;
  std::optional<std::string> filter_where_text;
};

struct OrderItem {
  Expr expr;
  std::optional<std::string> direction;  // ASC / DESC as written
  std::optional<std::string> nulls;      // FIRST / LAST
};

struct WindowSpec {
  std::optional<Identifier> name_ref;
  std::vector<Expr> partition_by;
  std::vector<OrderItem> order_by;
  std::string frame;  // opaque frame clause
};

struct TableRef {
  std::vector<Identifier> name;  // schema-qualified path; empty for subqueries
  std::shared_ptr<Select> subquery;
  std::optional<Identifier> alias;
};

struct Join {
  std::string type;  // "JOIN", "LEFT JOIN", ..., or "," for comma joins
  TableRef table;
  std::optional<Expr> on;
  std::vector<Identifier> using_columns;
};

struct SelectItem {
  Expr expr;
  std::optional<Identifier> alias;
};

struct SelectCore {
  bool distinct = false;
  std::vector<SelectItem> items;
  std::optional<TableRef> from;
  std::vector<Join> joins;
  std::optional<Expr> where;
  std::vector<Expr> group_by;
  std::optional<Expr> having;
  std::string window_clause;  // opaque
};

struct Cte {
  Identifier name;
  std::vector<Identifier> columns;
  std::shared_ptr<Select> query;
};

struct SetOperation {
  std::string op;  // UNION, UNION ALL, INTERSECT, EXCEPT
  SelectCore core;
};

struct Select {
  bool recursive = false;
  std::vector<Cte> ctes;
  SelectCore core;
  std::vector<SetOperation> compound;
  std::vector<OrderItem> order_by;
  std::optional<Expr> limit;
  std::optional<Expr> offset;
};

struct Statement {
  std::shared_ptr<Select> select;  // null for opaque statements
  std::string opaque;
};

struct SqlAst {
  std::vector<Statement> statements;
};

/// Tolerant parser for the SELECT-centric subset (CTEs, joins, subqueries, CASE, window
/// functions, set operations). Function arguments it cannot parse are kept as opaque text;
/// INSERT/UPDATE/DELETE/CREATE statements are kept whole as opaque. Throws UnparsableSql.
SqlAst parse_sql_ast(const std::string& sql);

std::string to_sql(const SqlAst& ast);
std::string to_sql(const Select& select);
std::string to_sql(const Expr& expr);

// ---------------------------------------------------------------------------
// Entity extraction

struct ColumnUse {
  std::string table;  // resolved base table, empty when ambiguous
  std::string column;
  bool operator<(const ColumnUse& o) const { return std::tie(table, column) < std::tie(o.table, o.column); }
  bool operator==(const ColumnUse&) const = default;
};

struct PredicateUse {
  std::string table;
  std::string column;
  std::string op;     // =, <>, <, IN, LIKE, BETWEEN, ...
  std::vector<std::string> values;  // unquoted literal values
  std::string text;   // the predicate as SQL
};

struct SqlEntities {
  std::set<std::string> tables;
  std::set<ColumnUse> columns;
  std::vector<PredicateUse> predicates;
  std::vector<std::string> group_keys;
  std::vector<std::string> order_keys;
  bool has_limit = false;
};

/// Base tables, columns and column-vs-literal predicates of every statement. Aliases and CTE
/// names are resolved per scope; an unqualified column is attributed to the only base table
/// in scope. A double-quoted identifier on the value side of a comparison with a column counts
/// as a string value.
SqlEntities extract_entities(const SqlAst& ast);

/// Literal without quotes ('it''s' -> it's).
std::string unquote_literal(const std::string& literal);

}  // namespace kbsql
