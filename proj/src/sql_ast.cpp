#include "kbsql/sql_ast.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "kbsql/errors.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

namespace {

// ---------------------------------------------------------------------------
// Tokenizer

enum class Tok { Word, QuotedIdent, String, Number, Op, LParen, RParen, Comma, Dot, Semicolon, Param, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;   // raw text; unescaped content for quoted identifiers
  std::string upper;  // upper-cased words
  char quote = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

[[noreturn]] void unparsable(const std::string& what, std::size_t pos) {
  throw Error(ErrorCode::UnparsableSql, what + " at offset " + std::to_string(pos));
}

bool word_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || (c & 0x80); }
bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' || (c & 0x80); }

std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (s.compare(i, 2, "--") == 0) {
      while (i < n && s[i] != '\n') ++i;
      continue;
    }
    if (s.compare(i, 2, "/*") == 0) {
      auto close = s.find("*/", i + 2);
      if (close == std::string::npos) unparsable("unterminated comment", i);
      i = close + 2;
      continue;
    }
    Token t;
    t.begin = i;
    if (c == '\'') {
      std::size_t j = i + 1;
      for (;;) {
        if (j >= n) unparsable("unterminated string", i);
        if (s[j] == '\'') {
          if (j + 1 < n && s[j + 1] == '\'') {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      t.kind = Tok::String;
      t.text = s.substr(i, j + 1 - i);
      i = j + 1;
    } else if (c == '"' || c == '`' || c == '[') {
      char close = c == '[' ? ']' : c;
      std::string content;
      std::size_t j = i + 1;
      for (;;) {
        if (j >= n) unparsable("unterminated identifier", i);
        if (s[j] == close) {
          if (close != ']' && j + 1 < n && s[j + 1] == close) {
            content += close;
            j += 2;
            continue;
          }
          break;
        }
        content += s[j++];
      }
      t.kind = Tok::QuotedIdent;
      t.text = content;
      t.quote = c;
      i = j + 1;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j < n && s[j] == '.') {
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      }
      if (j < n && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < n && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < n && std::isdigit(static_cast<unsigned char>(s[k]))) {
          j = k;
          while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      t.kind = Tok::Number;
      t.text = s.substr(i, j - i);
      i = j;
    } else if (word_start(c)) {
      std::size_t j = i;
      while (j < n && word_char(s[j])) ++j;
      t.kind = Tok::Word;
      t.text = s.substr(i, j - i);
      t.upper = text::to_upper_ascii(t.text);
      i = j;
    } else if (c == '?' || c == '$' || (c == ':' && i + 1 < n && word_start(s[i + 1]))) {
      std::size_t j = i + 1;
      while (j < n && word_char(s[j])) ++j;
      t.kind = Tok::Param;
      t.text = s.substr(i, j - i);
      i = j;
    } else if (c == '(') {
      t.kind = Tok::LParen;
      t.text = "(";
      ++i;
    } else if (c == ')') {
      t.kind = Tok::RParen;
      t.text = ")";
      ++i;
    } else if (c == ',') {
      t.kind = Tok::Comma;
      t.text = ",";
      ++i;
    } else if (c == '.') {
      t.kind = Tok::Dot;
      t.text = ".";
      ++i;
    } else if (c == ';') {
      t.kind = Tok::Semicolon;
      t.text = ";";
      ++i;
    } else {
      static const char* two[] = {"<=", ">=", "<>", "!=", "==", "||", "::"};
      t.kind = Tok::Op;
      for (const char* op : two) {
        if (s.compare(i, 2, op) == 0) t.text = op;
      }
      if (t.text.empty()) {
        if (std::string("=<>+-*/%&|~").find(c) == std::string::npos) unparsable(std::string("unexpected '") + c + "'", i);
        t.text = std::string(1, c);
      }
      i += t.text.size();
    }
    t.end = i;
    out.push_back(std::move(t));
  }
  Token end;
  end.begin = end.end = n;
  out.push_back(end);
  return out;
}

const std::set<std::string>& reserved() {
  static const std::set<std::string> words{
      "ALL",    "AND",     "AS",       "ASC",     "BETWEEN", "BY",     "CASE",      "CAST",   "CROSS",  "DESC",
      "DISTINCT", "ELSE",  "END",      "ESCAPE",  "EXCEPT",  "EXISTS", "FETCH",     "FILTER", "FROM",   "FULL",
      "GLOB",   "GROUP",   "HAVING",   "ILIKE",   "IN",      "INNER",  "INTERSECT", "IS",     "JOIN",   "LEFT",
      "LIKE",   "LIMIT",   "NATURAL",  "NOT",     "NULL",    "NULLS",  "OFFSET",    "ON",     "OR",     "ORDER",
      "OUTER",  "OVER",    "PARTITION", "RECURSIVE", "REGEXP", "RIGHT", "SELECT",   "THEN",   "UNION",  "USING",
      "VALUES", "WHEN",    "WHERE",    "WINDOW",  "WITH"};
  return words;
}

bool is_comparison(const std::string& op) {
  return op == "=" || op == "==" || op == "<>" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=";
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(const std::string& sql) : src_(sql), toks_(tokenize(sql)) {}

  SqlAst parse() {
    SqlAst ast;
    for (;;) {
      while (peek().kind == Tok::Semicolon) ++pos_;
      if (peek().kind == Tok::End) break;
      Statement st;
      const Token& first = peek();
      if (first.kind == Tok::Word && (first.upper == "SELECT" || first.upper == "WITH")) {
        st.select = std::make_shared<Select>(parse_select());
      } else if (first.kind == Tok::Word && opaque_statement(first.upper)) {
        st.opaque = capture_statement();
      } else {
        unparsable("expected SELECT or WITH", first.begin);
      }
      if (peek().kind != Tok::Semicolon && peek().kind != Tok::End) {
        unparsable("unexpected '" + peek().text + "'", peek().begin);
      }
      ast.statements.push_back(std::move(st));
    }
    if (ast.statements.empty()) unparsable("empty statement", 0);
    return ast;
  }

 private:
  static bool opaque_statement(const std::string& w) {
    static const std::set<std::string> words{"INSERT", "UPDATE", "DELETE", "CREATE", "DROP",
                                             "ALTER",  "PRAGMA", "REPLACE", "BEGIN", "COMMIT"};
    return words.count(w) > 0;
  }

  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  bool is_word(const char* w, std::size_t k = 0) const {
    return peek(k).kind == Tok::Word && peek(k).upper == w;
  }
  bool accept_word(const char* w) {
    if (!is_word(w)) return false;
    ++pos_;
    return true;
  }
  void expect_word(const char* w) {
    if (!accept_word(w)) unparsable(std::string("expected ") + w, peek().begin);
  }
  bool accept(Tok kind) {
    if (peek().kind != kind) return false;
    ++pos_;
    return true;
  }
  void expect(Tok kind, const char* what) {
    if (!accept(kind)) unparsable(std::string("expected ") + what, peek().begin);
  }
  bool is_op(const char* op, std::size_t k = 0) const { return peek(k).kind == Tok::Op && peek(k).text == op; }

  std::string slice(std::size_t from_tok, std::size_t to_tok) const {
    if (from_tok >= to_tok) return "";
    return text::trim(src_.substr(toks_[from_tok].begin, toks_[to_tok - 1].end - toks_[from_tok].begin));
  }

  // Consumes through the ')' matching an already consumed '('; returns the inner text.
  std::string capture_group() {
    std::size_t start = pos_;
    int depth = 1;
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::LParen) ++depth;
      if (peek().kind == Tok::RParen && --depth == 0) {
        std::string inner = slice(start, pos_);
        ++pos_;
        return inner;
      }
      ++pos_;
    }
    unparsable("unbalanced parenthesis", peek().begin);
  }

  std::string capture_statement() {
    std::size_t start = pos_;
    int depth = 0;
    while (peek().kind != Tok::End && !(depth == 0 && peek().kind == Tok::Semicolon)) {
      if (peek().kind == Tok::LParen) ++depth;
      if (peek().kind == Tok::RParen) --depth;
      ++pos_;
    }
    return slice(start, pos_);
  }

  bool identifier_ahead(std::size_t k = 0) const {
    const Token& t = peek(k);
    return t.kind == Tok::QuotedIdent || (t.kind == Tok::Word && !reserved().count(t.upper));
  }
  Identifier identifier() {
    const Token& t = peek();
    if (!identifier_ahead()) unparsable("expected identifier", t.begin);
    ++pos_;
    return Identifier{t.text, t.quote};
  }
  std::optional<Identifier> alias() {
    if (accept_word("AS")) return identifier();
    if (identifier_ahead()) return identifier();
    return std::nullopt;
  }

  Select parse_select() {
    Select s;
    if (accept_word("WITH")) {
      s.recursive = accept_word("RECURSIVE");
      do {
        Cte cte;
        cte.name = identifier();
        if (accept(Tok::LParen)) {
          do cte.columns.push_back(identifier());
          while (accept(Tok::Comma));
          expect(Tok::RParen, ")");
        }
        expect_word("AS");
        if (accept_word("NOT")) expect_word("MATERIALIZED");
        else accept_word("MATERIALIZED");
        expect(Tok::LParen, "(");
        cte.query = std::make_shared<Select>(parse_select());
        expect(Tok::RParen, ")");
        s.ctes.push_back(std::move(cte));
      } while (accept(Tok::Comma));
    }
    s.core = parse_core();
    for (;;) {
      std::string op;
      if (accept_word("UNION")) op = accept_word("ALL") ? "UNION ALL" : "UNION";
      else if (accept_word("INTERSECT")) op = "INTERSECT";
      else if (accept_word("EXCEPT")) op = "EXCEPT";
      else break;
      s.compound.push_back({op, parse_core()});
    }
    if (accept_word("ORDER")) {
      expect_word("BY");
      s.order_by = order_list();
    }
    if (accept_word("LIMIT")) {
      Expr first = expr();
      if (accept(Tok::Comma)) {
        s.offset = std::move(first);
        s.limit = expr();
      } else {
        s.limit = std::move(first);
      }
    }
    if (accept_word("OFFSET")) {
      s.offset = expr();
      if (!accept_word("ROWS")) accept_word("ROW");
    }
    return s;
  }

  std::vector<OrderItem> order_list() {
    std::vector<OrderItem> items;
    do {
      OrderItem it;
      it.expr = expr();
      if (accept_word("ASC")) it.direction = "ASC";
      else if (accept_word("DESC")) it.direction = "DESC";
      if (accept_word("NULLS")) {
        if (accept_word("FIRST")) it.nulls = "FIRST";
        else if (accept_word("LAST")) it.nulls = "LAST";
        else unparsable("expected FIRST or LAST", peek().begin);
      }
      items.push_back(std::move(it));
    } while (accept(Tok::Comma));
    return items;
  }

  SelectCore parse_core() {
    SelectCore c;
    expect_word("SELECT");
    if (accept_word("DISTINCT")) c.distinct = true;
    else accept_word("ALL");
    do {
      SelectItem item;
      item.expr = expr();
      item.alias = alias();
      c.items.push_back(std::move(item));
    } while (accept(Tok::Comma));
    if (accept_word("FROM")) {
      c.from = table_ref();
      for (;;) {
        Join j;
        if (accept(Tok::Comma)) {
          j.type = ",";
        } else {
          std::string type;
          if (accept_word("NATURAL")) type += "NATURAL ";
          if (accept_word("LEFT")) type += "LEFT ";
          else if (accept_word("RIGHT")) type += "RIGHT ";
          else if (accept_word("FULL")) type += "FULL ";
          else if (accept_word("INNER")) type += "INNER ";
          else if (accept_word("CROSS")) type += "CROSS ";
          if (!type.empty() && type != "INNER " && type != "CROSS " && accept_word("OUTER")) type += "OUTER ";
          if (!accept_word("JOIN")) {
            if (!type.empty()) unparsable("expected JOIN", peek().begin);
            break;
          }
          j.type = type + "JOIN";
        }
        j.table = table_ref();
        if (accept_word("ON")) {
          j.on = expr();
        } else if (accept_word("USING")) {
          expect(Tok::LParen, "(");
          do j.using_columns.push_back(identifier());
          while (accept(Tok::Comma));
          expect(Tok::RParen, ")");
        }
        c.joins.push_back(std::move(j));
      }
    }
    if (accept_word("WHERE")) c.where = expr();
    if (accept_word("GROUP")) {
      expect_word("BY");
      do c.group_by.push_back(expr());
      while (accept(Tok::Comma));
    }
    if (accept_word("HAVING")) c.having = expr();
    if (accept_word("WINDOW")) {
      std::size_t start = pos_;
      int depth = 0;
      while (peek().kind != Tok::End && peek().kind != Tok::Semicolon) {
        if (depth == 0 && (is_word("ORDER") || is_word("LIMIT") || is_word("UNION") || is_word("INTERSECT") ||
                           is_word("EXCEPT") || peek().kind == Tok::RParen)) {
          break;
        }
        if (peek().kind == Tok::LParen) ++depth;
        if (peek().kind == Tok::RParen) --depth;
        ++pos_;
      }
      c.window_clause = slice(start, pos_);
    }
    return c;
  }

  TableRef table_ref() {
    TableRef t;
    if (accept(Tok::LParen)) {
      if (!is_word("SELECT") && !is_word("WITH")) unparsable("parenthesized joins are not supported", peek().begin);
      t.subquery = std::make_shared<Select>(parse_select());
      expect(Tok::RParen, ")");
    } else {
      t.name.push_back(identifier());
      while (accept(Tok::Dot)) t.name.push_back(identifier());
    }
    t.alias = alias();
    return t;
  }

  // Expressions, lowest precedence first.
  Expr expr() { return or_expr(); }

  static Expr binary(std::string op, Expr l, Expr r) {
    Expr e;
    e.kind = Expr::Kind::Binary;
    e.text = std::move(op);
    e.args.push_back(std::move(l));
    e.args.push_back(std::move(r));
    return e;
  }

  Expr or_expr() {
    Expr e = and_expr();
    while (accept_word("OR")) e = binary("OR", std::move(e), and_expr());
    return e;
  }
  Expr and_expr() {
    Expr e = not_expr();
    while (accept_word("AND")) e = binary("AND", std::move(e), not_expr());
    return e;
  }
  Expr not_expr() {
    if (is_word("NOT") && !is_word("EXISTS", 1)) {
      ++pos_;
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.text = "NOT";
      e.args.push_back(not_expr());
      return e;
    }
    return comparison();
  }

  Expr comparison() {
    Expr e = additive();
    for (;;) {
      if (peek().kind == Tok::Op && is_comparison(peek().text)) {
        std::string op = peek().text;
        ++pos_;
        e = binary(op, std::move(e), additive());
        continue;
      }
      if (accept_word("IS")) {
        bool neg = accept_word("NOT");
        Expr out;
        out.negated = neg;
        out.args.push_back(std::move(e));
        if (accept_word("NULL")) {
          out.kind = Expr::Kind::IsNull;
        } else {
          out.kind = Expr::Kind::Is;
          out.args.push_back(additive());
        }
        e = std::move(out);
        continue;
      }
      bool neg = false;
      if (is_word("NOT") && (is_word("BETWEEN", 1) || is_word("IN", 1) || is_word("LIKE", 1) || is_word("ILIKE", 1) ||
                             is_word("GLOB", 1) || is_word("REGEXP", 1))) {
        ++pos_;
        neg = true;
      }
      if (accept_word("BETWEEN")) {
        Expr out;
        out.kind = Expr::Kind::Between;
        out.negated = neg;
        out.args.push_back(std::move(e));
        out.args.push_back(additive());
        expect_word("AND");
        out.args.push_back(additive());
        e = std::move(out);
        continue;
      }
      if (accept_word("IN")) {
        Expr out;
        out.kind = Expr::Kind::In;
        out.negated = neg;
        out.args.push_back(std::move(e));
        expect(Tok::LParen, "(");
        if (is_word("SELECT") || is_word("WITH")) {
          out.subquery = std::make_shared<Select>(parse_select());
        } else if (peek().kind != Tok::RParen) {
          do out.args.push_back(expr());
          while (accept(Tok::Comma));
        }
        expect(Tok::RParen, ")");
        e = std::move(out);
        continue;
      }
      for (const char* kw : {"LIKE", "ILIKE", "GLOB", "REGEXP"}) {
        if (accept_word(kw)) {
          Expr out;
          out.kind = Expr::Kind::Like;
          out.text = kw;
          out.negated = neg;
          out.args.push_back(std::move(e));
          out.args.push_back(additive());
          if (accept_word("ESCAPE")) out.args.push_back(additive());
          e = std::move(out);
          neg = false;
          goto next;
        }
      }
      if (neg) unparsable("dangling NOT", peek().begin);
      return e;
    next:;
    }
  }

  Expr additive() {
    Expr e = multiplicative();
    while (is_op("+") || is_op("-") || is_op("||") || is_op("&") || is_op("|")) {
      std::string op = peek().text;
      ++pos_;
      e = binary(op, std::move(e), multiplicative());
    }
    return e;
  }
  Expr multiplicative() {
    Expr e = unary();
    while (is_op("*") || is_op("/") || is_op("%")) {
      std::string op = peek().text;
      ++pos_;
      e = binary(op, std::move(e), unary());
    }
    return e;
  }
  Expr unary() {
    if (is_op("-") || is_op("+") || is_op("~")) {
      Expr e;
      e.kind = Expr::Kind::Unary;
      e.text = peek().text;
      ++pos_;
      e.args.push_back(unary());
      return e;
    }
    Expr e = primary();
    while (is_op("::")) {
      ++pos_;
      Expr cast;
      cast.kind = Expr::Kind::Cast;
      cast.text = type_name();
      cast.args.push_back(std::move(e));
      e = std::move(cast);
    }
    return e;
  }

  std::string type_name() {
    std::size_t start = pos_;
    if (peek().kind != Tok::Word && peek().kind != Tok::QuotedIdent) unparsable("expected type name", peek().begin);
    ++pos_;
    while (peek().kind == Tok::Word && !reserved().count(peek().upper)) ++pos_;  // DOUBLE PRECISION
    if (accept(Tok::LParen)) capture_group();
    return slice(start, pos_);
  }

  Expr primary() {
    const Token& t = peek();
    Expr e;
    switch (t.kind) {
      case Tok::Number:
        ++pos_;
        e.kind = Expr::Kind::Literal;
        e.literal = Expr::LiteralKind::Number;
        e.text = t.text;
        return e;
      case Tok::String:
        ++pos_;
        e.kind = Expr::Kind::Literal;
        e.literal = Expr::LiteralKind::String;
        e.text = t.text;
        return e;
      case Tok::Param:
        ++pos_;
        e.kind = Expr::Kind::Literal;
        e.literal = Expr::LiteralKind::Param;
        e.text = t.text;
        return e;
      case Tok::Op:
        if (t.text == "*") {
          ++pos_;
          e.kind = Expr::Kind::Star;
          return e;
        }
        break;
      case Tok::LParen: {
        ++pos_;
        if (is_word("SELECT") || is_word("WITH")) {
          e.kind = Expr::Kind::Subquery;
          e.subquery = std::make_shared<Select>(parse_select());
          expect(Tok::RParen, ")");
          return e;
        }
        Expr inner = expr();
        if (accept(Tok::Comma)) {
          e.kind = Expr::Kind::Tuple;
          e.args.push_back(std::move(inner));
          do e.args.push_back(expr());
          while (accept(Tok::Comma));
        } else {
          e.kind = Expr::Kind::Paren;
          e.args.push_back(std::move(inner));
        }
        expect(Tok::RParen, ")");
        return e;
      }
      case Tok::Word:
        return word_primary();
      case Tok::QuotedIdent:
        if (peek(1).kind == Tok::LParen) return function_call();
        return column_path();
      default:
        break;
    }
    unparsable("unexpected '" + t.text + "'", t.begin);
  }

  Expr word_primary() {
    const Token& t = peek();
    Expr e;
    const std::string& w = t.upper;
    if (w == "NULL" || w == "TRUE" || w == "FALSE") {
      ++pos_;
      e.kind = Expr::Kind::Literal;
      e.literal = w == "NULL" ? Expr::LiteralKind::Null : Expr::LiteralKind::Boolean;
      e.text = w;
      return e;
    }
    if ((w == "DATE" || w == "TIME" || w == "TIMESTAMP" || w == "INTERVAL") && peek(1).kind == Tok::String) {
      e.kind = Expr::Kind::Literal;
      e.literal = Expr::LiteralKind::Typed;
      e.text = w + " " + peek(1).text;
      pos_ += 2;
      return e;
    }
    if (w == "CURRENT_DATE" || w == "CURRENT_TIME" || w == "CURRENT_TIMESTAMP") {
      ++pos_;
      e.kind = Expr::Kind::Literal;
      e.literal = Expr::LiteralKind::Typed;
      e.text = w;
      return e;
    }
    if (w == "CASE") {
      ++pos_;
      e.kind = Expr::Kind::Case;
      if (!is_word("WHEN")) {
        e.has_operand = true;
        e.args.push_back(expr());
      }
      if (!is_word("WHEN")) unparsable("expected WHEN", peek().begin);
      while (accept_word("WHEN")) {
        e.args.push_back(expr());
        expect_word("THEN");
        e.args.push_back(expr());
      }
      if (accept_word("ELSE")) {
        e.has_else = true;
        e.args.push_back(expr());
      }
      expect_word("END");
      return e;
    }
    if (w == "CAST" && peek(1).kind == Tok::LParen) {
      pos_ += 2;
      e.kind = Expr::Kind::Cast;
      e.args.push_back(expr());
      expect_word("AS");
      std::size_t start = pos_;
      e.text = capture_group();
      if (e.text.empty()) unparsable("expected type name", toks_[start].begin);
      return e;
    }
    if (w == "EXISTS" || (w == "NOT" && is_word("EXISTS", 1))) {
      e.negated = w == "NOT";
      pos_ += e.negated ? 2 : 1;
      e.kind = Expr::Kind::Exists;
      expect(Tok::LParen, "(");
      e.subquery = std::make_shared<Select>(parse_select());
      expect(Tok::RParen, ")");
      return e;
    }
    if (peek(1).kind == Tok::LParen && (!reserved().count(w) || w == "LEFT" || w == "RIGHT")) {
      return function_call();
    }
    if (reserved().count(w)) unparsable("unexpected keyword " + t.text, t.begin);
    return column_path();
  }

  Expr column_path() {
    Expr e;
    e.kind = Expr::Kind::Column;
    e.path.push_back(Identifier{peek().text, peek().quote});
    ++pos_;
    while (peek().kind == Tok::Dot) {
      ++pos_;
      if (is_op("*")) {
        ++pos_;
        e.kind = Expr::Kind::Star;
        return e;
      }
      if (peek().kind != Tok::Word && peek().kind != Tok::QuotedIdent) unparsable("expected name", peek().begin);
      e.path.push_back(Identifier{peek().text, peek().quote});
      ++pos_;
    }
    return e;
  }

  Expr function_call() {
    Expr e;
    e.kind = Expr::Kind::Function;
    e.text = peek().quote ? "\"" + peek().text + "\"" : peek().text;
    pos_ += 2;  // name and '('
    std::size_t args_start = pos_;
    try {
      if (!accept(Tok::RParen)) {
        if (accept_word("DISTINCT")) e.distinct = true;
        do e.args.push_back(expr());
        while (accept(Tok::Comma));
        expect(Tok::RParen, ")");
      }
    } catch (const Error& err) {
      if (err.code() != ErrorCode::UnparsableSql) throw;
      pos_ = args_start;
      e.args.clear();
      e.distinct = false;
      Expr opaque;
      opaque.kind = Expr::Kind::Opaque;
      opaque.text = capture_group();
      e.args.push_back(std::move(opaque));
    }
    if (is_word("FILTER") && peek(1).kind == Tok::LParen) {
      pos_ += 2;
      e.filter_where_text = capture_group();
    }
    if (accept_word("OVER")) {
      auto w = std::make_shared<WindowSpec>();
      if (!accept(Tok::LParen)) {
        w->name_ref = identifier();
      } else {
        if (identifier_ahead() && !is_word("ROWS") && !is_word("RANGE") && !is_word("GROUPS")) {
          w->name_ref = identifier();
        }
        if (accept_word("PARTITION")) {
          expect_word("BY");
          do w->partition_by.push_back(expr());
          while (accept(Tok::Comma));
        }
        if (accept_word("ORDER")) {
          expect_word("BY");
          w->order_by = order_list();
        }
        if (peek().kind != Tok::RParen) {
          w->frame = capture_group();
        } else {
          ++pos_;
        }
      }
      e.over = std::move(w);
    }
    return e;
  }

  const std::string& src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Serializer

std::string ident(const Identifier& id) {
  if (!id.quote) return id.text;
  char close = id.quote == '[' ? ']' : id.quote;
  std::string out(1, id.quote);
  for (char c : id.text) {
    out += c;
    if (c == close && close != ']') out += c;
  }
  return out + close;
}

std::string path_sql(const std::vector<Identifier>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) out += (i ? "." : "") + ident(path[i]);
  return out;
}

std::string list_sql(const std::vector<Expr>& exprs, std::size_t from = 0) {
  std::string out;
  for (std::size_t i = from; i < exprs.size(); ++i) out += (i > from ? ", " : "") + to_sql(exprs[i]);
  return out;
}

std::string order_sql(const std::vector<OrderItem>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += (i ? ", " : "") + to_sql(items[i].expr);
    if (items[i].direction) out += " " + *items[i].direction;
    if (items[i].nulls) out += " NULLS " + *items[i].nulls;
  }
  return out;
}

std::string table_sql(const TableRef& t) {
  std::string out = t.subquery ? "(" + to_sql(*t.subquery) + ")" : path_sql(t.name);
  if (t.alias) out += " AS " + ident(*t.alias);
  return out;
}

std::string core_sql(const SelectCore& c) {
  std::string out = "SELECT ";
  if (c.distinct) out += "DISTINCT ";
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    out += (i ? ", " : "") + to_sql(c.items[i].expr);
    if (c.items[i].alias) out += " AS " + ident(*c.items[i].alias);
  }
  if (c.from) {
    out += " FROM " + table_sql(*c.from);
    for (const auto& j : c.joins) {
      out += j.type == "," ? ", " : " " + j.type + " ";
      out += table_sql(j.table);
      if (j.on) out += " ON " + to_sql(*j.on);
      if (!j.using_columns.empty()) {
        out += " USING (";
        for (std::size_t i = 0; i < j.using_columns.size(); ++i) out += (i ? ", " : "") + ident(j.using_columns[i]);
        out += ")";
      }
    }
  }
  if (c.where) out += " WHERE " + to_sql(*c.where);
  if (!c.group_by.empty()) out += " GROUP BY " + list_sql(c.group_by);
  if (c.having) out += " HAVING " + to_sql(*c.having);
  if (!c.window_clause.empty()) out += " WINDOW " + c.window_clause;
  return out;
}

}  // namespace

SqlAst parse_sql_ast(const std::string& sql) { return Parser(sql).parse(); }

std::string to_sql(const Expr& e) {
  using K = Expr::Kind;
  switch (e.kind) {
    case K::Literal:
    case K::Opaque: return e.text;
    case K::Column: return path_sql(e.path);
    case K::Star: return e.path.empty() ? "*" : path_sql(e.path) + ".*";
    case K::Function: {
      std::string out = e.text + "(" + (e.distinct ? "DISTINCT " : "") + list_sql(e.args) + ")";
      if (e.filter_where_text) out += " FILTER (" + *e.filter_where_text + ")";
      if (e.over) {
        const auto& w = *e.over;
        if (w.name_ref && w.partition_by.empty() && w.order_by.empty() && w.frame.empty()) {
          out += " OVER " + ident(*w.name_ref);
        } else {
          std::vector<std::string> parts;
          if (w.name_ref) parts.push_back(ident(*w.name_ref));
          if (!w.partition_by.empty()) parts.push_back("PARTITION BY " + list_sql(w.partition_by));
          if (!w.order_by.empty()) parts.push_back("ORDER BY " + order_sql(w.order_by));
          if (!w.frame.empty()) parts.push_back(w.frame);
          out += " OVER (" + text::join(parts, " ") + ")";
        }
      }
      return out;
    }
    case K::Unary: return e.text == "NOT" ? "NOT " + to_sql(e.args[0]) : e.text + to_sql(e.args[0]);
    case K::Binary: return to_sql(e.args[0]) + " " + e.text + " " + to_sql(e.args[1]);
    case K::Between:
      return to_sql(e.args[0]) + (e.negated ? " NOT" : "") + " BETWEEN " + to_sql(e.args[1]) + " AND " +
             to_sql(e.args[2]);
    case K::In: {
      std::string inner = e.subquery ? to_sql(*e.subquery) : list_sql(e.args, 1);
      return to_sql(e.args[0]) + (e.negated ? " NOT" : "") + " IN (" + inner + ")";
    }
    case K::Like: {
      std::string out = to_sql(e.args[0]) + (e.negated ? " NOT " : " ") + e.text + " " + to_sql(e.args[1]);
      if (e.args.size() > 2) out += " ESCAPE " + to_sql(e.args[2]);
      return out;
    }
    case K::IsNull: return to_sql(e.args[0]) + (e.negated ? " IS NOT NULL" : " IS NULL");
    case K::Is: return to_sql(e.args[0]) + (e.negated ? " IS NOT " : " IS ") + to_sql(e.args[1]);
    case K::Case: {
      std::string out = "CASE";
      std::size_t i = 0;
      if (e.has_operand) out += " " + to_sql(e.args[i++]);
      std::size_t whens_end = e.args.size() - (e.has_else ? 1 : 0);
      for (; i + 1 < whens_end + 1 && i < whens_end; i += 2) {
        out += " WHEN " + to_sql(e.args[i]) + " THEN " + to_sql(e.args[i + 1]);
      }
      if (e.has_else) out += " ELSE " + to_sql(e.args.back());
      return out + " END";
    }
    case K::Cast: return "CAST(" + to_sql(e.args[0]) + " AS " + e.text + ")";
    case K::Subquery: return "(" + to_sql(*e.subquery) + ")";
    case K::Exists: return std::string(e.negated ? "NOT " : "") + "EXISTS (" + to_sql(*e.subquery) + ")";
    case K::Paren: return "(" + to_sql(e.args[0]) + ")";
    case K::Tuple: return "(" + list_sql(e.args) + ")";
  }
  return e.text;
}

std::string to_sql(const Select& s) {
  std::string out;
  if (!s.ctes.empty()) {
    out += s.recursive ? "WITH RECURSIVE " : "WITH ";
    for (std::size_t i = 0; i < s.ctes.size(); ++i) {
      const auto& c = s.ctes[i];
      out += (i ? ", " : "") + ident(c.name);
      if (!c.columns.empty()) {
        out += " (";
        for (std::size_t k = 0; k < c.columns.size(); ++k) out += (k ? ", " : "") + ident(c.columns[k]);
        out += ")";
      }
      out += " AS (" + to_sql(*c.query) + ")";
    }
    out += " ";
  }
  out += core_sql(s.core);
  for (const auto& op : s.compound) out += " " + op.op + " " + core_sql(op.core);
  if (!s.order_by.empty()) out += " ORDER BY " + order_sql(s.order_by);
  if (s.limit) out += " LIMIT " + to_sql(*s.limit);
  if (s.offset) out += " OFFSET " + to_sql(*s.offset);
  return out;
}

std::string to_sql(const SqlAst& ast) {
  std::vector<std::string> parts;
  for (const auto& st : ast.statements) parts.push_back(st.select ? to_sql(*st.select) : st.opaque);
  return text::join(parts, ";\n");
}

std::string unquote_literal(const std::string& literal) {
  if (literal.size() >= 2 && literal.front() == '\'' && literal.back() == '\'') {
    std::string out;
    for (std::size_t i = 1; i + 1 < literal.size(); ++i) {
      out += literal[i];
      if (literal[i] == '\'' && i + 2 < literal.size() && literal[i + 1] == '\'') ++i;
    }
    return out;
  }
  return literal;
}

// ---------------------------------------------------------------------------
// Entity extraction

namespace {

struct Scope {
  std::map<std::string, std::string> aliases;  // lower alias -> base table ("" for derived)
  std::set<std::string> select_aliases;         // lower
  const Scope* outer = nullptr;

  std::optional<std::string> lookup(const std::string& qualifier) const {
    for (const Scope* s = this; s; s = s->outer) {
      auto it = s->aliases.find(text::to_lower_ascii(qualifier));
      if (it != s->aliases.end()) return it->second;
    }
    return std::nullopt;
  }
  std::string single_base() const {
    std::set<std::string> bases;
    for (const auto& [_, t] : aliases) {
      if (t.empty()) return "";
      bases.insert(t);
    }
    return bases.size() == 1 ? *bases.begin() : "";
  }
};

class Extractor {
 public:
  explicit Extractor(SqlEntities& out) : out_(out) {}

  void select(const Select& s, const Scope* outer, std::set<std::string> ctes) {
    for (const auto& c : s.ctes) {
      select(*c.query, outer, ctes);
      ctes.insert(text::to_lower_ascii(c.name.text));
    }
    Scope main = core(s.core, outer, ctes);
    for (const auto& op : s.compound) core(op.core, outer, ctes);
    for (const auto& o : s.order_by) {
      walk(o.expr, main, true);
      if (outer == nullptr) out_.order_keys.push_back(to_sql(o.expr));
    }
    if (s.limit && outer == nullptr) out_.has_limit = true;
  }

 private:
  Scope core(const SelectCore& c, const Scope* outer, const std::set<std::string>& ctes) {
    Scope scope;
    scope.outer = outer;
    auto add_ref = [&](const TableRef& t) {
      if (t.subquery) {
        select(*t.subquery, outer, ctes);
        if (t.alias) scope.aliases[text::to_lower_ascii(t.alias->text)] = "";
        return;
      }
      const std::string& name = t.name.back().text;
      bool is_cte = t.name.size() == 1 && ctes.count(text::to_lower_ascii(name));
      if (!is_cte) out_.tables.insert(name);
      std::string key = text::to_lower_ascii(t.alias ? t.alias->text : name);
      scope.aliases[key] = is_cte ? "" : name;
    };
    if (c.from) add_ref(*c.from);
    for (const auto& j : c.joins) add_ref(j.table);
    for (const auto& item : c.items) {
      if (item.alias) scope.select_aliases.insert(text::to_lower_ascii(item.alias->text));
    }
    for (const auto& item : c.items) walk(item.expr, scope, false);
    for (const auto& j : c.joins) {
      if (j.on) walk(j.on.value(), scope, false);
    }
    if (c.where) walk(*c.where, scope, false);
    for (const auto& g : c.group_by) {
      walk(g, scope, true);
      if (outer == nullptr) out_.group_keys.push_back(to_sql(g));
    }
    if (c.having) walk(*c.having, scope, true);
    return scope;
  }

  std::optional<ColumnUse> resolve(const Expr& col, const Scope& scope, bool allow_alias) const {
    if (col.kind != Expr::Kind::Column || col.path.empty()) return std::nullopt;
    const std::string& name = col.path.back().text;
    if (col.path.size() == 1) {
      if (allow_alias && scope.select_aliases.count(text::to_lower_ascii(name))) return std::nullopt;
      return ColumnUse{scope.single_base(), name};
    }
    auto table = scope.lookup(col.path[col.path.size() - 2].text);
    return ColumnUse{table.value_or(""), name};
  }

  static bool literal_value(const Expr& e, std::string& value) {
    if (e.kind == Expr::Kind::Literal &&
        (e.literal == Expr::LiteralKind::String || e.literal == Expr::LiteralKind::Number ||
         e.literal == Expr::LiteralKind::Boolean || e.literal == Expr::LiteralKind::Typed)) {
      value = e.literal == Expr::LiteralKind::String ? unquote_literal(e.text) : e.text;
      return true;
    }
    if (e.kind == Expr::Kind::Unary && e.text == "-" && e.args[0].kind == Expr::Kind::Literal &&
        e.args[0].literal == Expr::LiteralKind::Number) {
      value = "-" + e.args[0].text;
      return true;
    }
    return false;
  }

  static bool quoted_value(const Expr& e, std::string& value) {
    if (e.kind == Expr::Kind::Column && e.path.size() == 1 && e.path[0].quote == '"') {
      value = e.path[0].text;
      return true;
    }
    return false;
  }

  static std::string flip(const std::string& op) {
    if (op == "<") return ">";
    if (op == ">") return "<";
    if (op == "<=") return ">=";
    if (op == ">=") return "<=";
    return op;
  }

  void add_column(const ColumnUse& c) { out_.columns.insert(c); }

  void add_predicate(const ColumnUse& col, std::string op, std::vector<std::string> values, const Expr& e) {
    out_.predicates.push_back({col.table, col.column, std::move(op), std::move(values), to_sql(e)});
  }

  void walk(const Expr& e, const Scope& scope, bool allow_alias) {
    using K = Expr::Kind;
    switch (e.kind) {
      case K::Column:
        if (auto c = resolve(e, scope, allow_alias)) add_column(*c);
        return;
      case K::Subquery:
      case K::Exists:
        select(*e.subquery, &scope, {});
        return;
      case K::Binary:
        if (is_comparison(e.text)) {
          std::string value;
          const Expr& l = e.args[0];
          const Expr& r = e.args[1];
          auto lc = resolve(l, scope, allow_alias);
          auto rc = resolve(r, scope, allow_alias);
          if (lc && (literal_value(r, value) || quoted_value(r, value))) {
            add_column(*lc);
            add_predicate(*lc, e.text == "==" ? "=" : e.text, {value}, e);
            return;
          }
          if (rc && literal_value(l, value)) {
            add_column(*rc);
            add_predicate(*rc, flip(e.text == "==" ? "=" : e.text), {value}, e);
            return;
          }
        }
        break;
      case K::In:
        if (auto c = resolve(e.args[0], scope, allow_alias); c && !e.subquery) {
          std::vector<std::string> values;
          std::string v;
          bool all = e.args.size() > 1;
          for (std::size_t i = 1; i < e.args.size(); ++i) {
            if (literal_value(e.args[i], v)) values.push_back(v);
            else all = false;
          }
          if (all) {
            add_column(*c);
            add_predicate(*c, e.negated ? "NOT IN" : "IN", values, e);
            return;
          }
        }
        break;
      case K::Like:
        if (auto c = resolve(e.args[0], scope, allow_alias)) {
          std::string v;
          if (literal_value(e.args[1], v)) {
            add_column(*c);
            add_predicate(*c, (e.negated ? "NOT " : "") + e.text, {v}, e);
            return;
          }
        }
        break;
      case K::Between:
        if (auto c = resolve(e.args[0], scope, allow_alias)) {
          std::string lo, hi;
          if (literal_value(e.args[1], lo) && literal_value(e.args[2], hi)) {
            add_column(*c);
            add_predicate(*c, e.negated ? "NOT BETWEEN" : "BETWEEN", {lo, hi}, e);
            return;
          }
        }
        break;
      case K::Function:
        if (e.over) {
          for (const auto& p : e.over->partition_by) walk(p, scope, allow_alias);
          for (const auto& o : e.over->order_by) walk(o.expr, scope, allow_alias);
        }
        break;
      default:
        break;
    }
    for (const auto& a : e.args) walk(a, scope, allow_alias);
    if (e.subquery) select(*e.subquery, &scope, {});
  }

  SqlEntities& out_;
};

}  // namespace

SqlEntities extract_entities(const SqlAst& ast) {
  SqlEntities out;
  Extractor ex(out);
  for (const auto& st : ast.statements) {
    if (st.select) ex.select(*st.select, nullptr, {});
  }
  return out;
}

}  // namespace kbsql
