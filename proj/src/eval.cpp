#include "kbsql/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <limits>
#include <regex>
#include <sstream>

#include "kbsql/errors.hpp"
#include "kbsql/hash.hpp"
#include "kbsql/parallel.hpp"
#include "kbsql/profiler.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

namespace {

const std::regex& numeric_re() {
  static const std::regex re(R"(^[+-]?((\d+(\.\d*)?)|(\.\d+))([eE][+-]?\d+)?$)");
  return re;
}

const std::regex& datetime_re() {
  static const std::regex re(
      R"(^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?)?(Z|[+-]\d{2}:?\d{2})?$)");
  return re;
}

Cell number_cell(const Decimal& d) {
  Cell c;
  c.kind = Cell::Kind::Number;
  c.number = d;
  return c;
}

Cell text_cell(std::string s) {
  Cell c;
  c.kind = Cell::Kind::Text;
  c.text = std::move(s);
  return c;
}

Cell cell_from_text(const std::string& raw) {
  std::string t = text::trim(raw);
  if (!t.empty() && std::regex_match(t, numeric_re())) return number_cell(Decimal(t));
  if (t.size() >= 10 && std::regex_match(t, datetime_re())) {
    if (auto ts = parse_rfc3339(t)) {
      Cell c;
      c.kind = Cell::Kind::DateTime;
      c.time = *ts;
      return c;
    }
  }
  return text_cell(std::move(t));
}

std::optional<Decimal> numeric_view(const Cell& c) {
  if (c.kind == Cell::Kind::Number) return c.number;
  if (c.kind == Cell::Kind::Boolean) return Decimal(c.boolean ? 1 : 0);
  return std::nullopt;
}

std::string number_key(const Decimal& d) {
  double x = d.convert_to<double>();
  char buf[48];
  if (std::fabs(x) < 1.0) {
    std::snprintf(buf, sizeof buf, "%.6f", x);
    if (std::string(buf) == "-0.000000") return "0.000000";
  } else {
    std::snprintf(buf, sizeof buf, "%.6e", x);
  }
  return buf;
}

std::string cell_key(const Cell& c) {
  switch (c.kind) {
    case Cell::Kind::Null: return "N";
    case Cell::Kind::Boolean: return "#" + number_key(Decimal(c.boolean ? 1 : 0));
    case Cell::Kind::Number: return "#" + number_key(c.number);
    case Cell::Kind::Text: return "T" + c.text;
    case Cell::Kind::DateTime: return "D" + std::to_string(c.time.time_since_epoch().count());
  }
  return "?";
}

std::string row_key(const CellRow& row) {
  std::string out;
  for (const auto& c : row) append_field(out, cell_key(c));
  return out;
}

bool rows_equal(const CellRow& a, const CellRow& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!cells_equal(a[i], b[i])) return false;
  }
  return true;
}

bool member(const Cell& c, const CellRow& row) {
  return std::any_of(row.begin(), row.end(), [&](const Cell& x) { return cells_equal(c, x); });
}

}  // namespace

std::string Cell::to_string() const {
  switch (kind) {
    case Kind::Null: return "NULL";
    case Kind::Boolean: return boolean ? "true" : "false";
    case Kind::Number: {
      std::ostringstream ss;
      ss << std::setprecision(std::numeric_limits<Decimal>::digits10) << number;
      return ss.str();
    }
    case Kind::Text: return text;
    case Kind::DateTime: return format_rfc3339(time);
  }
  return "";
}

Cell canonicalize_cell(const Value& raw) {
  struct Visitor {
    Cell operator()(std::monostate) const { return Cell::null(); }
    Cell operator()(bool b) const {
      Cell c;
      c.kind = Cell::Kind::Boolean;
      c.boolean = b;
      return c;
    }
    Cell operator()(std::int64_t i) const { return number_cell(Decimal(i)); }
    Cell operator()(double d) const {
      if (!std::isfinite(d)) return text_cell(value_to_string(d));
      // Shortest decimal text that round-trips, so 0.1 stays 0.1 rather than its binary expansion.
      return number_cell(Decimal(value_to_string(d)));
    }
    Cell operator()(const std::string& s) const { return cell_from_text(s); }
    Cell operator()(const Blob& b) const { return text_cell(b.bytes); }
  };
  return std::visit(Visitor{}, raw);
}

Cell canonicalize_cell(const json& raw) { return canonicalize_cell(value_from_json(raw)); }

bool cells_equal(const Cell& a, const Cell& b) {
  auto na = numeric_view(a), nb = numeric_view(b);
  if (na && nb) {
    if (a.kind == Cell::Kind::Boolean && b.kind == Cell::Kind::Boolean) return a.boolean == b.boolean;
    Decimal diff = abs(*na - *nb);
    Decimal scale = Decimal(1);
    Decimal aa = abs(*na), ab = abs(*nb);
    if (aa > scale) scale = aa;
    if (ab > scale) scale = ab;
    static const Decimal tol("1e-6");
    return diff <= tol * scale;
  }
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Cell::Kind::Null: return true;
    case Cell::Kind::Text: return a.text == b.text;
    case Cell::Kind::DateTime: return a.time == b.time;
    default: return false;
  }
}

ExecutionResult ExecutionResult::from_query(const QueryResult& q) {
  ExecutionResult r;
  r.column_names = q.columns;
  r.rows.reserve(q.rows.size());
  for (const auto& row : q.rows) {
    CellRow cells;
    cells.reserve(row.size());
    for (const auto& v : row) cells.push_back(canonicalize_cell(v));
    r.rows.push_back(std::move(cells));
  }
  return r;
}

ExecutionResult ExecutionResult::failure(SqlError error) {
  ExecutionResult r;
  r.error = std::move(error);
  return r;
}

ExecutionResult ExecutionResult::from_json(const json& j) {
  QueryResult q;
  if (j.contains("columns")) q.columns = j["columns"].get<std::vector<std::string>>();
  for (const auto& row : j.value("rows", json::array())) {
    Row r;
    for (const auto& v : row) r.push_back(value_from_json(v));
    q.rows.push_back(std::move(r));
  }
  auto out = from_query(q);
  if (j.contains("error") && !j["error"].is_null()) {
    out.error = SqlError{j["error"].value("message", ""), j["error"].value("sqlstate", "")};
  }
  return out;
}

double row_fbeta(const CellRow& p, const CellRow& g, double beta) {
  if (p.empty() || g.empty()) throw Error(ErrorCode::EmptyRow, "row_fbeta on an empty row");
  if (!(beta > 0)) throw Error(ErrorCode::PreconditionViolation, "beta must be positive");
  std::size_t hit_p = 0, hit_g = 0;
  for (const auto& c : p) hit_p += member(c, g) ? 1 : 0;
  for (const auto& c : g) hit_g += member(c, p) ? 1 : 0;
  double pre = static_cast<double>(hit_p) / static_cast<double>(p.size());
  double rec = static_cast<double>(hit_g) / static_cast<double>(g.size());
  if (pre == 0.0 && rec == 0.0) return 0.0;
  double b2 = beta * beta;
  return (1.0 + b2) * pre * rec / (b2 * pre + rec);
}

Matrix weight_matrix(const std::vector<CellRow>& pred, const std::vector<CellRow>& gold, double beta) {
  Matrix w(pred.size(), std::vector<double>(gold.size(), 0.0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gold.size(); ++j) w[i][j] = row_fbeta(pred[i], gold[j], beta);
  }
  return w;
}

double wbm(const Matrix& w) { return wbm(w, nullptr); }

double wbm(const Matrix& w, std::vector<int>* assignment) {
  std::size_t rows = w.size();
  std::size_t cols = rows ? w[0].size() : 0;
  if (assignment) assignment->assign(rows, -1);
  if (rows == 0 || cols == 0) return 0.0;
  bool transposed = rows > cols;
  std::size_t n = transposed ? cols : rows;
  std::size_t m = transposed ? rows : cols;
  auto weight = [&](std::size_t i, std::size_t j) { return transposed ? w[j][i] : w[i][j]; };

  // Kuhn-Munkres with potentials on cost = -weight, n <= m, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  std::vector<int> row_to_col(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    std::size_t a = p[j] - 1, b = j - 1;
    std::size_t r = transposed ? b : a, c = transposed ? a : b;
    row_to_col[r] = static_cast<int>(c);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_to_col[r] >= 0) total += w[r][row_to_col[r]];
  }
  if (assignment) *assignment = std::move(row_to_col);
  return total;
}

double wbm_ni(const Matrix& w) {
  std::size_t n = w.size();
  std::size_t m = n ? w[0].size() : 0;
  if (n == 0 || m == 0) return 0.0;
  std::vector<std::vector<double>> dp(n + 1, std::vector<double>(m + 1, 0.0));
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      dp[i][j] = std::max({dp[i - 1][j], dp[i][j - 1], dp[i - 1][j - 1] + w[i - 1][j - 1]});
    }
  }
  return dp[n][m];
}

bool detect_ordered(const std::string& sql) {
  int depth = 0;
  bool any_token = false;
  bool ordered = false;
  std::string last_word;  // previous token at the current position, "" after punctuation
  int last_depth = -1;
  std::size_t i = 0, n = sql.size();
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; };
  while (i < n) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      while (i < n && sql[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      auto end = sql.find("*/", i + 2);
      if (end == std::string::npos) return true;
      i = end + 2;
      continue;
    }
    any_token = true;
    if (c == '\'' || c == '"' || c == '`') {
      std::size_t j = i + 1;
      for (;;) {
        if (j >= n) return true;
        if (sql[j] == c) {
          if (j + 1 < n && sql[j + 1] == c) {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      i = j + 1;
      last_word.clear();
      continue;
    }
    if (c == '[') {
      auto end = sql.find(']', i + 1);
      if (end == std::string::npos) return true;
      i = end + 1;
      last_word.clear();
      continue;
    }
    if (c == '(') {
      ++depth;
      ++i;
      last_word.clear();
      continue;
    }
    if (c == ')') {
      if (--depth < 0) return true;
      ++i;
      last_word.clear();
      continue;
    }
    if (is_word(c)) {
      std::size_t j = i;
      while (j < n && is_word(sql[j])) ++j;
      std::string word = text::to_upper_ascii(std::string_view(sql).substr(i, j - i));
      if (depth == 0 && word == "BY" && last_word == "ORDER" && last_depth == 0) ordered = true;
      last_word = word;
      last_depth = depth;
      i = j;
      continue;
    }
    last_word.clear();
    ++i;
  }
  if (depth != 0 || !any_token) return true;
  return ordered;
}

double bfbeta_score(const ExecutionResult& pred, const ExecutionResult& gold, bool ordered, double beta) {
  if (pred.error) return 0.0;
  if (pred.rows.empty() && gold.rows.empty()) return 1.0;
  if (pred.rows.empty() || gold.rows.empty()) return 0.0;
  Matrix w = weight_matrix(pred.rows, gold.rows, beta);
  double matched = ordered ? wbm_ni(w) : wbm(w);
  return matched / static_cast<double>(std::max(pred.rows.size(), gold.rows.size()));
}

double bfbeta_score(const ExecutionResult& pred, const ExecutionResult& gold, const std::string& gold_sql,
                    double beta) {
  return bfbeta_score(pred, gold, detect_ordered(gold_sql), beta);
}

namespace {

// Perfect matching on the row-equality graph (Kuhn); fallback when tolerance straddles a sort key.
bool rows_perfectly_matchable(const std::vector<CellRow>& a, const std::vector<CellRow>& b) {
  std::size_t n = a.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (rows_equal(a[i], b[j])) adj[i].push_back(j);
    }
    if (adj[i].empty()) return false;
  }
  std::vector<long> match(n, -1);
  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t i) {
    for (std::size_t j : adj[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (match[j] < 0 || augment(static_cast<std::size_t>(match[j]))) {
        match[j] = static_cast<long>(i);
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < n; ++i) {
    seen.assign(n, 0);
    if (!augment(i)) return false;
  }
  return true;
}

}  // namespace

bool exact_ex(const ExecutionResult& pred, const ExecutionResult& gold, bool ordered) {
  if (pred.error || gold.error) return false;
  if (pred.rows.size() != gold.rows.size()) return false;
  if (ordered) {
    for (std::size_t i = 0; i < pred.rows.size(); ++i) {
      if (!rows_equal(pred.rows[i], gold.rows[i])) return false;
    }
    return true;
  }
  std::vector<std::pair<std::string, std::size_t>> pk, gk;
  for (std::size_t i = 0; i < pred.rows.size(); ++i) pk.emplace_back(row_key(pred.rows[i]), i);
  for (std::size_t i = 0; i < gold.rows.size(); ++i) gk.emplace_back(row_key(gold.rows[i]), i);
  std::sort(pk.begin(), pk.end());
  std::sort(gk.begin(), gk.end());
  bool sorted_ok = true;
  for (std::size_t i = 0; i < pk.size() && sorted_ok; ++i) {
    sorted_ok = rows_equal(pred.rows[pk[i].second], gold.rows[gk[i].second]);
  }
  if (sorted_ok) return true;
  if (pred.rows.size() > 5000) return false;
  return rows_perfectly_matchable(pred.rows, gold.rows);
}

std::string result_fingerprint(const ExecutionResult& result, bool ordered) {
  std::vector<std::string> keys;
  keys.reserve(result.rows.size());
  for (const auto& row : result.rows) keys.push_back(row_key(row));
  if (!ordered) std::sort(keys.begin(), keys.end());
  std::string buf = ordered ? "ordered;" : "bag;";
  for (const auto& k : keys) append_field(buf, k);
  return sha256_hex(buf);
}

json BatchReport::to_json() const {
  json items_json = json::array();
  for (const auto& it : items) {
    items_json.push_back(
        {{"id", it.id}, {"ex", it.ex}, {"bfbeta", it.bfbeta}, {"error", it.error}, {"scored", it.scored}});
  }
  return json{{"ex", ex}, {"bfbeta", bfbeta}, {"scored", scored}, {"total", items.size()}, {"items", items_json}};
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

std::string fmt_score(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", d);
  return buf;
}

}  // namespace

std::string BatchReport::to_csv() const {
  std::string out = "id,ex,bfbeta,error\n";
  for (const auto& it : items) {
    out += csv_field(it.id) + "," + (it.ex ? "1" : "0") + "," + (it.scored ? fmt_score(it.bfbeta) : "") + "," +
           csv_field(it.error) + "\n";
  }
  return out;
}

BatchReport batch_accuracy(const std::vector<EvalPair>& pairs, Database& db, double beta, unsigned workers) {
  BatchReport report;
  report.items.resize(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& pair = pairs[i];
    EvalItem& item = report.items[i];
    item.id = pair.id.empty() ? std::to_string(i) : pair.id;
    try {
      auto gold_run = execute_sql_tool(db, pair.gold_sql, std::nullopt);
      if (gold_run.error) {
        item.scored = false;
        item.error = std::string(error_code_name(ErrorCode::GoldSqlFails)) + ": " + gold_run.error->message;
        return;
      }
      auto pred_run = execute_sql_tool(db, pair.pred_sql, std::nullopt);
      if (pred_run.error) {
        item.error = std::string(error_code_name(ErrorCode::SqlFails)) + ": " + pred_run.error->message;
        return;
      }
      auto gold = ExecutionResult::from_query({gold_run.columns, gold_run.rows});
      auto pred = ExecutionResult::from_query({pred_run.columns, pred_run.rows});
      bool ordered = detect_ordered(pair.gold_sql);
      item.ex = exact_ex(pred, gold, ordered);
      item.bfbeta = bfbeta_score(pred, gold, ordered, beta);
    } catch (const std::exception& e) {
      item.ex = false;
      item.bfbeta = 0.0;
      item.error = e.what();
    }
  });
  double ex_sum = 0, bf_sum = 0;
  for (const auto& it : report.items) {
    if (!it.scored) continue;
    ++report.scored;
    ex_sum += it.ex ? 1.0 : 0.0;
    bf_sum += it.bfbeta;
  }
  if (report.scored > 0) {
    report.ex = ex_sum / static_cast<double>(report.scored);
    report.bfbeta = bf_sum / static_cast<double>(report.scored);
  }
  return report;
}

}  // namespace kbsql
