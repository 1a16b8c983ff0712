#include "kbsql/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <map>
#include <regex>
#include <set>

#include "kbsql/embedding.hpp"
#include "kbsql/errors.hpp"
#include "kbsql/llm.hpp"
#include "kbsql/log.hpp"
#include "kbsql/parallel.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

std::string_view to_string(InferredType t) {
  switch (t) {
    case InferredType::Numeric: return "numeric";
    case InferredType::Categorical: return "categorical";
    case InferredType::Text: return "text";
    case InferredType::Temporal: return "temporal";
  }
  return "text";
}

std::string_view to_string(MatchChannel c) { return c == MatchChannel::Lexical ? "lexical" : "semantic"; }

// ---------------------------------------------------------------------------
// Serialization

json ColumnProfile::to_json() const {
  json j{{"id", id},
         {"table", table},
         {"name", name},
         {"description", description},
         {"declared_type", declared_type},
         {"is_pk", is_pk},
         {"is_fk", is_fk},
         {"inferred_type", std::string(kbsql::to_string(inferred_type))},
         {"row_count", row_count},
         {"null_count", null_count}};
  if (fk) j["fk"] = {{"table", fk->ref_table}, {"column", fk->ref_column}};
  if (numeric_stats) {
    const auto& s = *numeric_stats;
    j["numeric_stats"] = {{"mean", s.mean}, {"min", s.min}, {"p25", s.p25}, {"p50", s.p50},
                          {"p75", s.p75},   {"max", s.max}, {"is_integer", s.is_integer}};
  }
  if (categorical_stats) {
    json tops = json::array();
    for (const auto& t : categorical_stats->top_values) {
      tops.push_back({{"value", t.value}, {"count", t.count}, {"frequency", t.frequency},
                      {"cum_frequency", t.cum_frequency}});
    }
    j["categorical_stats"] = {{"n_classes", categorical_stats->n_classes},
                              {"top_values", tops},
                              {"max_len", categorical_stats->max_len}};
  }
  if (temporal_stats) {
    j["temporal_stats"] = {{"format", temporal_stats->format},
                           {"min_time", format_rfc3339(temporal_stats->min_time)},
                           {"max_time", format_rfc3339(temporal_stats->max_time)}};
  }
  return j;
}

json TableProfile::to_json() const {
  json cols = json::array();
  for (const auto& c : columns) cols.push_back(c.to_json());
  json fks = json::array();
  for (const auto& fk : foreign_keys) {
    fks.push_back({{"column", fk.column}, {"ref_table", fk.ref_table}, {"ref_column", fk.ref_column}});
  }
  return json{{"name", name}, {"description", description}, {"row_count", row_count}, {"columns", cols},
              {"foreign_keys", fks}};
}

json DbProfile::to_json() const {
  json tabs = json::array();
  for (const auto& t : tables) tabs.push_back(t.to_json());
  return json{{"connection", connection}, {"tables", tabs}};
}

const ColumnProfile* DbProfile::find_column(const std::string& table, const std::string& column) const {
  for (const auto& t : tables) {
    if (t.name != table) continue;
    for (const auto& c : t.columns) {
      if (c.name == column) return &c;
    }
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Type inference

std::optional<Timestamp> parse_with_format(const std::string& value, const std::string& format) {
  std::string v = text::trim(value);
  if (v.empty() || format.empty()) return std::nullopt;
  std::tm tm{};
  tm.tm_mday = 1;
  const char* end = ::strptime(v.c_str(), format.c_str(), &tm);
  if (end == nullptr) return std::nullopt;
  while (*end == ' ') ++end;
  if (*end != '\0') return std::nullopt;
  if (tm.tm_mday == 0) tm.tm_mday = 1;
  std::time_t t = ::timegm(&tm);
  return Timestamp(std::chrono::seconds(t));
}

double strptime_parse_ratio(const std::vector<std::string>& values, const std::string& format) {
  if (values.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& v : values) ok += parse_with_format(v, format) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(values.size());
}

namespace {

std::vector<Value> non_null(const std::vector<Value>& values) {
  std::vector<Value> out;
  for (const auto& v : values) {
    if (!is_null(v)) out.push_back(v);
  }
  return out;
}

// Numeric reading of a value: native numbers and numeric text.
std::optional<double> numeric_value(const Value& v, bool* integral) {
  if (auto p = std::get_if<std::int64_t>(&v)) {
    if (integral) *integral = true;
    return static_cast<double>(*p);
  }
  if (auto p = std::get_if<double>(&v)) {
    if (integral) *integral = false;
    return *p;
  }
  if (auto p = std::get_if<std::string>(&v)) {
    double d;
    std::string t = text::trim(*p);
    if (!text::parse_number(t, d)) return std::nullopt;
    if (integral) *integral = t.find_first_of(".eE") == std::string::npos;
    return d;
  }
  return std::nullopt;
}

std::string clean_format_reply(const std::string& reply) {
  for (const auto& line : text::split(reply, '\n')) {
    std::string t = text::trim(line);
    while (!t.empty() && (t.front() == '`' || t.front() == '"' || t.front() == '\'')) t.erase(t.begin());
    while (!t.empty() && (t.back() == '`' || t.back() == '"' || t.back() == '\'')) t.pop_back();
    t = text::trim(t);
    if (!t.empty() && t.find('%') != std::string::npos) return t;
  }
  return "";
}

std::vector<std::string> distinct_sample(const std::vector<Value>& values, std::size_t n) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (out.size() >= n) break;
    std::string s = value_to_string(v);
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

std::string ask_llm(LlmClient& llm, const std::string& system, const std::string& user, const std::string& model) {
  LlmParams params;
  params.model = model;
  return llm.complete({{"system", system}, {"user", user}}, params).text;
}

}  // namespace

bool temporal_suspected(const std::string& column_name, const std::vector<Value>& values,
                        const ProfileOptions& options) {
  std::string lname = text::to_lower_ascii(column_name);
  for (const auto& hint : options.temporal_name_hints) {
    if (!hint.empty() && lname.find(hint) != std::string::npos) return true;
  }
  auto sample = distinct_sample(non_null(values), options.temporal_sample);
  if (sample.empty()) return false;
  for (const auto& pattern : options.temporal_value_patterns) {
    std::regex re(pattern);
    std::size_t hits = 0;
    for (const auto& s : sample) hits += std::regex_match(text::trim(s), re) ? 1 : 0;
    if (static_cast<double>(hits) >= options.temporal_accept_ratio * static_cast<double>(sample.size())) {
      return true;
    }
  }
  return false;
}

TypeAnnotation annotate_column_type(const std::vector<Value>& values, LlmClient* llm, const std::string& column_name,
                                    const ProfileOptions& options) {
  auto present = non_null(values);
  if (present.empty()) return {InferredType::Text, ""};

  if (llm && temporal_suspected(column_name, present, options)) {
    auto sample = distinct_sample(present, options.temporal_sample);
    std::string prompt = "Column: " + column_name + "\nSample values:\n";
    for (const auto& s : sample) prompt += "- " + s + "\n";
    prompt += "Reply with a single strptime format string that parses these values.";
    try {
      std::string format = clean_format_reply(
          ask_llm(*llm, "You write strptime format strings for database columns.", prompt, options.model));
      std::vector<std::string> all;
      for (const auto& v : present) all.push_back(value_to_string(v));
      if (!format.empty() && strptime_parse_ratio(all, format) >= options.temporal_accept_ratio) {
        return {InferredType::Temporal, format};
      }
    } catch (const Error& e) {
      warn(std::string("temporal annotation skipped: ") + e.what());
    }
  }

  bool all_numeric = std::all_of(present.begin(), present.end(),
                                 [](const Value& v) { return numeric_value(v, nullptr).has_value(); });
  if (all_numeric) return {InferredType::Numeric, ""};
  std::set<std::string> distinct;
  for (const auto& v : present) distinct.insert(value_to_string(v));
  double ratio = static_cast<double>(distinct.size()) / static_cast<double>(present.size());
  if (ratio <= options.categorical_ratio &&
      static_cast<std::int64_t>(distinct.size()) <= options.categorical_max_distinct) {
    return {InferredType::Categorical, ""};
  }
  return {InferredType::Text, ""};
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// ---------------------------------------------------------------------------
// Profiling

namespace {

CategoricalStats categorical_stats(const std::vector<Value>& present, std::size_t top_k) {
  CategoricalStats s;
  std::map<std::string, std::int64_t> counts;
  for (const auto& v : present) {
    std::string str = value_to_string(v);
    ++counts[str];
    s.max_len = std::max<std::int64_t>(s.max_len, static_cast<std::int64_t>(text::utf8_length(str)));
  }
  s.n_classes = static_cast<std::int64_t>(counts.size());
  std::vector<std::pair<std::string, std::int64_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  double cum = 0;
  double total = static_cast<double>(present.size());
  for (std::size_t i = 0; i < ordered.size() && i < top_k; ++i) {
    double f = static_cast<double>(ordered[i].second) / total;
    cum += f;
    s.top_values.push_back({ordered[i].first, ordered[i].second, f, std::min(cum, 1.0)});
  }
  return s;
}

NumericStats numeric_stats(const std::vector<Value>& present) {
  NumericStats s;
  std::vector<double> xs;
  bool all_integral = true;
  long double sum = 0;
  for (const auto& v : present) {
    bool integral = false;
    double d = *numeric_value(v, &integral);
    all_integral = all_integral && integral;
    xs.push_back(d);
    sum += d;
  }
  std::sort(xs.begin(), xs.end());
  s.mean = static_cast<double>(sum / static_cast<long double>(xs.size()));
  s.min = xs.front();
  s.max = xs.back();
  s.p25 = percentile(xs, 0.25);
  s.p50 = percentile(xs, 0.50);
  s.p75 = percentile(xs, 0.75);
  s.is_integer = all_integral;
  return s;
}

}  // namespace

ColumnProfile profile_column(Database& db, const std::string& table, const std::string& column, LlmClient* llm,
                             const ProfileOptions& options) {
  TableSchema schema = db.schema(table);
  auto it = std::find_if(schema.columns.begin(), schema.columns.end(),
                         [&](const ColumnInfo& c) { return c.name == column; });
  if (it == schema.columns.end()) throw Error(ErrorCode::UnknownColumn, table + "." + column);

  ColumnProfile p;
  p.id = table + "." + column;
  p.table = table;
  p.name = column;
  p.declared_type = it->declared_type;
  p.is_pk = it->is_pk;
  p.is_fk = it->fk.has_value();
  p.fk = it->fk;

  QueryResult r = db.query("SELECT " + quote_identifier(column) + " FROM " + quote_identifier(table));
  std::vector<Value> values;
  values.reserve(r.rows.size());
  for (auto& row : r.rows) values.push_back(std::move(row[0]));
  p.row_count = static_cast<std::int64_t>(values.size());
  auto present = non_null(values);
  p.null_count = p.row_count - static_cast<std::int64_t>(present.size());

  TypeAnnotation ann = annotate_column_type(values, llm, column, options);
  p.inferred_type = ann.type;
  switch (ann.type) {
    case InferredType::Numeric: p.numeric_stats = numeric_stats(present); break;
    case InferredType::Temporal: {
      TemporalStats t;
      t.format = ann.format;
      bool first = true;
      for (const auto& v : present) {
        auto ts = parse_with_format(value_to_string(v), ann.format);
        if (!ts) continue;
        if (first || *ts < t.min_time) t.min_time = *ts;
        if (first || *ts > t.max_time) t.max_time = *ts;
        first = false;
      }
      p.temporal_stats = t;
      break;
    }
    case InferredType::Categorical:
    case InferredType::Text: p.categorical_stats = categorical_stats(present, options.top_k); break;
  }

  if (llm) {
    std::string prompt = "Table: " + table + "\nColumn: " + column + " (" + std::string(to_string(p.inferred_type)) +
                         ")\nSample values: " + text::join(distinct_sample(present, 5), ", ") +
                         "\nDescribe this column in one sentence.";
    try {
      p.description = text::trim(ask_llm(*llm, "You document database columns.", prompt, options.model));
    } catch (const Error& e) {
      warn("column description skipped for " + p.id + ": " + e.what());
    }
  }
  return p;
}

TableProfile profile_table(Database& db, const std::string& table, LlmClient* llm, const ProfileOptions& options,
                           unsigned workers) {
  TableSchema schema = db.schema(table);
  TableProfile t;
  t.name = table;
  t.foreign_keys = schema.foreign_keys;
  auto count = db.query("SELECT COUNT(*) FROM " + quote_identifier(table));
  t.row_count = static_cast<std::int64_t>(as_double(count.rows.at(0).at(0)).value_or(0));
  t.columns.resize(schema.columns.size());
  parallel_for(schema.columns.size(), workers, [&](std::size_t i) {
    t.columns[i] = profile_column(db, table, schema.columns[i].name, llm, options);
  });
  if (llm) {
    std::vector<std::string> names;
    for (const auto& c : schema.columns) names.push_back(c.name);
    try {
      t.description = text::trim(ask_llm(*llm, "You document database tables.",
                                         "Table: " + table + "\nColumns: " + text::join(names, ", ") +
                                             "\nDescribe this table in one sentence.",
                                         options.model));
    } catch (const Error& e) {
      warn("table description skipped for " + table + ": " + e.what());
    }
  }
  return t;
}

DbProfile profile_db(Database& db, LlmClient* llm, const ProfileOptions& options, unsigned workers) {
  DbProfile p;
  p.connection = db.connection_string();
  for (const auto& table : db.tables()) p.tables.push_back(profile_table(db, table, llm, options, workers));
  return p;
}

// ---------------------------------------------------------------------------
// SQL tool

namespace {

struct SummaryAcc {
  ColumnSummary s;
  bool saw_non_numeric = false;

  void add(const Value& v) {
    if (is_null(v)) {
      ++s.nulls;
      return;
    }
    ++s.non_null;
    if (saw_non_numeric) return;
    if (!is_numeric(v)) {
      saw_non_numeric = true;
      s.min.reset();
      s.max.reset();
      return;
    }
    double d = *as_double(v);
    s.min = s.min ? std::min(*s.min, d) : d;
    s.max = s.max ? std::max(*s.max, d) : d;
  }
  ColumnSummary finish() {
    s.numeric = !saw_non_numeric && s.non_null > 0;
    if (!s.numeric) {
      s.min.reset();
      s.max.reset();
    }
    return s;
  }
};

}  // namespace

TruncatedResult execute_sql_tool(Database& db, const std::string& sql, std::optional<std::size_t> max_rows) {
  TruncatedResult out;
  std::vector<SummaryAcc> acc;
  try {
    out.columns = db.query_stream(sql, [&](const Row& row) {
      if (acc.size() < row.size()) acc.resize(row.size());
      for (std::size_t c = 0; c < row.size(); ++c) acc[c].add(row[c]);
      ++out.total_row_count;
      if (!max_rows || out.rows.size() < *max_rows) out.rows.push_back(row);
    });
  } catch (const SqlFailure& f) {
    TruncatedResult failed;
    failed.error = f.error();
    return failed;
  }
  acc.resize(out.columns.size());
  for (std::size_t c = 0; c < out.columns.size(); ++c) {
    acc[c].s.column = out.columns[c];
    out.summary.push_back(acc[c].finish());
  }
  out.truncated = max_rows && out.total_row_count > static_cast<std::int64_t>(*max_rows);
  return out;
}

std::vector<ColumnSummary> summarize_rows(const std::vector<std::string>& columns, const std::vector<Row>& rows) {
  std::vector<SummaryAcc> acc(columns.size());
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < columns.size() && c < row.size(); ++c) acc[c].add(row[c]);
  }
  std::vector<ColumnSummary> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    acc[c].s.column = columns[c];
    out.push_back(acc[c].finish());
  }
  return out;
}

json TruncatedResult::to_json() const {
  json j;
  if (error) {
    j["error"] = {{"message", error->message}, {"sqlstate", error->sqlstate}};
    return j;
  }
  j["columns"] = columns;
  json rs = json::array();
  for (const auto& row : rows) {
    json r = json::array();
    for (const auto& v : row) r.push_back(value_to_json(v));
    rs.push_back(r);
  }
  j["rows"] = rs;
  j["total_row_count"] = total_row_count;
  j["truncated"] = truncated;
  json sums = json::array();
  for (const auto& s : summary) {
    json e{{"column", s.column}, {"numeric", s.numeric}, {"non_null", s.non_null}, {"nulls", s.nulls}};
    if (s.min) e["min"] = *s.min;
    if (s.max) e["max"] = *s.max;
    sums.push_back(e);
  }
  j["summary"] = sums;
  return j;
}

std::string TruncatedResult::to_text() const {
  if (error) return "ERROR (" + error->sqlstate + "): " + error->message + "\n";
  std::string out = text::join(columns, " | ") + "\n";
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (const auto& v : row) cells.push_back(value_to_string(v));
    out += text::join(cells, " | ") + "\n";
  }
  if (truncated) {
    out += "... showing " + std::to_string(rows.size()) + " of " + std::to_string(total_row_count) + " rows\n";
  } else {
    out += "(" + std::to_string(total_row_count) + " rows)\n";
  }
  for (const auto& s : summary) {
    if (!s.numeric && s.nulls == 0) continue;
    out += s.column + ": nulls=" + std::to_string(s.nulls);
    if (s.numeric) out += " min=" + value_to_string(*s.min) + " max=" + value_to_string(*s.max);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fuzzy search

std::set<std::string> token_ngrams(const std::string& input, int gram_order, const Lemmatizer& lemmatizer) {
  std::vector<std::string> tokens;
  for (auto& t : text::split(lemmatizer.lemmatize(input), ' ')) {
    if (!t.empty()) tokens.push_back(std::move(t));
  }
  std::set<std::string> grams;
  for (int n = 1; n <= gram_order; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (int k = 1; k < n; ++k) g += " " + tokens[i + k];
      grams.insert(std::move(g));
    }
  }
  return grams;
}

double jaccard_containment(const std::string& query, const std::string& candidate, int gram_order,
                           const Lemmatizer& lemmatizer) {
  if (gram_order < 1) throw Error(ErrorCode::PreconditionViolation, "gram_order must be >= 1");
  auto q = token_ngrams(query, gram_order, lemmatizer);
  if (q.empty()) throw Error(ErrorCode::EmptyQuery, "query has no tokens");
  auto d = token_ngrams(candidate, gram_order, lemmatizer);
  std::size_t inter = 0;
  for (const auto& g : q) inter += d.count(g);
  return static_cast<double>(inter) / static_cast<double>(q.size());
}

namespace {

struct Candidate {
  std::string value;
  std::string text;
  std::string detail;
};

std::vector<FuzzyHit> fuzzy_core(const std::vector<Candidate>& cands, const std::string& keyword, std::size_t k,
                                 const Embedder* embedder, int gram_order) {
  if (k == 0) throw Error(ErrorCode::PreconditionViolation, "k must be >= 1");
  auto top_k = [&](std::vector<FuzzyHit> hits) {
    std::stable_sort(hits.begin(), hits.end(), [](const FuzzyHit& a, const FuzzyHit& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.value < b.value;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
  };
  std::vector<FuzzyHit> lexical, semantic;
  bool has_tokens = !token_ngrams(keyword, 1).empty();
  for (const auto& c : cands) {
    double j = has_tokens ? jaccard_containment(keyword, c.text, gram_order) : 0.0;
    lexical.push_back({c.value, j, MatchChannel::Lexical, c.detail});
  }
  if (embedder) {
    Vector q = embedder->embed(keyword);
    for (const auto& c : cands) {
      semantic.push_back({c.value, cosine(q, embedder->embed(c.text)), MatchChannel::Semantic, c.detail});
    }
  }
  std::map<std::string, FuzzyHit> best;
  for (auto* list : {&lexical, &semantic}) {
    for (auto& h : top_k(*list)) {
      auto it = best.find(h.value);
      if (it == best.end() || h.score > it->second.score) best[h.value] = h;
    }
  }
  std::vector<FuzzyHit> out;
  for (auto& [_, h] : best) out.push_back(h);
  std::stable_sort(out.begin(), out.end(), [](const FuzzyHit& a, const FuzzyHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.value < b.value;
  });
  return out;
}

}  // namespace

std::vector<FuzzyHit> fuzzy_match(const std::vector<std::string>& candidates, const std::string& keyword,
                                  std::size_t k, const Embedder* embedder, int gram_order) {
  std::vector<Candidate> cands;
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (seen.insert(c).second) cands.push_back({c, c, ""});
  }
  return fuzzy_core(cands, keyword, k, embedder, gram_order);
}

std::vector<FuzzyHit> fuzzy_enum(const DbProfile& profile, const std::string& keyword, std::size_t k,
                                 const Embedder* embedder) {
  std::vector<Candidate> cands;
  std::set<std::string> seen;
  for (const auto& t : profile.tables) {
    for (const auto& c : t.columns) {
      if (!c.categorical_stats) continue;
      for (const auto& tv : c.categorical_stats->top_values) {
        if (seen.insert(tv.value).second) cands.push_back({tv.value, tv.value, c.id});
      }
    }
  }
  return fuzzy_core(cands, keyword, k, embedder, 2);
}

std::vector<FuzzyHit> fuzzy_enum(Database& db, const std::string& table, const std::string& column,
                                 const std::string& keyword, std::size_t k, const Embedder* embedder) {
  auto schema = db.schema(table);
  if (std::none_of(schema.columns.begin(), schema.columns.end(), [&](const ColumnInfo& c) { return c.name == column; })) {
    throw Error(ErrorCode::UnknownColumn, table + "." + column);
  }
  auto r = db.query("SELECT DISTINCT " + quote_identifier(column) + " FROM " + quote_identifier(table) + " WHERE " +
                    quote_identifier(column) + " IS NOT NULL");
  std::vector<Candidate> cands;
  for (const auto& row : r.rows) {
    std::string v = value_to_string(row[0]);
    cands.push_back({v, v, table + "." + column});
  }
  return fuzzy_core(cands, keyword, k, embedder, 2);
}

std::vector<FuzzyHit> fuzzy_column(const DbProfile& profile, const std::string& keyword, std::size_t k,
                                   const Embedder* embedder) {
  std::vector<Candidate> cands;
  for (const auto& t : profile.tables) {
    for (const auto& c : t.columns) {
      std::string body = c.name;
      if (!c.description.empty()) body += " " + c.description;
      cands.push_back({c.id, body, c.name});
    }
  }
  return fuzzy_core(cands, keyword, k, embedder, 2);
}

// ---------------------------------------------------------------------------
// UKF export

std::vector<UkfRecord> profile_to_ukf(const DbProfile& profile) {
  std::vector<UkfRecord> out;
  for (const auto& t : profile.tables) {
    json cols = json::array();
    for (const auto& c : t.columns) cols.push_back(c.name);
    json table_spec{{"name", t.name},
                    {"description", t.description},
                    {"content", t.description},
                    {"content_resources", {{"table_id", t.name}}},
                    {"source", "system"},
                    {"creator", "schema"},
                    {"collection", "schema"},
                    {"tags", {"[TABLE:" + t.name + "]"}},
                    {"priority", 10},
                    {"profile", {{"row_count", t.row_count}, {"columns", cols}}}};
    out.push_back(builtin_template("Table").instantiate(table_spec));
    for (const auto& c : t.columns) {
      json col_spec{{"name", c.name},
                    {"description", c.description},
                    {"content", c.description},
                    {"content_resources", {{"table_id", t.name}, {"predicate", {{"physical", c.name}}}}},
                    {"source", "system"},
                    {"creator", "schema"},
                    {"collection", "schema"},
                    {"tags", {"[TABLE:" + t.name + "]", "[COLUMN:" + c.name + "]"}},
                    {"priority", 10},
                    {"profile", c.to_json()}};
      out.push_back(builtin_template("Column").instantiate(col_spec));
      if (c.inferred_type != InferredType::Categorical || !c.categorical_stats) continue;
      for (const auto& tv : c.categorical_stats->top_values) {
        if (tv.value.empty()) continue;
        json enum_spec{{"name", tv.value},
                       {"content_resources", {{"table_id", t.name}, {"column_id", c.name}, {"value", tv.value}}},
                       {"source", "system"},
                       {"creator", "schema"},
                       {"collection", "schema"},
                       {"tags", {"[TABLE:" + t.name + "]", "[COLUMN:" + c.name + "]"}},
                       {"priority", 10},
                       {"profile", {{"count", tv.count}, {"frequency", tv.frequency}}}};
        out.push_back(builtin_template("Enum").instantiate(enum_spec));
      }
    }
  }
  return out;
}

}  // namespace kbsql
