#include "kbsql/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "kbsql/errors.hpp"
#include "kbsql/eval.hpp"
#include "kbsql/log.hpp"
#include "kbsql/mining.hpp"
#include "kbsql/sql_ast.hpp"
#include "kbsql/text.hpp"
#include "kbsql/workflow.hpp"

namespace kbsql {

namespace {

std::string one_line(const std::string& s) {
  std::string out = text::replace_all(text::trim(s), "\r", "");
  return text::replace_all(out, "\n", " ");
}

std::string ask(LlmClient& llm, const std::string& model, const std::string& system, const std::string& user) {
  LlmParams params;
  params.model = model;
  return llm.complete({{"system", system}, {"user", user}}, params).text;
}

std::string strip_semicolons(std::string sql) {
  sql = text::trim(sql);
  while (!sql.empty() && sql.back() == ';') {
    sql.pop_back();
    sql = text::trim(sql);
  }
  return sql;
}

std::optional<ExecutionResult> try_execute(Database& db, const std::string& sql) {
  try {
    return ExecutionResult::from_query(db.query(sql));
  } catch (const Error&) {
    return std::nullopt;
  } catch (const SqlFailure&) {
    return std::nullopt;
  }
}

bool same_result(const ExecutionResult& a, const ExecutionResult& b, bool ordered) {
  return a.column_names == b.column_names && exact_ex(a, b, ordered);
}

std::string text_before_fence(const std::string& reply) {
  auto pos = reply.find("```");
  return text::trim(pos == std::string::npos ? reply : reply.substr(0, pos));
}

std::string phrase_question(LlmClient& llm, const std::string& model, const std::string& sql,
                            const std::string& context) {
  std::string user = context;
  if (!user.empty()) user += "\n\n";
  user += "Write one natural-language question that the following SQL answers. Reply with the question only.\n```sql\n" +
          sql + "\n```";
  std::string reply = ask(llm, model, "You describe SQL queries as user questions.", user);
  for (const auto& line : text::split(reply, '\n')) {
    std::string t = text::trim(line);
    if (!t.empty() && t.rfind("```", 0) != 0) return t;
  }
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// SQL profiling

json ProfiledSql::to_json() const {
  return {{"nl", nl},
          {"query_time", format_rfc3339(query_time)},
          {"result_schema", result_schema},
          {"knowledge_summary", knowledge_summary},
          {"header_comment", header_comment},
          {"commented_sql", commented_sql},
          {"corner_cases", corner_cases},
          {"annotated", annotated}};
}

std::string format_query_time(Timestamp t) {
  std::string s = format_rfc3339(t);  // YYYY-MM-DDTHH:MM:SSZ
  std::string date = s.substr(0, 10);
  std::string clock = s.substr(11, 8);
  return clock == "00:00:00" ? date : date + " " + clock;
}

std::string sql_profile_header(const std::string& nl, Timestamp query_time, const std::vector<std::string>& schema,
                               const std::vector<std::string>& knowledge,
                               const std::vector<std::pair<std::string, std::string>>& user_profile) {
  std::string out = "-- User Query: " + one_line(nl) + "\n";
  if (!user_profile.empty()) {
    out += "-- User Profile:\n";
    for (const auto& [k, v] : user_profile) out += "--   - " + one_line(k) + ": " + one_line(v) + "\n";
  }
  out += "-- Query Time: " + format_query_time(query_time) + "\n";
  std::vector<std::string> quoted;
  for (const auto& c : schema) quoted.push_back("\"" + one_line(c) + "\"");
  out += "-- Expected SQL Result Schema: (" + text::join(quoted, ", ") + ")\n";
  if (!knowledge.empty()) {
    out += "-- Knowledge:\n";
    for (const auto& k : knowledge) out += "--   - " + one_line(k) + "\n";
  }
  return out;
}

ProfiledSql profile_sql(const std::string& nl, const std::string& sql, Timestamp query_time,
                        const KnowledgeBundle& knowledge, Database& db, LlmClient* llm,
                        const ProfileSqlOptions& options) {
  ExecutionResult original;
  try {
    original = ExecutionResult::from_query(db.query(sql));
  } catch (const SqlFailure& f) {
    throw Error(ErrorCode::SqlFails, f.what());
  }
  const bool ordered = detect_ordered(sql);

  ProfiledSql out;
  out.nl = nl;
  out.query_time = query_time;
  out.result_schema = original.column_names;
  for (const auto& item : knowledge.items) out.knowledge_summary.push_back("(" + item.record.type + ") " + item.record.name);
  const std::string header =
      sql_profile_header(nl, query_time, out.result_schema, out.knowledge_summary, options.user_profile);
  out.header_comment = header;
  out.commented_sql = header + text::trim(sql);

  if (llm == nullptr) return out;

  static const std::regex step(R"(^\s*(?:\d+[.)]|[-*])\s+(.+)$)");
  std::string feedback;
  for (int attempt = 0; attempt < options.attempts; ++attempt) {
    std::string user = header + "\n```sql\n" + text::trim(sql) +
                       "\n```\n\nList the key steps, corner cases, knowledge and formulas this query relies on as a "
                       "numbered list. Then repeat the query in a ```sql fenced block with short inline -- comments "
                       "explaining each clause. Do not change the query itself.";
    if (!feedback.empty()) user += "\n\nYour previous rewrite was rejected: " + feedback;
    std::string reply;
    try {
      reply = ask(*llm, options.model, "You annotate SQL queries for documentation.", user);
    } catch (const Error& e) {
      warn(std::string("sql profiling: ") + e.what());
      break;
    }
    auto body = extract_fenced_sql(reply);
    if (!body) {
      feedback = "no fenced SQL block";
      continue;
    }
    std::vector<std::string> steps;
    for (const auto& line : text::split(text_before_fence(reply), '\n')) {
      std::smatch m;
      if (std::regex_match(line, m, step)) steps.push_back(one_line(m[1].str()));
    }
    std::string h = header;
    if (!steps.empty()) {
      h += "-- Key steps/corner-cases/knowledge/formula:\n";
      for (std::size_t i = 0; i < steps.size(); ++i) h += "-- " + std::to_string(i + 1) + ". " + steps[i] + "\n";
    }
    std::string candidate = h + *body;
    auto rerun = try_execute(db, candidate);
    if (!rerun) {
      feedback = "the annotated query does not execute";
      continue;
    }
    if (!same_result(*rerun, original, ordered)) {
      feedback = "the annotated query returns a different result";
      continue;
    }
    out.header_comment = h;
    out.commented_sql = candidate;
    out.corner_cases = steps;
    out.annotated = true;
    return out;
  }
  warn("sql profiling: every annotation was rejected; keeping the raw statement");
  return out;
}

// ---------------------------------------------------------------------------
// CoT generation

CotResult generate_cot(const std::string& nl, const std::string& gold_sql, const KnowledgeBundle& bundle,
                       LlmClient& rlm, Database& db, const CotOptions& options) {
  if (options.max_repairs < 0) throw Error(ErrorCode::PreconditionViolation, "max_repairs must be >= 0");
  auto gold = try_execute(db, gold_sql);
  if (!gold) throw Error(ErrorCode::GoldSqlFails, "gold SQL does not execute");
  const bool ordered = detect_ordered(gold_sql);

  GenerationOptions gen;
  gen.dialect = options.dialect;
  const std::string prompt = generation_prompt(nl, bundle, gen);
  auto matches = [&](const std::string& sql) {
    if (sql.empty()) return false;
    auto r = try_execute(db, sql);
    return r && exact_ex(*r, *gold, ordered);
  };

  CotResult out;
  std::string reply = ask(rlm, options.model, "You write SQL after reasoning step by step.", prompt);
  out.cot = text_before_fence(reply);
  out.sql = extract_fenced_sql(reply).value_or("");
  out.verified = matches(out.sql);

  while (!out.verified && out.repairs < options.max_repairs) {
    ++out.repairs;
    std::string repair = "Question: " + nl + "\n\nYour reasoning:\n" + out.cot + "\n\nYour SQL:\n```sql\n" + out.sql +
                         "\n```\n\nReference SQL:\n```sql\n" + text::trim(gold_sql) +
                         "\n```\n\nModify your reasoning with minimal adjustments so that it leads to the reference "
                         "SQL. Reply with the revised reasoning only.";
    out.cot = text_before_fence(ask(rlm, options.model, "You revise reasoning traces.", repair));
    std::string cont = prompt + "\n\nReasoning:\n" + out.cot +
                       "\n\nContinue from this reasoning and give only the final query in a ```sql fenced block.";
    out.sql = extract_fenced_sql(ask(rlm, options.model, "You write SQL after reasoning step by step.", cont))
                  .value_or("");
    out.verified = matches(out.sql);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

double hardness(const std::vector<bool>& outcomes) {
  return static_cast<double>(std::count(outcomes.begin(), outcomes.end(), false));
}

const std::vector<std::string>& quality_dimensions() {
  static const std::vector<std::string> dims = {"completeness",        "robustness",          "structure_clarity",
                                                "example_referencing", "structured_thinking", "non_repetitiveness",
                                                "brevity"};
  return dims;
}

std::size_t count_tokens(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

double brevity_score(std::size_t tokens, std::size_t t_max) {
  if (t_max == 0) throw Error(ErrorCode::PreconditionViolation, "t_max must be positive");
  double r = 1.0 - static_cast<double>(tokens) / static_cast<double>(t_max);
  return 10.0 * std::clamp(r, 0.0, 1.0);
}

QualityScore quality(const std::string& cot, LlmClient& judge, const TokenCounter& counter,
                     const QualityOptions& options) {
  const auto& dims = quality_dimensions();
  std::string user =
      "Rate the reasoning below on each dimension from 0 to 10. Scores across many traces should roughly follow a "
      "normal distribution centred on 5.\n"
      "- completeness: all information needed for the query is stated\n"
      "- robustness: corner cases are handled\n"
      "- structure_clarity: the SQL structure is clearly explained\n"
      "- example_referencing: relevant examples and knowledge are referenced\n"
      "- structured_thinking: steps are ordered and organised\n"
      "- non_repetitiveness: no needless repetition\n"
      "Reply with a JSON object mapping each dimension to its score.\n\nReasoning:\n" +
      cot;
  std::string reply = ask(judge, options.model, "You grade reasoning traces.", user);
  auto parsed = extract_json(reply);
  if (!parsed || !parsed->is_object()) throw Error(ErrorCode::ProviderUnavailable, "judge reply has no JSON object");

  QualityScore out;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    auto it = parsed->find(dims[i]);
    if (it == parsed->end() || !it->is_number())
      throw Error(ErrorCode::ProviderUnavailable, "judge reply lacks dimension " + dims[i]);
    out.dims[dims[i]] = std::clamp(it->get<double>(), 0.0, 10.0);
  }
  out.dims["brevity"] = brevity_score(counter(cot), options.t_max);
  for (const auto& [_, v] : out.dims) out.q += v;
  return out;
}

std::vector<double> diversity(const std::vector<std::string>& queries, std::size_t k, const Embedder& embedder) {
  if (k == 0 || k >= queries.size())
    throw Error(ErrorCode::PreconditionViolation, "k must satisfy 0 < k < number of queries");
  std::vector<Vector> vecs;
  vecs.reserve(queries.size());
  for (const auto& q : queries) vecs.push_back(embedder.embed(q));
  std::vector<double> out(queries.size(), 0.0);
  std::vector<double> dist;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    dist.clear();
    for (std::size_t j = 0; j < vecs.size(); ++j)
      if (j != i) dist.push_back(std::max(0.0, 1.0 - cosine(vecs[i], vecs[j])));
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    out[i] = std::accumulate(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
  }
  return out;
}

json CurationRecord::to_json() const {
  json outcomes = json::array();
  for (const auto& o : model_outcomes) outcomes.push_back({{"model", o.model}, {"correct", o.correct}});
  return {{"nl", nl},
          {"cot", cot},
          {"sql", sql},
          {"model_outcomes", outcomes},
          {"scores", {{"H", h}, {"Q", q}, {"V", v}, {"B", b}, {"S", s}}},
          {"quality_dims", quality_dims}};
}

CurationRecord CurationRecord::from_json(const json& j) {
  CurationRecord r;
  r.nl = j.value("nl", "");
  r.cot = j.value("cot", "");
  r.sql = j.value("sql", "");
  if (auto it = j.find("model_outcomes"); it != j.end() && it->is_array())
    for (const auto& o : *it) r.model_outcomes.push_back({o.value("model", ""), o.value("correct", false)});
  const json scores = j.value("scores", json::object());
  r.h = scores.value("H", 0.0);
  r.q = scores.value("Q", 0.0);
  r.v = scores.value("V", 0.0);
  r.b = scores.value("B", 0.0);
  r.s = scores.value("S", 0.0);
  if (auto it = j.find("quality_dims"); it != j.end() && it->is_object())
    for (const auto& [k, v] : it->items()) r.quality_dims[k] = v.get<double>();
  return r;
}

double curation_score(const CurationRecord& r, const CurationCoefficients& c) {
  for (double x : {c.alpha, c.beta_q, c.gamma})
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::PreconditionViolation, "coefficients must lie in [0,1]");
  return c.alpha * r.h + c.beta_q * r.q + c.gamma * r.v + r.b;
}

double shorter_cot_first(const CurationRecord& r) { return -static_cast<double>(count_tokens(r.cot)); }

std::vector<CurationRecord> select_top(std::vector<CurationRecord> records, const CurationCoefficients& c,
                                       const CurationTieBreaker& tie, std::size_t budget) {
  std::vector<double> secondary(records.size(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].s = curation_score(records[i], c);
    if (tie) secondary[i] = tie(records[i]);
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].s != records[b].s) return records[a].s > records[b].s;
    return secondary[a] > secondary[b];
  });
  std::vector<CurationRecord> out;
  for (std::size_t i = 0; i < order.size() && i < budget; ++i) out.push_back(std::move(records[order[i]]));
  return out;
}

std::string to_jsonl(const std::vector<CurationRecord>& records) {
  std::string out;
  for (const auto& r : records) out += r.to_json().dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Synthesis

json NlSqlPair::to_json() const { return {{"nl", nl}, {"sql", sql}, {"origin", origin}}; }

ComposeTemplate parse_compose_template(std::string_view t) {
  std::string s = text::to_lower_ascii(t);
  if (s == "with") return ComposeTemplate::With;
  if (s == "union") return ComposeTemplate::Union;
  if (s == "join") return ComposeTemplate::Join;
  throw Error(ErrorCode::Parse, "unknown compose template: " + std::string(t));
}

std::string_view to_string(ComposeTemplate t) {
  switch (t) {
    case ComposeTemplate::With: return "with";
    case ComposeTemplate::Union: return "union";
    case ComposeTemplate::Join: return "join";
  }
  return "with";
}

bool meaningful_result(const QueryResult& r) {
  for (const auto& row : r.rows)
    for (const auto& v : row)
      if (!is_null(v)) return true;
  return false;
}

namespace {

std::optional<QueryResult> try_query(Database& db, const std::string& sql) {
  try {
    return db.query(sql);
  } catch (const Error&) {
    return std::nullopt;
  } catch (const SqlFailure&) {
    return std::nullopt;
  }
}

// Each variant holds at most one predicate index per group; -1 means the group is unused.
std::vector<std::vector<int>> draw_variants(const std::vector<OntologyGroup>& groups, std::size_t max_variants,
                                            std::uint64_t seed) {
  std::vector<std::vector<int>> out;
  if (max_variants == 0) return out;
  out.emplace_back(groups.size(), -1);
  std::set<std::vector<int>> seen(out.begin(), out.end());
  double total = 1;
  for (const auto& g : groups) total *= static_cast<double>(g.predicates.size() + 1);
  std::mt19937_64 rng(seed);
  for (std::size_t tries = 0; out.size() < max_variants && static_cast<double>(out.size()) < total &&
                              tries < 64 * max_variants;
       ++tries) {
    std::vector<int> v(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
      std::uniform_int_distribution<int> pick(-1, static_cast<int>(groups[i].predicates.size()) - 1);
      v[i] = pick(rng);
    }
    if (seen.insert(v).second) out.push_back(std::move(v));
  }
  return out;
}

std::string where_clause(const std::vector<OntologyGroup>& groups, const std::vector<int>& variant) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (variant[i] >= 0) parts.push_back("(" + groups[i].predicates[static_cast<std::size_t>(variant[i])] + ")");
  return parts.empty() ? "1=1" : text::join(parts, " AND ");
}

std::string cte_prefix(const std::vector<const SeedQuery*>& seeds, const std::string& where) {
  std::vector<std::string> parts;
  for (const auto* s : seeds)
    parts.push_back(quote_identifier(s->name) + " AS (" + strip_semicolons(text::replace_all(s->sql, "{where}", where)) +
                    ")");
  return "WITH " + text::join(parts, ", ") + " ";
}

}  // namespace

std::vector<NlSqlPair> synthesize_composed(const std::vector<SeedQuery>& seeds,
                                           const std::vector<ComposeTemplate>& templates,
                                           const std::vector<OntologyGroup>& ontology, LlmClient& llm, Database& db,
                                           const ComposeOptions& options) {
  std::map<std::string, const SeedQuery*> by_name;
  std::map<std::string, std::vector<std::string>> columns;
  for (const auto& s : seeds) {
    std::string sql = strip_semicolons(text::replace_all(s.sql, "{where}", "1=1"));
    try {
      columns[s.name] = db.query(sql).columns;
    } catch (const SqlFailure& f) {
      throw Error(ErrorCode::SqlFails, "seed " + s.name + " does not execute: " + f.what());
    }
    by_name[s.name] = &s;
  }

  // (origin, seeds involved, select tail)
  struct Shape {
    std::string origin;
    std::vector<const SeedQuery*> seeds;
    std::string tail;
  };
  std::vector<Shape> shapes;
  for (ComposeTemplate t : templates) {
    if (t == ComposeTemplate::With) {
      for (const auto& ind : options.indicators) {
        std::vector<const SeedQuery*> inputs;
        for (const auto& name : ind.inputs)
          if (auto it = by_name.find(name); it != by_name.end()) inputs.push_back(it->second);
        if (inputs.empty() || inputs.size() != ind.inputs.size()) continue;
        std::vector<std::string> from;
        for (const auto* s : inputs) from.push_back(quote_identifier(s->name));
        shapes.push_back({"with", inputs,
                          "SELECT " + ind.expression + " AS " + quote_identifier(ind.name) + " FROM " +
                              text::join(from, ", ")});
      }
      continue;
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      for (std::size_t j = i + 1; j < seeds.size(); ++j) {
        const auto& a = seeds[i];
        const auto& b = seeds[j];
        const auto& ca = columns[a.name];
        const auto& cb = columns[b.name];
        if (t == ComposeTemplate::Union) {
          if (ca.size() != cb.size()) continue;
          shapes.push_back({"union", {&a, &b},
                            "SELECT * FROM " + quote_identifier(a.name) + " UNION ALL SELECT * FROM " +
                                quote_identifier(b.name)});
        } else {
          std::vector<std::string> shared;
          for (const auto& x : ca)
            for (const auto& y : cb)
              if (text::iequals(x, y)) shared.push_back(quote_identifier(x));
          if (shared.empty()) continue;
          shapes.push_back({"join", {&a, &b},
                            "SELECT * FROM " + quote_identifier(a.name) + " JOIN " + quote_identifier(b.name) +
                                " USING (" + text::join(shared, ", ") + ")"});
        }
      }
    }
  }

  auto variants = draw_variants(ontology, options.max_variants, options.seed);
  std::vector<NlSqlPair> out;
  std::set<std::string> seen;
  for (const auto& shape : shapes) {
    for (const auto& variant : variants) {
      std::string sql = cte_prefix(shape.seeds, where_clause(ontology, variant)) + shape.tail;
      if (!seen.insert(sql).second) continue;
      auto result = try_query(db, sql);
      if (!result || !meaningful_result(*result)) continue;
      std::string nl = phrase_question(llm, options.model, sql, "");
      if (nl.empty()) continue;
      out.push_back({nl, sql, shape.origin});
    }
  }
  return out;
}

std::vector<NlSqlPair> synthesize_decomposed(const std::string& nl, const std::string& sql, LlmClient& llm,
                                             Database& db, const std::string& model) {
  SqlAst ast;
  try {
    ast = parse_sql_ast(sql);
  } catch (const Error& e) {
    warn(std::string("decomposition skipped: ") + e.what());
    return {};
  }
  if (ast.statements.empty() || !ast.statements.front().select) return {};
  const Select& outer = *ast.statements.front().select;

  // Earlier CTEs are carried along only when the part refers to them, directly or transitively.
  auto refers = [](const std::string& sql, const std::string& name) {
    std::regex word("(^|[^A-Za-z0-9_])\"?" + std::regex_replace(name, std::regex(R"([.^$|()\[\]{}*+?\\])"), R"(\$&)") +
                        "\"?($|[^A-Za-z0-9_])",
                    std::regex::icase);
    return std::regex_search(sql, word);
  };
  std::vector<std::string> parts;
  auto with_prefix = [&](const Select& inner, std::size_t cte_count) {
    Select copy = inner;
    std::string text = to_sql(copy);
    std::vector<Cte> needed;
    for (std::size_t j = cte_count; j-- > 0;) {
      if (!outer.ctes[j].query || !refers(text, outer.ctes[j].name.text)) continue;
      needed.insert(needed.begin(), outer.ctes[j]);
      text += " " + to_sql(*outer.ctes[j].query);
    }
    needed.insert(needed.end(), copy.ctes.begin(), copy.ctes.end());
    copy.ctes = std::move(needed);
    copy.recursive = copy.recursive || (!copy.ctes.empty() && outer.recursive);
    return to_sql(copy);
  };
  for (std::size_t i = 0; i < outer.ctes.size(); ++i)
    if (outer.ctes[i].query) parts.push_back(with_prefix(*outer.ctes[i].query, i));
  if (outer.core.from && outer.core.from->subquery) parts.push_back(with_prefix(*outer.core.from->subquery, outer.ctes.size()));
  for (const auto& j : outer.core.joins)
    if (j.table.subquery) parts.push_back(with_prefix(*j.table.subquery, outer.ctes.size()));

  std::vector<NlSqlPair> out;
  std::set<std::string> seen;
  const std::string whole = to_sql(ast);
  for (const auto& part : parts) {
    if (part == whole || !seen.insert(part).second) continue;
    if (!try_query(db, part)) continue;
    std::string q = phrase_question(llm, model, part, "The question \"" + one_line(nl) +
                                                          "\" is answered by a larger query; this SQL is one of its "
                                                          "parts. Phrase the simpler question it answers.");
    if (q.empty()) continue;
    out.push_back({q, part, "decomposed"});
  }
  return out;
}

std::vector<std::string> extract_all_fenced_sql(const std::string& text) {
  static const std::regex fence(R"(```[ \t]*([A-Za-z0-9_-]*)[ \t]*\r?\n([\s\S]*?)```)");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), fence); it != std::sregex_iterator(); ++it) {
    std::string lang = text::to_lower_ascii((*it)[1].str());
    std::string body = text::trim((*it)[2].str());
    if (!body.empty() && (lang.empty() || lang == "sql")) out.push_back(body);
  }
  return out;
}

std::vector<NlSqlPair> query_transfer(const NlSqlPair& source, Database& target, const KnowledgeBase* kb,
                                      LlmClient& llm, const std::string& model) {
  std::string schema;
  for (const auto& t : target.tables()) {
    std::vector<std::string> cols;
    for (const auto& c : target.schema(t).columns)
      cols.push_back(c.declared_type.empty() ? c.name : c.name + " " + c.declared_type);
    schema += "- " + t + "(" + text::join(cols, ", ") + ")\n";
  }
  std::string user = "Source question: " + one_line(source.nl) + "\nSource SQL:\n```sql\n" + text::trim(source.sql) +
                     "\n```\n\nTarget schema:\n" + schema;
  if (kb) {
    std::string known;
    std::size_t n = 0;
    for (const auto& r : kb->records()) {
      if (r.type != "table" && r.type != "column" && r.type != "enum") continue;
      if (n++ >= 40) break;
      known += "- (" + r.type + ") " + r.name + "\n";
    }
    if (!known.empty()) user += "\nKnown entities:\n" + known;
  }
  user += "\nWrite SQL queries with the same structure as the source SQL that run on the target schema and "
          "return non-empty results. Put each query in its own ```sql fenced block.";
  std::string reply = ask(llm, model, "You adapt SQL queries to new databases.", user);

  std::vector<NlSqlPair> out;
  std::set<std::string> seen;
  for (const auto& sql : extract_all_fenced_sql(reply)) {
    if (!seen.insert(sql).second) continue;
    auto result = try_query(target, sql);
    if (!result || !meaningful_result(*result)) continue;
    std::string nl = phrase_question(llm, model, sql, "");
    if (nl.empty()) continue;
    out.push_back({nl, sql, "transfer"});
  }
  return out;
}

}  // namespace kbsql
