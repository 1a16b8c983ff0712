#include "kbsql/mining.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "kbsql/log.hpp"
#include "kbsql/sql_ast.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

std::string_view to_string(Verification v) {
  switch (v) {
    case Verification::SchemaVerified: return "schema_verified";
    case Verification::ExecutionVerified: return "execution_verified";
    case Verification::Unverified: return "unverified";
  }
  return "unverified";
}

json MinedEntry::to_json() const {
  json ev{{"query", evidence.query}};
  if (evidence.sql) ev["sql"] = *evidence.sql;
  if (evidence.span) ev["span"] = {{"begin", evidence.span->begin}, {"end", evidence.span->end}, {"text", evidence.span->text}};
  return {{"candidate", kbsql::to_json(candidate)}, {"evidence", ev}, {"verification", to_string(verification)}};
}

std::vector<UkfRecord> merge_batch(const std::vector<MinedEntry>& entries) {
  std::vector<UkfRecord> out;
  for (const auto& e : entries) {
    if (e.verification != Verification::Unverified) out.push_back(e.candidate);
  }
  return out;
}

std::optional<json> extract_json(const std::string& reply) {
  auto try_parse = [](const std::string& s) -> std::optional<json> {
    json j = json::parse(s, nullptr, false);
    if (j.is_discarded() || !(j.is_object() || j.is_array())) return std::nullopt;
    return j;
  };
  auto fence = reply.find("```");
  while (fence != std::string::npos) {
    auto body = reply.find('\n', fence);
    if (body == std::string::npos) break;
    auto close = reply.find("```", body);
    if (close == std::string::npos) break;
    if (auto j = try_parse(reply.substr(body + 1, close - body - 1))) return j;
    fence = reply.find("```", close + 3);
  }
  if (auto j = try_parse(reply)) return j;
  for (char open : {'{', '['}) {
    char close = open == '{' ? '}' : ']';
    auto b = reply.find(open);
    auto e = reply.rfind(close);
    if (b != std::string::npos && e != std::string::npos && e > b) {
      if (auto j = try_parse(reply.substr(b, e - b + 1))) return j;
    }
  }
  return std::nullopt;
}

bool probe_value(Database& db, const std::string& table, const std::string& column, const std::string& value) {
  std::string sql = "SELECT 1 FROM " + quote_identifier(table) + " WHERE " + quote_identifier(column) + " = '" +
                    text::replace_all(value, "'", "''") + "' LIMIT 1";
  try {
    return !db.query(sql).rows.empty();
  } catch (const SqlFailure&) {
    return false;
  }
}

namespace {

std::string ask(LlmClient& llm, const std::string& system, const std::string& user, const std::string& model) {
  LlmParams params;
  params.model = model;
  return llm.complete({{"system", system}, {"user", user}}, params).text;
}

/// Case-insensitive view of the live schema with the physical spelling of every name.
class SchemaCatalog {
 public:
  explicit SchemaCatalog(Database& db) {
    for (const auto& t : db.tables()) {
      auto& cols = tables_[text::to_lower_ascii(t)];
      cols.first = t;
      for (const auto& c : db.schema(t).columns) cols.second[text::to_lower_ascii(c.name)] = c.name;
    }
  }
  std::optional<std::string> table(const std::string& name) const {
    auto it = tables_.find(text::to_lower_ascii(name));
    if (it == tables_.end()) return std::nullopt;
    return it->second.first;
  }
  std::optional<std::string> column(const std::string& table, const std::string& name) const {
    auto it = tables_.find(text::to_lower_ascii(table));
    if (it == tables_.end()) return std::nullopt;
    auto c = it->second.second.find(text::to_lower_ascii(name));
    if (c == it->second.second.end()) return std::nullopt;
    return c->second;
  }
  std::string describe(const std::set<std::string>& only = {}) const {
    std::string out;
    for (const auto& [_, t] : tables_) {
      if (!only.empty() && !only.count(text::to_lower_ascii(t.first))) continue;
      std::vector<std::string> cols;
      for (const auto& [__, c] : t.second) cols.push_back(c);
      out += "Table " + t.first + "(" + text::join(cols, ", ") + ")\n";
    }
    return out;
  }

 private:
  std::map<std::string, std::pair<std::string, std::map<std::string, std::string>>> tables_;
};

enum class LinkKind { Table, Column, Enum };

std::optional<LinkKind> parse_link_kind(const std::string& s) {
  std::string k = text::to_lower_ascii(s);
  if (k == "table") return LinkKind::Table;
  if (k == "column") return LinkKind::Column;
  if (k == "enum" || k == "value") return LinkKind::Enum;
  return std::nullopt;
}

struct Link {
  std::string phrase;
  LinkKind kind = LinkKind::Table;
  std::string table;
  std::string column;
  std::string value;

  auto key() const {
    return std::make_tuple(static_cast<int>(kind), text::to_lower_ascii(table), text::to_lower_ascii(column), value);
  }
};

std::string resource_string(const UkfRecord& r, const char* key) {
  const auto& cr = r.content_resources;
  if (cr.is_object() && cr.contains(key) && cr[key].is_string()) return cr[key].get<std::string>();
  return "";
}

std::optional<UkfRecord> find_target(const KnowledgeBase* kb, const Link& link) {
  if (!kb) return std::nullopt;
  for (const auto& r : kb->records()) {
    if (!text::iequals(resource_string(r, "table_id"), link.table)) continue;
    switch (link.kind) {
      case LinkKind::Table:
        if (r.type == "table") return r;
        break;
      case LinkKind::Column: {
        if (r.type != "column") break;
        std::string physical = r.name;
        const auto& cr = r.content_resources;
        if (cr.contains("predicate") && cr["predicate"].is_object() && cr["predicate"].contains("physical")) {
          physical = cr["predicate"]["physical"].get<std::string>();
        }
        if (text::iequals(physical, link.column)) return r;
        break;
      }
      case LinkKind::Enum:
        if (r.type == "enum" && text::iequals(resource_string(r, "column_id"), link.column) &&
            resource_string(r, "value") == link.value) {
          return r;
        }
        break;
    }
  }
  return std::nullopt;
}

std::optional<TextSpan> locate(const std::string& haystack, const std::string& phrase) {
  if (phrase.empty()) return std::nullopt;
  std::string h = text::to_lower_ascii(haystack);
  auto pos = h.find(text::to_lower_ascii(phrase));
  if (pos == std::string::npos) return std::nullopt;
  return TextSpan{pos, pos + phrase.size(), haystack.substr(pos, phrase.size())};
}

std::string describe_target(const Link& l) {
  switch (l.kind) {
    case LinkKind::Table: return "table " + l.table;
    case LinkKind::Column: return "column " + l.table + "." + l.column;
    case LinkKind::Enum: return "value '" + l.value + "' of " + l.table + "." + l.column;
  }
  return l.table;
}

UkfRecord link_record(const Link& l, const MiningOptions& options) {
  if (auto target = find_target(options.kb, l)) {
    UkfRecord r = *target;
    r.synonyms.insert(l.phrase);
    return r;
  }
  json target{{"kind", l.kind == LinkKind::Table ? "table" : l.kind == LinkKind::Column ? "column" : "enum"},
              {"table_id", l.table}};
  json tags = json::array({format_tag("TABLE", l.table)});
  if (l.kind != LinkKind::Table) {
    target["column_id"] = l.column;
    tags.push_back(format_tag("COLUMN", l.column));
  }
  if (l.kind == LinkKind::Enum) target["value"] = l.value;
  json spec{{"name", l.phrase},
            {"content", "\"" + l.phrase + "\" refers to the " + describe_target(l) + "."},
            {"content_resources", {{"target", target}}},
            {"synonyms", {l.phrase}},
            {"tags", tags},
            {"source", "auto"},
            {"creator", options.creator},
            {"collection", options.collection}};
  return builtin_template("Synonym").instantiate(spec);
}

Verification verify_link(Link& l, const SchemaCatalog& schema, Database& db, const std::function<void()>& before_probe) {
  auto table = schema.table(l.table);
  if (!table) return Verification::Unverified;
  l.table = *table;
  if (l.kind == LinkKind::Table) return Verification::SchemaVerified;
  auto column = schema.column(l.table, l.column);
  if (!column) return Verification::Unverified;
  l.column = *column;
  if (l.kind == LinkKind::Column) return Verification::SchemaVerified;
  if (before_probe) before_probe();
  return probe_value(db, l.table, l.column, l.value) ? Verification::ExecutionVerified : Verification::Unverified;
}

std::string sql_value(const std::string& v) {
  double d;
  if (text::parse_number(v, d)) return v;
  return "'" + text::replace_all(v, "'", "''") + "'";
}

std::string predicate_sql(const PredicateUse& p) {
  std::string col = quote_identifier(p.column);
  if ((p.op == "IN" || p.op == "NOT IN") && !p.values.empty()) {
    std::vector<std::string> vs;
    for (const auto& v : p.values) vs.push_back(sql_value(v));
    return col + " " + p.op + " (" + text::join(vs, ", ") + ")";
  }
  if ((p.op == "BETWEEN" || p.op == "NOT BETWEEN") && p.values.size() == 2) {
    return col + " " + p.op + " " + sql_value(p.values[0]) + " AND " + sql_value(p.values[1]);
  }
  if (p.op.find("LIKE") != std::string::npos || p.op.find("GLOB") != std::string::npos) {
    return col + " " + p.op + " '" + text::replace_all(p.values.at(0), "'", "''") + "'";
  }
  return col + " " + p.op + " " + sql_value(p.values.at(0));
}

std::string predicate_key(const PredicateUse& p) {
  return text::to_lower_ascii(p.column) + "\x1f" + p.op + "\x1f" + text::join(p.values, "\x1f");
}

std::optional<SqlEntities> entities_of(const std::string& sql) {
  try {
    return extract_entities(parse_sql_ast(sql));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnparsableSql) throw;
    return std::nullopt;
  }
}

struct PredicateCandidate {
  std::string table;
  std::string column;
  std::string sql;
  std::string phrase;
  std::string description;
};

MinedEntry predicate_entry(PredicateCandidate p, const std::string& nl, const std::string& gold_sql,
                           const SchemaCatalog& schema, Database& db, const MiningOptions& options) {
  MinedEntry entry;
  entry.evidence = {nl, gold_sql, locate(nl, p.phrase)};
  auto table = schema.table(p.table);
  auto column = table ? schema.column(*table, p.column) : std::nullopt;
  if (table) p.table = *table;
  if (column) p.column = *column;
  if (table && column) {
    try {
      bool hit = !db.query("SELECT 1 FROM " + quote_identifier(*table) + " WHERE " + p.sql + " LIMIT 1").rows.empty();
      entry.verification = hit ? Verification::ExecutionVerified : Verification::SchemaVerified;
    } catch (const SqlFailure&) {
      entry.verification = Verification::Unverified;
    }
  }
  json spec{{"name", p.sql},
            {"description", p.description},
            {"content", p.sql},
            {"content_resources", {{"table_id", p.table}, {"column_id", p.column}, {"sql", p.sql}}},
            {"tags", {format_tag("TABLE", p.table), format_tag("COLUMN", p.column)}},
            {"source", "auto"},
            {"creator", options.creator},
            {"collection", options.collection}};
  if (!p.phrase.empty()) spec["synonyms"] = {p.phrase};
  entry.candidate = builtin_template("Predicate").instantiate(spec);
  return entry;
}

std::string json_string(const json& j, const char* key) {
  if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
  if (j.contains(key) && j[key].is_number()) return j[key].dump();
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<UkfRecord> sie_extract(const std::string& chunk, LlmClient& llm, const std::vector<std::string>& templates,
                                   std::size_t* dropped, const MiningOptions& options) {
  if (dropped) *dropped = 0;
  if (text::trim(chunk).empty()) return {};
  std::string catalog;
  for (const auto& name : templates) {
    const UkfTemplate* t = find_builtin_template(name);
    if (!t) throw Error(ErrorCode::PreconditionViolation, "unknown template '" + name + "'");
    catalog += "- " + t->template_name + ": " + t->constructor_hint + "\n";
  }
  std::string user = "Templates:\n" + catalog + "\nText:\n" + chunk +
                     "\n\nReply with a JSON array. Each item has \"template\", \"name\", \"content\" and optionally "
                     "\"description\", \"synonyms\", \"tags\" and \"content_resources\".";
  std::string reply = ask(llm, "You turn documentation into structured knowledge records.", user, options.model);

  std::size_t bad = 0;
  auto drop = [&](const std::string& why) {
    ++bad;
    warn("sie_extract: dropped item: " + why);
  };
  std::vector<UkfRecord> out;
  auto parsed = extract_json(reply);
  if (!parsed) {
    drop("reply is not JSON");
  } else {
    json items = parsed->is_array() ? *parsed : parsed->value("records", json::array());
    for (const auto& item : items) {
      if (!item.is_object()) {
        drop("not an object");
        continue;
      }
      std::string tname = json_string(item, "template");
      bool allowed = std::any_of(templates.begin(), templates.end(),
                                 [&](const std::string& t) { return text::iequals(t, tname); });
      if (!allowed) {
        drop("template '" + tname + "' not requested");
        continue;
      }
      json spec = item;
      spec.erase("template");
      spec.erase("type");
      spec.erase("_id");
      spec["source"] = "auto";
      spec["creator"] = options.creator;
      spec["collection"] = options.collection;
      try {
        out.push_back(builtin_template(tname).instantiate(spec));
      } catch (const Error& e) {
        drop(e.what());
      } catch (const json::exception& e) {
        drop(e.what());
      }
    }
  }
  if (dropped) *dropped = bad;
  return out;
}

std::vector<MinedEntry> mine_labeled(const std::string& nl, const std::string& gold_sql, Database& db, LlmClient& llm,
                                     const std::optional<std::string>& failed_sql, const MiningOptions& options) {
  try {
    db.query(gold_sql);
  } catch (const SqlFailure& f) {
    throw Error(ErrorCode::GoldSqlFails, f.error().message);
  }
  SchemaCatalog schema(db);
  auto gold = entities_of(gold_sql);
  std::set<std::string> used;
  if (gold) {
    for (const auto& t : gold->tables) used.insert(text::to_lower_ascii(t));
  }

  std::string user = "Question: " + nl + "\nSQL:\n```sql\n" + gold_sql + "\n```\nSchema:\n" + schema.describe(used);
  if (failed_sql) {
    user += "Incorrect SQL:\n```sql\n" + *failed_sql +
            "\n```\nFind where the incorrect SQL departs from the SQL above and report each fix as a predicate.\n";
  }
  user +=
      "Reply with JSON {\"links\": [{\"phrase\", \"kind\": \"table|column|enum\", \"table\", \"column\", \"value\"}], "
      "\"predicates\": [{\"phrase\", \"table\", \"column\", \"sql\", \"description\"}]}.";
  std::string reply = ask(llm, "You link phrases of a question to the parts of the SQL query that answers it.", user,
                          options.model);
  json parsed = extract_json(reply).value_or(json::object());
  if (!parsed.is_object()) {
    warn("mine_labeled: reply is not a JSON object");
    parsed = json::object();
  }

  std::vector<MinedEntry> out;
  for (const auto& item : parsed.value("links", json::array())) {
    if (!item.is_object()) continue;
    auto kind = parse_link_kind(json_string(item, "kind"));
    Link l{json_string(item, "phrase"), kind.value_or(LinkKind::Table), json_string(item, "table"),
           json_string(item, "column"), json_string(item, "value")};
    if (!kind || l.phrase.empty() || l.table.empty() || (l.kind != LinkKind::Table && l.column.empty()) ||
        (l.kind == LinkKind::Enum && l.value.empty())) {
      warn("mine_labeled: skipped malformed link " + item.dump());
      continue;
    }
    MinedEntry entry;
    entry.verification = verify_link(l, schema, db, nullptr);
    entry.evidence = {nl, gold_sql, locate(nl, l.phrase)};
    entry.candidate = link_record(l, options);
    out.push_back(std::move(entry));
  }

  std::vector<PredicateCandidate> preds;
  std::map<std::string, std::size_t> by_sql;
  auto add_pred = [&](PredicateCandidate p) {
    auto it = by_sql.find(p.sql);
    if (it != by_sql.end()) {
      auto& existing = preds[it->second];
      if (existing.phrase.empty()) existing.phrase = p.phrase;
      if (existing.description.empty()) existing.description = p.description;
      return;
    }
    by_sql[p.sql] = preds.size();
    preds.push_back(std::move(p));
  };
  std::string single_table = gold && gold->tables.size() == 1 ? *gold->tables.begin() : "";
  if (failed_sql && gold) {
    std::set<std::string> failed_keys;
    if (auto failed = entities_of(*failed_sql)) {
      for (const auto& p : failed->predicates) failed_keys.insert(predicate_key(p));
    }
    for (const auto& p : gold->predicates) {
      if (failed_keys.count(predicate_key(p)) || p.values.empty()) continue;
      add_pred({p.table.empty() ? single_table : p.table, p.column, predicate_sql(p), "", ""});
    }
  }
  for (const auto& item : parsed.value("predicates", json::array())) {
    if (!item.is_object()) continue;
    PredicateCandidate p{json_string(item, "table"), json_string(item, "column"), json_string(item, "sql"),
                         json_string(item, "phrase"), json_string(item, "description")};
    if (p.table.empty()) p.table = single_table;
    // Normalize through the AST when the condition is a plain column-vs-literal predicate.
    if (auto ent = entities_of("SELECT 1 FROM t WHERE " + p.sql); ent && ent->predicates.size() == 1) {
      p.column = p.column.empty() ? ent->predicates[0].column : p.column;
      p.sql = predicate_sql(ent->predicates[0]);
    }
    if (p.sql.empty() || p.column.empty()) {
      warn("mine_labeled: skipped malformed predicate " + item.dump());
      continue;
    }
    add_pred(std::move(p));
  }
  for (auto& p : preds) out.push_back(predicate_entry(std::move(p), nl, gold_sql, schema, db, options));
  return out;
}

std::vector<MinedEntry> mine_unlabeled(const std::string& nl, Database& db, const KnowledgeBase& kb, LlmClient& llm,
                                       std::size_t budget, MiningOptions options) {
  options.kb = &kb;
  std::vector<MinedEntry> out;
  std::size_t left = budget;
  auto spend = [&](const std::string& what) {
    if (left == 0) throw BudgetExhaustedError(out, "tool budget of " + std::to_string(budget) + " spent before " + what);
    --left;
  };

  spend("keyword extraction");
  std::string reply = ask(llm, "You pick out phrases that may name database tables, columns or stored values.",
                          "Question: " + nl + "\nReply with a JSON array of phrases.", options.model);
  std::vector<std::string> keywords;
  if (auto j = extract_json(reply); j && j->is_array()) {
    for (const auto& k : *j) {
      if (k.is_string() && !text::trim(k.get<std::string>()).empty()) keywords.push_back(text::trim(k.get<std::string>()));
    }
  } else {
    warn("mine_unlabeled: keyword reply is not a JSON array");
  }

  std::shared_ptr<const DbProfile> profile = options.profile;
  if (!profile) profile = std::make_shared<DbProfile>(profile_db(db));
  const Embedder* embedder = options.embedder.get();

  // Retrieval path: fuzzy lookups per keyword.
  std::map<decltype(Link{}.key()), Link> retrieved;
  auto keep = [&](Link l) { retrieved.emplace(l.key(), std::move(l)); };
  std::vector<std::string> table_names, table_labels;
  for (const auto& t : profile->tables) {
    table_names.push_back(t.name);
    table_labels.push_back(text::replace_all(t.name, "_", " "));
  }
  auto split_id = [](const std::string& id) {
    auto dot = id.find('.');
    return std::make_pair(id.substr(0, dot), dot == std::string::npos ? "" : id.substr(dot + 1));
  };
  for (const auto& kw : keywords) {
    spend("fuzzy lookup of '" + kw + "'");
    for (const auto& h : fuzzy_enum(*profile, kw, options.fuzzy_k, embedder)) {
      if (h.score < options.min_fuzzy_score) continue;
      auto [t, c] = split_id(h.detail);
      keep({kw, LinkKind::Enum, t, c, h.value});
    }
    for (const auto& h : fuzzy_column(*profile, kw, options.fuzzy_k, embedder)) {
      if (h.score < options.min_fuzzy_score) continue;
      auto [t, c] = split_id(h.detail);
      keep({kw, LinkKind::Column, t, c, ""});
    }
    for (const auto& h : fuzzy_match(table_labels, kw, options.fuzzy_k, embedder)) {
      if (h.score < options.min_fuzzy_score) continue;
      auto idx = std::find(table_labels.begin(), table_labels.end(), h.value) - table_labels.begin();
      keep({kw, LinkKind::Table, table_names[idx], "", ""});
    }
  }

  // Pseudo-label path: entities of a generated SQL, correct or not.
  SchemaCatalog schema(db);
  spend("pseudo-label generation");
  std::string gen = ask(llm, "You write SQLite queries.",
                        "Schema:\n" + schema.describe() + "Question: " + nl + "\nAnswer with one ```sql fenced block.",
                        options.model);
  auto pseudo_sql = extract_fenced_sql(gen);
  std::set<decltype(Link{}.key())> labeled;
  if (pseudo_sql) {
    if (auto ent = entities_of(*pseudo_sql)) {
      for (const auto& t : ent->tables) labeled.insert(Link{"", LinkKind::Table, t, "", ""}.key());
      for (const auto& c : ent->columns) {
        if (!c.table.empty()) labeled.insert(Link{"", LinkKind::Column, c.table, c.column, ""}.key());
      }
      for (const auto& p : ent->predicates) {
        if (p.table.empty() || (p.op != "=" && p.op != "IN")) continue;
        for (const auto& v : p.values) labeled.insert(Link{"", LinkKind::Enum, p.table, p.column, v}.key());
      }
    }
  } else {
    warn("mine_unlabeled: no SQL in pseudo-label reply");
  }

  for (auto& [key, link] : retrieved) {
    if (!labeled.count(key)) continue;
    std::string target_name = link.kind == LinkKind::Table    ? link.table
                              : link.kind == LinkKind::Column ? link.column
                                                              : link.value;
    if (text::iequals(link.phrase, target_name) || text::iequals(link.phrase, text::replace_all(target_name, "_", " "))) {
      continue;  // nothing new to learn
    }
    MinedEntry entry;
    entry.verification = verify_link(link, schema, db, [&] { spend("probe of '" + link.value + "'"); });
    entry.evidence = {nl, pseudo_sql, locate(nl, link.phrase)};
    entry.candidate = link_record(link, options);
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace kbsql
