#include "kbsql/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "kbsql/curation.hpp"
#include "kbsql/errors.hpp"
#include "kbsql/eval.hpp"
#include "kbsql/index.hpp"
#include "kbsql/log.hpp"
#include "kbsql/mining.hpp"
#include "kbsql/profiler.hpp"
#include "kbsql/text.hpp"
#include "kbsql/workflow.hpp"

namespace kbsql {

LlmResponse TracingClient::complete(const std::vector<ChatMessage>& messages, const LlmParams& params) {
  {
    std::lock_guard lock(mutex_);
    digests_.push_back(request_digest(messages, params));
  }
  return inner_->complete(messages, params);
}

std::vector<std::string> TracingClient::digests() const {
  std::lock_guard lock(mutex_);
  auto out = digests_;
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t TracingClient::calls() const {
  std::lock_guard lock(mutex_);
  return digests_.size();
}

namespace {

IndexOptions index_options(const Config& c) {
  IndexOptions o;
  o.vector_k = c.vector_k;
  o.mode = parse_search_mode(c.search_mode);
  o.mmr_lambda = c.mmr_lambda;
  o.query_serializers.clear();
  for (const auto& s : c.serializers) o.query_serializers.push_back(parse_serializer(s));
  return o;
}

RagOptions rag_options(const Config& c) {
  RagOptions o;
  o.mode = parse_rag_mode(c.rag_mode);
  o.vector_k = c.vector_k;
  o.policy = parse_fusion_policy(c.fusion);
  o.model = c.llm.model("rag");
  return o;
}

std::optional<Timestamp> parse_time_arg(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (auto t = parse_rfc3339(s)) return t;
  if (auto t = parse_rfc3339(s + "T00:00:00Z")) return t;
  throw Error(ErrorCode::Parse, "bad time '" + s + "', expected YYYY-MM-DD or RFC 3339");
}

json preview_json(Database& db, const std::string& sql, std::size_t rows) {
  auto r = execute_sql_tool(db, sql, rows);
  json j = r.to_json();
  j.erase("summary");
  return j;
}

std::vector<json> read_jsonl(const std::string& text, std::vector<std::string>* errors) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      if (!errors) throw Error(ErrorCode::Parse, "line " + std::to_string(n) + ": " + e.what());
      errors->push_back("line " + std::to_string(n) + ": malformed JSON");
      out.push_back(nullptr);
    }
  }
  return out;
}

std::string read_text(const std::string& path) {
  if (path == "-") {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

UkfRecord record_from_doc(const json& doc) {
  if (doc.contains("_id") && doc.contains("_content_hash")) return record_from_json(doc);
  if (doc.contains("template")) {
    json spec = doc;
    std::string t = spec["template"].get<std::string>();
    spec.erase("template");
    return builtin_template(t).instantiate(spec);
  }
  return new_record(doc);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

std::string csv_cell(const json& v) {
  if (v.is_string()) return csv_field(v.get<std::string>());
  if (v.is_null()) return "";
  return csv_field(v.dump());
}

/// Array of flat objects as JSON or CSV with the given column order.
void write_table(std::ostream& out, const std::string& format, const std::vector<std::string>& columns,
                 const json& rows) {
  if (format == "json") {
    out << rows.dump(2) << "\n";
    return;
  }
  out << text::join(columns, ",") << "\n";
  for (const auto& r : rows) {
    std::vector<std::string> cells;
    for (const auto& c : columns) cells.push_back(r.contains(c) ? csv_cell(r[c]) : "");
    out << text::join(cells, ",") << "\n";
  }
}

/// Single object as JSON, or as a two-column key,value CSV.
void write_object(std::ostream& out, const std::string& format, const json& obj) {
  if (format == "json") {
    out << obj.dump(2) << "\n";
    return;
  }
  out << "key,value\n";
  for (const auto& [k, v] : obj.items()) out << csv_field(k) << "," << csv_cell(v) << "\n";
}

json merge_counts(const MergeReport& r) {
  return {{"merged_synonyms", r.merged_synonyms.size()},
          {"discarded_conflicts", r.discarded_conflicts.size()},
          {"dropped_same_id", r.dropped_same_id.size()},
          {"inserted_low_priority", r.inserted_low_priority.size()}};
}

}  // namespace

// ---------------------------------------------------------------------------

json cmd_ask(const std::string& query, const Config& config, const AskOptions& options) {
  if (text::trim(query).empty()) throw Error(ErrorCode::EmptyQuery, "empty query");
  auto db = open_configured_db(config);
  auto kb = open_configured_kb(config);
  IndexSet indexes(*kb, make_configured_embedder(config), default_lemmatizer(), index_options(config));

  GenerationOptions gen;
  gen.dialect = db->dialect();
  gen.context = options.context;

  if (options.dry_run) {
    RagOptions ro = rag_options(config);
    ro.mode = RagMode::Static;
    ro.summarize = false;
    auto bundle = rag_retrieve(query, options.context, &indexes, ro, nullptr);
    return {{"prompt", generation_prompt(query, bundle, gen)}};
  }

  auto llm = std::make_shared<TracingClient>(make_configured_llm(config));
  auto bundle = rag_retrieve(query, options.context, &indexes, rag_options(config), llm.get());

  LlmParams params;
  params.model = config.llm.model("gen");
  SqlCandidate candidate;
  std::string decided_by = "single";
  if (!config.ladder.empty() || config.tts_n > 1) {
    std::vector<Rung> ladder = config.ladder;
    if (ladder.empty()) ladder.push_back({params.model, config.tts_n});
    CascadeOptions co;
    co.deadline_ms = config.deadline_ms;
    co.tie.kind = parse_tie_breaker(config.tie_breaker);
    co.tie.judge = llm.get();
    co.tie.judge_model = config.llm.model("judge");
    for (const auto& r : ladder) co.tie.preferred_models.push_back(r.model);
    co.generation = gen;
    co.generation.simulate_latency = true;
    co.temperature = config.temperature;
    auto result = cascade(ladder, query, bundle, *db, *llm, co);
    candidate = result.winner;
    decided_by = result.decided_by;
  } else {
    candidate = generate_sql(query, bundle, *llm, params, *db, gen);
  }
  auto refined = refine_sql(query, candidate, bundle, *db, *llm, config.refine_rounds, params);

  json trace{{"knowledge_ids", bundle.ids()},
             {"prompt_digests", llm->digests()},
             {"llm_calls", llm->calls()},
             {"model", refined.model},
             {"decided_by", decided_by},
             {"refined", refined.sql != candidate.sql}};
  return {{"query", query},
          {"sql", refined.sql},
          {"result_preview", preview_json(*db, refined.sql, options.preview_rows)},
          {"trace", trace}};
}

json cmd_update(const std::string& jsonl, const Config& config, const UpdateOptions& options) {
  std::vector<std::string> errors;
  auto items = read_jsonl(jsonl, &errors);
  json report{{"items", 0}, {"labeled", 0}, {"unlabeled", 0}, {"mined_entries", 0}, {"unverified", 0},
              {"profiled_sql", 0}};
  report.update(merge_counts({}));
  std::size_t item_count = 0;
  for (const auto& it : items)
    if (!it.is_null()) ++item_count;
  report["items"] = item_count + errors.size();
  if (item_count == 0) {
    report["errors"] = errors.size();
    report["error_messages"] = errors;
    return report;
  }

  auto db = open_configured_db(config);
  auto kb = open_configured_kb(config);
  auto llm = make_configured_llm(config);
  auto embedder = make_configured_embedder(config);
  MiningOptions mo;
  mo.model = config.llm.model("miner");
  mo.kb = kb.get();
  mo.embedder = embedder;
  ProfileSqlOptions po;
  po.model = config.llm.model("profiler");

  std::vector<UkfRecord> batch;
  std::size_t labeled = 0, unlabeled = 0, mined = 0, unverified = 0, profiled = 0;
  std::size_t line = 0;
  for (const auto& item : items) {
    ++line;
    if (item.is_null()) continue;
    try {
      if (!item.is_object() || !item.contains("nl") || !item["nl"].is_string())
        throw Error(ErrorCode::Parse, "item needs a string \"nl\"");
      std::string nl = item["nl"].get<std::string>();
      json context = item.value("context", json::object());
      std::vector<MinedEntry> entries;
      if (item.contains("sql") && item["sql"].is_string()) {
        ++labeled;
        std::string sql = item["sql"].get<std::string>();
        entries = mine_labeled(nl, sql, *db, *llm, std::nullopt, mo);
        Timestamp when = now_utc();
        if (options.query_time) when = *options.query_time;
        if (context.contains("query_time")) when = *parse_time_arg(context["query_time"].get<std::string>());
        auto profiled_sql = profile_sql(nl, sql, when, KnowledgeBundle{}, *db, llm.get(), po);
        json spec{{"name", nl},
                  {"content", profiled_sql.commented_sql},
                  {"content_resources",
                   {{"sql", sql}, {"query", nl}, {"result_schema", profiled_sql.result_schema}}},
                  {"source", "auto"},
                  {"creator", "curator"},
                  {"collection", "experience"}};
        batch.push_back(builtin_template("Experience").instantiate(spec));
        ++profiled;
      } else {
        ++unlabeled;
        try {
          entries = mine_unlabeled(nl, *db, *kb, *llm, config.mining_budget, mo);
        } catch (const BudgetExhaustedError& e) {
          warn("line " + std::to_string(line) + ": " + e.what());
          entries = e.partial();
        }
      }
      mined += entries.size();
      for (const auto& e : entries)
        if (e.verification == Verification::Unverified) ++unverified;
      auto recs = merge_batch(entries);
      batch.insert(batch.end(), recs.begin(), recs.end());
    } catch (const Error& e) {
      errors.push_back("line " + std::to_string(line) + ": " + e.what());
    }
  }
  MergeReport merged = kb->merge_incoming(std::move(batch));
  IndexSet indexes(*kb, embedder, default_lemmatizer(), index_options(config));

  report["labeled"] = labeled;
  report["unlabeled"] = unlabeled;
  report["mined_entries"] = mined;
  report["unverified"] = unverified;
  report["profiled_sql"] = profiled;
  report.update(merge_counts(merged));
  report["kb_records"] = kb->size();
  report["index_fresh"] = indexes.fresh();
  report["errors"] = errors.size();
  report["error_messages"] = errors;
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct Globals {
  std::string config_path;
  std::string format = "json";
};

Config load(const Globals& g) {
  std::optional<std::filesystem::path> p;
  if (!g.config_path.empty()) p = g.config_path;
  return resolve_config(p);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::EmptyQuery:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-base driven NL-to-SQL toolkit", "kbsql"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "YAML config file (RUBIK_CONFIG takes precedence)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  std::function<int()> action;

  // db ----------------------------------------------------------------------
  auto* dbcmd = app.add_subcommand("db", "Database utilities");
  dbcmd->require_subcommand(1);
  std::string script_file;
  auto* db_load = dbcmd->add_subcommand("load", "Execute a SQL script against the configured database");
  db_load->add_option("script", script_file)->required();
  db_load->callback([&] {
    action = [&] {
      auto c = load(g);
      std::string path = c.db.rfind("sqlite:", 0) == 0 ? c.db.substr(7) : c.db;
      if (path != ":memory:" && path.rfind("file:", 0) != 0) path = c.resolve(path).string();
      SqliteDatabase db(path, SqliteDatabase::Mode::Create);
      db.execute_script(read_text(script_file));
      json tables = db.tables();
      write_object(out, g.format, {{"tables", tables}});
      return kExitOk;
    };
  });

  // kb ----------------------------------------------------------------------
  auto* kb = app.add_subcommand("kb", "Knowledge base lifecycle");
  kb->require_subcommand(1);
  kb->add_subcommand("init", "Create an empty knowledge base")->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      write_object(out, g.format, {{"path", c.resolve(c.kb_path).string()}, {"records", k->size()}});
      return kExitOk;
    };
  });
  std::string import_file, import_trust = "labeled";
  auto* kb_import = kb->add_subcommand("import", "Insert UKF records from a JSONL or JSON array file");
  kb_import->add_option("file", import_file)->required();
  kb_import->add_option("--trust", import_trust)->check(CLI::IsMember({"schema", "labeled", "human_verified", "mined"}));
  kb_import->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      std::string body = read_text(import_file);
      std::vector<json> docs;
      auto trimmed = text::trim(body);
      if (!trimmed.empty() && trimmed.front() == '[') {
        for (const auto& d : json::parse(trimmed)) docs.push_back(d);
      } else {
        docs = read_jsonl(body, nullptr);
      }
      std::vector<UkfRecord> records;
      for (const auto& d : docs) records.push_back(record_from_doc(d));
      TrustMark trust = parse_trust(import_trust);
      json result{{"inserted", 0}, {"skipped", json::array()}};
      if (trust == TrustMark::Mined) {
        result = merge_counts(k->merge_incoming(std::move(records)));
      } else {
        std::size_t inserted = 0;
        for (auto& r : records) {
          std::string id = r.id;
          try {
            k->insert(std::move(r), trust);
            ++inserted;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::DuplicateLiveId) throw;
            result["skipped"].push_back(id);
          }
        }
        result["inserted"] = inserted;
      }
      result["records"] = k->size();
      write_object(out, g.format, result);
      return kExitOk;
    };
  });
  std::string list_type;
  auto* kb_list = kb->add_subcommand("list", "List records");
  kb_list->add_option("--type", list_type);
  kb_list->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      json rows = json::array();
      for (const auto& s : k->stored_records()) {
        if (!list_type.empty() && s.record.type != list_type) continue;
        rows.push_back({{"id", s.record.id},
                        {"type", s.record.type},
                        {"name", s.record.name},
                        {"trust", std::string(to_string(s.trust))},
                        {"priority", s.record.priority}});
      }
      write_table(out, g.format, {"id", "type", "name", "trust", "priority"}, rows);
      return kExitOk;
    };
  });
  std::string show_id;
  auto* kb_show = kb->add_subcommand("show", "Print one record");
  kb_show->add_option("id", show_id)->required();
  kb_show->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      auto r = k->get(show_id);
      if (!r) throw Error(ErrorCode::UnknownId, show_id);
      out << to_json(*r).dump(2) << "\n";
      return kExitOk;
    };
  });
  std::string merge_file;
  auto* kb_merge = kb->add_subcommand("merge", "Merge a JSONL batch of records with the merge rules");
  kb_merge->add_option("file", merge_file)->required();
  kb_merge->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      std::vector<UkfRecord> batch;
      for (const auto& d : read_jsonl(read_text(merge_file), nullptr)) batch.push_back(record_from_doc(d));
      auto report = k->merge_incoming(std::move(batch));
      if (g.format == "json")
        out << report.to_json().dump(2) << "\n";
      else
        write_object(out, g.format, merge_counts(report));
      return kExitOk;
    };
  });

  // index -------------------------------------------------------------------
  auto* index = app.add_subcommand("index", "Build and query the retrieval indices");
  index->require_subcommand(1);
  index->add_subcommand("build", "Build every index and report its size")->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      IndexSet idx(*k, make_configured_embedder(c), default_lemmatizer(), index_options(c));
      auto snap = idx.snapshot();
      json r{{"records", k->size()}, {"facet_records", idx.facets().size()}, {"kb_revision", snap.kb_revision},
             {"fresh", idx.fresh()}};
      for (auto s : all_serializers())
        r["vector_" + std::string(to_string(s))] = snap.vectors ? snap.vectors->size(s) : 0;
      write_object(out, g.format, r);
      return kExitOk;
    };
  });
  std::string search_query, search_context = "{}";
  auto* index_search = index->add_subcommand("search", "Static retrieval for a question");
  index_search->add_option("query", search_query)->required();
  index_search->add_option("--context", search_context, "JSON context for triggers");
  index_search->callback([&] {
    action = [&] {
      auto c = load(g);
      auto k = open_configured_kb(c);
      IndexSet idx(*k, make_configured_embedder(c), default_lemmatizer(), index_options(c));
      RagOptions ro = rag_options(c);
      ro.mode = RagMode::Static;
      auto bundle = rag_retrieve(search_query, json::parse(search_context), &idx, ro, nullptr);
      write_table(out, g.format, {"id", "type", "name", "source", "score"}, bundle.to_json());
      return kExitOk;
    };
  });

  // profile -----------------------------------------------------------------
  auto* profile = app.add_subcommand("profile", "Database and SQL profiling");
  profile->require_subcommand(1);
  std::string profile_out, as_of;
  bool into_kb = false, annotate = false;
  auto* profile_db_cmd = profile->add_subcommand("db", "Profile the configured database");
  profile_db_cmd->add_option("--out", profile_out, "Write one UKF file per record into this directory");
  profile_db_cmd->add_flag("--into-kb", into_kb, "Insert the records into the knowledge base as schema knowledge");
  profile_db_cmd->add_flag("--annotate", annotate, "Ask the LLM to annotate column types");
  profile_db_cmd->add_option("--as-of", as_of, "Timestamp stamped on the records (YYYY-MM-DD)");
  profile_db_cmd->callback([&] {
    action = [&] {
      auto c = load(g);
      auto db = open_configured_db(c);
      std::shared_ptr<LlmClient> llm = annotate ? make_configured_llm(c) : nullptr;
      DbProfile p = profile_db(*db, llm.get());
      auto records = profile_to_ukf(p);
      if (auto when = parse_time_arg(as_of)) {
        for (auto& r : records) {
          r.timestamp = *when;
          r.last_verified = *when;
          rehash(r);
        }
      }
      if (!profile_out.empty()) {
        std::filesystem::create_directories(profile_out);
        for (const auto& r : records) {
          std::ofstream f(std::filesystem::path(profile_out) / (r.id + ".json"), std::ios::binary);
          f << to_json(r).dump(2) << "\n";
        }
      }
      std::size_t inserted = 0;
      if (into_kb) {
        auto k = open_configured_kb(c);
        for (auto& r : records) {
          if (k->contains(r.id)) continue;
          k->insert(r, TrustMark::Schema);
          ++inserted;
        }
      }
      json rows = json::array();
      for (const auto& t : p.tables) {
        std::size_t cols = t.columns.size();
        rows.push_back({{"table", t.name}, {"rows", t.row_count}, {"columns", cols}});
      }
      if (g.format == "json")
        out << json{{"tables", rows}, {"records", records.size()}, {"inserted", inserted}}.dump(2) << "\n";
      else
        write_table(out, g.format, {"table", "rows", "columns"}, rows);
      return kExitOk;
    };
  });
  std::string psql_nl, psql_sql, psql_time;
  auto* profile_sql_cmd = profile->add_subcommand("sql", "Annotate a SQL query with a profile header");
  profile_sql_cmd->add_option("--nl", psql_nl);
  profile_sql_cmd->add_option("--sql", psql_sql)->required();
  profile_sql_cmd->add_option("--query-time", psql_time);
  profile_sql_cmd->callback([&] {
    action = [&] {
      auto c = load(g);
      auto db = open_configured_db(c);
      auto llm = make_configured_llm(c);
      ProfileSqlOptions po;
      po.model = c.llm.model("profiler");
      auto when = parse_time_arg(psql_time).value_or(now_utc());
      auto p = profile_sql(psql_nl, psql_sql, when, KnowledgeBundle{}, *db, llm.get(), po);
      write_object(out, g.format, p.to_json());
      return kExitOk;
    };
  });

  // eval --------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Score predicted SQL against gold SQL");
  eval->require_subcommand(1);
  std::string eval_in;
  std::optional<double> eval_beta;
  unsigned eval_workers = 4;
  for (const char* metric : {"bfbeta", "ex"}) {
    auto* sub = eval->add_subcommand(metric, std::string("Batch report (") + metric + ") over JSONL {id, pred_sql, gold_sql}");
    sub->add_option("--in", eval_in)->required();
    sub->add_option("--beta", eval_beta);
    sub->add_option("--workers", eval_workers);
    sub->callback([&] {
      action = [&] {
        auto c = load(g);
        auto db = open_configured_db(c);
        std::vector<EvalPair> pairs;
        std::size_t n = 0;
        for (const auto& d : read_jsonl(read_text(eval_in), nullptr)) {
          ++n;
          pairs.push_back({d.value("id", std::to_string(n)), d.at("pred_sql").get<std::string>(),
                           d.at("gold_sql").get<std::string>()});
        }
        auto report = batch_accuracy(pairs, *db, eval_beta.value_or(c.eval_beta), eval_workers);
        if (g.format == "csv")
          out << report.to_csv();
        else
          out << report.to_json().dump(2) << "\n";
        return kExitOk;
      };
    });
  }

  // ask ---------------------------------------------------------------------
  std::string ask_query, ask_context = "{}";
  bool dry_run = false;
  auto* ask = app.add_subcommand("ask", "Answer a question with SQL");
  ask->add_option("query", ask_query);
  ask->add_option("--context", ask_context, "JSON context (user profile, query time, ...)");
  ask->add_flag("--dry-run", dry_run, "Print the generation prompt without calling the LLM");
  ask->callback([&] {
    action = [&] {
      if (text::trim(ask_query).empty()) {
        err << "usage: kbsql ask <query> [--dry-run] [--context JSON]\n";
        return kExitUsage;
      }
      auto c = load(g);
      AskOptions ao;
      ao.dry_run = dry_run;
      ao.context = json::parse(ask_context);
      json r = cmd_ask(ask_query, c, ao);
      if (dry_run) {
        out << r["prompt"].get<std::string>() << "\n";
      } else if (g.format == "csv") {
        const auto& p = r["result_preview"];
        json rows = json::array();
        std::vector<std::string> cols;
        if (p.contains("columns")) cols = p["columns"].get<std::vector<std::string>>();
        for (const auto& row : p.value("rows", json::array())) {
          json obj = json::object();
          for (std::size_t i = 0; i < cols.size() && i < row.size(); ++i) obj[cols[i]] = row[i];
          rows.push_back(obj);
        }
        write_table(out, "csv", cols, rows);
      } else {
        out << r.dump(2) << "\n";
      }
      return kExitOk;
    };
  });

  // update ------------------------------------------------------------------
  std::string update_in, update_time;
  auto* update = app.add_subcommand("update", "Mine and merge knowledge from a JSONL batch of questions");
  update->add_option("--in", update_in)->required();
  update->add_option("--query-time", update_time, "Default query time for profiled SQL");
  update->callback([&] {
    action = [&] {
      auto c = load(g);
      UpdateOptions uo;
      uo.query_time = parse_time_arg(update_time);
      json r = cmd_update(read_text(update_in), c, uo);
      write_object(out, g.format, r);
      return r["errors"].get<std::size_t>() == 0 || r["errors"].get<std::size_t>() < r["items"].get<std::size_t>()
                 ? kExitOk
                 : kExitFailure;
    };
  });

  // mine --------------------------------------------------------------------
  auto* mine = app.add_subcommand("mine", "Mine knowledge candidates from questions");
  mine->require_subcommand(1);
  std::string mine_in;
  bool mine_merge = false;
  for (const char* mode : {"labeled", "unlabeled"}) {
    auto* sub = mine->add_subcommand(mode, std::string("Mine from ") + mode + " JSONL {nl, sql?}");
    sub->add_option("--in", mine_in)->required();
    sub->add_flag("--merge", mine_merge, "Merge verified candidates into the knowledge base");
    const bool labeled = std::string(mode) == "labeled";
    sub->callback([&, labeled] {
      action = [&, labeled] {
        auto c = load(g);
        auto db = open_configured_db(c);
        auto k = open_configured_kb(c);
        auto llm = make_configured_llm(c);
        MiningOptions mo;
        mo.model = c.llm.model("miner");
        mo.kb = k.get();
        mo.embedder = make_configured_embedder(c);
        std::vector<std::string> errors;
        json entries = json::array();
        std::vector<MinedEntry> all;
        std::size_t line = 0;
        for (const auto& d : read_jsonl(read_text(mine_in), &errors)) {
          ++line;
          if (d.is_null()) continue;
          try {
            std::string nl = d.at("nl").get<std::string>();
            std::vector<MinedEntry> got;
            if (labeled) {
              std::optional<std::string> failed;
              if (d.contains("failed_sql")) failed = d["failed_sql"].get<std::string>();
              got = mine_labeled(nl, d.at("sql").get<std::string>(), *db, *llm, failed, mo);
            } else {
              try {
                got = mine_unlabeled(nl, *db, *k, *llm, c.mining_budget, mo);
              } catch (const BudgetExhaustedError& e) {
                errors.push_back("line " + std::to_string(line) + ": " + e.what());
                got = e.partial();
              }
            }
            for (const auto& e : got) entries.push_back(e.to_json());
            all.insert(all.end(), got.begin(), got.end());
          } catch (const std::exception& e) {
            errors.push_back("line " + std::to_string(line) + ": " + e.what());
          }
        }
        json result{{"entries", entries}, {"errors", errors}};
        if (mine_merge) result["report"] = k->merge_incoming(merge_batch(all)).to_json();
        out << result.dump(2) << "\n";
        return kExitOk;
      };
    });
  }

  // curate ------------------------------------------------------------------
  auto* curate = app.add_subcommand("curate", "Distillation data curation");
  curate->require_subcommand(1);
  std::string curate_in;
  std::size_t budget = 0;
  bool by_brevity = true;
  auto* score = curate->add_subcommand("score", "Fill H, Q, V and S for JSONL curation records");
  score->add_option("--in", curate_in)->required();
  score->callback([&] {
    action = [&] {
      auto c = load(g);
      std::vector<CurationRecord> recs;
      for (const auto& d : read_jsonl(read_text(curate_in), nullptr)) recs.push_back(CurationRecord::from_json(d));
      std::shared_ptr<LlmClient> judge;
      QualityOptions qo;
      qo.model = c.llm.model("judge");
      qo.t_max = c.t_max;
      std::vector<std::string> nls;
      for (auto& r : recs) {
        std::vector<bool> outcomes;
        for (const auto& o : r.model_outcomes) outcomes.push_back(o.correct);
        r.h = hardness(outcomes);
        if (r.quality_dims.empty()) {
          if (!judge) judge = make_configured_llm(c);
          auto q = quality(r.cot, *judge, count_tokens, qo);
          r.quality_dims = q.dims;
        }
        r.q = 0;
        for (const auto& [_, v] : r.quality_dims) r.q += v;
        nls.push_back(r.nl);
      }
      if (recs.size() > 1) {
        auto v = diversity(nls, std::min(c.diversity_k, recs.size() - 1), *make_configured_embedder(c));
        for (std::size_t i = 0; i < recs.size(); ++i) recs[i].v = v[i];
      }
      CurationCoefficients co{c.alpha, c.beta_q, c.gamma};
      for (auto& r : recs) r.s = curation_score(r, co);
      out << to_jsonl(recs);
      return kExitOk;
    };
  });
  auto* select = curate->add_subcommand("select", "Keep the top-scored JSONL curation records");
  select->add_option("--in", curate_in)->required();
  select->add_option("--budget", budget)->required();
  select->add_flag("!--no-brevity-tie", by_brevity, "Break ties by input order instead of shorter reasoning");
  select->callback([&] {
    action = [&] {
      auto c = load(g);
      std::vector<CurationRecord> recs;
      for (const auto& d : read_jsonl(read_text(curate_in), nullptr)) recs.push_back(CurationRecord::from_json(d));
      CurationTieBreaker tie;
      if (by_brevity) tie = shorter_cot_first;
      out << to_jsonl(select_top(std::move(recs), {c.alpha, c.beta_q, c.gamma}, tie, budget));
      return kExitOk;
    };
  });
  auto* synth = curate->add_subcommand("synthesize", "Compose seed queries into new question/SQL pairs");
  synth->add_option("--in", curate_in, "JSON {seeds, templates, ontology, indicators, max_variants, seed}")->required();
  synth->callback([&] {
    action = [&] {
      auto c = load(g);
      auto db = open_configured_db(c);
      auto llm = make_configured_llm(c);
      json spec = json::parse(read_text(curate_in));
      std::vector<SeedQuery> seeds;
      for (const auto& s : spec.at("seeds")) seeds.push_back({s.at("name"), s.at("sql")});
      std::vector<ComposeTemplate> templates;
      for (const auto& t : spec.value("templates", json::array({"with", "union", "join"})))
        templates.push_back(parse_compose_template(t.get<std::string>()));
      std::vector<OntologyGroup> ontology;
      for (const auto& o : spec.value("ontology", json::array()))
        ontology.push_back({o.at("name"), o.at("predicates").get<std::vector<std::string>>()});
      ComposeOptions co;
      co.model = c.llm.model("synth");
      for (const auto& i : spec.value("indicators", json::array()))
        co.indicators.push_back({i.at("name"), i.at("expression"), i.at("inputs").get<std::vector<std::string>>()});
      co.max_variants = spec.value("max_variants", co.max_variants);
      co.seed = spec.value("seed", co.seed);
      for (const auto& p : synthesize_composed(seeds, templates, ontology, *llm, *db, co))
        out << p.to_json().dump() << "\n";
      return kExitOk;
    };
  });
  std::string pair_nl, pair_sql;
  auto* decompose = curate->add_subcommand("decompose", "Split a question/SQL pair into executable parts");
  decompose->add_option("--nl", pair_nl)->required();
  decompose->add_option("--sql", pair_sql)->required();
  decompose->callback([&] {
    action = [&] {
      auto c = load(g);
      auto db = open_configured_db(c);
      auto llm = make_configured_llm(c);
      for (const auto& p : synthesize_decomposed(pair_nl, pair_sql, *llm, *db, c.llm.model("synth")))
        out << p.to_json().dump() << "\n";
      return kExitOk;
    };
  });
  auto* transfer = curate->add_subcommand("transfer", "Adapt a question/SQL pair to the configured database");
  transfer->add_option("--nl", pair_nl)->required();
  transfer->add_option("--sql", pair_sql)->required();
  transfer->callback([&] {
    action = [&] {
      auto c = load(g);
      auto db = open_configured_db(c);
      auto k = open_configured_kb(c);
      auto llm = make_configured_llm(c);
      for (const auto& p : query_transfer({pair_nl, pair_sql, ""}, *db, k.get(), *llm, c.llm.model("synth")))
        out << p.to_json().dump() << "\n";
      return kExitOk;
    };
  });
  std::string cot_nl, cot_sql;
  int max_repairs = 2;
  auto* cot = curate->add_subcommand("cot", "Generate verified reasoning for a question/SQL pair");
  cot->add_option("--nl", cot_nl)->required();
  cot->add_option("--sql", cot_sql)->required();
  cot->add_option("--max-repairs", max_repairs);
  cot->callback([&] {
    action = [&] {
      auto c = load(g);
      auto db = open_configured_db(c);
      auto llm = make_configured_llm(c);
      CotOptions co;
      co.model = c.llm.model("reasoner");
      co.max_repairs = max_repairs;
      co.dialect = db->dialect();
      auto r = generate_cot(cot_nl, cot_sql, KnowledgeBundle{}, *llm, *db, co);
      write_object(out, g.format, {{"cot", r.cot}, {"sql", r.sql}, {"verified", r.verified}, {"repairs", r.repairs}});
      return kExitOk;
    };
  });

  // config ------------------------------------------------------------------
  app.add_subcommand("example-config", "Print a documented example config")->callback([&] {
    action = [&] {
      out << example_config();
      return kExitOk;
    };
  });

  std::vector<std::string> argv_store = {"kbsql"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!action) {
    err << app.help();
    return kExitUsage;
  }
  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: bad JSON input: " << e.what() << "\n";
    return kExitFailure;
  } catch (const SqlFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace kbsql
