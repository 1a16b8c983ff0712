#include "kbsql/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include "kbsql/errors.hpp"
#include "kbsql/eval.hpp"
#include "kbsql/log.hpp"
#include "kbsql/mining.hpp"
#include "kbsql/profiler.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

using SteadyClock = std::chrono::steady_clock;

json SqlCandidate::to_json() const {
  json j{{"sql", sql}, {"model", model}, {"compile_ok", compile_ok}, {"latency_ms", latency_ms}, {"sample", sample}};
  j["cot"] = cot ? json(*cot) : json(nullptr);
  j["exec_fingerprint"] = exec_fingerprint ? json(*exec_fingerprint) : json(nullptr);
  j["error"] = error ? json(*error) : json(nullptr);
  return j;
}

RagMode parse_rag_mode(std::string_view text) {
  std::string t = text::to_lower_ascii(text);
  if (t == "static") return RagMode::Static;
  if (t == "agentic") return RagMode::Agentic;
  throw Error(ErrorCode::Config, "unknown rag mode '" + std::string(text) + "'");
}

TieBreaker parse_tie_breaker(std::string_view text) {
  std::string t = text::to_lower_ascii(text);
  if (t == "first_completed") return TieBreaker::FirstCompleted;
  if (t == "llm_judge") return TieBreaker::LlmJudge;
  if (t == "user_pref") return TieBreaker::UserPref;
  throw Error(ErrorCode::Config, "unknown tie breaker '" + std::string(text) + "'");
}

std::string_view to_string(TieBreaker t) {
  switch (t) {
    case TieBreaker::FirstCompleted: return "first_completed";
    case TieBreaker::LlmJudge: return "llm_judge";
    case TieBreaker::UserPref: return "user_pref";
  }
  return "first_completed";
}

// ---------------------------------------------------------------------------
// RAG

namespace {

std::vector<ResultList> agentic_tools(const std::string& query, const IndexSet& indexes, const IndexSnapshot& snap,
                                      const RagOptions& options, LlmClient& llm) {
  std::vector<ResultList> lists;
  std::string transcript;
  for (std::size_t step = 0; step < options.step_budget; ++step) {
    std::string user =
        "Question: " + query +
        "\nTools:\n"
        "- vector_search {\"query\": text, \"k\": int}\n"
        "- facet_search {\"filters\": {slot: [pattern]}, \"type\": text}\n"
        "- graph_neighbors {\"id\": knowledge id, \"hops\": 1-3, \"relations\": [name]}\n"
        "- finish {}\n" +
        (transcript.empty() ? "" : "Results so far:\n" + transcript) +
        "Reply with JSON {\"tool\": name, \"args\": {...}}.";
    LlmParams params;
    params.model = options.model;
    std::string reply = llm.complete({{"system", "You gather knowledge for a text-to-SQL task."}, {"user", user}}, params).text;
    auto call = extract_json(reply);
    if (!call || !call->is_object() || !call->contains("tool")) {
      warn("rag agent: unreadable tool call, stopping");
      break;
    }
    std::string tool = call->value("tool", "");
    json args = call->value("args", json::object());
    try {
      if (tool == "finish") break;
      ResultList list;
      if (tool == "vector_search") {
        list.source = SourceIndex::Vector;
        list.hits = snap.vectors->search(args.value("query", query), Serializer::Query,
                                         static_cast<std::size_t>(args.value("k", 5)));
      } else if (tool == "facet_search") {
        list.source = SourceIndex::Facet;
        FacetFilters filters;
        json filter_spec = args.value("filters", json::object());
        for (const auto& [slot, pats] : filter_spec.items()) {
          for (const auto& p : pats) filters[slot].push_back(p.get<std::string>());
        }
        FacetPredicates preds;
        if (args.contains("type")) preds.type = args["type"].get<std::string>();
        list = facet_results(indexes.facets().query(filters, preds));
      } else if (tool == "graph_neighbors") {
        std::set<std::string> rels;
        for (const auto& r : args.value("relations", json::array())) rels.insert(r.get<std::string>());
        list = graph_results(snap.graph->distances(args.value("id", ""), rels, args.value("hops", 1)));
      } else {
        warn("rag agent: unknown tool '" + tool + "', stopping");
        break;
      }
      std::vector<std::string> ids;
      for (const auto& h : list.hits) ids.push_back(h.id);
      transcript += tool + " -> " + (ids.empty() ? "nothing" : text::join(ids, ", ")) + "\n";
      lists.push_back(std::move(list));
    } catch (const Error& e) {
      transcript += tool + " -> error: " + e.what() + "\n";
    } catch (const json::exception& e) {
      transcript += tool + " -> error: " + e.what() + "\n";
    }
  }
  return lists;
}

}  // namespace

KnowledgeBundle rag_retrieve(const std::string& query, const json& context, const IndexSet* indexes,
                             const RagOptions& options, LlmClient* llm) {
  if (!indexes) throw Error(ErrorCode::IndexUnavailable, "no index set");
  IndexSnapshot snap = indexes->snapshot();
  if (!snap.daac || !snap.vectors || !snap.graph) throw Error(ErrorCode::IndexUnavailable, "indices not built");
  const KnowledgeBase& kb = indexes->kb();

  std::vector<ResultList> lists;
  lists.push_back(daac_results(snap.daac->match_all(query)));

  std::vector<ResultList> vector_lists;
  SearchKey key;
  key.question = query;
  for (Serializer ser : indexes->options().query_serializers) {
    if (snap.vectors->size(ser) == 0) continue;
    std::string serialized;
    try {
      serialized = serialize_query(key, ser);
    } catch (const Error&) {
      continue;  // the serializer needs input this query lacks
    }
    ResultList list;
    list.source = SourceIndex::Vector;
    list.hits = snap.vectors->search(serialized, ser, options.vector_k, indexes->options().mode,
                                     indexes->options().mmr_lambda);
    vector_lists.push_back(std::move(list));
  }
  if (!vector_lists.empty()) {
    lists.push_back(bundle_results(fuse(vector_lists, FusionPolicy::RoundRobin, context, options.vector_k, kb)));
  }

  if (options.mode == RagMode::Agentic) {
    if (!llm) throw Error(ErrorCode::PreconditionViolation, "agentic retrieval needs an LLM client");
    for (auto& l : agentic_tools(query, *indexes, snap, options, *llm)) lists.push_back(std::move(l));
  }

  KnowledgeBundle bundle = fuse(lists, options.policy, context, 0, kb);
  if (options.summarize && llm && !bundle.items.empty()) {
    std::string knowledge;
    for (const auto& it : bundle.items) knowledge += "- " + it.record.name + ": " + it.record.content + "\n";
    LlmParams params;
    params.model = options.model;
    bundle.summary = llm->complete({{"system", "You summarize knowledge for a text-to-SQL task."},
                                    {"user", "Question: " + query + "\nKnowledge:\n" + knowledge +
                                                 "Summarize what matters for writing the SQL."}},
                                   params)
                         .text;
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Generation

std::string generation_prompt(const std::string& query, const KnowledgeBundle& bundle,
                              const GenerationOptions& options) {
  std::string out = "Dialect: " + options.dialect + "\n";
  if (!bundle.items.empty()) {
    out += "\nKnowledge:\n";
    for (const auto& it : bundle.items) {
      std::string body;
      try {
        body = compose_content(it.record, "default", options.context);
      } catch (const Error&) {
        body = it.record.content;
      }
      body = text::replace_all(text::trim(body), "\n", " ");
      out += "- (" + it.record.type + ") " + it.record.name + (body.empty() ? "" : ": " + body) + "\n";
    }
  }
  if (bundle.summary) out += "\nSummary: " + *bundle.summary + "\n";
  if (!options.profile_snippet.empty()) out += "\n" + options.profile_snippet + "\n";
  out += "\nQuestion: " + query +
         "\nReason briefly about the tables, columns and values involved, then give the final query in a ```sql "
         "fenced block.";
  return out;
}

namespace {

void sleep_cancellable(long long ms, const std::atomic<bool>* cancel) {
  auto until = SteadyClock::now() + std::chrono::milliseconds(ms);
  while (SteadyClock::now() < until) {
    if (cancel && cancel->load()) return;
    std::this_thread::sleep_for(std::min<SteadyClock::duration>(std::chrono::milliseconds(2), until - SteadyClock::now()));
  }
}

std::string strip_semicolon(std::string sql) {
  sql = text::trim(sql);
  while (!sql.empty() && sql.back() == ';') {
    sql.pop_back();
    sql = text::trim(sql);
  }
  return sql;
}

}  // namespace

std::optional<std::string> compile_check(Database& db, const std::string& sql) {
  std::string body = strip_semicolon(sql);
  std::string probe = db.dialect() == "sqlite" ? "EXPLAIN " + body : "SELECT * FROM (" + body + ") AS _q LIMIT 0";
  try {
    db.query(probe);
    return std::nullopt;
  } catch (const SqlFailure& f) {
    return f.error().message;
  }
}

void execute_candidate(SqlCandidate& candidate, Database& db) {
  candidate.exec_fingerprint.reset();
  if (!candidate.compile_ok) return;
  try {
    auto result = ExecutionResult::from_query(db.query(candidate.sql));
    candidate.exec_fingerprint = result_fingerprint(result, detect_ordered(candidate.sql));
  } catch (const SqlFailure& f) {
    candidate.error = f.error().message;
  }
}

namespace {

SqlCandidate parse_response(const std::string& text, const std::string& model) {
  auto sql = extract_fenced_sql(text);
  if (!sql) throw Error(ErrorCode::NoSqlInResponse, "model '" + model + "' answered without a SQL block");
  SqlCandidate c;
  c.model = model;
  c.sql = strip_semicolon(*sql);
  auto at = text.rfind(*sql);
  if (at != std::string::npos) {
    auto fence = text.rfind("```", at);
    std::string before = text::trim(text.substr(0, fence == std::string::npos ? at : fence));
    if (!before.empty()) c.cot = before;
  }
  return c;
}

}  // namespace

SqlCandidate generate_sql(const std::string& query, const KnowledgeBundle& bundle, LlmClient& llm,
                          const LlmParams& params, Database& db, const GenerationOptions& options) {
  auto start = SteadyClock::now();
  LlmResponse resp = llm.complete(
      {{"system", "You translate questions into SQL over the described database."},
       {"user", generation_prompt(query, bundle, options)}},
      params);
  if (options.simulate_latency && resp.simulated_latency_ms) sleep_cancellable(*resp.simulated_latency_ms, options.cancel);
  SqlCandidate c = parse_response(resp.text, params.model);
  c.sample = params.sample;
  c.latency_ms = resp.simulated_latency_ms
                     ? *resp.simulated_latency_ms
                     : std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - start).count();
  auto err = compile_check(db, c.sql);
  c.compile_ok = !err;
  c.error = err;
  if (options.execute) execute_candidate(c, db);
  return c;
}

SqlCandidate refine_sql(const std::string& query, const SqlCandidate& candidate, const KnowledgeBundle& bundle,
                        Database& db, LlmClient& llm, int max_rounds, const LlmParams& params) {
  if (max_rounds < 0) throw Error(ErrorCode::PreconditionViolation, "max_rounds must be >= 0");
  std::optional<SqlCandidate> best;
  if (candidate.compile_ok) best = candidate;
  SqlCandidate current = candidate;
  for (int round = 0;; ++round) {
    TruncatedResult run = execute_sql_tool(db, current.sql);
    if (!run.error && run.total_row_count > 0) {
      if (!current.exec_fingerprint) execute_candidate(current, db);
      return current;
    }
    if (round >= max_rounds) break;
    std::string feedback = run.error ? "Execution failed: " + run.error->message
                                     : std::string("The query ran but returned no rows.");
    std::string user = generation_prompt(query, bundle) + "\n\nCurrent SQL:\n```sql\n" + current.sql + "\n```\n" +
                       feedback + "\nResult:\n" + run.to_text() +
                       "\nReturn a corrected query in a ```sql fenced block.";
    LlmParams p = params;
    if (p.model == LlmParams{}.model && !candidate.model.empty()) p.model = candidate.model;
    SqlCandidate next;
    try {
      LlmResponse resp = llm.complete({{"system", "You repair SQL queries using execution feedback."}, {"user", user}}, p);
      next = parse_response(resp.text, p.model);
    } catch (const Error& e) {
      warn(std::string("refine_sql: stopping early: ") + e.what());
      break;
    }
    next.sample = candidate.sample;
    auto err = compile_check(db, next.sql);
    next.compile_ok = !err;
    next.error = err;
    if (next.compile_ok) {
      execute_candidate(next, db);
      best = next;
    }
    current = next;
  }
  return best.value_or(candidate);
}

// ---------------------------------------------------------------------------
// Voting

namespace {

bool earlier(const SqlCandidate& a, const SqlCandidate& b) {
  return std::tie(a.latency_ms, a.sql, a.model, a.sample) < std::tie(b.latency_ms, b.sql, b.model, b.sample);
}

struct Group {
  std::string fingerprint;
  std::vector<const SqlCandidate*> members;
  const SqlCandidate* rep() const { return members.front(); }
};

}  // namespace

SqlCandidate majority_vote(const std::vector<SqlCandidate>& candidates, const TieBreakConfig& tie) {
  if (candidates.empty()) throw Error(ErrorCode::PreconditionViolation, "no candidates");
  std::map<std::string, Group> by_fp;
  for (const auto& c : candidates) {
    if (!c.compile_ok || !c.exec_fingerprint) continue;
    auto& g = by_fp[*c.exec_fingerprint];
    g.fingerprint = *c.exec_fingerprint;
    g.members.push_back(&c);
  }
  if (by_fp.empty()) throw Error(ErrorCode::AllCandidatesFailed, std::to_string(candidates.size()) + " candidates");
  std::vector<Group> groups;
  for (auto& [_, g] : by_fp) {
    std::sort(g.members.begin(), g.members.end(), [](auto* a, auto* b) { return earlier(*a, *b); });
    groups.push_back(std::move(g));
  }
  // Size first, then the group holding the earliest member.
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    if (earlier(*a.rep(), *b.rep()) != earlier(*b.rep(), *a.rep())) return earlier(*a.rep(), *b.rep());
    return a.fingerprint < b.fingerprint;
  });
  std::size_t tied = 1;
  while (tied < groups.size() && groups[tied].members.size() == groups[0].members.size()) ++tied;
  if (tied == 1 || tie.kind == TieBreaker::FirstCompleted) return *groups[0].rep();

  if (tie.kind == TieBreaker::UserPref) {
    auto rank = [&](const Group& g) {
      std::size_t best = tie.preferred_models.size();
      for (const auto* m : g.members) {
        auto it = std::find(tie.preferred_models.begin(), tie.preferred_models.end(), m->model);
        best = std::min<std::size_t>(best, it - tie.preferred_models.begin());
      }
      return best;
    };
    std::size_t pick = 0;
    for (std::size_t i = 1; i < tied; ++i) {
      if (rank(groups[i]) < rank(groups[pick])) pick = i;
    }
    return *groups[pick].rep();
  }

  if (!tie.judge) return *groups[0].rep();
  std::string user = "Several SQL queries disagree on their results.\n";
  for (std::size_t i = 0; i < tied; ++i) {
    user += "Candidate " + std::to_string(i + 1) + ":\n```sql\n" + groups[i].rep()->sql + "\n```\n";
  }
  user += "Reply with the number of the most plausible candidate.";
  LlmParams params;
  params.model = tie.judge_model;
  try {
    std::string reply = tie.judge->complete({{"system", "You judge SQL queries."}, {"user", user}}, params).text;
    std::smatch m;
    if (std::regex_search(reply, m, std::regex(R"(\d+)"))) {
      std::size_t n = std::stoul(m.str());
      if (n >= 1 && n <= tied) return *groups[n - 1].rep();
    }
    warn("majority_vote: judge reply names no candidate, using first_completed");
  } catch (const Error& e) {
    warn(std::string("majority_vote: judge failed: ") + e.what());
  }
  return *groups[0].rep();
}

// ---------------------------------------------------------------------------
// Cascade

namespace {

struct Task {
  std::size_t rung;
  std::string model;
  int sample;
};

struct RunState {
  std::mutex mutex;
  std::condition_variable cv;
  std::vector<std::pair<std::size_t, SqlCandidate>> done;  // rung, candidate
  std::size_t finished = 0;
  std::size_t cancelled = 0;
  std::atomic<bool> cancel{false};
  std::atomic<std::size_t> next{0};
};

struct LadderRun {
  CascadeResult result;
  std::optional<SqlCandidate> winner;
  bool timed_out = false;
  std::vector<std::size_t> completed_rung;
};

LadderRun run_ladder(const std::vector<Rung>& ladder, const std::string& query, const KnowledgeBundle& bundle,
                     Database& db, LlmClient& llm, const CascadeOptions& options, bool early_agreement) {
  if (ladder.empty()) throw Error(ErrorCode::PreconditionViolation, "empty ladder");
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    if (ladder[r].n < 1) throw Error(ErrorCode::PreconditionViolation, "rung '" + ladder[r].model + "' has n < 1");
    for (int i = 0; i < ladder[r].n; ++i) tasks.push_back({r, ladder[r].model, i});
  }
  RunState state;
  GenerationOptions gen = options.generation;
  gen.cancel = &state.cancel;
  gen.simulate_latency = true;

  auto worker = [&] {
    for (;;) {
      std::size_t idx = state.next.fetch_add(1);
      if (idx >= tasks.size()) return;
      const Task& t = tasks[idx];
      SqlCandidate c;
      bool cancelled = state.cancel.load();
      if (!cancelled) {
        LlmParams params;
        params.model = t.model;
        params.sample = t.sample;
        params.temperature = options.temperature;
        try {
          c = generate_sql(query, bundle, llm, params, db, gen);
        } catch (const Error& e) {
          c.model = t.model;
          c.sample = t.sample;
          c.error = e.what();
        }
        cancelled = state.cancel.load();
      }
      std::lock_guard lock(state.mutex);
      ++state.finished;
      if (cancelled) ++state.cancelled;
      else state.done.emplace_back(t.rung, std::move(c));
      state.cv.notify_all();
    }
  };
  unsigned n_workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(tasks.size())));
  std::vector<std::thread> threads;
  for (unsigned i = 0; i < n_workers; ++i) threads.emplace_back(worker);

  LadderRun run;
  CascadeResult& result = run.result;
  auto deadline = SteadyClock::now() + std::chrono::milliseconds(options.deadline_ms);
  std::optional<SqlCandidate>& winner = run.winner;
  bool& timed_out = run.timed_out;
  std::vector<std::size_t>& completed_rung = run.completed_rung;
  {
    std::unique_lock lock(state.mutex);
    std::size_t seen = 0;
    for (;;) {
      bool ready = state.cv.wait_until(lock, deadline, [&] { return state.done.size() > seen || state.finished == tasks.size(); });
      while (seen < state.done.size() && !winner) {
        const auto& [rung, c] = state.done[seen++];
        result.completed.push_back(c);
        completed_rung.push_back(rung);
        if (!early_agreement || !c.exec_fingerprint) continue;
        std::vector<SqlCandidate> agreeing;
        for (const auto& prev : result.completed) {
          if (prev.exec_fingerprint == c.exec_fingerprint) agreeing.push_back(prev);
        }
        if (agreeing.size() >= 2) {
          winner = *std::min_element(agreeing.begin(), agreeing.end(), earlier);
          result.decided_by = "agreement";
        }
      }
      if (winner || state.finished == tasks.size()) break;
      if (!ready) {
        timed_out = true;
        break;
      }
    }
  }
  state.cancel = true;
  for (auto& t : threads) t.join();
  result.cancelled = state.cancelled + (tasks.size() - state.finished);
  // Stragglers that finished after the decision count as cancelled too.
  result.cancelled += state.done.size() - result.completed.size();

  return run;
}

}  // namespace

std::vector<SqlCandidate> sample_candidates(const std::string& query, const KnowledgeBundle& bundle, Database& db,
                                            LlmClient& llm, const std::string& model, int n,
                                            const CascadeOptions& options) {
  return run_ladder({{model, n}}, query, bundle, db, llm, options, false).result.completed;
}

CascadeResult cascade(const std::vector<Rung>& ladder, const std::string& query, const KnowledgeBundle& bundle,
                      Database& db, LlmClient& llm, const CascadeOptions& options) {
  LadderRun run = run_ladder(ladder, query, bundle, db, llm, options, ladder.size() > 1);
  CascadeResult& result = run.result;
  if (run.winner) {
    result.winner = *run.winner;
    return result;
  }
  if (run.timed_out) {
    result.decided_by = "deadline";
    bool any = std::any_of(result.completed.begin(), result.completed.end(),
                           [](const SqlCandidate& c) { return c.compile_ok && c.exec_fingerprint; });
    if (!any) throw Error(ErrorCode::DeadlineWithNoCandidate, "no usable candidate before the deadline");
    result.winner = majority_vote(result.completed, options.tie);
    return result;
  }
  result.decided_by = "majority";
  if (ladder.size() > 1) {
    std::vector<SqlCandidate> final_rung;
    for (std::size_t i = 0; i < result.completed.size(); ++i) {
      if (run.completed_rung[i] == ladder.size() - 1) final_rung.push_back(result.completed[i]);
    }
    try {
      if (!final_rung.empty()) {
        result.winner = majority_vote(final_rung, options.tie);
        return result;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllCandidatesFailed) throw;
    }
  }
  result.winner = majority_vote(result.completed, options.tie);
  return result;
}

}  // namespace kbsql
