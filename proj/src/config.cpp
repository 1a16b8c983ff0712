#include "kbsql/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "kbsql/errors.hpp"
#include "kbsql/index.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

std::string LlmConfig::model(const std::string& role) const {
  auto it = models.find(role);
  return it == models.end() ? role : it->second;
}

std::filesystem::path Config::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

namespace {

void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw Error(ErrorCode::Config, where + " must be a mapping");
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw Error(ErrorCode::Config, "unknown key " + where + "." + key);
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node[key]) out = node[key].as<T>();
}

void validate(const Config& c) {
  if (c.llm.mode != "mock" && c.llm.mode != "live") throw Error(ErrorCode::Config, "llm.mode must be mock or live");
  if (c.kb_backend != "dir" && c.kb_backend != "sqlite" && c.kb_backend != "memory")
    throw Error(ErrorCode::Config, "kb.backend must be dir, sqlite or memory");
  if (c.tts_n < 1) throw Error(ErrorCode::Config, "tts.n must be >= 1");
  if (c.refine_rounds < 0) throw Error(ErrorCode::Config, "tts.refine_rounds must be >= 0");
  if (c.eval_beta <= 0) throw Error(ErrorCode::Config, "eval.beta must be positive");
  for (double x : {c.alpha, c.beta_q, c.gamma})
    if (x < 0 || x > 1) throw Error(ErrorCode::Config, "curation coefficients must lie in [0,1]");
  if (c.t_max == 0) throw Error(ErrorCode::Config, "curation.t_max must be positive");
  for (const auto& r : c.ladder)
    if (r.n < 1 || r.model.empty()) throw Error(ErrorCode::Config, "cascade ladder rungs need a model and n >= 1");
  try {
    parse_tie_breaker(c.tie_breaker);
    parse_search_mode(c.search_mode);
    parse_fusion_policy(c.fusion);
    parse_rag_mode(c.rag_mode);
    for (const auto& s : c.serializers) parse_serializer(s);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
}

}  // namespace

Config parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  Config c;
  c.base_dir = base_dir;
  try {
    YAML::Node root = YAML::Load(text);
    if (!root || root.IsNull()) return c;
    check_keys(root, "config", {"db", "kb", "index", "llm", "tts", "cascade", "eval", "curation", "mining"});
    if (auto n = root["db"]) {
      check_keys(n, "db", {"connection"});
      read(n, "connection", c.db);
    }
    if (auto n = root["kb"]) {
      check_keys(n, "kb", {"backend", "path"});
      read(n, "backend", c.kb_backend);
      if (n["path"]) c.kb_path = n["path"].as<std::string>();
    }
    if (auto n = root["index"]) {
      check_keys(n, "index",
                 {"vector_k", "search_mode", "mmr_lambda", "serializers", "fusion", "rag_mode"});
      read(n, "vector_k", c.vector_k);
      read(n, "search_mode", c.search_mode);
      read(n, "mmr_lambda", c.mmr_lambda);
      read(n, "serializers", c.serializers);
      read(n, "fusion", c.fusion);
      read(n, "rag_mode", c.rag_mode);
    }
    if (auto n = root["llm"]) {
      check_keys(n, "llm",
                 {"mode", "fixtures", "endpoint", "api_key", "timeout_s", "models", "embedder", "embed_dim",
                  "embed_aliases"});
      read(n, "mode", c.llm.mode);
      if (n["fixtures"]) c.llm.fixtures = n["fixtures"].as<std::string>();
      read(n, "endpoint", c.llm.endpoint);
      read(n, "api_key", c.llm.api_key);
      read(n, "timeout_s", c.llm.timeout_s);
      read(n, "models", c.llm.models);
      read(n, "embedder", c.llm.embedder);
      read(n, "embed_dim", c.llm.embed_dim);
      read(n, "embed_aliases", c.llm.embed_aliases);
    }
    if (auto n = root["tts"]) {
      check_keys(n, "tts", {"n", "tie_breaker", "temperature", "refine_rounds"});
      read(n, "n", c.tts_n);
      read(n, "tie_breaker", c.tie_breaker);
      read(n, "temperature", c.temperature);
      read(n, "refine_rounds", c.refine_rounds);
    }
    if (auto n = root["cascade"]) {
      check_keys(n, "cascade", {"ladder", "deadline_ms"});
      read(n, "deadline_ms", c.deadline_ms);
      if (auto l = n["ladder"]) {
        for (const auto& rung : l) {
          check_keys(rung, "cascade.ladder[]", {"model", "n"});
          Rung r;
          read(rung, "model", r.model);
          read(rung, "n", r.n);
          c.ladder.push_back(r);
        }
      }
    }
    if (auto n = root["eval"]) {
      check_keys(n, "eval", {"beta"});
      read(n, "beta", c.eval_beta);
    }
    if (auto n = root["curation"]) {
      check_keys(n, "curation", {"alpha", "beta_q", "gamma", "t_max", "diversity_k"});
      read(n, "alpha", c.alpha);
      read(n, "beta_q", c.beta_q);
      read(n, "gamma", c.gamma);
      read(n, "t_max", c.t_max);
      read(n, "diversity_k", c.diversity_k);
    }
    if (auto n = root["mining"]) {
      check_keys(n, "mining", {"budget"});
      read(n, "budget", c.mining_budget);
    }
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::Config, e.what());
  }
  validate(c);
  return c;
}

Config load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Config, "cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto base = file.parent_path();
  return parse_config(ss.str(), base.empty() ? std::filesystem::path(".") : base);
}

void apply_env_overrides(Config& c) {
  auto num = [](const std::string& name, const std::string& v) {
    double d = 0;
    if (!text::parse_number(v, d)) throw Error(ErrorCode::Config, name + " is not a number: " + v);
    return d;
  };
  const std::vector<std::pair<const char*, std::function<void(const std::string&)>>> table = {
      {"RUBIK_DB_CONNECTION", [&](const std::string& v) { c.db = v; }},
      {"RUBIK_KB_BACKEND", [&](const std::string& v) { c.kb_backend = v; }},
      {"RUBIK_KB_PATH", [&](const std::string& v) { c.kb_path = v; }},
      {"RUBIK_LLM_MODE", [&](const std::string& v) { c.llm.mode = v; }},
      {"RUBIK_LLM_FIXTURES", [&](const std::string& v) { c.llm.fixtures = v; }},
      {"RUBIK_LLM_ENDPOINT", [&](const std::string& v) { c.llm.endpoint = v; }},
      {"RUBIK_LLM_API_KEY", [&](const std::string& v) { c.llm.api_key = v; }},
      {"RUBIK_TTS_N", [&](const std::string& v) { c.tts_n = static_cast<int>(num("RUBIK_TTS_N", v)); }},
      {"RUBIK_TTS_TIE_BREAKER", [&](const std::string& v) { c.tie_breaker = v; }},
      {"RUBIK_EVAL_BETA", [&](const std::string& v) { c.eval_beta = num("RUBIK_EVAL_BETA", v); }},
      {"RUBIK_INDEX_VECTOR_K",
       [&](const std::string& v) { c.vector_k = static_cast<std::size_t>(num("RUBIK_INDEX_VECTOR_K", v)); }},
      {"RUBIK_CASCADE_DEADLINE_MS",
       [&](const std::string& v) { c.deadline_ms = static_cast<long long>(num("RUBIK_CASCADE_DEADLINE_MS", v)); }},
      {"RUBIK_MINING_BUDGET",
       [&](const std::string& v) { c.mining_budget = static_cast<std::size_t>(num("RUBIK_MINING_BUDGET", v)); }},
  };
  for (const auto& [name, set] : table)
    if (const char* v = std::getenv(name)) set(v);
  validate(c);
}

Config resolve_config(const std::optional<std::filesystem::path>& cli_path) {
  std::optional<std::filesystem::path> path = cli_path;
  if (const char* env = std::getenv("RUBIK_CONFIG"); env && *env) path = env;
  Config c = path ? load_config(*path) : Config{};
  apply_env_overrides(c);
  return c;
}

std::string example_config() {
  return R"(# kbsql configuration. Relative paths resolve against this file's directory.
# Any key below can be overridden by RUBIK_<SECTION>_<KEY> (e.g. RUBIK_LLM_API_KEY).
db:
  connection: sqlite:demo.db
kb:
  backend: dir          # dir | sqlite | memory
  path: kb
index:
  vector_k: 5
  search_mode: ann      # exact | ann | mmr
  mmr_lambda: 0.5
  serializers: [query]
  fusion: round_robin   # round_robin | score_rerank
  rag_mode: static      # static | agentic
llm:
  mode: mock            # mock replays fixtures; live needs network
  fixtures: llm
  endpoint: ""
  api_key: ""
  timeout_s: 60
  models: {gen: gen, judge: judge, rag: rag, miner: miner, profiler: profiler, reasoner: reasoner, synth: synth}
  embedder: hash
  embed_dim: 64
tts:
  n: 1
  tie_breaker: first_completed   # first_completed | llm_judge | user_pref
  temperature: 0.7
  refine_rounds: 2
cascade:
  deadline_ms: 60000
  ladder: []            # e.g. [{model: small, n: 2}, {model: large, n: 2}]
eval:
  beta: 1.0
curation:
  alpha: 1.0
  beta_q: 1.0
  gamma: 1.0
  t_max: 4096
  diversity_k: 5
mining:
  budget: 16
)";
}

std::shared_ptr<Database> open_configured_db(const Config& config) {
  std::string conn = config.db;
  std::string path = conn.rfind("sqlite:", 0) == 0 ? conn.substr(7) : conn;
  if (path != ":memory:" && path.rfind("file:", 0) != 0 && !std::filesystem::path(path).is_absolute())
    conn = "sqlite:" + config.resolve(path).string();
  return open_database(conn);
}

std::unique_ptr<KnowledgeBase> open_configured_kb(const Config& config) {
  return std::make_unique<KnowledgeBase>(open_backend(config.kb_backend, config.resolve(config.kb_path)));
}

std::shared_ptr<LlmClient> make_configured_llm(const Config& config) {
  if (config.llm.mode == "live") {
    if (config.llm.endpoint.empty()) throw Error(ErrorCode::Config, "llm.endpoint is required in live mode");
    return std::make_shared<HttpLlmClient>(HttpLlmConfig{config.llm.endpoint, config.llm.api_key, config.llm.timeout_s});
  }
  if (config.llm.fixtures.empty()) return std::make_shared<ScriptedClient>();
  auto path = config.resolve(config.llm.fixtures);
  if (std::filesystem::is_directory(path)) return ScriptedClient::from_directory(path);
  if (std::filesystem::is_regular_file(path)) return ScriptedClient::from_file(path);
  throw Error(ErrorCode::Config, "llm fixtures not found: " + path.string());
}

std::shared_ptr<const Embedder> make_configured_embedder(const Config& config) {
  if (config.llm.embedder != "hash") throw Error(ErrorCode::Config, "unsupported embedder: " + config.llm.embedder);
  return std::make_shared<HashEmbedder>(config.llm.embed_dim, config.llm.embed_aliases);
}

}  // namespace kbsql
