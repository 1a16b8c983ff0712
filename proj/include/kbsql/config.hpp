#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kbsql/database.hpp"
#include "kbsql/embedding.hpp"
#include "kbsql/kb_store.hpp"
#include "kbsql/llm.hpp"
#include "kbsql/workflow.hpp"

namespace kbsql {

struct LlmConfig {
  /// "mock" replays fixtures from `fixtures`; "live" talks to `endpoint`.
  std::string mode = "mock";
  std::filesystem::path fixtures;
  std::string endpoint;
  std::string api_key;
  int timeout_s = 60;
  /// Model name per role: gen, judge, synonym, rag, miner, profiler, reasoner, synth.
  std::map<std::string, std::string> models;
  std::string embedder = "hash";
  std::size_t embed_dim = 64;
  std::map<std::string, std::string> embed_aliases;

  std::string model(const std::string& role) const;
};

struct Config {
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir = ".";
  std::string db = "sqlite::memory:";
  std::string kb_backend = "dir";
  std::filesystem::path kb_path = "kb";

  // index
  std::size_t vector_k = 5;
  std::string search_mode = "ann";
  double mmr_lambda = 0.5;
  std::vector<std::string> serializers = {"query"};
  std::string fusion = "round_robin";
  std::string rag_mode = "static";

  LlmConfig llm;

  // test-time scaling
  int tts_n = 1;
  std::string tie_breaker = "first_completed";
  double temperature = 0.7;
  std::vector<Rung> ladder;
  long long deadline_ms = 60000;
  int refine_rounds = 2;

  double eval_beta = 1.0;

  // curation
  double alpha = 1.0;
  double beta_q = 1.0;
  double gamma = 1.0;
  std::size_t t_max = 4096;
  std::size_t diversity_k = 5;

  std::size_t mining_budget = 16;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Reads a YAML config. Missing keys keep their defaults; unknown keys raise Config errors.
Config load_config(const std::filesystem::path& file);
Config parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");

/// Applies RUBIK_<SECTION>_<KEY> environment variables (e.g. RUBIK_DB_CONNECTION,
/// RUBIK_LLM_API_KEY, RUBIK_TTS_N).
void apply_env_overrides(Config& config);

/// RUBIK_CONFIG, else `cli_path`, else defaults; environment overrides applied last.
Config resolve_config(const std::optional<std::filesystem::path>& cli_path);

/// Documented example config.
std::string example_config();

// Runtime objects built from a config.
std::shared_ptr<Database> open_configured_db(const Config& config);
std::unique_ptr<KnowledgeBase> open_configured_kb(const Config& config);
std::shared_ptr<LlmClient> make_configured_llm(const Config& config);
std::shared_ptr<const Embedder> make_configured_embedder(const Config& config);

}  // namespace kbsql
