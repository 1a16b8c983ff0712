#include "kbsql/llm.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kbsql/errors.hpp"
#include "kbsql/hash.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

json request_to_json(const std::vector<ChatMessage>& messages, const LlmParams& params) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"messages", msgs},
              {"model", params.model},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens},
              {"sample", params.sample}};
}

std::string request_digest(const std::vector<ChatMessage>& messages, const LlmParams& params) {
  return sha256_hex(request_to_json(messages, params).dump());
}

namespace {

LlmResponse response_from_json(const json& j) {
  LlmResponse r;
  if (j.is_string()) {
    r.text = j.get<std::string>();
    return r;
  }
  r.text = j.value("text", "");
  if (j.contains("latency_ms")) r.simulated_latency_ms = j.at("latency_ms").get<int>();
  return r;
}

json response_to_json(const LlmResponse& r) {
  json j{{"text", r.text}};
  if (r.simulated_latency_ms) j["latency_ms"] = *r.simulated_latency_ms;
  return j;
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, file.string() + ": " + e.what());
  }
}

}  // namespace

ScriptedClient::ScriptedClient(const json& fixture) { merge(fixture); }

void ScriptedClient::merge(const json& fixture) {
  std::lock_guard lock(mutex_);
  if (fixture.contains("responses")) {
    for (const auto& [digest, resp] : fixture["responses"].items()) responses_[digest] = response_from_json(resp);
  }
  if (fixture.contains("rules")) {
    for (const auto& r : fixture["rules"]) {
      Rule rule;
      if (r.contains("contains")) {
        if (r["contains"].is_array()) {
          rule.contains = r["contains"].get<std::vector<std::string>>();
        } else {
          rule.contains.push_back(r["contains"].get<std::string>());
        }
      }
      if (r.contains("model")) rule.model = r["model"].get<std::string>();
      if (r.contains("sample")) rule.sample = r["sample"].get<int>();
      rule.fail = r.value("fail", false);
      rule.response = response_from_json(r);
      rules_.push_back(std::move(rule));
    }
  }
  if (fixture.contains("default")) default_ = response_from_json(fixture["default"]);
}

std::shared_ptr<ScriptedClient> ScriptedClient::from_file(const std::filesystem::path& file) {
  return std::make_shared<ScriptedClient>(read_json_file(file));
}

std::shared_ptr<ScriptedClient> ScriptedClient::from_directory(const std::filesystem::path& dir) {
  if (std::filesystem::is_regular_file(dir)) return from_file(dir);
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::Io, "no fixture directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  auto client = std::make_shared<ScriptedClient>();
  for (const auto& f : files) client->merge(read_json_file(f));
  return client;
}

void ScriptedClient::add_response(const std::string& digest, LlmResponse response) {
  std::lock_guard lock(mutex_);
  responses_[digest] = std::move(response);
}

void ScriptedClient::add_rule(Rule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
}

LlmResponse ScriptedClient::complete(const std::vector<ChatMessage>& messages, const LlmParams& params) {
  std::string digest = request_digest(messages, params);
  std::lock_guard lock(mutex_);
  log_.push_back(digest);
  if (auto it = responses_.find(digest); it != responses_.end()) return it->second;
  std::string prompt;
  for (const auto& m : messages) prompt += m.content + "\n";
  for (const auto& rule : rules_) {
    if (rule.model && *rule.model != params.model) continue;
    if (rule.sample && *rule.sample != params.sample) continue;
    bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                           [&](const std::string& needle) { return prompt.find(needle) != std::string::npos; });
    if (!all) continue;
    if (rule.fail) throw Error(ErrorCode::ProviderUnavailable, "scripted failure");
    return rule.response;
  }
  if (default_) return *default_;
  throw Error(ErrorCode::ProviderUnavailable, "no scripted response for request " + digest.substr(0, 16));
}

std::size_t ScriptedClient::call_count() const {
  std::lock_guard lock(mutex_);
  return log_.size();
}

std::vector<std::string> ScriptedClient::request_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

LlmResponse RecordingClient::complete(const std::vector<ChatMessage>& messages, const LlmParams& params) {
  LlmResponse r = inner_->complete(messages, params);
  std::lock_guard lock(mutex_);
  responses_[request_digest(messages, params)] = response_to_json(r);
  return r;
}

json RecordingClient::fixture() const {
  std::lock_guard lock(mutex_);
  return json{{"responses", responses_}};
}

std::atomic<std::uint64_t> HttpLlmClient::live_calls_{0};

std::uint64_t HttpLlmClient::live_call_count() { return live_calls_.load(); }

bool network_denied() {
  const char* v = std::getenv("KBSQL_DENY_NETWORK");
  return v && *v && std::string_view(v) != "0";
}

LlmResponse HttpLlmClient::complete(const std::vector<ChatMessage>& messages, const LlmParams& params) {
  if (network_denied()) throw Error(ErrorCode::NetworkDenied, "live LLM call refused: network access denied");
  static const std::regex url_re(R"(^(https?)://([^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url_re)) {
    throw Error(ErrorCode::Config, "invalid LLM endpoint '" + config_.endpoint + "'");
  }
  ++live_calls_;
  std::string scheme_host = m[1].str() + "://" + m[2].str();
  std::string path = m[3].matched ? m[3].str() : "/v1/chat/completions";
  httplib::Client client(scheme_host);
  client.set_connection_timeout(config_.timeout_s);
  client.set_read_timeout(config_.timeout_s);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  json body = request_to_json(messages, params);
  body.erase("sample");
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::ProviderUnavailable, "LLM request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorCode::ProviderUnavailable, "LLM endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    json reply = json::parse(res->body);
    return LlmResponse{reply.at("choices").at(0).at("message").at("content").get<std::string>(), std::nullopt};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("malformed LLM reply: ") + e.what());
  }
}

std::optional<std::string> extract_fenced_sql(const std::string& text) {
  static const std::regex fence(R"(```[ \t]*([A-Za-z0-9_-]*)[ \t]*\r?\n([\s\S]*?)```)");
  std::optional<std::string> labeled, any;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), fence); it != std::sregex_iterator(); ++it) {
    std::string lang = text::to_lower_ascii((*it)[1].str());
    std::string body = text::trim((*it)[2].str());
    if (body.empty()) continue;
    if (lang == "sql") labeled = body;
    if (lang.empty() || lang == "sql") any = body;
  }
  return labeled ? labeled : any;
}

}  // namespace kbsql
