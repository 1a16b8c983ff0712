#include <algorithm>
#include <cctype>

#include "kbsql/errors.hpp"
#include "kbsql/index.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

std::string_view to_string(Serializer s) {
  switch (s) {
    case Serializer::Query: return "query";
    case Serializer::QuerySketch: return "query_sketch";
    case Serializer::Tags: return "tags";
    case Serializer::Sql: return "sql";
    case Serializer::Header: return "header";
    case Serializer::Cot: return "cot";
  }
  return "query";
}

Serializer parse_serializer(std::string_view text) {
  for (auto s : all_serializers()) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::Config, "unknown serializer '" + std::string(text) + "'");
}

const std::vector<Serializer>& all_serializers() {
  static const std::vector<Serializer> all{Serializer::Query, Serializer::QuerySketch, Serializer::Tags,
                                           Serializer::Sql,   Serializer::Header,      Serializer::Cot};
  return all;
}

std::string query_sketch(const std::string& question, const std::vector<EntitySpan>& input) {
  std::vector<EntitySpan> spans = input;
  std::stable_sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
  std::string out;
  std::size_t pos = 0;
  for (const auto& s : spans) {
    if (s.begin >= s.end || s.end > question.size()) {
      throw Error(ErrorCode::PreconditionViolation, "entity span out of range");
    }
    if (s.begin < pos) throw Error(ErrorCode::PreconditionViolation, "overlapping entity spans");
    if (s.kind.empty()) throw Error(ErrorCode::PreconditionViolation, "entity span without kind");
    out.append(question, pos, s.begin - pos);
    out += "[";
    if (s.taxonomy && !s.taxonomy->empty()) out += *s.taxonomy + " as ";
    out += text::to_upper_ascii(s.kind) + "]";
    pos = s.end;
  }
  out.append(question, pos, std::string::npos);
  return out;
}

std::string tags_key(const std::set<std::string>& tags) {
  return text::join(std::vector<std::string>(tags.begin(), tags.end()), "|");
}

std::string sql_header(const std::string& sql) {
  std::vector<std::string> lines;
  std::size_t i = 0;
  const std::size_t n = sql.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(sql[i]))) ++i;
    if (sql.compare(i, 2, "--") == 0) {
      std::size_t eol = sql.find('\n', i);
      if (eol == std::string::npos) eol = n;
      std::string line = text::trim(std::string_view(sql).substr(i + 2, eol - i - 2));
      if (!line.empty()) lines.push_back(line);
      i = eol;
    } else if (sql.compare(i, 2, "/*") == 0) {
      std::size_t close = sql.find("*/", i + 2);
      std::size_t stop = close == std::string::npos ? n : close;
      for (const auto& raw : text::split(std::string_view(sql).substr(i + 2, stop - i - 2), '\n')) {
        std::string line = text::trim(raw);
        while (!line.empty() && line.front() == '*') line = text::trim(line.substr(1));
        if (!line.empty()) lines.push_back(line);
      }
      i = close == std::string::npos ? n : close + 2;
    } else {
      break;
    }
  }
  return text::join(lines, "\n");
}

std::string sql_body(const std::string& sql) {
  std::string out;
  const std::size_t n = sql.size();
  bool pending_space = false;
  auto emit = [&](char c) {
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += c;
  };
  for (std::size_t i = 0; i < n;) {
    char c = sql[i];
    if (c == '\'' || c == '"' || c == '`') {
      char q = c;
      emit(c);
      ++i;
      while (i < n) {
        out += sql[i];
        if (sql[i] == q) {
          if (i + 1 < n && sql[i + 1] == q) {
            out += sql[++i];
          } else {
            ++i;
            break;
          }
        }
        ++i;
      }
    } else if (sql.compare(i, 2, "--") == 0) {
      std::size_t eol = sql.find('\n', i);
      i = eol == std::string::npos ? n : eol;
      pending_space = true;
    } else if (sql.compare(i, 2, "/*") == 0) {
      std::size_t close = sql.find("*/", i + 2);
      i = close == std::string::npos ? n : close + 2;
      pending_space = true;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      ++i;
    } else {
      emit(c);
      ++i;
    }
  }
  while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
  return out;
}

std::string serialize_query(const SearchKey& key, Serializer serializer) {
  switch (serializer) {
    case Serializer::Query: return key.question;
    case Serializer::QuerySketch:
      if (!key.annotations) throw Error(ErrorCode::MissingAnnotations, "query_sketch needs entity annotations");
      return query_sketch(key.question, *key.annotations);
    case Serializer::Tags: return tags_key(key.tags);
    case Serializer::Sql:
      if (!key.sql) throw Error(ErrorCode::PreconditionViolation, "sql serializer needs an initial SQL");
      return sql_body(*key.sql);
    case Serializer::Header:
      if (!key.sql) throw Error(ErrorCode::PreconditionViolation, "header serializer needs an initial SQL");
      return sql_header(*key.sql);
    case Serializer::Cot:
      if (!key.cot) throw Error(ErrorCode::PreconditionViolation, "cot serializer needs an initial CoT");
      return *key.cot;
  }
  return key.question;
}

namespace {

std::optional<std::string> resource_string(const UkfRecord& r, const char* key) {
  if (!r.content_resources.is_object()) return std::nullopt;
  auto it = r.content_resources.find(key);
  if (it == r.content_resources.end() || !it->is_string()) return std::nullopt;
  std::string s = it->get<std::string>();
  if (text::trim(s).empty()) return std::nullopt;
  return s;
}

std::optional<std::string> non_empty(std::string s) {
  if (text::trim(s).empty()) return std::nullopt;
  return s;
}

}  // namespace

std::optional<std::string> serialize_record(const UkfRecord& record, Serializer serializer) {
  switch (serializer) {
    case Serializer::Query:
      if (auto q = resource_string(record, "question")) return q;
      return non_empty(record.name);
    case Serializer::QuerySketch: {
      if (auto s = resource_string(record, "sketch")) return s;
      auto q = resource_string(record, "question");
      if (!q || !record.content_resources.contains("annotations")) return std::nullopt;
      return query_sketch(*q, spans_from_json(record.content_resources["annotations"], *q));
    }
    case Serializer::Tags:
      if (record.tags.empty()) return std::nullopt;
      return tags_key(record.tags);
    case Serializer::Sql:
      if (auto s = resource_string(record, "sql")) return non_empty(sql_body(*s));
      return std::nullopt;
    case Serializer::Header:
      if (auto s = resource_string(record, "sql")) return non_empty(sql_header(*s));
      return std::nullopt;
    case Serializer::Cot: return resource_string(record, "cot");
  }
  return std::nullopt;
}

std::vector<EntitySpan> spans_from_json(const json& j, const std::string& question) {
  if (!j.is_array()) throw Error(ErrorCode::Parse, "annotations must be an array");
  std::vector<EntitySpan> out;
  std::size_t cursor = 0;
  for (const auto& e : j) {
    EntitySpan s;
    s.kind = text::to_upper_ascii(e.value("kind", ""));
    if (e.contains("taxonomy") && e["taxonomy"].is_string()) s.taxonomy = e["taxonomy"].get<std::string>();
    if (e.contains("begin")) {
      s.begin = e.at("begin").get<std::size_t>();
      s.end = e.at("end").get<std::size_t>();
    } else {
      std::string needle = e.value("text", "");
      std::size_t at = needle.empty() ? std::string::npos : question.find(needle, cursor);
      if (at == std::string::npos) throw Error(ErrorCode::Parse, "annotation text '" + needle + "' not in question");
      s.begin = at;
      s.end = at + needle.size();
    }
    cursor = s.end;
    out.push_back(std::move(s));
  }
  return out;
}

json spans_to_json(const std::vector<EntitySpan>& spans) {
  json out = json::array();
  for (const auto& s : spans) {
    json e{{"begin", s.begin}, {"end", s.end}, {"kind", s.kind}};
    if (s.taxonomy) e["taxonomy"] = *s.taxonomy;
    out.push_back(e);
  }
  return out;
}

}  // namespace kbsql
