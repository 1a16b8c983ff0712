#include "kbsql/lemmatizer.hpp"

#include <algorithm>

#include "kbsql/hash.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

std::pair<std::size_t, std::size_t> LemmaResult::raw_span(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > raw_begin.size()) return {0, 0};
  return {raw_begin[begin], raw_end[end - 1]};
}

LemmaResult IdentityLemmatizer::lemmatize_aligned(std::string_view text) const {
  LemmaResult out;
  out.text = std::string(text);
  std::size_t n = text::utf8_length(text);
  out.raw_begin.resize(n);
  out.raw_end.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.raw_begin[i] = i;
    out.raw_end[i] = i + 1;
  }
  return out;
}

const std::map<std::string, std::string>& RuleLemmatizer::builtin_exceptions() {
  static const std::map<std::string, std::string> table = {
      {"running", "running"},   {"building", "building"}, {"people", "person"},     {"children", "child"},
      {"men", "man"},           {"women", "woman"},       {"data", "data"},         {"news", "news"},
      {"series", "series"},     {"species", "species"},   {"during", "during"},     {"nothing", "nothing"},
      {"something", "something"}, {"anything", "anything"}, {"everything", "everything"},
      {"morning", "morning"},   {"evening", "evening"},   {"ceiling", "ceiling"},   {"always", "always"},
      {"sometimes", "sometimes"}, {"this", "this"},       {"its", "its"},           {"has", "has"},
      {"was", "was"},           {"does", "does"},         {"yes", "yes"},           {"gas", "gas"},
      {"bus", "bus"},           {"plus", "plus"},         {"less", "less"},         {"need", "need"},
      {"speed", "speed"},       {"seed", "seed"},         {"feed", "feed"},         {"bed", "bed"},
      {"red", "red"},           {"hundred", "hundred"},   {"indeed", "indeed"},     {"united", "united"},
      {"feet", "foot"},         {"teeth", "tooth"},       {"mice", "mouse"},        {"geese", "goose"},
  };
  return table;
}

RuleLemmatizer::RuleLemmatizer() : RuleLemmatizer(std::map<std::string, std::string>{}) {}

RuleLemmatizer::RuleLemmatizer(const std::map<std::string, std::string>& extra)
    : exceptions_(builtin_exceptions()) {
  for (const auto& [k, v] : extra) exceptions_[text::to_lower_ascii(k)] = text::to_lower_ascii(v);
  std::string fingerprint;
  for (const auto& [k, v] : exceptions_) {
    protected_[v] = true;
    append_field(fingerprint, k);
    append_field(fingerprint, v);
  }
  version_ = extra.empty() ? "rule-1" : "rule-1+" + sha256_hex(fingerprint).substr(0, 12);
}

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }

bool has_vowel(std::string_view s) { return std::any_of(s.begin(), s.end(), is_vowel); }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

// "stopp" -> "stop"; keeps ll/ss/zz.
std::string undouble(std::string stem) {
  std::size_t n = stem.size();
  if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' &&
      stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
  }
  return stem;
}

// One suffix rule, or the input unchanged.
std::string strip_once(const std::string& t) {
  std::size_t n = t.size();
  if (n > 4 && ends_with(t, "ies")) return t.substr(0, n - 3) + "y";
  if (n > 4 && ends_with(t, "ied")) return t.substr(0, n - 3) + "y";
  if (ends_with(t, "sses")) return t.substr(0, n - 2);
  if (n > 4 && (ends_with(t, "ches") || ends_with(t, "shes") || ends_with(t, "xes") || ends_with(t, "zes")))
    return t.substr(0, n - 2);
  if (n > 3 && ends_with(t, "s") && !ends_with(t, "ss") && !ends_with(t, "us") && !ends_with(t, "is"))
    return t.substr(0, n - 1);
  if (n > 5 && ends_with(t, "ing")) {
    std::string stem = t.substr(0, n - 3);
    if (stem.size() >= 3 && has_vowel(stem)) return undouble(stem);
  }
  if (n > 4 && ends_with(t, "ed")) {
    std::string stem = t.substr(0, n - 2);
    if (stem.size() >= 3 && has_vowel(stem)) return undouble(stem);
  }
  return t;
}

bool is_token_char(char32_t cp) {
  if (cp >= 0x80) return true;
  return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
}

}  // namespace

std::string RuleLemmatizer::lemmatize_token(const std::string& token) const {
  if (!all_alpha(token)) return token;
  std::string t = token;
  for (int guard = 0; guard < 16; ++guard) {
    if (protected_.count(t)) return t;
    if (auto it = exceptions_.find(t); it != exceptions_.end()) return it->second;
    std::string next = strip_once(t);
    if (next == t) return t;
    t = std::move(next);
  }
  return t;
}

LemmaResult RuleLemmatizer::lemmatize_aligned(std::string_view input) const {
  std::u32string cps = text::decode_utf8(input);
  LemmaResult out;
  std::size_t i = 0;
  bool first = true;
  std::size_t prev_end = 0;
  while (i < cps.size()) {
    if (!is_token_char(cps[i])) {
      ++i;
      continue;
    }
    std::size_t a = i;
    std::string token;
    while (i < cps.size() && is_token_char(cps[i])) {
      char32_t c = cps[i];
      if (c >= 'A' && c <= 'Z') c = c - 'A' + 'a';
      text::append_utf8(token, c);
      ++i;
    }
    std::size_t b = i;
    if (!first) {
      out.text.push_back(' ');
      out.raw_begin.push_back(prev_end);
      out.raw_end.push_back(a);
    }
    first = false;
    std::string lemma = lemmatize_token(token);
    std::size_t len = text::utf8_length(lemma);
    out.text += lemma;
    for (std::size_t k = 0; k < len; ++k) {
      std::size_t begin = std::min(a + k, b - 1);
      std::size_t end = (k + 1 == len) ? b : std::max(begin + 1, std::min(a + k + 1, b));
      out.raw_begin.push_back(begin);
      out.raw_end.push_back(end);
    }
    prev_end = b;
  }
  return out;
}

std::shared_ptr<const Lemmatizer> default_lemmatizer() {
  static const auto instance = std::make_shared<const RuleLemmatizer>();
  return instance;
}

}  // namespace kbsql
