#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace kbsql {

/// Lemmatized text plus, for each code point of `text`, the raw code-point span it came from.
struct LemmaResult {
  std::string text;
  std::vector<std::size_t> raw_begin;
  std::vector<std::size_t> raw_end;

  /// Raw code-point span covering lemma code points [begin, end). end > begin.
  std::pair<std::size_t, std::size_t> raw_span(std::size_t begin, std::size_t end) const;
};

class Lemmatizer {
 public:
  virtual ~Lemmatizer() = default;
  virtual LemmaResult lemmatize_aligned(std::string_view text) const = 0;
  /// Recorded in serialized indices; a mismatch on load is rejected.
  virtual std::string version() const = 0;

  std::string lemmatize(std::string_view text) const { return lemmatize_aligned(text).text; }
};

/// Leaves text untouched.
class IdentityLemmatizer final : public Lemmatizer {
 public:
  LemmaResult lemmatize_aligned(std::string_view text) const override;
  std::string version() const override { return "identity"; }
};

/// Lower-cases ASCII, maps punctuation to single spaces, and strips plural / -ing / -ed suffixes
/// from purely alphabetic tokens. Exception entries win over the suffix rules.
class RuleLemmatizer final : public Lemmatizer {
 public:
  RuleLemmatizer();
  /// `extra` entries override the built-in table. Keys and values are matched lower-case.
  explicit RuleLemmatizer(const std::map<std::string, std::string>& extra);

  LemmaResult lemmatize_aligned(std::string_view text) const override;
  std::string version() const override { return version_; }
  std::string lemmatize_token(const std::string& token) const;

  static const std::map<std::string, std::string>& builtin_exceptions();

 private:
  std::map<std::string, std::string> exceptions_;
  std::map<std::string, bool> protected_;
  std::string version_;
};

std::shared_ptr<const Lemmatizer> default_lemmatizer();

}  // namespace kbsql
