#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kbsql/lemmatizer.hpp"
#include "kbsql/ukf.hpp"

namespace kbsql {

class KnowledgeBase;

struct DaacEntry {
  std::string knowledge_id;
  std::set<std::string> synonyms;
};

struct DaacPattern {
  std::string lemma;
  std::set<std::string> surfaces;
  std::set<std::string> knowledge_ids;
};

using DaacPatternRef = std::shared_ptr<const DaacPattern>;

struct DaacMatch {
  /// Code-point offsets into the lemmatized query, end exclusive.
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  /// Code-point offsets into the raw query.
  std::uint32_t raw_start = 0;
  std::uint32_t raw_end = 0;
  DaacPatternRef entry;

  const std::string& pattern() const { return entry->lemma; }
  const std::set<std::string>& knowledge_ids() const { return entry->knowledge_ids; }
  bool operator==(const DaacMatch& o) const {
    return start == o.start && end == o.end && raw_start == o.raw_start && raw_end == o.raw_end &&
           entry->lemma == o.entry->lemma && entry->knowledge_ids == o.entry->knowledge_ids;
  }
};

/// Immutable double-array Aho-Corasick automaton over lemmatized synonym patterns.
class DaacIndex {
 public:
  /// Throws EmptyPattern when a synonym lemmatizes to nothing.
  static DaacIndex build(const std::vector<DaacEntry>& entries,
                         std::shared_ptr<const Lemmatizer> lemmatizer = default_lemmatizer());

  /// Every occurrence of every pattern, overlapping and nested included, sorted by (start, end).
  std::vector<DaacMatch> match_all(std::string_view query) const;
  /// Matching on text that is already lemmatized; raw offsets equal lemma offsets.
  std::vector<DaacMatch> match_lemmatized(std::string_view lemma_text) const;

  std::size_t pattern_count() const { return patterns_.size(); }
  std::size_t state_count() const { return state_count_; }
  std::size_t array_size() const { return base_.size(); }
  const std::vector<DaacPatternRef>& patterns() const { return patterns_; }
  const Lemmatizer& lemmatizer() const { return *lemmatizer_; }
  std::string lemmatizer_version() const { return lemmatizer_version_; }

  /// Double-array consistency: every trie edge s -c-> t satisfies check[base[s]+c] == s.
  bool check_consistency() const;

  std::string serialize() const;
  /// `lemmatizer` must report the version recorded in the blob.
  static DaacIndex deserialize(std::string_view blob,
                               std::shared_ptr<const Lemmatizer> lemmatizer = default_lemmatizer());

 private:
  DaacIndex() = default;
  std::int32_t code_of(char32_t cp) const;
  std::int32_t step(std::int32_t state, std::int32_t code) const;
  template <typename Visit>
  void walk(const std::u32string& text, Visit&& visit) const;
  std::vector<DaacMatch> scan(const std::u32string& text, const LemmaResult* alignment) const;

  std::vector<char32_t> alphabet_;  // code c (1-based) -> code point alphabet_[c-1]
  std::vector<std::int32_t> base_;
  std::vector<std::int32_t> check_;
  std::vector<std::int32_t> fail_;
  std::vector<std::int32_t> terminal_;   // pattern id ending at state, or -1
  std::vector<std::int32_t> dict_link_;  // nearest proper suffix state with a pattern, or -1
  std::vector<std::int32_t> depth_;
  std::vector<DaacPatternRef> patterns_;
  std::size_t state_count_ = 0;
  std::string lemmatizer_version_;
  std::shared_ptr<const Lemmatizer> lemmatizer_;
};

/// Naive multi-pattern scan over all substrings; reference for the automaton.
std::vector<DaacMatch> naive_match_all(const std::vector<DaacPatternRef>& patterns, std::string_view lemma_text);

class SynonymProvider {
 public:
  virtual ~SynonymProvider() = default;
  /// Throws ProviderUnavailable on failure.
  virtual std::vector<std::string> synonyms(const UkfRecord& record) = 0;
};

/// Canned synonyms keyed by record name (falls back to the lemmatized name).
class MockSynonymProvider final : public SynonymProvider {
 public:
  explicit MockSynonymProvider(std::map<std::string, std::vector<std::string>> table, bool fail = false)
      : table_(std::move(table)), fail_(fail) {}
  std::vector<std::string> synonyms(const UkfRecord& record) override;

 private:
  std::map<std::string, std::vector<std::string>> table_;
  bool fail_;
};

/// Provider synonyms united with name and existing synonyms, one surface per lemma.
std::set<std::string> augment_synonyms(const UkfRecord& record, SynonymProvider& provider,
                                       const Lemmatizer& lemmatizer = *default_lemmatizer());

/// Pattern entries for a KB snapshot: each live record contributes its name and synonyms.
/// Surfaces that lemmatize to nothing are skipped with a warning.
std::vector<DaacEntry> daac_entries(const std::vector<UkfRecord>& records, const Lemmatizer& lemmatizer);

/// Atomically swappable reference to the current index.
class DaacHandle {
 public:
  explicit DaacHandle(std::shared_ptr<const DaacIndex> index = nullptr) : index_(std::move(index)) {}
  std::shared_ptr<const DaacIndex> current() const;
  /// Returns the new version.
  std::uint64_t swap(std::shared_ptr<const DaacIndex> next);
  std::uint64_t version() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const DaacIndex> index_;
  std::uint64_t version_ = 0;
};

/// Handle rebuilt from the knowledge base after every change it reports.
std::shared_ptr<DaacHandle> make_live_daac(KnowledgeBase& kb,
                                           std::shared_ptr<const Lemmatizer> lemmatizer = default_lemmatizer());

}  // namespace kbsql
