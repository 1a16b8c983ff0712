#include "kbsql/daac.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <map>

#include "kbsql/errors.hpp"
#include "kbsql/kb_store.hpp"
#include "kbsql/log.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

namespace {

constexpr char kMagic[] = "KBSQLDAAC";
constexpr std::uint8_t kFormatVersion = 1;

struct TrieNode {
  std::map<std::int32_t, std::int32_t> children;
  std::int32_t pattern = -1;
  std::int32_t depth = 0;
};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void vec(const std::vector<std::int32_t>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (auto x : v) i32(x);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<std::int32_t> vec() {
    std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * 4);
    std::vector<std::int32_t> v(n);
    for (auto& x : v) x = i32();
    return v;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error(ErrorCode::Parse, "truncated DAAC blob");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

DaacIndex DaacIndex::build(const std::vector<DaacEntry>& entries, std::shared_ptr<const Lemmatizer> lemmatizer) {
  if (!lemmatizer) lemmatizer = default_lemmatizer();
  std::map<std::string, DaacPattern> by_lemma;
  for (const auto& entry : entries) {
    for (const auto& surface : entry.synonyms) {
      // Re-encoding replaces invalid UTF-8 with U+FFFD so equal code-point strings share a pattern.
      std::string lemma = text::encode_utf8(text::decode_utf8(lemmatizer->lemmatize(surface)));
      if (lemma.empty()) {
        throw Error(ErrorCode::EmptyPattern,
                    "synonym '" + surface + "' of " + entry.knowledge_id + " lemmatizes to nothing");
      }
      auto& p = by_lemma[lemma];
      p.lemma = lemma;
      p.surfaces.insert(surface);
      p.knowledge_ids.insert(entry.knowledge_id);
    }
  }

  DaacIndex idx;
  idx.lemmatizer_ = lemmatizer;
  idx.lemmatizer_version_ = lemmatizer->version();
  std::set<char32_t> alphabet;
  std::vector<std::u32string> words;
  for (auto& [lemma, p] : by_lemma) {
    words.push_back(text::decode_utf8(lemma));
    alphabet.insert(words.back().begin(), words.back().end());
    idx.patterns_.push_back(std::make_shared<const DaacPattern>(std::move(p)));
  }
  idx.alphabet_.assign(alphabet.begin(), alphabet.end());

  // Trie over dense codes, patterns inserted in lexicographic order.
  std::vector<TrieNode> trie(1);
  for (std::size_t pid = 0; pid < words.size(); ++pid) {
    std::int32_t node = 0;
    for (char32_t cp : words[pid]) {
      std::int32_t code = idx.code_of(cp);
      auto it = trie[node].children.find(code);
      if (it == trie[node].children.end()) {
        trie.push_back(TrieNode{});
        std::int32_t child = static_cast<std::int32_t>(trie.size() - 1);
        trie.back().depth = trie[node].depth + 1;
        trie[node].children.emplace(code, child);
        node = child;
      } else {
        node = it->second;
      }
    }
    trie[node].pattern = static_cast<std::int32_t>(pid);
  }

  // Double array, breadth-first, first-fit base allocation.
  std::vector<std::int32_t> base(1, 0), check(1, -2);
  std::vector<std::int32_t> state_of(trie.size(), -1);
  state_of[0] = 0;
  std::size_t first_free = 1;
  auto ensure = [&](std::size_t n) {
    if (n > check.size()) {
      check.resize(n, -1);
      base.resize(n, 0);
    }
  };
  std::deque<std::int32_t> queue{0};
  std::vector<std::int32_t> bfs_order;
  while (!queue.empty()) {
    std::int32_t node = queue.front();
    queue.pop_front();
    bfs_order.push_back(node);
    const auto& kids = trie[node].children;
    if (kids.empty()) continue;
    std::int32_t s = state_of[node];
    std::int32_t c_min = kids.begin()->first;
    while (first_free < check.size() && check[first_free] != -1) ++first_free;
    std::int32_t b = std::max<std::int32_t>(0, static_cast<std::int32_t>(first_free) - c_min);
    for (;; ++b) {
      bool fits = true;
      for (const auto& [code, _] : kids) {
        std::size_t t = static_cast<std::size_t>(b + code);
        if (t < check.size() && check[t] != -1) {
          fits = false;
          break;
        }
      }
      if (fits) break;
    }
    base[s] = b;
    ensure(static_cast<std::size_t>(b + kids.rbegin()->first + 1));
    for (const auto& [code, child] : kids) {
      std::int32_t t = b + code;
      check[t] = s;
      state_of[child] = t;
      queue.push_back(child);
    }
  }

  std::size_t n = check.size();
  idx.base_ = std::move(base);
  idx.check_ = std::move(check);
  idx.fail_.assign(n, 0);
  idx.terminal_.assign(n, -1);
  idx.dict_link_.assign(n, -1);
  idx.depth_.assign(n, 0);
  idx.state_count_ = trie.size();
  for (std::size_t node = 0; node < trie.size(); ++node) {
    idx.terminal_[state_of[node]] = trie[node].pattern;
    idx.depth_[state_of[node]] = trie[node].depth;
  }
  // Fail and dictionary links in BFS order so parents are resolved first.
  for (std::int32_t node : bfs_order) {
    std::int32_t s = state_of[node];
    for (const auto& [code, child] : trie[node].children) {
      std::int32_t t = state_of[child];
      std::int32_t f = 0;
      if (s != 0) {
        f = idx.fail_[s];
        while (f != 0 && idx.step(f, code) < 0) f = idx.fail_[f];
        std::int32_t g = idx.step(f, code);
        f = g < 0 ? 0 : g;
      }
      idx.fail_[t] = f;
      idx.dict_link_[t] = idx.terminal_[f] >= 0 ? f : idx.dict_link_[f];
    }
  }
  return idx;
}

std::int32_t DaacIndex::code_of(char32_t cp) const {
  auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), cp);
  if (it == alphabet_.end() || *it != cp) return 0;
  return static_cast<std::int32_t>(it - alphabet_.begin()) + 1;
}

std::int32_t DaacIndex::step(std::int32_t state, std::int32_t code) const {
  if (code <= 0) return -1;
  std::int64_t t = static_cast<std::int64_t>(base_[state]) + code;
  if (t < 0 || t >= static_cast<std::int64_t>(check_.size())) return -1;
  return check_[t] == state ? static_cast<std::int32_t>(t) : -1;
}

template <typename Visit>
void DaacIndex::walk(const std::u32string& text, Visit&& visit) const {
  std::int32_t state = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    std::int32_t code = code_of(text[i]);
    std::int32_t next = step(state, code);
    while (next < 0 && state != 0) {
      state = fail_[state];
      next = step(state, code);
    }
    state = next < 0 ? 0 : next;
    for (std::int32_t s = terminal_[state] >= 0 ? state : dict_link_[state]; s >= 0; s = dict_link_[s]) {
      visit(i + 1, s);
    }
  }
}

std::vector<DaacMatch> DaacIndex::scan(const std::u32string& text, const LemmaResult* alignment) const {
  if (patterns_.empty()) return {};
  // First pass counts matches per start offset, second pass writes each one straight into its
  // (start, end) slot. Matches arrive ordered by end, so per-start order is already correct.
  std::vector<std::size_t> offset(text.size() + 1, 0);
  walk(text, [&](std::size_t end, std::int32_t s) { ++offset[end - depth_[s] + 1]; });
  for (std::size_t i = 1; i < offset.size(); ++i) offset[i] += offset[i - 1];
  std::vector<DaacMatch> out(offset.back());
  walk(text, [&](std::size_t end, std::int32_t s) {
    std::size_t start = end - static_cast<std::size_t>(depth_[s]);
    DaacMatch& m = out[offset[start]++];
    m.start = static_cast<std::uint32_t>(start);
    m.end = static_cast<std::uint32_t>(end);
    m.entry = patterns_[terminal_[s]];
    if (alignment) {
      auto [rs, re] = alignment->raw_span(start, end);
      m.raw_start = static_cast<std::uint32_t>(rs);
      m.raw_end = static_cast<std::uint32_t>(re);
    } else {
      m.raw_start = m.start;
      m.raw_end = m.end;
    }
  });
  return out;
}

std::vector<DaacMatch> DaacIndex::match_all(std::string_view query) const {
  LemmaResult lemma = lemmatizer_->lemmatize_aligned(query);
  return scan(text::decode_utf8(lemma.text), &lemma);
}

std::vector<DaacMatch> DaacIndex::match_lemmatized(std::string_view lemma_text) const {
  return scan(text::decode_utf8(lemma_text), nullptr);
}

bool DaacIndex::check_consistency() const {
  const auto size = static_cast<std::int32_t>(check_.size());
  const auto alpha = static_cast<std::int32_t>(alphabet_.size());
  for (std::int32_t t = 1; t < size; ++t) {
    std::int32_t p = check_[t];
    if (p == -1) continue;
    if (p < 0 || p >= size || check_[p] == -1) return false;
    std::int32_t code = t - base_[p];
    if (code < 1 || code > alpha || step(p, code) != t) return false;
  }
  for (std::size_t pid = 0; pid < patterns_.size(); ++pid) {
    std::int32_t s = 0;
    for (char32_t cp : text::decode_utf8(patterns_[pid]->lemma)) {
      s = step(s, code_of(cp));
      if (s < 0) return false;
    }
    if (terminal_[s] != static_cast<std::int32_t>(pid)) return false;
  }
  return true;
}

std::string DaacIndex::serialize() const {
  Writer w;
  w.raw(std::string_view(kMagic, sizeof(kMagic) - 1));
  w.u8(kFormatVersion);
  w.str(lemmatizer_version_);
  w.u32(static_cast<std::uint32_t>(state_count_));
  w.u32(static_cast<std::uint32_t>(alphabet_.size()));
  for (char32_t cp : alphabet_) w.u32(cp);
  w.vec(base_);
  w.vec(check_);
  w.vec(fail_);
  w.vec(terminal_);
  w.vec(dict_link_);
  w.vec(depth_);
  w.u32(static_cast<std::uint32_t>(patterns_.size()));
  for (const auto& p : patterns_) {
    w.str(p->lemma);
    w.u32(static_cast<std::uint32_t>(p->surfaces.size()));
    for (const auto& s : p->surfaces) w.str(s);
    w.u32(static_cast<std::uint32_t>(p->knowledge_ids.size()));
    for (const auto& s : p->knowledge_ids) w.str(s);
  }
  return w.take();
}

DaacIndex DaacIndex::deserialize(std::string_view blob, std::shared_ptr<const Lemmatizer> lemmatizer) {
  if (!lemmatizer) lemmatizer = default_lemmatizer();
  Reader r(blob);
  if (r.raw(sizeof(kMagic) - 1) != std::string_view(kMagic, sizeof(kMagic) - 1)) {
    throw Error(ErrorCode::Parse, "not a DAAC index");
  }
  if (auto v = r.u8(); v != kFormatVersion) {
    throw Error(ErrorCode::Parse, "unsupported DAAC format version " + std::to_string(v));
  }
  DaacIndex idx;
  idx.lemmatizer_version_ = r.str();
  if (idx.lemmatizer_version_ != lemmatizer->version()) {
    throw Error(ErrorCode::Parse, "index built with lemmatizer '" + idx.lemmatizer_version_ + "', have '" +
                                      lemmatizer->version() + "'");
  }
  idx.lemmatizer_ = std::move(lemmatizer);
  idx.state_count_ = r.u32();
  idx.alphabet_.resize(r.u32());
  for (auto& cp : idx.alphabet_) cp = r.u32();
  idx.base_ = r.vec();
  idx.check_ = r.vec();
  idx.fail_ = r.vec();
  idx.terminal_ = r.vec();
  idx.dict_link_ = r.vec();
  idx.depth_ = r.vec();
  for (auto count = r.u32(); count > 0; --count) {
    DaacPattern p;
    p.lemma = r.str();
    for (auto n = r.u32(); n > 0; --n) p.surfaces.insert(r.str());
    for (auto n = r.u32(); n > 0; --n) p.knowledge_ids.insert(r.str());
    idx.patterns_.push_back(std::make_shared<const DaacPattern>(std::move(p)));
  }
  std::size_t n = idx.check_.size();
  if (!r.done() || idx.base_.size() != n || idx.fail_.size() != n || idx.terminal_.size() != n ||
      idx.dict_link_.size() != n || idx.depth_.size() != n || !idx.check_consistency()) {
    throw Error(ErrorCode::Parse, "corrupt DAAC blob");
  }
  return idx;
}

std::vector<DaacMatch> naive_match_all(const std::vector<DaacPatternRef>& patterns, std::string_view lemma_text) {
  std::u32string text = text::decode_utf8(lemma_text);
  std::vector<DaacMatch> out;
  for (const auto& p : patterns) {
    std::u32string pat = text::decode_utf8(p->lemma);
    if (pat.empty() || pat.size() > text.size()) continue;
    for (std::size_t i = 0; i + pat.size() <= text.size(); ++i) {
      if (text.compare(i, pat.size(), pat) == 0) {
        auto b = static_cast<std::uint32_t>(i), e = static_cast<std::uint32_t>(i + pat.size());
        out.push_back({b, e, b, e, p});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const DaacMatch& a, const DaacMatch& b) {
    return std::tie(a.start, a.end) < std::tie(b.start, b.end);
  });
  return out;
}

std::vector<std::string> MockSynonymProvider::synonyms(const UkfRecord& record) {
  if (fail_) throw Error(ErrorCode::ProviderUnavailable, "mock synonym provider set to fail");
  if (auto it = table_.find(record.name); it != table_.end()) return it->second;
  if (auto it = table_.find(default_lemmatizer()->lemmatize(record.name)); it != table_.end()) return it->second;
  return {};
}

std::set<std::string> augment_synonyms(const UkfRecord& record, SynonymProvider& provider,
                                       const Lemmatizer& lemmatizer) {
  std::vector<std::string> generated;
  try {
    generated = provider.synonyms(record);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProviderUnavailable) throw;
    throw Error(ErrorCode::ProviderUnavailable, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, e.what());
  }
  std::vector<std::string> ordered{record.name};
  ordered.insert(ordered.end(), record.synonyms.begin(), record.synonyms.end());
  ordered.insert(ordered.end(), generated.begin(), generated.end());
  std::set<std::string> seen_lemmas;
  std::set<std::string> out;
  for (const auto& surface : ordered) {
    std::string trimmed(text::trim(surface));
    std::string lemma = lemmatizer.lemmatize(trimmed);
    if (lemma.empty() || !seen_lemmas.insert(lemma).second) continue;
    out.insert(trimmed);
  }
  return out;
}

std::vector<DaacEntry> daac_entries(const std::vector<UkfRecord>& records, const Lemmatizer& lemmatizer) {
  std::vector<DaacEntry> out;
  for (const auto& r : records) {
    if (r.inactive_mark) continue;
    DaacEntry e{r.id, {}};
    std::set<std::string> surfaces{r.name};
    surfaces.insert(r.synonyms.begin(), r.synonyms.end());
    for (const auto& s : surfaces) {
      if (lemmatizer.lemmatize(s).empty()) {
        warn("skipping synonym '" + s + "' of " + r.id + ": empty after lemmatization");
        continue;
      }
      e.synonyms.insert(s);
    }
    if (!e.synonyms.empty()) out.push_back(std::move(e));
  }
  return out;
}

std::shared_ptr<const DaacIndex> DaacHandle::current() const {
  std::lock_guard lock(mutex_);
  return index_;
}

std::uint64_t DaacHandle::swap(std::shared_ptr<const DaacIndex> next) {
  std::lock_guard lock(mutex_);
  index_ = std::move(next);
  return ++version_;
}

std::uint64_t DaacHandle::version() const {
  std::lock_guard lock(mutex_);
  return version_;
}

std::shared_ptr<DaacHandle> make_live_daac(KnowledgeBase& kb, std::shared_ptr<const Lemmatizer> lemmatizer) {
  auto rebuild = [&kb, lemmatizer] {
    return std::make_shared<const DaacIndex>(DaacIndex::build(daac_entries(kb.records(), *lemmatizer), lemmatizer));
  };
  auto handle = std::make_shared<DaacHandle>(rebuild());
  std::weak_ptr<DaacHandle> weak = handle;
  kb.add_listener([weak, rebuild](const std::vector<std::string>&) {
    if (auto h = weak.lock()) h->swap(rebuild());
  });
  return handle;
}

}  // namespace kbsql
