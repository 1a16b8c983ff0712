#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kbsql/daac.hpp"
#include "kbsql/embedding.hpp"
#include "kbsql/kb_store.hpp"
#include "kbsql/ukf.hpp"

namespace kbsql {

// ---------------------------------------------------------------------------
// Facet store

/// Slot -> patterns. Patterns are literal text where '%' is the only wildcard; several
/// patterns for one slot are OR-ed, slots are AND-ed.
using FacetFilters = std::map<std::string, std::vector<std::string>>;

struct FacetPredicates {
  std::optional<std::string> type;
  std::optional<std::string> collection;
  std::optional<std::string> source;
  std::optional<std::string> creator;
  std::optional<std::string> owner;
  std::optional<std::string> workspace;
  std::optional<int> min_priority;
  /// Pattern over synonyms, same wildcard rules as tag values.
  std::optional<std::string> synonym;
  bool include_inactive = false;
};

/// Normalized SQLite store: `records` main table plus `tags`, `synonyms`, `related` and
/// `auths` side tables keyed by record id.
class FacetStore {
 public:
  explicit FacetStore(const std::string& path = ":memory:");
  ~FacetStore();
  FacetStore(const FacetStore&) = delete;
  FacetStore& operator=(const FacetStore&) = delete;

  void upsert(const UkfRecord& record);
  void remove(const std::string& id);
  /// Replaces the whole content with the KB (live and inactive records).
  void sync(const KnowledgeBase& kb);

  /// Matching ids, sorted. With `strict`, a slot no record carries raises UnknownSlot.
  std::vector<std::string> query(const FacetFilters& filters, const FacetPredicates& predicates = {},
                                 bool strict = false) const;
  std::set<std::string> slots() const;
  std::size_t size() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// LIKE pattern for a literal-with-'%' pattern; '_' and '\' are escaped (ESCAPE '\').
std::string like_pattern(const std::string& pattern);

// ---------------------------------------------------------------------------
// Serializers

enum class Serializer { Query, QuerySketch, Tags, Sql, Header, Cot };
std::string_view to_string(Serializer s);
Serializer parse_serializer(std::string_view text);
const std::vector<Serializer>& all_serializers();

/// Entity mention in a question; byte offsets [begin, end).
struct EntitySpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string kind;  // COLUMN, VALUE, ENUM, TABLE, ...
  std::optional<std::string> taxonomy;
};

/// Query-side material. `sql` and `cot` come from an initial generation and feed the
/// second-pass serializers.
struct SearchKey {
  std::string question;
  std::optional<std::vector<EntitySpan>> annotations;
  std::optional<std::string> sql;
  std::optional<std::string> cot;
  std::set<std::string> tags;
};

/// "[KIND]" or "[TAXONOMY as KIND]" in place of each span. Throws PreconditionViolation on
/// overlapping or out-of-range spans.
std::string query_sketch(const std::string& question, const std::vector<EntitySpan>& spans);
/// Sorted tags joined with '|'.
std::string tags_key(const std::set<std::string>& tags);
/// Leading comment block of a SQL text, comment markers removed, one line per comment line.
std::string sql_header(const std::string& sql);
/// SQL with comments stripped and whitespace collapsed.
std::string sql_body(const std::string& sql);

/// Throws MissingAnnotations for a sketch without spans, PreconditionViolation when a
/// second-pass serializer lacks its input.
std::string serialize_query(const SearchKey& key, Serializer serializer);
/// Index key for a record, or nullopt when the record has nothing for that serializer.
/// Query: `content_resources.question`, else the name. QuerySketch: `content_resources.sketch`,
/// else the question with `content_resources.annotations`. Sql/Header/Cot read
/// `content_resources.sql` / `.cot`.
std::optional<std::string> serialize_record(const UkfRecord& record, Serializer serializer);

/// Spans as [{begin, end, kind, taxonomy?}]. An entry may give `text` instead of offsets; it is
/// located in `question` after the previous span.
std::vector<EntitySpan> spans_from_json(const json& j, const std::string& question = "");
json spans_to_json(const std::vector<EntitySpan>& spans);

// ---------------------------------------------------------------------------
// Vector index

struct ScoredId {
  std::string id;
  double score = 0;
  bool operator==(const ScoredId&) const = default;
};

enum class SearchMode { Ann, Mmr };
SearchMode parse_search_mode(std::string_view text);

/// Exact brute-force cosine index, one sub-index per serializer. Immutable once built.
class VectorIndex {
 public:
  explicit VectorIndex(std::shared_ptr<const Embedder> embedder);

  void add(Serializer serializer, const std::string& id, const std::string& key);
  /// Indexes every live record under every serializer it has a key for.
  void add_records(const std::vector<UkfRecord>& records);

  /// Throws EmptyIndex, PreconditionViolation (k < 1, lambda outside [0,1]).
  std::vector<ScoredId> search(const std::string& key, Serializer serializer, std::size_t k,
                               SearchMode mode = SearchMode::Ann, double lambda = 0.5) const;
  std::size_t size(Serializer serializer) const;
  const Embedder& embedder() const { return *embedder_; }

 private:
  struct Entry {
    std::string id;
    Vector vec;
  };
  std::shared_ptr<const Embedder> embedder_;
  std::map<Serializer, std::vector<Entry>> entries_;
};

// ---------------------------------------------------------------------------
// Graph index

/// Directed adjacency over `related` tuples of live records.
class GraphIndex {
 public:
  GraphIndex() = default;
  explicit GraphIndex(const std::vector<UkfRecord>& records);

  /// BFS up to `hops` (1..3) following edges whose relation, or the name of the record named
  /// by relation_id, is in the filter; an empty filter admits every relation. Excludes start.
  /// Throws UnknownId, PreconditionViolation.
  std::set<std::string> neighbors(const std::string& start, const std::set<std::string>& relation_filter,
                                  int hops) const;
  /// Ids at exactly each distance, for scoring.
  std::map<std::string, int> distances(const std::string& start, const std::set<std::string>& relation_filter,
                                       int hops) const;

 private:
  struct Edge {
    std::string target;
    std::string relation;
    std::string relation_name;
  };
  std::set<std::string> nodes_;
  std::map<std::string, std::vector<Edge>> adjacency_;
};

std::set<std::string> graph_neighbors(const KnowledgeBase& kb, const std::string& start,
                                      const std::set<std::string>& relation_filter, int hops);

// ---------------------------------------------------------------------------
// Fusion

enum class SourceIndex { Daac, Facet, Vector, Graph };
std::string_view to_string(SourceIndex s);

struct ResultList {
  SourceIndex source = SourceIndex::Vector;
  std::vector<ScoredId> hits;
  std::map<std::string, std::vector<DaacMatch>> spans;
};

struct BundleItem {
  UkfRecord record;
  SourceIndex source = SourceIndex::Vector;
  double score = 0;
  std::vector<DaacMatch> match_spans;
};

struct KnowledgeBundle {
  std::vector<BundleItem> items;
  /// Optional one-off LLM summary of the items.
  std::optional<std::string> summary;
  std::vector<std::string> ids() const;
  bool contains(const std::string& id) const;
  json to_json() const;
};

enum class FusionPolicy { RoundRobin, ScoreRerank };
FusionPolicy parse_fusion_policy(std::string_view text);

/// Drops ids missing from the KB or inactive, then records whose trigger rejects `context`
/// (trigger name `context.trigger`, falling back to "default"), dedups on id keeping the
/// highest score, orders by policy and truncates to `limit`. Rerank scores are min-max
/// normalized per list; ties go to higher priority, then smaller id. `limit` 0 keeps everything.
KnowledgeBundle fuse(const std::vector<ResultList>& lists, FusionPolicy policy, const json& context,
                     std::size_t limit, const KnowledgeBase& kb);

/// One hit per knowledge id; score is the number of matches mentioning it.
ResultList daac_results(const std::vector<DaacMatch>& matches);
ResultList facet_results(const std::vector<std::string>& ids);
/// Score 1/distance.
ResultList graph_results(const std::map<std::string, int>& distances);
ResultList bundle_results(const KnowledgeBundle& bundle);

// ---------------------------------------------------------------------------
// Index set

struct IndexOptions {
  std::size_t vector_k = 5;
  SearchMode mode = SearchMode::Ann;
  double mmr_lambda = 0.5;
  std::vector<Serializer> query_serializers = {Serializer::Query};
  std::string facet_path = ":memory:";
};

/// Snapshot of every index over one KB revision.
struct IndexSnapshot {
  std::uint64_t kb_revision = 0;
  std::shared_ptr<const DaacIndex> daac;
  std::shared_ptr<const VectorIndex> vectors;
  std::shared_ptr<const GraphIndex> graph;
};

struct IndexSetGuard;

/// Owns the facet store and swaps in fresh snapshots when the KB changes.
class IndexSet {
 public:
  IndexSet(KnowledgeBase& kb, std::shared_ptr<const Embedder> embedder,
           std::shared_ptr<const Lemmatizer> lemmatizer = default_lemmatizer(), IndexOptions options = {});
  ~IndexSet();
  IndexSet(const IndexSet&) = delete;
  IndexSet& operator=(const IndexSet&) = delete;

  /// Rebuilds every index from the current KB.
  void rebuild();
  IndexSnapshot snapshot() const;
  const FacetStore& facets() const { return *facets_; }
  const IndexOptions& options() const { return options_; }
  const Lemmatizer& lemmatizer() const { return *lemmatizer_; }
  const KnowledgeBase& kb() const { return kb_; }
  /// True when the snapshot matches the KB's current revision.
  bool fresh() const;

 private:
  KnowledgeBase& kb_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const Lemmatizer> lemmatizer_;
  IndexOptions options_;
  std::unique_ptr<FacetStore> facets_;
  std::shared_ptr<IndexSetGuard> guard_;
  std::mutex rebuild_mutex_;
  mutable std::mutex mutex_;
  IndexSnapshot snapshot_;
};

}  // namespace kbsql
