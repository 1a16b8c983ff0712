#include <algorithm>
#include <cmath>
#include <deque>

#include "kbsql/errors.hpp"
#include "kbsql/index.hpp"
#include "kbsql/log.hpp"

namespace kbsql {

SearchMode parse_search_mode(std::string_view text) {
  if (text == "ann") return SearchMode::Ann;
  if (text == "mmr") return SearchMode::Mmr;
  throw Error(ErrorCode::Config, "unknown search mode '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Vector index

VectorIndex::VectorIndex(std::shared_ptr<const Embedder> embedder) : embedder_(std::move(embedder)) {
  if (!embedder_) throw Error(ErrorCode::PreconditionViolation, "vector index needs an embedder");
}

void VectorIndex::add(Serializer serializer, const std::string& id, const std::string& key) {
  Vector v = embedder_->embed(key);
  if (v.size() != embedder_->dimension()) throw Error(ErrorCode::PreconditionViolation, "embedding dimension");
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::PreconditionViolation, "non-finite embedding for " + id);
  }
  entries_[serializer].push_back({id, std::move(v)});
}

void VectorIndex::add_records(const std::vector<UkfRecord>& records) {
  for (const auto& r : records) {
    if (r.inactive_mark) continue;
    for (auto s : all_serializers()) {
      std::optional<std::string> key;
      try {
        key = serialize_record(r, s);
      } catch (const Error& e) {
        warn("record " + r.id + " skipped for " + std::string(to_string(s)) + ": " + e.what());
      }
      if (key) add(s, r.id, *key);
    }
  }
}

std::size_t VectorIndex::size(Serializer serializer) const {
  auto it = entries_.find(serializer);
  return it == entries_.end() ? 0 : it->second.size();
}

std::vector<ScoredId> VectorIndex::search(const std::string& key, Serializer serializer, std::size_t k,
                                          SearchMode mode, double lambda) const {
  if (k < 1) throw Error(ErrorCode::PreconditionViolation, "k must be >= 1");
  if (mode == SearchMode::Mmr && !(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::PreconditionViolation, "lambda must lie in [0,1]");
  }
  auto it = entries_.find(serializer);
  if (it == entries_.end() || it->second.empty()) {
    throw Error(ErrorCode::EmptyIndex, std::string(to_string(serializer)) + " index is empty");
  }
  Vector q = embedder_->embed(key);

  // Best entry per id; ANN order is similarity desc, id asc.
  std::map<std::string, std::size_t> best;
  std::vector<double> sims(it->second.size());
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    sims[i] = cosine(q, it->second[i].vec);
    auto [pos, inserted] = best.emplace(it->second[i].id, i);
    if (!inserted && sims[i] > sims[pos->second]) pos->second = i;
  }
  std::vector<std::size_t> order;
  for (const auto& [_, i] : best) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return it->second[a].id < it->second[b].id;
  });

  std::vector<ScoredId> out;
  if (mode == SearchMode::Ann) {
    for (std::size_t r = 0; r < order.size() && r < k; ++r) out.push_back({it->second[order[r]].id, sims[order[r]]});
    return out;
  }
  std::vector<std::size_t> selected;
  std::vector<bool> taken(order.size(), false);
  while (selected.size() < k && selected.size() < order.size()) {
    double best_score = -INFINITY;
    std::size_t best_rank = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (taken[r]) continue;
      double redundancy = 0;
      bool any = false;
      for (std::size_t s : selected) {
        double sim = cosine(it->second[order[r]].vec, it->second[s].vec);
        redundancy = any ? std::max(redundancy, sim) : sim;
        any = true;
      }
      double score = lambda * sims[order[r]] - (1.0 - lambda) * redundancy;
      if (score > best_score) {
        best_score = score;
        best_rank = r;
      }
    }
    taken[best_rank] = true;
    selected.push_back(order[best_rank]);
    out.push_back({it->second[order[best_rank]].id, sims[order[best_rank]]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph index

GraphIndex::GraphIndex(const std::vector<UkfRecord>& records) {
  std::map<std::string, std::string> names;
  for (const auto& r : records) {
    if (r.inactive_mark) continue;
    nodes_.insert(r.id);
    names[r.id] = r.name;
  }
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : records) {
    if (r.inactive_mark) continue;
    for (const auto& rel : r.related) {
      if (!nodes_.count(rel.subject_id) || !nodes_.count(rel.object_id)) continue;
      if (!seen.emplace(rel.subject_id, rel.relation, rel.object_id).second) continue;
      std::string rel_name;
      if (rel.relation_id) {
        auto n = names.find(*rel.relation_id);
        if (n != names.end()) rel_name = n->second;
      }
      adjacency_[rel.subject_id].push_back({rel.object_id, rel.relation, rel_name});
    }
  }
}

std::map<std::string, int> GraphIndex::distances(const std::string& start, const std::set<std::string>& filter,
                                                 int hops) const {
  if (hops < 1 || hops > 3) throw Error(ErrorCode::PreconditionViolation, "hops must lie in [1,3]");
  if (!nodes_.count(start)) throw Error(ErrorCode::UnknownId, start);
  std::map<std::string, int> dist{{start, 0}};
  std::deque<std::string> frontier{start};
  while (!frontier.empty()) {
    std::string node = frontier.front();
    frontier.pop_front();
    int d = dist[node];
    if (d >= hops) continue;
    auto adj = adjacency_.find(node);
    if (adj == adjacency_.end()) continue;
    for (const auto& e : adj->second) {
      bool allowed = filter.empty() || filter.count(e.relation) || (!e.relation_name.empty() && filter.count(e.relation_name));
      if (!allowed || dist.count(e.target)) continue;
      dist[e.target] = d + 1;
      frontier.push_back(e.target);
    }
  }
  dist.erase(start);
  return dist;
}

std::set<std::string> GraphIndex::neighbors(const std::string& start, const std::set<std::string>& filter,
                                            int hops) const {
  std::set<std::string> out;
  for (const auto& [id, _] : distances(start, filter, hops)) out.insert(id);
  return out;
}

std::set<std::string> graph_neighbors(const KnowledgeBase& kb, const std::string& start,
                                      const std::set<std::string>& relation_filter, int hops) {
  return GraphIndex(kb.records()).neighbors(start, relation_filter, hops);
}

// ---------------------------------------------------------------------------
// Fusion

std::string_view to_string(SourceIndex s) {
  switch (s) {
    case SourceIndex::Daac: return "daac";
    case SourceIndex::Facet: return "facet";
    case SourceIndex::Vector: return "vector";
    case SourceIndex::Graph: return "graph";
  }
  return "vector";
}

FusionPolicy parse_fusion_policy(std::string_view text) {
  if (text == "round_robin") return FusionPolicy::RoundRobin;
  if (text == "score_rerank" || text == "rerank") return FusionPolicy::ScoreRerank;
  throw Error(ErrorCode::Config, "unknown fusion policy '" + std::string(text) + "'");
}

std::vector<std::string> KnowledgeBundle::ids() const {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it.record.id);
  return out;
}

bool KnowledgeBundle::contains(const std::string& id) const {
  return std::any_of(items.begin(), items.end(), [&](const BundleItem& it) { return it.record.id == id; });
}

json KnowledgeBundle::to_json() const {
  json arr = json::array();
  for (const auto& it : items) {
    json spans = json::array();
    for (const auto& m : it.match_spans) {
      spans.push_back({{"start", m.raw_start}, {"end", m.raw_end}, {"pattern", m.pattern()}});
    }
    arr.push_back({{"id", it.record.id},
                   {"name", it.record.name},
                   {"type", it.record.type},
                   {"source", std::string(to_string(it.source))},
                   {"score", it.score},
                   {"spans", spans}});
  }
  return arr;
}

namespace {

bool trigger_admits(const UkfRecord& r, const json& context) {
  std::string name = "default";
  if (context.is_object() && context.contains("trigger") && context["trigger"].is_string()) {
    name = context["trigger"].get<std::string>();
  }
  if (!r.triggers.count(name)) name = "default";
  if (!r.triggers.count(name)) return true;
  try {
    return eval_trigger(r, name, context);
  } catch (const Error& e) {
    warn("trigger of " + r.id + " failed, excluded: " + e.what());
    return false;
  }
}

}  // namespace

KnowledgeBundle fuse(const std::vector<ResultList>& lists, FusionPolicy policy, const json& context,
                     std::size_t limit, const KnowledgeBase& kb) {
  std::map<std::string, std::optional<UkfRecord>> admitted;
  auto admit = [&](const std::string& id) -> const std::optional<UkfRecord>& {
    auto it = admitted.find(id);
    if (it != admitted.end()) return it->second;
    auto rec = kb.get(id);
    if (rec && (rec->inactive_mark || !trigger_admits(*rec, context))) rec.reset();
    return admitted.emplace(id, std::move(rec)).first->second;
  };

  // Per-list scores used for ranking: raw for round robin, min-max normalized for rerank.
  std::vector<std::vector<double>> scores(lists.size());
  for (std::size_t l = 0; l < lists.size(); ++l) {
    const auto& hits = lists[l].hits;
    scores[l].resize(hits.size());
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& h : hits) {
      lo = std::min(lo, h.score);
      hi = std::max(hi, h.score);
    }
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (policy == FusionPolicy::RoundRobin) scores[l][i] = hits[i].score;
      else scores[l][i] = hi > lo ? (hits[i].score - lo) / (hi - lo) : 1.0;
    }
  }

  std::map<std::string, BundleItem> best;
  std::vector<std::string> first_seen;
  std::size_t rounds = 0;
  for (const auto& l : lists) rounds = std::max(rounds, l.hits.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t l = 0; l < lists.size(); ++l) {
      if (r >= lists[l].hits.size()) continue;
      const auto& hit = lists[l].hits[r];
      const auto& rec = admit(hit.id);
      if (!rec) continue;
      auto spans_it = lists[l].spans.find(hit.id);
      auto it = best.find(hit.id);
      if (it == best.end()) {
        first_seen.push_back(hit.id);
        BundleItem item{*rec, lists[l].source, scores[l][r], {}};
        if (spans_it != lists[l].spans.end()) item.match_spans = spans_it->second;
        best.emplace(hit.id, std::move(item));
        continue;
      }
      if (scores[l][r] > it->second.score) {
        it->second.score = scores[l][r];
        it->second.source = lists[l].source;
      }
      if (spans_it != lists[l].spans.end() && it->second.match_spans.empty()) {
        it->second.match_spans = spans_it->second;
      }
    }
  }

  KnowledgeBundle out;
  for (const auto& id : first_seen) out.items.push_back(std::move(best.at(id)));
  if (policy == FusionPolicy::ScoreRerank) {
    std::stable_sort(out.items.begin(), out.items.end(), [](const BundleItem& a, const BundleItem& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.record.priority != b.record.priority) return a.record.priority > b.record.priority;
      return a.record.id < b.record.id;
    });
  }
  if (limit > 0 && out.items.size() > limit) out.items.resize(limit);
  return out;
}

ResultList daac_results(const std::vector<DaacMatch>& matches) {
  ResultList out;
  out.source = SourceIndex::Daac;
  std::map<std::string, std::size_t> pos;
  for (const auto& m : matches) {
    for (const auto& id : m.knowledge_ids()) {
      auto [it, inserted] = pos.emplace(id, out.hits.size());
      if (inserted) out.hits.push_back({id, 0.0});
      out.hits[it->second].score += 1.0;
      out.spans[id].push_back(m);
    }
  }
  return out;
}

ResultList facet_results(const std::vector<std::string>& ids) {
  ResultList out;
  out.source = SourceIndex::Facet;
  for (const auto& id : ids) out.hits.push_back({id, 1.0});
  return out;
}

ResultList graph_results(const std::map<std::string, int>& distances) {
  ResultList out;
  out.source = SourceIndex::Graph;
  for (const auto& [id, d] : distances) out.hits.push_back({id, 1.0 / d});
  std::stable_sort(out.hits.begin(), out.hits.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

ResultList bundle_results(const KnowledgeBundle& bundle) {
  ResultList out;
  out.source = bundle.items.empty() ? SourceIndex::Vector : bundle.items.front().source;
  for (const auto& it : bundle.items) {
    out.hits.push_back({it.record.id, it.score});
    if (!it.match_spans.empty()) out.spans[it.record.id] = it.match_spans;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index set

struct IndexSetGuard {
  std::mutex mutex;
  IndexSet* self = nullptr;
};

IndexSet::IndexSet(KnowledgeBase& kb, std::shared_ptr<const Embedder> embedder,
                   std::shared_ptr<const Lemmatizer> lemmatizer, IndexOptions options)
    : kb_(kb),
      embedder_(std::move(embedder)),
      lemmatizer_(lemmatizer ? std::move(lemmatizer) : default_lemmatizer()),
      options_(std::move(options)),
      facets_(std::make_unique<FacetStore>(options_.facet_path)),
      guard_(std::make_shared<IndexSetGuard>()) {
  guard_->self = this;
  rebuild();
  std::weak_ptr<IndexSetGuard> weak = guard_;
  kb_.add_listener([weak](const std::vector<std::string>&) {
    auto g = weak.lock();
    if (!g) return;
    std::lock_guard lock(g->mutex);
    if (!g->self) return;
    try {
      g->self->rebuild();
    } catch (const std::exception& e) {
      warn(std::string("index rebuild failed, snapshot left stale: ") + e.what());
    }
  });
}

IndexSet::~IndexSet() {
  std::lock_guard lock(guard_->mutex);
  guard_->self = nullptr;
}

void IndexSet::rebuild() {
  std::lock_guard rebuilding(rebuild_mutex_);
  IndexSnapshot next;
  next.kb_revision = kb_.revision();
  auto records = kb_.records();
  next.daac = std::make_shared<const DaacIndex>(DaacIndex::build(daac_entries(records, *lemmatizer_), lemmatizer_));
  auto vectors = std::make_shared<VectorIndex>(embedder_);
  vectors->add_records(records);
  next.vectors = std::move(vectors);
  next.graph = std::make_shared<const GraphIndex>(records);
  facets_->sync(kb_);
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(next);
}

IndexSnapshot IndexSet::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

bool IndexSet::fresh() const { return snapshot().kb_revision == kb_.revision(); }

}  // namespace kbsql
