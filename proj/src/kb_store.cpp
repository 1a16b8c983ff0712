#include "kbsql/kb_store.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>

#include "kbsql/errors.hpp"
#include "sqlite_handle.hpp"

namespace kbsql {

std::string_view to_string(TrustMark trust) {
  switch (trust) {
    case TrustMark::Schema: return "schema";
    case TrustMark::Labeled: return "labeled";
    case TrustMark::HumanVerified: return "human_verified";
    case TrustMark::Mined: return "mined";
  }
  return "mined";
}

TrustMark parse_trust(std::string_view text) {
  if (text == "schema") return TrustMark::Schema;
  if (text == "labeled") return TrustMark::Labeled;
  if (text == "human_verified") return TrustMark::HumanVerified;
  if (text == "mined") return TrustMark::Mined;
  throw Error(ErrorCode::Parse, "unknown trust mark '" + std::string(text) + "'");
}

json MergeReport::to_json() const {
  return json{{"merged_synonyms", merged_synonyms},
              {"discarded_conflicts", discarded_conflicts},
              {"dropped_same_id", dropped_same_id},
              {"inserted_low_priority", inserted_low_priority}};
}

// ---------------------------------------------------------------------------
// Backends

namespace {

class MemoryBackend final : public StorageBackend {
 public:
  void put(const UkfRecord& record) override { docs_[record.id] = record; }
  std::vector<UkfRecord> load_all() override {
    std::vector<UkfRecord> out;
    for (const auto& [_, r] : docs_) out.push_back(r);
    return out;
  }
  void save_manifest(const json& manifest) override { manifest_ = manifest; }
  json load_manifest() override { return manifest_; }
  std::string kind() const override { return "memory"; }

 private:
  std::map<std::string, UkfRecord> docs_;
  json manifest_ = json::object();
};

void write_file_atomic(const std::filesystem::path& path, const std::string& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << body;
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class DirectoryBackend final : public StorageBackend {
 public:
  explicit DirectoryBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }
  void put(const UkfRecord& record) override {
    write_file_atomic(dir_ / (record.id + ".json"), to_json(record).dump(2) + "\n");
  }
  std::vector<UkfRecord> load_all() override {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (entry.path().extension() == ".json" && entry.path().filename() != "manifest.json") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::vector<UkfRecord> out;
    for (const auto& f : files) out.push_back(record_from_json(json::parse(read_file(f))));
    return out;
  }
  void save_manifest(const json& manifest) override {
    write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }
  json load_manifest() override {
    auto path = dir_ / "manifest.json";
    if (!std::filesystem::exists(path)) return json::object();
    return json::parse(read_file(path));
  }
  std::string kind() const override { return "dir"; }

 private:
  std::filesystem::path dir_;
};

class SqliteBackend final : public StorageBackend {
 public:
  explicit SqliteBackend(const std::filesystem::path& file) : db_(detail::open_sqlite(file.string())) {
    detail::exec(db_.get(),
                 "CREATE TABLE IF NOT EXISTS records (id TEXT PRIMARY KEY, doc TEXT NOT NULL);"
                 "CREATE TABLE IF NOT EXISTS manifest (key TEXT PRIMARY KEY, doc TEXT NOT NULL);");
  }
  void put(const UkfRecord& record) override {
    auto stmt = detail::prepare(db_.get(), "INSERT OR REPLACE INTO records(id, doc) VALUES (?, ?)");
    detail::bind_text(stmt.get(), 1, record.id);
    detail::bind_text(stmt.get(), 2, to_json(record).dump());
    detail::step_done(db_.get(), stmt.get());
  }
  std::vector<UkfRecord> load_all() override {
    auto stmt = detail::prepare(db_.get(), "SELECT doc FROM records ORDER BY id");
    std::vector<UkfRecord> out;
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
      out.push_back(record_from_json(json::parse(detail::column_text(stmt.get(), 0))));
    }
    return out;
  }
  void save_manifest(const json& manifest) override {
    auto stmt = detail::prepare(db_.get(), "INSERT OR REPLACE INTO manifest(key, doc) VALUES ('kb', ?)");
    detail::bind_text(stmt.get(), 1, manifest.dump());
    detail::step_done(db_.get(), stmt.get());
  }
  json load_manifest() override {
    auto stmt = detail::prepare(db_.get(), "SELECT doc FROM manifest WHERE key = 'kb'");
    if (sqlite3_step(stmt.get()) == SQLITE_ROW) return json::parse(detail::column_text(stmt.get(), 0));
    return json::object();
  }
  std::string kind() const override { return "sqlite"; }

 private:
  detail::SqliteHandle db_;
};

}  // namespace

std::unique_ptr<StorageBackend> make_memory_backend() { return std::make_unique<MemoryBackend>(); }

std::unique_ptr<StorageBackend> make_directory_backend(const std::filesystem::path& dir) {
  return std::make_unique<DirectoryBackend>(dir);
}

std::unique_ptr<StorageBackend> make_sqlite_backend(const std::filesystem::path& file) {
  return std::make_unique<SqliteBackend>(file);
}

std::unique_ptr<StorageBackend> open_backend(std::string_view kind, const std::filesystem::path& path) {
  if (kind == "memory") return make_memory_backend();
  if (kind == "dir" || kind == "directory") return make_directory_backend(path);
  if (kind == "sqlite") return make_sqlite_backend(path);
  throw Error(ErrorCode::Config, "unknown kb backend '" + std::string(kind) + "'");
}

// ---------------------------------------------------------------------------
// Versions

namespace {

const std::regex& version_regex() {
  static const std::regex re(R"(^v?(\d+)\.(\d+)\.(\d+)(.*)$)");
  return re;
}

std::tuple<long, long, long, std::string> version_tuple(const std::string& v) {
  std::smatch m;
  if (std::regex_match(v, m, version_regex())) {
    return {std::stol(m[1]), std::stol(m[2]), std::stol(m[3]), m[4]};
  }
  return {-1, -1, -1, v};
}

}  // namespace

std::string bump_minor_version(std::string_view version) {
  std::string v(version);
  std::smatch m;
  if (!std::regex_match(v, m, version_regex())) throw Error(ErrorCode::InvalidVersion, v);
  return "v" + m[1].str() + "." + std::to_string(std::stol(m[2]) + 1) + ".0";
}

// ---------------------------------------------------------------------------
// KnowledgeBase

KnowledgeBase::KnowledgeBase(std::unique_ptr<StorageBackend> backend) : backend_(std::move(backend)) {
  for (auto& r : backend_->load_all()) {
    std::string id = r.id;
    records_.emplace(id, std::move(r));
  }
  json manifest = backend_->load_manifest();
  if (manifest.contains("trust")) {
    for (const auto& [id, mark] : manifest["trust"].items()) trust_[id] = parse_trust(mark.get<std::string>());
  }
  if (manifest.contains("version_chains")) {
    for (const auto& chain : manifest["version_chains"]) {
      VersionKey key{chain.at("type"), chain.at("name"), chain.at("variant")};
      chains_[key] = chain.at("ids").get<std::vector<std::string>>();
    }
  }
  for (const auto& [id, r] : records_) {
    if (!trust_.count(id)) trust_[id] = TrustMark::Mined;
    VersionKey key{r.type, r.name, r.variant};
    auto& chain = chains_[key];
    if (std::find(chain.begin(), chain.end(), id) == chain.end()) chain_append_locked(key, id);
  }
}

json KnowledgeBase::manifest_locked() const {
  json trust = json::object();
  for (const auto& [id, mark] : trust_) trust[id] = std::string(to_string(mark));
  json chains = json::array();
  for (const auto& [key, ids] : chains_) {
    chains.push_back({{"type", key.type}, {"name", key.name}, {"variant", key.variant}, {"ids", ids}});
  }
  return json{{"format", "ukf-kb/1"}, {"trust", trust}, {"version_chains", chains}};
}

void KnowledgeBase::persist_locked(const std::vector<std::string>& ids) {
  for (const auto& id : ids) backend_->put(records_.at(id));
  backend_->save_manifest(manifest_locked());
  ++revision_;
}

void KnowledgeBase::chain_append_locked(const VersionKey& key, const std::string& id) {
  auto& chain = chains_[key];
  chain.push_back(id);
  std::stable_sort(chain.begin(), chain.end(), [&](const std::string& a, const std::string& b) {
    auto ra = records_.find(a), rb = records_.find(b);
    if (ra == records_.end() || rb == records_.end()) return false;
    auto ta = version_tuple(ra->second.version), tb = version_tuple(rb->second.version);
    if (ta != tb) return ta < tb;
    return ra->second.timestamp < rb->second.timestamp;
  });
}

void KnowledgeBase::notify(const std::vector<std::string>& ids) {
  if (ids.empty()) return;
  std::vector<Listener> copy;
  {
    std::lock_guard lock(listener_mutex_);
    copy = listeners_;
  }
  for (const auto& l : copy) l(ids);
}

void KnowledgeBase::add_listener(Listener listener) {
  std::lock_guard lock(listener_mutex_);
  listeners_.push_back(std::move(listener));
}

std::string KnowledgeBase::insert(UkfRecord record, TrustMark trust) {
  if (record.name.empty()) throw Error(ErrorCode::MissingName, "record has no name");
  rehash(record);
  std::string id = record.id;
  {
    std::unique_lock lock(mutex_);
    auto it = records_.find(id);
    if (it != records_.end() && !it->second.inactive_mark) throw Error(ErrorCode::DuplicateLiveId, id);
    VersionKey key{record.type, record.name, record.variant};
    records_[id] = std::move(record);
    trust_[id] = trust;
    auto& chain = chains_[key];
    if (std::find(chain.begin(), chain.end(), id) == chain.end()) chain_append_locked(key, id);
    persist_locked({id});
  }
  notify({id});
  return id;
}

MergeReport KnowledgeBase::merge_incoming(std::vector<UkfRecord> batch) {
  MergeReport report;
  std::vector<std::string> changed;
  {
    std::unique_lock lock(mutex_);
    for (auto& r : batch) rehash(r);

    enum class Outcome { Pending, Merged, Discarded, Dropped, Inserted };
    std::vector<Outcome> outcome(batch.size(), Outcome::Pending);

    // Rule 1: same id and content as an existing record -> union synonyms.
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto it = records_.find(batch[i].id);
      if (it != records_.end() && it->second.content_hash == batch[i].content_hash) {
        it->second.synonyms.insert(batch[i].synonyms.begin(), batch[i].synonyms.end());
        outcome[i] = Outcome::Merged;
        changed.push_back(it->first);
      }
    }
    // Rule 2: conflicts with schema / labeled / human-verified records are discarded.
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (outcome[i] != Outcome::Pending) continue;
      auto it = records_.find(batch[i].id);
      if (it != records_.end() && is_trusted(trust_.at(it->first))) outcome[i] = Outcome::Discarded;
    }
    // Rule 3: same id with conflicting contents among the rest (incoming or mined) -> dropped.
    std::map<std::string, std::set<std::string>> contents_by_id;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (outcome[i] == Outcome::Pending) contents_by_id[batch[i].id].insert(batch[i].content_hash);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (outcome[i] != Outcome::Pending) continue;
      bool conflict = contents_by_id[batch[i].id].size() > 1;
      auto it = records_.find(batch[i].id);
      if (it != records_.end() && it->second.content_hash != batch[i].content_hash) conflict = true;
      if (conflict) outcome[i] = Outcome::Dropped;
    }
    // Rule 4: insert the rest below every trusted priority.
    int base = 0;
    bool any_trusted = false;
    for (const auto& [id, r] : records_) {
      if (is_trusted(trust_.at(id))) {
        base = any_trusted ? std::min(base, r.priority) : r.priority;
        any_trusted = true;
      }
    }
    int low_priority = base - 1;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (outcome[i] != Outcome::Pending) continue;
      auto& r = batch[i];
      auto it = records_.find(r.id);
      if (it != records_.end()) {
        // A duplicate of an entry inserted earlier in this batch: rule 1 applies to it.
        it->second.synonyms.insert(r.synonyms.begin(), r.synonyms.end());
        outcome[i] = Outcome::Merged;
        changed.push_back(r.id);
        continue;
      }
      r.priority = std::min(r.priority, low_priority);
      VersionKey key{r.type, r.name, r.variant};
      std::string id = r.id;
      records_[id] = r;
      trust_[id] = TrustMark::Mined;
      chain_append_locked(key, id);
      outcome[i] = Outcome::Inserted;
      changed.push_back(id);
    }

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& id = batch[i].id;
      switch (outcome[i]) {
        case Outcome::Merged: report.merged_synonyms.push_back(id); break;
        case Outcome::Discarded: report.discarded_conflicts.push_back(id); break;
        case Outcome::Dropped: report.dropped_same_id.push_back(id); break;
        case Outcome::Inserted: report.inserted_low_priority.push_back(id); break;
        case Outcome::Pending: break;
      }
    }
    std::sort(changed.begin(), changed.end());
    changed.erase(std::unique(changed.begin(), changed.end()), changed.end());
    if (!changed.empty()) persist_locked(changed);
  }
  notify(changed);
  return report;
}

std::string KnowledgeBase::new_version(const std::string& base_id, const json& changes, Timestamp now) {
  std::string id;
  {
    std::unique_lock lock(mutex_);
    auto it = records_.find(base_id);
    if (it == records_.end()) throw Error(ErrorCode::UnknownId, base_id);
    const UkfRecord& base = it->second;
    json doc = to_json(base);
    doc.erase("_id");
    doc.erase("_content_hash");
    doc.erase("_slots");
    if (!changes.is_object()) throw Error(ErrorCode::Parse, "changes must be an object");
    for (const auto& [key, value] : changes.items()) {
      if (!key.empty() && key[0] == '_') throw Error(ErrorCode::ImmutableField, key);
      doc[key] = value;
    }
    if (!changes.contains("version")) doc["version"] = bump_minor_version(base.version);
    json parents = doc.value("parents", json::object());
    parents["previous_version"] = base_id;
    doc["parents"] = parents;
    doc["timestamp"] = format_rfc3339(now);
    doc["last_verified"] = format_rfc3339(now);
    doc["inactive_mark"] = false;
    UkfRecord next = new_record(doc);
    id = next.id;
    auto existing = records_.find(id);
    if (existing != records_.end() && !existing->second.inactive_mark) throw Error(ErrorCode::DuplicateLiveId, id);
    VersionKey key{base.type, base.name, base.variant};
    TrustMark trust = trust_.at(base_id);
    records_[id] = std::move(next);
    trust_[id] = trust;
    chain_append_locked(key, id);
    persist_locked({id});
  }
  notify({id});
  return id;
}

std::size_t KnowledgeBase::sweep_expired(Timestamp now) {
  std::vector<std::string> changed;
  {
    std::unique_lock lock(mutex_);
    for (auto& [id, r] : records_) {
      if (!r.inactive_mark && is_expired(r, now)) {
        r.inactive_mark = true;
        changed.push_back(id);
      }
    }
    if (!changed.empty()) persist_locked(changed);
  }
  notify(changed);
  return changed.size();
}

UkfRecord KnowledgeBase::update(const std::string& id, const json& patch) {
  UkfRecord updated;
  {
    std::unique_lock lock(mutex_);
    auto it = records_.find(id);
    if (it == records_.end()) throw Error(ErrorCode::UnknownId, id);
    updated = apply_update(it->second, patch);
    it->second = updated;
    persist_locked({id});
  }
  notify({id});
  return updated;
}

void KnowledgeBase::set_trust(const std::string& id, TrustMark trust) {
  std::unique_lock lock(mutex_);
  if (!records_.count(id)) throw Error(ErrorCode::UnknownId, id);
  trust_[id] = trust;
  persist_locked({});
}

std::optional<UkfRecord> KnowledgeBase::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::optional<TrustMark> KnowledgeBase::trust(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = trust_.find(id);
  if (it == trust_.end()) return std::nullopt;
  return it->second;
}

bool KnowledgeBase::contains(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return records_.count(id) > 0;
}

std::vector<UkfRecord> KnowledgeBase::records(bool include_inactive) const {
  std::shared_lock lock(mutex_);
  std::vector<UkfRecord> out;
  for (const auto& [_, r] : records_) {
    if (include_inactive || !r.inactive_mark) out.push_back(r);
  }
  return out;
}

std::vector<StoredRecord> KnowledgeBase::stored_records(bool include_inactive) const {
  std::shared_lock lock(mutex_);
  std::vector<StoredRecord> out;
  for (const auto& [id, r] : records_) {
    if (include_inactive || !r.inactive_mark) out.push_back({r, trust_.at(id)});
  }
  return out;
}

std::vector<std::string> KnowledgeBase::version_chain(const VersionKey& key) const {
  std::shared_lock lock(mutex_);
  auto it = chains_.find(key);
  return it == chains_.end() ? std::vector<std::string>{} : it->second;
}

std::map<VersionKey, std::vector<std::string>> KnowledgeBase::version_chains() const {
  std::shared_lock lock(mutex_);
  return chains_;
}

std::map<std::pair<std::string, std::string>, std::set<std::string>> KnowledgeBase::provenance_index() const {
  std::shared_lock lock(mutex_);
  std::map<std::pair<std::string, std::string>, std::set<std::string>> out;
  for (const auto& [id, r] : records_) out[{r.owner, r.workspace}].insert(id);
  return out;
}

std::size_t KnowledgeBase::size(bool include_inactive) const {
  std::shared_lock lock(mutex_);
  if (include_inactive) return records_.size();
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const auto& kv) { return !kv.second.inactive_mark; }));
}

std::uint64_t KnowledgeBase::revision() const {
  std::shared_lock lock(mutex_);
  return revision_;
}

}  // namespace kbsql
