#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "kbsql/json.hpp"
#include "kbsql/ukf.hpp"

namespace kbsql {

/// Provenance class governing merge precedence. Everything except Mined is trusted.
enum class TrustMark { Schema, Labeled, HumanVerified, Mined };

std::string_view to_string(TrustMark trust);
TrustMark parse_trust(std::string_view text);
inline bool is_trusted(TrustMark t) { return t != TrustMark::Mined; }

struct StoredRecord {
  UkfRecord record;
  TrustMark trust = TrustMark::Mined;
};

/// Persistence behind a KnowledgeBase. The manifest carries trust marks and version chains.
class StorageBackend {
 public:
  virtual ~StorageBackend() = default;
  virtual void put(const UkfRecord& record) = 0;
  virtual std::vector<UkfRecord> load_all() = 0;
  virtual void save_manifest(const json& manifest) = 0;
  virtual json load_manifest() = 0;
  virtual std::string kind() const = 0;
};

std::unique_ptr<StorageBackend> make_memory_backend();
/// One UKF document per file named `<_id>.json`, plus `manifest.json`.
std::unique_ptr<StorageBackend> make_directory_backend(const std::filesystem::path& dir);
/// Single-file SQLite database with `records` and `manifest` tables.
std::unique_ptr<StorageBackend> make_sqlite_backend(const std::filesystem::path& file);
/// kind is "memory", "dir" or "sqlite".
std::unique_ptr<StorageBackend> open_backend(std::string_view kind, const std::filesystem::path& path);

struct MergeReport {
  std::vector<std::string> merged_synonyms;
  std::vector<std::string> discarded_conflicts;
  std::vector<std::string> dropped_same_id;
  std::vector<std::string> inserted_low_priority;

  std::size_t total() const {
    return merged_synonyms.size() + discarded_conflicts.size() + dropped_same_id.size() +
           inserted_low_priority.size();
  }
  json to_json() const;
};

struct VersionKey {
  std::string type;
  std::string name;
  std::string variant;
  auto operator<=>(const VersionKey&) const = default;
};

/// "vX.Y.Z" -> "vX.(Y+1).0". Throws InvalidVersion on anything else.
std::string bump_minor_version(std::string_view version);

/// Versioned knowledge base. Readers share a lock; every mutation is exclusive, so readers
/// observe a merge either entirely or not at all.
class KnowledgeBase {
 public:
  using Listener = std::function<void(const std::vector<std::string>& changed_ids)>;

  explicit KnowledgeBase(std::unique_ptr<StorageBackend> backend = make_memory_backend());

  KnowledgeBase(const KnowledgeBase&) = delete;
  KnowledgeBase& operator=(const KnowledgeBase&) = delete;

  /// Throws DuplicateLiveId when a live record already holds the id.
  std::string insert(UkfRecord record, TrustMark trust);
  MergeReport merge_incoming(std::vector<UkfRecord> batch);
  /// New record with a bumped version and `parents.previous_version`; base is untouched.
  std::string new_version(const std::string& base_id, const json& changes, Timestamp now = now_utc());
  /// Marks expired records inactive; never deletes.
  std::size_t sweep_expired(Timestamp now);
  /// Mutable-field update (synonyms, descriptions, life-cycle, ...).
  UkfRecord update(const std::string& id, const json& patch);
  void set_trust(const std::string& id, TrustMark trust);

  std::optional<UkfRecord> get(const std::string& id) const;
  std::optional<TrustMark> trust(const std::string& id) const;
  bool contains(const std::string& id) const;
  /// Sorted by id.
  std::vector<UkfRecord> records(bool include_inactive = false) const;
  std::vector<StoredRecord> stored_records(bool include_inactive = false) const;
  std::vector<std::string> version_chain(const VersionKey& key) const;
  std::map<VersionKey, std::vector<std::string>> version_chains() const;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> provenance_index() const;
  std::size_t size(bool include_inactive = false) const;
  /// Monotonic counter bumped by every mutation.
  std::uint64_t revision() const;

  void add_listener(Listener listener);
  const StorageBackend& backend() const { return *backend_; }

 private:
  void persist_locked(const std::vector<std::string>& ids);
  json manifest_locked() const;
  void chain_append_locked(const VersionKey& key, const std::string& id);
  void notify(const std::vector<std::string>& ids);

  std::unique_ptr<StorageBackend> backend_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, UkfRecord> records_;
  std::map<std::string, TrustMark> trust_;
  std::map<VersionKey, std::vector<std::string>> chains_;
  std::uint64_t revision_ = 0;
  std::mutex listener_mutex_;
  std::vector<Listener> listeners_;
};

}  // namespace kbsql
