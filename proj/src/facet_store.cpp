#include <shared_mutex>

#include "kbsql/errors.hpp"
#include "kbsql/index.hpp"
#include "kbsql/text.hpp"
#include "kbsql/time.hpp"
#include "sqlite_handle.hpp"

namespace kbsql {

namespace {

constexpr const char* kSchema = R"(
CREATE TABLE IF NOT EXISTS records (
  id TEXT PRIMARY KEY,
  name TEXT NOT NULL,
  type TEXT NOT NULL,
  collection TEXT NOT NULL,
  source TEXT NOT NULL,
  owner TEXT NOT NULL,
  workspace TEXT NOT NULL,
  creator TEXT NOT NULL,
  priority INTEGER NOT NULL,
  inactive INTEGER NOT NULL,
  timestamp TEXT NOT NULL,
  content_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tags (
  record_id TEXT NOT NULL REFERENCES records(id) ON DELETE CASCADE,
  slot TEXT NOT NULL,
  value TEXT NOT NULL,
  PRIMARY KEY (record_id, slot, value)
);
CREATE TABLE IF NOT EXISTS synonyms (
  record_id TEXT NOT NULL REFERENCES records(id) ON DELETE CASCADE,
  synonym TEXT NOT NULL,
  PRIMARY KEY (record_id, synonym)
);
CREATE TABLE IF NOT EXISTS related (
  record_id TEXT NOT NULL REFERENCES records(id) ON DELETE CASCADE,
  subject_id TEXT NOT NULL,
  relation TEXT NOT NULL,
  object_id TEXT NOT NULL,
  relation_id TEXT
);
CREATE TABLE IF NOT EXISTS auths (
  record_id TEXT NOT NULL REFERENCES records(id) ON DELETE CASCADE,
  user TEXT NOT NULL,
  authority TEXT NOT NULL,
  PRIMARY KEY (record_id, user, authority)
);
CREATE INDEX IF NOT EXISTS records_type ON records(type);
CREATE INDEX IF NOT EXISTS records_collection ON records(collection);
CREATE INDEX IF NOT EXISTS records_provenance ON records(source, creator, owner, workspace);
CREATE INDEX IF NOT EXISTS tags_slot_value ON tags(slot, value);
CREATE INDEX IF NOT EXISTS synonyms_value ON synonyms(synonym);
CREATE INDEX IF NOT EXISTS related_subject ON related(subject_id, relation);
)";

void step_done(sqlite3* db, sqlite3_stmt* stmt) {
  if (sqlite3_step(stmt) != SQLITE_DONE) throw Error(ErrorCode::Io, std::string("sqlite: ") + sqlite3_errmsg(db));
}

}  // namespace

std::string like_pattern(const std::string& pattern) {
  std::string out;
  for (char c : pattern) {
    if (c == '_' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

struct FacetStore::Impl {
  detail::SqliteHandle db;
  mutable std::shared_mutex mutex;

  void remove_locked(const std::string& id) {
    for (const char* table : {"tags", "synonyms", "related", "auths"}) {
      auto st = detail::prepare(db.get(), std::string("DELETE FROM ") + table + " WHERE record_id = ?");
      detail::bind_text(st.get(), 1, id);
      step_done(db.get(), st.get());
    }
    auto st = detail::prepare(db.get(), "DELETE FROM records WHERE id = ?");
    detail::bind_text(st.get(), 1, id);
    step_done(db.get(), st.get());
  }

  void insert_locked(const UkfRecord& r) {
    remove_locked(r.id);
    auto st = detail::prepare(db.get(), "INSERT INTO records VALUES (?,?,?,?,?,?,?,?,?,?,?,?)");
    detail::bind_text(st.get(), 1, r.id);
    detail::bind_text(st.get(), 2, r.name);
    detail::bind_text(st.get(), 3, r.type);
    detail::bind_text(st.get(), 4, r.collection);
    detail::bind_text(st.get(), 5, to_string(r.source));
    detail::bind_text(st.get(), 6, r.owner);
    detail::bind_text(st.get(), 7, r.workspace);
    detail::bind_text(st.get(), 8, r.creator);
    sqlite3_bind_int(st.get(), 9, r.priority);
    sqlite3_bind_int(st.get(), 10, r.inactive_mark ? 1 : 0);
    detail::bind_text(st.get(), 11, format_rfc3339(r.timestamp));
    detail::bind_text(st.get(), 12, r.content_hash);
    step_done(db.get(), st.get());

    auto tag = detail::prepare(db.get(), "INSERT OR IGNORE INTO tags VALUES (?,?,?)");
    for (const auto& [slot, values] : parse_tags(r.tags)) {
      for (const auto& v : values) {
        sqlite3_reset(tag.get());
        detail::bind_text(tag.get(), 1, r.id);
        detail::bind_text(tag.get(), 2, slot);
        detail::bind_text(tag.get(), 3, v);
        step_done(db.get(), tag.get());
      }
    }
    auto syn = detail::prepare(db.get(), "INSERT OR IGNORE INTO synonyms VALUES (?,?)");
    for (const auto& s : r.synonyms) {
      sqlite3_reset(syn.get());
      detail::bind_text(syn.get(), 1, r.id);
      detail::bind_text(syn.get(), 2, s);
      step_done(db.get(), syn.get());
    }
    auto rel = detail::prepare(db.get(), "INSERT INTO related VALUES (?,?,?,?,?)");
    for (const auto& t : r.related) {
      sqlite3_reset(rel.get());
      detail::bind_text(rel.get(), 1, r.id);
      detail::bind_text(rel.get(), 2, t.subject_id);
      detail::bind_text(rel.get(), 3, t.relation);
      detail::bind_text(rel.get(), 4, t.object_id);
      if (t.relation_id) detail::bind_text(rel.get(), 5, *t.relation_id);
      else sqlite3_bind_null(rel.get(), 5);
      step_done(db.get(), rel.get());
    }
    auto auth = detail::prepare(db.get(), "INSERT OR IGNORE INTO auths VALUES (?,?,?)");
    for (const auto& a : r.auths) {
      sqlite3_reset(auth.get());
      detail::bind_text(auth.get(), 1, r.id);
      detail::bind_text(auth.get(), 2, a.user);
      detail::bind_text(auth.get(), 3, a.authority);
      step_done(db.get(), auth.get());
    }
  }
};

FacetStore::FacetStore(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->db = detail::open_sqlite(path);
  detail::exec(impl_->db.get(), "PRAGMA foreign_keys=ON;");
  detail::exec(impl_->db.get(), kSchema);
}

FacetStore::~FacetStore() = default;

void FacetStore::upsert(const UkfRecord& record) {
  std::unique_lock lock(impl_->mutex);
  detail::exec(impl_->db.get(), "BEGIN");
  try {
    impl_->insert_locked(record);
  } catch (...) {
    detail::exec(impl_->db.get(), "ROLLBACK");
    throw;
  }
  detail::exec(impl_->db.get(), "COMMIT");
}

void FacetStore::remove(const std::string& id) {
  std::unique_lock lock(impl_->mutex);
  impl_->remove_locked(id);
}

void FacetStore::sync(const KnowledgeBase& kb) {
  auto records = kb.records(true);
  std::unique_lock lock(impl_->mutex);
  detail::exec(impl_->db.get(), "BEGIN");
  try {
    detail::exec(impl_->db.get(), "DELETE FROM tags; DELETE FROM synonyms; DELETE FROM related; DELETE FROM auths;"
                                  "DELETE FROM records;");
    for (const auto& r : records) impl_->insert_locked(r);
  } catch (...) {
    detail::exec(impl_->db.get(), "ROLLBACK");
    throw;
  }
  detail::exec(impl_->db.get(), "COMMIT");
}

std::set<std::string> FacetStore::slots() const {
  std::shared_lock lock(impl_->mutex);
  std::set<std::string> out;
  auto st = detail::prepare(impl_->db.get(), "SELECT DISTINCT slot FROM tags");
  while (sqlite3_step(st.get()) == SQLITE_ROW) out.insert(detail::column_text(st.get(), 0));
  return out;
}

std::size_t FacetStore::size() const {
  std::shared_lock lock(impl_->mutex);
  auto st = detail::prepare(impl_->db.get(), "SELECT COUNT(*) FROM records");
  sqlite3_step(st.get());
  return static_cast<std::size_t>(sqlite3_column_int64(st.get(), 0));
}

std::vector<std::string> FacetStore::query(const FacetFilters& filters, const FacetPredicates& predicates,
                                           bool strict) const {
  if (strict) {
    auto known = slots();
    for (const auto& [slot, _] : filters) {
      if (!known.count(text::to_upper_ascii(slot))) throw Error(ErrorCode::UnknownSlot, slot);
    }
  }
  std::string sql = "SELECT id FROM records r WHERE 1=1";
  std::vector<std::string> binds;
  if (!predicates.include_inactive) sql += " AND r.inactive = 0";
  for (const auto& [slot, patterns] : filters) {
    if (patterns.empty()) continue;
    sql += " AND EXISTS (SELECT 1 FROM tags t WHERE t.record_id = r.id AND t.slot = ? AND (";
    binds.push_back(text::to_upper_ascii(slot));
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      sql += (i ? " OR " : "") + std::string("t.value LIKE ? ESCAPE '\\'");
      binds.push_back(like_pattern(patterns[i]));
    }
    sql += "))";
  }
  auto eq = [&](const char* column, const std::optional<std::string>& value) {
    if (!value) return;
    sql += std::string(" AND r.") + column + " = ?";
    binds.push_back(*value);
  };
  eq("type", predicates.type);
  eq("collection", predicates.collection);
  eq("source", predicates.source);
  eq("creator", predicates.creator);
  eq("owner", predicates.owner);
  eq("workspace", predicates.workspace);
  if (predicates.synonym) {
    sql += " AND EXISTS (SELECT 1 FROM synonyms s WHERE s.record_id = r.id AND s.synonym LIKE ? ESCAPE '\\')";
    binds.push_back(like_pattern(*predicates.synonym));
  }
  if (predicates.min_priority) {
    sql += " AND r.priority >= " + std::to_string(*predicates.min_priority);
  }
  sql += " ORDER BY id";

  std::shared_lock lock(impl_->mutex);
  auto st = detail::prepare(impl_->db.get(), sql);
  for (std::size_t i = 0; i < binds.size(); ++i) detail::bind_text(st.get(), static_cast<int>(i + 1), binds[i]);
  std::vector<std::string> out;
  int rc;
  while ((rc = sqlite3_step(st.get())) == SQLITE_ROW) out.push_back(detail::column_text(st.get(), 0));
  if (rc != SQLITE_DONE) throw Error(ErrorCode::Io, std::string("sqlite: ") + sqlite3_errmsg(impl_->db.get()));
  return out;
}

}  // namespace kbsql
