#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kbsql/json.hpp"
#include "kbsql/time.hpp"

namespace kbsql {

enum class Source { System, User, Auto, Tool, Derived, Unknown };

std::string_view to_string(Source source);
Source parse_source(std::string_view text);

/// Named reference into the FunctionRegistry. Records persist the name, never the callable.
struct FunctionRef {
  std::string fn;
  json args = json::object();

  bool operator==(const FunctionRef& other) const { return fn == other.fn && args == other.args; }
};

struct Relation {
  std::string subject_id;
  std::string relation;
  std::string object_id;
  std::optional<std::string> relation_id;
  std::optional<json> relation_resources;

  bool operator<(const Relation& other) const;
  bool operator==(const Relation& other) const;
};

struct Auth {
  std::string user;
  std::string authority;

  auto operator<=>(const Auth&) const = default;
};

using SlotMap = std::map<std::string, std::set<std::string>>;

/// A UKF 1.0 knowledge record. Identity and content digests are filled by new_record()/rehash().
struct UkfRecord {
  // metadata
  std::string name;
  std::string notes;
  std::string short_description;
  std::string description;
  std::string type = "general";
  std::string version = "v0.1.0";
  std::string version_notes;
  std::string variant = "default";
  std::string variant_notes;
  // content
  std::string content;
  json content_resources = json::object();
  std::map<std::string, FunctionRef> content_composers;
  // provenance
  Source source = Source::Unknown;
  json parents = json::object();
  std::string owner = "unknown";
  std::string workspace = "unknown";
  std::string creator = "unknown";
  // retrieval
  std::string collection = "general";
  std::set<std::string> tags;
  std::set<std::string> synonyms;
  std::map<std::string, FunctionRef> triggers;
  int priority = 0;
  // relationships
  std::set<Relation> related;
  std::set<Auth> auths;
  // life-cycle
  bool timefluid = false;
  Timestamp timestamp{};
  Timestamp last_verified{};
  long long expiration = -1;
  bool inactive_mark = false;
  // statistics
  json metadata = json::object();
  json profile = json::object();
  // internal
  std::string id;
  std::string content_hash;
  SlotMap slots;

  bool operator==(const UkfRecord& other) const;
};

// ---------------------------------------------------------------------------
// Function registry

using ComposerFn = std::function<std::string(const UkfRecord&, const json& context, const json& args)>;
using TriggerFn = std::function<bool(const UkfRecord&, const json& context, const json& args)>;

/// Process-wide table of composer and trigger implementations. Reads are lock-shared;
/// registration is serialized.
class FunctionRegistry {
 public:
  static FunctionRegistry& global();

  void register_composer(const std::string& name, ComposerFn fn);
  void register_trigger(const std::string& name, TriggerFn fn);
  std::optional<ComposerFn> composer(const std::string& name) const;
  std::optional<TriggerFn> trigger(const std::string& name) const;

 private:
  FunctionRegistry();
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

inline constexpr std::string_view kDefaultComposerFn = "content";
inline constexpr std::string_view kDefaultTriggerFn = "always";

// ---------------------------------------------------------------------------
// Templates

struct UkfTemplate {
  std::string template_name;
  std::string fixed_type;
  std::map<std::string, FunctionRef> default_composers;
  std::map<std::string, FunctionRef> default_triggers;
  std::string constructor_hint;

  /// Builds a record of `fixed_type`; template composers/triggers fill keys the spec leaves out.
  UkfRecord instantiate(const json& spec) const;
};

/// Knowledge, Document, Experience, Table, Column, Enum, Taxonomy, Dependency, Predicate,
/// Synonym, Indicator, Term, Metric, Special. Lookup is case-insensitive.
const UkfTemplate& builtin_template(std::string_view name);
const UkfTemplate* find_builtin_template(std::string_view name);
std::vector<std::string> builtin_template_names();

// ---------------------------------------------------------------------------
// Operations

/// Creates a record from a partial field map. Throws MissingName, MalformedTag, InvalidSource.
UkfRecord new_record(const json& spec);

/// Recomputes `_id` (if `force_id` or unset), `_content_hash` and `_slots`.
void rehash(UkfRecord& record, bool force_id = false);

std::string identity_digest(const UkfRecord& record);
std::string content_digest(const UkfRecord& record);

std::string compose_content(const UkfRecord& record, const std::string& composer,
                            const json& context = json::object());
bool eval_trigger(const UkfRecord& record, const std::string& trigger,
                  const json& context = json::object());

std::pair<std::string, std::string> parse_tag(std::string_view tag);
SlotMap parse_tags(const std::set<std::string>& tags);
std::string format_tag(std::string_view key, std::string_view value);
std::set<std::string> format_tags(const SlotMap& slots);
/// Canonical form of a tag: upper-cased key, ":" separator.
std::string canonical_tag(std::string_view tag);

bool is_expired(const UkfRecord& record, Timestamp now);

/// Applies a patch of mutable fields; touching an immutable field with a new value throws
/// ImmutableField.
UkfRecord apply_update(const UkfRecord& record, const json& patch);

/// Field names frozen at creation.
const std::set<std::string>& immutable_fields();

json to_json(const UkfRecord& record);
/// Unknown composer/trigger names fall back to the default entry with a warning.
UkfRecord record_from_json(const json& doc);

}  // namespace kbsql
