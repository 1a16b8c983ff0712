#include "kbsql/ukf.hpp"

#include <algorithm>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "kbsql/errors.hpp"
#include "kbsql/hash.hpp"
#include "kbsql/log.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

// ---------------------------------------------------------------------------
// Small value types

std::string_view to_string(Source source) {
  switch (source) {
    case Source::System: return "system";
    case Source::User: return "user";
    case Source::Auto: return "auto";
    case Source::Tool: return "tool";
    case Source::Derived: return "derived";
    case Source::Unknown: return "unknown";
  }
  return "unknown";
}

Source parse_source(std::string_view text) {
  static const std::map<std::string, Source, std::less<>> kSources = {
      {"system", Source::System}, {"user", Source::User},       {"auto", Source::Auto},
      {"tool", Source::Tool},     {"derived", Source::Derived}, {"unknown", Source::Unknown}};
  auto it = kSources.find(text);
  if (it == kSources.end()) throw Error(ErrorCode::InvalidSource, std::string(text));
  return it->second;
}

namespace {

std::string optional_json_key(const std::optional<json>& j) { return j ? j->dump() : std::string(); }

}  // namespace

bool Relation::operator<(const Relation& o) const {
  auto key = [](const Relation& r) {
    return std::make_tuple(std::cref(r.subject_id), std::cref(r.relation), std::cref(r.object_id),
                           r.relation_id.value_or(""), r.relation_id.has_value(),
                           optional_json_key(r.relation_resources));
  };
  return key(*this) < key(o);
}

bool Relation::operator==(const Relation& o) const {
  return subject_id == o.subject_id && relation == o.relation && object_id == o.object_id &&
         relation_id == o.relation_id && relation_resources == o.relation_resources;
}

bool UkfRecord::operator==(const UkfRecord& o) const {
  return name == o.name && notes == o.notes && short_description == o.short_description &&
         description == o.description && type == o.type && version == o.version &&
         version_notes == o.version_notes && variant == o.variant &&
         variant_notes == o.variant_notes && content == o.content &&
         content_resources == o.content_resources && content_composers == o.content_composers &&
         source == o.source && parents == o.parents && owner == o.owner &&
         workspace == o.workspace && creator == o.creator && collection == o.collection &&
         tags == o.tags && synonyms == o.synonyms && triggers == o.triggers &&
         priority == o.priority && related == o.related && auths == o.auths &&
         timefluid == o.timefluid && timestamp == o.timestamp &&
         last_verified == o.last_verified && expiration == o.expiration &&
         inactive_mark == o.inactive_mark && metadata == o.metadata && profile == o.profile &&
         id == o.id && content_hash == o.content_hash && slots == o.slots;
}

// ---------------------------------------------------------------------------
// Registry

struct FunctionRegistry::Impl {
  mutable std::shared_mutex mutex;
  std::unordered_map<std::string, ComposerFn> composers;
  std::unordered_map<std::string, TriggerFn> triggers;
};

namespace {

std::string json_string_or(const json& obj, const char* key, const std::string& fallback) {
  if (obj.is_object()) {
    auto it = obj.find(key);
    if (it != obj.end() && it->is_string()) return it->get<std::string>();
  }
  return fallback;
}

std::vector<std::string> match_surfaces(const UkfRecord& r, const json& ctx) {
  std::vector<std::string> out;
  if (ctx.is_object() && ctx.contains("matches") && ctx["matches"].is_array()) {
    for (const auto& m : ctx["matches"]) {
      if (m.is_string()) out.push_back(m.get<std::string>());
    }
  } else {
    out.push_back(r.name);
    out.insert(out.end(), r.synonyms.begin(), r.synonyms.end());
  }
  std::vector<std::string> unique;
  for (auto& s : out) {
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(s);
  }
  return unique;
}

std::string quoted_synonyms(const UkfRecord& r, const json& ctx) {
  std::vector<std::string> parts;
  for (const auto& s : match_surfaces(r, ctx)) parts.push_back("\"" + s + "\"");
  return text::join(parts, "/");
}

const json* lookup_path(const json& ctx, std::string_view path) {
  const json* node = &ctx;
  for (const auto& part : text::split(path, '.')) {
    if (!node->is_object()) return nullptr;
    auto it = node->find(part);
    if (it == node->end()) return nullptr;
    node = &*it;
  }
  return node;
}

std::string column_rule(const UkfRecord& r, const json& ctx, const json&) {
  std::string table_id = json_string_or(ctx, "table_id", json_string_or(r.content_resources, "table_id", ""));
  std::string physical;
  if (r.content_resources.contains("predicate")) {
    physical = json_string_or(r.content_resources["predicate"], "physical", "");
  }
  return "- " + quoted_synonyms(r, ctx) + " in query could be referring to column `\"" + table_id +
         "\".\"" + physical + "\" -- Column: " + r.name + "`.";
}

std::string table_rule(const UkfRecord& r, const json& ctx, const json&) {
  std::string table_id = json_string_or(r.content_resources, "table_id", r.name);
  std::string out = "- " + quoted_synonyms(r, ctx) + " in query could be referring to table `\"" +
                    table_id + "\"`.";
  if (!r.description.empty()) out += " " + r.description;
  return out;
}

std::string enum_rule(const UkfRecord& r, const json& ctx, const json&) {
  const auto& res = r.content_resources;
  std::string value = json_string_or(res, "value", r.name);
  return "- " + quoted_synonyms(r, ctx) + " in query could be referring to value `'" + value +
         "'` in column `\"" + json_string_or(res, "table_id", "") + "\".\"" +
         json_string_or(res, "column_id", "") + "\"`.";
}

std::string predicate_rule(const UkfRecord& r, const json& ctx, const json&) {
  std::string sql = json_string_or(r.content_resources, "sql", r.content);
  return "- " + quoted_synonyms(r, ctx) + " in query could be expressed as the predicate `" + sql +
         "`.";
}

std::string experience_rule(const UkfRecord& r, const json&, const json&) {
  std::string out = "Question: " + json_string_or(r.content_resources, "query", r.name);
  if (auto sql = json_string_or(r.content_resources, "sql", ""); !sql.empty()) {
    out += "\nSQL:\n" + sql;
  }
  return out;
}

}  // namespace

FunctionRegistry::FunctionRegistry() : impl_(std::make_shared<Impl>()) {
  impl_->composers.emplace(std::string(kDefaultComposerFn),
                           [](const UkfRecord& r, const json&, const json&) { return r.content; });
  impl_->composers.emplace("upper", [](const UkfRecord& r, const json&, const json&) {
    return text::to_upper_ascii(r.content);
  });
  impl_->composers.emplace("column_rule", column_rule);
  impl_->composers.emplace("table_rule", table_rule);
  impl_->composers.emplace("enum_rule", enum_rule);
  impl_->composers.emplace("predicate_rule", predicate_rule);
  impl_->composers.emplace("experience", experience_rule);

  impl_->triggers.emplace(std::string(kDefaultTriggerFn),
                          [](const UkfRecord&, const json&, const json&) { return true; });
  impl_->triggers.emplace("question_contains", [](const UkfRecord&, const json& ctx, const json& args) {
    std::string needle = json_string_or(args, "text", "");
    std::string question = json_string_or(ctx, "question", "");
    if (args.value("case_insensitive", false)) {
      return text::to_lower_ascii(question).find(text::to_lower_ascii(needle)) != std::string::npos;
    }
    return question.find(needle) != std::string::npos;
  });
  impl_->triggers.emplace("context_equals", [](const UkfRecord&, const json& ctx, const json& args) {
    const json* node = lookup_path(ctx, json_string_or(args, "path", ""));
    return node != nullptr && args.contains("value") && *node == args["value"];
  });
  impl_->triggers.emplace("context_has", [](const UkfRecord&, const json& ctx, const json& args) {
    return lookup_path(ctx, json_string_or(args, "path", "")) != nullptr;
  });
}

FunctionRegistry& FunctionRegistry::global() {
  static FunctionRegistry registry;
  return registry;
}

void FunctionRegistry::register_composer(const std::string& name, ComposerFn fn) {
  std::unique_lock lock(impl_->mutex);
  impl_->composers[name] = std::move(fn);
}

void FunctionRegistry::register_trigger(const std::string& name, TriggerFn fn) {
  std::unique_lock lock(impl_->mutex);
  impl_->triggers[name] = std::move(fn);
}

std::optional<ComposerFn> FunctionRegistry::composer(const std::string& name) const {
  std::shared_lock lock(impl_->mutex);
  auto it = impl_->composers.find(name);
  if (it == impl_->composers.end()) return std::nullopt;
  return it->second;
}

std::optional<TriggerFn> FunctionRegistry::trigger(const std::string& name) const {
  std::shared_lock lock(impl_->mutex);
  auto it = impl_->triggers.find(name);
  if (it == impl_->triggers.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Tags

std::pair<std::string, std::string> parse_tag(std::string_view tag) {
  if (tag.size() < 5 || tag.front() != '[' || tag.back() != ']') {
    throw Error(ErrorCode::MalformedTag, std::string(tag));
  }
  std::string_view inner = tag.substr(1, tag.size() - 2);
  auto sep = inner.find_first_of(":=");
  if (sep == std::string_view::npos || sep == 0 || sep + 1 >= inner.size()) {
    throw Error(ErrorCode::MalformedTag, std::string(tag));
  }
  std::string_view key = inner.substr(0, sep);
  if (key.find_first_of("[]") != std::string_view::npos) {
    throw Error(ErrorCode::MalformedTag, std::string(tag));
  }
  return {text::to_upper_ascii(key), std::string(inner.substr(sep + 1))};
}

SlotMap parse_tags(const std::set<std::string>& tags) {
  SlotMap slots;
  for (const auto& tag : tags) {
    auto [key, value] = parse_tag(tag);
    slots[key].insert(value);
  }
  return slots;
}

std::string format_tag(std::string_view key, std::string_view value) {
  return "[" + text::to_upper_ascii(key) + ":" + std::string(value) + "]";
}

std::set<std::string> format_tags(const SlotMap& slots) {
  std::set<std::string> out;
  for (const auto& [key, values] : slots) {
    for (const auto& v : values) out.insert(format_tag(key, v));
  }
  return out;
}

std::string canonical_tag(std::string_view tag) {
  auto [key, value] = parse_tag(tag);
  return format_tag(key, value);
}

// ---------------------------------------------------------------------------
// Digests

std::string identity_digest(const UkfRecord& r) {
  std::string buf;
  auto field = [&](std::string_view name, std::string_view value) {
    append_field(buf, name);
    append_field(buf, value);
  };
  field("type", r.type);
  field("name", r.name);
  field("version", r.version);
  field("variant", r.variant);
  field("source", to_string(r.source));
  field("creator", r.creator);
  field("owner", r.owner);
  field("workspace", r.workspace);
  field("collection", r.collection);
  append_field(buf, "tags");
  append_field(buf, std::to_string(r.tags.size()));
  for (const auto& t : r.tags) append_field(buf, t);  // std::set iterates sorted
  field("timefluid", r.timefluid ? "true" : "false");
  return sha256_hex(buf);
}

std::string content_digest(const UkfRecord& r) {
  std::string buf;
  append_field(buf, "content");
  append_field(buf, r.content);
  append_field(buf, "content_resources");
  append_field(buf, r.content_resources.dump());  // object keys are sorted by nlohmann::json
  return sha256_hex(buf);
}

void rehash(UkfRecord& record, bool force_id) {
  if (force_id || record.id.empty()) record.id = identity_digest(record);
  record.content_hash = content_digest(record);
  record.slots = parse_tags(record.tags);
}

// ---------------------------------------------------------------------------
// Field parsing

namespace {

const std::set<std::string>& known_fields() {
  static const std::set<std::string> kFields = {
      "name",          "notes",         "short_description", "description",  "type",
      "version",       "version_notes", "variant",           "variant_notes", "content",
      "content_resources", "content_composers", "source",    "parents",       "owner",
      "workspace",     "creator",       "collection",        "tags",          "synonyms",
      "triggers",      "priority",      "related",           "auths",         "timefluid",
      "timestamp",     "last_verified", "expiration",        "inactive_mark", "metadata",
      "profile",       "_id",           "_content_hash",     "_slots"};
  return kFields;
}

std::string get_string(const json& spec, const char* key, const std::string& fallback) {
  auto it = spec.find(key);
  if (it == spec.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw Error(ErrorCode::Parse, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

json get_object(const json& spec, const char* key) {
  auto it = spec.find(key);
  if (it == spec.end() || it->is_null()) return json::object();
  if (!it->is_object()) throw Error(ErrorCode::Parse, std::string("field '") + key + "' must be an object");
  return *it;
}

std::set<std::string> get_string_set(const json& spec, const char* key) {
  std::set<std::string> out;
  auto it = spec.find(key);
  if (it == spec.end() || it->is_null()) return out;
  if (!it->is_array()) throw Error(ErrorCode::Parse, std::string("field '") + key + "' must be an array");
  for (const auto& v : *it) out.insert(v.get<std::string>());
  return out;
}

Timestamp get_time(const json& spec, const char* key, Timestamp fallback) {
  auto it = spec.find(key);
  if (it == spec.end() || it->is_null()) return fallback;
  auto parsed = parse_rfc3339(it->get<std::string>());
  if (!parsed) throw Error(ErrorCode::Parse, std::string("field '") + key + "' is not RFC 3339");
  return *parsed;
}

FunctionRef parse_function_ref(const json& value) {
  if (value.is_string()) return FunctionRef{value.get<std::string>(), json::object()};
  if (value.is_object() && value.contains("fn")) {
    return FunctionRef{value["fn"].get<std::string>(), value.value("args", json::object())};
  }
  throw Error(ErrorCode::Parse, "function reference must be a name or {fn, args}");
}

json function_ref_json(const FunctionRef& ref) {
  if (ref.args.empty()) return ref.fn;
  return json{{"fn", ref.fn}, {"args", ref.args}};
}

template <typename Lookup>
std::map<std::string, FunctionRef> parse_function_map(const json& spec, const char* key,
                                                      std::string_view default_fn, Lookup lookup) {
  std::map<std::string, FunctionRef> out;
  auto it = spec.find(key);
  if (it != spec.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(ErrorCode::Parse, std::string("field '") + key + "' must be an object");
    for (const auto& [k, v] : it->items()) {
      FunctionRef ref = parse_function_ref(v);
      if (!lookup(ref.fn)) {
        warn(std::string("unknown ") + key + " function '" + ref.fn + "' for key '" + k +
             "', falling back to default");
        ref = FunctionRef{std::string(default_fn), json::object()};
      }
      out[k] = std::move(ref);
    }
  }
  return out;
}

Relation parse_relation(const json& v) {
  Relation r;
  if (v.is_array()) {
    if (v.size() < 3 || v.size() > 5) throw Error(ErrorCode::Parse, "related tuple must have 3-5 items");
    r.subject_id = v[0].get<std::string>();
    r.relation = v[1].get<std::string>();
    r.object_id = v[2].get<std::string>();
    if (v.size() > 3 && !v[3].is_null()) r.relation_id = v[3].get<std::string>();
    if (v.size() > 4 && !v[4].is_null()) r.relation_resources = v[4];
  } else if (v.is_object()) {
    r.subject_id = v.at("subject_id").get<std::string>();
    r.relation = v.at("relation").get<std::string>();
    r.object_id = v.at("object_id").get<std::string>();
    if (v.contains("relation_id") && !v["relation_id"].is_null()) r.relation_id = v["relation_id"].get<std::string>();
    if (v.contains("relation_resources") && !v["relation_resources"].is_null()) {
      r.relation_resources = v["relation_resources"];
    }
  } else {
    throw Error(ErrorCode::Parse, "related entry must be an array or object");
  }
  return r;
}

json relation_json(const Relation& r) {
  return json::array({r.subject_id, r.relation, r.object_id,
                      r.relation_id ? json(*r.relation_id) : json(nullptr),
                      r.relation_resources ? *r.relation_resources : json(nullptr)});
}

UkfRecord parse_fields(const json& spec) {
  if (!spec.is_object()) throw Error(ErrorCode::Parse, "record spec must be an object");
  for (const auto& [key, _] : spec.items()) {
    if (!known_fields().count(key)) throw Error(ErrorCode::Parse, "unknown UKF field '" + key + "'");
  }
  UkfRecord r;
  r.name = get_string(spec, "name", "");
  if (r.name.empty()) throw Error(ErrorCode::MissingName, "UKF record requires a non-empty name");
  r.notes = get_string(spec, "notes", "");
  r.short_description = get_string(spec, "short_description", "");
  r.description = get_string(spec, "description", "");
  r.type = get_string(spec, "type", r.type);
  r.version = get_string(spec, "version", r.version);
  r.version_notes = get_string(spec, "version_notes", "");
  r.variant = get_string(spec, "variant", r.variant);
  r.variant_notes = get_string(spec, "variant_notes", "");
  r.content = get_string(spec, "content", "");
  r.content_resources = get_object(spec, "content_resources");
  auto& reg = FunctionRegistry::global();
  r.content_composers = parse_function_map(spec, "content_composers", kDefaultComposerFn,
                                           [&](const std::string& n) { return reg.composer(n).has_value(); });
  r.source = parse_source(get_string(spec, "source", "unknown"));
  r.parents = get_object(spec, "parents");
  r.owner = get_string(spec, "owner", r.owner);
  r.workspace = get_string(spec, "workspace", r.workspace);
  r.creator = get_string(spec, "creator", r.creator);
  r.collection = get_string(spec, "collection", r.collection);
  for (const auto& t : get_string_set(spec, "tags")) r.tags.insert(canonical_tag(t));
  r.synonyms = get_string_set(spec, "synonyms");
  r.triggers = parse_function_map(spec, "triggers", kDefaultTriggerFn,
                                  [&](const std::string& n) { return reg.trigger(n).has_value(); });
  if (spec.contains("priority") && !spec["priority"].is_null()) r.priority = spec["priority"].get<int>();
  if (spec.contains("related") && !spec["related"].is_null()) {
    for (const auto& v : spec["related"]) r.related.insert(parse_relation(v));
  }
  if (spec.contains("auths") && !spec["auths"].is_null()) {
    for (const auto& v : spec["auths"]) {
      if (v.is_array() && v.size() == 2) {
        r.auths.insert(Auth{v[0].get<std::string>(), v[1].get<std::string>()});
      } else {
        r.auths.insert(Auth{v.at("user").get<std::string>(), v.at("authority").get<std::string>()});
      }
    }
  }
  if (spec.contains("timefluid") && !spec["timefluid"].is_null()) r.timefluid = spec["timefluid"].get<bool>();
  r.timestamp = get_time(spec, "timestamp", now_utc());
  r.last_verified = get_time(spec, "last_verified", r.timestamp);
  if (spec.contains("expiration") && !spec["expiration"].is_null()) r.expiration = spec["expiration"].get<long long>();
  if (spec.contains("inactive_mark") && !spec["inactive_mark"].is_null()) r.inactive_mark = spec["inactive_mark"].get<bool>();
  r.metadata = get_object(spec, "metadata");
  r.profile = get_object(spec, "profile");
  r.id = get_string(spec, "_id", "");
  r.content_hash = get_string(spec, "_content_hash", "");

  if (!r.content_composers.count("default")) r.content_composers["default"] = FunctionRef{std::string(kDefaultComposerFn)};
  if (!r.triggers.count("default")) r.triggers["default"] = FunctionRef{std::string(kDefaultTriggerFn)};
  return r;
}

}  // namespace

UkfRecord new_record(const json& spec) {
  UkfRecord r = parse_fields(spec);
  bool explicit_hash = !r.content_hash.empty();
  std::string stored_hash = r.content_hash;
  rehash(r);
  if (explicit_hash) r.content_hash = stored_hash;
  return r;
}

UkfRecord record_from_json(const json& doc) { return new_record(doc); }

json to_json(const UkfRecord& r) {
  json j;
  j["name"] = r.name;
  j["notes"] = r.notes;
  j["short_description"] = r.short_description;
  j["description"] = r.description;
  j["type"] = r.type;
  j["version"] = r.version;
  j["version_notes"] = r.version_notes;
  j["variant"] = r.variant;
  j["variant_notes"] = r.variant_notes;
  j["content"] = r.content;
  j["content_resources"] = r.content_resources;
  json composers = json::object();
  for (const auto& [k, ref] : r.content_composers) composers[k] = function_ref_json(ref);
  j["content_composers"] = composers;
  j["source"] = std::string(to_string(r.source));
  j["parents"] = r.parents;
  j["owner"] = r.owner;
  j["workspace"] = r.workspace;
  j["creator"] = r.creator;
  j["collection"] = r.collection;
  j["tags"] = json(std::vector<std::string>(r.tags.begin(), r.tags.end()));
  j["synonyms"] = json(std::vector<std::string>(r.synonyms.begin(), r.synonyms.end()));
  json triggers = json::object();
  for (const auto& [k, ref] : r.triggers) triggers[k] = function_ref_json(ref);
  j["triggers"] = triggers;
  j["priority"] = r.priority;
  json related = json::array();
  for (const auto& rel : r.related) related.push_back(relation_json(rel));
  j["related"] = related;
  json auths = json::array();
  for (const auto& a : r.auths) auths.push_back(json::array({a.user, a.authority}));
  j["auths"] = auths;
  j["timefluid"] = r.timefluid;
  j["timestamp"] = format_rfc3339(r.timestamp);
  j["last_verified"] = format_rfc3339(r.last_verified);
  j["expiration"] = r.expiration;
  j["inactive_mark"] = r.inactive_mark;
  j["metadata"] = r.metadata;
  j["profile"] = r.profile;
  j["_id"] = r.id;
  j["_content_hash"] = r.content_hash;
  json slots = json::object();
  for (const auto& [k, v] : r.slots) slots[k] = json(std::vector<std::string>(v.begin(), v.end()));
  j["_slots"] = slots;
  return j;
}

// ---------------------------------------------------------------------------
// Composers and triggers

std::string compose_content(const UkfRecord& record, const std::string& composer, const json& context) {
  auto it = record.content_composers.find(composer);
  if (it == record.content_composers.end()) throw Error(ErrorCode::UnknownComposer, composer);
  auto fn = FunctionRegistry::global().composer(it->second.fn);
  if (!fn) throw Error(ErrorCode::UnknownComposer, composer + " -> " + it->second.fn);
  return (*fn)(record, context, it->second.args);
}

bool eval_trigger(const UkfRecord& record, const std::string& trigger, const json& context) {
  auto it = record.triggers.find(trigger);
  if (it == record.triggers.end()) throw Error(ErrorCode::UnknownTrigger, trigger);
  auto fn = FunctionRegistry::global().trigger(it->second.fn);
  if (!fn) throw Error(ErrorCode::UnknownTrigger, trigger + " -> " + it->second.fn);
  return (*fn)(record, context, it->second.args);
}

bool is_expired(const UkfRecord& record, Timestamp now) {
  if (record.expiration < 0) return false;
  return (now - record.last_verified) > std::chrono::seconds(record.expiration);
}

// ---------------------------------------------------------------------------
// Updates

const std::set<std::string>& immutable_fields() {
  static const std::set<std::string> kImmutable = {
      "name",    "type",      "version", "variant",    "content",   "content_resources",
      "content_composers", "source", "parents", "owner", "workspace", "creator",
      "collection", "tags",   "priority", "timefluid", "_id",       "_content_hash", "_slots"};
  return kImmutable;
}

UkfRecord apply_update(const UkfRecord& record, const json& patch) {
  if (!patch.is_object()) throw Error(ErrorCode::Parse, "update patch must be an object");
  json merged = to_json(record);
  for (const auto& [key, value] : patch.items()) {
    if (!known_fields().count(key)) throw Error(ErrorCode::Parse, "unknown UKF field '" + key + "'");
    if (immutable_fields().count(key)) {
      // Re-asserting the current value is allowed; anything else must go through versioning.
      json probe = merged;
      probe[key] = value;
      UkfRecord candidate = parse_fields(probe);
      json canonical = to_json(candidate);
      if (canonical[key] != merged[key]) throw Error(ErrorCode::ImmutableField, key);
      continue;
    }
    merged[key] = value;
  }
  UkfRecord updated = parse_fields(merged);
  updated.id = record.id;
  rehash(updated);
  return updated;
}

// ---------------------------------------------------------------------------
// Templates

UkfRecord UkfTemplate::instantiate(const json& spec) const {
  json s = spec.is_object() ? spec : json::object();
  s["type"] = fixed_type;
  json composers = s.value("content_composers", json::object());
  for (const auto& [k, ref] : default_composers) {
    if (!composers.contains(k)) composers[k] = function_ref_json(ref);
  }
  s["content_composers"] = composers;
  json triggers = s.value("triggers", json::object());
  for (const auto& [k, ref] : default_triggers) {
    if (!triggers.contains(k)) triggers[k] = function_ref_json(ref);
  }
  s["triggers"] = triggers;
  return new_record(s);
}

namespace {

std::vector<UkfTemplate> make_builtin_templates() {
  auto tpl = [](std::string name, std::string composer, std::string hint) {
    UkfTemplate t;
    t.template_name = name;
    t.fixed_type = text::to_lower_ascii(name);
    t.default_composers["default"] = FunctionRef{std::move(composer)};
    t.default_triggers["default"] = FunctionRef{std::string(kDefaultTriggerFn)};
    t.constructor_hint = std::move(hint);
    return t;
  };
  return {
      tpl("Knowledge", "content", "A short free-form domain fact stated in one or two sentences."),
      tpl("Document", "content", "A chunk of documentation kept verbatim as the content."),
      tpl("Experience", "experience",
          "A historical user query; content_resources holds query, sql and optional cot."),
      tpl("Table", "table_rule", "A database table; content_resources.table_id is the physical name."),
      tpl("Column", "column_rule",
          "A column; content_resources holds table_id and predicate.physical (the physical column)."),
      tpl("Enum", "enum_rule",
          "A value stored in a column; content_resources holds table_id, column_id and value."),
      tpl("Taxonomy", "content", "A hierarchy or grouping between columns or values."),
      tpl("Dependency", "content", "A functional dependency between columns."),
      tpl("Predicate", "predicate_rule",
          "A reusable WHERE condition; content_resources.sql holds the condition text."),
      tpl("Synonym", "content", "A context-dependent alternative name for another knowledge entry."),
      tpl("Indicator", "content", "A domain formula such as profit = revenue - cost."),
      tpl("Term", "content", "A business term and its definition."),
      tpl("Metric", "content", "A computation metric such as YoY or CAGR with its SQL pattern."),
      tpl("Special", "content", "A special rule: temporal, data validity or implicit intent."),
  };
}

const std::vector<UkfTemplate>& builtin_templates() {
  static const std::vector<UkfTemplate> kTemplates = make_builtin_templates();
  return kTemplates;
}

}  // namespace

const UkfTemplate* find_builtin_template(std::string_view name) {
  for (const auto& t : builtin_templates()) {
    if (text::iequals(t.template_name, name)) return &t;
  }
  return nullptr;
}

const UkfTemplate& builtin_template(std::string_view name) {
  if (const auto* t = find_builtin_template(name)) return *t;
  throw Error(ErrorCode::Parse, "unknown UKF template '" + std::string(name) + "'");
}

std::vector<std::string> builtin_template_names() {
  std::vector<std::string> names;
  for (const auto& t : builtin_templates()) names.push_back(t.template_name);
  return names;
}

}  // namespace kbsql
