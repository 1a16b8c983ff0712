#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "kbsql/errors.hpp"
#include "kbsql/hash.hpp"
#include "kbsql/log.hpp"
#include "kbsql/ukf.hpp"

using namespace kbsql;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected kbsql::Error";
  return ErrorCode::Io;
}

}  // namespace

TEST(UkfRecord, DefaultsFollowFieldSchema) {
  auto r = new_record({{"name", "yoy_metric"}});
  EXPECT_EQ(r.type, "general");
  EXPECT_EQ(r.priority, 0);
  EXPECT_EQ(r.expiration, -1);
  EXPECT_EQ(r.collection, "general");
  EXPECT_EQ(r.version, "v0.1.0");
  EXPECT_EQ(r.variant, "default");
  EXPECT_EQ(r.source, Source::Unknown);
  EXPECT_EQ(r.owner, "unknown");
  EXPECT_FALSE(r.timefluid);
  EXPECT_FALSE(r.inactive_mark);
  EXPECT_EQ(r.id.size(), 64u);
  EXPECT_EQ(r.content_hash.size(), 64u);
  EXPECT_TRUE(r.content_composers.count("default"));
  EXPECT_TRUE(r.triggers.count("default"));
  EXPECT_EQ(r.last_verified, r.timestamp);
}

TEST(UkfRecord, ConstructionErrors) {
  EXPECT_EQ(code_of([] { new_record(json::object()); }), ErrorCode::MissingName);
  EXPECT_EQ(code_of([] { new_record({{"name", ""}}); }), ErrorCode::MissingName);
  EXPECT_EQ(code_of([] { new_record({{"name", "x"}, {"tags", {"ENUM:x"}}}); }), ErrorCode::MalformedTag);
  EXPECT_EQ(code_of([] { new_record({{"name", "x"}, {"source", "crawler"}}); }), ErrorCode::InvalidSource);
}

TEST(UkfRecord, IdentityIgnoresNonIdentityFields) {
  auto a = new_record({{"name", "plants"}, {"notes", "first"}, {"content", "c"}});
  auto b = new_record({{"name", "plants"}, {"notes", "second"}, {"content", "c"}});
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.content_hash, b.content_hash);
}

TEST(UkfRecord, IdentityDigestMatchesHandSerialization) {
  auto r = new_record({{"name", "plants"},
                       {"type", "table"},
                       {"source", "system"},
                       {"tags", {"[TABLE=npp]", "[COLUMN:status]"}},
                       {"timefluid", true}});
  // Built by hand: length-prefixed name/value pairs in identity-field order; tags sorted.
  std::string expected =
      "4:type;5:table;4:name;6:plants;7:version;6:v0.1.0;7:variant;7:default;6:source;6:system;"
      "7:creator;7:unknown;5:owner;7:unknown;9:workspace;7:unknown;10:collection;7:general;"
      "4:tags;1:2;15:[COLUMN:status];11:[TABLE:npp];9:timefluid;4:true;";
  EXPECT_EQ(r.id, sha256_hex(expected));

  std::string content = "7:content;0:;17:content_resources;2:{};";
  EXPECT_EQ(r.content_hash, sha256_hex(content));
}

TEST(UkfRecord, ComposeDefaultReturnsContent) {
  auto r = new_record({{"name", "yoy"}, {"content", "YoY = (cur - prev) / abs(prev)"}});
  EXPECT_EQ(compose_content(r, "default"), r.content);
  EXPECT_EQ(code_of([&] { compose_content(r, "nope"); }), ErrorCode::UnknownComposer);
}

TEST(UkfRecord, ColumnRuleComposer) {
  auto r = builtin_template("Column").instantiate(
      {{"name", "customer"},
       {"synonyms", {"client"}},
       {"content_resources", {{"table_id", "orders"}, {"predicate", {{"physical", "cust_name"}}}}}});
  EXPECT_EQ(r.type, "column");
  EXPECT_EQ(compose_content(r, "default"),
            "- \"customer\"/\"client\" in query could be referring to column "
            "`\"orders\".\"cust_name\" -- Column: customer`.");
  json ctx = {{"matches", {"buyer"}}, {"table_id", "sales"}};
  EXPECT_EQ(compose_content(r, "default", ctx),
            "- \"buyer\" in query could be referring to column `\"sales\".\"cust_name\" -- Column: customer`.");
}

TEST(UkfRecord, CustomComposerByName) {
  auto r = new_record({{"name", "n"}, {"content", "abc"}, {"content_composers", {{"custom", "upper"}}}});
  EXPECT_EQ(compose_content(r, "custom"), "ABC");
  EXPECT_EQ(compose_content(r, "default"), "abc");
}

TEST(UkfRecord, Triggers) {
  auto sports = new_record(
      {{"name", "teams"},
       {"triggers", {{"default", {{"fn", "question_contains"}, {"args", {{"text", "sports"}}}}}}}});
  EXPECT_TRUE(eval_trigger(sports, "default", {{"question", "sports teams by wins"}}));
  EXPECT_FALSE(eval_trigger(sports, "default", {{"question", "revenue by region"}}));
  EXPECT_FALSE(eval_trigger(sports, "default", json::object()));

  auto plain = new_record({{"name", "plain"}});
  EXPECT_TRUE(eval_trigger(plain, "default", json::object()));
  EXPECT_TRUE(eval_trigger(plain, "default", {{"question", "anything"}, {"user", {{"id", 3}}}}));
  EXPECT_EQ(code_of([&] { eval_trigger(plain, "missing"); }), ErrorCode::UnknownTrigger);

  auto eu = new_record(
      {{"name", "eu_rule"},
       {"triggers", {{"default", {{"fn", "context_equals"}, {"args", {{"path", "user.region"}, {"value", "EU"}}}}}}}});
  EXPECT_TRUE(eval_trigger(eu, "default", {{"user", {{"region", "EU"}}}}));
  EXPECT_FALSE(eval_trigger(eu, "default", {{"user", {{"region", "NA"}}}}));
  EXPECT_FALSE(eval_trigger(eu, "default", json::object()));
}

TEST(UkfTags, ParseExamples) {
  auto slots = parse_tags({"[ENUM=operational]", "[COLUMN:status]"});
  ASSERT_EQ(slots.size(), 2u);
  EXPECT_EQ(slots["ENUM"], std::set<std::string>{"operational"});
  EXPECT_EQ(slots["COLUMN"], std::set<std::string>{"status"});
  EXPECT_TRUE(parse_tags({}).empty());
  auto multi = parse_tags({"[TOPIC:AI]", "[TOPIC:DB]"});
  EXPECT_EQ(multi["TOPIC"], (std::set<std::string>{"AI", "DB"}));
  EXPECT_EQ(parse_tags({"[topic:x:y]"})["TOPIC"], std::set<std::string>{"x:y"});
}

TEST(UkfTags, Malformed) {
  for (std::string bad : {"", "[]", "[:x]", "[K:]", "K:V", "[K V]", "[K=V", "[[K:V]"}) {
    EXPECT_EQ(code_of([&] { parse_tags({bad}); }), ErrorCode::MalformedTag) << bad;
  }
}

TEST(UkfTags, FormatParseIdentityAndIdempotence) {
  std::mt19937 rng(7);
  const std::string alphabet = "abcXYZ_ 09";
  for (int trial = 0; trial < 200; ++trial) {
    SlotMap slots;
    int nkeys = rng() % 4;
    for (int k = 0; k < nkeys; ++k) {
      std::string key(1 + rng() % 5, 'A');
      for (auto& c : key) c = "ABCDEFG_"[rng() % 8];
      int nvals = 1 + rng() % 3;
      for (int v = 0; v < nvals; ++v) {
        std::string val(1 + rng() % 6, 'a');
        for (auto& c : val) c = alphabet[rng() % alphabet.size()];
        slots[key].insert(val);
      }
    }
    auto tags = format_tags(slots);
    EXPECT_EQ(parse_tags(tags), slots);
    EXPECT_EQ(format_tags(parse_tags(tags)), tags);
  }
}

TEST(UkfRecord, ExpirationBoundary) {
  auto base = make_timestamp(2025, 1, 1);
  auto never = new_record({{"name", "n"}, {"last_verified", "2025-01-01T00:00:00Z"}});
  EXPECT_FALSE(is_expired(never, base + std::chrono::hours(24 * 365 * 10)));
  auto ten = new_record({{"name", "n"}, {"expiration", 10}, {"last_verified", "2025-01-01T00:00:00Z"}});
  EXPECT_TRUE(is_expired(ten, base + std::chrono::seconds(20)));
  EXPECT_FALSE(is_expired(ten, base + std::chrono::seconds(10)));
  EXPECT_TRUE(is_expired(ten, base + std::chrono::seconds(11)));
}

TEST(UkfRecord, ImmutableFieldsRejectUpdates) {
  auto r = new_record({{"name", "n"}, {"content", "c"}, {"priority", 2}});
  EXPECT_EQ(code_of([&] { apply_update(r, {{"content", "other"}}); }), ErrorCode::ImmutableField);
  EXPECT_EQ(code_of([&] { apply_update(r, {{"priority", 3}}); }), ErrorCode::ImmutableField);
  EXPECT_EQ(code_of([&] { apply_update(r, {{"tags", {"[A:b]"}}}); }), ErrorCode::ImmutableField);
  auto same = apply_update(r, {{"content", "c"}, {"synonyms", {"alias"}}, {"notes", "hi"}});
  EXPECT_EQ(same.id, r.id);
  EXPECT_EQ(same.content_hash, r.content_hash);
  EXPECT_EQ(same.synonyms, std::set<std::string>{"alias"});
  EXPECT_EQ(same.notes, "hi");
}

TEST(UkfRecord, JsonRoundTrip) {
  auto r = new_record({{"name", "npp"},
                       {"type", "table"},
                       {"content_resources", {{"table_id", "nuclear_power_plants"}, {"n", 3}}},
                       {"tags", {"[TABLE=nuclear_power_plants]"}},
                       {"synonyms", {"plants", "reactors"}},
                       {"related", {{"a", "refers_to", "b", nullptr, nullptr}}},
                       {"auths", json::array({json::array({"alice", "read"})})},
                       {"timestamp", "2025-05-01T10:00:00Z"},
                       {"metadata", {{"k", 1}}}});
  auto doc = to_json(r);
  EXPECT_EQ(doc["tags"], json::array({"[TABLE:nuclear_power_plants]"}));
  EXPECT_EQ(doc["_slots"]["TABLE"], json::array({"nuclear_power_plants"}));
  auto back = record_from_json(json::parse(doc.dump()));
  EXPECT_EQ(back, r);
}

TEST(UkfRecord, UnknownFunctionNameFallsBackWithWarning) {
  int warnings = 0;
  auto previous = set_warning_handler([&](std::string_view) { ++warnings; });
  auto r = new_record({{"name", "n"}, {"content", "x"}, {"content_composers", {{"default", "gone_fn"}}}});
  set_warning_handler(previous);
  EXPECT_EQ(warnings, 1);
  EXPECT_EQ(compose_content(r, "default"), "x");
}

TEST(UkfTemplates, BuiltinsExist) {
  for (std::string name : {"Knowledge", "Document", "Experience", "Table", "Column", "Enum", "Taxonomy",
                           "Dependency", "Predicate", "Synonym", "Indicator", "Term", "Metric", "Special"}) {
    ASSERT_NE(find_builtin_template(name), nullptr) << name;
  }
}

TEST(UkfTemplates, InstantiationPreservesInvariants) {
  std::mt19937 rng(42);
  auto names = builtin_template_names();
  for (int trial = 0; trial < 300; ++trial) {
    const auto& tpl = builtin_template(names[rng() % names.size()]);
    json spec = {{"name", "n" + std::to_string(rng() % 1000)}, {"type", "overridden"}};
    if (rng() % 2) spec["content"] = std::string(rng() % 20, 'x');
    if (rng() % 2) spec["tags"] = {"[K" + std::to_string(rng() % 3) + "=v]"};
    if (rng() % 2) spec["content_composers"] = {{"alt", "upper"}};
    auto r = tpl.instantiate(spec);
    EXPECT_EQ(r.type, tpl.fixed_type);
    EXPECT_FALSE(r.name.empty());
    EXPECT_TRUE(r.content_composers.count("default"));
    EXPECT_TRUE(r.triggers.count("default"));
    EXPECT_EQ(r.id, identity_digest(r));
    EXPECT_EQ(r.content_hash, content_digest(r));
    EXPECT_EQ(r.slots, parse_tags(r.tags));
    EXPECT_NO_THROW(compose_content(r, "default"));
  }
}
