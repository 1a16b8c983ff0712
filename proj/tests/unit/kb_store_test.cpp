#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "kbsql/kb_store.hpp"
#include "test_util.hpp"

using namespace kbsql;
using kbsql::testing::code_of;
using kbsql::testing::TempDir;

namespace {

const Timestamp kT0 = make_timestamp(2025, 1, 1, 0, 0, 0);

UkfRecord column(const std::string& name, const std::string& content, std::set<std::string> synonyms = {},
                 int priority = 0) {
  json syn = json::array();
  for (const auto& s : synonyms) syn.push_back(s);
  return new_record({{"name", name},
                     {"type", "column"},
                     {"content", content},
                     {"synonyms", syn},
                     {"priority", priority},
                     {"tags", {"[TABLE:npp]", "[COLUMN:" + name + "]"}},
                     {"timestamp", format_rfc3339(kT0)}});
}

}  // namespace

TEST(KbInsert, ReturnsIdAndRejectsLiveDuplicate) {
  KnowledgeBase kb;
  auto r = column("status", "plant status");
  EXPECT_EQ(kb.insert(r, TrustMark::Schema), r.id);
  EXPECT_EQ(code_of([&] { kb.insert(r, TrustMark::Schema); }), ErrorCode::DuplicateLiveId);
  EXPECT_EQ(*kb.get(r.id), r);
  EXPECT_EQ(kb.trust(r.id), TrustMark::Schema);
}

TEST(KbInsert, InactiveIdMayBeReused) {
  KnowledgeBase kb;
  auto r = column("status", "plant status");
  r.expiration = 10;
  kb.insert(r, TrustMark::Mined);
  EXPECT_EQ(kb.sweep_expired(kT0 + std::chrono::seconds(11)), 1u);
  r.expiration = -1;
  EXPECT_NO_THROW(kb.insert(r, TrustMark::Mined));
  EXPECT_FALSE(kb.get(r.id)->inactive_mark);
}

TEST(KbMerge, RuleOneUnionsSynonyms) {
  KnowledgeBase kb;
  auto existing = column("status", "plant status", {"state"});
  kb.insert(existing, TrustMark::Mined);
  auto incoming = column("status", "plant status", {"running"});
  ASSERT_EQ(incoming.id, existing.id);
  auto report = kb.merge_incoming({incoming});
  EXPECT_EQ(report.merged_synonyms, std::vector<std::string>{existing.id});
  EXPECT_EQ(report.total(), 1u);
  EXPECT_EQ(kb.get(existing.id)->synonyms, (std::set<std::string>{"running", "state"}));
}

TEST(KbMerge, RuleTwoDiscardsConflictWithTrusted) {
  KnowledgeBase kb;
  auto verified = column("status", "operational state of the plant");
  kb.insert(verified, TrustMark::HumanVerified);
  auto incoming = column("status", "something else");
  auto report = kb.merge_incoming({incoming});
  EXPECT_EQ(report.discarded_conflicts, std::vector<std::string>{incoming.id});
  EXPECT_EQ(kb.get(verified.id)->content, "operational state of the plant");
}

TEST(KbMerge, RuleThreeDropsBothConflictingIncoming) {
  KnowledgeBase kb;
  auto a = column("status", "version a");
  auto b = column("status", "version b");
  auto report = kb.merge_incoming({a, b});
  EXPECT_EQ(report.dropped_same_id, (std::vector<std::string>{a.id, b.id}));
  EXPECT_FALSE(kb.contains(a.id));
}

TEST(KbMerge, RuleThreeAgainstExistingMinedKeepsExisting) {
  KnowledgeBase kb;
  auto old = column("status", "old text");
  kb.insert(old, TrustMark::Mined);
  auto report = kb.merge_incoming({column("status", "new text")});
  EXPECT_EQ(report.dropped_same_id.size(), 1u);
  EXPECT_EQ(kb.get(old.id)->content, "old text");
}

TEST(KbMerge, RuleFourInsertsBelowTrustedPriorities) {
  KnowledgeBase kb;
  kb.insert(column("a", "a", {}, 5), TrustMark::Schema);
  kb.insert(column("b", "b", {}, 2), TrustMark::Labeled);
  kb.insert(column("c", "c", {}, -7), TrustMark::Mined);  // ignored for the bound
  auto fresh = column("d", "d", {}, 9);
  auto report = kb.merge_incoming({fresh});
  EXPECT_EQ(report.inserted_low_priority, std::vector<std::string>{fresh.id});
  EXPECT_EQ(kb.get(fresh.id)->priority, 1);
  EXPECT_EQ(kb.trust(fresh.id), TrustMark::Mined);
}

TEST(KbMerge, DuplicateWithinBatchMergesIntoFirst) {
  KnowledgeBase kb;
  auto a = column("x", "same", {"one"});
  auto b = column("x", "same", {"two"});
  auto report = kb.merge_incoming({a, b});
  EXPECT_EQ(report.inserted_low_priority.size(), 1u);
  EXPECT_EQ(report.merged_synonyms.size(), 1u);
  EXPECT_EQ(kb.get(a.id)->synonyms, (std::set<std::string>{"one", "two"}));
}

TEST(KbMerge, ReportPartitionsBatchAndIgnoresTrustedOrder) {
  std::mt19937 rng(7);
  std::vector<UkfRecord> trusted;
  for (int i = 0; i < 6; ++i) trusted.push_back(column("t" + std::to_string(i), "c", {}, i * 3 - 4));
  std::vector<UkfRecord> batch;
  for (int i = 0; i < 30; ++i) {
    int name = static_cast<int>(rng() % 10);
    std::string content = (rng() % 3 == 0) ? "alt" : "c";
    batch.push_back(column("t" + std::to_string(name), content, {"s" + std::to_string(i)}));
  }
  std::optional<json> first;
  for (int round = 0; round < 5; ++round) {
    std::shuffle(trusted.begin(), trusted.end(), rng);
    KnowledgeBase kb;
    for (const auto& t : trusted) kb.insert(t, TrustMark::Schema);
    auto report = kb.merge_incoming(batch);
    EXPECT_EQ(report.total(), batch.size());
    if (!first) first = report.to_json();
    EXPECT_EQ(report.to_json(), *first);
  }
}

TEST(KbVersion, BumpRule) {
  EXPECT_EQ(bump_minor_version("v0.1.0"), "v0.2.0");
  EXPECT_EQ(bump_minor_version("v1.9.4"), "v1.10.0");
  EXPECT_EQ(code_of([] { bump_minor_version("latest"); }), ErrorCode::InvalidVersion);
}

TEST(KbVersion, NewVersionLeavesBaseAndExtendsChain) {
  KnowledgeBase kb;
  auto base = column("status", "v1 text");
  kb.insert(base, TrustMark::Schema);
  auto id = kb.new_version(base.id, {{"content", "v2 text"}, {"owner", "ops"}}, kT0 + std::chrono::hours(1));
  auto next = *kb.get(id);
  EXPECT_NE(id, base.id);
  EXPECT_EQ(next.version, "v0.2.0");
  EXPECT_EQ(next.owner, "ops");
  EXPECT_EQ(next.parents.at("previous_version"), base.id);
  EXPECT_EQ(*kb.get(base.id), base);
  EXPECT_EQ(kb.version_chain({"column", "status", "default"}), (std::vector<std::string>{base.id, id}));
  EXPECT_EQ(code_of([&] { kb.new_version("nope", json::object()); }), ErrorCode::UnknownId);
}

TEST(KbSweep, ExpiresOnceAndKeepsChains) {
  KnowledgeBase kb;
  auto r = column("status", "x");
  r.expiration = 60;
  kb.insert(r, TrustMark::Mined);
  kb.insert(column("other", "y"), TrustMark::Mined);
  auto chains_before = kb.version_chains();
  EXPECT_EQ(kb.sweep_expired(kT0 + std::chrono::seconds(65)), 1u);
  EXPECT_TRUE(kb.get(r.id)->inactive_mark);
  EXPECT_EQ(kb.sweep_expired(kT0 + std::chrono::seconds(65)), 0u);
  EXPECT_EQ(kb.size(true), 2u);
  EXPECT_EQ(kb.size(), 1u);
  EXPECT_EQ(kb.version_chains(), chains_before);
}

TEST(KbSweep, NeverExpiringRecordsStayLive) {
  KnowledgeBase kb;
  kb.insert(column("a", "a"), TrustMark::Mined);
  EXPECT_EQ(kb.sweep_expired(kT0 + std::chrono::hours(24 * 3650)), 0u);
}

class KbBackendRoundTrip : public ::testing::TestWithParam<std::string> {};

TEST_P(KbBackendRoundTrip, ReopenRestoresState) {
  TempDir dir;
  auto path = GetParam() == "sqlite" ? dir.path() / "kb.sqlite" : dir.path() / "kb";
  std::string base_id, next_id;
  UkfRecord base = column("status", "text", {"state"});
  {
    KnowledgeBase kb(open_backend(GetParam(), path));
    base_id = kb.insert(base, TrustMark::Labeled);
    next_id = kb.new_version(base_id, {{"content", "text 2"}}, kT0 + std::chrono::hours(2));
    kb.merge_incoming({column("fresh", "f")});
  }
  KnowledgeBase kb(open_backend(GetParam(), path));
  EXPECT_EQ(kb.size(), 3u);
  EXPECT_EQ(*kb.get(base_id), base);
  EXPECT_EQ(kb.trust(base_id), TrustMark::Labeled);
  EXPECT_EQ(kb.trust(next_id), TrustMark::Labeled);
  EXPECT_EQ(kb.version_chain({"column", "status", "default"}), (std::vector<std::string>{base_id, next_id}));
  if (GetParam() == "dir") EXPECT_TRUE(std::filesystem::exists(path / (base_id + ".json")));
}

INSTANTIATE_TEST_SUITE_P(Backends, KbBackendRoundTrip, ::testing::Values("dir", "sqlite"));

TEST(KbProperty, LiveIdsStayUniqueUnderRandomOps) {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    KnowledgeBase kb;
    Timestamp now = kT0;
    for (int step = 0; step < 60; ++step) {
      int name = static_cast<int>(rng() % 6);
      auto r = column("n" + std::to_string(name), "c" + std::to_string(rng() % 2));
      if (rng() % 4 == 0) r.expiration = static_cast<long long>(rng() % 100);
      switch (rng() % 4) {
        case 0:
          try {
            kb.insert(r, rng() % 2 ? TrustMark::Schema : TrustMark::Mined);
          } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::DuplicateLiveId);
          }
          break;
        case 1: kb.merge_incoming({r}); break;
        case 2: now += std::chrono::seconds(rng() % 80); kb.sweep_expired(now); break;
        default: {
          auto live = kb.records();
          if (!live.empty()) {
            try {
              kb.new_version(live[rng() % live.size()].id, {{"content", "v" + std::to_string(step)}}, now);
            } catch (const Error& e) {
              EXPECT_EQ(e.code(), ErrorCode::DuplicateLiveId);
            }
          }
        }
      }
      std::set<std::string> ids;
      for (const auto& rec : kb.records()) EXPECT_TRUE(ids.insert(rec.id).second);
    }
  }
}

TEST(KbListeners, NotifiedAfterMutation) {
  KnowledgeBase kb;
  std::vector<std::string> seen;
  kb.add_listener([&](const std::vector<std::string>& ids) {
    EXPECT_GE(kb.size(), 1u);  // lock already released
    seen.insert(seen.end(), ids.begin(), ids.end());
  });
  auto id = kb.insert(column("a", "a"), TrustMark::Schema);
  EXPECT_EQ(seen, std::vector<std::string>{id});
  EXPECT_EQ(kb.revision(), 1u);
}
