#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "../oracles/seed_db.hpp"
#include "kbsql/embedding.hpp"
#include "kbsql/llm.hpp"
#include "kbsql/profiler.hpp"
#include "test_util.hpp"

using namespace kbsql;
using kbsql::testing::code_of;

namespace {

// Independent type-7 quantile.
double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  double pos = q * static_cast<double>(xs.size() - 1);
  std::size_t i = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(i);
  if (i + 1 >= xs.size()) return xs.back();
  return xs[i] * (1 - frac) + xs[i + 1] * frac;
}

void expect_rel(double got, double want, const std::string& what) {
  double scale = std::max(1.0, std::abs(want));
  EXPECT_LE(std::abs(got - want) / scale, 1e-9) << what << " got " << got << " want " << want;
}

std::shared_ptr<ScriptedClient> date_format_llm() {
  auto llm = std::make_shared<ScriptedClient>();
  llm->add_rule({{"strptime", "commissioned"}, std::nullopt, std::nullopt, {"```\n%Y-%m-%d\n```", 0}, false});
  llm->set_default({"A column.", 0});
  return llm;
}

class SeededDb : public ::testing::Test {
 protected:
  void SetUp() override {
    tables_ = oracle::seed_tables();
    db_ = std::make_unique<SqliteDatabase>(":memory:");
    db_->execute_script(oracle::seed_script(tables_));
  }
  std::vector<oracle::SeedTable> tables_;
  std::unique_ptr<SqliteDatabase> db_;
};

}  // namespace

TEST(Percentile, Type7) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(percentile({7}, 0.75), 7);
  EXPECT_DOUBLE_EQ(percentile({1, 9}, 1.0), 9);
}

TEST(Annotate, Rules) {
  std::vector<Value> nums{Value(std::int64_t{1}), Value(2.5), Value(std::string("3")), Value{}};
  EXPECT_EQ(annotate_column_type(nums).type, InferredType::Numeric);
  std::vector<Value> cats;
  for (int i = 0; i < 100; ++i) cats.emplace_back(std::string(i % 3 ? "a" : "b"));
  EXPECT_EQ(annotate_column_type(cats).type, InferredType::Categorical);
  std::vector<Value> text;
  for (int i = 0; i < 100; ++i) text.emplace_back("note " + std::to_string(i));
  EXPECT_EQ(annotate_column_type(text).type, InferredType::Text);
  EXPECT_EQ(annotate_column_type({Value{}, Value{}}).type, InferredType::Text);
}

TEST(Annotate, TemporalNeedsLlmAndParseableFormat) {
  std::vector<Value> dates;
  for (int d = 1; d <= 28; ++d) dates.emplace_back("2021-03-" + std::string(d < 10 ? "0" : "") + std::to_string(d));
  EXPECT_NE(annotate_column_type(dates, nullptr, "commissioned").type, InferredType::Temporal);
  auto llm = date_format_llm();
  auto ann = annotate_column_type(dates, llm.get(), "commissioned");
  EXPECT_EQ(ann.type, InferredType::Temporal);
  EXPECT_EQ(ann.format, "%Y-%m-%d");

  ScriptedClient wrong;
  wrong.set_default({"%d/%m/%Y", 0});
  EXPECT_NE(annotate_column_type(dates, &wrong, "commissioned").type, InferredType::Temporal);

  ScriptedClient broken;  // no script: provider failure is tolerated
  EXPECT_NE(annotate_column_type(dates, &broken, "commissioned").type, InferredType::Temporal);
}

TEST(Annotate, SuspicionHeuristics) {
  EXPECT_TRUE(temporal_suspected("created_at", {Value(std::string("x"))}));
  EXPECT_TRUE(temporal_suspected("v", {Value(std::string("202103")), Value(std::string("202104"))}));
  EXPECT_FALSE(temporal_suspected("name", {Value(std::string("Plant 1"))}));
}

TEST(ParseWithFormat, Basics) {
  auto t = parse_with_format("2021-03-04", "%Y-%m-%d");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_rfc3339(*t), "2021-03-04T00:00:00Z");
  EXPECT_FALSE(parse_with_format("2021-03-04x", "%Y-%m-%d"));
  auto ym = parse_with_format("202103", "%Y%m");
  ASSERT_TRUE(ym);
  EXPECT_EQ(format_rfc3339(*ym), "2021-03-01T00:00:00Z");
  EXPECT_DOUBLE_EQ(strptime_parse_ratio({"2020-01-01", "nope"}, "%Y-%m-%d"), 0.5);
}

TEST_F(SeededDb, EveryStatisticMatchesRecomputation) {
  auto llm = date_format_llm();
  DbProfile prof = profile_db(*db_, llm.get(), {}, 3);
  ASSERT_EQ(prof.tables.size(), 3u);
  for (const auto& t : tables_) {
    auto tp = std::find_if(prof.tables.begin(), prof.tables.end(), [&](const auto& x) { return x.name == t.name; });
    ASSERT_NE(tp, prof.tables.end());
    EXPECT_EQ(tp->row_count, static_cast<std::int64_t>(t.columns[0].values.size()));
    for (const auto& col : t.columns) {
      const ColumnProfile* cp = prof.find_column(t.name, col.name);
      ASSERT_NE(cp, nullptr) << col.name;
      std::vector<Value> present;
      for (const auto& v : col.values)
        if (!is_null(v)) present.push_back(v);
      EXPECT_EQ(cp->row_count, static_cast<std::int64_t>(col.values.size()));
      EXPECT_EQ(cp->null_count, static_cast<std::int64_t>(col.values.size() - present.size()));
      EXPECT_EQ(cp->is_pk, col.name == "id" ) << cp->id;

      bool numeric = std::all_of(present.begin(), present.end(), [](const Value& v) { return is_numeric(v); });
      std::map<std::string, std::int64_t> counts;
      for (const auto& v : present) ++counts[value_to_string(v)];
      std::string id = t.name + "." + col.name;
      if (col.name == "commissioned") {
        ASSERT_EQ(cp->inferred_type, InferredType::Temporal);
        std::vector<std::string> s;
        for (const auto& v : present) s.push_back(std::get<std::string>(v));
        std::sort(s.begin(), s.end());
        EXPECT_EQ(format_rfc3339(cp->temporal_stats->min_time), s.front() + "T00:00:00Z");
        EXPECT_EQ(format_rfc3339(cp->temporal_stats->max_time), s.back() + "T00:00:00Z");
      } else if (numeric) {
        ASSERT_EQ(cp->inferred_type, InferredType::Numeric) << id;
        std::vector<double> xs;
        long double sum = 0;
        bool ints = true;
        for (const auto& v : present) {
          xs.push_back(*as_double(v));
          sum += xs.back();
          ints = ints && std::holds_alternative<std::int64_t>(v);
        }
        const auto& s = *cp->numeric_stats;
        expect_rel(s.mean, static_cast<double>(sum / xs.size()), id + " mean");
        expect_rel(s.min, *std::min_element(xs.begin(), xs.end()), id + " min");
        expect_rel(s.max, *std::max_element(xs.begin(), xs.end()), id + " max");
        expect_rel(s.p25, quantile(xs, 0.25), id + " p25");
        expect_rel(s.p50, quantile(xs, 0.50), id + " p50");
        expect_rel(s.p75, quantile(xs, 0.75), id + " p75");
        EXPECT_EQ(s.is_integer, ints) << id;
      } else {
        bool categorical = counts.size() <= 0.1 * present.size();
        EXPECT_EQ(cp->inferred_type, categorical ? InferredType::Categorical : InferredType::Text) << id;
        ASSERT_TRUE(cp->categorical_stats) << id;
        const auto& s = *cp->categorical_stats;
        EXPECT_EQ(s.n_classes, static_cast<std::int64_t>(counts.size()));
        std::vector<std::pair<std::string, std::int64_t>> order(counts.begin(), counts.end());
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
          return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        ASSERT_EQ(s.top_values.size(), std::min<std::size_t>(10, order.size()));
        double cum = 0;
        for (std::size_t i = 0; i < s.top_values.size(); ++i) {
          EXPECT_EQ(s.top_values[i].value, order[i].first);
          EXPECT_EQ(s.top_values[i].count, order[i].second);
          double f = static_cast<double>(order[i].second) / present.size();
          cum += f;
          expect_rel(s.top_values[i].frequency, f, id + " freq");
          expect_rel(s.top_values[i].cum_frequency, cum, id + " cum");
        }
        std::size_t max_len = 0;
        for (const auto& [v, _] : counts) max_len = std::max(max_len, v.size());
        EXPECT_EQ(s.max_len, static_cast<std::int64_t>(max_len));
      }
    }
  }
  const ColumnProfile* fk = prof.find_column("reactors", "plant_id");
  ASSERT_TRUE(fk && fk->fk);
  EXPECT_EQ(fk->fk->ref_table, "plants");
  EXPECT_EQ(prof.find_column("plants", "country")->description, "A column.");
}

TEST_F(SeededDb, ProfileColumnUnknown) {
  EXPECT_EQ(code_of([&] { profile_column(*db_, "plants", "nope"); }), ErrorCode::UnknownColumn);
}

TEST_F(SeededDb, SqlToolSummariesMatchUntruncated) {
  for (const std::string sql : {"SELECT * FROM plants", "SELECT score, notes FROM inspections ORDER BY id",
                                "SELECT type, COUNT(*), AVG(gross_mw) FROM reactors GROUP BY type",
                                "SELECT * FROM reactors WHERE id < 0"}) {
    QueryResult full = db_->query(sql);
    TruncatedResult tr = execute_sql_tool(*db_, sql);
    EXPECT_EQ(tr.total_row_count, static_cast<std::int64_t>(full.rows.size()));
    EXPECT_EQ(tr.truncated, full.rows.size() > kDefaultMaxRows);
    EXPECT_EQ(tr.rows.size(), std::min(full.rows.size(), kDefaultMaxRows));
    ASSERT_EQ(tr.summary.size(), full.columns.size());
    for (std::size_t c = 0; c < full.columns.size(); ++c) {
      std::int64_t nulls = 0, non_null = 0;
      bool numeric = true;
      std::optional<double> lo, hi;
      for (const auto& row : full.rows) {
        if (is_null(row[c])) {
          ++nulls;
          continue;
        }
        ++non_null;
        if (!is_numeric(row[c])) {
          numeric = false;
          continue;
        }
        double d = *as_double(row[c]);
        lo = lo ? std::min(*lo, d) : d;
        hi = hi ? std::max(*hi, d) : d;
      }
      numeric = numeric && non_null > 0;
      const auto& s = tr.summary[c];
      EXPECT_EQ(s.column, full.columns[c]);
      EXPECT_EQ(s.nulls, nulls);
      EXPECT_EQ(s.non_null, non_null);
      EXPECT_EQ(s.numeric, numeric) << sql << " " << s.column;
      if (numeric) {
        EXPECT_DOUBLE_EQ(*s.min, *lo);
        EXPECT_DOUBLE_EQ(*s.max, *hi);
      }
    }
    auto unlimited = execute_sql_tool(*db_, sql, std::nullopt);
    EXPECT_EQ(unlimited.rows.size(), full.rows.size());
    EXPECT_FALSE(unlimited.truncated);
  }
  auto bad = execute_sql_tool(*db_, "SELECT missing FROM plants");
  ASSERT_TRUE(bad.error);
  EXPECT_EQ(bad.error->sqlstate, "42703");
  EXPECT_NE(bad.to_text().find("ERROR"), std::string::npos);
  auto text = execute_sql_tool(*db_, "SELECT * FROM inspections").to_text();
  EXPECT_NE(text.find("showing 50 of 400 rows"), std::string::npos);
}

TEST(Jaccard, WorkedValues) {
  EXPECT_DOUBLE_EQ(jaccard_containment("north america", "north america region", 1), 1.0);
  EXPECT_DOUBLE_EQ(jaccard_containment("latin america", "north america region", 1), 0.5);
  EXPECT_DOUBLE_EQ(jaccard_containment("latin america", "north america region", 2), 1.0 / 3.0);
  EXPECT_EQ(code_of([] { jaccard_containment("  ", "x"); }), ErrorCode::EmptyQuery);
}

TEST(Jaccard, SubsetGivesOne) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> vocab{"north", "south", "plant", "reactor", "water", "grid", "coal", "wind"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> doc(len(rng) + 2);
    for (auto& w : doc) w = vocab[pick(rng)];
    std::size_t a = std::uniform_int_distribution<std::size_t>(0, doc.size() - 1)(rng);
    std::size_t b = std::uniform_int_distribution<std::size_t>(a, doc.size() - 1)(rng);
    std::string q, d;
    for (std::size_t i = a; i <= b; ++i) q += doc[i] + " ";
    for (const auto& w : doc) d += w + " ";
    for (int order = 1; order <= 3; ++order) {
      auto qg = token_ngrams(q, order), dg = token_ngrams(d, order);
      ASSERT_TRUE(std::includes(dg.begin(), dg.end(), qg.begin(), qg.end()));
      EXPECT_DOUBLE_EQ(jaccard_containment(q, d, order), 1.0) << q << " | " << d;
    }
  }
}

TEST(Fuzzy, LexicalAndSemanticChannels) {
  std::vector<std::string> values{"Operational", "Shut down", "Under construction", "Planned"};
  auto lex = fuzzy_match(values, "shut", 2);
  ASSERT_FALSE(lex.empty());
  EXPECT_EQ(lex[0].value, "Shut down");
  EXPECT_EQ(lex[0].channel, MatchChannel::Lexical);

  HashEmbedder emb(64, {{"running", "operational"}});
  auto sem = fuzzy_match(values, "running", 1, &emb);
  ASSERT_FALSE(sem.empty());
  EXPECT_EQ(sem[0].value, "Operational");
  EXPECT_EQ(sem[0].channel, MatchChannel::Semantic);
  EXPECT_EQ(code_of([&] { fuzzy_match(values, "x", 0); }), ErrorCode::PreconditionViolation);
}

TEST_F(SeededDb, FuzzyOverProfileAndDatabase) {
  DbProfile prof = profile_db(*db_);
  auto hits = fuzzy_enum(prof, "united states", 3);
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].value, "United States");
  EXPECT_EQ(hits[0].detail, "plants.country");
  auto direct = fuzzy_enum(*db_, "reactors", "type", "bwr", 1);
  ASSERT_EQ(direct.size(), 1u);
  EXPECT_EQ(direct[0].value, "BWR");
  EXPECT_EQ(code_of([&] { fuzzy_enum(*db_, "reactors", "nope", "x", 1); }), ErrorCode::UnknownColumn);
  auto cols = fuzzy_column(prof, "gross mw", 2);
  ASSERT_FALSE(cols.empty());
  EXPECT_EQ(cols[0].value, "reactors.gross_mw");
}

TEST_F(SeededDb, ExportsUkfRecords) {
  DbProfile prof = profile_db(*db_);
  auto records = profile_to_ukf(prof);
  std::set<std::string> ids;
  int tables = 0, columns = 0, enums = 0;
  for (const auto& r : records) {
    EXPECT_TRUE(ids.insert(r.id).second);
    if (r.type == "table") ++tables;
    if (r.type == "column") ++columns;
    if (r.type == "enum") ++enums;
  }
  EXPECT_EQ(tables, 3);
  EXPECT_EQ(columns, 14);
  EXPECT_EQ(enums, 5 + 3 + 4);  // country, status, reactor type
}
