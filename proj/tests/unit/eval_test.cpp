#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <random>

#include "../oracles/eval_oracle.hpp"
#include "kbsql/eval.hpp"
#include "test_util.hpp"

using namespace kbsql;
using kbsql::testing::code_of;

namespace {

Cell C(const char* s) { return canonicalize_cell(Value(std::string(s))); }
Cell C(std::int64_t v) { return canonicalize_cell(Value(v)); }
Cell C(double v) { return canonicalize_cell(Value(v)); }

ExecutionResult to_result(const oracle::Rows& rows) {
  ExecutionResult r;
  for (const auto& row : rows) {
    CellRow cells;
    for (const auto& c : row) cells.push_back(canonicalize_cell(Value(c)));
    r.rows.push_back(cells);
  }
  if (!rows.empty()) r.column_names.resize(rows[0].size(), "c");
  return r;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> u(0, 1);
  Matrix w(n, std::vector<double>(m));
  for (auto& row : w)
    for (auto& x : row) x = u(rng);
  return w;
}

// Disjoint rows, pred reversed against an ordered gold.
std::pair<ExecutionResult, ExecutionResult> crossing_fixture() {
  ExecutionResult gold, pred;
  gold.column_names = pred.column_names = {"k"};
  gold.rows = {{C("first")}, {C("second")}};
  pred.rows = {{C("second")}, {C("first")}};
  return {pred, gold};
}

}  // namespace

TEST(Canonicalize, NumericForms) {
  EXPECT_TRUE(cells_equal(C("3.50"), C(3.5)));
  EXPECT_TRUE(cells_equal(C(std::int64_t{2}), C(2.0)));
  EXPECT_TRUE(cells_equal(C(1e9), C(1e9 + 1e-4)));
  EXPECT_FALSE(cells_equal(C(1.0), C(1.01)));
}

TEST(Canonicalize, NullAndText) {
  EXPECT_FALSE(cells_equal(canonicalize_cell(Value{}), C("")));
  EXPECT_TRUE(cells_equal(canonicalize_cell(Value{}), canonicalize_cell(json(nullptr))));
  Cell a = C(" a ");
  EXPECT_EQ(a.kind, Cell::Kind::Text);
  EXPECT_EQ(a.text, "a");
}

TEST(RowFbeta, WorkedValues) {
  CellRow p{C(std::int64_t{1}), C("a")};
  CellRow g{C(std::int64_t{1}), C("a"), C("b")};
  EXPECT_NEAR(row_fbeta(p, g, 1.0), 0.8, 1e-12);
  EXPECT_NEAR(row_fbeta(p, g, 3.0), 20.0 / 29.0, 1e-12);
  EXPECT_DOUBLE_EQ(row_fbeta(g, g, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(row_fbeta({C("x")}, {C("y")}, 1.0), 0.0);
}

TEST(RowFbeta, Errors) {
  EXPECT_EQ(code_of([] { row_fbeta({}, {C("a")}); }), ErrorCode::EmptyRow);
  EXPECT_EQ(code_of([] { row_fbeta({C("a")}, {C("a")}, 0.0); }), ErrorCode::PreconditionViolation);
}

TEST(RowFbeta, DuplicateCellsUseSetMembership) {
  // both copies of "a" hit g's cell set; only "a" of g is hit by p
  EXPECT_NEAR(row_fbeta({C("a"), C("a")}, {C("a"), C("b")}, 1.0), 2 * 1.0 * 0.5 / 1.5, 1e-12);
}

TEST(RowFbeta, BetaMonotonicity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = oracle::random_row(rng, 5), g = oracle::random_row(rng, 5);
    auto rp = to_result({p}).rows[0], rg = to_result({g}).rows[0];
    std::set<std::string> ps(p.begin(), p.end()), gs(g.begin(), g.end());
    double hp = 0, hg = 0;
    for (auto& c : p) hp += gs.count(c);
    for (auto& c : g) hg += ps.count(c);
    double pre = hp / p.size(), rec = hg / g.size();
    if (pre == 0 || pre == rec) continue;
    double lo = row_fbeta(rp, rg, 0.5), hi = row_fbeta(rp, rg, 2.0);
    if (pre < rec) EXPECT_LT(lo, hi);
    else EXPECT_GT(lo, hi);
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 1.0);
  }
}

TEST(Wbm, SmallCases) {
  EXPECT_DOUBLE_EQ(wbm({{0.8}}), 0.8);
  EXPECT_DOUBLE_EQ(wbm({{1, 0}, {0, 1}}), 2.0);
  std::vector<int> assign;
  EXPECT_DOUBLE_EQ(wbm({{0, 1}, {1, 0}}, &assign), 2.0);
  EXPECT_EQ(assign, (std::vector<int>{1, 0}));
  // rectangular both ways
  EXPECT_DOUBLE_EQ(wbm({{0.2, 0.9, 0.1}}), 0.9);
  EXPECT_DOUBLE_EQ(wbm({{0.2}, {0.9}, {0.1}}), 0.9);
}

TEST(Wbm, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + trial % 7, m = 1 + (trial / 7) % 7;
    auto w = random_matrix(rng, n, m);
    double brute = oracle::max_matching(w);
    EXPECT_NEAR(wbm(w), brute, 1e-9) << n << "x" << m;
    double ni = wbm_ni(w);
    EXPECT_NEAR(ni, oracle::max_monotone_matching(w), 1e-9);
    EXPECT_LE(ni, wbm(w) + 1e-12);
  }
}

TEST(WbmNi, Examples) {
  Matrix cross{{0, 1}, {1, 0}};
  EXPECT_DOUBLE_EQ(wbm(cross), 2.0);
  EXPECT_DOUBLE_EQ(wbm_ni(cross), 1.0);
  Matrix diag{{0.5, 0, 0}, {0, 0.7, 0}, {0, 0, 0.2}};
  EXPECT_DOUBLE_EQ(wbm_ni(diag), wbm(diag));
  EXPECT_DOUBLE_EQ(wbm_ni({{0.1, 0.6, 0.3}}), 0.6);
}

TEST(DetectOrdered, Examples) {
  EXPECT_TRUE(detect_ordered("SELECT a FROM t ORDER BY a"));
  EXPECT_FALSE(detect_ordered("SELECT * FROM (SELECT a FROM t ORDER BY a) x"));
  EXPECT_FALSE(detect_ordered("SELECT a FROM t"));
  EXPECT_TRUE(detect_ordered("select a from t order\n by a desc limit 3"));
  EXPECT_FALSE(detect_ordered("SELECT 'order by' FROM t"));
  EXPECT_FALSE(detect_ordered("SELECT a AS \"order by\" FROM t -- order by a"));
  EXPECT_TRUE(detect_ordered("SELECT a FROM (t"));  // unbalanced: conservative
}

TEST(Bfbeta, Examples) {
  auto [pred, gold] = crossing_fixture();
  EXPECT_NEAR(bfbeta_score(pred, gold, false), 1.0, 1e-12);
  EXPECT_NEAR(bfbeta_score(pred, gold, true), 0.5, 1e-12);
  EXPECT_NEAR(bfbeta_score(pred, gold, "SELECT k FROM t ORDER BY k"), 0.5, 1e-12);
  EXPECT_NEAR(bfbeta_score(gold, gold, false), 1.0, 1e-12);

  ExecutionResult one = gold;
  one.rows.resize(1);
  EXPECT_NEAR(bfbeta_score(one, gold, false), 0.5, 1e-12);

  ExecutionResult empty;
  EXPECT_DOUBLE_EQ(bfbeta_score(empty, empty, false), 1.0);
  EXPECT_DOUBLE_EQ(bfbeta_score(empty, gold, false), 0.0);
  EXPECT_DOUBLE_EQ(bfbeta_score(gold, empty, true), 0.0);
  EXPECT_DOUBLE_EQ(bfbeta_score(ExecutionResult::failure({"boom", "42601"}), gold, false), 0.0);
}

TEST(Bfbeta, OracleEquivalence) {
  std::mt19937_64 rng(1234);
  auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    auto p = oracle::random_rows(rng, 6, 5), g = oracle::random_rows(rng, 6, 5);
    double beta = trial % 3 == 0 ? 1.0 : (trial % 3 == 1 ? 2.0 : 0.5);
    auto rp = to_result(p), rg = to_result(g);
    ASSERT_NEAR(bfbeta_score(rp, rg, false, beta), oracle::bf(p, g, false, beta), 1e-9) << trial;
    ASSERT_NEAR(bfbeta_score(rp, rg, true, beta), oracle::bf(p, g, true, beta), 1e-9) << trial;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
}

TEST(Bfbeta, ColumnPermutationInvariance) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = oracle::random_rows(rng, 5, 4), g = oracle::random_rows(rng, 5, 4);
    auto q = p;
    for (auto& row : q) std::reverse(row.begin(), row.end());
    EXPECT_DOUBLE_EQ(bfbeta_score(to_result(p), to_result(g), false),
                     bfbeta_score(to_result(q), to_result(g), false));
  }
}

TEST(ExactEx, Examples) {
  auto [pred, gold] = crossing_fixture();
  EXPECT_TRUE(exact_ex(gold, gold, true));
  EXPECT_TRUE(exact_ex(pred, gold, false));
  EXPECT_FALSE(exact_ex(pred, gold, true));
  ExecutionResult extra = gold;
  extra.rows.push_back({C("third")});
  EXPECT_FALSE(exact_ex(extra, gold, false));
  ExecutionResult dup = gold;
  dup.rows[1] = dup.rows[0];
  EXPECT_FALSE(exact_ex(dup, gold, false));
  EXPECT_FALSE(exact_ex(ExecutionResult::failure({"x", ""}), gold, false));
}

TEST(ExactEx, FingerprintOrderSensitivity) {
  auto [pred, gold] = crossing_fixture();
  EXPECT_EQ(result_fingerprint(pred, false), result_fingerprint(gold, false));
  EXPECT_NE(result_fingerprint(pred, true), result_fingerprint(gold, true));
}

TEST(ExactEx, ImpliesPerfectBfbetaOnFixtures) {
  std::ifstream in(kbsql::testing::fixture("eval/ex_pairs.json"));
  json pairs = json::parse(in);
  ASSERT_EQ(pairs.size(), 50u);
  int exact_count = 0;
  for (const auto& pr : pairs) {
    auto pred = ExecutionResult::from_json(pr["pred"]);
    auto gold = ExecutionResult::from_json(pr["gold"]);
    for (bool ordered : {false, true}) {
      if (!exact_ex(pred, gold, ordered)) continue;
      ++exact_count;
      EXPECT_DOUBLE_EQ(bfbeta_score(pred, gold, ordered), 1.0) << pr["id"] << " ordered=" << ordered;
    }
  }
  EXPECT_GT(exact_count, 20);
}

TEST(BatchAccuracy, AggregatesAndErrors) {
  SqliteDatabase db(":memory:");
  db.execute_script(
      "CREATE TABLE t(a INTEGER, b TEXT);"
      "INSERT INTO t VALUES (1,'x'),(2,'y'),(3,'z');");
  std::vector<EvalPair> same{{"1", "SELECT a FROM t", "SELECT a FROM t"},
                             {"2", "SELECT b FROM t ORDER BY a", "SELECT b FROM t ORDER BY a"}};
  auto r = batch_accuracy(same, db);
  EXPECT_DOUBLE_EQ(r.ex, 1.0);
  EXPECT_DOUBLE_EQ(r.bfbeta, 1.0);

  std::vector<EvalPair> mixed{{"ok", "SELECT a FROM t", "SELECT a FROM t"},
                              {"bad", "SELECT nope FROM t", "SELECT a FROM t"}};
  r = batch_accuracy(mixed, db, 1.0, 2);
  EXPECT_DOUBLE_EQ(r.ex, 0.5);
  EXPECT_DOUBLE_EQ(r.bfbeta, 0.5);
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0].id, "ok");
  EXPECT_FALSE(r.items[1].error.empty());
  EXPECT_NE(r.to_csv().find("id,ex,bfbeta,error"), std::string::npos);

  std::vector<EvalPair> reversed{{"r", "SELECT a FROM t ORDER BY a DESC", "SELECT a FROM t ORDER BY a"}};
  r = batch_accuracy(reversed, db);
  EXPECT_DOUBLE_EQ(r.ex, 0.0);
  EXPECT_NEAR(r.bfbeta, 1.0 / 3.0, 1e-12);
}
