#include <gtest/gtest.h>

#include <cstdlib>

#include "kbsql/database.hpp"
#include "kbsql/embedding.hpp"
#include "kbsql/llm.hpp"
#include "test_util.hpp"

using namespace kbsql;
using kbsql::testing::code_of;
using kbsql::testing::TempDir;

TEST(Database, QueryStreamAndSchema) {
  SqliteDatabase db(":memory:");
  db.execute_script(
      "CREATE TABLE a(id INTEGER PRIMARY KEY, v REAL, s TEXT);"
      "CREATE TABLE b(id INTEGER PRIMARY KEY, a_id INTEGER REFERENCES a(id));"
      "INSERT INTO a VALUES (1, 0.1, 'x'), (2, NULL, 'y');");
  auto r = db.query("SELECT id, v, s FROM a ORDER BY id");
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(std::get<std::int64_t>(r.rows[0][0]), 1);
  EXPECT_EQ(value_to_string(r.rows[0][1]), "0.1");
  EXPECT_TRUE(is_null(r.rows[1][1]));
  std::size_t n = 0;
  auto cols = db.query_stream("SELECT * FROM a", [&](const Row&) { ++n; });
  EXPECT_EQ(n, 2u);
  EXPECT_EQ(cols, (std::vector<std::string>{"id", "v", "s"}));
  EXPECT_EQ(db.tables(), (std::vector<std::string>{"a", "b"}));
  auto s = db.schema("b");
  ASSERT_EQ(s.columns.size(), 2u);
  EXPECT_TRUE(s.columns[0].is_pk);
  ASSERT_TRUE(s.columns[1].fk);
  EXPECT_EQ(s.columns[1].fk->ref_table, "a");
  EXPECT_EQ(code_of([&] { db.schema("zzz"); }), ErrorCode::UnknownColumn);
}

TEST(Database, SqlStates) {
  SqliteDatabase db(":memory:");
  db.execute_script("CREATE TABLE a(x INTEGER);");
  auto state = [&](const std::string& sql) {
    try {
      db.query(sql);
    } catch (const SqlFailure& f) {
      return f.error().sqlstate;
    }
    return std::string("none");
  };
  EXPECT_EQ(state("SELEC x FROM a"), "42601");
  EXPECT_EQ(state("SELECT x FROM nope"), "42P01");
  EXPECT_EQ(state("SELECT y FROM a"), "42703");
  EXPECT_EQ(state("SELECT x FROM a"), "none");
}

TEST(Database, OpenRules) {
  TempDir dir;
  auto missing = (dir.path() / "none.db").string();
  EXPECT_EQ(code_of([&] { open_database("sqlite:" + missing); }), ErrorCode::ConnectionFailed);
  EXPECT_EQ(code_of([&] { open_database("postgresql://host/db"); }), ErrorCode::ConnectionFailed);
  {
    SqliteDatabase create(missing);
    create.execute_script("CREATE TABLE t(x);");
  }
  auto db = open_database(missing, true);
  EXPECT_EQ(db->tables(), std::vector<std::string>{"t"});
  EXPECT_EQ(quote_identifier("a\"b"), "\"a\"\"b\"");
}

TEST(Llm, ScriptedPrecedence) {
  std::vector<ChatMessage> msgs{{"user", "hello world"}};
  LlmParams params;
  params.model = "gen";
  json fixture{{"responses", {{request_digest(msgs, params), "by digest"}}},
               {"rules", json::array({{{"contains", "world"}, {"text", "by rule"}},
                                      {{"contains", "boom"}, {"fail", true}}})},
               {"default", "fallback"}};
  ScriptedClient client(fixture);
  EXPECT_EQ(client.complete(msgs, params).text, "by digest");
  params.sample = 1;
  EXPECT_EQ(client.complete(msgs, params).text, "by rule");
  EXPECT_EQ(client.complete({{"user", "other"}}, params).text, "fallback");
  EXPECT_EQ(code_of([&] { client.complete({{"user", "boom"}}, params); }), ErrorCode::ProviderUnavailable);
  EXPECT_EQ(client.call_count(), 4u);
}

TEST(Llm, RecordingReplays) {
  auto inner = std::make_shared<ScriptedClient>();
  inner->set_default({"answer", 0});
  RecordingClient rec(inner);
  std::vector<ChatMessage> msgs{{"system", "s"}, {"user", "q"}};
  rec.complete(msgs, {});
  ScriptedClient replay(rec.fixture());
  EXPECT_EQ(replay.complete(msgs, {}).text, "answer");
}

TEST(Llm, LiveClientRefusedWhenNetworkDenied) {
  ASSERT_TRUE(network_denied());  // ctest sets the deny flag
  HttpLlmClient live({"http://127.0.0.1:9/v1/chat/completions", "k", 1});
  EXPECT_EQ(code_of([&] { live.complete({{"user", "x"}}, {}); }), ErrorCode::NetworkDenied);
}

TEST(Llm, FencedSql) {
  EXPECT_EQ(extract_fenced_sql("a\n```sql\nSELECT 1\n```\nb\n```sql\nSELECT 2;\n```"), "SELECT 2;");
  EXPECT_EQ(extract_fenced_sql("```\nSELECT 3\n```"), "SELECT 3");
  EXPECT_FALSE(extract_fenced_sql("no code here"));
}

TEST(Embedding, AliasesAndNormalization) {
  HashEmbedder e(32, {{"running", "operational"}});
  auto a = e.embed("running"), b = e.embed("Operational"), c = e.embed("closed");
  EXPECT_NEAR(cosine(a, b), 1.0, 1e-6);
  EXPECT_LT(cosine(a, c), 0.9);
  double norm = 0;
  for (float x : c) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-5);
  EXPECT_EQ(e.embed("").size(), 32u);
  EXPECT_EQ(e.embed("north america"), e.embed("north america"));
}
