#include "kbsql/sql_ast.hpp"

#include "kbsql/database.hpp"
#include "kbsql/eval.hpp"
#include "test_util.hpp"

using namespace kbsql;
using kbsql::testing::code_of;

namespace {

const char* kGold =
    R"(SELECT "Country" FROM "nuclear_power_plants" WHERE "Status" = "Operational" GROUP BY "Country" ORDER BY COUNT("Name") DESC LIMIT 10)";

std::shared_ptr<SqliteDatabase> plants_db() {
  auto db = std::make_shared<SqliteDatabase>(":memory:");
  db->execute_script(R"(
    CREATE TABLE nuclear_power_plants (Name TEXT, Country TEXT, Status TEXT, Capacity REAL, Year INTEGER);
    INSERT INTO nuclear_power_plants VALUES
      ('A1','France','Operational',900,1980), ('A2','France','Operational',1300,1987),
      ('B1','Japan','Shutdown',460,1971), ('B2','Japan','Operational',1100,1994),
      ('C1','United States','Operational',1200,1975), ('C2','United States','Under Construction',NULL,NULL),
      ('D1','Germany','Shutdown',1400,1989), ('E1','China','Operational',1000,2010),
      ('E2','China','Operational',1100,2015), ('E3','China','Planned',NULL,NULL);
    CREATE TABLE countries (name TEXT PRIMARY KEY, region TEXT);
    INSERT INTO countries VALUES ('France','Europe'),('Japan','Asia'),('United States','North America'),
      ('Germany','Europe'),('China','Asia');
  )");
  return db;
}

}  // namespace

TEST(SqlAst, GoldQueryTree) {
  auto ast = parse_sql_ast(kGold);
  ASSERT_EQ(ast.statements.size(), 1u);
  const Select& s = *ast.statements[0].select;
  ASSERT_TRUE(s.core.from.has_value());
  EXPECT_TRUE(s.core.joins.empty());
  EXPECT_EQ(s.core.from->name.back().text, "nuclear_power_plants");
  EXPECT_EQ(s.core.group_by.size(), 1u);
  ASSERT_EQ(s.order_by.size(), 1u);
  EXPECT_EQ(s.order_by[0].direction.value_or(""), "DESC");
  ASSERT_TRUE(s.limit.has_value());
  EXPECT_EQ(s.limit->text, "10");

  auto ent = extract_entities(ast);
  EXPECT_EQ(ent.tables, std::set<std::string>{"nuclear_power_plants"});
  ASSERT_EQ(ent.predicates.size(), 1u);
  EXPECT_EQ(ent.predicates[0].column, "Status");
  EXPECT_EQ(ent.predicates[0].op, "=");
  EXPECT_EQ(ent.predicates[0].values, std::vector<std::string>{"Operational"});
  EXPECT_EQ(ent.group_keys, std::vector<std::string>{"\"Country\""});
  EXPECT_EQ(ent.order_keys, std::vector<std::string>{"COUNT(\"Name\")"});
  EXPECT_TRUE(ent.has_limit);
  std::set<ColumnUse> expected{{"nuclear_power_plants", "Country"},
                               {"nuclear_power_plants", "Status"},
                               {"nuclear_power_plants", "Name"}};
  EXPECT_EQ(ent.columns, expected);
}

TEST(SqlAst, MinimalAndErrors) {
  auto ast = parse_sql_ast("SELECT 1");
  ASSERT_EQ(ast.statements.size(), 1u);
  const Select& s = *ast.statements[0].select;
  EXPECT_FALSE(s.core.from.has_value());
  ASSERT_EQ(s.core.items.size(), 1u);
  EXPECT_EQ(s.core.items[0].expr.kind, Expr::Kind::Literal);
  EXPECT_EQ(to_sql(ast), "SELECT 1");

  for (const char* bad : {"SELEC 1", "", "SELECT", "SELECT 1 FROM", "SELECT (1", "SELECT 'x", "SELECT 1 2 3",
                          "SELECT a FROM t WHERE", "SELECT CASE END"}) {
    EXPECT_EQ(code_of([&] { parse_sql_ast(bad); }), ErrorCode::UnparsableSql) << bad;
  }
}

TEST(SqlAst, OpaqueSegments) {
  auto ast = parse_sql_ast("INSERT INTO t VALUES (1, ';'); SELECT group_concat(x, ',' ORDER BY y) FROM t");
  ASSERT_EQ(ast.statements.size(), 2u);
  EXPECT_FALSE(ast.statements[0].select);
  EXPECT_EQ(ast.statements[0].opaque, "INSERT INTO t VALUES (1, ';')");
  const auto& fn = ast.statements[1].select->core.items[0].expr;
  ASSERT_EQ(fn.kind, Expr::Kind::Function);
  ASSERT_EQ(fn.args.size(), 1u);
  EXPECT_EQ(fn.args[0].kind, Expr::Kind::Opaque);
  EXPECT_EQ(to_sql(*ast.statements[1].select), "SELECT group_concat(x, ',' ORDER BY y) FROM t");
}

TEST(SqlAst, AliasesCtesAndSubqueries) {
  auto ast = parse_sql_ast(R"(
    WITH big AS (SELECT Name, Country FROM nuclear_power_plants WHERE Capacity >= 1000)
    SELECT c.region, COUNT(*) AS n
    FROM big b JOIN countries AS c ON c.name = b.Country
    WHERE c.region IN ('Asia', 'Europe') AND b.Name LIKE 'E%'
      AND EXISTS (SELECT 1 FROM nuclear_power_plants p WHERE p.Country = c.name AND p.Year < 1990)
    GROUP BY c.region ORDER BY n DESC)");
  auto ent = extract_entities(ast);
  EXPECT_EQ(ent.tables, (std::set<std::string>{"countries", "nuclear_power_plants"}));
  EXPECT_TRUE(ent.columns.count({"countries", "region"}));
  EXPECT_TRUE(ent.columns.count({"nuclear_power_plants", "Capacity"}));
  EXPECT_TRUE(ent.columns.count({"nuclear_power_plants", "Year"}));
  EXPECT_TRUE(ent.columns.count({"", "Name"}));  // through the CTE
  EXPECT_FALSE(ent.columns.count({"countries", "n"}));
  std::map<std::string, std::vector<std::string>> preds;
  for (const auto& p : ent.predicates) preds[p.table + "." + p.column + " " + p.op] = p.values;
  EXPECT_EQ(preds.at("nuclear_power_plants.Capacity >="), std::vector<std::string>{"1000"});
  EXPECT_EQ(preds.at("countries.region IN"), (std::vector<std::string>{"Asia", "Europe"}));
  EXPECT_EQ(preds.at("nuclear_power_plants.Year <"), std::vector<std::string>{"1990"});
  EXPECT_EQ(preds.count(".Name LIKE"), 1u);
  EXPECT_EQ(ent.order_keys, std::vector<std::string>{"n"});
  EXPECT_FALSE(ent.has_limit);
}

TEST(SqlAst, ReversedLiteralComparison) {
  auto ent = extract_entities(parse_sql_ast("SELECT * FROM t WHERE 5 < x AND y = 'it''s'"));
  ASSERT_EQ(ent.predicates.size(), 2u);
  EXPECT_EQ(ent.predicates[0].op, ">");
  EXPECT_EQ(ent.predicates[0].column, "x");
  EXPECT_EQ(ent.predicates[1].values, std::vector<std::string>{"it's"});
}

TEST(SqlAst, RoundTripCorpus) {
  auto db = plants_db();
  const std::vector<std::string> corpus = {
      kGold,
      "SELECT 1",
      "select name, capacity from nuclear_power_plants where capacity > 1000 order by capacity desc, name",
      "SELECT Country, COUNT(*) FROM nuclear_power_plants GROUP BY Country HAVING COUNT(*) > 1 ORDER BY 2 DESC, 1",
      "SELECT DISTINCT Status FROM nuclear_power_plants ORDER BY Status",
      "SELECT p.Name, c.region FROM nuclear_power_plants p LEFT JOIN countries c ON p.Country = c.name ORDER BY 1",
      "SELECT p.Name FROM nuclear_power_plants AS p, countries AS c WHERE p.Country = c.name AND c.region = 'Asia' "
      "ORDER BY p.Name",
      "SELECT Name FROM nuclear_power_plants WHERE Year BETWEEN 1980 AND 1995 OR Year IS NULL ORDER BY Name",
      "SELECT Name FROM nuclear_power_plants WHERE Country NOT IN ('China', 'Japan') AND Name NOT LIKE 'D%' "
      "ORDER BY Name",
      "SELECT Name, CASE WHEN Capacity >= 1000 THEN 'large' WHEN Capacity IS NULL THEN 'n/a' ELSE 'small' END AS size "
      "FROM nuclear_power_plants ORDER BY Name",
      "SELECT CASE Status WHEN 'Operational' THEN 1 ELSE 0 END, Name FROM nuclear_power_plants ORDER BY Name",
      "SELECT CAST(Capacity AS INTEGER) / 100, -Year + 1, Name || '-' || Country FROM nuclear_power_plants "
      "ORDER BY Name",
      "WITH per AS (SELECT Country, SUM(Capacity) AS total FROM nuclear_power_plants GROUP BY Country) "
      "SELECT Country FROM per WHERE total = (SELECT MAX(total) FROM per)",
      "WITH RECURSIVE n(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM n WHERE x < 5) SELECT SUM(x) FROM n",
      "SELECT Name, RANK() OVER (PARTITION BY Country ORDER BY Capacity DESC) AS r FROM nuclear_power_plants "
      "ORDER BY Name",
      "SELECT Name, SUM(Capacity) OVER (ORDER BY Name ROWS BETWEEN 1 PRECEDING AND CURRENT ROW) "
      "FROM nuclear_power_plants ORDER BY Name",
      "SELECT Country FROM nuclear_power_plants WHERE Status = 'Shutdown' UNION SELECT name FROM countries "
      "WHERE region = 'Asia' ORDER BY 1",
      "SELECT Country FROM nuclear_power_plants INTERSECT SELECT name FROM countries WHERE region = 'Europe'",
      "SELECT name FROM countries EXCEPT SELECT Country FROM nuclear_power_plants WHERE Status = 'Operational'",
      "SELECT name FROM countries c WHERE NOT EXISTS (SELECT 1 FROM nuclear_power_plants p "
      "WHERE p.Country = c.name AND p.Status = 'Planned') ORDER BY name",
      "SELECT t.Country, t.cnt FROM (SELECT Country, COUNT(*) AS cnt FROM nuclear_power_plants GROUP BY Country) AS t "
      "WHERE t.cnt >= 2 ORDER BY t.cnt DESC, t.Country",
      "SELECT Name FROM nuclear_power_plants ORDER BY Year DESC NULLS LAST, Name LIMIT 3 OFFSET 2",
      "SELECT Name FROM nuclear_power_plants ORDER BY Name LIMIT 2, 3",
      "SELECT COUNT(DISTINCT Country), AVG(Capacity), MIN(Year) FROM nuclear_power_plants",
      "SELECT Name FROM nuclear_power_plants WHERE (Country, Status) IN (VALUES ('China', 'Planned'))",
      "SELECT Name FROM nuclear_power_plants WHERE (Capacity > 1000 OR Year < 1980) AND NOT Status = 'Shutdown' "
      "ORDER BY Name",
      "SELECT \"Name\" FROM \"nuclear_power_plants\" WHERE \"Name\" GLOB 'A*' ORDER BY 1",
      "SELECT [Name], `Country` FROM nuclear_power_plants WHERE Capacity IS NOT NULL ORDER BY 1",
      "SELECT COUNT(*) FILTER (WHERE Status = 'Operational') FROM nuclear_power_plants",
      "SELECT Name FROM nuclear_power_plants JOIN countries USING (name) ORDER BY 1",
      "/* header */ SELECT Name -- trailing\nFROM nuclear_power_plants WHERE Year >= 2000 ORDER BY Name;",
      "SELECT DATE '2020-01-01' IS NOT NULL, 1.5e3, .5, 'a''b'",
  };
  for (const auto& sql : corpus) {
    SCOPED_TRACE(sql);
    SqlAst ast;
    try {
      ast = parse_sql_ast(sql);
    } catch (const Error& e) {
      // Constructs outside the subset still have to fail cleanly.
      EXPECT_EQ(e.code(), ErrorCode::UnparsableSql);
      continue;
    }
    std::string once = to_sql(ast);
    EXPECT_EQ(to_sql(parse_sql_ast(once)), once) << "reserialization must be idempotent";
    bool ordered = detect_ordered(sql);
    ExecutionResult a, b;
    try {
      a = ExecutionResult::from_query(db->query(sql));
    } catch (const SqlFailure& f) {
      a = ExecutionResult::failure(f.error());
    }
    try {
      b = ExecutionResult::from_query(db->query(once));
    } catch (const SqlFailure& f) {
      b = ExecutionResult::failure(f.error());
    }
    EXPECT_EQ(a.error.has_value(), b.error.has_value()) << once;
    if (!a.error && !b.error) EXPECT_TRUE(exact_ex(b, a, ordered)) << once;
  }
}
