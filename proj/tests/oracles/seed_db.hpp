#pragma once

// Deterministic three-table database plus the raw column values it was built
// from, so statistics can be recomputed without going through the library.

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kbsql/database.hpp"

namespace oracle {

struct SeedColumn {
  std::string name;
  std::string decl;
  std::vector<kbsql::Value> values;
};

struct SeedTable {
  std::string name;
  std::vector<SeedColumn> columns;
  std::string extra_ddl;  // trailing constraints
};

inline std::string sql_literal(const kbsql::Value& v) {
  if (kbsql::is_null(v)) return "NULL";
  if (auto s = std::get_if<std::string>(&v)) {
    std::string out = "'";
    for (char c : *s) out += c == '\'' ? std::string("''") : std::string(1, c);
    return out + "'";
  }
  return kbsql::value_to_string(v);
}

inline std::vector<SeedTable> seed_tables(std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto chance = [&](double p) { return uniform(0, 1) < p; };

  const std::vector<std::string> countries{"France", "Japan", "United States", "Canada", "Korea"};
  const std::vector<std::string> statuses{"Operational", "Shut down", "Under construction"};
  const std::vector<std::string> types{"PWR", "BWR", "PHWR", "GCR"};
  const std::vector<std::string> words{"valve", "pump", "leak", "minor", "routine", "coolant", "seal", "alarm"};

  SeedTable plants{"plants", {}, ""};
  std::vector<kbsql::Value> id, name, country, capacity, commissioned, status;
  for (int i = 1; i <= 120; ++i) {
    id.emplace_back(std::int64_t{i});
    char buf[64];
    std::snprintf(buf, sizeof buf, "Plant %03d", i);
    name.emplace_back(std::string(buf));
    country.emplace_back(countries[pick(countries.size())]);
    if (chance(0.1)) capacity.emplace_back();
    else capacity.emplace_back(std::round(uniform(100, 4000) * 100) / 100);
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", 1960 + static_cast<int>(pick(60)), 1 + static_cast<int>(pick(12)),
                  1 + static_cast<int>(pick(28)));
    commissioned.emplace_back(std::string(buf));
    if (chance(0.05)) status.emplace_back();
    else status.emplace_back(statuses[pick(statuses.size())]);
  }
  plants.columns = {{"id", "INTEGER PRIMARY KEY", id},       {"name", "TEXT", name},
                    {"country", "TEXT", country},            {"capacity_mw", "REAL", capacity},
                    {"commissioned", "TEXT", commissioned},  {"status", "TEXT", status}};

  SeedTable reactors{"reactors", {}, ", FOREIGN KEY (plant_id) REFERENCES plants(id)"};
  std::vector<kbsql::Value> rid, plant_id, type, gross;
  for (int i = 1; i <= 300; ++i) {
    rid.emplace_back(std::int64_t{i});
    plant_id.emplace_back(static_cast<std::int64_t>(1 + pick(120)));
    type.emplace_back(types[pick(types.size())]);
    gross.emplace_back(static_cast<std::int64_t>(200 + pick(1400)));
  }
  reactors.columns = {{"id", "INTEGER PRIMARY KEY", rid},
                      {"plant_id", "INTEGER", plant_id},
                      {"type", "TEXT", type},
                      {"gross_mw", "INTEGER", gross}};

  SeedTable inspections{"inspections", {}, ", FOREIGN KEY (reactor_id) REFERENCES reactors(id)"};
  std::vector<kbsql::Value> iid, reactor_id, score, notes;
  for (int i = 1; i <= 400; ++i) {
    iid.emplace_back(std::int64_t{i});
    reactor_id.emplace_back(static_cast<std::int64_t>(1 + pick(300)));
    if (chance(0.15)) score.emplace_back();
    else score.emplace_back(uniform(0, 10));
    if (chance(0.2)) {
      notes.emplace_back();
    } else {
      std::string n = words[pick(words.size())] + " " + words[pick(words.size())] + " #" + std::to_string(i);
      notes.emplace_back(n);
    }
  }
  inspections.columns = {{"id", "INTEGER PRIMARY KEY", iid},
                         {"reactor_id", "INTEGER", reactor_id},
                         {"score", "REAL", score},
                         {"notes", "TEXT", notes}};
  return {plants, reactors, inspections};
}

inline std::string seed_script(const std::vector<SeedTable>& tables) {
  std::string sql = "PRAGMA foreign_keys=ON;BEGIN;";
  for (const auto& t : tables) {
    sql += "CREATE TABLE " + t.name + "(";
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      sql += (c ? ", " : "") + t.columns[c].name + " " + t.columns[c].decl;
    }
    sql += t.extra_ddl + ");";
    for (std::size_t r = 0; r < t.columns[0].values.size(); ++r) {
      sql += "INSERT INTO " + t.name + " VALUES (";
      for (std::size_t c = 0; c < t.columns.size(); ++c) sql += (c ? "," : "") + sql_literal(t.columns[c].values[r]);
      sql += ");";
    }
  }
  return sql + "COMMIT;";
}

}  // namespace oracle
