#include <gtest/gtest.h>

#include <set>

#include "chartinstruct/corpus.hpp"
#include "chartinstruct/error.hpp"
#include "chartinstruct/rng.hpp"
#include "test_support.hpp"

using namespace chartinstruct;
using namespace chartinstruct::corpus;

namespace {

double number_at(const DataTable& t, std::size_t r, std::size_t c) { return std::get<NumberCell>(t.rows[r][c]).value; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::Config;
}

std::string table_line(const std::string& id, const std::string& table, const std::string& extra = "") {
  nlohmann::json j = {{"id", id}, {"source", "s"}, {"title", "T"}, {"table", table}};
  if (!extra.empty()) j["chart_type"] = extra;
  return j.dump();
}

ChartRecord record(std::string id, std::string source = "s", std::optional<ChartType> type = {}) {
  ChartRecord r;
  r.id = std::move(id);
  r.source = std::move(source);
  r.table = parse_data_table("A\tB\n1\t2");
  r.chart_type = type;
  return r;
}

// Tables whose cells survive rendering: words without edge spaces or trailing
// commas, and finite numbers with an optional unit.
DataTable random_table(Rng& rng) {
  static const char* words[] = {"Characteristic", "Female", "Male", "North America", "2013/14", "-", "n/a", "Q1 2020"};
  DataTable t;
  const auto cols = 1 + rng.below(5);
  for (std::size_t c = 0; c < cols; ++c) t.header.push_back(words[rng.below(8)] + std::to_string(c));
  const auto rows = 1 + rng.below(6);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Cell> row;
    for (std::size_t c = 0; c < cols; ++c) {
      if (rng.below(3) == 0) {
        row.emplace_back(std::string(words[rng.below(8)]));
      } else {
        const double v = (static_cast<double>(rng.below(2000000)) - 1000000.0) / std::pow(10.0, rng.below(4));
        static const char* units[] = {"", "%", "$"};
        row.emplace_back(NumberCell{v, units[rng.below(3)]});
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

TEST(DataTable, AngolaCommaSpaceStyle) {
  const auto t = parse_data_table("Characteristic, Female, Male\n2019, 16.08, 15.74");
  EXPECT_EQ(t.header, (std::vector<std::string>{"Characteristic", "Female", "Male"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(number_at(t, 0, 1), 16.08);
  EXPECT_DOUBLE_EQ(number_at(t, 0, 2), 15.74);
}

TEST(DataTable, TabDetected) {
  const auto t = parse_data_table("A\tB\n1\t2");
  EXPECT_EQ(t.header, (std::vector<std::string>{"A", "B"}));
  EXPECT_DOUBLE_EQ(number_at(t, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(number_at(t, 0, 1), 2.0);
}

TEST(DataTable, MixedCommaTabCells) {
  const auto t = parse_data_table("Characteristic,\tFemale,\tMale\n2019,\t16.08,\t15.74");
  EXPECT_EQ(t.header, (std::vector<std::string>{"Characteristic", "Female", "Male"}));
  EXPECT_DOUBLE_EQ(number_at(t, 0, 2), 15.74);
}

TEST(DataTable, MultiSpaceColumns) {
  const auto t = parse_data_table("Year   Sales  Share\n2019   1,200  40%");
  EXPECT_EQ(t.header.size(), 3u);
  EXPECT_DOUBLE_EQ(number_at(t, 0, 1), 1200.0);
  EXPECT_EQ(std::get<NumberCell>(t.rows[0][2]).unit, "%");
}

TEST(DataTable, RaggedRowNamesLine) {
  try {
    parse_data_table("A, B\n1, 2, 3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RaggedRow);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(DataTable, TooShortIsEmptyInput) {
  EXPECT_EQ(code_of([] { parse_data_table(""); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code_of([] { parse_data_table("A\tB\n\n"); }), ErrorCode::EmptyInput);
}

TEST(DataTable, SerializeSingleCellAndUnits) {
  DataTable t;
  t.header = {"X"};
  t.rows = {{NumberCell{1.0, ""}}};
  EXPECT_EQ(serialize_data_table(t), "X\n1");
  EXPECT_EQ(render_cell(NumberCell{16.08, "%"}), "16.08%");
  EXPECT_EQ(render_cell(NumberCell{-5.5, "$"}), "-$5.5");
}

TEST(DataTable, AngolaRoundTrip) {
  const auto t = parse_data_table("Characteristic, Female, Male\n2019, 16.08, 15.74");
  const auto s = serialize_data_table(t);
  EXPECT_EQ(s, "Characteristic\tFemale\tMale\n2019\t16.08\t15.74");
  EXPECT_EQ(parse_data_table(s), t);
}

TEST(DataTable, RoundTripProperty) {
  Rng rng(20240601);
  for (int i = 0; i < 500; ++i) {
    const auto t = random_table(rng);
    const auto text = serialize_data_table(t);
    EXPECT_EQ(parse_data_table(text), t) << text;
  }
}

TEST(LoadCorpus, ThreeValidLines) {
  const auto text = table_line("a", "A\tB\n1\t2") + "\n" + table_line("b", "A\tB\n1\t2") + "\n" +
                    table_line("c", "A\tB\n1\t2") + "\n";
  const auto loaded = parse_corpus(text);
  EXPECT_EQ(loaded.records.size(), 3u);
  EXPECT_TRUE(loaded.report.failures.empty());
  EXPECT_EQ(loaded.report.line_count, 3u);
}

TEST(LoadCorpus, RaggedLineReported) {
  const auto text = table_line("a", "A\tB\n1\t2") + "\n" + table_line("b", "A\tB\n1\t2") + "\n" +
                    table_line("c", "A, B\n1, 2, 3") + "\n";
  const auto loaded = parse_corpus(text);
  EXPECT_EQ(loaded.records.size(), 2u);
  ASSERT_EQ(loaded.report.failures.size(), 1u);
  EXPECT_EQ(loaded.report.failures[0].line, 3u);
  EXPECT_EQ(loaded.report.failures[0].reason.rfind("RaggedRow", 0), 0u);
}

TEST(LoadCorpus, DuplicateIdKeepsFirst) {
  const auto text = table_line("a", "A\tB\n1\t2") + "\n" + table_line("a", "A\tB\n3\t4");
  const auto loaded = parse_corpus(text);
  ASSERT_EQ(loaded.records.size(), 1u);
  EXPECT_DOUBLE_EQ(number_at(loaded.records[0].table, 0, 0), 1.0);
  ASSERT_EQ(loaded.report.failures.size(), 1u);
  EXPECT_EQ(loaded.report.failures[0].line, 2u);
  EXPECT_EQ(loaded.report.failures[0].reason.rfind("DuplicateId", 0), 0u);
}

TEST(LoadCorpus, ConservationOverMixedLines) {
  const std::string text = table_line("a", "A\tB\n1\t2") + "\nnot json\n{\"id\":\"x\"}\n\n" +
                           table_line("b", "A\tB\n1\t2", "bogus") + "\n" + table_line("c", "A\tB\n1\t2", "pie");
  const auto loaded = parse_corpus(text);
  EXPECT_EQ(loaded.records.size() + loaded.report.failures.size(), loaded.report.line_count);
  EXPECT_EQ(loaded.records.size(), 2u);
}

TEST(LoadCorpus, FixtureCorpusLoads) {
  const auto loaded = load_corpus(testsupport::data_path("corpus.jsonl"));
  EXPECT_EQ(loaded.records.size(), 5u);
  EXPECT_TRUE(loaded.report.failures.empty());
}

TEST(LoadCorpus, MissingFileIsUnreadable) {
  EXPECT_EQ(code_of([] { load_corpus("/nonexistent/corpus.jsonl"); }), ErrorCode::FileUnreadable);
}

TEST(Splits, TenRecordsEightOneOne) {
  std::vector<ChartRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(record("r" + std::to_string(i)));
  const auto out = assign_splits(recs, {}, 7);
  const auto stats = corpus_stats(out);
  EXPECT_EQ(stats.per_split.at("train"), 8u);
  EXPECT_EQ(stats.per_split.at("val"), 1u);
  EXPECT_EQ(stats.per_split.at("test"), 1u);
}

TEST(Splits, SingleRecordGoesToTrain) {
  const std::vector<ChartRecord> recs = {record("only")};
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_EQ(assign_splits(recs, {}, seed)[0].split, Split::Train);
}

TEST(Splits, DeterministicPerSeed) {
  std::vector<ChartRecord> recs;
  for (int i = 0; i < 37; ++i) recs.push_back(record("r" + std::to_string(i)));
  EXPECT_EQ(assign_splits(recs, {}, 3), assign_splits(recs, {}, 3));
  EXPECT_NE(assign_splits(recs, {}, 3), assign_splits(recs, {}, 4));
}

TEST(Splits, CountsSumToNForManySizes) {
  for (std::size_t n = 0; n < 200; ++n) {
    const auto c = split_counts(n, {0.7, 0.2, 0.1});
    EXPECT_EQ(c[0] + c[1] + c[2], n);
  }
}

TEST(Splits, BadRatios) {
  EXPECT_EQ(code_of([] { split_counts(10, {0.5, 0.5, 0.5}); }), ErrorCode::BadRatios);
  EXPECT_EQ(code_of([] { split_counts(10, {1.0, 0.0, 0.0}); }), ErrorCode::BadRatios);
}

TEST(Stats, Counts) {
  EXPECT_EQ(corpus_stats({}).record_count, 0u);
  EXPECT_TRUE(corpus_stats({}).per_source.empty());
  const std::vector<ChartRecord> recs = {record("a", "x", ChartType::Bar), record("b", "x", ChartType::Bar),
                                         record("c", "y", ChartType::Line)};
  const auto s = corpus_stats(recs);
  EXPECT_EQ(s.per_chart_type, (std::map<std::string, std::size_t>{{"bar", 2}, {"line", 1}}));
  EXPECT_EQ(s.per_source.at("x") + s.per_source.at("y"), 3u);
  EXPECT_EQ(s.per_split.at("unassigned"), 3u);
}

TEST(Records, JsonLineRoundTrip) {
  auto r = record("a", "x", ChartType::Pie);
  r.split = Split::Val;
  r.title = "Some \"quoted\" title";
  const auto back = parse_corpus(record_to_json_line(r));
  ASSERT_EQ(back.records.size(), 1u);
  EXPECT_EQ(back.records[0], r);
}
