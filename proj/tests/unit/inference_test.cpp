#include <gtest/gtest.h>

#include "chartinstruct/error.hpp"
#include "chartinstruct/inference.hpp"
#include "test_support.hpp"

using namespace chartinstruct;
using namespace chartinstruct::inference;

namespace {

std::vector<corpus::ChartRecord> corpus_records() { return corpus::load_corpus(testsupport::data_path("corpus.jsonl")).records; }

const corpus::ChartRecord& angola(const std::vector<corpus::ChartRecord>& recs) {
  for (const auto& r : recs) {
    if (r.id == "angola_population") return r;
  }
  throw std::runtime_error("fixture missing");
}

BenchmarkItem item(std::string id, std::string instruction, std::string gold, Benchmark b = Benchmark::ChartQA) {
  return {std::move(id), "angola_population", std::move(instruction), std::move(gold), b};
}

void record(gateway::ReplayStore& store, const corpus::ChartRecord& rec, const BenchmarkItem& it, const std::string& text) {
  gateway::ChatResponse resp;
  resp.text = text;
  store.record({gateway::ModelTier::Standard, build_inference_prompt(rec, it.instruction)}, resp);
}

}  // namespace

TEST(Prompt, Layout) {
  const auto recs = corpus_records();
  const auto& a = angola(recs);
  const std::string q = "Is the female population larger in 2019?";
  const auto p = build_inference_prompt(a, q);
  EXPECT_EQ(p, a.title + "\n" + corpus::serialize_data_table(a.table) + "\n\n" + q);
  EXPECT_LT(p.find("16.08"), p.find(q));
  EXPECT_EQ(p, build_inference_prompt(a, q));
  try {
    build_inference_prompt(a, "  ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInstruction);
  }
}

TEST(Extract, TemplatePayload) {
  EXPECT_EQ(extract_final_answer("First subtract. The Answer is 3.7.", Benchmark::ChartQA), "3.7");
  EXPECT_EQ(extract_final_answer("DEFINE(d=43.4-39.7) then The Answer is d.", Benchmark::ChartQA), "3.7");
  EXPECT_EQ(extract_final_answer("Calculator(t = 34.1 + 10.5)\nThe Answer is t", Benchmark::ChartQA), "44.6");
  EXPECT_EQ(extract_final_answer("Looking at it...\nRefutes\n\n", Benchmark::ChartFC), "Refutes");
  EXPECT_EQ(extract_final_answer("DEFINE(x=1/0) The Answer is x.", Benchmark::ChartQA), "x");
  EXPECT_EQ(extract_final_answer("", Benchmark::ChartQA), "");
}

TEST(Extract, GenerationBenchmarksKeepWholeText) {
  const std::string text = "  The chart shows a rise.\nThe Answer is 5.  ";
  EXPECT_EQ(extract_final_answer(text, Benchmark::OpenCQA), "The chart shows a rise.\nThe Answer is 5.");
  EXPECT_EQ(extract_final_answer(text, Benchmark::Chart2Text), "The chart shows a rise.\nThe Answer is 5.");
}

TEST(Benchmark, LoadRejectsDuplicatesAndBadTags) {
  testsupport::TempDir dir;
  const std::string line = R"({"id":"q1","chart_id":"c","instruction":"i","gold":"g","benchmark":"chartqa"})";
  testsupport::write_text(dir / "ok.jsonl", line + "\n");
  EXPECT_EQ(load_benchmark(dir / "ok.jsonl").size(), 1u);
  testsupport::write_text(dir / "dup.jsonl", line + "\n" + line + "\n");
  EXPECT_THROW(load_benchmark(dir / "dup.jsonl"), Error);
  testsupport::write_text(dir / "tag.jsonl", R"({"id":"q","chart_id":"c","instruction":"i","benchmark":"vqa"})" "\n");
  EXPECT_THROW(load_benchmark(dir / "tag.jsonl"), Error);
}

TEST(Run, AllMatchingAndMissingFixture) {
  const auto recs = corpus_records();
  const auto& a = angola(recs);
  testsupport::TempDir dir;
  auto store = std::make_shared<gateway::ReplayStore>(dir.path());
  const std::vector<BenchmarkItem> items = {item("q1", "Female 2019?", "16.08"), item("q2", "Male 2019?", "15.74"),
                                            item("q3", "Which is larger?", "Female")};
  record(*store, a, items[0], "The Answer is 16.08.");
  record(*store, a, items[1], "DEFINE(m=15.74) The Answer is m.");
  record(*store, a, items[2], "female");
  gateway::Gateway gw(gateway::Mode::Replay, nullptr, store);
  const auto run = run_benchmark(items, recs, gw);
  ASSERT_EQ(run.scores.size(), 1u);
  EXPECT_EQ(run.scores[0].score, 1.0);
  EXPECT_EQ(run.scores[0].coverage, 1.0);

  const std::vector<BenchmarkItem> more = {items[0], item("q9", "Unrecorded?", "1")};
  const auto partial = run_benchmark(more, recs, gw);
  ASSERT_EQ(partial.predictions.size(), 1u);
  ASSERT_EQ(partial.failures.size(), 1u);
  EXPECT_EQ(partial.failures[0].id, "q9");
  EXPECT_NE(partial.failures[0].reason.find(partial.failures[0].fingerprint), std::string::npos);
  EXPECT_EQ(partial.scores[0].coverage, 0.5);
  EXPECT_EQ(partial.scores[0].score, 1.0);
  EXPECT_EQ(partial.predictions.size() + partial.failures.size(), more.size());
}

TEST(Run, FactCheckingVerdictsNormalized) {
  const auto recs = corpus_records();
  const auto& a = angola(recs);
  testsupport::TempDir dir;
  auto store = std::make_shared<gateway::ReplayStore>(dir.path());
  const std::vector<BenchmarkItem> items = {item("f1", "Claim one", "accept", Benchmark::ChartFC),
                                            item("f2", "Claim two", "refute", Benchmark::ChartFC)};
  record(*store, a, items[0], "Supports");
  record(*store, a, items[1], "The chart shows otherwise.\nSupports.");
  gateway::Gateway gw(gateway::Mode::Replay, nullptr, store);
  const auto run = run_benchmark(items, recs, gw);
  ASSERT_EQ(run.scores.size(), 1u);
  EXPECT_EQ(to_json(run.scores[0])["metric"], "accuracy");
  EXPECT_EQ(run.scores[0].score, 0.5);
}

TEST(Run, MissingChartFailsUpFront) {
  const auto recs = corpus_records();
  testsupport::TempDir dir;
  gateway::Gateway gw(gateway::Mode::Replay, nullptr, std::make_shared<gateway::ReplayStore>(dir.path()));
  std::vector<BenchmarkItem> items = {item("q", "i", "g")};
  items[0].chart_id = "nope";
  try {
    run_benchmark(items, recs, gw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingChart);
  }
}

TEST(Run, ReproducibleAcrossRunsAndWorkers) {
  const auto recs = corpus_records();
  const auto& a = angola(recs);
  testsupport::TempDir dir;
  auto store = std::make_shared<gateway::ReplayStore>(dir.path());
  std::vector<BenchmarkItem> items;
  for (int i = 0; i < 20; ++i) {
    items.push_back(item("q" + std::to_string(i), "Question " + std::to_string(i), std::to_string(i)));
    if (i % 5) record(*store, a, items.back(), "The Answer is " + std::to_string(i % 3 ? i : i + 1) + ".");
  }
  gateway::Gateway gw(gateway::Mode::Replay, nullptr, store);
  auto dump = [&](int workers) {
    RunOptions o;
    o.workers = workers;
    const auto run = run_benchmark(items, recs, gw, o);
    std::string s;
    for (const auto& p : run.predictions) s += to_json(p).dump() + "\n";
    for (const auto& f : run.failures) s += f.id + f.reason + "\n";
    for (const auto& sc : run.scores) s += to_json(sc).dump() + "\n";
    return s;
  };
  const auto one = dump(1);
  EXPECT_EQ(one, dump(1));
  EXPECT_EQ(one, dump(4));
}

TEST(Score, BleuBenchmark) {
  const std::vector<BenchmarkItem> items = {{"o1", "c", "i", "the sales rose", Benchmark::OpenCQA}};
  const std::vector<PredictionRecord> preds = {{"o1", Benchmark::OpenCQA, "x", "the sales rose", {}, ""}};
  const auto scores = score_predictions(items, preds);
  ASSERT_EQ(scores.size(), 1u);
  EXPECT_EQ(to_json(scores[0])["metric"], "bleu");
  EXPECT_EQ(*scores[0].score, 0.0);  // three tokens cannot form a 4-gram
  const auto none = score_predictions(items, {});
  EXPECT_FALSE(none[0].score);
  EXPECT_EQ(none[0].coverage, 0.0);
}
