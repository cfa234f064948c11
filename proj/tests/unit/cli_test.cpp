#include <gtest/gtest.h>

#include <sstream>

#include "chartinstruct/cli.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/inference.hpp"
#include "test_support.hpp"

using namespace chartinstruct;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

class CountingTransport final : public gateway::Transport {
 public:
  explicit CountingTransport(std::string reply) : reply_(std::move(reply)) {}
  gateway::HttpResult post(const std::string&, const std::map<std::string, std::string>&, const std::string&,
                           std::chrono::milliseconds) override {
    ++calls;
    return {200, json{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply_}}}}}}}.dump(), ""};
  }
  int calls = 0;

 private:
  std::string reply_;
};

struct Harness {
  testsupport::TempDir dir;
  int factory_calls = 0;
  std::shared_ptr<CountingTransport> transport;

  Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    cli::CliEnv env;
    env.transport_factory = [this] {
      ++factory_calls;
      return std::static_pointer_cast<gateway::Transport>(transport);
    };
    env.env_lookup = [](const std::string& name) -> std::optional<std::string> {
      if (name == "TEST_TOKEN") return std::string("secret");
      return std::nullopt;
    };
    env.sleeper = [](std::chrono::milliseconds) {};
    env.out = &out;
    env.err = &err;
    const int code = cli::run(args, env);
    return {code, out.str(), err.str()};
  }

  std::string p(const std::string& rel) const { return (dir / rel).string(); }

  std::vector<std::string> generate_args(const std::string& replay, const std::string& out) const {
    return {"generate", "--mode", "replay", "--corpus", testsupport::data_path("corpus.jsonl").string(),
            "--replay-dir", p(replay), "--plan", testsupport::data_path("plan.jsonl").string(), "--out", p(out)};
  }
};

std::size_t line_count(const fs::path& path) {
  std::size_t n = 0;
  for (char c : read_file(path)) n += c == '\n';
  return n;
}

}  // namespace

TEST(CliConfig, UnknownKeyNamesLineAndColumn) {
  Harness h;
  testsupport::write_text(h.dir / "cfg.json", "{\n  \"seed\": 1,\n  \"bogus\": true\n}\n");
  const auto r = h.run({"ingest", "--config", h.p("cfg.json"), "--corpus",
                        testsupport::data_path("corpus.jsonl").string(), "--out", h.p("o")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("cfg.json:3:3: key 'bogus': unknown key"), std::string::npos) << r.err;
}

TEST(CliConfig, NestedAndTypedErrors) {
  Harness h;
  testsupport::write_text(h.dir / "a.json", "{\"retry\": {\"max_attempts\": 0}}");
  auto r = h.run({"ingest", "--config", h.p("a.json")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("key 'retry.max_attempts'"), std::string::npos) << r.err;

  testsupport::write_text(h.dir / "b.json", "{\n\"seed\": \"seven\"}");
  r = h.run({"ingest", "--config", h.p("b.json")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("b.json:2:1: key 'seed': expected a non-negative integer"), std::string::npos) << r.err;

  testsupport::write_text(h.dir / "c.json", "{\"seed\": 1,,}");
  r = h.run({"ingest", "--config", h.p("c.json")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("invalid JSON"), std::string::npos);
}

TEST(CliConfig, BadFlagsExitTwo) {
  Harness h;
  EXPECT_EQ(h.run({}).code, cli::kExitConfig);
  EXPECT_EQ(h.run({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(h.run({"generate", "--mode", "sideways"}).code, cli::kExitConfig);
  EXPECT_EQ(h.run({"generate", "--mix", "open_qa=-1", "--corpus", testsupport::data_path("corpus.jsonl").string(),
                   "--out", h.p("o")})
                .code,
            cli::kExitConfig);
  EXPECT_EQ(h.run({"ingest", "--corpus", h.p("absent.jsonl"), "--out", h.p("o")}).code, cli::kExitConfig);
}

TEST(CliConfig, LiveModeNeedsProviders) {
  Harness h;
  const auto r = h.run({"generate", "--mode", "live", "--corpus", testsupport::data_path("corpus.jsonl").string(),
                        "--plan", testsupport::data_path("plan.jsonl").string(), "--out", h.p("o")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_EQ(h.factory_calls, 0);
}

TEST(CliIngest, WritesSplitsAndReport) {
  Harness h;
  auto r = h.run({"ingest", "--corpus", testsupport::data_path("corpus.jsonl").string(), "--out", h.p("o"),
                  "--seed", "3"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(line_count(h.dir / "o/corpus.jsonl"), 5u);
  const auto rep = json::parse(read_file(h.dir / "o/ingest_report.json"));
  EXPECT_EQ(rep["records"], 5);
  EXPECT_TRUE(rep["failures"].empty());
  EXPECT_TRUE(fs::exists(h.dir / "o/run_config.json"));
  EXPECT_EQ(json::parse(read_file(h.dir / "o/run_config.json"))["seed"], 3);

  auto text = read_file(testsupport::data_path("corpus.jsonl"));
  testsupport::write_text(h.dir / "bad.jsonl", text + "{\"id\": \"x\", \"title\": \"t\", \"table\": \"a,b\\n1\"}\n");
  r = h.run({"ingest", "--corpus", h.p("bad.jsonl"), "--out", h.p("o2")});
  EXPECT_EQ(r.code, cli::kExitPartial);
  const auto rep2 = json::parse(read_file(h.dir / "o2/ingest_report.json"));
  EXPECT_EQ(rep2["records"], 5);
  ASSERT_EQ(rep2["failures"].size(), 1u);
  EXPECT_EQ(rep2["failures"][0]["line"], 6);
}

TEST(CliGenerate, ReplayCompleteIsOfflineAndReproducible) {
  Harness h;
  ASSERT_EQ(testsupport::record_generation_fixtures(h.dir / "replay"), 7u);
  auto r = h.run(h.generate_args("replay", "o1"));
  ASSERT_EQ(r.code, cli::kExitOk) << r.out << r.err;
  EXPECT_EQ(h.factory_calls, 0);
  for (const char* f : {"plan.jsonl", "dataset.jsonl", "parse_reports.jsonl", "failures.jsonl",
                        "generate_summary.json", "run_config.json"}) {
    EXPECT_TRUE(fs::exists(h.dir / "o1" / f)) << f;
  }
  EXPECT_EQ(line_count(h.dir / "o1/parse_reports.jsonl"), 7u);
  EXPECT_EQ(line_count(h.dir / "o1/failures.jsonl"), 0u);
  const auto summary = json::parse(read_file(h.dir / "o1/generate_summary.json"));
  EXPECT_EQ(summary["requests"], 7);
  EXPECT_EQ(summary["samples"].get<std::size_t>(), line_count(h.dir / "o1/dataset.jsonl"));

  ASSERT_EQ(h.run(h.generate_args("replay", "o2")).code, cli::kExitOk);
  for (const char* f : {"plan.jsonl", "dataset.jsonl", "parse_reports.jsonl", "generate_summary.json"}) {
    EXPECT_EQ(read_file(h.dir / "o1" / f), read_file(h.dir / "o2" / f)) << f;
  }
}

TEST(CliGenerate, MissingFixtureIsPartialAndNamed) {
  Harness h;
  testsupport::record_generation_fixtures(h.dir / "replay");
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(h.dir / "replay")) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  const auto victim = entries.front().stem().string();
  fs::remove(entries.front());

  const auto r = h.run(h.generate_args("replay", "o"));
  EXPECT_EQ(r.code, cli::kExitPartial);
  EXPECT_NE(r.out.find(victim), std::string::npos) << r.out;
  const auto failures = read_file(h.dir / "o/failures.jsonl");
  EXPECT_EQ(line_count(h.dir / "o/failures.jsonl"), 1u);
  EXPECT_EQ(json::parse(failures)["fingerprint"], victim);
  EXPECT_EQ(line_count(h.dir / "o/parse_reports.jsonl"), 6u);

  const auto audit = h.run({"replay-audit", "--corpus", testsupport::data_path("corpus.jsonl").string(),
                            "--replay-dir", h.p("replay"), "--plan", testsupport::data_path("plan.jsonl").string(),
                            "--out", h.p("a")});
  EXPECT_EQ(audit.code, cli::kExitPartial);
  const auto missing = json::parse(read_file(h.dir / "a/missing_fixtures.jsonl"));
  EXPECT_EQ(missing["fingerprint"], victim);
}

TEST(CliGenerate, AuditCleanWhenComplete) {
  Harness h;
  testsupport::record_generation_fixtures(h.dir / "replay");
  const auto audit = h.run({"replay-audit", "--corpus", testsupport::data_path("corpus.jsonl").string(),
                            "--replay-dir", h.p("replay"), "--plan", testsupport::data_path("plan.jsonl").string(),
                            "--out", h.p("a")});
  EXPECT_EQ(audit.code, cli::kExitOk) << audit.err;
  EXPECT_EQ(line_count(h.dir / "a/missing_fixtures.jsonl"), 0u);
}

TEST(CliGenerate, RecordThenReplay) {
  Harness h;
  h.transport = std::make_shared<CountingTransport>(
      testsupport::completion_for("angola_population", taskgen::TaskKind::FactChecking));
  testsupport::write_text(h.dir / "plan.jsonl", "{\"chart_id\": \"angola_population\", \"task\": \"fact_checking\"}\n");
  testsupport::write_text(h.dir / "cfg.json", R"({
  "providers": {
    "standard": {"url": "http://localhost:1/v1/chat", "auth_env": "TEST_TOKEN", "model": "m-small"},
    "advanced": {"url": "http://localhost:1/v1/chat", "auth_env": "TEST_TOKEN", "model": "m-large"}
  },
  "max_in_flight": 2
})");
  auto args = std::vector<std::string>{"generate", "--config", h.p("cfg.json"), "--mode", "record",
                                       "--corpus", testsupport::data_path("corpus.jsonl").string(),
                                       "--replay-dir", h.p("replay"), "--plan", h.p("plan.jsonl"), "--out", h.p("rec")};
  auto r = h.run(args);
  ASSERT_EQ(r.code, cli::kExitOk) << r.out << r.err;
  EXPECT_EQ(h.transport->calls, 1);

  args[4] = "replay";
  args.back() = h.p("rep");
  r = h.run(args);
  ASSERT_EQ(r.code, cli::kExitOk) << r.out << r.err;
  EXPECT_EQ(h.transport->calls, 1);
  EXPECT_EQ(read_file(h.dir / "rec/dataset.jsonl"), read_file(h.dir / "rep/dataset.jsonl"));
  EXPECT_GT(line_count(h.dir / "rep/dataset.jsonl"), 0u);
}

TEST(CliVerifyAnalyze, RunOnGeneratedDataset) {
  Harness h;
  testsupport::record_generation_fixtures(h.dir / "replay");
  ASSERT_EQ(h.run(h.generate_args("replay", "o")).code, cli::kExitOk);
  auto r = h.run({"verify", "--corpus", testsupport::data_path("corpus.jsonl").string(), "--out", h.p("o")});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out << r.err;
  EXPECT_TRUE(fs::exists(h.dir / "o/verification.jsonl"));
  r = h.run({"analyze", "--out", h.p("o"), "--seed", "1"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out << r.err;
  const auto a1 = read_file(h.dir / "o/analysis.json");
  ASSERT_EQ(h.run({"analyze", "--out", h.p("o"), "--seed", "1"}).code, cli::kExitOk);
  EXPECT_EQ(a1, read_file(h.dir / "o/analysis.json"));
}

TEST(CliEvaluate, ReplayedBenchmarkScoresAndCoverage) {
  Harness h;
  const auto recs = corpus::load_corpus(testsupport::data_path("corpus.jsonl")).records;
  gateway::ReplayStore store(h.dir / "replay");
  std::string bench;
  const std::vector<std::pair<std::string, std::string>> qa = {{"Female 2019?", "16.08"}, {"Male 2019?", "15.74"}};
  for (std::size_t i = 0; i < qa.size(); ++i) {
    bench += json{{"id", "q" + std::to_string(i)}, {"chart_id", "angola_population"}, {"instruction", qa[i].first},
                  {"gold", qa[i].second}, {"benchmark", "chartqa"}}
                 .dump() +
             "\n";
  }
  testsupport::write_text(h.dir / "bench.jsonl", bench);
  gateway::ChatResponse resp;
  resp.text = "The Answer is 16.08.";
  store.record({gateway::ModelTier::Standard, inference::build_inference_prompt(recs[0], qa[0].first)}, resp);

  const std::vector<std::string> base = {"evaluate", "--corpus", testsupport::data_path("corpus.jsonl").string(),
                                         "--replay-dir", h.p("replay"), "--benchmark", h.p("bench.jsonl")};
  auto args = base;
  args.insert(args.end(), {"--out", h.p("e1")});
  auto r = h.run(args);
  EXPECT_EQ(r.code, cli::kExitPartial);
  auto scores = json::parse(read_file(h.dir / "e1/scores.json"));
  ASSERT_EQ(scores.size(), 1u);
  EXPECT_EQ(scores[0]["score"], 1.0);
  EXPECT_EQ(scores[0]["coverage"], 0.5);
  EXPECT_EQ(line_count(h.dir / "e1/eval_failures.jsonl"), 1u);

  resp.text = "DEFINE(m=15.74) The Answer is m.";
  store.record({gateway::ModelTier::Standard, inference::build_inference_prompt(recs[0], qa[1].first)}, resp);
  for (const char* out : {"e2", "e3"}) {
    args = base;
    args.insert(args.end(), {"--out", h.p(out)});
    r = h.run(args);
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  }
  scores = json::parse(read_file(h.dir / "e2/scores.json"));
  EXPECT_EQ(scores[0]["coverage"], 1.0);
  for (const char* f : {"predictions.jsonl", "scores.json", "eval_failures.jsonl"}) {
    EXPECT_EQ(read_file(h.dir / "e2" / f), read_file(h.dir / "e3" / f)) << f;
  }
  EXPECT_EQ(h.factory_calls, 0);
}

TEST(CliEvaluate, ScoreOnlyMode) {
  Harness h;
  testsupport::write_text(h.dir / "pred.jsonl", "{\"id\":\"a\",\"text\":\"The Answer is 10.\"}\n{\"id\":\"b\",\"text\":\"7\"}\n");
  testsupport::write_text(h.dir / "gold.jsonl", "{\"id\":\"a\",\"text\":\"10.4\"}\n{\"id\":\"b\",\"text\":\"9\"}\n");
  auto r = h.run({"evaluate", "--predictions", h.p("pred.jsonl"), "--gold", h.p("gold.jsonl"), "--tag", "chartqa",
                  "--out", h.p("s")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto scores = json::parse(read_file(h.dir / "s/scores.json"));
  EXPECT_EQ(scores[0]["metric"], "relaxed_accuracy");
  EXPECT_EQ(scores[0]["score"], 0.5);
  r = h.run({"evaluate", "--predictions", h.p("pred.jsonl"), "--out", h.p("s")});
  EXPECT_EQ(r.code, cli::kExitConfig);
}

TEST(CliStats, KappaAndMeans) {
  Harness h;
  const std::vector<int> a = {1, 1, 1, 1, 1, 5, 5, 5, 5, 5};
  const std::vector<int> b = {1, 1, 1, 1, 5, 5, 5, 5, 5, 5};
  std::string r1, r2;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto line = [&](const char* rater, int score) {
      return json{{"sample_id", "s" + std::to_string(i)}, {"rater_id", rater}, {"model_id", "m1"},
                  {"metric", "factual"}, {"score", score}}
                 .dump() +
             "\n";
    };
    r1 += line("alice", a[i]);
    r2 += line("bob", b[i]);
  }
  testsupport::write_text(h.dir / "r1.jsonl", r1);
  testsupport::write_text(h.dir / "r2.jsonl", r2);
  auto r = h.run({"stats", "--ratings", h.p("r1.jsonl"), h.p("r2.jsonl"), "--out", h.p("st")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto j = json::parse(read_file(h.dir / "st/human_eval.json"));
  EXPECT_NEAR(j["kappa"]["factual"]["kappa"].get<double>(), 0.8, 1e-12);
  EXPECT_EQ(j["kappa"]["factual"]["items"], 10);
  EXPECT_NEAR(j["means"]["m1"]["factual"]["mean"].get<double>(), (30.0 + 34.0) / 20.0, 1e-12);
  EXPECT_EQ(json::parse(r.out), j);

  testsupport::write_text(h.dir / "bad.jsonl", "{\"sample_id\":\"s\",\"rater_id\":\"r\",\"model_id\":\"m\",\"metric\":\"fluency\",\"score\":3}\n");
  r = h.run({"stats", "--ratings", h.p("bad.jsonl"), "--out", h.p("st2")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("bad.jsonl:1"), std::string::npos);
}
