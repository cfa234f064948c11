#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chartinstruct/corpus.hpp"
#include "chartinstruct/gateway.hpp"

namespace chartinstruct::inference {

enum class Benchmark { ChartQA, OpenCQA, Chart2Text, ChartFC, Custom };

std::string_view to_string(Benchmark b);
std::optional<Benchmark> benchmark_from_string(std::string_view s);
// "relaxed_accuracy", "accuracy" or "bleu".
std::string_view metric_name(Benchmark b);

struct BenchmarkItem {
  std::string id;
  std::string chart_id;
  std::string instruction;
  std::string gold;
  Benchmark benchmark = Benchmark::ChartQA;
};

// Throws Error(ParseFailure) naming the field.
BenchmarkItem item_from_json(const nlohmann::json& j);
// JSON Lines; duplicate ids are an error.
std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path);

// "<title>\n<table>\n\n<instruction>". Throws Error(EmptyInstruction).
std::string build_inference_prompt(const corpus::ChartRecord& record, std::string_view instruction);

// Short-answer benchmarks take the payload of the last answer template,
// resolved through the tool DSL when the completion writes DEFINE or
// Calculator calls, else the last non-empty line. Generation benchmarks
// keep the whole trimmed completion.
std::string extract_final_answer(std::string_view completion, Benchmark benchmark);

struct PredictionRecord {
  std::string id;
  Benchmark benchmark = Benchmark::ChartQA;
  std::string raw;
  std::string extracted;
  std::chrono::milliseconds latency{0};
  std::string fingerprint;
};

nlohmann::ordered_json to_json(const PredictionRecord& p);

struct ItemFailure {
  std::string id;
  std::string fingerprint;
  std::string reason;
};

struct ScoreReport {
  Benchmark benchmark = Benchmark::ChartQA;
  std::optional<double> score;  // absent when nothing was predicted
  double coverage = 0.0;        // predicted / n
  std::size_t n = 0;            // items of this benchmark
};

nlohmann::ordered_json to_json(const ScoreReport& s);

struct BenchmarkRun {
  std::vector<PredictionRecord> predictions;  // sorted by id
  std::vector<ItemFailure> failures;          // sorted by id
  std::vector<ScoreReport> scores;            // one per benchmark present, enum order
};

struct RunOptions {
  gateway::ModelTier tier = gateway::ModelTier::Standard;
  int workers = 0;  // 0: the gateway's in-flight bound
};

// Throws Error(MissingChart) before any request when an item names an
// unknown chart. Gateway errors are recorded per item.
BenchmarkRun run_benchmark(std::span<const BenchmarkItem> items, std::span<const corpus::ChartRecord> records,
                           gateway::Gateway& gw, const RunOptions& options = {});

// Scores predictions against their items' gold answers.
std::vector<ScoreReport> score_predictions(std::span<const BenchmarkItem> items,
                                           std::span<const PredictionRecord> predictions);

}  // namespace chartinstruct::inference
