// Serial reference versus OpenMP variant for each parallel kernel.
#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "chartinstruct/analysis.hpp"
#include "chartinstruct/corpus.hpp"
#include "chartinstruct/metrics.hpp"
#include "chartinstruct/parsing.hpp"
#include "chartinstruct/rng.hpp"
#include "chartinstruct/tooldsl.hpp"

namespace {

using namespace chartinstruct;

std::vector<analysis::Point> random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<analysis::Point> pts(n, analysis::Point(dim));
  for (auto& p : pts) {
    for (auto& x : p) x = rng.unit();
  }
  return pts;
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const auto points = random_points(static_cast<std::size_t>(state.range(0)), 64, 1);
  const auto centroids = random_points(11, 64, 2);
  std::vector<std::size_t> labels(points.size());
  std::vector<double> dist2(points.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      analysis::assign_nearest_parallel(points, centroids, labels, dist2);
    else
      analysis::assign_nearest_serial(points, centroids, labels, dist2);
    benchmark::DoNotOptimize(labels.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

std::vector<metrics::Tokens> random_sentences(std::size_t n, std::uint64_t seed) {
  static const char* words[] = {"the", "chart", "shows", "a", "rise", "in", "sales", "from",
                                "2010", "to", "2020", "while", "costs", "fell", "sharply", "."};
  Rng rng(seed);
  std::vector<metrics::Tokens> out(n);
  for (auto& s : out) {
    const auto len = 10 + rng.below(30);
    for (std::size_t i = 0; i < len; ++i) s.emplace_back(words[rng.below(16)]);
  }
  return out;
}

template <bool Parallel>
void BM_BleuStats(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cand = random_sentences(n, 3);
  const auto ref = random_sentences(n, 4);
  for (auto _ : state) {
    auto s = Parallel ? metrics::bleu_stats_parallel(cand, ref) : metrics::bleu_stats_serial(cand, ref);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

struct VerifyFixture {
  corpus::ChartRecord record;
  std::vector<parsing::InstructionSample> samples;
  std::vector<tooldsl::VerifyJob> jobs;

  explicit VerifyFixture(std::size_t n) {
    record.id = "c";
    record.table = corpus::parse_data_table("Year\tA\tB\n2017\t39.7\t10.8\n2018\t43.4\t8.2\n2019\t34.1\t13.9");
    samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = samples[i];
      s.id = "c#cot_var_dependent#" + std::to_string(i);
      s.chart_id = "c";
      s.task = taskgen::TaskKind::CotVarDependent;
      s.input_text = "How much did the share change?";
      s.steps = "DEFINE(a=39.7) DEFINE(b=43.4) DEFINE(c=median([10.8, 8.2, 13.9])) "
                "Calculator(d=b-a) Calculator(e=round(d*c/(a+1), 2))";
      s.output_text = "The Answer is e.";
    }
    for (const auto& s : samples) jobs.push_back({&s, &record});
  }
};

template <bool Parallel>
void BM_VerifyBatch(benchmark::State& state) {
  const VerifyFixture fx(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto out = Parallel ? tooldsl::verify_batch_parallel(fx.jobs) : tooldsl::verify_batch_serial(fx.jobs);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_AssignNearest<false>)->Name("assign_nearest/serial")->Arg(2000)->Arg(20000);
BENCHMARK(BM_AssignNearest<true>)->Name("assign_nearest/parallel")->Arg(2000)->Arg(20000);
BENCHMARK(BM_BleuStats<false>)->Name("bleu_stats/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_BleuStats<true>)->Name("bleu_stats/parallel")->Arg(1000)->Arg(10000);
BENCHMARK(BM_VerifyBatch<false>)->Name("verify_batch/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_VerifyBatch<true>)->Name("verify_batch/parallel")->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
