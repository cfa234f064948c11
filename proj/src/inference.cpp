#include "chartinstruct/inference.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "chartinstruct/error.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/metrics.hpp"
#include "chartinstruct/numeric.hpp"
#include "chartinstruct/tooldsl.hpp"

namespace chartinstruct::inference {

std::string_view to_string(Benchmark b) {
  switch (b) {
    case Benchmark::ChartQA: return "chartqa";
    case Benchmark::OpenCQA: return "opencqa";
    case Benchmark::Chart2Text: return "chart2text";
    case Benchmark::ChartFC: return "chartfc";
    case Benchmark::Custom: return "custom";
  }
  return "custom";
}

std::optional<Benchmark> benchmark_from_string(std::string_view s) {
  for (auto b : {Benchmark::ChartQA, Benchmark::OpenCQA, Benchmark::Chart2Text, Benchmark::ChartFC,
                 Benchmark::Custom}) {
    if (iequals(trim(s), to_string(b))) return b;
  }
  return std::nullopt;
}

std::string_view metric_name(Benchmark b) {
  switch (b) {
    case Benchmark::ChartQA:
    case Benchmark::Custom: return "relaxed_accuracy";
    case Benchmark::ChartFC: return "accuracy";
    case Benchmark::OpenCQA:
    case Benchmark::Chart2Text: return "bleu";
  }
  return "relaxed_accuracy";
}

BenchmarkItem item_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseFailure, "benchmark item is not a JSON object");
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string())
      throw Error(ErrorCode::ParseFailure, std::string("missing or non-string field ") + key);
    return j[key].get<std::string>();
  };
  BenchmarkItem item;
  item.id = str("id");
  item.chart_id = str("chart_id");
  item.instruction = str("instruction");
  item.gold = j.contains("gold") && j["gold"].is_string() ? j["gold"].get<std::string>() : std::string();
  const auto tag = str("benchmark");
  const auto b = benchmark_from_string(tag);
  if (!b) throw Error(ErrorCode::ParseFailure, "unknown benchmark '" + tag + "'");
  item.benchmark = *b;
  return item;
}

std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path) {
  std::vector<BenchmarkItem> out;
  std::set<std::string> ids;
  for (const auto& [line_no, line] : read_jsonl_lines(path)) {
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseFailure, where + "not JSON");
    try {
      out.push_back(item_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseFailure, where + e.what());
    }
    if (!ids.insert(out.back().id).second) throw Error(ErrorCode::ParseFailure, where + "duplicate id " + out.back().id);
  }
  return out;
}

std::string build_inference_prompt(const corpus::ChartRecord& record, std::string_view instruction) {
  if (trim(instruction).empty()) throw Error(ErrorCode::EmptyInstruction, "instruction is empty");
  std::string out = record.title;
  out += '\n';
  out += corpus::serialize_data_table(record.table);
  out += "\n\n";
  out += instruction;
  return out;
}

namespace {

bool mentions_tool_call(std::string_view text) {
  const auto lower = to_lower(text);
  return lower.find("define(") != std::string::npos || lower.find("calculator(") != std::string::npos;
}

std::string last_nonempty_line(std::string_view text) {
  std::string_view best;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (!line.empty()) best = line;
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return std::string(best);
}

}  // namespace

std::string extract_final_answer(std::string_view completion, Benchmark benchmark) {
  if (benchmark == Benchmark::OpenCQA || benchmark == Benchmark::Chart2Text) return std::string(trim(completion));
  const auto payload = tooldsl::answer_payload(completion);
  if (!payload) return last_nonempty_line(completion);
  if (mentions_tool_call(completion)) {
    try {
      const auto program = tooldsl::parse_steps(completion, completion, tooldsl::AnswerMode::Auto);
      const auto outcome = tooldsl::run_program(program);
      if (outcome.status == tooldsl::Status::ResolvedNumeric) return format_answer(outcome.value);
      if (outcome.status == tooldsl::Status::ResolvedLiteral) return outcome.text;
    } catch (const Error&) {
      // Malformed calls: fall back to the template payload as written.
    }
  }
  return *payload;
}

nlohmann::ordered_json to_json(const PredictionRecord& p) {
  return {{"id", p.id},
          {"benchmark", std::string(to_string(p.benchmark))},
          {"raw", p.raw},
          {"extracted", p.extracted},
          {"latency_ms", p.latency.count()},
          {"fingerprint", p.fingerprint}};
}

nlohmann::ordered_json to_json(const ScoreReport& s) {
  return {{"benchmark", std::string(to_string(s.benchmark))},
          {"metric", std::string(metric_name(s.benchmark))},
          {"score", s.score ? nlohmann::ordered_json(*s.score) : nlohmann::ordered_json(nullptr)},
          {"coverage", s.coverage},
          {"n", s.n}};
}

std::vector<ScoreReport> score_predictions(std::span<const BenchmarkItem> items,
                                           std::span<const PredictionRecord> predictions) {
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) by_id[p.id] = &p;
  std::map<Benchmark, std::vector<const BenchmarkItem*>> groups;
  for (const auto& item : items) groups[item.benchmark].push_back(&item);

  std::vector<ScoreReport> out;
  for (auto& [bench, group] : groups) {
    std::sort(group.begin(), group.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    std::vector<metrics::AnswerPair> pairs;
    for (const auto* item : group) {
      if (const auto it = by_id.find(item->id); it != by_id.end()) pairs.push_back({it->second->extracted, item->gold});
    }
    ScoreReport rep;
    rep.benchmark = bench;
    rep.n = group.size();
    rep.coverage = static_cast<double>(pairs.size()) / static_cast<double>(group.size());
    if (!pairs.empty()) {
      switch (bench) {
        case Benchmark::ChartQA:
        case Benchmark::Custom: rep.score = metrics::corpus_relaxed_accuracy(pairs); break;
        case Benchmark::ChartFC: rep.score = metrics::binary_accuracy(pairs); break;
        case Benchmark::OpenCQA:
        case Benchmark::Chart2Text: {
          std::vector<std::string> c, r;
          for (const auto& p : pairs) {
            c.push_back(p.pred);
            r.push_back(p.gold);
          }
          rep.score = metrics::bleu_text(c, r);
          break;
        }
      }
    }
    out.push_back(rep);
  }
  return out;
}

BenchmarkRun run_benchmark(std::span<const BenchmarkItem> items, std::span<const corpus::ChartRecord> records,
                           gateway::Gateway& gw, const RunOptions& options) {
  std::map<std::string_view, const corpus::ChartRecord*> charts;
  for (const auto& r : records) charts.emplace(r.id, &r);
  for (const auto& item : items) {
    if (!charts.count(item.chart_id)) {
      throw Error(ErrorCode::MissingChart, "item " + item.id + " names unknown chart " + item.chart_id);
    }
  }

  std::vector<std::optional<PredictionRecord>> preds(items.size());
  std::vector<std::optional<ItemFailure>> fails(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      const auto& item = items[i];
      gateway::ChatRequest req{options.tier, std::string()};
      try {
        req.prompt = build_inference_prompt(*charts.at(item.chart_id), item.instruction);
        const auto resp = gw.complete(req);
        preds[i] = PredictionRecord{item.id, item.benchmark, resp.text,
                                    extract_final_answer(resp.text, item.benchmark), resp.latency,
                                    resp.fingerprint};
      } catch (const std::exception& e) {
        fails[i] = ItemFailure{item.id, req.prompt.empty() ? std::string() : gateway::fingerprint(req.tier, req.prompt),
                               e.what()};
      }
    }
  };
  const int bound = options.workers > 0 ? options.workers : std::max(1, gw.max_in_flight());
  const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(bound), items.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BenchmarkRun run;
  for (auto& p : preds) {
    if (p) run.predictions.push_back(std::move(*p));
  }
  for (auto& f : fails) {
    if (f) run.failures.push_back(std::move(*f));
  }
  std::sort(run.predictions.begin(), run.predictions.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(run.failures.begin(), run.failures.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  run.scores = score_predictions(items, run.predictions);
  return run;
}

}  // namespace chartinstruct::inference
