#include "chartinstruct/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "chartinstruct/error.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/inference.hpp"
#include "chartinstruct/numeric.hpp"
#include "chartinstruct/parsing.hpp"
#include "chartinstruct/tooldsl.hpp"

namespace chartinstruct::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using taskgen::TaskKind;

namespace {

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Locates a key path ("providers", "standard", "url") in the config text by
// finding each quoted key in turn after the previous one.
class ConfigReader {
 public:
  ConfigReader(std::string_view text, std::string source, fs::path base)
      : text_(text), source_(std::move(source)), base_(std::move(base)) {}

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& what) const {
    std::size_t pos = 0;
    bool found = true;
    for (const auto& seg : path) {
      const auto hit = text_.find("\"" + seg + "\"", pos);
      if (hit == std::string_view::npos) {
        found = false;
        break;
      }
      pos = hit;
    }
    const auto [line, col] = found ? line_col(text_, pos) : std::pair<std::size_t, std::size_t>{1, 1};
    std::string key;
    for (std::size_t i = 0; i < path.size(); ++i) key += (i ? "." : "") + path[i];
    throw Error(ErrorCode::Config,
                source_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": key '" + key + "': " + what);
  }

  [[noreturn]] void fail_at(std::size_t byte, const std::string& what) const {
    const auto [line, col] = line_col(text_, byte);
    throw Error(ErrorCode::Config, source_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
  }

  const fs::path& base() const { return base_; }

 private:
  std::string_view text_;
  std::string source_;
  fs::path base_;
};

using KeyPath = std::vector<std::string>;

KeyPath child(const KeyPath& p, const std::string& key) {
  KeyPath out = p;
  out.push_back(key);
  return out;
}

void check_keys(const ConfigReader& rd, const json& obj, const KeyPath& path, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      rd.fail(child(path, key), "unknown key");
  }
}

std::string as_string(const ConfigReader& rd, const json& v, const KeyPath& path) {
  if (!v.is_string()) rd.fail(path, "expected a string");
  return v.get<std::string>();
}

std::uint64_t as_uint(const ConfigReader& rd, const json& v, const KeyPath& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    rd.fail(path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_double(const ConfigReader& rd, const json& v, const KeyPath& path) {
  if (!v.is_number()) rd.fail(path, "expected a number");
  return v.get<double>();
}

const json& as_object(const ConfigReader& rd, const json& v, const KeyPath& path) {
  if (!v.is_object()) rd.fail(path, "expected an object");
  return v;
}

fs::path as_path(const ConfigReader& rd, const json& v, const KeyPath& path) {
  fs::path p = as_string(rd, v, path);
  if (p.is_relative() && !rd.base().empty()) p = rd.base() / p;
  return p;
}

std::vector<TaskKind> parse_task_list(std::string_view text) {
  std::vector<TaskKind> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto name = trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!name.empty()) {
      const auto t = taskgen::task_from_string(name);
      if (!t) throw Error(ErrorCode::Config, "unknown task '" + std::string(name) + "'");
      if (std::find(out.begin(), out.end(), *t) == out.end()) out.push_back(*t);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

gateway::ModelTier parse_tier(const ConfigReader& rd, const json& v, const KeyPath& path) {
  const auto t = taskgen::tier_from_string(as_string(rd, v, path));
  if (!t) rd.fail(path, "expected \"standard\" or \"advanced\"");
  return *t;
}

}  // namespace

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source_name,
                       const fs::path& base_dir) {
  const ConfigReader rd(text, source_name, base_dir);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    rd.fail_at(e.byte == 0 ? 0 : e.byte - 1, "invalid JSON");
  }
  if (!doc.is_object()) rd.fail_at(0, "config must be a JSON object");
  check_keys(rd, doc, {},
             {"corpus", "templates", "replay_dir", "mode", "seed", "out", "tasks", "mix", "requests_per_chart",
              "providers", "max_in_flight", "retry", "timeout_ms", "temperature", "code_gen_tier", "inference_tier",
              "analysis", "human_eval", "split"});

  if (doc.contains("corpus")) cfg.corpus = as_path(rd, doc["corpus"], {"corpus"});
  if (doc.contains("templates")) cfg.templates = as_path(rd, doc["templates"], {"templates"});
  if (doc.contains("replay_dir")) cfg.replay_dir = as_path(rd, doc["replay_dir"], {"replay_dir"});
  if (doc.contains("out")) cfg.out = as_path(rd, doc["out"], {"out"});
  if (doc.contains("mode")) {
    const auto m = gateway::mode_from_string(as_string(rd, doc["mode"], {"mode"}));
    if (!m) rd.fail({"mode"}, "expected live, replay or record");
    cfg.mode = *m;
  }
  if (doc.contains("seed")) cfg.seed = as_uint(rd, doc["seed"], {"seed"});
  if (doc.contains("tasks")) {
    const auto& t = doc["tasks"];
    std::string joined;
    if (t.is_string()) {
      joined = t.get<std::string>();
    } else if (t.is_array()) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        joined += (i ? "," : "") + as_string(rd, t[i], {"tasks"});
      }
    } else {
      rd.fail({"tasks"}, "expected a list of task names");
    }
    try {
      cfg.tasks = parse_task_list(joined);
    } catch (const Error& e) {
      rd.fail({"tasks"}, e.what());
    }
  }
  if (doc.contains("mix")) {
    const auto& m = doc["mix"];
    std::string mix_text;
    if (m.is_string()) {
      mix_text = m.get<std::string>();
    } else if (m.is_object()) {
      bool first = true;
      for (const auto& [k, v] : m.items()) {
        mix_text += (first ? "" : ",") + k + "=" + format_shortest(as_double(rd, v, {"mix", k}));
        first = false;
      }
    } else {
      rd.fail({"mix"}, "expected \"task=weight,...\" or an object of weights");
    }
    try {
      cfg.mix = taskgen::parse_mix(mix_text);
    } catch (const Error& e) {
      rd.fail({"mix"}, e.what());
    }
  }
  if (doc.contains("requests_per_chart")) {
    cfg.requests_per_chart = as_uint(rd, doc["requests_per_chart"], {"requests_per_chart"});
    if (cfg.requests_per_chart == 0) rd.fail({"requests_per_chart"}, "must be at least 1");
  }
  if (doc.contains("providers")) {
    const auto& p = as_object(rd, doc["providers"], {"providers"});
    check_keys(rd, p, {"providers"}, {"standard", "advanced"});
    for (const auto& [tier_name, ep] : p.items()) {
      const KeyPath base{"providers", tier_name};
      as_object(rd, ep, base);
      check_keys(rd, ep, base, {"url", "auth_env", "model"});
      gateway::TierEndpoint endpoint;
      if (!ep.contains("url")) rd.fail(base, "missing url");
      endpoint.url = as_string(rd, ep["url"], child(base, "url"));
      if (ep.contains("auth_env")) endpoint.auth_env = as_string(rd, ep["auth_env"], child(base, "auth_env"));
      if (ep.contains("model")) endpoint.model = as_string(rd, ep["model"], child(base, "model"));
      cfg.provider.endpoints[*taskgen::tier_from_string(tier_name)] = endpoint;
    }
  }
  if (doc.contains("max_in_flight")) {
    const auto n = as_uint(rd, doc["max_in_flight"], {"max_in_flight"});
    if (n < 1 || n > 1024) rd.fail({"max_in_flight"}, "must be between 1 and 1024");
    cfg.provider.max_in_flight = static_cast<int>(n);
  }
  if (doc.contains("retry")) {
    const auto& r = as_object(rd, doc["retry"], {"retry"});
    check_keys(rd, r, {"retry"}, {"max_attempts", "backoff_ms"});
    if (r.contains("max_attempts")) {
      const auto n = as_uint(rd, r["max_attempts"], {"retry", "max_attempts"});
      if (n < 1 || n > 100) rd.fail({"retry", "max_attempts"}, "must be between 1 and 100");
      cfg.provider.retry.max_attempts = static_cast<int>(n);
    }
    if (r.contains("backoff_ms"))
      cfg.provider.retry.backoff_base = std::chrono::milliseconds(as_uint(rd, r["backoff_ms"], {"retry", "backoff_ms"}));
  }
  if (doc.contains("timeout_ms")) {
    const auto n = as_uint(rd, doc["timeout_ms"], {"timeout_ms"});
    if (n == 0) rd.fail({"timeout_ms"}, "must be positive");
    cfg.provider.timeout = std::chrono::milliseconds(n);
  }
  if (doc.contains("temperature")) {
    if (!doc["temperature"].is_null()) cfg.provider.temperature = as_double(rd, doc["temperature"], {"temperature"});
  }
  if (doc.contains("code_gen_tier")) cfg.routing.code_gen = parse_tier(rd, doc["code_gen_tier"], {"code_gen_tier"});
  if (doc.contains("inference_tier")) cfg.inference_tier = parse_tier(rd, doc["inference_tier"], {"inference_tier"});
  if (doc.contains("analysis")) {
    const auto& a = as_object(rd, doc["analysis"], {"analysis"});
    check_keys(rd, a, {"analysis"}, {"k", "bucket_width", "top_n", "audit_n", "max_iter"});
    auto positive = [&](const char* key, std::size_t& dst) {
      if (!a.contains(key)) return;
      dst = as_uint(rd, a[key], {"analysis", key});
      if (dst == 0) rd.fail({"analysis", key}, "must be positive");
    };
    positive("k", cfg.analysis.k);
    positive("bucket_width", cfg.analysis.bucket_width);
    positive("top_n", cfg.analysis.top_n);
    positive("max_iter", cfg.analysis.max_iter);
    if (a.contains("audit_n")) cfg.analysis.audit_n = as_uint(rd, a["audit_n"], {"analysis", "audit_n"});
  }
  if (doc.contains("human_eval")) {
    const auto& h = as_object(rd, doc["human_eval"], {"human_eval"});
    check_keys(rd, h, {"human_eval"}, {"mw_input", "kappa_weighting"});
    if (h.contains("mw_input")) {
      const auto v = as_string(rd, h["mw_input"], {"human_eval", "mw_input"});
      if (v == "sample_means") {
        cfg.human_eval.mw_input = metrics::HumanEvalConfig::MwInput::SampleMeans;
      } else if (v == "raw_scores") {
        cfg.human_eval.mw_input = metrics::HumanEvalConfig::MwInput::RawScores;
      } else {
        rd.fail({"human_eval", "mw_input"}, "expected sample_means or raw_scores");
      }
    }
    if (h.contains("kappa_weighting")) {
      const auto w = metrics::kappa_weighting_from_string(as_string(rd, h["kappa_weighting"], {"human_eval", "kappa_weighting"}));
      if (!w) rd.fail({"human_eval", "kappa_weighting"}, "expected unweighted, linear or quadratic");
      cfg.human_eval.kappa_weighting = *w;
    }
  }
  if (doc.contains("split")) {
    const auto& s = as_object(rd, doc["split"], {"split"});
    check_keys(rd, s, {"split"}, {"train", "val", "test"});
    if (s.contains("train")) cfg.split.train = as_double(rd, s["train"], {"split", "train"});
    if (s.contains("val")) cfg.split.val = as_double(rd, s["val"], {"split", "val"});
    if (s.contains("test")) cfg.split.test = as_double(rd, s["test"], {"split", "test"});
    try {
      corpus::split_counts(10, cfg.split);
    } catch (const Error& e) {
      rd.fail({"split"}, e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
  apply_config_text(cfg, text, path.string(), path.parent_path());
}

ojson RunConfig::to_json() const {
  ojson j;
  j["corpus"] = corpus.string();
  j["templates"] = templates.string();
  j["replay_dir"] = replay_dir.string();
  j["out"] = out.string();
  j["mode"] = std::string(gateway::to_string(mode));
  j["seed"] = seed;
  auto task_names = ojson::array();
  for (auto t : tasks) task_names.push_back(std::string(taskgen::to_string(t)));
  j["tasks"] = std::move(task_names);
  if (mix) {
    ojson m = ojson::object();
    for (const auto& [t, w] : *mix) m[std::string(taskgen::to_string(t))] = w;
    j["mix"] = std::move(m);
  } else {
    j["mix"] = nullptr;
  }
  j["requests_per_chart"] = requests_per_chart;
  ojson providers = ojson::object();
  for (const auto& [tier, ep] : provider.endpoints) {
    providers[std::string(taskgen::to_string(tier))] = {{"url", ep.url}, {"auth_env", ep.auth_env}, {"model", ep.model}};
  }
  j["providers"] = std::move(providers);
  j["max_in_flight"] = provider.max_in_flight;
  j["retry"] = {{"max_attempts", provider.retry.max_attempts}, {"backoff_ms", provider.retry.backoff_base.count()}};
  j["timeout_ms"] = provider.timeout.count();
  j["temperature"] = provider.temperature ? ojson(*provider.temperature) : ojson(nullptr);
  j["code_gen_tier"] = std::string(taskgen::to_string(routing.code_gen));
  j["inference_tier"] = std::string(taskgen::to_string(inference_tier));
  j["analysis"] = {{"k", analysis.k},
                   {"bucket_width", analysis.bucket_width},
                   {"top_n", analysis.top_n},
                   {"audit_n", analysis.audit_n},
                   {"max_iter", analysis.max_iter}};
  j["human_eval"] = {
      {"mw_input", human_eval.mw_input == metrics::HumanEvalConfig::MwInput::SampleMeans ? "sample_means" : "raw_scores"},
      {"kappa_weighting", std::string(metrics::to_string(human_eval.kappa_weighting))}};
  j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  return j;
}

namespace {

// Flag values; each one set overrides the config file.
struct Flags {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string corpus;
  std::string templates;
  std::string replay_dir;
  std::string tasks;
  std::string mix;
  std::string plan;
  std::optional<std::size_t> requests_per_chart;
  std::string dataset;
  std::string benchmark;
  std::string predictions;
  std::string gold;
  std::string tag = "chartqa";
  std::vector<std::string> ratings;
  std::string verb_annotations;
  std::string audit_annotations;
  std::optional<std::size_t> k;
  std::optional<std::size_t> audit_n;
  std::string mw_input;
  std::string kappa_weighting;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) apply_config_file(cfg, f.config);
  if (!f.mode.empty()) {
    const auto m = gateway::mode_from_string(f.mode);
    if (!m) throw Error(ErrorCode::Config, "--mode: expected live, replay or record, got '" + f.mode + "'");
    cfg.mode = *m;
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.corpus.empty()) cfg.corpus = f.corpus;
  if (!f.templates.empty()) cfg.templates = f.templates;
  if (!f.replay_dir.empty()) cfg.replay_dir = f.replay_dir;
  if (!f.tasks.empty()) {
    try {
      cfg.tasks = parse_task_list(f.tasks);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, std::string("--tasks: ") + e.what());
    }
  }
  if (!f.mix.empty()) {
    try {
      cfg.mix = taskgen::parse_mix(f.mix);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, std::string("--mix: ") + e.what());
    }
  }
  if (f.requests_per_chart) {
    if (*f.requests_per_chart == 0) throw Error(ErrorCode::Config, "--requests-per-chart must be at least 1");
    cfg.requests_per_chart = *f.requests_per_chart;
  }
  if (f.k) {
    if (*f.k == 0) throw Error(ErrorCode::Config, "--k must be positive");
    cfg.analysis.k = *f.k;
  }
  if (f.audit_n) cfg.analysis.audit_n = *f.audit_n;
  if (!f.mw_input.empty()) {
    if (f.mw_input == "sample_means") {
      cfg.human_eval.mw_input = metrics::HumanEvalConfig::MwInput::SampleMeans;
    } else if (f.mw_input == "raw_scores") {
      cfg.human_eval.mw_input = metrics::HumanEvalConfig::MwInput::RawScores;
    } else {
      throw Error(ErrorCode::Config, "--mw-input: expected sample_means or raw_scores");
    }
  }
  if (!f.kappa_weighting.empty()) {
    const auto w = metrics::kappa_weighting_from_string(f.kappa_weighting);
    if (!w) throw Error(ErrorCode::Config, "--kappa-weighting: expected unweighted, linear or quadratic");
    cfg.human_eval.kappa_weighting = *w;
  }
  return cfg;
}

class Runner {
 public:
  Runner(RunConfig cfg, const Flags& flags, const CliEnv& env, std::ostream& out)
      : cfg_(std::move(cfg)), flags_(flags), env_(env), out_(out) {}

  int ingest();
  int generate();
  int verify();
  int analyze();
  int evaluate();
  int stats();
  int replay_audit();

 private:
  void archive_config() { write("run_config.json", cfg_.to_json().dump(2) + "\n"); }

  void write(const std::string& name, const std::string& content) { write_file_atomic(cfg_.out / name, content); }

  template <typename Range, typename F>
  void write_jsonl(const std::string& name, const Range& items, F&& to_line) {
    std::string body;
    for (const auto& item : items) {
      body += to_line(item);
      body += '\n';
    }
    write(name, body);
  }

  fs::path require_path(const fs::path& p, const char* what) const {
    if (p.empty()) throw Error(ErrorCode::Config, std::string("missing ") + what);
    return p;
  }

  std::vector<corpus::ChartRecord> load_records(std::vector<corpus::IngestFailure>* failures = nullptr) const {
    auto loaded = corpus::load_corpus(require_path(cfg_.corpus, "corpus path (--corpus or config key 'corpus')"));
    if (failures) *failures = loaded.report.failures;
    return std::move(loaded.records);
  }

  taskgen::TemplateSet templates() const {
    return cfg_.templates.empty() ? taskgen::TemplateSet::builtin() : taskgen::TemplateSet::load(cfg_.templates);
  }

  std::vector<taskgen::PlanEntry> plan(std::span<const corpus::ChartRecord> records) const;

  std::unique_ptr<gateway::Gateway> make_gateway() const;

  std::vector<parsing::InstructionSample> load_dataset() const;

  RunConfig cfg_;
  const Flags& flags_;
  const CliEnv& env_;
  std::ostream& out_;
};

std::vector<taskgen::PlanEntry> Runner::plan(std::span<const corpus::ChartRecord> records) const {
  std::vector<taskgen::PlanEntry> entries;
  if (!flags_.plan.empty()) {
    for (const auto& [line_no, line] : read_jsonl_lines(flags_.plan)) {
      const auto where = flags_.plan + ":" + std::to_string(line_no) + ": ";
      const auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("chart_id") || !j["chart_id"].is_string() ||
          !j.contains("task") || !j["task"].is_string()) {
        throw Error(ErrorCode::Config, where + "expected {\"chart_id\": ..., \"task\": ...}");
      }
      const auto task = taskgen::task_from_string(j["task"].get<std::string>());
      if (!task) throw Error(ErrorCode::Config, where + "unknown task '" + j["task"].get<std::string>() + "'");
      entries.push_back({j["chart_id"].get<std::string>(), *task});
    }
  } else if (!cfg_.tasks.empty()) {
    entries = taskgen::plan_cross_product(records, cfg_.tasks);
  } else if (cfg_.mix) {
    entries = taskgen::plan_tasks(records, *cfg_.mix, cfg_.seed, cfg_.requests_per_chart);
  } else {
    throw Error(ErrorCode::Config, "no generation plan: pass --plan, --tasks or --mix");
  }
  // A repeated (chart, task) pair renders the same prompt and fingerprint,
  // so it would only duplicate samples.
  std::set<std::pair<std::string, TaskKind>> seen;
  std::vector<taskgen::PlanEntry> unique;
  for (auto& e : entries) {
    if (seen.insert({e.chart_id, e.task}).second) unique.push_back(std::move(e));
  }
  return unique;
}

std::unique_ptr<gateway::Gateway> Runner::make_gateway() const {
  std::shared_ptr<gateway::ReplayStore> store;
  if (!cfg_.replay_dir.empty()) store = std::make_shared<gateway::ReplayStore>(cfg_.replay_dir);
  std::shared_ptr<gateway::ChatClient> client;
  if (cfg_.mode != gateway::Mode::Replay) {
    cfg_.provider.validate();
    if (cfg_.provider.endpoints.empty())
      throw Error(ErrorCode::Config, std::string(gateway::to_string(cfg_.mode)) + " mode requires config key 'providers'");
    for (const auto& [tier, ep] : cfg_.provider.endpoints) {
      if (ep.auth_env.empty()) {
        throw Error(ErrorCode::Config, "key 'providers." + std::string(taskgen::to_string(tier)) +
                                           ".auth_env': live and record modes need the token variable name");
      }
    }
    std::shared_ptr<gateway::Transport> transport =
        env_.transport_factory ? env_.transport_factory() : std::shared_ptr<gateway::Transport>(gateway::make_http_transport());
    client = std::make_shared<gateway::ChatClient>(cfg_.provider, transport);
    if (env_.env_lookup) client->set_env_lookup(env_.env_lookup);
    if (env_.sleeper) client->set_sleeper(env_.sleeper);
  }
  return std::make_unique<gateway::Gateway>(cfg_.mode, client, store);
}

std::vector<parsing::InstructionSample> Runner::load_dataset() const {
  const fs::path path = flags_.dataset.empty() ? cfg_.out / "dataset.jsonl" : fs::path(flags_.dataset);
  std::vector<parsing::InstructionSample> samples;
  for (const auto& [line_no, line] : read_jsonl_lines(path)) {
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Config, where + "not JSON");
    try {
      samples.push_back(parsing::sample_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, where + e.what());
    }
  }
  return samples;
}

int Runner::ingest() {
  std::vector<corpus::IngestFailure> failures;
  auto records = load_records(&failures);
  const auto total_lines = records.size() + failures.size();
  auto assigned = corpus::assign_splits(records, cfg_.split, cfg_.seed);
  write_jsonl("corpus.jsonl", assigned, [](const auto& r) { return corpus::record_to_json_line(r); });

  const auto stats = corpus::corpus_stats(assigned);
  ojson rep;
  rep["records"] = assigned.size();
  auto fails = ojson::array();
  for (const auto& f : failures) fails.push_back({{"line", f.line}, {"reason", f.reason}});
  rep["failures"] = std::move(fails);
  rep["per_source"] = stats.per_source;
  rep["per_chart_type"] = stats.per_chart_type;
  rep["per_split"] = stats.per_split;
  write("ingest_report.json", rep.dump(2) + "\n");
  archive_config();
  out_ << "ingest: " << assigned.size() << " records, " << failures.size() << " rejected of " << total_lines
       << " lines\n";
  return failures.empty() ? kExitOk : kExitPartial;
}

int Runner::generate() {
  std::vector<corpus::IngestFailure> ingest_failures;
  const auto records = load_records(&ingest_failures);
  const auto entries = plan(records);
  const auto tmpl = templates();
  auto gw = make_gateway();

  std::map<std::string, const corpus::ChartRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);

  struct Slot {
    std::optional<taskgen::GenerationRequest> request;
    std::string fingerprint;
    std::optional<gateway::ChatResponse> response;
    std::string error;
  };
  std::vector<Slot> slots(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto it = by_id.find(entries[i].chart_id);
    if (it == by_id.end()) {
      slots[i].error = "unknown chart " + entries[i].chart_id;
      continue;
    }
    slots[i].request = taskgen::build_prompt(*it->second, entries[i].task, tmpl, cfg_.routing);
    slots[i].fingerprint = gateway::fingerprint(slots[i].request->tier, slots[i].request->prompt_text);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const auto i = next.fetch_add(1);
      if (i >= slots.size()) return;
      auto& s = slots[i];
      if (!s.request) continue;
      try {
        s.response = gw->complete(gateway::ChatRequest::from(*s.request));
      } catch (const std::exception& e) {
        s.error = e.what();
      }
    }
  };
  const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(cfg_.provider.max_in_flight), slots.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<parsing::InstructionSample> samples;
  std::vector<parsing::ParseReport> reports;
  ojson failures = ojson::array();
  for (const auto& f : ingest_failures) failures.push_back({{"stage", "ingest"}, {"line", f.line}, {"reason", f.reason}});
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (!s.response) {
      failures.push_back({{"stage", "generate"},
                          {"chart_id", entries[i].chart_id},
                          {"task", std::string(taskgen::to_string(entries[i].task))},
                          {"fingerprint", s.fingerprint},
                          {"reason", s.error}});
      continue;
    }
    parsing::SampleContext ctx{entries[i].chart_id, s.request->tier, s.fingerprint};
    auto result = parsing::parse_completion(s.response->text, entries[i].task, ctx);
    for (auto& smp : result.samples) samples.push_back(std::move(smp));
    reports.push_back(std::move(result.report));
  }

  std::string plan_body;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ojson line{{"chart_id", entries[i].chart_id}, {"task", std::string(taskgen::to_string(entries[i].task))}};
    if (slots[i].request) {
      line["tier"] = std::string(taskgen::to_string(slots[i].request->tier));
      line["fingerprint"] = slots[i].fingerprint;
    }
    plan_body += line.dump() + "\n";
  }
  write("plan.jsonl", plan_body);
  write_jsonl("dataset.jsonl", samples, [](const auto& s) { return parsing::to_json(s).dump(); });
  write_jsonl("parse_reports.jsonl", reports, [](const auto& r) { return parsing::to_json(r).dump(); });
  write_jsonl("failures.jsonl", failures, [](const auto& f) { return f.dump(); });

  ojson summary;
  summary["requests"] = entries.size();
  summary["completed"] = reports.size();
  summary["failed"] = failures.size();
  summary["samples"] = samples.size();
  ojson per_task = ojson::object();
  for (const auto& r : reports) {
    auto& t = per_task[std::string(taskgen::to_string(r.task))];
    if (t.is_null()) t = {{"completions", 0}, {"accepted", 0}, {"rejected", 0}, {"in_range", 0}};
    t["completions"] = t["completions"].get<std::size_t>() + 1;
    t["accepted"] = t["accepted"].get<std::size_t>() + r.accepted;
    t["rejected"] = t["rejected"].get<std::size_t>() + r.rejected.size();
    t["in_range"] = t["in_range"].get<std::size_t>() + (r.in_range ? 1 : 0);
  }
  summary["per_task"] = std::move(per_task);
  write("generate_summary.json", summary.dump(2) + "\n");
  archive_config();

  out_ << "generate: " << entries.size() << " requests, " << reports.size() << " completed, " << failures.size()
       << " failed, " << samples.size() << " samples\n";
  for (const auto& f : failures) {
    if (f.contains("fingerprint")) out_ << "  failed " << f["chart_id"].get<std::string>() << " "
                                        << f["task"].get<std::string>() << ": " << f["reason"].get<std::string>() << "\n";
  }
  return failures.empty() ? kExitOk : kExitPartial;
}

int Runner::verify() {
  const auto samples = load_dataset();
  const auto records = load_records();
  std::map<std::string, const corpus::ChartRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);

  std::vector<tooldsl::VerifyJob> jobs;
  std::vector<std::string> missing;
  std::vector<parsing::StructureReport> code_reports;
  for (const auto& s : samples) {
    if (taskgen::is_cot(s.task)) {
      const auto it = by_id.find(s.chart_id);
      if (it == by_id.end()) {
        missing.push_back(s.id);
      } else {
        jobs.push_back({&s, it->second});
      }
    } else if (s.task == TaskKind::CodeGen) {
      code_reports.push_back(parsing::validate_code_structure(s));
    }
  }
  const auto results = tooldsl::verify_batch_parallel(jobs);

  std::string body;
  std::map<std::string, std::size_t> by_status;
  std::size_t flagged = 0, failed = 0;
  for (const auto& v : results) {
    body += tooldsl::to_json(v).dump() + "\n";
    ++by_status[std::string(tooldsl::to_string(v.outcome.status))];
    if (!v.crosscheck.all_found()) ++flagged;
    if (v.outcome.status != tooldsl::Status::ResolvedNumeric && v.outcome.status != tooldsl::Status::ResolvedLiteral)
      ++failed;
  }
  for (const auto& id : missing) {
    body += ojson{{"sample_id", id}, {"status", "missing_chart"}, {"failures", {"chart not in corpus"}},
                  {"crosscheck", ojson::array()}}.dump() + "\n";
  }
  write("verification.jsonl", body);

  std::size_t code_bad = 0;
  write_jsonl("code_structure.jsonl", code_reports, [&](const parsing::StructureReport& r) {
    auto v = ojson::array();
    for (auto x : r.violations) v.push_back(std::string(parsing::to_string(x)));
    if (!r.ok()) ++code_bad;
    return ojson{{"sample_id", r.sample_id},
                 {"ok", r.ok()},
                 {"function_name", r.function_name ? ojson(*r.function_name) : ojson(nullptr)},
                 {"violations", std::move(v)}}
        .dump();
  });

  ojson summary;
  summary["cot_samples"] = results.size() + missing.size();
  summary["by_status"] = by_status;
  summary["missing_chart"] = missing.size();
  summary["crosscheck_flagged"] = flagged;
  summary["code_samples"] = code_reports.size();
  summary["code_violations"] = code_bad;
  write("verify_summary.json", summary.dump(2) + "\n");
  archive_config();

  out_ << "verify: " << results.size() << " reasoning traces (" << failed << " failed, " << missing.size()
       << " without chart), " << code_reports.size() << " code samples (" << code_bad << " with violations)\n";
  return failed + missing.size() + code_bad == 0 ? kExitOk : kExitPartial;
}

int Runner::analyze() {
  const auto samples = load_dataset();
  std::optional<std::map<std::string, analysis::VerbObjectPair>> vo;
  if (!flags_.verb_annotations.empty()) vo = analysis::load_verb_object_annotations(flags_.verb_annotations);
  std::vector<analysis::AuditRecord> audit;
  if (!flags_.audit_annotations.empty()) {
    for (const auto& [line_no, line] : read_jsonl_lines(flags_.audit_annotations)) {
      const auto j = json::parse(line, nullptr, false);
      if (j.is_discarded())
        throw Error(ErrorCode::Config, flags_.audit_annotations + ":" + std::to_string(line_no) + ": not JSON");
      audit.push_back(analysis::audit_record_from_json(j));
    }
  }
  auto options = cfg_.analysis;
  options.seed = cfg_.seed;
  analysis::HashingEmbedder embedder;
  analysis::AnalysisInputs inputs;
  inputs.verb_annotations = vo ? &*vo : nullptr;
  inputs.audit_annotations = audit;
  const auto report = analysis::analyze_dataset(samples, options, embedder, inputs);
  write("analysis.json", report.dump(2) + "\n");

  const auto drawn = analysis::sample_for_audit(samples, std::min(options.audit_n, samples.size()), options.seed);
  write_jsonl("audit_sample.jsonl", drawn, [](const auto& r) { return analysis::to_json(r).dump(); });
  archive_config();
  out_ << "analyze: " << samples.size() << " samples, " << report["clusters"]["k"].get<std::size_t>()
       << " clusters, " << drawn.size() << " drawn for audit\n";
  return report["clusters"]["embedding_failures"].empty() ? kExitOk : kExitPartial;
}

int Runner::evaluate() {
  if (!flags_.predictions.empty() || !flags_.gold.empty()) {
    // Scoring only: {id, text} files for predictions and gold.
    if (flags_.predictions.empty() || flags_.gold.empty())
      throw Error(ErrorCode::Config, "--predictions and --gold go together");
    const auto tag = inference::benchmark_from_string(flags_.tag);
    if (!tag) throw Error(ErrorCode::Config, "--tag: unknown benchmark '" + flags_.tag + "'");
    auto read_texts = [](const std::string& path) {
      std::map<std::string, std::string> out;
      for (const auto& [line_no, line] : read_jsonl_lines(path)) {
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("text") ||
            !j["text"].is_string())
          throw Error(ErrorCode::Config, path + ":" + std::to_string(line_no) + ": expected {\"id\", \"text\"}");
        out[j["id"].get<std::string>()] = j["text"].get<std::string>();
      }
      return out;
    };
    const auto preds = read_texts(flags_.predictions);
    const auto gold = read_texts(flags_.gold);
    std::vector<inference::BenchmarkItem> items;
    std::vector<inference::PredictionRecord> records;
    for (const auto& [id, text] : gold) {
      items.push_back({id, "", "", text, *tag});
      if (const auto it = preds.find(id); it != preds.end())
        records.push_back({id, *tag, it->second, inference::extract_final_answer(it->second, *tag), {}, ""});
    }
    const auto scores = inference::score_predictions(items, records);
    auto arr = ojson::array();
    for (const auto& s : scores) arr.push_back(inference::to_json(s));
    write("scores.json", arr.dump(2) + "\n");
    archive_config();
    for (const auto& s : arr) out_ << "evaluate: " << s.dump() << "\n";
    return records.size() == items.size() ? kExitOk : kExitPartial;
  }

  if (flags_.benchmark.empty()) throw Error(ErrorCode::Config, "evaluate needs --benchmark (or --predictions/--gold)");
  const auto items = inference::load_benchmark(flags_.benchmark);
  const auto records = load_records();
  auto gw = make_gateway();
  inference::RunOptions opts;
  opts.tier = cfg_.inference_tier;
  opts.workers = cfg_.provider.max_in_flight;
  const auto run = inference::run_benchmark(items, records, *gw, opts);

  write_jsonl("predictions.jsonl", run.predictions, [](const auto& p) { return inference::to_json(p).dump(); });
  write_jsonl("eval_failures.jsonl", run.failures, [](const inference::ItemFailure& f) {
    return ojson{{"id", f.id}, {"fingerprint", f.fingerprint}, {"reason", f.reason}}.dump();
  });
  auto arr = ojson::array();
  for (const auto& s : run.scores) arr.push_back(inference::to_json(s));
  write("scores.json", arr.dump(2) + "\n");
  archive_config();
  for (const auto& s : arr) out_ << "evaluate: " << s.dump() << "\n";
  for (const auto& f : run.failures) out_ << "  failed " << f.id << ": " << f.reason << "\n";
  return run.failures.empty() ? kExitOk : kExitPartial;
}

int Runner::stats() {
  if (flags_.ratings.empty()) throw Error(ErrorCode::Config, "stats needs --ratings FILE...");
  std::vector<fs::path> paths(flags_.ratings.begin(), flags_.ratings.end());
  std::vector<metrics::RatingRecord> ratings;
  try {
    ratings = metrics::load_ratings(paths);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseFailure) throw Error(ErrorCode::Config, e.what());
    throw;
  }
  const auto report = metrics::aggregate_human_eval(ratings, cfg_.human_eval);
  const auto j = metrics::to_json(report);
  write("human_eval.json", j.dump(2) + "\n");
  archive_config();
  out_ << j.dump(2) << "\n";
  return kExitOk;
}

int Runner::replay_audit() {
  if (cfg_.replay_dir.empty()) throw Error(ErrorCode::Config, "replay-audit needs a replay directory");
  const gateway::ReplayStore store(cfg_.replay_dir);
  ojson missing = ojson::array();
  std::size_t checked = 0;
  const auto records = load_records();
  if (!flags_.benchmark.empty()) {
    const auto items = inference::load_benchmark(flags_.benchmark);
    std::map<std::string, const corpus::ChartRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    for (const auto& item : items) {
      const auto it = by_id.find(item.chart_id);
      if (it == by_id.end()) throw Error(ErrorCode::MissingChart, "item " + item.id + " names unknown chart " + item.chart_id);
      const auto fp = gateway::fingerprint(cfg_.inference_tier, inference::build_inference_prompt(*it->second, item.instruction));
      ++checked;
      if (!store.contains(fp)) missing.push_back({{"id", item.id}, {"fingerprint", fp}});
    }
  } else {
    const auto entries = plan(records);
    const auto tmpl = templates();
    std::map<std::string, const corpus::ChartRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    for (const auto& e : entries) {
      const auto it = by_id.find(e.chart_id);
      if (it == by_id.end()) throw Error(ErrorCode::MissingChart, "plan names unknown chart " + e.chart_id);
      const auto req = taskgen::build_prompt(*it->second, e.task, tmpl, cfg_.routing);
      const auto fp = gateway::fingerprint(req.tier, req.prompt_text);
      ++checked;
      if (!store.contains(fp)) {
        missing.push_back({{"chart_id", e.chart_id}, {"task", std::string(taskgen::to_string(e.task))}, {"fingerprint", fp}});
      }
    }
  }
  write_jsonl("missing_fixtures.jsonl", missing, [](const auto& m) { return m.dump(); });
  archive_config();
  out_ << "replay-audit: " << checked << " requests, " << missing.size() << " missing fixtures\n";
  for (const auto& m : missing) out_ << "  missing " << m["fingerprint"].get<std::string>() << "\n";
  return missing.empty() ? kExitOk : kExitPartial;
}

bool is_config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::FileUnreadable:
    case ErrorCode::BadMix:
    case ErrorCode::BadRatios:
    case ErrorCode::TemplateInvalid:
    case ErrorCode::MissingChart:
    case ErrorCode::BadK:
    case ErrorCode::NTooLarge:
      return true;
    default:
      return false;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, const CliEnv& env) {
  std::ostream& out = env.out ? *env.out : std::cout;
  std::ostream& err = env.err ? *env.err : std::cerr;

  CLI::App app{"Chart instruction-data toolkit: ingest, generate, verify, analyze, evaluate, stats"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--mode", f.mode, "live, replay or record");
    sub->add_option("--seed", f.seed, "seed for every random choice");
    sub->add_option("--out", f.out, "output directory");
  };
  auto plan_flags = [&](CLI::App* sub) {
    sub->add_option("--corpus", f.corpus, "chart corpus (JSON Lines)");
    sub->add_option("--templates", f.templates, "prompt template directory");
    sub->add_option("--replay-dir", f.replay_dir, "replay fixture directory");
    sub->add_option("--tasks", f.tasks, "comma-separated tasks, every task for every chart");
    sub->add_option("--mix", f.mix, "task weights, e.g. open_qa=0.5,fact_checking=0.5");
    sub->add_option("--plan", f.plan, "explicit plan (JSON Lines of {chart_id, task})");
    sub->add_option("--requests-per-chart", f.requests_per_chart, "requests per chart under --mix");
  };

  auto* ingest = app.add_subcommand("ingest", "load a corpus, assign splits, report statistics");
  common(ingest);
  ingest->add_option("--corpus", f.corpus, "chart corpus (JSON Lines)");

  auto* generate = app.add_subcommand("generate", "build prompts, query the gateway, parse samples");
  common(generate);
  plan_flags(generate);

  auto* verify = app.add_subcommand("verify", "check tool-call traces and generated code");
  common(verify);
  verify->add_option("--corpus", f.corpus, "chart corpus (JSON Lines)");
  verify->add_option("--dataset", f.dataset, "samples (default <out>/dataset.jsonl)");

  auto* analyze = app.add_subcommand("analyze", "diversity and quality report");
  common(analyze);
  analyze->add_option("--dataset", f.dataset, "samples (default <out>/dataset.jsonl)");
  analyze->add_option("--annotations", f.verb_annotations, "pre-parsed verb/object pairs (JSON Lines)");
  analyze->add_option("--audit-annotations", f.audit_annotations, "annotated audit records (JSON Lines)");
  analyze->add_option("--k", f.k, "clusters for novel tasks");
  analyze->add_option("--audit-n", f.audit_n, "audit sample size");

  auto* evaluate = app.add_subcommand("evaluate", "run a benchmark through the gateway and score it");
  common(evaluate);
  evaluate->add_option("--corpus", f.corpus, "chart corpus (JSON Lines)");
  evaluate->add_option("--replay-dir", f.replay_dir, "replay fixture directory");
  evaluate->add_option("--benchmark", f.benchmark, "benchmark items (JSON Lines)");
  evaluate->add_option("--predictions", f.predictions, "score existing predictions ({id, text} JSON Lines)");
  evaluate->add_option("--gold", f.gold, "gold answers for --predictions");
  evaluate->add_option("--tag", f.tag, "benchmark tag for --predictions scoring");

  auto* stats = app.add_subcommand("stats", "human-evaluation means, Mann-Whitney tests and kappa");
  common(stats);
  stats->add_option("--ratings", f.ratings, "rating files (JSON Lines)")->expected(1, -1);
  stats->add_option("--mw-input", f.mw_input, "sample_means or raw_scores");
  stats->add_option("--kappa-weighting", f.kappa_weighting, "unweighted, linear or quadratic");

  auto* audit = app.add_subcommand("replay-audit", "list fixtures missing for a plan or benchmark");
  common(audit);
  plan_flags(audit);
  audit->add_option("--benchmark", f.benchmark, "benchmark items (JSON Lines)");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("chartinstruct");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    Runner runner(resolve_config(f), f, env, out);
    if (*ingest) return runner.ingest();
    if (*generate) return runner.generate();
    if (*verify) return runner.verify();
    if (*analyze) return runner.analyze();
    if (*evaluate) return runner.evaluate();
    if (*stats) return runner.stats();
    if (*audit) return runner.replay_audit();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_config_error(e.code()) ? kExitConfig : kExitPartial;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitConfig;
}

}  // namespace chartinstruct::cli
