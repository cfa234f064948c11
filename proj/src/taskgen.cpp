#include "chartinstruct/taskgen.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "chartinstruct/error.hpp"
#include "chartinstruct/numeric.hpp"
#include "chartinstruct/resources.hpp"
#include "chartinstruct/rng.hpp"

namespace chartinstruct::taskgen {

namespace {

constexpr std::string_view kTitle = "{{title}}";
constexpr std::string_view kTable = "{{table}}";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

void validate_template(TaskKind task, const std::string& text) {
  if (count_occurrences(text, kTitle) != 1 || count_occurrences(text, kTable) != 1) {
    throw Error(ErrorCode::TemplateInvalid,
                "template for " + std::string(to_string(task)) +
                    " must contain {{title}} and {{table}} exactly once");
  }
}

}  // namespace

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Summarization: return "summarization";
    case TaskKind::OpenQA: return "open_qa";
    case TaskKind::FactChecking: return "fact_checking";
    case TaskKind::CotVarIndependent: return "cot_var_independent";
    case TaskKind::CotVarDependent: return "cot_var_dependent";
    case TaskKind::CodeGen: return "code_gen";
    case TaskKind::Novel: return "novel";
  }
  return "summarization";
}

std::optional<TaskKind> task_from_string(std::string_view name) {
  const std::string n = to_lower(trim(name));
  for (auto t : kAllTasks) {
    if (n == to_string(t)) return t;
  }
  return std::nullopt;
}

bool is_cot(TaskKind task) {
  return task == TaskKind::CotVarIndependent || task == TaskKind::CotVarDependent;
}

SampleRange expected_samples(TaskKind task) {
  switch (task) {
    case TaskKind::Summarization: return {1, 1};
    case TaskKind::OpenQA: return {5, 6};
    case TaskKind::FactChecking: return {5, 6};
    case TaskKind::CotVarIndependent: return {6, 6};
    case TaskKind::CotVarDependent: return {6, 6};
    case TaskKind::CodeGen: return {8, 8};
    case TaskKind::Novel: return {10, 10};
  }
  return {1, 1};
}

std::string_view to_string(ModelTier tier) {
  return tier == ModelTier::Standard ? "standard" : "advanced";
}

std::optional<ModelTier> tier_from_string(std::string_view name) {
  if (iequals(trim(name), "standard")) return ModelTier::Standard;
  if (iequals(trim(name), "advanced")) return ModelTier::Advanced;
  return std::nullopt;
}

ModelTier route_model(TaskKind task, const RoutingConfig& config) {
  switch (task) {
    case TaskKind::Summarization:
    case TaskKind::OpenQA:
    case TaskKind::FactChecking:
      return ModelTier::Standard;
    case TaskKind::CotVarIndependent:
    case TaskKind::CotVarDependent:
    case TaskKind::Novel:
      return ModelTier::Advanced;
    case TaskKind::CodeGen:
      return config.code_gen;
  }
  return ModelTier::Standard;
}

TemplateSet TemplateSet::from_texts(std::map<TaskKind, std::string> texts, std::string version) {
  for (auto t : kAllTasks) {
    const auto it = texts.find(t);
    if (it == texts.end())
      throw Error(ErrorCode::TemplateInvalid, "missing template for " + std::string(to_string(t)));
    validate_template(t, it->second);
  }
  TemplateSet set;
  set.texts_ = std::move(texts);
  set.version_ = std::move(version);
  return set;
}

TemplateSet TemplateSet::builtin() {
  static const TemplateSet set = [] {
    std::map<TaskKind, std::string> texts;
    for (auto t : kAllTasks) {
      const std::string path = "templates/v1/" + std::string(to_string(t)) + ".txt";
      const auto content = resources::find(path);
      if (!content) throw Error(ErrorCode::TemplateInvalid, "builtin template missing: " + path);
      texts[t] = std::string(*content);
    }
    return from_texts(std::move(texts), "v1");
  }();
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  std::map<TaskKind, std::string> texts;
  for (auto t : kAllTasks) {
    const auto path = dir / (std::string(to_string(t)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::TemplateInvalid, "cannot read template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    texts[t] = buf.str();
  }
  return from_texts(std::move(texts), dir.filename().string());
}

std::string TemplateSet::render(TaskKind task, std::string_view title,
                                std::string_view table) const {
  const std::string& tpl = text(task);
  // Single pass: substituted text is never rescanned for placeholders.
  std::string out;
  out.reserve(tpl.size() + title.size() + table.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto a = tpl.find(kTitle, pos);
    const auto b = tpl.find(kTable, pos);
    const auto next = std::min(a, b);
    if (next == std::string::npos) {
      out.append(tpl, pos, std::string::npos);
      break;
    }
    out.append(tpl, pos, next - pos);
    if (next == a) {
      out.append(title);
      pos = next + kTitle.size();
    } else {
      out.append(table);
      pos = next + kTable.size();
    }
  }
  return out;
}

GenerationRequest build_prompt(const corpus::ChartRecord& record, TaskKind task,
                               const TemplateSet& templates, const RoutingConfig& routing) {
  GenerationRequest req;
  req.chart_id = record.id;
  req.task = task;
  req.tier = route_model(task, routing);
  req.prompt_text =
      templates.render(task, record.title, corpus::serialize_data_table(record.table));
  req.expected = expected_samples(task);
  return req;
}

TaskMix parse_mix(std::string_view text) {
  TaskMix mix;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto item = trim(text.substr(start, end - start));
    start = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::BadMix, "mix entry '" + std::string(item) + "' is not TASK=FRACTION");
    const auto task = task_from_string(item.substr(0, eq));
    if (!task) throw Error(ErrorCode::BadMix, "unknown task '" + std::string(item.substr(0, eq)) + "'");
    const auto value = parse_chart_number(item.substr(eq + 1));
    if (!value || !value->unit.empty())
      throw Error(ErrorCode::BadMix, "bad fraction in mix entry '" + std::string(item) + "'");
    mix[*task] = value->value;
  }
  return mix;
}

std::vector<PlanEntry> plan_tasks(std::span<const corpus::ChartRecord> records, const TaskMix& mix,
                                  std::uint64_t seed, std::size_t requests_per_chart) {
  if (mix.empty()) throw Error(ErrorCode::BadMix, "task mix is empty");
  if (requests_per_chart == 0) throw Error(ErrorCode::BadMix, "requests per chart must be >= 1");
  double total_fraction = 0.0;
  for (const auto& [task, f] : mix) {
    if (!(f >= 0.0) || !std::isfinite(f))
      throw Error(ErrorCode::BadMix, "fraction for " + std::string(to_string(task)) + " is negative");
    total_fraction += f;
  }
  if (std::abs(total_fraction - 1.0) > 1e-9) throw Error(ErrorCode::BadMix, "mix fractions must sum to 1");

  const std::size_t total = records.size() * requests_per_chart;
  // Largest remainder over TaskKind order; ties go to the earlier task.
  std::vector<std::pair<TaskKind, std::size_t>> counts;
  std::vector<double> remainders;
  std::size_t assigned = 0;
  for (auto t : kAllTasks) {
    const auto it = mix.find(t);
    const double f = it == mix.end() ? 0.0 : it->second;
    const double quota = f * static_cast<double>(total);
    const double floored = std::floor(quota + 1e-9);
    counts.emplace_back(t, static_cast<std::size_t>(floored));
    remainders.push_back(f > 0.0 ? std::max(0.0, quota - floored) : -1.0);
    assigned += static_cast<std::size_t>(floored);
  }
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b] + 1e-12;
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % order.size()]].second;

  std::vector<TaskKind> labels;
  labels.reserve(total);
  for (const auto& [t, c] : counts) labels.insert(labels.end(), c, t);
  Rng rng(seed);
  rng.shuffle(labels);

  std::vector<PlanEntry> plan;
  plan.reserve(total);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t r = 0; r < requests_per_chart; ++r) {
      plan.push_back({records[i].id, labels[i * requests_per_chart + r]});
    }
  }
  return plan;
}

std::vector<PlanEntry> plan_cross_product(std::span<const corpus::ChartRecord> records,
                                          std::span<const TaskKind> tasks) {
  std::vector<PlanEntry> plan;
  for (const auto& r : records) {
    for (auto t : tasks) plan.push_back({r.id, t});
  }
  return plan;
}

std::vector<GenerationRequest> plan_generation(std::span<const corpus::ChartRecord> records,
                                               const TaskMix& mix, std::uint64_t seed,
                                               const TemplateSet& templates,
                                               const RoutingConfig& routing,
                                               std::size_t requests_per_chart) {
  const auto plan = plan_tasks(records, mix, seed, requests_per_chart);
  std::vector<GenerationRequest> out;
  out.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    out.push_back(build_prompt(records[i / requests_per_chart], plan[i].task, templates, routing));
  }
  return out;
}

}  // namespace chartinstruct::taskgen
