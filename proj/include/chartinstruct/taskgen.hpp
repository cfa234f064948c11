#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chartinstruct/corpus.hpp"

namespace chartinstruct::taskgen {

enum class TaskKind {
  Summarization,
  OpenQA,
  FactChecking,
  CotVarIndependent,
  CotVarDependent,
  CodeGen,
  Novel,
};

inline constexpr std::array<TaskKind, 7> kAllTasks = {
    TaskKind::Summarization,     TaskKind::OpenQA,  TaskKind::FactChecking,
    TaskKind::CotVarIndependent, TaskKind::CotVarDependent, TaskKind::CodeGen,
    TaskKind::Novel,
};

// snake_case names used in files and on the command line.
std::string_view to_string(TaskKind task);
std::optional<TaskKind> task_from_string(std::string_view name);

bool is_cot(TaskKind task);

struct SampleRange {
  int min = 1;
  int max = 1;

  bool contains(std::size_t n) const {
    return n >= static_cast<std::size_t>(min) && n <= static_cast<std::size_t>(max);
  }
  bool operator==(const SampleRange&) const = default;
};

// How many samples one completion is asked to produce.
SampleRange expected_samples(TaskKind task);

enum class ModelTier { Standard, Advanced };

std::string_view to_string(ModelTier tier);
std::optional<ModelTier> tier_from_string(std::string_view name);

struct RoutingConfig {
  ModelTier code_gen = ModelTier::Standard;
};

ModelTier route_model(TaskKind task, const RoutingConfig& config = {});

// One prompt file per task with {{title}} and {{table}} placeholders, each
// appearing exactly once.
class TemplateSet {
 public:
  // The v1 templates compiled into the library.
  static TemplateSet builtin();
  // Reads <dir>/<task>.txt for every task. Throws Error(TemplateInvalid).
  static TemplateSet load(const std::filesystem::path& dir);
  static TemplateSet from_texts(std::map<TaskKind, std::string> texts, std::string version);

  const std::string& text(TaskKind task) const { return texts_.at(task); }
  const std::string& version() const { return version_; }

  std::string render(TaskKind task, std::string_view title, std::string_view table) const;

 private:
  std::map<TaskKind, std::string> texts_;
  std::string version_;
};

struct GenerationRequest {
  std::string chart_id;
  TaskKind task = TaskKind::Summarization;
  ModelTier tier = ModelTier::Standard;
  std::string prompt_text;
  SampleRange expected;
};

GenerationRequest build_prompt(const corpus::ChartRecord& record, TaskKind task,
                               const TemplateSet& templates = TemplateSet::builtin(),
                               const RoutingConfig& routing = {});

using TaskMix = std::map<TaskKind, double>;

// Parses "open_qa=0.5,fact_checking=0.5". Throws Error(BadMix).
TaskMix parse_mix(std::string_view text);

struct PlanEntry {
  std::string chart_id;
  TaskKind task = TaskKind::Summarization;

  bool operator==(const PlanEntry&) const = default;
};

// requests_per_chart * records.size() requests split across the mix by
// largest-remainder rounding; chart i gets a contiguous block of the
// seed-shuffled task labels. Throws Error(BadMix).
std::vector<PlanEntry> plan_tasks(std::span<const corpus::ChartRecord> records, const TaskMix& mix,
                                  std::uint64_t seed, std::size_t requests_per_chart = 1);

// Every listed task for every chart, in corpus order.
std::vector<PlanEntry> plan_cross_product(std::span<const corpus::ChartRecord> records,
                                          std::span<const TaskKind> tasks);

std::vector<GenerationRequest> plan_generation(std::span<const corpus::ChartRecord> records,
                                               const TaskMix& mix, std::uint64_t seed,
                                               const TemplateSet& templates = TemplateSet::builtin(),
                                               const RoutingConfig& routing = {},
                                               std::size_t requests_per_chart = 1);

}  // namespace chartinstruct::taskgen
