#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chartinstruct/taskgen.hpp"

namespace chartinstruct::parsing {

using taskgen::ModelTier;
using taskgen::SampleRange;
using taskgen::TaskKind;

enum class Verdict { Accept, Refute };

std::string_view to_string(Verdict v);
// "Supports"/"Refutes" in any case, plus the accept/refute labels themselves.
std::optional<Verdict> verdict_from_token(std::string_view token);

struct InstructionSample {
  std::string id;  // "<chart_id>#<task>#<index>"
  std::string chart_id;
  TaskKind task = TaskKind::Summarization;
  std::string input_text;
  std::string output_text;
  std::optional<std::string> steps;             // CoT kinds only
  std::optional<std::string> code;              // CodeGen only
  std::optional<std::string> novel_task_label;  // Novel only
  std::optional<Verdict> verdict;               // FactChecking only
  ModelTier generator_tier = ModelTier::Standard;

  bool operator==(const InstructionSample&) const = default;
};

nlohmann::ordered_json to_json(const InstructionSample& s);
// Throws Error(ParseFailure) on a missing or mistyped field.
InstructionSample sample_from_json(const nlohmann::json& j);

struct Rejection {
  std::size_t offset = 0;  // byte offset (text parsers) or element index (JSON parsers)
  std::string reason;
};

struct ParseReport {
  std::string raw_fingerprint;
  TaskKind task = TaskKind::Summarization;
  std::size_t detected = 0;
  std::size_t accepted = 0;
  std::vector<Rejection> rejected;
  SampleRange expected;
  bool in_range = false;  // accepted count inside the expected range

  bool conserved() const { return accepted + rejected.size() == detected; }
};

nlohmann::ordered_json to_json(const ParseReport& r);

struct ParseResult {
  std::vector<InstructionSample> samples;
  ParseReport report;
};

// Context stamped onto every produced sample.
struct SampleContext {
  std::string chart_id;
  ModelTier tier = ModelTier::Standard;
  std::string fingerprint;
};

// OpenQA and FactChecking: "~question ^answer" segments. FactChecking also
// accepts "Claim: ... Verdict: ..." blocks when no '~' marker is present.
ParseResult parse_tilde_caret(std::string_view text, TaskKind task, const SampleContext& ctx = {});

// CoT kinds: a JSON array of {question, steps, answer} objects. Throws
// Error(NotJson) when the text is not JSON at all.
ParseResult parse_cot_json(std::string_view text, TaskKind task, const SampleContext& ctx = {});

// CodeGen: "~question^" headers each followed by a code block.
ParseResult parse_code_pairs(std::string_view text, const SampleContext& ctx = {});

// Novel: JSON elements with task type, input and expected output. Throws
// Error(NotJson).
ParseResult parse_novel_json(std::string_view text, const SampleContext& ctx = {});

// Summarization: the whole completion is one summary.
ParseResult parse_summary(std::string_view text, const SampleContext& ctx = {});

// Dispatches on task. JSON tasks that fail with NotJson come back as a
// report with a single rejected candidate instead of throwing.
ParseResult parse_completion(std::string_view text, TaskKind task, const SampleContext& ctx = {});

// Extracted instruction used for summarization samples.
inline constexpr std::string_view kSummaryInstruction = "Summarize the chart.";

// Strips one Markdown code fence around the payload and drops trailing
// commas before ']' or '}' outside string literals.
std::string relax_json(std::string_view text);

enum class CodeViolation { NoFunction, MultipleFunctions, HasParameters, MissingInformation, MissingReturn };

std::string_view to_string(CodeViolation v);

struct StructureReport {
  std::string sample_id;
  std::vector<CodeViolation> violations;
  std::optional<std::string> function_name;

  bool ok() const { return violations.empty(); }
  bool has(CodeViolation v) const;
};

// Lexical checks on generated Python; never executes it.
StructureReport validate_code_structure(const InstructionSample& sample);
StructureReport validate_code_structure(std::string_view code);

}  // namespace chartinstruct::parsing
