#include "chartinstruct/parsing.hpp"

#include <cctype>

#include "chartinstruct/error.hpp"
#include "chartinstruct/numeric.hpp"

namespace chartinstruct::parsing {

using nlohmann::json;

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Removes a leading "Label:" (case-insensitive) from a trimmed string.
std::string_view strip_label(std::string_view s, std::initializer_list<std::string_view> labels) {
  s = trim(s);
  for (auto label : labels) {
    if (istarts_with(s, label)) {
      auto rest = trim(s.substr(label.size()));
      if (!rest.empty() && rest.front() == ':') return trim(rest.substr(1));
    }
  }
  return s;
}

std::string make_id(const SampleContext& ctx, TaskKind task, std::size_t index) {
  return ctx.chart_id + "#" + std::string(taskgen::to_string(task)) + "#" + std::to_string(index);
}

ParseReport start_report(TaskKind task, const SampleContext& ctx) {
  ParseReport r;
  r.raw_fingerprint = ctx.fingerprint;
  r.task = task;
  r.expected = taskgen::expected_samples(task);
  return r;
}

void finish(ParseResult& result) {
  result.report.accepted = result.samples.size();
  result.report.in_range = result.report.expected.contains(result.report.accepted);
}

InstructionSample base_sample(const SampleContext& ctx, TaskKind task, std::size_t index) {
  InstructionSample s;
  s.id = make_id(ctx, task, index);
  s.chart_id = ctx.chart_id;
  s.task = task;
  s.generator_tier = ctx.tier;
  return s;
}

std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    if (iequals(hay.substr(i, needle.size()), needle)) return i;
  }
  return std::string_view::npos;
}

// Verdict check shared by both fact-checking layouts.
std::optional<std::string> accept_fact_check(std::string_view claim, std::string_view answer,
                                             std::size_t offset, ParseResult& result,
                                             const SampleContext& ctx) {
  if (claim.empty()) return "empty claim";
  if (answer.empty()) return "empty answer";
  std::size_t end = 0;
  while (end < answer.size() && std::isalpha(static_cast<unsigned char>(answer[end]))) ++end;
  const auto verdict = verdict_from_token(answer.substr(0, end));
  if (!verdict) return "missing verdict (expected Supports or Refutes)";
  auto s = base_sample(ctx, TaskKind::FactChecking, result.samples.size());
  s.input_text = std::string(claim);
  s.output_text = std::string(answer);
  s.verdict = verdict;
  (void)offset;
  result.samples.push_back(std::move(s));
  return std::nullopt;
}

std::vector<std::size_t> marker_positions(std::string_view text, char marker) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == marker) pos.push_back(i);
  }
  return pos;
}

// Parses relaxed JSON; falls back to the outermost [...] or {...} span when
// the model wrapped the payload in prose.
std::optional<json> parse_loose_json(std::string_view text) {
  auto relaxed = relax_json(text);
  auto j = json::parse(relaxed, nullptr, false);
  if (!j.is_discarded()) return j;
  for (auto [open, close] : {std::pair{'[', ']'}, std::pair{'{', '}'}}) {
    const auto a = relaxed.find(open);
    const auto b = relaxed.rfind(close);
    if (a != std::string::npos && b != std::string::npos && b > a) {
      auto inner = json::parse(relaxed.substr(a, b - a + 1), nullptr, false);
      if (!inner.is_discarded()) return inner;
    }
  }
  return std::nullopt;
}

std::string normalize_key(std::string_view key) {
  std::string k = to_lower(trim(key));
  for (char& c : k) {
    if (c == '_' || c == '-') c = ' ';
  }
  return k;
}

}  // namespace

std::string_view to_string(Verdict v) { return v == Verdict::Accept ? "accept" : "refute"; }

std::optional<Verdict> verdict_from_token(std::string_view token) {
  const std::string t = to_lower(trim(token));
  if (t == "supports" || t == "support" || t == "accept") return Verdict::Accept;
  if (t == "refutes" || t == "refute") return Verdict::Refute;
  return std::nullopt;
}

nlohmann::ordered_json to_json(const InstructionSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["chart_id"] = s.chart_id;
  j["task"] = std::string(taskgen::to_string(s.task));
  j["input_text"] = s.input_text;
  j["output_text"] = s.output_text;
  if (s.steps) j["steps"] = *s.steps;
  if (s.code) j["code"] = *s.code;
  if (s.novel_task_label) j["novel_task_label"] = *s.novel_task_label;
  if (s.verdict) j["verdict"] = std::string(to_string(*s.verdict));
  j["generator_tier"] = std::string(taskgen::to_string(s.generator_tier));
  return j;
}

InstructionSample sample_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseFailure, "sample is not a JSON object");
  auto str = [&](const char* key) -> std::string {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw Error(ErrorCode::ParseFailure, std::string("sample field ") + key + " missing or not a string");
    return it->get<std::string>();
  };
  auto opt = [&](const char* key) -> std::optional<std::string> {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::ParseFailure, std::string("sample field ") + key + " is not a string");
    return it->get<std::string>();
  };
  InstructionSample s;
  s.id = str("id");
  s.chart_id = str("chart_id");
  const auto task = taskgen::task_from_string(str("task"));
  if (!task) throw Error(ErrorCode::ParseFailure, "unknown task " + str("task"));
  s.task = *task;
  s.input_text = str("input_text");
  s.output_text = str("output_text");
  s.steps = opt("steps");
  s.code = opt("code");
  s.novel_task_label = opt("novel_task_label");
  if (auto v = opt("verdict")) {
    s.verdict = verdict_from_token(*v);
    if (!s.verdict) throw Error(ErrorCode::ParseFailure, "unknown verdict " + *v);
  }
  const auto tier = taskgen::tier_from_string(str("generator_tier"));
  if (!tier) throw Error(ErrorCode::ParseFailure, "unknown generator_tier");
  s.generator_tier = *tier;
  return s;
}

nlohmann::ordered_json to_json(const ParseReport& r) {
  nlohmann::ordered_json j;
  j["raw_fingerprint"] = r.raw_fingerprint;
  j["task"] = std::string(taskgen::to_string(r.task));
  j["detected"] = r.detected;
  j["accepted"] = r.accepted;
  auto rejected = nlohmann::ordered_json::array();
  for (const auto& x : r.rejected) rejected.push_back({{"offset", x.offset}, {"reason", x.reason}});
  j["rejected"] = std::move(rejected);
  j["expected"] = {{"min", r.expected.min}, {"max", r.expected.max}};
  j["in_range"] = r.in_range;
  return j;
}

std::string relax_json(std::string_view text) {
  std::string_view s = trim(text);
  if (s.starts_with("```")) {
    const auto nl = s.find('\n');
    s = nl == std::string_view::npos ? std::string_view{} : s.substr(nl + 1);
    s = trim(s);
    if (s.ends_with("```")) s.remove_suffix(3);
  }
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == ',') {
      std::size_t k = i + 1;
      while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
      if (k < s.size() && (s[k] == ']' || s[k] == '}')) continue;
    }
    out.push_back(c);
  }
  return out;
}

ParseResult parse_tilde_caret(std::string_view text, TaskKind task, const SampleContext& ctx) {
  ParseResult result;
  result.report = start_report(task, ctx);
  const bool fc = task == TaskKind::FactChecking;
  const auto markers = marker_positions(text, '~');

  if (markers.empty() && fc) {
    // "Claim: ... Verdict: ..." blocks.
    std::vector<std::size_t> starts;
    for (auto p = find_ci(text, "claim:"); p != std::string_view::npos; p = find_ci(text, "claim:", p + 6))
      starts.push_back(p);
    result.report.detected = starts.size();
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const auto begin = starts[i] + 6;
      const auto end = i + 1 < starts.size() ? starts[i + 1] : text.size();
      const auto block = text.substr(begin, end - begin);
      const auto v = find_ci(block, "verdict:");
      if (v == std::string_view::npos) {
        result.report.rejected.push_back({starts[i], "missing verdict label"});
        continue;
      }
      const auto claim = trim(block.substr(0, v));
      const auto answer = trim(block.substr(v + 8));
      if (auto why = accept_fact_check(claim, answer, starts[i], result, ctx))
        result.report.rejected.push_back({starts[i], *why});
    }
    finish(result);
    return result;
  }

  result.report.detected = markers.size();
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const auto begin = markers[i] + 1;
    const auto end = i + 1 < markers.size() ? markers[i + 1] : text.size();
    const auto segment = text.substr(begin, end - begin);
    const auto caret = segment.find('^');
    if (caret == std::string_view::npos) {
      result.report.rejected.push_back({markers[i], "missing answer marker"});
      continue;
    }
    const auto question = strip_label(segment.substr(0, caret), {"claim", "question", "q"});
    const auto answer = strip_label(segment.substr(caret + 1), {"verdict", "answer", "a"});
    if (fc) {
      if (auto why = accept_fact_check(question, answer, markers[i], result, ctx))
        result.report.rejected.push_back({markers[i], *why});
      continue;
    }
    if (question.empty()) {
      result.report.rejected.push_back({markers[i], "empty question"});
      continue;
    }
    if (answer.empty()) {
      result.report.rejected.push_back({markers[i], "empty answer"});
      continue;
    }
    auto s = base_sample(ctx, task, result.samples.size());
    s.input_text = std::string(question);
    s.output_text = std::string(answer);
    result.samples.push_back(std::move(s));
  }
  finish(result);
  return result;
}

ParseResult parse_cot_json(std::string_view text, TaskKind task, const SampleContext& ctx) {
  const auto parsed = parse_loose_json(text);
  if (!parsed) throw Error(ErrorCode::NotJson, "completion is not JSON");
  const json& root = *parsed;

  std::vector<json> elements;
  if (root.is_array()) {
    elements.assign(root.begin(), root.end());
  } else if (root.is_object() && !root.contains("question") && root.size() == 1 &&
             root.begin()->is_array()) {
    elements.assign(root.begin()->begin(), root.begin()->end());
  } else {
    elements.push_back(root);
  }

  ParseResult result;
  result.report = start_report(task, ctx);
  result.report.detected = elements.size();
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const json& e = elements[i];
    auto reject = [&](std::string why) { result.report.rejected.push_back({i, std::move(why)}); };
    if (!e.is_object()) {
      reject("element is not an object");
      continue;
    }
    std::optional<std::string> problem;
    for (const char* field : {"question", "steps", "answer"}) {
      const auto it = e.find(field);
      if (it == e.end()) {
        problem = std::string("missing field ") + field;
        break;
      }
      if (!it->is_string()) {
        problem = std::string("field ") + field + " is not a string";
        break;
      }
    }
    if (!problem) {
      for (const auto& [key, _] : e.items()) {
        if (key != "question" && key != "steps" && key != "answer") {
          problem = "unexpected field " + key;
          break;
        }
      }
    }
    if (problem) {
      reject(*problem);
      continue;
    }
    const std::string question(trim(e["question"].get<std::string>()));
    const std::string steps(trim(e["steps"].get<std::string>()));
    const std::string answer(trim(e["answer"].get<std::string>()));
    if (question.empty()) {
      reject("empty question");
      continue;
    }
    if (steps.empty()) {
      reject("empty steps");
      continue;
    }
    // "The Answer is <ANSWER>." with a non-empty payload; final period optional.
    bool template_ok = istarts_with(answer, "the answer is");
    if (template_ok) {
      auto payload = trim(std::string_view(answer).substr(13));
      if (!payload.empty() && payload.back() == '.') payload.remove_suffix(1);
      template_ok = !trim(payload).empty() && answer.size() > 13 &&
                    std::isspace(static_cast<unsigned char>(answer[13]));
    }
    if (!template_ok) {
      reject("answer template mismatch");
      continue;
    }
    auto s = base_sample(ctx, task, result.samples.size());
    s.input_text = question;
    s.output_text = answer;
    s.steps = steps;
    result.samples.push_back(std::move(s));
  }
  finish(result);
  return result;
}

ParseResult parse_code_pairs(std::string_view text, const SampleContext& ctx) {
  ParseResult result;
  result.report = start_report(TaskKind::CodeGen, ctx);
  const auto markers = marker_positions(text, '~');
  result.report.detected = markers.size();
  for (std::size_t i = 0; i < markers.size(); ++i) {
    const auto begin = markers[i] + 1;
    const auto end = i + 1 < markers.size() ? markers[i + 1] : text.size();
    const auto segment = text.substr(begin, end - begin);
    const auto caret = segment.find('^');
    if (caret == std::string_view::npos) {
      result.report.rejected.push_back({markers[i], "missing question terminator"});
      continue;
    }
    const auto question = strip_label(segment.substr(0, caret), {"question", "q"});
    std::string_view code = segment.substr(caret + 1);
    // Drop blank lines, an optional "Answer:" line and a Markdown fence.
    auto drop_first_line_if = [&](auto pred) {
      const auto stripped = code.substr(0, code.find('\n'));
      if (pred(trim(stripped))) {
        const auto nl = code.find('\n');
        code = nl == std::string_view::npos ? std::string_view{} : code.substr(nl + 1);
        return true;
      }
      return false;
    };
    while (!code.empty() && drop_first_line_if([](std::string_view l) { return l.empty(); })) {
    }
    drop_first_line_if([](std::string_view l) { return iequals(l, "answer:"); });
    drop_first_line_if([](std::string_view l) { return l.starts_with("```"); });
    while (!code.empty() && std::isspace(static_cast<unsigned char>(code.back()))) code.remove_suffix(1);
    if (code.ends_with("```")) {
      code.remove_suffix(3);
      while (!code.empty() && std::isspace(static_cast<unsigned char>(code.back()))) code.remove_suffix(1);
    }
    while (!code.empty() && (code.front() == '\n' || code.front() == '\r')) code.remove_prefix(1);

    if (question.empty()) {
      result.report.rejected.push_back({markers[i], "empty question"});
      continue;
    }
    if (trim(code).empty()) {
      result.report.rejected.push_back({markers[i], "empty code block"});
      continue;
    }
    auto s = base_sample(ctx, TaskKind::CodeGen, result.samples.size());
    s.input_text = std::string(question);
    s.output_text = std::string(code);
    s.code = std::string(code);
    result.samples.push_back(std::move(s));
  }
  finish(result);
  return result;
}

ParseResult parse_novel_json(std::string_view text, const SampleContext& ctx) {
  const auto parsed = parse_loose_json(text);
  if (!parsed) throw Error(ErrorCode::NotJson, "completion is not JSON");
  const json& root = *parsed;

  auto looks_like_task = [](const json& o) {
    if (!o.is_object()) return false;
    for (const auto& [k, _] : o.items()) {
      const auto n = normalize_key(k);
      if (n == "input" || n == "expected output" || n == "task type") return true;
    }
    return false;
  };

  std::vector<json> elements;
  if (root.is_array()) {
    elements.assign(root.begin(), root.end());
  } else if (looks_like_task(root)) {
    elements.push_back(root);
  } else if (root.is_object() && root.size() == 1 && root.begin()->is_array()) {
    elements.assign(root.begin()->begin(), root.begin()->end());
  } else if (root.is_object() && !root.empty()) {
    bool all_objects = true;
    for (const auto& [_, v] : root.items()) all_objects = all_objects && v.is_object();
    if (all_objects) {
      for (const auto& [_, v] : root.items()) elements.push_back(v);
    } else {
      elements.push_back(root);
    }
  } else {
    elements.push_back(root);
  }

  ParseResult result;
  result.report = start_report(TaskKind::Novel, ctx);
  result.report.detected = elements.size();
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const json& e = elements[i];
    auto reject = [&](std::string why) { result.report.rejected.push_back({i, std::move(why)}); };
    if (!e.is_object()) {
      reject("element is not an object");
      continue;
    }
    std::optional<std::string> label, input, output;
    std::optional<std::string> problem;
    for (const auto& [key, value] : e.items()) {
      const auto n = normalize_key(key);
      std::optional<std::string>* slot = nullptr;
      std::string field;
      if (n == "task type" || n == "task" || n == "type") {
        slot = &label;
        field = "task type";
      } else if (n == "input" || n == "question" || n == "instruction") {
        slot = &input;
        field = "input";
      } else if (n == "expected output" || n == "output" || n == "answer") {
        slot = &output;
        field = "expected output";
      } else {
        continue;
      }
      if (value.is_string()) {
        *slot = std::string(trim(value.get<std::string>()));
      } else if (value.is_number() || value.is_boolean()) {
        *slot = value.dump();
      } else if (!problem) {
        problem = "field " + field + " is not a string";
      }
    }
    if (!problem && !label) problem = "missing field task type";
    if (!problem && !input) problem = "missing field input";
    if (!problem && !output) problem = "missing field expected output";
    if (!problem && label->empty()) problem = "empty task type";
    if (!problem && input->empty()) problem = "empty input";
    if (!problem && output->empty()) problem = "empty expected output";
    if (problem) {
      reject(*problem);
      continue;
    }
    auto s = base_sample(ctx, TaskKind::Novel, result.samples.size());
    s.input_text = *input;
    s.output_text = *output;
    s.novel_task_label = *label;
    result.samples.push_back(std::move(s));
  }
  finish(result);
  return result;
}

ParseResult parse_summary(std::string_view text, const SampleContext& ctx) {
  ParseResult result;
  result.report = start_report(TaskKind::Summarization, ctx);
  result.report.detected = 1;
  const auto summary = strip_label(text, {"summary"});
  if (summary.empty()) {
    result.report.rejected.push_back({0, "empty summary"});
  } else {
    auto s = base_sample(ctx, TaskKind::Summarization, 0);
    s.input_text = std::string(kSummaryInstruction);
    s.output_text = std::string(summary);
    result.samples.push_back(std::move(s));
  }
  finish(result);
  return result;
}

ParseResult parse_completion(std::string_view text, TaskKind task, const SampleContext& ctx) {
  try {
    switch (task) {
      case TaskKind::Summarization: return parse_summary(text, ctx);
      case TaskKind::OpenQA:
      case TaskKind::FactChecking: return parse_tilde_caret(text, task, ctx);
      case TaskKind::CotVarIndependent:
      case TaskKind::CotVarDependent: return parse_cot_json(text, task, ctx);
      case TaskKind::CodeGen: return parse_code_pairs(text, ctx);
      case TaskKind::Novel: return parse_novel_json(text, ctx);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotJson) throw;
  }
  ParseResult result;
  result.report = start_report(task, ctx);
  result.report.detected = 1;
  result.report.rejected.push_back({0, "not json"});
  finish(result);
  return result;
}

std::string_view to_string(CodeViolation v) {
  switch (v) {
    case CodeViolation::NoFunction: return "no function";
    case CodeViolation::MultipleFunctions: return "multiple functions";
    case CodeViolation::HasParameters: return "has parameters";
    case CodeViolation::MissingInformation: return "missing information";
    case CodeViolation::MissingReturn: return "missing return";
  }
  return "unknown";
}

bool StructureReport::has(CodeViolation v) const {
  for (auto x : violations) {
    if (x == v) return true;
  }
  return false;
}

namespace {

// Drops '#' comments, leaving string literals intact (single-line strings only).
std::string strip_comments(std::string_view code) {
  std::string out;
  out.reserve(code.size());
  char quote = 0;
  bool skipping = false;
  for (std::size_t i = 0; i < code.size(); ++i) {
    const char c = code[i];
    if (c == '\n') {
      skipping = false;
      quote = 0;
      out.push_back(c);
      continue;
    }
    if (skipping) continue;
    if (quote) {
      if (c == '\\' && i + 1 < code.size()) {
        out.push_back(c);
        out.push_back(code[++i]);
        continue;
      }
      if (c == quote) quote = 0;
      out.push_back(c);
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    if (c == '#') {
      skipping = true;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

bool has_word(std::string_view text, std::string_view word, std::size_t* after = nullptr) {
  for (auto p = text.find(word); p != std::string_view::npos; p = text.find(word, p + 1)) {
    const bool left = p == 0 || !is_ident_char(text[p - 1]);
    const std::size_t e = p + word.size();
    const bool right = e >= text.size() || !is_ident_char(text[e]);
    if (left && right) {
      if (after) *after = e;
      return true;
    }
  }
  return false;
}

bool assigns_name(std::string_view body, std::string_view name) {
  for (auto p = body.find(name); p != std::string_view::npos; p = body.find(name, p + 1)) {
    if (p > 0 && (is_ident_char(body[p - 1]) || body[p - 1] == '.')) continue;
    std::size_t e = p + name.size();
    if (e < body.size() && is_ident_char(body[e])) continue;
    while (e < body.size() && (body[e] == ' ' || body[e] == '\t')) ++e;
    if (e < body.size() && body[e] == ':') {  // annotated assignment
      while (e < body.size() && body[e] != '=' && body[e] != '\n') ++e;
    }
    if (e < body.size() && body[e] == '=' && (e + 1 >= body.size() || body[e + 1] != '=')) return true;
  }
  return false;
}

}  // namespace

StructureReport validate_code_structure(std::string_view code_text) {
  StructureReport report;
  const std::string code = strip_comments(code_text);

  std::vector<std::size_t> defs;
  std::size_t line_start = 0;
  while (line_start < code.size()) {
    const std::string_view line(code.data() + line_start,
                                std::min(code.find('\n', line_start), code.size()) - line_start);
    if (line.starts_with("def ") || line.starts_with("async def ")) defs.push_back(line_start);
    const auto nl = code.find('\n', line_start);
    if (nl == std::string::npos) break;
    line_start = nl + 1;
  }
  if (defs.empty()) {
    report.violations.push_back(CodeViolation::NoFunction);
    return report;
  }
  if (defs.size() > 1) report.violations.push_back(CodeViolation::MultipleFunctions);

  std::size_t p = code.find("def ", defs.front()) + 4;
  while (p < code.size() && code[p] == ' ') ++p;
  const std::size_t name_start = p;
  while (p < code.size() && is_ident_char(code[p])) ++p;
  report.function_name = code.substr(name_start, p - name_start);

  const auto open = code.find('(', p);
  std::size_t body_start = code.size();
  if (open != std::string::npos) {
    int depth = 0;
    std::size_t close = std::string::npos;
    for (std::size_t i = open; i < code.size(); ++i) {
      if (code[i] == '(') ++depth;
      if (code[i] == ')' && --depth == 0) {
        close = i;
        break;
      }
    }
    if (close != std::string::npos) {
      if (!trim(std::string_view(code).substr(open + 1, close - open - 1)).empty())
        report.violations.push_back(CodeViolation::HasParameters);
      const auto colon = code.find(':', close);
      body_start = colon == std::string::npos ? close + 1 : colon + 1;
    } else {
      report.violations.push_back(CodeViolation::HasParameters);
    }
  }
  const std::size_t body_end = defs.size() > 1 ? defs[1] : code.size();
  const std::string_view body =
      body_start < body_end ? std::string_view(code).substr(body_start, body_end - body_start)
                            : std::string_view{};
  if (!assigns_name(body, "information")) report.violations.push_back(CodeViolation::MissingInformation);
  if (!has_word(body, "return")) report.violations.push_back(CodeViolation::MissingReturn);
  return report;
}

StructureReport validate_code_structure(const InstructionSample& sample) {
  auto report = validate_code_structure(sample.code ? std::string_view(*sample.code)
                                                    : std::string_view(sample.output_text));
  report.sample_id = sample.id;
  return report;
}

}  // namespace chartinstruct::parsing
