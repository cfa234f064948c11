#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "chartinstruct/corpus.hpp"
#include "chartinstruct/parsing.hpp"

// Parser and evaluator for the DEFINE(...) / Calculator(...) tool-call
// protocol used in variable-dependent reasoning traces. The expression
// language is a closed arithmetic subset of Python; nothing is executed.
namespace chartinstruct::tooldsl {

enum class BinaryOp { Add, Sub, Mul, Div, Pow, Mod };
enum class Builtin { Min, Max, Sum, Abs, Round, Len, Median, Mode };

std::string_view to_string(BinaryOp op);
std::string_view to_string(Builtin fn);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct NumberLit {
  double value = 0.0;
};
struct VarRef {
  std::string name;
};
struct Negate {
  ExprPtr operand;
};
struct Binary {
  BinaryOp op = BinaryOp::Add;
  ExprPtr lhs, rhs;
};
struct Call {
  Builtin fn = Builtin::Min;
  std::vector<ExprPtr> args;
};
struct ListLit {
  std::vector<ExprPtr> items;
};

struct Expr {
  std::variant<NumberLit, VarRef, Negate, Binary, Call, ListLit> node;
};

ExprPtr number(double v);
ExprPtr var(std::string name);
ExprPtr negate(ExprPtr e);
ExprPtr binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr call(Builtin fn, std::vector<ExprPtr> args);
ExprPtr list(std::vector<ExprPtr> items);

// Python-style rendering with full parenthesization.
std::string to_source(const Expr& e);

// Numeric literals in evaluation order.
std::vector<double> numeric_literals(const Expr& e);

// Throws Error(ParseFailure) whose message carries the absolute offset.
ExprPtr parse_expr(std::string_view text, std::size_t base_offset = 0);

// Scalars and flat lists of scalars.
using Value = std::variant<double, std::vector<double>>;
using Environment = std::map<std::string, Value, std::less<>>;

std::string render_value(const Value& v);

// Throws Error with DivisionByZero, UnboundVariable, BadArity, TypeMismatch
// or NonFinite.
Value eval(const Expr& e, const Environment& env);
// Scalar result, as the Calculator returns.
double eval_expr(const Expr& e, const Environment& env);

enum class StatementKind { Define, Calculator };

struct SourceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the closing parenthesis
};

struct Statement {
  StatementKind kind = StatementKind::Define;
  std::string target;
  ExprPtr expr;
  SourceSpan span;
};

struct AnswerRef {
  enum class Kind { Variable, Number, Literal } kind = Kind::Literal;
  std::string text;  // variable name or literal payload
  double number = 0.0;
};

struct ToolProgram {
  std::vector<Statement> statements;
  std::optional<AnswerRef> answer;
};

// The payload of the last "The Answer is X" in text, trailing period dropped.
std::optional<std::string> answer_payload(std::string_view text);

enum class AnswerMode {
  Auto,              // identifiers are variables only when the trace has statements
  VariableDependent  // identifiers are always variables
};

// Scans free text for DEFINE(...) and Calculator(...) calls. Throws
// Error(ParseFailure) for unbalanced parentheses or malformed payloads.
ToolProgram parse_steps(std::string_view steps_text, std::string_view answer_text,
                        AnswerMode mode = AnswerMode::Auto);

enum class Status { ResolvedNumeric, ResolvedLiteral, ParseFailure, EvalFailure, UnboundAnswer };

std::string_view to_string(Status s);

struct Binding {
  std::string name;
  Value value;
  std::size_t statement = 0;  // index of the statement that wrote it
};

struct VerificationOutcome {
  Status status = Status::ParseFailure;
  double value = 0.0;        // ResolvedNumeric
  std::string text;          // literal, failure reason, or unbound name
  Environment environment;   // final bindings
  std::vector<Binding> history;
  std::vector<std::string> warnings;
};

// Never throws; every failure lands in the outcome.
VerificationOutcome run_program(const ToolProgram& program);

struct CrossCheckEntry {
  double literal = 0.0;
  bool found = false;
};

struct CrossCheck {
  std::vector<CrossCheckEntry> entries;
  bool all_found() const;
  std::vector<std::string> flags() const;  // "99.9 not in table"
};

// Every numeric literal of every statement, matched by magnitude against the
// table's numeric cells.
CrossCheck cross_check(const ToolProgram& program, const corpus::DataTable& table,
                       double tolerance = 1e-6);

struct SampleVerification {
  std::string sample_id;
  VerificationOutcome outcome;
  CrossCheck crosscheck;
};

SampleVerification verify_sample(const parsing::InstructionSample& sample,
                                 const corpus::ChartRecord& record);

// Report line: {sample_id, status, value?, failures[], crosscheck[]}.
nlohmann::ordered_json to_json(const SampleVerification& v);

struct VerifyJob {
  const parsing::InstructionSample* sample = nullptr;
  const corpus::ChartRecord* record = nullptr;
};

// Serial reference and OpenMP batch; element i of the result belongs to job i
// in both.
std::vector<SampleVerification> verify_batch_serial(std::span<const VerifyJob> jobs);
std::vector<SampleVerification> verify_batch_parallel(std::span<const VerifyJob> jobs);

}  // namespace chartinstruct::tooldsl
