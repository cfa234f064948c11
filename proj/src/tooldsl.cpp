#include "chartinstruct/tooldsl.hpp"

#include <algorithm>
#include <cctype>
#include <cfenv>
#include <charconv>
#include <cmath>

#include "chartinstruct/error.hpp"
#include "chartinstruct/numeric.hpp"

namespace chartinstruct::tooldsl {

std::string_view to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Pow: return "**";
    case BinaryOp::Mod: return "%";
  }
  return "?";
}

std::string_view to_string(Builtin fn) {
  switch (fn) {
    case Builtin::Min: return "min";
    case Builtin::Max: return "max";
    case Builtin::Sum: return "sum";
    case Builtin::Abs: return "abs";
    case Builtin::Round: return "round";
    case Builtin::Len: return "len";
    case Builtin::Median: return "median";
    case Builtin::Mode: return "mode";
  }
  return "?";
}

namespace {

std::optional<Builtin> builtin_from_name(std::string_view name) {
  for (auto fn : {Builtin::Min, Builtin::Max, Builtin::Sum, Builtin::Abs, Builtin::Round,
                  Builtin::Len, Builtin::Median, Builtin::Mode}) {
    if (name == to_string(fn)) return fn;
  }
  return std::nullopt;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_identifier(std::string_view s) {
  if (s.empty() || !ident_start(s.front())) return false;
  return std::all_of(s.begin(), s.end(), ident_char);
}

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::ParseFailure, what + " at offset " + std::to_string(offset));
}

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Percent, Pow, LParen, RParen, LBracket, RBracket, Comma, End };

struct Token {
  Tok kind = Tok::End;
  std::size_t offset = 0;
  std::string_view text;
  double number = 0.0;
};

// Recursive descent over:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/'|'%') unary)*
//   unary  := ('-'|'+') unary | power
//   power  := atom ('**' unary)?
//   atom   := NUMBER | IDENT | IDENT '(' args ')' | '(' expr ')' | '[' args ']'
class Parser {
 public:
  Parser(std::string_view text, std::size_t base) : text_(text), base_(base) { advance(); }

  ExprPtr parse_all() {
    auto e = parse_expr();
    if (tok_.kind != Tok::End) parse_fail(tok_.offset, "unexpected '" + std::string(tok_.text) + "'");
    return e;
  }

 private:
  void advance() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    tok_ = Token{};
    tok_.offset = base_ + pos_;
    if (pos_ >= text_.size()) {
      tok_.kind = Tok::End;
      return;
    }
    const char c = text_[pos_];
    const std::size_t start = pos_;
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
        ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
        std::size_t k = pos_ + 1;
        if (k < text_.size() && (text_[k] == '+' || text_[k] == '-')) ++k;
        if (k < text_.size() && std::isdigit(static_cast<unsigned char>(text_[k]))) {
          pos_ = k;
          while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
      }
      tok_.kind = Tok::Number;
      tok_.text = text_.substr(start, pos_ - start);
      const auto [end, ec] = std::from_chars(tok_.text.data(), tok_.text.data() + tok_.text.size(), tok_.number);
      if (ec != std::errc() || end != tok_.text.data() + tok_.text.size() || !std::isfinite(tok_.number))
        parse_fail(tok_.offset, "malformed number '" + std::string(tok_.text) + "'");
      return;
    }
    if (ident_start(c)) {
      while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
      tok_.kind = Tok::Ident;
      tok_.text = text_.substr(start, pos_ - start);
      return;
    }
    ++pos_;
    switch (c) {
      case '+': tok_.kind = Tok::Plus; break;
      case '-': tok_.kind = Tok::Minus; break;
      case '*':
        if (pos_ < text_.size() && text_[pos_] == '*') {
          ++pos_;
          tok_.kind = Tok::Pow;
        } else {
          tok_.kind = Tok::Star;
        }
        break;
      case '/': tok_.kind = Tok::Slash; break;
      case '%': tok_.kind = Tok::Percent; break;
      case '(': tok_.kind = Tok::LParen; break;
      case ')': tok_.kind = Tok::RParen; break;
      case '[': tok_.kind = Tok::LBracket; break;
      case ']': tok_.kind = Tok::RBracket; break;
      case ',': tok_.kind = Tok::Comma; break;
      default:
        parse_fail(base_ + start, "unsupported character '" + std::string(1, c) + "'");
    }
    tok_.text = text_.substr(start, pos_ - start);
  }

  void expect(Tok kind, std::string_view what) {
    if (tok_.kind != kind) {
      parse_fail(tok_.offset, "expected " + std::string(what) +
                                  (tok_.kind == Tok::End ? std::string(" before end of expression")
                                                         : " but found '" + std::string(tok_.text) + "'"));
    }
    advance();
  }

  ExprPtr parse_expr() {
    auto lhs = parse_term();
    while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
      const auto op = tok_.kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
      advance();
      lhs = binary(op, lhs, parse_term());
    }
    return lhs;
  }

  ExprPtr parse_term() {
    auto lhs = parse_unary();
    while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash || tok_.kind == Tok::Percent) {
      const auto op = tok_.kind == Tok::Star ? BinaryOp::Mul : tok_.kind == Tok::Slash ? BinaryOp::Div : BinaryOp::Mod;
      advance();
      lhs = binary(op, lhs, parse_unary());
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (tok_.kind == Tok::Minus) {
      advance();
      return negate(parse_unary());
    }
    if (tok_.kind == Tok::Plus) {
      advance();
      return parse_unary();
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    auto base = parse_atom();
    if (tok_.kind == Tok::Pow) {
      advance();
      return binary(BinaryOp::Pow, base, parse_unary());
    }
    return base;
  }

  std::vector<ExprPtr> parse_args(Tok close, std::string_view close_text) {
    std::vector<ExprPtr> args;
    if (tok_.kind == close) {
      advance();
      return args;
    }
    while (true) {
      args.push_back(parse_expr());
      if (tok_.kind == Tok::Comma) {
        advance();
        if (tok_.kind == close) {  // trailing comma
          advance();
          return args;
        }
        continue;
      }
      expect(close, close_text);
      return args;
    }
  }

  ExprPtr parse_atom() {
    const Token t = tok_;
    switch (t.kind) {
      case Tok::Number:
        advance();
        return number(t.number);
      case Tok::Ident: {
        advance();
        if (tok_.kind == Tok::LParen) {
          const auto fn = builtin_from_name(t.text);
          if (!fn) parse_fail(t.offset, "unknown function '" + std::string(t.text) + "'");
          advance();
          return call(*fn, parse_args(Tok::RParen, "')'"));
        }
        return var(std::string(t.text));
      }
      case Tok::LParen: {
        advance();
        auto inner = parse_expr();
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::LBracket:
        advance();
        return list(parse_args(Tok::RBracket, "']'"));
      case Tok::End:
        parse_fail(t.offset, "unexpected end of expression");
      default:
        parse_fail(t.offset, "unexpected '" + std::string(t.text) + "'");
    }
  }

  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
  Token tok_;
};

double checked(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite result");
  return v;
}

double as_scalar(const Value& v, std::string_view where) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw Error(ErrorCode::TypeMismatch, "list used where a number is expected in " + std::string(where));
}

double python_round(double x, int digits) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  double r;
  if (digits == 0) {
    r = std::nearbyint(x);
  } else {
    const double scale = std::pow(10.0, digits);
    r = std::nearbyint(x * scale) / scale;
  }
  std::fesetround(saved);
  return r;
}

// min/max/sum/median/mode accept one list or at least two scalars.
std::vector<double> gather_values(Builtin fn, const std::vector<Value>& args) {
  if (args.size() == 1) {
    if (const auto* l = std::get_if<std::vector<double>>(&args[0])) return *l;
    throw Error(ErrorCode::BadArity, std::string(to_string(fn)) + "() expects a list or at least two values");
  }
  if (args.empty())
    throw Error(ErrorCode::BadArity, std::string(to_string(fn)) + "() expects a list or at least two values");
  std::vector<double> out;
  for (const auto& a : args) out.push_back(as_scalar(a, std::string(to_string(fn)) + "()"));
  return out;
}

Value eval_call(const Call& c, const Environment& env) {
  std::vector<Value> args;
  args.reserve(c.args.size());
  for (const auto& a : c.args) args.push_back(eval(*a, env));
  const std::string name(to_string(c.fn));
  switch (c.fn) {
    case Builtin::Abs:
      if (args.size() != 1) throw Error(ErrorCode::BadArity, "abs() takes exactly one argument");
      return std::abs(as_scalar(args[0], "abs()"));
    case Builtin::Len:
      if (args.size() != 1) throw Error(ErrorCode::BadArity, "len() takes exactly one argument");
      if (const auto* l = std::get_if<std::vector<double>>(&args[0])) return static_cast<double>(l->size());
      throw Error(ErrorCode::TypeMismatch, "len() of a number");
    case Builtin::Round: {
      if (args.empty() || args.size() > 2) throw Error(ErrorCode::BadArity, "round() takes one or two arguments");
      const double x = as_scalar(args[0], "round()");
      int digits = 0;
      if (args.size() == 2) {
        const double d = as_scalar(args[1], "round()");
        if (d != std::floor(d) || std::abs(d) > 300)
          throw Error(ErrorCode::TypeMismatch, "round() digits must be an integer");
        digits = static_cast<int>(d);
      }
      return checked(python_round(x, digits));
    }
    case Builtin::Sum: {
      const auto values = gather_values(c.fn, args);
      double s = 0.0;
      for (double v : values) s += v;
      return checked(s);
    }
    case Builtin::Min:
    case Builtin::Max:
    case Builtin::Median:
    case Builtin::Mode: {
      auto values = gather_values(c.fn, args);
      if (values.empty()) throw Error(ErrorCode::BadArity, name + "() arg is an empty sequence");
      if (c.fn == Builtin::Min) return *std::min_element(values.begin(), values.end());
      if (c.fn == Builtin::Max) return *std::max_element(values.begin(), values.end());
      if (c.fn == Builtin::Median) {
        std::sort(values.begin(), values.end());
        const std::size_t n = values.size();
        return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
      }
      // First value reaching the highest count, in input order.
      double best = values.front();
      std::size_t best_count = 0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto count = static_cast<std::size_t>(std::count(values.begin(), values.end(), values[i]));
        if (count > best_count) {
          best = values[i];
          best_count = count;
        }
      }
      return best;
    }
  }
  throw Error(ErrorCode::BadArity, "unknown builtin");
}

double apply(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return checked(a + b);
    case BinaryOp::Sub: return checked(a - b);
    case BinaryOp::Mul: return checked(a * b);
    case BinaryOp::Div:
      if (b == 0.0) throw Error(ErrorCode::DivisionByZero, "division by zero");
      return checked(a / b);
    case BinaryOp::Mod: {
      if (b == 0.0) throw Error(ErrorCode::DivisionByZero, "division by zero");
      double r = std::fmod(a, b);
      if (r != 0.0 && ((r < 0) != (b < 0))) r += b;
      return checked(r);
    }
    case BinaryOp::Pow:
      if (a == 0.0 && b < 0.0) throw Error(ErrorCode::DivisionByZero, "division by zero");
      if (a < 0.0 && b != std::floor(b))
        throw Error(ErrorCode::NonFinite, "fractional power of a negative number");
      return checked(std::pow(a, b));
  }
  return 0.0;
}

}  // namespace

ExprPtr number(double v) { return std::make_shared<Expr>(Expr{NumberLit{v}}); }
ExprPtr var(std::string name) { return std::make_shared<Expr>(Expr{VarRef{std::move(name)}}); }
ExprPtr negate(ExprPtr e) { return std::make_shared<Expr>(Expr{Negate{std::move(e)}}); }
ExprPtr binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
  return std::make_shared<Expr>(Expr{Binary{op, std::move(lhs), std::move(rhs)}});
}
ExprPtr call(Builtin fn, std::vector<ExprPtr> args) {
  return std::make_shared<Expr>(Expr{Call{fn, std::move(args)}});
}
ExprPtr list(std::vector<ExprPtr> items) { return std::make_shared<Expr>(Expr{ListLit{std::move(items)}}); }

std::string to_source(const Expr& e) {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberLit>) {
          return format_shortest(n.value);
        } else if constexpr (std::is_same_v<T, VarRef>) {
          return n.name;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return "(-" + to_source(*n.operand) + ")";
        } else if constexpr (std::is_same_v<T, Binary>) {
          return "(" + to_source(*n.lhs) + " " + std::string(to_string(n.op)) + " " + to_source(*n.rhs) + ")";
        } else {
          std::string out;
          if constexpr (std::is_same_v<T, Call>) {
            out = std::string(to_string(n.fn)) + "(";
          } else {
            out = "[";
          }
          const auto& items = [&]() -> const std::vector<ExprPtr>& {
            if constexpr (std::is_same_v<T, Call>) return n.args; else return n.items;
          }();
          for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) out += ", ";
            out += to_source(*items[i]);
          }
          out += std::is_same_v<T, Call> ? ")" : "]";
          return out;
        }
      },
      e.node);
}

std::vector<double> numeric_literals(const Expr& e) {
  std::vector<double> out;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberLit>) {
          out.push_back(n.value);
        } else if constexpr (std::is_same_v<T, Negate>) {
          for (double v : numeric_literals(*n.operand)) out.push_back(v);
        } else if constexpr (std::is_same_v<T, Binary>) {
          for (double v : numeric_literals(*n.lhs)) out.push_back(v);
          for (double v : numeric_literals(*n.rhs)) out.push_back(v);
        } else if constexpr (std::is_same_v<T, Call>) {
          for (const auto& a : n.args)
            for (double v : numeric_literals(*a)) out.push_back(v);
        } else if constexpr (std::is_same_v<T, ListLit>) {
          for (const auto& a : n.items)
            for (double v : numeric_literals(*a)) out.push_back(v);
        }
      },
      e.node);
  return out;
}

ExprPtr parse_expr(std::string_view text, std::size_t base_offset) {
  return Parser(text, base_offset).parse_all();
}

std::string render_value(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_answer(*d);
  const auto& l = std::get<std::vector<double>>(v);
  std::string out = "[";
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (i) out += ", ";
    out += format_answer(l[i]);
  }
  return out + "]";
}

Value eval(const Expr& e, const Environment& env) {
  return std::visit(
      [&](const auto& n) -> Value {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberLit>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, VarRef>) {
          const auto it = env.find(n.name);
          if (it == env.end()) throw Error(ErrorCode::UnboundVariable, "unbound variable " + n.name);
          return it->second;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return -as_scalar(eval(*n.operand, env), "unary minus");
        } else if constexpr (std::is_same_v<T, Binary>) {
          const double a = as_scalar(eval(*n.lhs, env), std::string(to_string(n.op)));
          const double b = as_scalar(eval(*n.rhs, env), std::string(to_string(n.op)));
          return apply(n.op, a, b);
        } else if constexpr (std::is_same_v<T, Call>) {
          return eval_call(n, env);
        } else {
          std::vector<double> items;
          items.reserve(n.items.size());
          for (const auto& item : n.items) {
            const Value v = eval(*item, env);
            if (!std::holds_alternative<double>(v))
              throw Error(ErrorCode::TypeMismatch, "nested lists are not supported");
            items.push_back(std::get<double>(v));
          }
          return items;
        }
      },
      e.node);
}

double eval_expr(const Expr& e, const Environment& env) { return as_scalar(eval(e, env), "expression"); }

std::optional<std::string> answer_payload(std::string_view text) {
  constexpr std::string_view marker = "the answer is";
  std::size_t found = std::string_view::npos;
  for (std::size_t i = 0; i + marker.size() <= text.size(); ++i) {
    if (iequals(text.substr(i, marker.size()), marker)) found = i;
  }
  if (found == std::string_view::npos) return std::nullopt;
  std::string_view rest = text.substr(found + marker.size());
  // Stop at the end of the line or a sentence break; decimal points are not
  // followed by whitespace.
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == '\n') {
      rest = rest.substr(0, i);
      break;
    }
    if (rest[i] == '.' && i + 1 < rest.size() && std::isspace(static_cast<unsigned char>(rest[i + 1]))) {
      rest = rest.substr(0, i + 1);
      break;
    }
  }
  auto is_quote = [](char c) { return c == '"' || c == '\''; };
  rest = trim(rest);
  if (!rest.empty() && rest.back() == '.') rest.remove_suffix(1);
  while (!rest.empty() && is_quote(rest.back())) rest.remove_suffix(1);
  while (!rest.empty() && is_quote(rest.front())) rest.remove_prefix(1);
  rest = trim(rest);
  if (!rest.empty() && rest.back() == '.') rest.remove_suffix(1);
  if (rest.empty()) return std::nullopt;
  return std::string(rest);
}

ToolProgram parse_steps(std::string_view steps_text, std::string_view answer_text, AnswerMode mode) {
  ToolProgram program;
  std::size_t i = 0;
  while (i < steps_text.size()) {
    std::optional<StatementKind> kind;
    std::size_t marker_len = 0;
    const bool boundary = i == 0 || !ident_char(steps_text[i - 1]);
    if (boundary && istarts_with(steps_text.substr(i), "define(")) {
      kind = StatementKind::Define;
      marker_len = 7;
    } else if (boundary && istarts_with(steps_text.substr(i), "calculator(")) {
      kind = StatementKind::Calculator;
      marker_len = 11;
    }
    if (!kind) {
      ++i;
      continue;
    }
    const std::size_t open = i + marker_len - 1;
    std::vector<std::size_t> stack;
    std::size_t close = std::string_view::npos;
    for (std::size_t k = open; k < steps_text.size(); ++k) {
      if (steps_text[k] == '(') {
        stack.push_back(k);
      } else if (steps_text[k] == ')') {
        stack.pop_back();
        if (stack.empty()) {
          close = k;
          break;
        }
      }
    }
    if (close == std::string_view::npos) parse_fail(stack.back(), "unbalanced parenthesis");

    const std::string_view payload = steps_text.substr(open + 1, close - open - 1);
    std::size_t eq = std::string_view::npos;
    for (std::size_t k = 0; k < payload.size(); ++k) {
      if (payload[k] == '=' && (k + 1 >= payload.size() || payload[k + 1] != '=')) {
        eq = k;
        break;
      }
      if (payload[k] == '=') ++k;
    }
    if (eq == std::string_view::npos) parse_fail(open + 1, "expected NAME = EXPRESSION");
    const auto target = trim(payload.substr(0, eq));
    if (!is_identifier(target)) parse_fail(open + 1, "invalid variable name '" + std::string(target) + "'");

    Statement st;
    st.kind = *kind;
    st.target = std::string(target);
    st.expr = parse_expr(payload.substr(eq + 1), open + 2 + eq);
    st.span = {i, close + 1};
    program.statements.push_back(std::move(st));
    i = close + 1;
  }

  if (const auto payload = answer_payload(answer_text)) {
    AnswerRef ref;
    ref.text = *payload;
    if (const auto n = parse_chart_number(*payload)) {
      ref.kind = AnswerRef::Kind::Number;
      ref.number = n->value;
    } else if (is_identifier(*payload) &&
               (mode == AnswerMode::VariableDependent || !program.statements.empty())) {
      ref.kind = AnswerRef::Kind::Variable;
    } else {
      ref.kind = AnswerRef::Kind::Literal;
    }
    program.answer = std::move(ref);
  }
  return program;
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::ResolvedNumeric: return "resolved_numeric";
    case Status::ResolvedLiteral: return "resolved_literal";
    case Status::ParseFailure: return "parse_failure";
    case Status::EvalFailure: return "eval_failure";
    case Status::UnboundAnswer: return "unbound_answer";
  }
  return "parse_failure";
}

VerificationOutcome run_program(const ToolProgram& program) {
  VerificationOutcome out;
  for (std::size_t i = 0; i < program.statements.size(); ++i) {
    const auto& st = program.statements[i];
    try {
      Value v = eval(*st.expr, out.environment);
      out.environment[st.target] = v;
      out.history.push_back({st.target, std::move(v), i});
    } catch (const Error& e) {
      out.status = Status::EvalFailure;
      out.text = std::string(e.what()) + " in " + st.target;
      return out;
    } catch (const std::exception& e) {
      out.status = Status::EvalFailure;
      out.text = std::string(e.what()) + " in " + st.target;
      return out;
    }
  }
  if (!program.answer) {
    out.status = Status::ParseFailure;
    out.text = "no 'The Answer is' template in answer";
    return out;
  }
  const auto& ref = *program.answer;
  switch (ref.kind) {
    case AnswerRef::Kind::Number:
      out.status = Status::ResolvedNumeric;
      out.value = ref.number;
      break;
    case AnswerRef::Kind::Literal:
      out.status = Status::ResolvedLiteral;
      out.text = ref.text;
      break;
    case AnswerRef::Kind::Variable: {
      const auto it = out.environment.find(ref.text);
      if (it == out.environment.end()) {
        out.status = Status::UnboundAnswer;
        out.text = ref.text;
      } else if (const auto* d = std::get_if<double>(&it->second)) {
        out.status = Status::ResolvedNumeric;
        out.value = *d;
      } else {
        out.status = Status::EvalFailure;
        out.text = "answer " + ref.text + " is a list";
      }
      break;
    }
  }
  return out;
}

bool CrossCheck::all_found() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.found; });
}

std::vector<std::string> CrossCheck::flags() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.found) out.push_back(format_shortest(e.literal) + " not in table");
  }
  return out;
}

CrossCheck cross_check(const ToolProgram& program, const corpus::DataTable& table, double tolerance) {
  const auto cells = table.numeric_values();
  CrossCheck cc;
  for (const auto& st : program.statements) {
    for (double lit : numeric_literals(*st.expr)) {
      // Literals are unsigned in the tree ("-10.61" is a negation), so
      // magnitudes are compared.
      const bool found = std::any_of(cells.begin(), cells.end(), [&](double c) {
        return std::abs(std::abs(c) - std::abs(lit)) <= tolerance;
      });
      cc.entries.push_back({lit, found});
    }
  }
  return cc;
}

SampleVerification verify_sample(const parsing::InstructionSample& sample, const corpus::ChartRecord& record) {
  SampleVerification v;
  v.sample_id = sample.id;
  if (!taskgen::is_cot(sample.task)) {
    v.outcome.status = Status::ParseFailure;
    v.outcome.text = "sample is not a chain-of-thought task";
    return v;
  }
  if (!sample.steps) {
    v.outcome.status = Status::ParseFailure;
    v.outcome.text = "sample has no steps";
    return v;
  }
  const auto mode = sample.task == taskgen::TaskKind::CotVarDependent ? AnswerMode::VariableDependent
                                                                       : AnswerMode::Auto;
  std::vector<std::string> warnings;
  if (sample.task == taskgen::TaskKind::CotVarIndependent &&
      sample.steps->find('=') != std::string::npos) {
    warnings.push_back("'=' used in variable-independent steps");
  }
  try {
    const auto program = parse_steps(*sample.steps, sample.output_text, mode);
    v.outcome = run_program(program);
    v.crosscheck = cross_check(program, record.table);
  } catch (const Error& e) {
    v.outcome = VerificationOutcome{};
    v.outcome.status = Status::ParseFailure;
    v.outcome.text = e.what();
  }
  v.outcome.warnings = std::move(warnings);
  return v;
}

nlohmann::ordered_json to_json(const SampleVerification& v) {
  nlohmann::ordered_json j;
  j["sample_id"] = v.sample_id;
  j["status"] = std::string(to_string(v.outcome.status));
  if (v.outcome.status == Status::ResolvedNumeric) j["value"] = v.outcome.value;
  if (v.outcome.status == Status::ResolvedLiteral) j["value"] = v.outcome.text;
  auto failures = nlohmann::ordered_json::array();
  if (v.outcome.status == Status::ParseFailure || v.outcome.status == Status::EvalFailure) {
    failures.push_back(v.outcome.text);
  } else if (v.outcome.status == Status::UnboundAnswer) {
    failures.push_back("unbound answer " + v.outcome.text);
  }
  j["failures"] = std::move(failures);
  auto cc = nlohmann::ordered_json::array();
  for (const auto& e : v.crosscheck.entries) cc.push_back({{"literal", e.literal}, {"found", e.found}});
  j["crosscheck"] = std::move(cc);
  if (!v.outcome.warnings.empty()) j["warnings"] = v.outcome.warnings;
  return j;
}

std::vector<SampleVerification> verify_batch_serial(std::span<const VerifyJob> jobs) {
  std::vector<SampleVerification> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(verify_sample(*job.sample, *job.record));
  return out;
}

std::vector<SampleVerification> verify_batch_parallel(std::span<const VerifyJob> jobs) {
  std::vector<SampleVerification> out(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = verify_sample(*jobs[i].sample, *jobs[i].record);
  }
  return out;
}

}  // namespace chartinstruct::tooldsl
