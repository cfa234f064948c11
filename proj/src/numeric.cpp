#include "chartinstruct/numeric.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace chartinstruct {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Accepts "1234", "1,234", "12,345,678.25"; rejects "1,23" and "12,3456".
bool strip_thousands(std::string_view in, std::string& out) {
  out.clear();
  const auto comma = in.find(',');
  if (comma == std::string_view::npos) {
    out.assign(in);
    return true;
  }
  std::size_t start = 0;
  if (!in.empty() && (in[0] == '-' || in[0] == '+')) start = 1;
  const auto dot = in.find('.');
  const std::string_view integral =
      in.substr(start, (dot == std::string_view::npos ? in.size() : dot) - start);
  if (in.find(',', dot == std::string_view::npos ? in.size() : dot) != std::string_view::npos)
    return false;
  // Groups: first 1-3 digits, then ",ddd" repeated.
  std::size_t i = 0;
  std::size_t lead = 0;
  while (i < integral.size() && is_digit(integral[i])) {
    ++i;
    ++lead;
  }
  if (lead == 0 || lead > 3) return false;
  while (i < integral.size()) {
    if (integral[i] != ',' || i + 4 > integral.size()) return false;
    for (std::size_t k = 1; k <= 3; ++k) {
      if (!is_digit(integral[i + k])) return false;
    }
    i += 4;
  }
  out.assign(in.substr(0, start));
  for (char c : integral) {
    if (c != ',') out.push_back(c);
  }
  if (dot != std::string_view::npos) out.append(in.substr(dot));
  return true;
}

}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

bool istarts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

std::optional<ParsedNumber> parse_chart_number(std::string_view text) {
  std::string_view s = trim(text);
  if (s.empty()) return std::nullopt;

  ParsedNumber result;
  constexpr std::string_view euro = "\xE2\x82\xAC";
  bool negative_outside = false;
  if (s.front() == '-' && s.size() > 1 && (s[1] == '$' || s.substr(1).starts_with(euro))) {
    negative_outside = true;
    s.remove_prefix(1);
  }
  if (s.front() == '$') {
    result.unit = "$";
    s.remove_prefix(1);
  } else if (s.starts_with(euro)) {
    result.unit = "\xE2\x82\xAC";
    s.remove_prefix(euro.size());
  }
  if (!s.empty() && s.back() == '%') {
    if (!result.unit.empty()) return std::nullopt;
    result.unit = "%";
    s.remove_suffix(1);
  }
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (negative_outside && (s.front() == '-' || s.front() == '+')) return std::nullopt;

  std::string digits;
  if (!strip_thousands(s, digits)) return std::nullopt;
  std::string_view d = digits;
  if (!d.empty() && d.front() == '+') d.remove_prefix(1);
  if (d.empty()) return std::nullopt;
  // from_chars would accept "inf"/"nan"; only plain decimals are numbers here.
  for (char c : d) {
    if (!(is_digit(c) || c == '.' || c == '-' || c == 'e' || c == 'E' || c == '+'))
      return std::nullopt;
  }
  if (!is_digit(d.front()) && d.front() != '-' && d.front() != '.') return std::nullopt;

  double value = 0.0;
  const auto [end, ec] = std::from_chars(d.data(), d.data() + d.size(), value);
  if (ec != std::errc() || end != d.data() + d.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  result.value = negative_outside ? -value : value;
  return result;
}

std::string format_shortest(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ec == std::errc() ? end : buf.data());
}

std::string format_answer(double value) {
  if (value == 0.0) return "0";
  std::array<char, 64> buf{};
  const auto [end, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 12);
  return std::string(buf.data(), ec == std::errc() ? end : buf.data());
}

}  // namespace chartinstruct
