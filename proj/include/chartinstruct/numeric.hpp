#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace chartinstruct {

struct ParsedNumber {
  double value = 0.0;
  std::string unit;  // "", "%", "$" or "€"
};

// Parses a chart-style numeric literal: optional surrounding whitespace, an
// optional leading currency sign ($, €), an optional trailing percent sign,
// and comma thousands separators in well-formed groups ("1,234,567.5").
// Returns nullopt for anything else, including non-finite values.
std::optional<ParsedNumber> parse_chart_number(std::string_view text);

// Shortest decimal text that reads back to the same double.
std::string format_shortest(double value);

// At most 12 significant digits; used where results of arithmetic are shown
// to people or compared as strings (43.4 - 39.7 renders as "3.7").
std::string format_answer(double value);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);

}  // namespace chartinstruct
