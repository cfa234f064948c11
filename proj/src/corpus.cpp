#include "chartinstruct/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chartinstruct/error.hpp"
#include "chartinstruct/numeric.hpp"
#include "chartinstruct/rng.hpp"

namespace chartinstruct::corpus {

namespace {

enum class Separator { Tab, MultiSpace, Comma };

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

Separator detect_separator(const std::vector<std::pair<std::size_t, std::string_view>>& lines) {
  bool multi_space = false;
  for (const auto& [_, line] : lines) {
    if (line.find('\t') != std::string_view::npos) return Separator::Tab;
    if (trim(line).find("  ") != std::string_view::npos) multi_space = true;
  }
  return multi_space ? Separator::MultiSpace : Separator::Comma;
}

std::vector<std::string> split_cells(std::string_view line, Separator sep) {
  std::vector<std::string> cells;
  switch (sep) {
    case Separator::Tab:
    case Separator::Comma: {
      const char delim = sep == Separator::Tab ? '\t' : ',';
      std::size_t start = 0;
      while (true) {
        const auto end = line.find(delim, start);
        auto cell = trim(line.substr(start, end == std::string_view::npos ? end : end - start));
        // Tables copied out of chat output often mix "16.08,\t15.74" styles.
        if (sep == Separator::Tab && !cell.empty() && cell.back() == ',') {
          cell = trim(cell.substr(0, cell.size() - 1));
        }
        cells.emplace_back(cell);
        if (end == std::string_view::npos) break;
        start = end + 1;
      }
      break;
    }
    case Separator::MultiSpace: {
      const auto body = trim(line);
      std::size_t i = 0;
      std::string current;
      while (i < body.size()) {
        if (body[i] == ' ' && i + 1 < body.size() && body[i + 1] == ' ') {
          cells.emplace_back(trim(current));
          current.clear();
          while (i < body.size() && body[i] == ' ') ++i;
          continue;
        }
        current.push_back(body[i]);
        ++i;
      }
      cells.emplace_back(trim(current));
      break;
    }
  }
  return cells;
}

Cell make_cell(const std::string& text) {
  if (auto n = parse_chart_number(text)) {
    return NumberCell{n->value, n->unit};
  }
  return text;
}

}  // namespace

std::string render_cell(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  const auto& n = std::get<NumberCell>(cell);
  const std::string digits = format_shortest(n.value);
  if (n.unit == "%" || n.unit.empty()) return digits + n.unit;
  if (n.value < 0 || (n.value == 0 && std::signbit(n.value)))
    return "-" + n.unit + digits.substr(1);
  return n.unit + digits;
}

std::vector<double> DataTable::numeric_values() const {
  std::vector<double> out;
  for (const auto& row : rows) {
    for (const auto& cell : row) {
      if (const auto* n = std::get_if<NumberCell>(&cell)) out.push_back(n->value);
    }
  }
  return out;
}

DataTable parse_data_table(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  const auto raw = split_lines(text);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!trim(raw[i]).empty()) lines.emplace_back(i + 1, raw[i]);
  }
  if (lines.size() < 2) {
    throw Error(ErrorCode::EmptyInput, "data table needs a header line and at least one row");
  }
  const Separator sep = detect_separator(lines);

  DataTable table;
  table.header = split_cells(lines.front().second, sep);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [line_no, line] = lines[i];
    auto cells = split_cells(line, sep);
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::RaggedRow, "row at line " + std::to_string(line_no) + " has " +
                                            std::to_string(cells.size()) + " cells, header has " +
                                            std::to_string(table.header.size()));
    }
    std::vector<Cell> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(make_cell(c));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string serialize_data_table(const DataTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out.push_back('\t');
    out += table.header[i];
  }
  for (const auto& row : table.rows) {
    out.push_back('\n');
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back('\t');
      out += render_cell(row[i]);
    }
  }
  return out;
}

std::string_view to_string(ChartType t) {
  switch (t) {
    case ChartType::Bar: return "bar";
    case ChartType::Line: return "line";
    case ChartType::Pie: return "pie";
    case ChartType::Donut: return "donut";
    case ChartType::Scatter: return "scatter";
    case ChartType::Area: return "area";
    case ChartType::Other: return "other";
  }
  return "other";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<ChartType> chart_type_from_string(std::string_view s) {
  for (auto t : {ChartType::Bar, ChartType::Line, ChartType::Pie, ChartType::Donut,
                 ChartType::Scatter, ChartType::Area, ChartType::Other}) {
    if (iequals(s, to_string(t))) return t;
  }
  return std::nullopt;
}

std::optional<Split> split_from_string(std::string_view s) {
  for (auto v : {Split::Train, Split::Val, Split::Test}) {
    if (iequals(s, to_string(v))) return v;
  }
  if (iequals(s, "validation")) return Split::Val;
  return std::nullopt;
}

namespace {

ChartRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "BadRecord: line is not a JSON object");
  auto required_string = [&](const char* key) -> std::string {
    const auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::Config, std::string("MissingField: ") + key);
    if (!it->is_string())
      throw Error(ErrorCode::Config, std::string("BadField: ") + key + " must be a string");
    return it->get<std::string>();
  };
  ChartRecord r;
  r.id = required_string("id");
  if (r.id.empty()) throw Error(ErrorCode::Config, "BadField: id must be non-empty");
  r.source = required_string("source");
  r.title = required_string("title");
  r.table = parse_data_table(required_string("table"));
  if (auto it = j.find("chart_type"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::Config, "BadField: chart_type must be a string");
    r.chart_type = chart_type_from_string(it->get<std::string>());
    if (!r.chart_type)
      throw Error(ErrorCode::Config, "BadField: unknown chart_type " + it->get<std::string>());
  }
  if (auto it = j.find("split"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::Config, "BadField: split must be a string");
    r.split = split_from_string(it->get<std::string>());
    if (!r.split) throw Error(ErrorCode::Config, "BadField: unknown split " + it->get<std::string>());
  }
  return r;
}

}  // namespace

LoadedCorpus parse_corpus(std::string_view jsonl) {
  LoadedCorpus out;
  std::set<std::string> seen;
  auto lines = split_lines(jsonl);
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  out.report.line_count = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) {
      out.report.failures.push_back({line_no, "EmptyLine"});
      continue;
    }
    const auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      out.report.failures.push_back({line_no, "NotJson: line is not valid JSON"});
      continue;
    }
    try {
      auto record = record_from_json(j);
      if (!seen.insert(record.id).second) {
        out.report.failures.push_back({line_no, "DuplicateId: " + record.id});
        continue;
      }
      out.records.push_back(std::move(record));
    } catch (const Error& e) {
      std::string reason = e.what();
      if (e.code() != ErrorCode::Config) reason = std::string(to_string(e.code())) + ": " + reason;
      out.report.failures.push_back({line_no, reason});
    }
  }
  return out;
}

LoadedCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot read corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

std::string record_to_json_line(const ChartRecord& record) {
  nlohmann::ordered_json j;
  j["id"] = record.id;
  j["source"] = record.source;
  j["title"] = record.title;
  j["table"] = serialize_data_table(record.table);
  if (record.chart_type) j["chart_type"] = std::string(to_string(*record.chart_type));
  if (record.split) j["split"] = std::string(to_string(*record.split));
  return j.dump();
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.val, ratios.test};
  for (double x : r) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(ErrorCode::BadRatios, "split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9)
    throw Error(ErrorCode::BadRatios, "split ratios must sum to 1");

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = r[i] * static_cast<double>(n);
    // Guard against 0.8 * 10 = 7.999999999 style drift.
    const double floored = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(floored);
    remainder[i] = std::max(0.0, quota - floored);
    assigned += counts[i];
  }
  while (assigned > n) {  // only possible through the epsilon above
    const auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

std::vector<ChartRecord> assign_splits(std::span<const ChartRecord> records,
                                       const SplitRatios& ratios, std::uint64_t seed) {
  const auto counts = split_counts(records.size(), ratios);
  std::vector<std::size_t> perm(records.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  std::vector<ChartRecord> out(records.begin(), records.end());
  std::size_t pos = 0;
  const std::array<Split, 3> tags = {Split::Train, Split::Val, Split::Test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c, ++pos) out[perm[pos]].split = tags[s];
  }
  return out;
}

CorpusStats corpus_stats(std::span<const ChartRecord> records) {
  CorpusStats stats;
  stats.record_count = records.size();
  for (const auto& r : records) {
    ++stats.per_source[r.source];
    ++stats.per_chart_type[r.chart_type ? std::string(to_string(*r.chart_type)) : "unknown"];
    ++stats.per_split[r.split ? std::string(to_string(*r.split)) : "unassigned"];
  }
  return stats;
}

}  // namespace chartinstruct::corpus
