#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chartinstruct::corpus {

struct NumberCell {
  double value = 0.0;
  std::string unit;  // "%" is rendered as a suffix, currency signs as a prefix

  bool operator==(const NumberCell&) const = default;
};

// A cell is either free text or a finite decimal number.
using Cell = std::variant<std::string, NumberCell>;

std::string render_cell(const Cell& cell);

struct DataTable {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  bool operator==(const DataTable&) const = default;

  // Values of every numeric cell, row-major.
  std::vector<double> numeric_values() const;
};

// Throws Error(EmptyInput) for fewer than two non-blank lines and
// Error(RaggedRow) naming the 1-based line number of the first bad row.
DataTable parse_data_table(std::string_view text);

// Tab-joined canonical form; parse_data_table reads it back unchanged.
std::string serialize_data_table(const DataTable& table);

enum class ChartType { Bar, Line, Pie, Donut, Scatter, Area, Other };
enum class Split { Train, Val, Test };

std::string_view to_string(ChartType t);
std::string_view to_string(Split s);
std::optional<ChartType> chart_type_from_string(std::string_view s);
std::optional<Split> split_from_string(std::string_view s);

struct ChartRecord {
  std::string id;
  std::string source;
  std::string title;
  DataTable table;
  std::optional<ChartType> chart_type;
  std::optional<Split> split;

  bool operator==(const ChartRecord&) const = default;
};

struct IngestFailure {
  std::size_t line = 0;  // 1-based
  std::string reason;    // starts with the failure kind, e.g. "RaggedRow: ..."
};

struct IngestReport {
  std::size_t line_count = 0;
  std::vector<IngestFailure> failures;
};

struct LoadedCorpus {
  std::vector<ChartRecord> records;
  IngestReport report;
};

// JSON Lines, one record per line. Invalid lines are skipped and listed in
// the report; duplicate ids keep the first occurrence. Throws
// Error(FileUnreadable) when the file cannot be opened.
LoadedCorpus load_corpus(const std::filesystem::path& path);
LoadedCorpus parse_corpus(std::string_view jsonl);

std::string record_to_json_line(const ChartRecord& record);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Realized counts: largest-remainder rounding of ratios * n, ties to the
// earlier split. Throws Error(BadRatios).
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

// Returns a copy of records with every split tag set. The permutation is a
// pure function of (records.size(), seed).
std::vector<ChartRecord> assign_splits(std::span<const ChartRecord> records,
                                       const SplitRatios& ratios, std::uint64_t seed);

struct CorpusStats {
  std::size_t record_count = 0;
  std::map<std::string, std::size_t> per_source;
  std::map<std::string, std::size_t> per_chart_type;  // missing type -> "unknown"
  std::map<std::string, std::size_t> per_split;       // missing split -> "unassigned"
};

CorpusStats corpus_stats(std::span<const ChartRecord> records);

}  // namespace chartinstruct::corpus
