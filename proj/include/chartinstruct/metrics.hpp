#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace chartinstruct::metrics {

// Trim, lowercase, drop '%' and '$', and remove thousands commas.
std::string normalize_answer(std::string_view s);

// Numeric answers match within tolerance * |gold| (gold 0 needs an exact 0);
// anything else compares as normalized text.
bool relaxed_accuracy_match(std::string_view pred, std::string_view gold, double tolerance = 0.05);

struct AnswerPair {
  std::string pred;
  std::string gold;
};

// Throw Error(EmptyInput) for no pairs.
double corpus_relaxed_accuracy(std::span<const AnswerPair> pairs);
double binary_accuracy(std::span<const AnswerPair> pairs);

// "supports"/"accept" -> "accept", "refutes"/"refute" -> "refute"; other
// labels are trimmed and lowercased.
std::string normalize_verdict(std::string_view label);

using Tokens = std::vector<std::string>;

// Lowercase; every punctuation character is its own token; whitespace
// separates the rest.
Tokens bleu_tokenize(std::string_view text);

struct BleuStats {
  std::array<std::uint64_t, 4> matches{};  // clipped n-gram matches, n = 1..4
  std::array<std::uint64_t, 4> totals{};   // candidate n-grams
  std::uint64_t candidate_length = 0;
  std::uint64_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& o);
  bool operator==(const BleuStats&) const = default;
};

BleuStats bleu_sentence_stats(const Tokens& candidate, const Tokens& reference);
// Pooled corpus statistics; the parallel variant returns identical counts.
BleuStats bleu_stats_serial(std::span<const Tokens> candidates, std::span<const Tokens> references);
BleuStats bleu_stats_parallel(std::span<const Tokens> candidates, std::span<const Tokens> references);
// 100 * BP * geometric mean of the four pooled precisions.
double bleu_from_stats(const BleuStats& stats);

// Corpus BLEU-4 in [0, 100]. Throws Error(EmptyInput) or Error(LengthMismatch).
double bleu(std::span<const Tokens> candidates, std::span<const Tokens> references);
double bleu_text(std::span<const std::string> candidates, std::span<const std::string> references);

enum class KappaWeighting { Unweighted, Linear, Quadratic };

std::string_view to_string(KappaWeighting w);
std::optional<KappaWeighting> kappa_weighting_from_string(std::string_view s);

// Unweighted Cohen's kappa over integer category labels. Throws
// Error(EmptyInput) or Error(LengthMismatch).
double cohen_kappa(std::span<const int> a, std::span<const int> b);
// Linear or quadratic disagreement weights over the ordinal span of observed
// labels; Unweighted delegates to cohen_kappa.
double weighted_kappa(std::span<const int> a, std::span<const int> b, KappaWeighting weighting);

enum class MwMethod { Auto, Exact, Normal };

struct MannWhitneyResult {
  double u = 0.0;  // for the first sample
  double p = 1.0;  // two-sided, in (0, 1]
  MwMethod method = MwMethod::Normal;
};

std::string_view to_string(MwMethod m);  // "exact", "normal-approx"

// Auto takes the exact null distribution when n1 + n2 <= 12 and there are no
// ties, else the normal approximation with continuity and tie corrections.
// Forcing Exact on tied data throws Error(Config). Throws Error(EmptyInput).
MannWhitneyResult mann_whitney(std::span<const double> x, std::span<const double> y,
                               MwMethod method = MwMethod::Auto);

inline constexpr std::array<std::string_view, 3> kHumanEvalMetrics = {"informativeness", "relevance", "factual"};

struct RatingRecord {
  std::string sample_id;
  std::string rater_id;
  std::string model_id;
  std::string metric;
  int score = 0;
};

// Throws Error(ParseFailure) naming the problem field.
RatingRecord rating_from_json(const nlohmann::json& j);
std::vector<RatingRecord> load_ratings(std::span<const std::filesystem::path> paths);

struct HumanEvalConfig {
  // Mann-Whitney inputs: per-sample means over raters, or every raw score.
  enum class MwInput { SampleMeans, RawScores } mw_input = MwInput::SampleMeans;
  KappaWeighting kappa_weighting = KappaWeighting::Unweighted;
};

struct ModelMetricMean {
  std::string model;
  std::string metric;
  double mean = 0.0;
  std::size_t samples = 0;
};

struct PairwiseTest {
  std::string metric;
  std::string model_a;
  std::string model_b;
  MannWhitneyResult result;
};

struct KappaEntry {
  std::string metric;           // "overall" for the pooled entry
  std::optional<double> kappa;  // absent when no item has exactly two raters
  std::size_t items = 0;
};

struct HumanEvalReport {
  std::vector<std::string> models;
  std::vector<std::string> metrics;
  std::vector<ModelMetricMean> means;
  std::vector<PairwiseTest> tests;
  std::vector<KappaEntry> kappas;  // per metric, then "overall"
  HumanEvalConfig config;
};

// Means over sample-level scores; pairwise Mann-Whitney per metric; kappa
// per metric over (sample, model) items rated by exactly two raters, first
// score from the lexicographically smaller rater id. Throws Error(EmptyInput).
HumanEvalReport aggregate_human_eval(std::span<const RatingRecord> ratings, const HumanEvalConfig& config = {});

nlohmann::ordered_json to_json(const HumanEvalReport& report);

}  // namespace chartinstruct::metrics
