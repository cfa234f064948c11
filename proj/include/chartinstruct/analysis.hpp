#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chartinstruct/parsing.hpp"

namespace chartinstruct::analysis {

using parsing::InstructionSample;

// Verb list and stop words for the verb/object heuristic.
class Lexicon {
 public:
  // Shipped word lists (resources/lexicon).
  static const Lexicon& builtin();
  // One word per line; blank lines and '#' comments ignored.
  static Lexicon from_texts(std::string_view verbs, std::string_view stopwords);

  // The lexicon base form of token, trying simple inflection stripping
  // (-s, -es, -ies, -ed, -ied, -ing).
  std::optional<std::string> verb_lemma(std::string_view token) const;
  bool is_stopword(std::string_view token) const { return stop_.count(std::string(token)) > 0; }

 private:
  std::set<std::string, std::less<>> verbs_;
  std::set<std::string, std::less<>> stop_;
};

struct VerbObjectPair {
  std::string verb;
  std::optional<std::string> object;

  bool operator==(const VerbObjectPair&) const = default;
};

// Lowercased runs of ASCII letters and digits.
std::vector<std::string> word_tokens(std::string_view text);

// First lexicon verb, then the first following alphabetic token that is not a
// stop word.
std::optional<VerbObjectPair> extract_verb_object(std::string_view instruction,
                                                  const Lexicon& lexicon = Lexicon::builtin());

// Pre-parsed pairs keyed by sample id, from JSON Lines
// {"sample_id":..., "verb":..., "object":...}; object may be null or absent.
std::map<std::string, VerbObjectPair> load_verb_object_annotations(const std::filesystem::path& path);

struct VerbObjectCount {
  std::string verb;
  std::string object;  // empty when absent
  std::size_t count = 0;
};

struct VerbObjectSummary {
  std::size_t samples_with_verb = 0;
  std::size_t distinct_verbs = 0;
  std::vector<VerbObjectCount> top;  // count desc, then verb, then object
};

// Annotated pairs take precedence over the heuristic for their sample ids.
VerbObjectSummary summarize_verb_objects(std::span<const InstructionSample> samples, std::size_t top_n,
                                         const Lexicon& lexicon = Lexicon::builtin(),
                                         const std::map<std::string, VerbObjectPair>* annotations = nullptr);

struct LengthHistogram {
  std::size_t bucket_width = 10;
  std::vector<std::size_t> counts;  // counts[i] covers [i*width, (i+1)*width)
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;

  std::size_t total() const;
};

std::size_t whitespace_token_count(std::string_view text);

// Throws Error(Config) for a zero width.
LengthHistogram length_histogram(std::span<const std::size_t> lengths, std::size_t bucket_width = 10);

struct LengthHistograms {
  LengthHistogram input;
  LengthHistogram output;
};

LengthHistograms length_histograms(std::span<const InstructionSample> samples, std::size_t bucket_width = 10);

using Point = std::vector<double>;

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> labels;
  std::vector<Point> centroids;
  double objective = 0.0;               // sum of squared distances to assigned centroids
  std::vector<double> objective_history;  // one entry per assignment step
  std::size_t iterations = 0;
  bool converged = false;

  std::vector<std::size_t> sizes() const;
};

// Nearest-centroid assignment, ties to the lowest index. Fills labels and the
// squared distance of each point. The parallel variant gives identical output.
void assign_nearest_serial(std::span<const Point> points, std::span<const Point> centroids,
                           std::span<std::size_t> labels, std::span<double> dist2);
void assign_nearest_parallel(std::span<const Point> points, std::span<const Point> centroids,
                             std::span<std::size_t> labels, std::span<double> dist2);

// k-means++ seeding, then Lloyd iterations until the assignment stops
// changing or max_iter updates have run. A cluster left empty by an
// assignment takes the farthest point of the largest cluster, so no returned
// cluster is empty. Throws Error(BadK) or
// Error(DimensionMismatch).
ClusterAssignment kmeans(std::span<const Point> points, std::size_t k, std::uint64_t seed,
                         std::size_t max_iter = 100, bool parallel = true);

class Embedder {
 public:
  virtual ~Embedder() = default;
  // May throw; failures are reported per text by embed_novel_tasks.
  virtual Point embed(std::string_view text) = 0;
};

// Signed feature hashing of word unigrams and bigrams (FNV-1a), L2
// normalized. Deterministic and offline.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256) : dim_(dimension) {}
  Point embed(std::string_view text) override;

 private:
  std::size_t dim_;
};

struct EmbeddingFailure {
  std::size_t index = 0;
  std::string sample_id;
  std::string reason;
};

struct Embeddings {
  std::vector<std::size_t> indices;  // positions in the input that were embedded
  std::vector<Point> vectors;
  std::vector<EmbeddingFailure> failures;
};

// Embeds each sample's instruction text.
Embeddings embed_novel_tasks(std::span<const InstructionSample> samples, Embedder& embedder);

enum class OutputGrade { Full, Partial, Incorrect };

std::string_view to_string(OutputGrade g);
std::optional<OutputGrade> output_grade_from_string(std::string_view s);

struct AuditRecord {
  std::string sample_id;
  std::optional<bool> valid_task;
  std::optional<bool> input_matches;
  std::optional<OutputGrade> output;
};

nlohmann::ordered_json to_json(const AuditRecord& r);
// Throws Error(ParseFailure).
AuditRecord audit_record_from_json(const nlohmann::json& j);

// Uniform sample of n samples without replacement, in draw order. Throws
// Error(NTooLarge).
std::vector<AuditRecord> sample_for_audit(std::span<const InstructionSample> samples, std::size_t n,
                                          std::uint64_t seed);

struct AuditStats {
  std::size_t annotated = 0;
  double valid_task = 0.0;
  double input_matches = 0.0;
  double output_full = 0.0;
  double output_partial = 0.0;
};

// Each rate is over the records that carry that judgment.
AuditStats audit_summary(std::span<const AuditRecord> records);

struct AnalysisOptions {
  std::size_t k = 11;
  std::size_t bucket_width = 10;
  std::size_t top_n = 20;
  std::size_t audit_n = 100;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
};

struct AnalysisInputs {
  const std::map<std::string, VerbObjectPair>* verb_annotations = nullptr;
  std::span<const AuditRecord> audit_annotations;
};

// The single analysis report document. k is capped at the number of novel
// samples embedded.
nlohmann::ordered_json analyze_dataset(std::span<const InstructionSample> samples, const AnalysisOptions& options,
                                       Embedder& embedder, const AnalysisInputs& inputs = {});

}  // namespace chartinstruct::analysis
