#include "chartinstruct/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "chartinstruct/error.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/numeric.hpp"
#include "chartinstruct/resources.hpp"
#include "chartinstruct/rng.hpp"

namespace chartinstruct::analysis {

namespace {

std::set<std::string, std::less<>> word_list(std::string_view text) {
  std::set<std::string, std::less<>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (!line.empty() && line.front() != '#') out.insert(to_lower(line));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

}  // namespace

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex = from_texts(resources::find("lexicon/verbs.txt").value_or(""),
                                        resources::find("lexicon/stopwords.txt").value_or(""));
  return lex;
}

Lexicon Lexicon::from_texts(std::string_view verbs, std::string_view stopwords) {
  Lexicon lex;
  lex.verbs_ = word_list(verbs);
  lex.stop_ = word_list(stopwords);
  return lex;
}

std::optional<std::string> Lexicon::verb_lemma(std::string_view token) const {
  auto has = [&](const std::string& s) { return !s.empty() && verbs_.count(s) > 0; };
  const std::string t(token);
  if (has(t)) return t;
  auto ends = [&](std::string_view suf) {
    return t.size() > suf.size() + 1 && std::string_view(t).substr(t.size() - suf.size()) == suf;
  };
  auto stem = [&](std::size_t drop) { return t.substr(0, t.size() - drop); };
  std::vector<std::string> candidates;
  if (ends("ies") || ends("ied")) candidates.push_back(stem(3) + "y");
  if (ends("ing")) {
    candidates.push_back(stem(3));
    candidates.push_back(stem(3) + "e");
  }
  if (ends("es")) candidates.push_back(stem(2));
  if (ends("ed")) {
    candidates.push_back(stem(1));
    candidates.push_back(stem(2));
  }
  if (ends("s")) candidates.push_back(stem(1));
  for (const auto& c : candidates) {
    if (has(c)) return c;
  }
  return std::nullopt;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::optional<VerbObjectPair> extract_verb_object(std::string_view instruction, const Lexicon& lexicon) {
  const auto tokens = word_tokens(instruction);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!all_alpha(tokens[i]) || lexicon.is_stopword(tokens[i])) continue;
    auto lemma = lexicon.verb_lemma(tokens[i]);
    if (!lemma) continue;
    VerbObjectPair pair{std::move(*lemma), std::nullopt};
    for (std::size_t j = i + 1; j < tokens.size(); ++j) {
      if (all_alpha(tokens[j]) && !lexicon.is_stopword(tokens[j])) {
        pair.object = tokens[j];
        break;
      }
    }
    return pair;
  }
  return std::nullopt;
}

std::map<std::string, VerbObjectPair> load_verb_object_annotations(const std::filesystem::path& path) {
  std::map<std::string, VerbObjectPair> out;
  for (const auto& [line_no, line] : read_jsonl_lines(path)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("sample_id") || !j["sample_id"].is_string() ||
        !j.contains("verb") || !j["verb"].is_string()) {
      throw Error(ErrorCode::ParseFailure,
                  path.string() + ":" + std::to_string(line_no) + ": expected {sample_id, verb, object}");
    }
    VerbObjectPair pair{to_lower(j["verb"].get<std::string>()), std::nullopt};
    if (j.contains("object") && j["object"].is_string()) pair.object = to_lower(j["object"].get<std::string>());
    out.emplace(j["sample_id"].get<std::string>(), std::move(pair));
  }
  return out;
}

VerbObjectSummary summarize_verb_objects(std::span<const InstructionSample> samples, std::size_t top_n,
                                         const Lexicon& lexicon,
                                         const std::map<std::string, VerbObjectPair>* annotations) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  std::set<std::string> verbs;
  VerbObjectSummary summary;
  for (const auto& s : samples) {
    std::optional<VerbObjectPair> pair;
    if (annotations) {
      if (const auto it = annotations->find(s.id); it != annotations->end()) pair = it->second;
    }
    if (!pair) pair = extract_verb_object(s.input_text, lexicon);
    if (!pair) continue;
    ++summary.samples_with_verb;
    verbs.insert(pair->verb);
    ++counts[{pair->verb, pair->object.value_or("")}];
  }
  summary.distinct_verbs = verbs.size();
  for (const auto& [key, n] : counts) summary.top.push_back({key.first, key.second, n});
  std::stable_sort(summary.top.begin(), summary.top.end(),
                   [](const VerbObjectCount& a, const VerbObjectCount& b) { return a.count > b.count; });
  if (summary.top.size() > top_n) summary.top.resize(top_n);
  return summary;
}

std::size_t LengthHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

LengthHistogram length_histogram(std::span<const std::size_t> lengths, std::size_t bucket_width) {
  if (bucket_width == 0) throw Error(ErrorCode::Config, "histogram bucket width must be positive");
  LengthHistogram h;
  h.bucket_width = bucket_width;
  if (lengths.empty()) return h;
  h.min = *std::min_element(lengths.begin(), lengths.end());
  h.max = *std::max_element(lengths.begin(), lengths.end());
  h.counts.assign(h.max / bucket_width + 1, 0);
  double sum = 0.0;
  for (auto len : lengths) {
    ++h.counts[len / bucket_width];
    sum += static_cast<double>(len);
  }
  h.mean = sum / static_cast<double>(lengths.size());
  return h;
}

LengthHistograms length_histograms(std::span<const InstructionSample> samples, std::size_t bucket_width) {
  std::vector<std::size_t> in, out;
  for (const auto& s : samples) {
    in.push_back(whitespace_token_count(s.input_text));
    out.push_back(whitespace_token_count(s.output_text));
  }
  return {length_histogram(in, bucket_width), length_histogram(out, bucket_width)};
}

std::vector<std::size_t> ClusterAssignment::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (auto l : labels) ++out[l];
  return out;
}

namespace {

double squared_distance(const Point& a, const Point& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

void nearest(const Point& p, std::span<const Point> centroids, std::size_t& label, double& dist) {
  label = 0;
  dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < dist) {
      dist = d;
      label = c;
    }
  }
}

Point mean_of(std::span<const Point> points, std::span<const std::size_t> labels, std::size_t cluster,
              std::size_t dim) {
  Point m(dim, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] != cluster) continue;
    for (std::size_t d = 0; d < dim; ++d) m[d] += points[i][d];
    ++n;
  }
  if (n > 0) {
    for (auto& v : m) v /= static_cast<double>(n);
  }
  return m;
}

std::vector<Point> seed_plus_plus(std::span<const Point> points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Point> centroids;
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.unit() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] == 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > r) break;
      }
    } else {
      // Every remaining point coincides with a centroid.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) rest.push_back(i);
      }
      pick = rest[rng.below(rest.size())];
    }
    chosen[pick] = true;
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
  }
  return centroids;
}

}  // namespace

void assign_nearest_serial(std::span<const Point> points, std::span<const Point> centroids,
                           std::span<std::size_t> labels, std::span<double> dist2) {
  for (std::size_t i = 0; i < points.size(); ++i) nearest(points[i], centroids, labels[i], dist2[i]);
}

void assign_nearest_parallel(std::span<const Point> points, std::span<const Point> centroids,
                             std::span<std::size_t> labels, std::span<double> dist2) {
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) nearest(points[i], centroids, labels[i], dist2[i]);
}

ClusterAssignment kmeans(std::span<const Point> points, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                         bool parallel) {
  if (k == 0 || k > points.size()) {
    throw Error(ErrorCode::BadK, "k must be between 1 and the point count (" + std::to_string(points.size()) +
                                     "), got " + std::to_string(k));
  }
  const std::size_t dim = points[0].size();
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "point " + std::to_string(i) + " has dimension " +
                                                    std::to_string(points[i].size()) + ", expected " +
                                                    std::to_string(dim));
    }
  }

  Rng rng(seed);
  ClusterAssignment out;
  out.k = k;
  out.centroids = seed_plus_plus(points, k, rng);
  const std::size_t n = points.size();
  std::vector<std::size_t> labels(n);
  std::vector<double> dist2(n);
  // Empty clusters take the farthest point of the largest cluster. Runs
  // after every assignment so the returned labels never leave one empty.
  auto repair = [&] {
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : labels) ++sizes[l];
    for (std::size_t empty = 0; empty < k; ++empty) {
      if (sizes[empty] != 0) continue;
      const auto donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      if (sizes[donor] < 2) break;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != donor) continue;
        if (dist2[i] > far_d) {
          far_d = dist2[i];
          far = i;
        }
      }
      labels[far] = empty;
      dist2[far] = 0.0;
      --sizes[donor];
      sizes[empty] = 1;
      out.centroids[empty] = points[far];
    }
  };
  auto assign = [&] {
    if (parallel) {
      assign_nearest_parallel(points, out.centroids, labels, dist2);
    } else {
      assign_nearest_serial(points, out.centroids, labels, dist2);
    }
    repair();
    double obj = 0.0;
    for (double d : dist2) obj += d;
    out.objective_history.push_back(obj);
  };

  assign();
  while (out.iterations < max_iter) {
    ++out.iterations;
    for (std::size_t c = 0; c < k; ++c) out.centroids[c] = mean_of(points, labels, c, dim);
    const auto previous = labels;
    assign();
    if (labels == previous) {
      out.converged = true;
      break;
    }
  }
  out.labels = std::move(labels);
  out.objective = out.objective_history.back();
  return out;
}

Point HashingEmbedder::embed(std::string_view text) {
  if (dim_ == 0) throw Error(ErrorCode::Config, "embedding dimension must be positive");
  Point v(dim_, 0.0);
  const auto tokens = word_tokens(text);
  auto add = [&](std::string_view feature) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : feature) {
      h ^= c;
      h *= 1099511628211ull;
    }
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[(h & 0x7fffffffffffffffull) % dim_] += sign;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

Embeddings embed_novel_tasks(std::span<const InstructionSample> samples, Embedder& embedder) {
  Embeddings out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      auto v = embedder.embed(samples[i].input_text);
      out.indices.push_back(i);
      out.vectors.push_back(std::move(v));
    } catch (const std::exception& e) {
      out.failures.push_back({i, samples[i].id, e.what()});
    }
  }
  return out;
}

std::string_view to_string(OutputGrade g) {
  switch (g) {
    case OutputGrade::Full: return "full";
    case OutputGrade::Partial: return "partial";
    case OutputGrade::Incorrect: return "incorrect";
  }
  return "incorrect";
}

std::optional<OutputGrade> output_grade_from_string(std::string_view s) {
  const auto l = to_lower(trim(s));
  if (l == "full") return OutputGrade::Full;
  if (l == "partial") return OutputGrade::Partial;
  if (l == "incorrect") return OutputGrade::Incorrect;
  return std::nullopt;
}

nlohmann::ordered_json to_json(const AuditRecord& r) {
  nlohmann::ordered_json j;
  j["sample_id"] = r.sample_id;
  j["valid_task"] = r.valid_task ? nlohmann::ordered_json(*r.valid_task) : nullptr;
  j["input_matches"] = r.input_matches ? nlohmann::ordered_json(*r.input_matches) : nullptr;
  j["output"] = r.output ? nlohmann::ordered_json(std::string(to_string(*r.output))) : nullptr;
  return j;
}

AuditRecord audit_record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("sample_id") || !j["sample_id"].is_string())
    throw Error(ErrorCode::ParseFailure, "audit record needs a string sample_id");
  AuditRecord r;
  r.sample_id = j["sample_id"].get<std::string>();
  auto flag = [&](const char* key, std::optional<bool>& dst) {
    if (!j.contains(key) || j[key].is_null()) return;
    if (!j[key].is_boolean()) throw Error(ErrorCode::ParseFailure, std::string("field ") + key + " must be a boolean");
    dst = j[key].get<bool>();
  };
  flag("valid_task", r.valid_task);
  flag("input_matches", r.input_matches);
  if (j.contains("output") && !j["output"].is_null()) {
    if (!j["output"].is_string()) throw Error(ErrorCode::ParseFailure, "field output must be a string");
    r.output = output_grade_from_string(j["output"].get<std::string>());
    if (!r.output) throw Error(ErrorCode::ParseFailure, "output must be full, partial or incorrect");
  }
  return r;
}

std::vector<AuditRecord> sample_for_audit(std::span<const InstructionSample> samples, std::size_t n,
                                          std::uint64_t seed) {
  if (n > samples.size()) {
    throw Error(ErrorCode::NTooLarge, "audit size " + std::to_string(n) + " exceeds sample count " +
                                          std::to_string(samples.size()));
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::vector<AuditRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    out.push_back({samples[idx[i]].id, std::nullopt, std::nullopt, std::nullopt});
  }
  return out;
}

AuditStats audit_summary(std::span<const AuditRecord> records) {
  AuditStats st;
  std::size_t vt_n = 0, vt = 0, im_n = 0, im = 0, out_n = 0, full = 0, partial = 0;
  for (const auto& r : records) {
    if (r.valid_task || r.input_matches || r.output) ++st.annotated;
    if (r.valid_task) {
      ++vt_n;
      vt += *r.valid_task ? 1 : 0;
    }
    if (r.input_matches) {
      ++im_n;
      im += *r.input_matches ? 1 : 0;
    }
    if (r.output) {
      ++out_n;
      full += *r.output == OutputGrade::Full ? 1 : 0;
      partial += *r.output == OutputGrade::Partial ? 1 : 0;
    }
  }
  auto rate = [](std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; };
  st.valid_task = rate(vt, vt_n);
  st.input_matches = rate(im, im_n);
  st.output_full = rate(full, out_n);
  st.output_partial = rate(partial, out_n);
  return st;
}

namespace {

nlohmann::ordered_json histogram_json(const LengthHistogram& h) {
  return {{"bucket_width", h.bucket_width}, {"counts", h.counts}, {"min", h.min}, {"max", h.max},
          {"mean", h.mean}, {"total", h.total()}};
}

}  // namespace

nlohmann::ordered_json analyze_dataset(std::span<const InstructionSample> samples, const AnalysisOptions& options,
                                       Embedder& embedder, const AnalysisInputs& inputs) {
  nlohmann::ordered_json report;
  report["sample_count"] = samples.size();
  nlohmann::ordered_json per_task = nlohmann::ordered_json::object();
  for (auto task : taskgen::kAllTasks) {
    const auto n = std::count_if(samples.begin(), samples.end(), [&](const auto& s) { return s.task == task; });
    per_task[std::string(taskgen::to_string(task))] = n;
  }
  report["per_task"] = std::move(per_task);

  const auto hists = length_histograms(samples, options.bucket_width);
  report["input_length"] = histogram_json(hists.input);
  report["output_length"] = histogram_json(hists.output);

  const auto vo = summarize_verb_objects(samples, options.top_n, Lexicon::builtin(), inputs.verb_annotations);
  nlohmann::ordered_json top = nlohmann::ordered_json::array();
  for (const auto& e : vo.top) {
    top.push_back({{"verb", e.verb},
                   {"object", e.object.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(e.object)},
                   {"count", e.count}});
  }
  report["verb_object"] = {{"source", inputs.verb_annotations ? "annotations+lexicon" : "lexicon"},
                           {"samples_with_verb", vo.samples_with_verb},
                           {"distinct_verbs", vo.distinct_verbs},
                           {"top", std::move(top)}};

  std::vector<InstructionSample> novel;
  for (const auto& s : samples) {
    if (s.task == taskgen::TaskKind::Novel) novel.push_back(s);
  }
  const auto emb = embed_novel_tasks(novel, embedder);
  nlohmann::ordered_json clusters;
  clusters["requested_k"] = options.k;
  clusters["points"] = emb.vectors.size();
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const auto& f : emb.failures) failures.push_back({{"sample_id", f.sample_id}, {"reason", f.reason}});
  clusters["embedding_failures"] = std::move(failures);
  const std::size_t k = std::min(options.k, emb.vectors.size());
  if (k > 0) {
    const auto ca = kmeans(emb.vectors, k, options.seed, options.max_iter);
    clusters["k"] = k;
    clusters["sizes"] = ca.sizes();
    clusters["objective"] = ca.objective;
    clusters["iterations"] = ca.iterations;
    clusters["converged"] = ca.converged;
    nlohmann::ordered_json members = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ca.labels.size(); ++i) {
      members.push_back({{"sample_id", novel[emb.indices[i]].id}, {"cluster", ca.labels[i]}});
    }
    clusters["assignments"] = std::move(members);
  } else {
    clusters["k"] = 0;
    clusters["sizes"] = nlohmann::ordered_json::array();
  }
  report["clusters"] = std::move(clusters);

  const auto audit = sample_for_audit(samples, std::min(options.audit_n, samples.size()), options.seed);
  nlohmann::ordered_json ids = nlohmann::ordered_json::array();
  for (const auto& r : audit) ids.push_back(r.sample_id);
  nlohmann::ordered_json audit_json;
  audit_json["sample_ids"] = std::move(ids);
  if (!inputs.audit_annotations.empty()) {
    const auto st = audit_summary(inputs.audit_annotations);
    audit_json["stats"] = {{"annotated", st.annotated},
                           {"valid_task", st.valid_task},
                           {"input_matches", st.input_matches},
                           {"output_full", st.output_full},
                           {"output_partial", st.output_partial}};
  } else {
    audit_json["stats"] = nullptr;
  }
  report["audit"] = std::move(audit_json);
  return report;
}

}  // namespace chartinstruct::analysis
