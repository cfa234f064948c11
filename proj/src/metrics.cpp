#include "chartinstruct/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "chartinstruct/error.hpp"
#include "chartinstruct/fileio.hpp"
#include "chartinstruct/numeric.hpp"

namespace chartinstruct::metrics {

namespace {

std::optional<double> parse_plain_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string normalize_answer(std::string_view s) {
  const std::string lowered = to_lower(trim(s));
  std::string out;
  out.reserve(lowered.size());
  for (std::size_t i = 0; i < lowered.size(); ++i) {
    const char c = lowered[i];
    if (c == '%' || c == '$') continue;
    if (c == ',' && !out.empty() && is_digit(out.back()) && i + 1 < lowered.size() && is_digit(lowered[i + 1]))
      continue;
    out.push_back(c);
  }
  return std::string(trim(out));
}

bool relaxed_accuracy_match(std::string_view pred, std::string_view gold, double tolerance) {
  const auto p = normalize_answer(pred);
  const auto g = normalize_answer(gold);
  const auto pn = parse_plain_number(p);
  const auto gn = parse_plain_number(g);
  if (pn && gn) {
    if (*gn == 0.0) return *pn == 0.0;
    return std::abs(*pn - *gn) <= tolerance * std::abs(*gn);
  }
  return p == g;
}

double corpus_relaxed_accuracy(std::span<const AnswerPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "relaxed accuracy needs at least one pair");
  std::size_t hits = 0;
  for (const auto& pr : pairs) hits += relaxed_accuracy_match(pr.pred, pr.gold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::string normalize_verdict(std::string_view label) {
  std::string l = to_lower(trim(label));
  while (!l.empty() && (l.back() == '.' || l.back() == '!')) l.pop_back();
  if (l == "supports" || l == "support" || l == "supported" || l == "accept" || l == "accepted") return "accept";
  if (l == "refutes" || l == "refute" || l == "refuted" || l == "reject" || l == "rejected") return "refute";
  return l;
}

double binary_accuracy(std::span<const AnswerPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "accuracy needs at least one pair");
  std::size_t hits = 0;
  for (const auto& pr : pairs) hits += normalize_verdict(pr.pred) == normalize_verdict(pr.gold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

Tokens bleu_tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  return out;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  candidate_length += o.candidate_length;
  reference_length += o.reference_length;
  return *this;
}

namespace {

std::unordered_map<std::string, std::uint64_t> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::unordered_map<std::string, std::uint64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

void check_corpus(std::size_t c, std::size_t r) {
  if (c != r) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(c) + " candidates but " + std::to_string(r) + " references");
  }
  if (c == 0) throw Error(ErrorCode::EmptyInput, "BLEU needs at least one candidate/reference pair");
}

}  // namespace

BleuStats bleu_sentence_stats(const Tokens& candidate, const Tokens& reference) {
  BleuStats st;
  st.candidate_length = candidate.size();
  st.reference_length = reference.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::uint64_t total = 0, match = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      if (const auto it = ref.find(gram); it != ref.end()) match += std::min(count, it->second);
    }
    st.totals[n - 1] = total;
    st.matches[n - 1] = match;
  }
  return st;
}

BleuStats bleu_stats_serial(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  check_corpus(candidates.size(), references.size());
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += bleu_sentence_stats(candidates[i], references[i]);
  return total;
}

BleuStats bleu_stats_parallel(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  check_corpus(candidates.size(), references.size());
  std::vector<BleuStats> per(candidates.size());
  const auto n = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t i = 0; i < n; ++i) per[i] = bleu_sentence_stats(candidates[i], references[i]);
  BleuStats total;
  for (const auto& s : per) total += s;
  return total;
}

double bleu_from_stats(const BleuStats& st) {
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (st.matches[n] == 0 || st.totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]));
  }
  const double c = static_cast<double>(st.candidate_length);
  const double r = static_cast<double>(st.reference_length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double bleu(std::span<const Tokens> candidates, std::span<const Tokens> references) {
  return bleu_from_stats(bleu_stats_parallel(candidates, references));
}

double bleu_text(std::span<const std::string> candidates, std::span<const std::string> references) {
  check_corpus(candidates.size(), references.size());
  std::vector<Tokens> c, r;
  c.reserve(candidates.size());
  r.reserve(references.size());
  for (const auto& s : candidates) c.push_back(bleu_tokenize(s));
  for (const auto& s : references) r.push_back(bleu_tokenize(s));
  return bleu(c, r);
}

std::string_view to_string(KappaWeighting w) {
  switch (w) {
    case KappaWeighting::Unweighted: return "unweighted";
    case KappaWeighting::Linear: return "linear";
    case KappaWeighting::Quadratic: return "quadratic";
  }
  return "unweighted";
}

std::optional<KappaWeighting> kappa_weighting_from_string(std::string_view s) {
  for (auto w : {KappaWeighting::Unweighted, KappaWeighting::Linear, KappaWeighting::Quadratic}) {
    if (iequals(s, to_string(w))) return w;
  }
  return std::nullopt;
}

namespace {

void check_pairs(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch,
                "rating vectors differ in length (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
  if (a == 0) throw Error(ErrorCode::EmptyInput, "kappa needs at least one rated item");
}

}  // namespace

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  check_pairs(a.size(), b.size());
  // Integer form of (po - pe) / (1 - pe): (n*agree - S) / (n^2 - S) with
  // S the sum over categories of the two raters' marginal counts.
  std::map<int, std::int64_t> ca, cb;
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    agree += a[i] == b[i] ? 1 : 0;
  }
  std::int64_t s = 0;
  for (const auto& [cat, n] : ca) {
    if (const auto it = cb.find(cat); it != cb.end()) s += n * it->second;
  }
  const auto n = static_cast<std::int64_t>(a.size());
  const std::int64_t denom = n * n - s;
  if (denom == 0) return 1.0;  // both raters used one and the same category
  return static_cast<double>(n * agree - s) / static_cast<double>(denom);
}

double weighted_kappa(std::span<const int> a, std::span<const int> b, KappaWeighting weighting) {
  if (weighting == KappaWeighting::Unweighted) return cohen_kappa(a, b);
  check_pairs(a.size(), b.size());
  std::set<int> cats(a.begin(), a.end());
  cats.insert(b.begin(), b.end());
  const int lo = *cats.begin();
  const int hi = *cats.rbegin();
  if (lo == hi) return 1.0;
  const auto k = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> obs(k * k, 0.0), ra(k, 0.0), rb(k, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = static_cast<std::size_t>(a[i] - lo);
    const auto y = static_cast<std::size_t>(b[i] - lo);
    obs[x * k + y] += 1.0;
    ra[x] += 1.0;
    rb[y] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(k - 1);
      const double w = weighting == KappaWeighting::Linear ? d : d * d;
      num += w * obs[i * k + j];
      den += w * ra[i] * rb[j] / n;
    }
  }
  if (den == 0.0) return 1.0;
  return 1.0 - num / den;
}

std::string_view to_string(MwMethod m) {
  switch (m) {
    case MwMethod::Exact: return "exact";
    case MwMethod::Normal: return "normal-approx";
    case MwMethod::Auto: return "auto";
  }
  return "auto";
}

namespace {

// Number of arrangements of n1 first-sample and n2 second-sample ranks for
// every U value; counts[u] for u in [0, n1*n2].
std::vector<double> u_null_counts(std::size_t n1, std::size_t n2) {
  // f[i][j] holds the distribution for sizes (i, j), built up row by row.
  std::vector<std::vector<std::vector<double>>> f(n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (std::size_t i = 0; i <= n1; ++i) {
    for (std::size_t j = 0; j <= n2; ++j) {
      auto& cur = f[i][j];
      cur.assign(i * j + 1, 0.0);
      if (i == 0 || j == 0) {
        cur[0] = 1.0;
        continue;
      }
      // The largest value belongs to the first sample (beats all j of the
      // second sample) or to the second sample.
      const auto& a = f[i - 1][j];
      for (std::size_t u = 0; u < a.size(); ++u) cur[u + j] += a[u];
      const auto& b = f[i][j - 1];
      for (std::size_t u = 0; u < b.size(); ++u) cur[u] += b[u];
    }
  }
  return f[n1][n2];
}

double clip_p(double p) { return std::clamp(p, std::numeric_limits<double>::min(), 1.0); }

}  // namespace

MannWhitneyResult mann_whitney(std::span<const double> x, std::span<const double> y, MwMethod method) {
  if (x.empty() || y.empty()) throw Error(ErrorCode::EmptyInput, "Mann-Whitney needs two non-empty samples");
  const std::size_t n1 = x.size(), n2 = y.size(), n = n1 + n2;

  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(n);
  for (std::size_t i = 0; i < n1; ++i) all.emplace_back(x[i], 0);
  for (std::size_t i = 0; i < n2; ++i) all.emplace_back(y[i], 1);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  double rank_sum_x = 0.0;
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 0) rank_sum_x += midrank;
    }
    tie_term += t * t * t - t;
    i = j;
  }
  const bool ties = tie_term > 0.0;

  MannWhitneyResult r;
  r.u = rank_sum_x - static_cast<double>(n1) * static_cast<double>(n1 + 1) / 2.0;

  MwMethod chosen = method;
  if (chosen == MwMethod::Auto) chosen = (n <= 12 && !ties) ? MwMethod::Exact : MwMethod::Normal;
  if (chosen == MwMethod::Exact && ties) throw Error(ErrorCode::Config, "exact Mann-Whitney p needs tie-free data");
  r.method = chosen;

  if (chosen == MwMethod::Exact) {
    const auto counts = u_null_counts(n1, n2);
    double total = 0.0;
    for (double c : counts) total += c;
    const auto u = static_cast<std::size_t>(std::llround(r.u));
    double lower = 0.0, upper = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k <= u) lower += counts[k];
      if (k >= u) upper += counts[k];
    }
    r.p = clip_p(2.0 * std::min(lower, upper) / total);
    return r;
  }

  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
  const double mu = dn1 * dn2 / 2.0;
  const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (!(var > 0.0)) {
    r.p = 1.0;
    return r;
  }
  const double dev = std::max(0.0, std::abs(r.u - mu) - 0.5);
  const double z = dev / std::sqrt(var);
  r.p = clip_p(std::erfc(z / std::sqrt(2.0)));
  return r;
}

RatingRecord rating_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseFailure, "rating is not a JSON object");
  RatingRecord r;
  auto str = [&](const char* key, std::string& dst) {
    if (!j.contains(key)) throw Error(ErrorCode::ParseFailure, std::string("missing field ") + key);
    if (j[key].is_string()) {
      dst = j[key].get<std::string>();
    } else if (j[key].is_number_integer()) {
      dst = std::to_string(j[key].get<std::int64_t>());
    } else {
      throw Error(ErrorCode::ParseFailure, std::string("field ") + key + " must be a string");
    }
  };
  str("sample_id", r.sample_id);
  str("rater_id", r.rater_id);
  str("model_id", r.model_id);
  str("metric", r.metric);
  r.metric = to_lower(trim(r.metric));
  if (std::find(kHumanEvalMetrics.begin(), kHumanEvalMetrics.end(), r.metric) == kHumanEvalMetrics.end()) {
    throw Error(ErrorCode::ParseFailure,
                "metric '" + r.metric + "' is not one of informativeness, relevance, factual");
  }
  if (!j.contains("score")) throw Error(ErrorCode::ParseFailure, "missing field score");
  const auto& s = j["score"];
  if (!s.is_number() || (s.is_number_float() && s.get<double>() != std::floor(s.get<double>())))
    throw Error(ErrorCode::ParseFailure, "field score must be an integer");
  const double v = s.get<double>();
  if (v < 1 || v > 5) throw Error(ErrorCode::ParseFailure, "score must be between 1 and 5");
  r.score = static_cast<int>(v);
  return r;
}

std::vector<RatingRecord> load_ratings(std::span<const std::filesystem::path> paths) {
  std::vector<RatingRecord> out;
  for (const auto& path : paths) {
    for (const auto& [line_no, line] : read_jsonl_lines(path)) {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        throw Error(ErrorCode::ParseFailure, path.string() + ":" + std::to_string(line_no) + ": not JSON");
      }
      try {
        out.push_back(rating_from_json(j));
      } catch (const Error& e) {
        throw Error(ErrorCode::ParseFailure, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return out;
}

HumanEvalReport aggregate_human_eval(std::span<const RatingRecord> ratings, const HumanEvalConfig& config) {
  if (ratings.empty()) throw Error(ErrorCode::EmptyInput, "no ratings");
  HumanEvalReport rep;
  rep.config = config;

  std::set<std::string> models, metrics;
  // (metric, model, sample) -> rater -> scores
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, std::vector<int>>> items;
  for (const auto& r : ratings) {
    models.insert(r.model_id);
    metrics.insert(r.metric);
    items[{r.metric, r.model_id, r.sample_id}][r.rater_id].push_back(r.score);
  }
  rep.models.assign(models.begin(), models.end());
  for (auto m : kHumanEvalMetrics) {
    if (metrics.count(std::string(m))) rep.metrics.emplace_back(m);
  }

  // Sample-level scores: raters averaged per sample.
  std::map<std::pair<std::string, std::string>, std::vector<double>> sample_scores, raw_scores;
  for (const auto& [key, by_rater] : items) {
    const auto& [metric, model, sample] = key;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& [rater, scores] : by_rater) {
      for (int s : scores) {
        sum += s;
        ++count;
        raw_scores[{metric, model}].push_back(s);
      }
    }
    sample_scores[{metric, model}].push_back(sum / static_cast<double>(count));
  }

  for (const auto& model : rep.models) {
    for (const auto& metric : rep.metrics) {
      const auto it = sample_scores.find({metric, model});
      if (it == sample_scores.end()) continue;
      double sum = 0.0;
      for (double v : it->second) sum += v;
      rep.means.push_back({model, metric, sum / static_cast<double>(it->second.size()), it->second.size()});
    }
  }

  const auto& mw_source = config.mw_input == HumanEvalConfig::MwInput::SampleMeans ? sample_scores : raw_scores;
  for (const auto& metric : rep.metrics) {
    for (std::size_t a = 0; a < rep.models.size(); ++a) {
      for (std::size_t b = a + 1; b < rep.models.size(); ++b) {
        const auto xa = mw_source.find({metric, rep.models[a]});
        const auto xb = mw_source.find({metric, rep.models[b]});
        if (xa == mw_source.end() || xb == mw_source.end()) continue;
        rep.tests.push_back({metric, rep.models[a], rep.models[b], mann_whitney(xa->second, xb->second)});
      }
    }
  }

  std::vector<int> all_a, all_b;
  for (const auto& metric : rep.metrics) {
    std::vector<int> va, vb;
    for (const auto& [key, by_rater] : items) {
      if (std::get<0>(key) != metric || by_rater.size() != 2) continue;
      const auto& first = by_rater.begin()->second;
      const auto& second = std::next(by_rater.begin())->second;
      if (first.size() != 1 || second.size() != 1) continue;
      va.push_back(first[0]);
      vb.push_back(second[0]);
    }
    KappaEntry e{metric, std::nullopt, va.size()};
    if (!va.empty()) e.kappa = weighted_kappa(va, vb, config.kappa_weighting);
    rep.kappas.push_back(e);
    all_a.insert(all_a.end(), va.begin(), va.end());
    all_b.insert(all_b.end(), vb.begin(), vb.end());
  }
  KappaEntry overall{"overall", std::nullopt, all_a.size()};
  if (!all_a.empty()) overall.kappa = weighted_kappa(all_a, all_b, config.kappa_weighting);
  rep.kappas.push_back(overall);
  return rep;
}

nlohmann::ordered_json to_json(const HumanEvalReport& rep) {
  nlohmann::ordered_json j;
  j["models"] = rep.models;
  j["metrics"] = rep.metrics;
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  for (const auto& m : rep.means) {
    means[m.model][m.metric] = {{"mean", m.mean}, {"samples", m.samples}};
  }
  j["means"] = std::move(means);
  nlohmann::ordered_json tests = nlohmann::ordered_json::object();
  for (const auto& metric : rep.metrics) tests[metric] = nlohmann::ordered_json::array();
  for (const auto& t : rep.tests) {
    tests[t.metric].push_back({{"model_a", t.model_a},
                               {"model_b", t.model_b},
                               {"u", t.result.u},
                               {"p", t.result.p},
                               {"method", std::string(to_string(t.result.method))}});
  }
  j["mann_whitney"] = std::move(tests);
  nlohmann::ordered_json kappa = nlohmann::ordered_json::object();
  for (const auto& k : rep.kappas) {
    kappa[k.metric] = {{"kappa", k.kappa ? nlohmann::ordered_json(*k.kappa) : nlohmann::ordered_json(nullptr)},
                       {"items", k.items}};
  }
  j["kappa"] = std::move(kappa);
  j["config"] = {{"mw_input", rep.config.mw_input == HumanEvalConfig::MwInput::SampleMeans ? "sample_means"
                                                                                           : "raw_scores"},
                 {"kappa_weighting", std::string(to_string(rep.config.kappa_weighting))}};
  return j;
}

}  // namespace chartinstruct::metrics
