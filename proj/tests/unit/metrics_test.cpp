#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "chartinstruct/error.hpp"
#include "chartinstruct/metrics.hpp"
#include "chartinstruct/rng.hpp"
#include "test_support.hpp"

using namespace chartinstruct;
using namespace chartinstruct::metrics;

namespace {

Tokens toks(const std::string& s) { return bleu_tokenize(s); }

// U by direct pair counting.
double u_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  double u = 0;
  for (double a : x) {
    for (double b : y) u += a > b ? 1.0 : a == b ? 0.5 : 0.0;
  }
  return u;
}

// Two-sided exact p by enumerating which positions of the pooled sample
// belong to x.
double exact_p_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::size_t n = pooled.size(), n1 = x.size();
  const double u_obs = u_oracle(x, y);
  std::size_t le = 0, ge = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n1) continue;
    std::vector<double> a, b;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? a : b).push_back(pooled[i]);
    const double u = u_oracle(a, b);
    ++total;
    le += u <= u_obs;
    ge += u >= u_obs;
  }
  return std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total));
}

double kappa_oracle(const std::vector<int>& a, const std::vector<int>& b, int weighting) {
  std::set<int> cats(a.begin(), a.end());
  cats.insert(b.begin(), b.end());
  const int lo = *cats.begin(), hi = *cats.rbegin();
  const int k = hi - lo + 1;
  const double n = static_cast<double>(a.size());
  std::vector<std::vector<double>> obs(k, std::vector<double>(k, 0.0));
  std::vector<double> ra(k, 0.0), rb(k, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    obs[a[i] - lo][b[i] - lo] += 1.0 / n;
    ra[a[i] - lo] += 1.0 / n;
    rb[b[i] - lo] += 1.0 / n;
  }
  double num = 0, den = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double d = k > 1 ? std::abs(i - j) / static_cast<double>(k - 1) : 0.0;
      const double w = weighting == 0 ? (i == j ? 0.0 : 1.0) : weighting == 1 ? d : d * d;
      num += w * obs[i][j];
      den += w * ra[i] * rb[j];
    }
  }
  return den == 0 ? 1.0 : 1.0 - num / den;
}

std::vector<double> random_sample(Rng& rng, std::size_t n, int levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = levels ? static_cast<double>(rng.below(levels)) : rng.unit();
  return v;
}

}  // namespace

TEST(RelaxedAccuracy, BoundaryTriple) {
  EXPECT_TRUE(relaxed_accuracy_match("15.74", "15.74"));
  EXPECT_TRUE(relaxed_accuracy_match("104", "100"));
  EXPECT_FALSE(relaxed_accuracy_match("106", "100"));
  EXPECT_TRUE(relaxed_accuracy_match("refutes", "Refutes"));
}

TEST(RelaxedAccuracy, Normalization) {
  EXPECT_TRUE(relaxed_accuracy_match("43.4%", "43.4"));
  EXPECT_TRUE(relaxed_accuracy_match("$1,250", "1250"));
  EXPECT_TRUE(relaxed_accuracy_match("  Somewhat Agree ", "somewhat agree"));
  EXPECT_TRUE(relaxed_accuracy_match("0", "0"));
  EXPECT_FALSE(relaxed_accuracy_match("0.01", "0"));
  EXPECT_TRUE(relaxed_accuracy_match("-95", "-100"));
  // Gold is the denominator, so matching is not symmetric.
  EXPECT_TRUE(relaxed_accuracy_match("95.1", "100"));
  EXPECT_FALSE(relaxed_accuracy_match("100", "95.1"));
  EXPECT_EQ(normalize_answer(" 1,234.5% "), "1234.5");
}

TEST(RelaxedAccuracy, CorpusFractions) {
  const std::vector<AnswerPair> all = {{"1", "1"}, {"a", "A"}};
  EXPECT_EQ(corpus_relaxed_accuracy(all), 1.0);
  const std::vector<AnswerPair> half = {{"1", "1"}, {"2", "1"}};
  EXPECT_EQ(corpus_relaxed_accuracy(half), 0.5);
  const std::vector<AnswerPair> fc = {{"accept", "accept"}, {"refute", "accept"}};
  EXPECT_EQ(binary_accuracy(fc), 0.5);
  const std::vector<AnswerPair> labels = {{"Supports", "accept"}, {"refuted.", "Refutes"}};
  EXPECT_EQ(binary_accuracy(labels), 1.0);
  EXPECT_THROW(corpus_relaxed_accuracy({}), Error);
  EXPECT_THROW(binary_accuracy({}), Error);
}

TEST(Bleu, TokenizerSplitsPunctuation) {
  EXPECT_EQ(toks("The chart, overall: rises!"), (Tokens{"the", "chart", ",", "overall", ":", "rises", "!"}));
  EXPECT_TRUE(toks("   ").empty());
}

TEST(Bleu, HandDerivedBrevity) {
  const std::vector<Tokens> c = {toks("a b c d")}, r = {toks("a b c d e")};
  EXPECT_NEAR(bleu(c, r), 100.0 * std::exp(1.0 - 5.0 / 4.0), 1e-9);
  EXPECT_NEAR(bleu(c, r), 77.88, 0.01);
}

TEST(Bleu, IdentityAndZero) {
  const std::vector<Tokens> c = {toks("the sales rose sharply in 2019"), toks("costs fell over the decade")};
  EXPECT_NEAR(bleu(c, c), 100.0, 1e-9);
  const std::vector<Tokens> d = {toks("a b c d"), toks("e f g h")}, e = {toks("a b c x"), toks("e f x h")};
  EXPECT_EQ(bleu(d, e), 0.0);
}

TEST(Bleu, ClippingCountsRepeats) {
  const auto s = bleu_sentence_stats(toks("the the the the"), toks("the cat"));
  EXPECT_EQ(s.matches[0], 1u);
  EXPECT_EQ(s.totals[0], 4u);
  EXPECT_EQ(s.totals[3], 1u);
}

TEST(Bleu, SerialParallelAndErrors) {
  Rng rng(4);
  std::vector<Tokens> c, r;
  for (int i = 0; i < 500; ++i) {
    Tokens a, b;
    for (std::size_t k = 0; k < 5 + rng.below(10); ++k) a.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
    for (std::size_t k = 0; k < 5 + rng.below(10); ++k) b.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
    c.push_back(a);
    r.push_back(b);
  }
  EXPECT_EQ(bleu_stats_serial(c, r), bleu_stats_parallel(c, r));
  const double score = bleu(c, r);
  EXPECT_GE(score, 0.0);
  EXPECT_LE(score, 100.0);
  EXPECT_THROW(bleu({}, {}), Error);
  const std::vector<Tokens> one = {toks("a")};
  try {
    bleu(one, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Kappa, DerivedFixture) {
  const std::vector<int> a = {1, 1, 1, 1, 0, 0, 0, 0, 1, 0}, b = {1, 1, 1, 1, 0, 0, 0, 1, 1, 0};
  EXPECT_NEAR(cohen_kappa(a, b), 0.8, 1e-12);
  EXPECT_EQ(cohen_kappa(a, a), 1.0);
}

TEST(Kappa, RelabelingInvariantAndIndependentNearZero) {
  Rng rng(17);
  std::vector<int> a(20000), b(20000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<int>(rng.below(3));
    b[i] = static_cast<int>(rng.below(3));
  }
  EXPECT_NEAR(cohen_kappa(a, b), 0.0, 0.03);
  std::vector<int> ra(a), rb(b);
  for (auto* v : {&ra, &rb}) {
    for (auto& x : *v) x = x == 0 ? 7 : x == 1 ? -2 : 4;
  }
  EXPECT_NEAR(cohen_kappa(ra, rb), cohen_kappa(a, b), 1e-12);
}

TEST(Kappa, MatchesOracleIncludingWeighted) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = 1 + static_cast<int>(rng.below(5));
      b[i] = rng.below(3) == 0 ? a[i] : 1 + static_cast<int>(rng.below(5));
    }
    EXPECT_NEAR(cohen_kappa(a, b), kappa_oracle(a, b, 0), 1e-12);
    EXPECT_NEAR(weighted_kappa(a, b, KappaWeighting::Linear), kappa_oracle(a, b, 1), 1e-12);
    EXPECT_NEAR(weighted_kappa(a, b, KappaWeighting::Quadratic), kappa_oracle(a, b, 2), 1e-12);
  }
}

TEST(Kappa, Errors) {
  const std::vector<int> a = {1, 2}, b = {1};
  EXPECT_THROW(cohen_kappa(a, b), Error);
  EXPECT_THROW(cohen_kappa({}, {}), Error);
  EXPECT_EQ(kappa_weighting_from_string("quadratic"), KappaWeighting::Quadratic);
}

TEST(MannWhitney, ExactSmallSample) {
  const std::vector<double> x = {1, 2, 3}, y = {4, 5, 6};
  const auto r = mann_whitney(x, y);
  EXPECT_EQ(r.u, 0.0);
  EXPECT_NEAR(r.p, 0.1, 1e-12);
  EXPECT_EQ(r.method, MwMethod::Exact);
  EXPECT_EQ(to_string(r.method), "exact");
}

TEST(MannWhitney, IdenticalSamples) {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto r = mann_whitney(x, x);
  EXPECT_EQ(r.u, 50.0);
  EXPECT_GT(r.p, 0.95);
  EXPECT_EQ(r.method, MwMethod::Normal);
}

TEST(MannWhitney, UIdentityWithTies) {
  Rng rng(31);
  for (int i = 0; i < 300; ++i) {
    const auto x = random_sample(rng, 1 + rng.below(15), 4);
    const auto y = random_sample(rng, 1 + rng.below(15), 4);
    const auto a = mann_whitney(x, y), b = mann_whitney(y, x);
    EXPECT_DOUBLE_EQ(a.u + b.u, static_cast<double>(x.size() * y.size()));
    EXPECT_DOUBLE_EQ(a.u, u_oracle(x, y));
    EXPECT_GT(a.p, 0.0);
    EXPECT_LE(a.p, 1.0);
  }
}

TEST(MannWhitney, ExactMatchesEnumeration) {
  Rng rng(37);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n1 = 1 + rng.below(6), n2 = 1 + rng.below(12 - n1);
    const auto x = random_sample(rng, n1, 0), y = random_sample(rng, n2, 0);
    const auto r = mann_whitney(x, y, MwMethod::Exact);
    EXPECT_NEAR(r.p, exact_p_oracle(x, y), 1e-12) << n1 << "," << n2;
  }
}

TEST(MannWhitney, NormalApproximationCloseAtSixSix) {
  Rng rng(41);
  for (int i = 0; i < 300; ++i) {
    const auto x = random_sample(rng, 6, 0), y = random_sample(rng, 6, 0);
    const double exact = mann_whitney(x, y, MwMethod::Exact).p;
    const double approx = mann_whitney(x, y, MwMethod::Normal).p;
    EXPECT_LE(std::abs(exact - approx), 0.02) << exact << " vs " << approx;
  }
}

TEST(MannWhitney, ExactRejectsTiesAndEmpty) {
  const std::vector<double> x = {1, 1, 2}, y = {2, 3};
  EXPECT_THROW(mann_whitney(x, y, MwMethod::Exact), Error);
  EXPECT_EQ(mann_whitney(x, y).method, MwMethod::Normal);
  EXPECT_THROW(mann_whitney({}, y), Error);
}

TEST(HumanEval, AllFivesVersusAllOnes) {
  std::vector<RatingRecord> rs;
  for (int i = 0; i < 10; ++i) {
    for (const char* m : {"informativeness", "relevance", "factual"}) {
      rs.push_back({"s" + std::to_string(i), "r1", "good", m, 5});
      rs.push_back({"s" + std::to_string(i), "r1", "bad", m, 1});
    }
  }
  const auto rep = aggregate_human_eval(rs);
  for (const auto& m : rep.means) EXPECT_EQ(m.mean, m.model == "good" ? 5.0 : 1.0);
  ASSERT_EQ(rep.tests.size(), 3u);
  const std::vector<double> fives(10, 5.0), ones(10, 1.0);
  EXPECT_DOUBLE_EQ(rep.tests[0].result.p, mann_whitney(ones, fives).p);
  for (const auto& k : rep.kappas) EXPECT_FALSE(k.kappa);
  EXPECT_TRUE(to_json(rep)["kappa"]["overall"]["kappa"].is_null());
}

TEST(HumanEval, KappaFixture) {
  const std::vector<int> a = {1, 1, 1, 1, 0, 0, 0, 0, 1, 0}, b = {1, 1, 1, 1, 0, 0, 0, 1, 1, 0};
  std::vector<RatingRecord> rs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    rs.push_back({"s" + std::to_string(i), "alice", "m", "factual", a[i] ? 5 : 1});
    rs.push_back({"s" + std::to_string(i), "bob", "m", "factual", b[i] ? 5 : 1});
  }
  const auto rep = aggregate_human_eval(rs);
  ASSERT_FALSE(rep.kappas.empty());
  EXPECT_EQ(rep.kappas[0].metric, "factual");
  EXPECT_EQ(rep.kappas[0].items, 10u);
  EXPECT_NEAR(*rep.kappas[0].kappa, 0.8, 1e-12);
  EXPECT_TRUE(rep.tests.empty());
  EXPECT_THROW(aggregate_human_eval({}), Error);
}

TEST(HumanEval, SampleMeansAverageRatersFirst) {
  std::vector<RatingRecord> rs = {{"s1", "r1", "m", "relevance", 2}, {"s1", "r2", "m", "relevance", 4},
                                  {"s2", "r1", "m", "relevance", 5}};
  const auto rep = aggregate_human_eval(rs);
  ASSERT_EQ(rep.means.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.means[0].mean, 4.0);
  EXPECT_EQ(rep.means[0].samples, 2u);
}

TEST(Ratings, Validation) {
  EXPECT_NO_THROW(rating_from_json(nlohmann::json{
      {"sample_id", 3}, {"rater_id", "r"}, {"model_id", "m"}, {"metric", "factual"}, {"score", 4}}));
  EXPECT_THROW(rating_from_json(nlohmann::json{
                   {"sample_id", "s"}, {"rater_id", "r"}, {"model_id", "m"}, {"metric", "fluency"}, {"score", 4}}),
               Error);
  EXPECT_THROW(rating_from_json(nlohmann::json{
                   {"sample_id", "s"}, {"rater_id", "r"}, {"model_id", "m"}, {"metric", "factual"}, {"score", 6}}),
               Error);
  testsupport::TempDir dir;
  testsupport::write_text(dir / "r.jsonl", "{\"sample_id\":\"s\"}\n");
  const std::vector<std::filesystem::path> paths = {dir / "r.jsonl"};
  try {
    load_ratings(paths);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("r.jsonl:1"), std::string::npos);
  }
}
