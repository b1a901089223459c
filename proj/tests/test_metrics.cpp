#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "caleb/metrics.hpp"
#include "caleb/rng.hpp"
#include "test_support.hpp"

using namespace caleb;
using namespace caleb::metrics;

namespace {

struct Labels {
  std::vector<std::size_t> pred, truth;
};

Labels from_confusion(const std::vector<std::vector<int>>& c) {
  Labels l;
  for (std::size_t t = 0; t < c.size(); ++t)
    for (std::size_t p = 0; p < c[t].size(); ++p)
      for (int i = 0; i < c[t][p]; ++i) l.truth.push_back(t), l.pred.push_back(p);
  return l;
}

// Per-class counting over the raw label vectors, no confusion matrix.
struct OracleScores {
  double accuracy, precision, recall, f1, g_mean;
};

OracleScores oracle(const Labels& l, std::size_t k) {
  OracleScores s{0, 0, 0, 0, 1};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < l.truth.size(); ++i) correct += l.pred[i] == l.truth[i];
  s.accuracy = static_cast<double>(correct) / static_cast<double>(l.truth.size());
  for (std::size_t c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < l.truth.size(); ++i) {
      if (l.pred[i] == c && l.truth[i] == c) tp += 1;
      if (l.pred[i] == c && l.truth[i] != c) fp += 1;
      if (l.pred[i] != c && l.truth[i] == c) fn += 1;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : (tp + fp > 0 ? 0.0 : 1.0);
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    s.precision += p / static_cast<double>(k);
    s.recall += r / static_cast<double>(k);
    s.f1 += f / static_cast<double>(k);
    s.g_mean *= r;
  }
  s.g_mean = std::pow(s.g_mean, 1.0 / static_cast<double>(k));
  return s;
}

// D = max over every sample point of |F_a(x) - F_b(x)| with the ECDFs counted directly.
double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  double d = 0.0;
  for (double x : pts) {
    double fa = 0, fb = 0;
    for (double v : a) fa += v <= x;
    for (double v : b) fb += v <= x;
    d = std::max(d, std::abs(fa / static_cast<double>(a.size()) - fb / static_cast<double>(b.size())));
  }
  return d;
}

data::Dataset column_dataset(const std::vector<double>& v) {
  data::FeatureSchema schema({{"f", 1}});
  data::Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return data::Dataset::from_matrix(schema, data::ClassMap::binary(), m, std::vector<std::size_t>(v.size(), 0));
}

}  // namespace

TEST_CASE("evaluate: hand cases", "[metrics]") {
  SECTION("perfect predictions") {
    const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0};
    const auto r = evaluate(y, y, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision_macro == 1.0);
    CHECK(r.recall_macro == 1.0);
    CHECK(r.f1_macro == 1.0);
    CHECK(r.g_mean == 1.0);
  }

  SECTION("a collapsed binary classifier has zero G-mean") {
    const auto l = from_confusion({{50, 0}, {50, 0}});
    const auto r = evaluate(l.pred, l.truth, 2);
    CHECK(r.recall_macro == 0.5);
    CHECK(r.g_mean == 0.0);
    CHECK(r.precision_macro == 0.25);
  }

  SECTION("binary G-mean is sqrt(TPR * TNR)") {
    const auto l = from_confusion({{30, 10}, {5, 15}});
    const auto r = evaluate(l.pred, l.truth, 2);
    CHECK(r.g_mean == Catch::Approx(std::sqrt(0.75 * 0.75)).epsilon(1e-12));
  }

  SECTION("3-class confusion against hand arithmetic") {
    const auto l = from_confusion({{8, 1, 1}, {0, 9, 1}, {2, 0, 8}});
    const auto r = evaluate(l.pred, l.truth, 3);
    CHECK(r.accuracy == Catch::Approx(25.0 / 30.0).epsilon(1e-15));
    // column sums 10, 10, 10; row sums 10, 10, 10
    CHECK(r.precision_macro == Catch::Approx((0.8 + 0.9 + 0.8) / 3).epsilon(1e-12));
    CHECK(r.recall_macro == Catch::Approx((0.8 + 0.9 + 0.8) / 3).epsilon(1e-12));
    CHECK(r.f1_macro == Catch::Approx((0.8 + 0.9 + 0.8) / 3).epsilon(1e-12));
    CHECK(r.g_mean == Catch::Approx(std::cbrt(0.8 * 0.9 * 0.8)).epsilon(1e-12));
    CHECK(r.confusion(2, 0) == 2.0);
  }

  SECTION("absent-class convention") {
    // class 2 absent from truth and predictions: recall 1, precision 0
    const auto a = evaluate(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1}, 3);
    CHECK(a.recall[2] == 1.0);
    CHECK(a.precision[2] == 0.0);
    // class 2 absent from truth but predicted: recall 0
    const auto b = evaluate(std::vector<std::size_t>{0, 2}, std::vector<std::size_t>{0, 1}, 3);
    CHECK(b.recall[2] == 0.0);
  }

  SECTION("errors") {
    test::require_error(ErrorCode::LengthMismatch,
                        [] { evaluate(std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}, 2); });
    test::require_error(ErrorCode::LengthMismatch,
                        [] { evaluate(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 2); });
  }
}

TEST_CASE("evaluate matches a per-class counting oracle", "[metrics][oracle]") {
  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(4);
    const std::size_t n = 1 + rng.index(20);
    Labels l;
    for (std::size_t i = 0; i < n; ++i) {
      l.truth.push_back(rng.index(k));
      l.pred.push_back(rng.uniform() < 0.6 ? l.truth.back() : rng.index(k));
    }
    const auto r = evaluate(l.pred, l.truth, k);
    const auto o = oracle(l, k);
    CHECK(std::abs(r.accuracy - o.accuracy) < 1e-9);
    CHECK(std::abs(r.precision_macro - o.precision) < 1e-9);
    CHECK(std::abs(r.recall_macro - o.recall) < 1e-9);
    CHECK(std::abs(r.f1_macro - o.f1) < 1e-9);
    CHECK(std::abs(r.g_mean - o.g_mean) < 1e-9);

    CHECK(r.confusion.sum() == static_cast<double>(n));
    CHECK(r.accuracy == Catch::Approx(r.confusion.trace() / static_cast<double>(n)));
    CHECK(r.g_mean <= r.recall_macro + 1e-12);
    for (double v : {r.accuracy, r.precision_macro, r.recall_macro, r.f1_macro, r.g_mean}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("KS statistic", "[metrics][ks]") {
  CHECK(ks_statistic({1, 2, 3, 4}, {1, 2, 3, 10}) == 0.25);
  CHECK(ks_statistic({0, 0, 0, 0}, {1, 1, 1, 1}) == 1.0);
  CHECK(ks_score(column_dataset({1, 2, 3, 4}), column_dataset({1, 2, 3, 10})) == 0.75);
  CHECK(ks_score(column_dataset({0, 0, 0, 0}), column_dataset({1, 1, 1, 1})) == 0.0);
  CHECK(ks_score(column_dataset({3, 1, 2}), column_dataset({1, 2, 3})) == 1.0);

  SECTION("matches brute-force ECDF enumeration, ties included") {
    Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<double> a(1 + rng.index(20)), b(1 + rng.index(20));
      for (auto& v : a) v = static_cast<double>(rng.index(6));
      for (auto& v : b) v = static_cast<double>(rng.index(6)) + (trial % 2 ? 0.5 * rng.uniform() : 0.0);
      CHECK(std::abs(ks_statistic(a, b) - brute_ks(a, b)) < 1e-12);
    }
  }

  test::require_error(ErrorCode::EmptyDataset, [] { ks_statistic({}, {1.0}); });
}

TEST_CASE("KL score", "[metrics][kl]") {
  SECTION("identical samples") {
    const std::vector<double> v{0.1, 0.5, 0.9, 2.0};
    const auto d = column_dataset(v);
    CHECK(kl_divergence(v, v, 50) == 0.0);
    CHECK(kl_score(d, d) == 1.0);
  }

  SECTION("two-bin hand case") {
    // real counts [3, 1], synth [1, 3]; smoothed q = [2/6, 4/6], p = [4/6, 2/6]
    const std::vector<double> real{0.0, 0.1, 0.2, 1.0}, synth{0.0, 0.8, 0.9, 1.0};
    const double q0 = 2.0 / 6, q1 = 4.0 / 6, p0 = 4.0 / 6, p1 = 2.0 / 6;
    const double expected = q0 * std::log(q0 / p0) + q1 * std::log(q1 / p1);
    CHECK(expected == Catch::Approx(std::numbers::ln2 / 3).epsilon(1e-14));
    CHECK(std::abs(kl_divergence(real, synth, 2) - expected) < 1e-12);
    CHECK(std::abs(kl_score(column_dataset(real), column_dataset(synth), 2) - 1.0 / (1.0 + expected)) < 1e-12);
  }

  SECTION("score decreases as the synthetic sample shifts away") {
    Rng rng(10);
    std::vector<double> real(2000), base(2000);
    for (auto& v : real) v = rng.normal();
    for (auto& v : base) v = rng.normal();
    double prev = 2.0;
    for (double shift : {0.0, 1.0, 3.0}) {
      std::vector<double> s = base;
      for (auto& v : s) v += shift;
      const double score = kl_score(column_dataset(real), column_dataset(s));
      CHECK(score < prev);
      prev = score;
    }
  }

  SECTION("bounded in [0, 1]") {
    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> a(1 + rng.index(30)), b(1 + rng.index(30));
      for (auto& v : a) v = rng.normal(0, 1 + 5 * rng.uniform());
      for (auto& v : b) v = rng.normal(3 * rng.uniform(), 1);
      const auto r = fidelity(column_dataset(a), column_dataset(b), 1 + rng.index(60));
      CHECK(r.kl_score > 0.0);
      CHECK(r.kl_score <= 1.0);
      CHECK(r.ks_score >= 0.0);
      CHECK(r.ks_score <= 1.0);
    }
  }

  test::require_error(ErrorCode::EmptyDataset, [] { kl_divergence(std::vector<double>{}, std::vector<double>{1.0}, 5); });
}

TEST_CASE("fidelity on a fixture", "[metrics]") {
  const auto schema = data::FeatureSchema({{"a", 3}, {"b", 2}});
  const auto fixture = data::make_fixture(test::two_gaussians(5, 1.5), 400, schema, data::ClassMap::binary(), 1);

  SECTION("a real subsample scores at least as well as label-shuffled noise") {
    std::vector<std::size_t> half;
    for (std::size_t i = 0; i < fixture.size(); i += 2) half.push_back(i);
    const auto sub = fixture.subset(half);
    Rng rng(2);
    data::Matrix noise = fixture.features();
    for (Eigen::Index j = 0; j < noise.cols(); ++j)
      for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = rng.normal(0.0, 3.0);
    const auto shuffled = fixture.with_features(noise);
    CHECK(ks_score(fixture, sub) >= ks_score(fixture, shuffled));
    CHECK(kl_score(fixture, sub) >= kl_score(fixture, shuffled));
  }

  SECTION("exact copy") {
    const auto r = fidelity(fixture, fixture);
    CHECK(r.ks_score == 1.0);
    CHECK(r.kl_score == 1.0);
    CHECK(r.ks_per_feature.size() == 5);
  }

  SECTION("schema mismatch") {
    test::require_error(ErrorCode::SchemaMismatch, [&] { ks_score(fixture, column_dataset({1.0})); });
  }
}
