#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "caleb/dataset.hpp"
#include "caleb/error.hpp"

namespace caleb::metrics {

struct EvalReport {
  Eigen::MatrixXd confusion;  // K x K counts, rows = truth, cols = prediction
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  double g_mean = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;     // per class
  std::vector<double> f1;         // per class
};

/// Confusion-matrix scores with unweighted class means.
///
/// A class missing from the truth has recall 1 if it is also never predicted,
/// else 0. A never-predicted class has precision 0. G-mean is the geometric
/// mean of per-class recalls (sqrt(TPR * TNR) for two classes).
inline EvalReport evaluate(std::span<const std::size_t> pred, std::span<const std::size_t> truth, std::size_t k) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
  if (truth.empty()) throw Error(ErrorCode::LengthMismatch, "cannot evaluate zero predictions");
  EvalReport r;
  r.confusion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] >= k || truth[i] >= k) throw Error(ErrorCode::LabelOutOfRange, "label outside [0, K)");
    r.confusion(static_cast<Eigen::Index>(truth[i]), static_cast<Eigen::Index>(pred[i])) += 1.0;
  }
  const double n = static_cast<double>(truth.size());
  r.accuracy = r.confusion.trace() / n;
  r.precision.resize(k);
  r.recall.resize(k);
  r.f1.resize(k);
  double log_recall = 0.0;
  bool zero_recall = false;
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const double tp = r.confusion(ci, ci);
    const double actual = r.confusion.row(ci).sum();
    const double predicted = r.confusion.col(ci).sum();
    r.precision[c] = predicted > 0.0 ? tp / predicted : 0.0;
    r.recall[c] = actual > 0.0 ? tp / actual : (predicted > 0.0 ? 0.0 : 1.0);
    const double pr = r.precision[c] + r.recall[c];
    r.f1[c] = pr > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
    if (r.recall[c] == 0.0)
      zero_recall = true;
    else
      log_recall += std::log(r.recall[c]);
  }
  const double kk = static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.precision_macro += r.precision[c] / kk;
    r.recall_macro += r.recall[c] / kk;
    r.f1_macro += r.f1[c] / kk;
  }
  r.g_mean = zero_recall ? 0.0 : std::exp(log_recall / kk);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  std::vector<std::vector<double>> conf(static_cast<std::size_t>(r.confusion.rows()));
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i)
    for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) conf[static_cast<std::size_t>(i)].push_back(r.confusion(i, j));
  return {{"accuracy", r.accuracy}, {"precision", r.precision_macro}, {"recall", r.recall_macro},
          {"f1", r.f1_macro},       {"g_mean", r.g_mean},             {"confusion", conf},
          {"per_class_precision", r.precision}, {"per_class_recall", r.recall}, {"per_class_f1", r.f1}};
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b| by a merged sweep
/// over the sorted samples.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyDataset, "KS statistic of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// KL(q || p) between Laplace-smoothed (+1 per bin) histograms of `synth` (q)
/// and `real` (p) over `bins` equal bins spanning both samples.
inline double kl_divergence(std::span<const double> real, std::span<const double> synth, std::size_t bins) {
  if (real.empty() || synth.empty()) throw Error(ErrorCode::EmptyDataset, "KL divergence of an empty sample");
  if (bins == 0) throw Error(ErrorCode::BadConfig, "bins must be >= 1");
  double lo = real[0], hi = real[0];
  for (double v : real) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : synth) lo = std::min(lo, v), hi = std::max(hi, v);
  std::vector<double> p(bins, 1.0), q(bins, 1.0);
  auto bin_of = [&](double v) {
    if (!(hi > lo)) return std::size_t{0};
    const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  for (double v : real) p[bin_of(v)] += 1.0;
  for (double v : synth) q[bin_of(v)] += 1.0;
  const double ps = static_cast<double>(real.size() + bins), qs = static_cast<double>(synth.size() + bins);
  double kl = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double qb = q[b] / qs, pb = p[b] / ps;
    kl += qb * std::log(qb / pb);
  }
  return std::max(kl, 0.0);
}

struct FidelityReport {
  double ks_score = 0.0;
  double kl_score = 0.0;
  std::vector<double> ks_per_feature;  // 1 - D
  std::vector<double> kl_per_feature;  // 1 / (1 + KL)
};

namespace detail {

inline void check_pair(const data::Dataset& real, const data::Dataset& synth) {
  if (real.empty() || synth.empty()) throw Error(ErrorCode::EmptyDataset, "fidelity needs two non-empty datasets");
  if (!(real.schema() == synth.schema())) throw Error(ErrorCode::SchemaMismatch, "fidelity datasets differ in schema");
}

inline std::vector<double> column(const data::Dataset& d, Eigen::Index j) {
  const auto c = d.features().col(j);
  return {c.data(), c.data() + c.size()};
}

}  // namespace detail

/// Mean over features of 1 - D_KS. 1 means identical empirical marginals.
inline std::vector<double> ks_per_feature(const data::Dataset& real, const data::Dataset& synth) {
  detail::check_pair(real, synth);
  std::vector<double> out;
  for (Eigen::Index j = 0; j < real.features().cols(); ++j)
    out.push_back(1.0 - ks_statistic(detail::column(real, j), detail::column(synth, j)));
  return out;
}

inline double ks_score(const data::Dataset& real, const data::Dataset& synth) {
  const auto v = ks_per_feature(real, synth);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Mean over features of 1 / (1 + KL(synth || real)).
inline std::vector<double> kl_per_feature(const data::Dataset& real, const data::Dataset& synth,
                                          std::size_t bins = 50) {
  detail::check_pair(real, synth);
  std::vector<double> out;
  for (Eigen::Index j = 0; j < real.features().cols(); ++j) {
    const auto a = detail::column(real, j), b = detail::column(synth, j);
    out.push_back(1.0 / (1.0 + kl_divergence(a, b, bins)));
  }
  return out;
}

inline double kl_score(const data::Dataset& real, const data::Dataset& synth, std::size_t bins = 50) {
  const auto v = kl_per_feature(real, synth, bins);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline FidelityReport fidelity(const data::Dataset& real, const data::Dataset& synth, std::size_t bins = 50) {
  FidelityReport r;
  r.ks_per_feature = ks_per_feature(real, synth);
  r.kl_per_feature = kl_per_feature(real, synth, bins);
  for (double x : r.ks_per_feature) r.ks_score += x;
  for (double x : r.kl_per_feature) r.kl_score += x;
  r.ks_score /= static_cast<double>(r.ks_per_feature.size());
  r.kl_score /= static_cast<double>(r.kl_per_feature.size());
  return r;
}

inline nlohmann::json to_json(const FidelityReport& r) {
  return {{"ks_score", r.ks_score}, {"kl_score", r.kl_score}, {"ks_per_feature", r.ks_per_feature},
          {"kl_per_feature", r.kl_per_feature}};
}

}  // namespace caleb::metrics
