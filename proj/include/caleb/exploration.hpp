#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "caleb/dataset.hpp"
#include "caleb/error.hpp"

namespace caleb::metrics {

/// One-dimensional PCA of a single feature category. Columns are z-scored
/// (population std, constant columns left unscaled) before the covariance is
/// formed; `axis` is the unit leading eigenvector with its largest-magnitude
/// entry positive.
struct PcaComponent {
  std::string category;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  Eigen::VectorXd axis;
  double eigenvalue = 0.0;
  double explained_share = 0.0;
};

inline PcaComponent pca_fit(const data::Dataset& d, const std::string& category) {
  const auto [offset, width] = d.schema().range(category);
  if (d.size() < 2) throw Error(ErrorCode::EmptyDataset, "PCA needs at least 2 records");
  const Eigen::MatrixXd x =
      d.features().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(width));
  PcaComponent pc;
  pc.category = category;
  pc.mean = x.colwise().mean();
  Eigen::MatrixXd z = x.rowwise() - pc.mean;
  pc.scale = (z.array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().matrix();
  for (Eigen::Index j = 0; j < pc.scale.size(); ++j)
    if (!(pc.scale(j) > 1e-12)) pc.scale(j) = 1.0;
  z = (z.array().rowwise() / pc.scale.array()).matrix();
  const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(x.rows());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index top = eig.eigenvalues().size() - 1;  // ascending order
  pc.eigenvalue = eig.eigenvalues()(top);
  pc.axis = eig.eigenvectors().col(top).normalized();
  Eigen::Index big = 0;
  pc.axis.cwiseAbs().maxCoeff(&big);
  if (pc.axis(big) < 0.0) pc.axis = -pc.axis;
  const double total = eig.eigenvalues().sum();
  pc.explained_share = total > 0.0 ? pc.eigenvalue / total : 0.0;
  return pc;
}

/// Scalar coordinate of every record along the fitted axis.
inline std::vector<double> pca_project(const PcaComponent& pc, const data::Dataset& d) {
  const auto [offset, width] = d.schema().range(pc.category);
  if (static_cast<Eigen::Index>(width) != pc.axis.size())
    throw Error(ErrorCode::SchemaMismatch, "category width differs from the fitted component");
  const Eigen::MatrixXd x =
      d.features().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(width));
  const Eigen::VectorXd proj = ((x.rowwise() - pc.mean).array().rowwise() / pc.scale.array()).matrix() * pc.axis;
  return {proj.data(), proj.data() + proj.size()};
}

namespace detail {

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

/// Silverman's rule: 0.9 min(sigma, IQR / 1.34) n^(-1/5), using sigma alone
/// when the IQR is zero.
inline double silverman_bandwidth(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::DegenerateSample, "bandwidth needs at least 2 values");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : s) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / (n - 1.0));
  if (!(sigma > 0.0)) throw Error(ErrorCode::DegenerateSample, "sample has zero spread");
  const double iqr = detail::quantile_sorted(s, 0.75) - detail::quantile_sorted(s, 0.25);
  const double spread = iqr > 0.0 ? std::min(sigma, iqr / 1.34) : sigma;
  return 0.9 * spread * std::pow(n, -0.2);
}

struct CurvePoint {
  double x = 0.0;
  double density = 0.0;
};

/// Gaussian kernel density on `grid_points` evenly spaced points covering
/// [min - 3h, max + 3h].
inline std::vector<CurvePoint> kde_curve(std::span<const double> values, std::size_t grid_points = 200) {
  if (grid_points < 2) throw Error(ErrorCode::BadConfig, "need at least 2 grid points");
  const double h = silverman_bandwidth(values);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn - 3.0 * h, hi = *mx + 3.0 * h;
  const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<CurvePoint> curve(grid_points);
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double s = 0.0;
    for (double v : values) {
      const double u = (x - v) / h;
      s += std::exp(-0.5 * u * u);
    }
    curve[g] = {x, s * norm};
  }
  return curve;
}

}  // namespace caleb::metrics
