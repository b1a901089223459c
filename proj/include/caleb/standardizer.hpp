#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "caleb/dataset.hpp"

namespace caleb::data {

/// Per-column z-score scaling. Population standard deviation; columns whose
/// deviation is below `kMinStd` are treated as constant and get std = 1.
struct Standardizer {
  static constexpr double kMinStd = 1e-12;

  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  Matrix transform(const Matrix& x) const {
    return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
  }
  Matrix inverse_transform(const Matrix& z) const {
    return ((z.array().rowwise() * std.array()).matrix().rowwise() + mean);
  }
};

inline Standardizer fit_standardizer(const Dataset& d) {
  if (d.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit a standardizer on zero records");
  const auto& x = d.features();
  Standardizer s;
  s.mean = x.colwise().mean();
  s.std = ((x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.std.size(); ++j)
    if (!(s.std(j) > Standardizer::kMinStd)) s.std(j) = 1.0;
  return s;
}

inline Dataset transform(const Standardizer& s, const Dataset& d) {
  if (s.mean.size() != static_cast<Eigen::Index>(d.width()))
    throw Error(ErrorCode::SchemaMismatch, "standardizer width does not match dataset");
  return d.with_features(s.transform(d.features()));
}

inline Dataset inverse_transform(const Standardizer& s, const Dataset& d) {
  if (s.mean.size() != static_cast<Eigen::Index>(d.width()))
    throw Error(ErrorCode::SchemaMismatch, "standardizer width does not match dataset");
  return d.with_features(s.inverse_transform(d.features()));
}

}  // namespace caleb::data
