#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "caleb/dataset.hpp"
#include "caleb/error.hpp"
#include "caleb/rng.hpp"

namespace caleb::oversample {

using data::ClassCounts;
using data::Dataset;
using data::Matrix;

/// Exact k-nearest-neighbour table over the rows of `points` (squared
/// Euclidean distance). Neighbours never include the query row itself and are
/// ordered by distance, then by row index.
class NeighborIndex {
 public:
  NeighborIndex(const Matrix& points, std::size_t k) : points_(points), k_(k) {
    if (k_ == 0) throw Error(ErrorCode::BadConfig, "k must be >= 1");
    if (static_cast<std::size_t>(points_.rows()) <= k_)
      throw Error(ErrorCode::ClassTooSmall, "need more than k = " + std::to_string(k_) + " points, have " +
                                                std::to_string(points_.rows()));
  }

  std::size_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }

  std::vector<std::size_t> neighbors(std::size_t row) const {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(size());
    const auto q = points_.row(static_cast<Eigen::Index>(row));
    for (std::size_t j = 0; j < size(); ++j) {
      if (j == row) continue;
      dist.emplace_back((points_.row(static_cast<Eigen::Index>(j)) - q).squaredNorm(), j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    std::vector<std::size_t> out(k_);
    for (std::size_t i = 0; i < k_; ++i) out[i] = dist[i].second;
    return out;
  }

 private:
  const Matrix& points_;
  std::size_t k_;
};

/// Target where every present class is raised to the majority count.
inline ClassCounts balance_to_majority(const Dataset& d) {
  auto counts = d.class_counts();
  const auto mx = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  for (auto& c : counts)
    if (c > 0) c = mx;
  return counts;
}

/// Target that adds floor(count * a / b) records to every class.
inline ClassCounts expansion_target(const Dataset& d, std::size_t phi_a, std::size_t phi_b) {
  auto counts = d.class_counts();
  const auto extra = data::expansion_counts(d, phi_a, phi_b);
  for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += extra[c];
  return counts;
}

namespace detail {

inline Matrix class_points(const Dataset& d, const std::vector<std::size_t>& rows) {
  Matrix p(static_cast<Eigen::Index>(rows.size()), d.features().cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    p.row(static_cast<Eigen::Index>(i)) = d.features().row(static_cast<Eigen::Index>(rows[i]));
  return p;
}

struct SyntheticBuilder {
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<std::size_t> labels;

  void add(const Eigen::RowVectorXd& base, const Eigen::RowVectorXd& neighbor, double lambda, std::size_t label) {
    rows.push_back(base + lambda * (neighbor - base));
    labels.push_back(label);
  }

  Dataset finish(const Dataset& like, data::Provenance p) && {
    Matrix f(static_cast<Eigen::Index>(rows.size()), like.features().cols());
    for (std::size_t i = 0; i < rows.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = rows[i];
    return Dataset::from_matrix(like.schema(), like.classes(), std::move(f), std::move(labels), p);
  }
};

inline void check_target(const Dataset& d, const ClassCounts& target) {
  if (target.size() != d.classes().size())
    throw Error(ErrorCode::LengthMismatch, "target must list one count per class");
}

}  // namespace detail

/// ADASYN synthetic records (only the new ones). For every class whose target
/// exceeds its count, each member's difficulty r_i is the share of its k
/// nearest neighbours (whole dataset) from other classes. The G missing records
/// are allotted floor(r̂_i G) per member, the remainder going one apiece to the
/// members with the largest r̂_i; an all-zero r falls back to uniform weights.
/// Each record interpolates between a member and a random one of its k nearest
/// same-class neighbours.
inline Dataset adasyn(const Dataset& d, const ClassCounts& target, std::size_t k, std::uint64_t seed) {
  detail::check_target(d, target);
  const auto counts = d.class_counts();
  detail::SyntheticBuilder out;
  std::optional<NeighborIndex> all;

  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (target[c] <= counts[c]) continue;
    if (counts[c] == 0) throw Error(ErrorCode::EmptyMinority, "class '" + d.classes().label(c) + "' has no records");
    if (counts[c] <= k)
      throw Error(ErrorCode::ClassTooSmall, "class '" + d.classes().label(c) + "' needs more than k = " +
                                                std::to_string(k) + " records");
    if (!all) all.emplace(d.features(), k);
    const std::size_t g_total = target[c] - counts[c];
    const auto rows = d.rows_of_class(c);
    const Matrix pts = detail::class_points(d, rows);
    const NeighborIndex same(pts, k);

    std::vector<double> r(rows.size());
    double r_sum = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::size_t other = 0;
      for (auto j : all->neighbors(rows[i]))
        if (d.labels()[j] != c) ++other;
      r[i] = static_cast<double>(other) / static_cast<double>(k);
      r_sum += r[i];
    }
    if (r_sum == 0.0) {
      std::fill(r.begin(), r.end(), 1.0);
      r_sum = static_cast<double>(r.size());
    }
    std::vector<std::size_t> alloc(rows.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      r[i] /= r_sum;
      alloc[i] = static_cast<std::size_t>(std::floor(r[i] * static_cast<double>(g_total)));
      assigned += alloc[i];
    }
    std::vector<std::size_t> by_weight(rows.size());
    std::iota(by_weight.begin(), by_weight.end(), std::size_t{0});
    std::stable_sort(by_weight.begin(), by_weight.end(), [&](auto a, auto b) { return r[a] > r[b]; });
    for (std::size_t i = 0; assigned < g_total; i = (i + 1) % rows.size(), ++assigned) ++alloc[by_weight[i]];

    Rng rng(derive_seed(seed, c));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alloc[i] == 0) continue;
      const auto nn = same.neighbors(i);
      for (std::size_t s = 0; s < alloc[i]; ++s) {
        const auto j = nn[rng.index(nn.size())];
        out.add(pts.row(static_cast<Eigen::Index>(i)), pts.row(static_cast<Eigen::Index>(j)), rng.uniform(), c);
      }
    }
  }
  return std::move(out).finish(d, data::Provenance::adasyn);
}

/// SMOTE synthetic records (only the new ones). The G missing records of a
/// class are spread evenly over its members; the G mod n leftover go to a
/// seeded random subset of members.
inline Dataset smote(const Dataset& d, const ClassCounts& target, std::size_t k, std::uint64_t seed) {
  detail::check_target(d, target);
  const auto counts = d.class_counts();
  detail::SyntheticBuilder out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (target[c] <= counts[c]) continue;
    if (counts[c] == 0) throw Error(ErrorCode::EmptyMinority, "class '" + d.classes().label(c) + "' has no records");
    if (counts[c] <= k)
      throw Error(ErrorCode::ClassTooSmall, "class '" + d.classes().label(c) + "' needs more than k = " +
                                                std::to_string(k) + " records");
    const std::size_t g_total = target[c] - counts[c];
    const auto rows = d.rows_of_class(c);
    const Matrix pts = detail::class_points(d, rows);
    const NeighborIndex same(pts, k);
    Rng rng(derive_seed(seed, c));

    std::vector<std::size_t> alloc(rows.size(), g_total / rows.size());
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    for (std::size_t i = 0; i < g_total % rows.size(); ++i) ++alloc[order[i]];

    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alloc[i] == 0) continue;
      const auto nn = same.neighbors(i);
      for (std::size_t s = 0; s < alloc[i]; ++s) {
        const auto j = nn[rng.index(nn.size())];
        out.add(pts.row(static_cast<Eigen::Index>(i)), pts.row(static_cast<Eigen::Index>(j)), rng.uniform(), c);
      }
    }
  }
  return std::move(out).finish(d, data::Provenance::smote_enn);
}

/// Edited nearest neighbours: drops every record whose k nearest neighbours
/// hold a strict plurality for some label other than its own. Order of the
/// surviving records is preserved.
inline Dataset enn_clean(const Dataset& d, std::size_t k = 3) {
  if (d.size() <= k) return d;
  const NeighborIndex index(d.features(), k);
  std::vector<std::size_t> keep;
  std::vector<std::size_t> votes(d.classes().size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (auto j : index.neighbors(i)) ++votes[d.labels()[j]];
    const auto own = votes[d.labels()[i]];
    const bool outvoted = std::any_of(votes.begin(), votes.end(), [own](auto v) { return v > own; });
    if (!outvoted) keep.push_back(i);
  }
  return d.subset(keep);
}

/// SMOTE to `target`, then ENN over originals and synthetic records together.
/// Returns the whole cleaned dataset, not just the new records.
inline Dataset smote_enn(const Dataset& d, const ClassCounts& target, std::uint64_t seed, std::size_t smote_k = 5,
                         std::size_t enn_k = 3) {
  return enn_clean(data::augment(d, smote(d, target, smote_k, seed)), enn_k);
}

}  // namespace caleb::oversample
