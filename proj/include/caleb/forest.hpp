#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "caleb/dataset.hpp"
#include "caleb/error.hpp"
#include "caleb/rng.hpp"

namespace caleb::forest {

using data::Matrix;

enum class MaxFeatures { sqrt, all, count };

struct ForestConfig {
  std::size_t n_trees = 100;
  MaxFeatures max_features = MaxFeatures::sqrt;
  std::size_t max_features_count = 0;  // used with MaxFeatures::count
  std::size_t min_samples_leaf = 1;
  std::size_t max_depth = 0;  // 0 = unlimited
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  std::size_t features_per_split(std::size_t width) const {
    switch (max_features) {
      case MaxFeatures::sqrt:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(width)))));
      case MaxFeatures::all: return width;
      case MaxFeatures::count: return std::clamp<std::size_t>(max_features_count, 1, width);
    }
    return width;
  }
};

/// Gini impurity 1 - sum p_i^2 of a class histogram.
inline double gini(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw Error(ErrorCode::EmptyHistogram, "negative histogram entry");
    total += c;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyHistogram, "histogram is empty");
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

struct Node {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::size_t feature = kNone;  // kNone marks a leaf
  double threshold = 0.0;
  std::size_t left = kNone;
  std::size_t right = kNone;
  std::vector<double> histogram;  // class counts of the training samples routed here

  bool leaf() const { return feature == kNone; }
};

struct DecisionTree {
  std::vector<Node> nodes;  // nodes[0] is the root

  template <typename Row>
  const Node& leaf_for(const Row& x) const {
    std::size_t i = 0;
    while (!nodes[i].leaf()) i = x(static_cast<Eigen::Index>(nodes[i].feature)) <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i];
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [i, dep] = stack.back();
      stack.pop_back();
      best = std::max(best, dep);
      if (!nodes[i].leaf()) {
        stack.emplace_back(nodes[i].left, dep + 1);
        stack.emplace_back(nodes[i].right, dep + 1);
      }
    }
    return best;
  }
};

namespace detail {

// Impurities closer than this count as tied; the earlier candidate is kept.
inline constexpr double kTieTolerance = 1e-12;

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = 0.0;  // weighted child impurity
};

/// Best split of `rows` on `feature`, thresholds at midpoints between
/// consecutive distinct values, first minimum wins.
inline Split best_split_on(const Matrix& x, std::span<const std::size_t> labels, std::vector<std::size_t>& rows,
                           std::size_t feature, std::size_t classes, std::size_t min_leaf, bool& constant) {
  const auto col = x.col(static_cast<Eigen::Index>(feature));
  std::sort(rows.begin(), rows.end(), [&](auto a, auto b) {
    const double va = col(static_cast<Eigen::Index>(a)), vb = col(static_cast<Eigen::Index>(b));
    return va < vb || (va == vb && a < b);
  });
  Split best;
  constant = col(static_cast<Eigen::Index>(rows.front())) == col(static_cast<Eigen::Index>(rows.back()));
  if (constant) return best;

  std::vector<double> left(classes, 0.0), right(classes, 0.0);
  for (auto r : rows) right[labels[r]] += 1.0;
  const double n = static_cast<double>(rows.size());
  double left_sq = 0.0, right_sq = 0.0;
  for (double c : right) right_sq += c * c;

  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto y = labels[rows[i]];
    left_sq += 2.0 * left[y] + 1.0;
    right_sq -= 2.0 * right[y] - 1.0;
    left[y] += 1.0;
    right[y] -= 1.0;
    const double a = col(static_cast<Eigen::Index>(rows[i])), b = col(static_cast<Eigen::Index>(rows[i + 1]));
    if (a == b) continue;
    const double nl = static_cast<double>(i + 1), nr = n - nl;
    if (nl < static_cast<double>(min_leaf) || nr < static_cast<double>(min_leaf)) continue;
    const double imp = (nl * (1.0 - left_sq / (nl * nl)) + nr * (1.0 - right_sq / (nr * nr))) / n;
    if (!best.found || imp < best.impurity - kTieTolerance) {
      double thr = a + (b - a) / 2.0;
      if (!(thr < b)) thr = a;
      best = {true, feature, thr, imp};
    }
  }
  return best;
}

inline DecisionTree grow_tree(const Matrix& x, std::span<const std::size_t> labels, std::vector<std::size_t> sample,
                              std::size_t classes, const ForestConfig& cfg, Rng& rng) {
  const std::size_t width = static_cast<std::size_t>(x.cols());
  const std::size_t mtry = cfg.features_per_split(width);
  DecisionTree tree;

  struct Work {
    std::size_t node;
    std::vector<std::size_t> rows;
    std::size_t depth;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::move(sample), 0});
  std::vector<std::size_t> features(width);

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    auto& hist = tree.nodes[w.node].histogram;
    hist.assign(classes, 0.0);
    for (auto r : w.rows) hist[labels[r]] += 1.0;
    const double parent = gini(hist);

    const bool depth_cap = cfg.max_depth > 0 && w.depth >= cfg.max_depth;
    if (parent == 0.0 || depth_cap || w.rows.size() < 2 * cfg.min_samples_leaf) continue;

    std::iota(features.begin(), features.end(), std::size_t{0});
    if (mtry < width) rng.shuffle(std::span(features));

    Split best;
    std::size_t visited = 0;
    for (std::size_t fi = 0; fi < width && visited < mtry; ++fi) {
      bool constant = false;
      const auto s = best_split_on(x, labels, w.rows, features[fi], classes, cfg.min_samples_leaf, constant);
      if (constant) continue;
      ++visited;
      if (s.found && (!best.found || s.impurity < best.impurity - kTieTolerance)) best = s;
    }
    if (!best.found || !(parent - best.impurity > kTieTolerance)) continue;

    std::vector<std::size_t> left_rows, right_rows;
    const auto col = x.col(static_cast<Eigen::Index>(best.feature));
    for (auto r : w.rows) (col(static_cast<Eigen::Index>(r)) <= best.threshold ? left_rows : right_rows).push_back(r);

    const std::size_t left_id = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[w.node];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left_id;
    node.right = left_id + 1;
    stack.push_back({left_id + 1, std::move(right_rows), w.depth + 1});
    stack.push_back({left_id, std::move(left_rows), w.depth + 1});
  }
  return tree;
}

}  // namespace detail

struct Forest {
  std::vector<DecisionTree> trees;
  std::size_t classes = 0;
  std::size_t width = 0;
};

/// Fits n_trees CART trees, each on its own bootstrap draw, and splits on the
/// best Gini decrease among max_features candidate features. Per-tree seeds
/// are derived from cfg.seed, so the result does not depend on thread count.
inline Forest fit(const Matrix& x, std::span<const std::size_t> labels, std::size_t classes,
                  const ForestConfig& cfg) {
  if (cfg.n_trees == 0) throw Error(ErrorCode::BadConfig, "n_trees must be >= 1");
  if (cfg.min_samples_leaf == 0) throw Error(ErrorCode::BadConfig, "min_samples_leaf must be >= 1");
  if (labels.empty()) throw Error(ErrorCode::EmptyTrain, "cannot fit a forest on zero records");
  if (static_cast<std::size_t>(x.rows()) != labels.size())
    throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  std::vector<bool> present(classes, false);
  for (auto l : labels) {
    if (l >= classes) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l));
    present[l] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2)
    throw Error(ErrorCode::SingleClass, "training data holds a single class");

  Forest f;
  f.classes = classes;
  f.width = static_cast<std::size_t>(x.cols());
  f.trees.resize(cfg.n_trees);
  const std::size_t n = labels.size();

  auto build = [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, t));
    std::vector<std::size_t> sample(n);
    if (cfg.bootstrap) {
      for (auto& s : sample) s = static_cast<std::size_t>(rng.index(n));
      std::sort(sample.begin(), sample.end());
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    f.trees[t] = detail::grow_tree(x, labels, std::move(sample), classes, cfg, rng);
  };

  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cfg.n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < cfg.n_trees; ++t) build(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.n_trees; t += threads) build(t);
      });
  }
  return f;
}

inline Forest fit(const data::Dataset& train, const ForestConfig& cfg) {
  return fit(train.features(), train.labels(), train.classes().size(), cfg);
}

/// Mean over trees of the normalized leaf histograms.
inline Matrix predict_proba(const Forest& f, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != f.width)
    throw Error(ErrorCode::WidthMismatch, "input width " + std::to_string(x.cols()) + " != forest width " +
                                              std::to_string(f.width));
  Matrix p = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(f.classes));
  for (const auto& tree : f.trees) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto& leaf = tree.leaf_for(x.row(i));
      const double total = std::accumulate(leaf.histogram.begin(), leaf.histogram.end(), 0.0);
      for (std::size_t c = 0; c < f.classes; ++c) p(i, static_cast<Eigen::Index>(c)) += leaf.histogram[c] / total;
    }
  }
  p /= static_cast<double>(f.trees.size());
  return p;
}

/// Argmax of predict_proba, ties to the lowest class index.
inline std::vector<std::size_t> predict(const Forest& f, const Matrix& x) {
  const Matrix p = predict_proba(f, x);
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c)
      if (p(i, c) > p(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

inline std::vector<std::size_t> predict(const Forest& f, const data::Dataset& d) { return predict(f, d.features()); }

inline nlohmann::json to_json(const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.leaf())
        nodes.push_back({{"hist", n.histogram}});
      else
        nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}, {"hist", n.histogram}});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"format", "caleb-forest"}, {"classes", f.classes}, {"width", f.width}, {"trees", trees}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "caleb-forest") throw Error(ErrorCode::BadConfig, "not a forest file");
  Forest f;
  f.classes = j.at("classes").get<std::size_t>();
  f.width = j.at("width").get<std::size_t>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree t;
    for (const auto& nj : tj) {
      Node n;
      n.histogram = nj.at("hist").get<std::vector<double>>();
      if (nj.contains("f")) {
        n.feature = nj["f"].get<std::size_t>();
        n.threshold = nj["t"].get<double>();
        n.left = nj["l"].get<std::size_t>();
        n.right = nj["r"].get<std::size_t>();
      }
      t.nodes.push_back(std::move(n));
    }
    f.trees.push_back(std::move(t));
  }
  return f;
}

}  // namespace caleb::forest
