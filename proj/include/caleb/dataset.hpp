#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "caleb/error.hpp"
#include "caleb/rng.hpp"

namespace caleb::data {

struct Category {
  std::string name;
  std::size_t width = 0;

  bool operator==(const Category&) const = default;
};

/// Ordered feature categories; each category owns a contiguous column range.
class FeatureSchema {
 public:
  explicit FeatureSchema(std::vector<Category> categories)
      : categories_(std::move(categories)) {
    std::set<std::string> seen;
    for (const auto& c : categories_) {
      if (c.name.empty()) throw Error(ErrorCode::BadSchema, "empty category name");
      if (c.width == 0) throw Error(ErrorCode::BadSchema, "category '" + c.name + "' has zero width");
      if (!seen.insert(c.name).second)
        throw Error(ErrorCode::BadSchema, "duplicate category '" + c.name + "'");
      total_width_ += c.width;
    }
    if (categories_.empty()) throw Error(ErrorCode::BadSchema, "schema has no categories");
  }

  /// The 310-feature account schema.
  static FeatureSchema bot_default() {
    return FeatureSchema({{"content", 182}, {"sentiment", 58}, {"temporal", 29}, {"user", 28}, {"hashtag", 13}});
  }

  /// Recovers categories from `<category>_<index>` column names. Columns of one
  /// category must be contiguous and numbered from 0.
  static FeatureSchema from_header(std::span<const std::string> columns) {
    std::vector<Category> cats;
    for (const auto& col : columns) {
      if (col == "label") continue;
      const auto us = col.rfind('_');
      if (us == std::string::npos || us == 0)
        throw Error(ErrorCode::BadSchema, "column '" + col + "' is not <category>_<index>");
      const std::string name = col.substr(0, us);
      std::size_t idx = 0;
      const auto* first = col.data() + us + 1;
      const auto* last = col.data() + col.size();
      auto [p, ec] = std::from_chars(first, last, idx);
      if (ec != std::errc{} || p != last)
        throw Error(ErrorCode::BadSchema, "column '" + col + "' is not <category>_<index>");
      if (!cats.empty() && cats.back().name == name) {
        if (idx != cats.back().width) throw Error(ErrorCode::BadSchema, "column '" + col + "' out of order");
        ++cats.back().width;
      } else {
        if (idx != 0) throw Error(ErrorCode::BadSchema, "column '" + col + "' out of order");
        cats.push_back({name, 1});
      }
    }
    return FeatureSchema(std::move(cats));
  }

  const std::vector<Category>& categories() const noexcept { return categories_; }
  std::size_t total_width() const noexcept { return total_width_; }

  /// (offset, width) of a category.
  std::pair<std::size_t, std::size_t> range(std::string_view name) const {
    std::size_t offset = 0;
    for (const auto& c : categories_) {
      if (c.name == name) return {offset, c.width};
      offset += c.width;
    }
    throw Error(ErrorCode::UnknownCategory, std::string(name));
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    names.reserve(total_width_);
    for (const auto& c : categories_)
      for (std::size_t i = 0; i < c.width; ++i) names.push_back(c.name + "_" + std::to_string(i));
    return names;
  }

  std::uint64_t hash() const {
    std::string s;
    for (const auto& c : categories_) s += c.name + ":" + std::to_string(c.width) + ";";
    return fnv1a(s);
  }

  bool operator==(const FeatureSchema& o) const { return categories_ == o.categories_; }

 private:
  std::vector<Category> categories_;
  std::size_t total_width_ = 0;
};

class ClassMap {
 public:
  explicit ClassMap(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) throw Error(ErrorCode::BadConfig, "class map needs at least 2 labels");
    std::set<std::string> seen;
    for (const auto& l : labels_) {
      if (l.empty()) throw Error(ErrorCode::BadConfig, "empty class label");
      if (!seen.insert(l).second) throw Error(ErrorCode::BadConfig, "duplicate class label '" + l + "'");
    }
  }

  /// Six classes used by the GAN experiments ("other" bots are dropped).
  static ClassMap experiment_default() {
    return ClassMap({"spam", "social", "political", "cyborg", "self-declared", "human"});
  }

  static ClassMap full() {
    return ClassMap({"spam", "social", "political", "cyborg", "self-declared", "other", "human"});
  }

  static ClassMap binary() { return ClassMap({"bot", "human"}); }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<std::size_t> index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return i;
    return std::nullopt;
  }

  bool operator==(const ClassMap&) const = default;

 private:
  std::vector<std::string> labels_;
};

enum class Provenance : std::uint8_t { original, cgan, acgan, adasyn, smote_enn };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::original: return "original";
    case Provenance::cgan: return "cgan";
    case Provenance::acgan: return "acgan";
    case Provenance::adasyn: return "adasyn";
    case Provenance::smote_enn: return "smote_enn";
  }
  return "?";
}

/// Record identities: originals keep their source row index, synthetic records
/// carry their provenance in the top byte.
inline std::uint64_t synthetic_id(Provenance p, std::uint64_t seq) {
  return (static_cast<std::uint64_t>(p) << 56) | seq;
}

struct AccountRecord {
  std::vector<double> features;
  std::size_t label = 0;
  Provenance provenance = Provenance::original;
  std::uint64_t id = 0;
};

using Matrix = Eigen::MatrixXd;
using ClassCounts = std::vector<std::size_t>;

/// Immutable labelled table. Features are stored n x d, one row per record.
class Dataset {
 public:
  Dataset(FeatureSchema schema, ClassMap classes)
      : schema_(std::move(schema)), classes_(std::move(classes)), features_(0, schema_.total_width()) {}

  Dataset(FeatureSchema schema, ClassMap classes, Matrix features, std::vector<std::size_t> labels,
          std::vector<Provenance> provenance, std::vector<std::uint64_t> ids)
      : schema_(std::move(schema)),
        classes_(std::move(classes)),
        features_(std::move(features)),
        labels_(std::move(labels)),
        provenance_(std::move(provenance)),
        ids_(std::move(ids)) {
    const auto n = static_cast<std::size_t>(features_.rows());
    if (static_cast<std::size_t>(features_.cols()) != schema_.total_width())
      throw Error(ErrorCode::SchemaMismatch, "feature width " + std::to_string(features_.cols()) +
                                                 " != schema width " + std::to_string(schema_.total_width()));
    if (labels_.size() != n || provenance_.size() != n || ids_.size() != n)
      throw Error(ErrorCode::LengthMismatch, "record columns disagree in length");
    for (auto l : labels_)
      if (l >= classes_.size()) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l));
  }

  /// Convenience constructor tagging every record with one provenance and
  /// sequential ids.
  static Dataset from_matrix(FeatureSchema schema, ClassMap classes, Matrix features,
                             std::vector<std::size_t> labels, Provenance p = Provenance::original) {
    const auto n = labels.size();
    std::vector<std::uint64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i)
      ids[i] = p == Provenance::original ? i : synthetic_id(p, i);
    return Dataset(std::move(schema), std::move(classes), std::move(features), std::move(labels),
                   std::vector<Provenance>(n, p), std::move(ids));
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const ClassMap& classes() const noexcept { return classes_; }
  const Matrix& features() const noexcept { return features_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  const std::vector<Provenance>& provenance() const noexcept { return provenance_; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t width() const noexcept { return schema_.total_width(); }

  AccountRecord record(std::size_t i) const {
    AccountRecord r;
    r.features.resize(width());
    for (std::size_t j = 0; j < width(); ++j) r.features[j] = features_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    r.label = labels_.at(i);
    r.provenance = provenance_.at(i);
    r.id = ids_.at(i);
    return r;
  }

  ClassCounts class_counts() const {
    ClassCounts counts(classes_.size(), 0);
    for (auto l : labels_) ++counts[l];
    return counts;
  }

  std::size_t count(Provenance p) const {
    return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), p));
  }

  /// Records at `rows`, in the order given.
  Dataset subset(std::span<const std::size_t> rows) const {
    Matrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
    std::vector<std::size_t> labels(rows.size());
    std::vector<Provenance> prov(rows.size());
    std::vector<std::uint64_t> ids(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      f.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(rows[i]));
      labels[i] = labels_.at(rows[i]);
      prov[i] = provenance_[rows[i]];
      ids[i] = ids_[rows[i]];
    }
    return Dataset(schema_, classes_, std::move(f), std::move(labels), std::move(prov), std::move(ids));
  }

  /// Same records and metadata with replaced feature values.
  Dataset with_features(Matrix features) const {
    return Dataset(schema_, classes_, std::move(features), labels_, provenance_, ids_);
  }

  /// Indices of records carrying class `c`.
  std::vector<std::size_t> rows_of_class(std::size_t c) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == c) rows.push_back(i);
    return rows;
  }

 private:
  FeatureSchema schema_;
  ClassMap classes_;
  Matrix features_;
  std::vector<std::size_t> labels_;
  std::vector<Provenance> provenance_;
  std::vector<std::uint64_t> ids_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    std::size_t lead = 0;
    while (lead < c.size() && c[lead] == ' ') ++lead;
    c.erase(0, lead);
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

/// Reads the header line of a CSV file.
inline std::vector<std::string> read_csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "'" + path + "' has no header row");
  return detail::split_csv_line(line);
}

/// Loads records from a CSV whose header names every schema column plus
/// `label`. Extra columns are ignored. Error rows and columns are 0-based data
/// row and feature indices. Labels outside `classes` raise UnknownLabel unless
/// `skip_unknown_labels` is set, in which case those rows are dropped (used to
/// load the 7-class file under the 6-class experiment map).
inline Dataset load_csv(const std::string& path, const FeatureSchema& schema, const ClassMap& classes,
                        bool skip_unknown_labels = false) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "'" + path + "' has no header row");
  const auto header = detail::split_csv_line(line);

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position.emplace(header[i], i);
  const auto names = schema.column_names();
  std::vector<std::size_t> feature_pos(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = position.find(names[j]);
    if (it == position.end()) throw Error(ErrorCode::MissingColumn, "column '" + names[j] + "' not in header");
    feature_pos[j] = it->second;
  }
  auto label_it = position.find("label");
  if (label_it == position.end()) throw Error(ErrorCode::MissingColumn, "column 'label' not in header");
  const std::size_t label_pos = label_it->second;

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::vector<std::uint64_t> ids;
  std::size_t row = 0;
  for (; std::getline(in, line); ++row) {
    if (line.empty() || line == "\r") {
      --row;
      continue;
    }
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::WidthMismatch,
                  "row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()),
                  row);
    const auto label = classes.index_of(cells[label_pos]);
    if (!label) {
      if (skip_unknown_labels) continue;
      throw Error(ErrorCode::UnknownLabel, "row " + std::to_string(row) + " label '" + cells[label_pos] + "'", row);
    }
    for (std::size_t j = 0; j < feature_pos.size(); ++j) {
      const auto v = detail::parse_double(cells[feature_pos[j]]);
      if (!v)
        throw Error(ErrorCode::NonNumericCell,
                    "row " + std::to_string(row) + " column '" + names[j] + "' = '" + cells[feature_pos[j]] + "'",
                    row, j);
      values.push_back(*v);
    }
    labels.push_back(*label);
    ids.push_back(row);
  }

  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(schema.total_width());
  Matrix f(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) f(i, j) = values[static_cast<std::size_t>(i * d + j)];
  std::vector<Provenance> prov(labels.size(), Provenance::original);
  return Dataset(schema, classes, std::move(f), std::move(labels), std::move(prov), std::move(ids));
}

/// Writes the dataset in the loader's format (shortest round-trip decimals).
inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  for (const auto& name : d.schema().column_names()) out << name << ',';
  out << "label\n";
  const auto& f = d.features();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) out << detail::format_double(f(i, j)) << ',';
    out << d.classes().label(d.labels()[static_cast<std::size_t>(i)]) << '\n';
  }
}

/// Per-class split: round-half-up(fraction * count) records of each class go
/// to train, the rest to test. Both halves keep the input's record order.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::BadConfig, "train fraction must lie in (0,1)");
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 1) throw Error(ErrorCode::ClassTooSmall, "class '" + d.classes().label(c) + "' has 1 record");

  std::vector<bool> in_train(d.size(), false);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    auto rows = d.rows_of_class(c);
    if (rows.empty()) continue;
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span(rows));
    const auto take = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(rows.size()) + 0.5));
    for (std::size_t i = 0; i < take; ++i) in_train[rows[i]] = true;
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < d.size(); ++i) (in_train[i] ? train_rows : test_rows).push_back(i);
  return {d.subset(train_rows), d.subset(test_rows)};
}

/// Concatenation of `base` followed by `synthetic`.
inline Dataset augment(const Dataset& base, const Dataset& synthetic) {
  if (!(base.schema() == synthetic.schema()) || !(base.classes() == synthetic.classes()))
    throw Error(ErrorCode::SchemaMismatch, "augment: schemas or class maps differ");
  Matrix f(static_cast<Eigen::Index>(base.size() + synthetic.size()), base.features().cols());
  f.topRows(static_cast<Eigen::Index>(base.size())) = base.features();
  f.bottomRows(static_cast<Eigen::Index>(synthetic.size())) = synthetic.features();
  auto labels = base.labels();
  labels.insert(labels.end(), synthetic.labels().begin(), synthetic.labels().end());
  auto prov = base.provenance();
  prov.insert(prov.end(), synthetic.provenance().begin(), synthetic.provenance().end());
  auto ids = base.ids();
  ids.insert(ids.end(), synthetic.ids().begin(), synthetic.ids().end());
  return Dataset(base.schema(), base.classes(), std::move(f), std::move(labels), std::move(prov), std::move(ids));
}

/// Synthetic records to request per class for an expansion multiple a:b,
/// i.e. floor(count * a / b).
inline ClassCounts expansion_counts(const Dataset& d, std::size_t phi_a, std::size_t phi_b) {
  if (phi_b < 1) throw Error(ErrorCode::BadConfig, "expansion multiple denominator must be >= 1");
  auto counts = d.class_counts();
  for (auto& c : counts) c = c * phi_a / phi_b;
  return counts;
}

struct GaussianComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  static GaussianComponent diagonal(Eigen::VectorXd mean, const Eigen::VectorXd& stddev, double weight = 1.0) {
    Eigen::MatrixXd cov = stddev.array().square().matrix().asDiagonal();
    return {weight, std::move(mean), std::move(cov)};
  }
};

struct ClassFixture {
  std::vector<GaussianComponent> components;
  /// Overrides the common per-class record count.
  std::optional<std::size_t> count;
};

/// Class-conditional Gaussian mixtures, indexed by class.
struct FixtureSpec {
  std::vector<ClassFixture> classes;
};

/// Deterministic sample from `spec`. Records are grouped by class in class
/// order.
inline Dataset make_fixture(const FixtureSpec& spec, std::size_t n_per_class, const FeatureSchema& schema,
                            const ClassMap& classes, std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(schema.total_width());
  if (spec.classes.size() > classes.size())
    throw Error(ErrorCode::BadConfig, "fixture describes more classes than the class map");

  std::vector<std::vector<Eigen::MatrixXd>> factors(spec.classes.size());
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (const auto& comp : spec.classes[c].components) {
      if (comp.mean.size() != d || comp.covariance.rows() != d || comp.covariance.cols() != d)
        throw Error(ErrorCode::BadCovariance, "component shape does not match schema width");
      if (!(comp.weight > 0.0)) throw Error(ErrorCode::BadConfig, "component weight must be positive");
      Eigen::LLT<Eigen::MatrixXd> llt(comp.covariance);
      if (llt.info() != Eigen::Success || !comp.covariance.isApprox(comp.covariance.transpose()))
        throw Error(ErrorCode::BadCovariance, "covariance of class '" + classes.label(c) + "' is not positive-definite");
      factors[c].push_back(llt.matrixL());
    }
  }

  std::size_t total = 0;
  for (const auto& cf : spec.classes)
    if (!cf.components.empty()) total += cf.count.value_or(n_per_class);
  Matrix f(static_cast<Eigen::Index>(total), d);
  std::vector<std::size_t> labels;
  labels.reserve(total);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cf = spec.classes[c];
    if (cf.components.empty()) continue;
    Rng rng(derive_seed(seed, c));
    double weight_sum = 0.0;
    for (const auto& comp : cf.components) weight_sum += comp.weight;
    const std::size_t n = cf.count.value_or(n_per_class);
    Eigen::VectorXd z(d);
    for (std::size_t i = 0; i < n; ++i, ++row) {
      double u = rng.uniform() * weight_sum;
      std::size_t k = 0;
      while (k + 1 < cf.components.size() && u >= cf.components[k].weight) u -= cf.components[k++].weight;
      for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
      f.row(row) = (cf.components[k].mean + factors[c][k] * z).transpose();
      labels.push_back(c);
    }
  }
  return Dataset::from_matrix(schema, classes, std::move(f), std::move(labels));
}

/// Per-class summary of a dataset: record counts and feature means.
inline Eigen::MatrixXd class_means(const Dataset& d) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.classes().size()),
                                                static_cast<Eigen::Index>(d.width()));
  const auto counts = d.class_counts();
  for (std::size_t i = 0; i < d.size(); ++i)
    means.row(static_cast<Eigen::Index>(d.labels()[i])) += d.features().row(static_cast<Eigen::Index>(i));
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) means.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  return means;
}

}  // namespace caleb::data
