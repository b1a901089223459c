#include <catch_amalgamated.hpp>

#include <map>

#include "caleb/oversampling.hpp"
#include "test_support.hpp"

using namespace caleb;
using namespace caleb::oversample;

namespace {

// Brute-force neighbours: full stable sort of every other row by distance.
std::vector<std::size_t> brute_knn(const Matrix& pts, std::size_t row, std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < static_cast<std::size_t>(pts.rows()); ++j)
    if (j != row) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return (pts.row(static_cast<Eigen::Index>(a)) - pts.row(static_cast<Eigen::Index>(row))).squaredNorm() <
           (pts.row(static_cast<Eigen::Index>(b)) - pts.row(static_cast<Eigen::Index>(row))).squaredNorm();
  });
  idx.resize(k);
  return idx;
}

struct Synthetic {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
};

Matrix rows_of(const Dataset& d, std::size_t c, std::vector<std::size_t>& idx) {
  idx.clear();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.labels()[i] == c) idx.push_back(i);
  Matrix p(static_cast<Eigen::Index>(idx.size()), d.features().cols());
  for (std::size_t i = 0; i < idx.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = d.features().row(static_cast<Eigen::Index>(idx[i]));
  return p;
}

void interpolate(Synthetic& s, const Matrix& pts, std::size_t i, const std::vector<std::size_t>& nn, Rng& rng,
                 std::size_t c) {
  const auto j = nn[rng.index(nn.size())];
  const double lambda = rng.uniform();
  std::vector<double> row;
  for (Eigen::Index f = 0; f < pts.cols(); ++f)
    row.push_back(pts(static_cast<Eigen::Index>(i), f) +
                  lambda * (pts(static_cast<Eigen::Index>(j), f) - pts(static_cast<Eigen::Index>(i), f)));
  s.rows.push_back(row);
  s.labels.push_back(c);
}

// Reference ADASYN with the same seeded draw sequence as the library.
Synthetic ref_adasyn(const Dataset& d, const ClassCounts& target, std::size_t k, std::uint64_t seed) {
  Synthetic s;
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (target[c] <= counts[c]) continue;
    const std::size_t g = target[c] - counts[c];
    std::vector<std::size_t> idx;
    const Matrix pts = rows_of(d, c, idx);
    std::vector<double> r;
    for (auto i : idx) {
      double other = 0;
      for (auto j : brute_knn(d.features(), i, k)) other += d.labels()[j] != c;
      r.push_back(other / static_cast<double>(k));
    }
    double sum = 0;
    for (double v : r) sum += v;
    if (sum == 0) r.assign(r.size(), 1.0), sum = static_cast<double>(r.size());
    for (auto& v : r) v /= sum;
    std::vector<std::size_t> alloc;
    std::size_t given = 0;
    for (double v : r) alloc.push_back(static_cast<std::size_t>(std::floor(v * static_cast<double>(g)))), given += alloc.back();
    // remaining points: highest weight first, lower index on equal weight
    std::vector<std::size_t> order(r.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return r[a] > r[b] || (r[a] == r[b] && a < b); });
    for (std::size_t p = 0; given < g; ++p, ++given) ++alloc[order[p % order.size()]];
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (!alloc[i]) continue;
      const auto nn = brute_knn(pts, i, k);
      for (std::size_t t = 0; t < alloc[i]; ++t) interpolate(s, pts, i, nn, rng, c);
    }
  }
  return s;
}

Synthetic ref_smote(const Dataset& d, const ClassCounts& target, std::size_t k, std::uint64_t seed) {
  Synthetic s;
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (target[c] <= counts[c]) continue;
    const std::size_t g = target[c] - counts[c];
    std::vector<std::size_t> idx;
    const Matrix pts = rows_of(d, c, idx);
    Rng rng(derive_seed(seed, c));
    std::vector<std::size_t> order(idx.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    std::vector<std::size_t> alloc(idx.size(), g / idx.size());
    for (std::size_t p = 0; p < g % idx.size(); ++p) ++alloc[order[p]];
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (!alloc[i]) continue;
      const auto nn = brute_knn(pts, i, k);
      for (std::size_t t = 0; t < alloc[i]; ++t) interpolate(s, pts, i, nn, rng, c);
    }
  }
  return s;
}

std::vector<std::size_t> ref_enn_keep(const Dataset& d, std::size_t k) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::map<std::size_t, int> votes;
    for (auto j : brute_knn(d.features(), i, k)) ++votes[d.labels()[j]];
    bool drop = false;
    for (const auto& [label, v] : votes) drop |= label != d.labels()[i] && v > votes[d.labels()[i]];
    if (!drop) keep.push_back(i);
  }
  return keep;
}

void check_matches(const Dataset& got, const Synthetic& want) {
  REQUIRE(got.size() == want.rows.size());
  CHECK(got.labels() == want.labels);
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    for (std::size_t f = 0; f < want.rows[i].size(); ++f)
      worst = std::max(worst, std::abs(got.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) - want.rows[i][f]));
  CHECK(worst < 1e-9);
}

// A small imbalanced table; duplicated coordinates exercise neighbour ties.
Dataset small_table(Rng& rng, std::size_t n, std::size_t k) {
  const data::FeatureSchema schema({{"a", 2}, {"b", 1}});
  Matrix m(static_cast<Eigen::Index>(n), 3);
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i < n / 2 ? 0 : 1 + (i % (k - 1));
    for (Eigen::Index j = 0; j < 3; ++j)
      m(static_cast<Eigen::Index>(i), j) = static_cast<double>(rng.index(4)) + 0.5 * static_cast<double>(y[i]);
  }
  const auto classes = k == 2 ? data::ClassMap::binary() : data::ClassMap({"x", "y", "z"});
  return Dataset::from_matrix(schema, classes, m, y);
}

// Is p = a + lambda (b - a) for one lambda in [0, 1] across every coordinate?
bool on_segment(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double lambda = -1.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double span = b(j) - a(j);
    if (std::abs(span) < 1e-12) {
      if (std::abs(p(j) - a(j)) > 1e-9) return false;
      continue;
    }
    const double l = (p(j) - a(j)) / span;
    if (lambda < 0.0) lambda = l;
    if (std::abs(l - lambda) > 1e-9) return false;
  }
  return lambda <= 1.0 + 1e-9;
}

bool convex_of_class_pair(const Dataset& orig, const Dataset& synth, std::size_t i) {
  const auto c = synth.labels()[i];
  const auto rows = orig.rows_of_class(c);
  for (auto a : rows)
    for (auto b : rows)
      if (a != b && on_segment(synth.features().row(static_cast<Eigen::Index>(i)),
                               orig.features().row(static_cast<Eigen::Index>(a)),
                               orig.features().row(static_cast<Eigen::Index>(b))))
        return true;
  return false;
}

}  // namespace

TEST_CASE("neighbour index", "[oversampling]") {
  Matrix p(5, 1);
  p << 0, 1, -1, 2, 1;
  const NeighborIndex idx(p, 3);
  CHECK(idx.neighbors(0) == std::vector<std::size_t>{1, 2, 4});
  CHECK(idx.neighbors(1) == std::vector<std::size_t>{4, 0, 3});
  test::require_error(ErrorCode::ClassTooSmall, [&] { NeighborIndex(p, 5); });

  Rng rng(4);
  Matrix q(20, 2);
  for (Eigen::Index i = 0; i < 20; ++i) q.row(i) << static_cast<double>(rng.index(3)), static_cast<double>(rng.index(3));
  const NeighborIndex big(q, 6);
  for (std::size_t i = 0; i < 20; ++i) CHECK(big.neighbors(i) == brute_knn(q, i, 6));
}

TEST_CASE("ADASYN", "[oversampling][adasyn]") {
  SECTION("matches the brute-force reference") {
    Rng rng(8);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t k = 2 + rng.index(2);
      const auto d = small_table(rng, 14 + rng.index(7), k);
      const std::size_t nn = 1 + rng.index(2);
      auto target = balance_to_majority(d);
      if (trial % 3 == 0) target = expansion_target(d, 1 + rng.index(3), 1 + rng.index(2));
      const auto got = adasyn(d, target, nn, 100 + static_cast<std::uint64_t>(trial));
      check_matches(got, ref_adasyn(d, target, nn, 100 + static_cast<std::uint64_t>(trial)));
      // requested totals hit exactly
      const auto extra = got.class_counts();
      for (std::size_t c = 0; c < target.size(); ++c)
        CHECK(d.class_counts()[c] + extra[c] == std::max(target[c], d.class_counts()[c]));
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got.provenance()[i] == data::Provenance::adasyn);
        CHECK(convex_of_class_pair(d, got, i));
      }
    }
  }

  SECTION("two-point minority stays on its segment") {
    const data::FeatureSchema schema({{"xy", 2}});
    Matrix m(7, 2);
    m << 0, 0, 1, 1, 5, 5, 5, 6, 6, 5, 6, 6, 7, 7;
    const auto d = Dataset::from_matrix(schema, data::ClassMap::binary(), m, std::vector<std::size_t>{0, 0, 1, 1, 1, 1, 1});
    const auto s = adasyn(d, balance_to_majority(d), 1, 3);
    REQUIRE(s.size() == 3);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto r = s.features().row(static_cast<Eigen::Index>(i));
      CHECK(std::abs(r(0) - r(1)) < 1e-12);
      CHECK(r(0) >= 0.0);
      CHECK(r(0) <= 1.0);
    }
  }

  SECTION("well separated classes use the uniform fallback") {
    const data::FeatureSchema schema({{"a", 3}});
    const auto d = data::make_fixture(test::two_gaussians(3, 50.0), 20, schema, data::ClassMap::binary(), 2);
    const auto target = ClassCounts{20 + 13, 20};
    const auto s = adasyn(d, target, 5, 9);
    CHECK(s.class_counts() == ClassCounts{13, 0});
  }

  SECTION("identity target and errors") {
    const data::FeatureSchema schema({{"a", 2}});
    const auto d = data::make_fixture(test::two_gaussians(2, 1.0), 10, schema, data::ClassMap::binary(), 2);
    CHECK(adasyn(d, d.class_counts(), 5, 1).empty());
    CHECK(smote(d, d.class_counts(), 5, 1).empty());
    test::require_error(ErrorCode::ClassTooSmall, [&] { adasyn(d, ClassCounts{30, 10}, 10, 1); });
    const auto one_class = d.subset(d.rows_of_class(0));
    test::require_error(ErrorCode::EmptyMinority, [&] { adasyn(one_class, ClassCounts{10, 5}, 3, 1); });
  }

  SECTION("deterministic under a fixed seed") {
    const data::FeatureSchema schema({{"a", 4}});
    const auto d = data::make_fixture(test::two_gaussians(4, 0.5), 40, schema, data::ClassMap::binary(), 7);
    const auto target = expansion_target(d, 2, 1);
    CHECK(adasyn(d, target, 5, 3).features() == adasyn(d, target, 5, 3).features());
    CHECK(smote(d, target, 5, 3).features() == smote(d, target, 5, 3).features());
  }
}

TEST_CASE("SMOTE", "[oversampling][smote]") {
  SECTION("matches the brute-force reference") {
    Rng rng(18);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t k = 2 + rng.index(2);
      const auto d = small_table(rng, 14 + rng.index(7), k);
      const std::size_t nn = 1 + rng.index(2);
      const auto target = trial % 2 ? balance_to_majority(d) : expansion_target(d, 2, 1);
      const auto got = smote(d, target, nn, static_cast<std::uint64_t>(trial));
      check_matches(got, ref_smote(d, target, nn, static_cast<std::uint64_t>(trial)));
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(convex_of_class_pair(d, got, i));
    }
  }

  SECTION("doubling a 3-point class") {
    const data::FeatureSchema schema({{"a", 2}});
    Matrix m(8, 2);
    m << 0, 0, 2, 0, 0, 2, 10, 10, 11, 10, 10, 11, 11, 11, 12, 12;
    const auto d = Dataset::from_matrix(schema, data::ClassMap::binary(), m, std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 1, 1});
    const auto s = smote(d, ClassCounts{6, 5}, 2, 4);
    REQUIRE(s.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(convex_of_class_pair(d, s, i));
    // even allocation: one per member
    CHECK(s.class_counts() == ClassCounts{3, 0});
  }
}

TEST_CASE("ENN", "[oversampling][enn]") {
  const data::FeatureSchema schema({{"a", 2}});

  SECTION("pure clusters are a fixed point") {
    const auto d = data::make_fixture(test::two_gaussians(2, 20.0), 15, schema, data::ClassMap::binary(), 1);
    CHECK(enn_clean(d, 3).size() == d.size());
  }

  SECTION("one mislabeled point inside a pure cluster") {
    Matrix m(10, 2);
    m << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5, 20, 20, 21, 20, 20, 21, 21, 21, 20.5, 20.5;
    std::vector<std::size_t> y{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    const auto d = Dataset::from_matrix(schema, data::ClassMap::binary(), m, y);
    const auto cleaned = enn_clean(d, 3);
    REQUIRE(cleaned.size() == 9);
    for (std::size_t i = 0; i < cleaned.size(); ++i) CHECK(cleaned.ids()[i] != d.ids()[4]);
  }

  SECTION("matches brute-force voting and never adds or relabels") {
    Rng rng(28);
    for (int trial = 0; trial < 100; ++trial) {
      const auto d = small_table(rng, 8 + rng.index(13), 2 + rng.index(2));
      const auto cleaned = enn_clean(d, 3);
      const auto keep = ref_enn_keep(d, 3);
      REQUIRE(cleaned.size() == keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        CHECK(cleaned.ids()[i] == d.ids()[keep[i]]);
        CHECK(cleaned.labels()[i] == d.labels()[keep[i]]);
      }
    }
  }

  SECTION("SMOTE-ENN returns the cleaned union") {
    const auto d = data::make_fixture(test::two_gaussians(2, 1.0), 30, schema, data::ClassMap::binary(), 6);
    const auto target = ClassCounts{50, 30};
    const auto out = smote_enn(d, target, 4);
    const auto expected = enn_clean(data::augment(d, smote(d, target, 5, 4)), 3);
    CHECK(out.features() == expected.features());
    CHECK(out.size() <= 80);
    CHECK(out.count(data::Provenance::original) + out.count(data::Provenance::smote_enn) == out.size());
  }
}
