#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "caleb/dataset.hpp"
#include "caleb/gan.hpp"
#include "caleb/harness/config.hpp"
#include "caleb/oversampling.hpp"
#include "caleb/standardizer.hpp"

namespace caleb::harness {

/// Record counts of the "bots" preset for the six-class map, scaled by
/// n_per_class / 400.
inline const std::vector<std::size_t>& bots_preset_counts() {
  static const std::vector<std::size_t> counts{400, 150, 120, 100, 80, 400};
  return counts;
}

/// Expands a fixture preset into explicit mixtures.
///
/// separable: one unit Gaussian per class, mean 3 * spread on the features j
/// with j mod K == c and 0 elsewhere.
/// bots: two unit Gaussians per class, every mean coordinate drawn from
/// N(0, spread^2); imbalanced counts.
inline data::FixtureSpec expand_fixture(const FixtureConfig& f, const data::FeatureSchema& schema,
                                        const data::ClassMap& classes) {
  if (f.preset.empty()) return f.spec;
  const auto d = static_cast<Eigen::Index>(schema.total_width());
  const std::size_t k = classes.size();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d);
  data::FixtureSpec spec;
  if (f.preset == "separable") {
    for (std::size_t c = 0; c < k; ++c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
      for (Eigen::Index j = 0; j < d; ++j)
        if (static_cast<std::size_t>(j) % k == c) mean(j) = 3.0 * f.spread;
      spec.classes.push_back({{data::GaussianComponent::diagonal(mean, ones)}, {}});
    }
  } else if (f.preset == "bots") {
    Rng rng(derive_seed(f.seed, "bots"));
    for (std::size_t c = 0; c < k; ++c) {
      data::ClassFixture cf;
      for (int comp = 0; comp < 2; ++comp) {
        Eigen::VectorXd mean(d);
        for (Eigen::Index j = 0; j < d; ++j) mean(j) = f.spread * rng.normal();
        cf.components.push_back(data::GaussianComponent::diagonal(mean, ones));
      }
      if (k == bots_preset_counts().size())
        cf.count = std::max<std::size_t>(2, bots_preset_counts()[c] * f.n_per_class / 400);
      spec.classes.push_back(std::move(cf));
    }
  } else {
    throw Error(ErrorCode::BadConfig, "unknown fixture preset '" + f.preset + "'");
  }
  if (!f.counts.empty()) {
    if (f.counts.size() != spec.classes.size())
      throw Error(ErrorCode::BadConfig, "fixture counts must list one entry per class");
    for (std::size_t c = 0; c < f.counts.size(); ++c) spec.classes[c].count = f.counts[c];
  }
  return spec;
}

inline data::Dataset make_fixture(const FixtureConfig& f, const data::FeatureSchema& schema,
                                  const data::ClassMap& classes) {
  return data::make_fixture(expand_fixture(f, schema, classes), f.n_per_class, schema, classes, f.seed);
}

/// Synthetic records of one source, generated against the train split and
/// against the test split.
struct SyntheticPair {
  data::Dataset train;
  data::Dataset test;
};

/// Shared state of one experiment run: the fixed split, the standardizer fit on
/// the train split, lazily trained GANs and cached synthetic sets. Everything
/// lives in standardized space. Every seed handed out is logged.
class Context {
 public:
  explicit Context(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.fixture) {
      full_ = std::make_unique<data::Dataset>(make_fixture(*cfg_.fixture, cfg_.schema, cfg_.classes));
      log_seed("fixture", cfg_.fixture->seed);
    } else {
      full_ = std::make_unique<data::Dataset>(data::load_csv(cfg_.train_csv, cfg_.schema, cfg_.classes, true));
    }
    if (full_->empty()) throw Error(ErrorCode::EmptyDataset, "no records in the input data");
    auto [train, test] = data::stratified_split(*full_, cfg_.train_fraction, seed("split"));
    scaler_ = data::fit_standardizer(train);
    train_ = std::make_unique<data::Dataset>(data::transform(scaler_, train));
    test_ = std::make_unique<data::Dataset>(data::transform(scaler_, test));
  }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const data::Dataset& full() const noexcept { return *full_; }
  const data::Dataset& train() const noexcept { return *train_; }
  const data::Dataset& test() const noexcept { return *test_; }
  const data::Standardizer& scaler() const noexcept { return scaler_; }

  /// derive_seed(config seed, name), recorded under `name`.
  std::uint64_t seed(const std::string& name) {
    const auto s = derive_seed(cfg_.seed, name);
    log_seed(name, s);
    return s;
  }
  const std::map<std::string, std::uint64_t>& seeds() const noexcept { return seeds_; }

  /// Installs a pre-trained model instead of training one on first use.
  void set_model(gan::GanModel m) {
    if (!(m.schema == cfg_.schema) || !(m.classes == cfg_.classes))
      throw Error(ErrorCode::SchemaMismatch, "checkpoint schema or classes differ from the config");
    auto& slot = m.config.variant == gan::Variant::cgan ? cgan_ : acgan_;
    slot = std::make_unique<gan::GanModel>(std::move(m));
  }

  gan::GanModel& cgan() { return model(cgan_, cfg_.cgan, "cgan"); }
  gan::GanModel& acgan() { return model(acgan_, cfg_.acgan, "acgan"); }
  const std::map<std::string, gan::TrainReport>& train_reports() const noexcept { return reports_; }

  data::ClassCounts expansion(const data::Dataset& d) const {
    auto counts = data::expansion_counts(d, cfg_.phi_a, cfg_.phi_b);
    const auto mask = cfg_.generation_mask();
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (!mask[c]) counts[c] = 0;
    return counts;
  }

  const SyntheticPair& cgan_synthetic() { return gan_synthetic(cgan_synth_, cgan(), "cgan"); }
  const SyntheticPair& acgan_synthetic() { return gan_synthetic(acgan_synth_, acgan(), "acgan"); }

  /// ADASYN records adding the expansion multiple to every class, drawn from
  /// the train split and, separately, from the test split.
  const SyntheticPair& adasyn_synthetic() {
    if (!adasyn_synth_) {
      auto from = [&](const data::Dataset& d, const std::string& name) {
        auto target = oversample::expansion_target(d, cfg_.phi_a, cfg_.phi_b);
        const auto mask = cfg_.generation_mask();
        const auto counts = d.class_counts();
        for (std::size_t c = 0; c < target.size(); ++c)
          if (!mask[c]) target[c] = counts[c];
        return oversample::adasyn(d, target, cfg_.adasyn_k, seed(name));
      };
      auto tr = from(*train_, "adasyn.train");
      auto te = from(*test_, "adasyn.test");
      adasyn_synth_ = std::make_unique<SyntheticPair>(SyntheticPair{std::move(tr), std::move(te)});
    }
    return *adasyn_synth_;
  }

  /// Raises a TestLeak error if any original test record appears in `train_set`.
  void check_hygiene(const data::Dataset& train_set, const std::string& what) const {
    if (!test_ids_) {
      test_ids_.emplace();
      for (std::size_t i = 0; i < test_->size(); ++i)
        if (test_->provenance()[i] == data::Provenance::original) test_ids_->insert(test_->ids()[i]);
    }
    for (std::size_t i = 0; i < train_set.size(); ++i)
      if (train_set.provenance()[i] == data::Provenance::original && test_ids_->count(train_set.ids()[i]))
        throw Error(ErrorCode::TestLeak,
                    what + ": original record " + std::to_string(train_set.ids()[i]) + " is in the test split");
  }

 private:
  void log_seed(const std::string& name, std::uint64_t s) { seeds_[name] = s; }

  gan::GanModel& model(std::unique_ptr<gan::GanModel>& slot, const gan::GanConfig& gc, const std::string& name) {
    if (!slot) {
      log_seed(name, gc.seed);
      slot = std::make_unique<gan::GanModel>(gan::build(gc, cfg_.schema, cfg_.classes));
      reports_[name] = gan::train(*slot, *train_);
    }
    return *slot;
  }

  const SyntheticPair& gan_synthetic(std::unique_ptr<SyntheticPair>& slot, const gan::GanModel& m,
                                     const std::string& name) {
    if (!slot) {
      auto tr = gan::generate(m, expansion(*train_), seed(name + ".generate.train"));
      auto te = gan::generate(m, expansion(*test_), seed(name + ".generate.test"));
      slot = std::make_unique<SyntheticPair>(SyntheticPair{std::move(tr), std::move(te)});
    }
    return *slot;
  }

  ExperimentConfig cfg_;
  std::unique_ptr<data::Dataset> full_, train_, test_;
  data::Standardizer scaler_;
  std::unique_ptr<gan::GanModel> cgan_, acgan_;
  std::unique_ptr<SyntheticPair> cgan_synth_, acgan_synth_, adasyn_synth_;
  std::map<std::string, gan::TrainReport> reports_;
  std::map<std::string, std::uint64_t> seeds_;
  mutable std::optional<std::set<std::uint64_t>> test_ids_;
};

}  // namespace caleb::harness
