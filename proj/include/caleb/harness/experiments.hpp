#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "caleb/forest.hpp"
#include "caleb/harness/context.hpp"
#include "caleb/metrics.hpp"

namespace caleb::harness {

/// One evaluated (train variant, test variant) pair.
struct Cell {
  std::string row;
  std::string col;
  metrics::EvalReport report;
};

struct FidelityRow {
  std::string technique;
  metrics::FidelityReport report;
};

struct ExperimentResult {
  std::string name;
  std::vector<Cell> cells;
  std::vector<FidelityRow> fidelity;
  std::vector<std::string> notes;
  bool skipped = false;
  std::string skip_reason;

  const Cell& cell(const std::string& row, const std::string& col) const {
    for (const auto& c : cells)
      if (c.row == row && c.col == col) return c;
    throw Error(ErrorCode::BadConfig, name + " has no cell (" + row + ", " + col + ")");
  }
};

/// Train variants of the evolution matrix, in row order, and the test variant
/// each one matches.
inline const std::vector<std::pair<std::string, std::string>>& evolution_rows() {
  static const std::vector<std::pair<std::string, std::string>> rows{
      {"ad1_acgan", "acgan"}, {"ad2_cgan", "cgan"}, {"ad3_adasyn", "adasyn"}, {"ad4_original", "original"}};
  return rows;
}

inline const std::vector<std::string>& test_variants() {
  static const std::vector<std::string> cols{"acgan", "cgan", "adasyn", "original"};
  return cols;
}

/// Runs experiments against one Context and caches the forests fitted on each
/// train variant so experiments sharing a variant reuse the fit.
class Runner {
 public:
  explicit Runner(Context& ctx) : ctx_(ctx) {}

  Context& context() noexcept { return ctx_; }

  ExperimentResult run(const std::string& name) {
    if (name == "imbalance") return imbalance();
    if (name == "fidelity") return fidelity();
    if (name == "train_on_original") return train_on_original();
    if (name == "evolution_matrix") return evolution_matrix();
    if (name == "temporal") return temporal();
    if (name == "discriminator_vs_rf") return discriminator_vs_rf();
    throw Error(ErrorCode::BadConfig, "unknown experiment '" + name + "'");
  }

  /// Original train split plus the synthetic train records of `source`
  /// ("acgan", "cgan", "adasyn" or "original" for none).
  data::Dataset train_variant(const std::string& source) {
    if (source == "original") return ctx_.train();
    return data::augment(ctx_.train(), synthetic(source).train);
  }

  /// Original test split plus the synthetic test records of `source`. Every
  /// variant shares the same original core.
  data::Dataset test_variant(const std::string& source) {
    if (source == "original") return ctx_.test();
    return data::augment(ctx_.test(), synthetic(source).test);
  }

  const forest::Forest& forest_for(const std::string& key, const data::Dataset& train_set) {
    auto it = forests_.find(key);
    if (it != forests_.end()) return it->second;
    ctx_.check_hygiene(train_set, key);
    auto cfg = ctx_.config().forest;
    cfg.seed = ctx_.seed("forest");
    return forests_.emplace(key, forest::fit(train_set, cfg)).first->second;
  }

  metrics::EvalReport score(const forest::Forest& f, const data::Dataset& test_set) const {
    return metrics::evaluate(forest::predict(f, test_set), test_set.labels(), test_set.classes().size());
  }

  ExperimentResult imbalance() {
    ExperimentResult r{"imbalance", {}, {}, {}, false, {}};
    const auto& cfg = ctx_.config();
    const auto& train = ctx_.train();
    const auto balanced = oversample::balance_to_majority(train);
    const std::string phi = std::to_string(cfg.phi_a) + ":" + std::to_string(cfg.phi_b);

    r.cells.push_back({"Original", "test", score(forest_for("original", train), ctx_.test())});
    const auto ada = data::augment(train, oversample::adasyn(train, balanced, cfg.adasyn_k, ctx_.seed("imbalance.adasyn")));
    r.cells.push_back({"ADASYN", "test", score(forest_for("imbalance.adasyn", ada), ctx_.test())});
    const auto se = oversample::smote_enn(train, balanced, ctx_.seed("imbalance.smote_enn"), cfg.smote_k, cfg.enn_k);
    r.cells.push_back({"SMOTE-ENN", "test", score(forest_for("imbalance.smote_enn", se), ctx_.test())});
    r.cells.push_back({"CGAN " + phi, "test", score(forest_for("cgan", train_variant("cgan")), ctx_.test())});
    r.notes.push_back("ADASYN and SMOTE-ENN raise every class to the majority count; CGAN adds " + phi +
                      " synthetic records per class");
    return r;
  }

  ExperimentResult fidelity() {
    ExperimentResult r{"fidelity", {}, {}, {}, false, {}};
    r.fidelity.push_back({"ADASYN", metrics::fidelity(ctx_.train(), synthetic("adasyn").train)});
    r.fidelity.push_back({"CGAN", metrics::fidelity(ctx_.train(), synthetic("cgan").train)});
    r.fidelity.push_back({"AC-GAN", metrics::fidelity(ctx_.train(), synthetic("acgan").train)});
    r.notes.push_back("each synthetic train set is compared with the standardized original train split");
    return r;
  }

  ExperimentResult train_on_original() {
    ExperimentResult r{"train_on_original", {}, {}, {}, false, {}};
    const auto& f = forest_for("original", ctx_.train());
    for (const auto& col : {std::string("original"), std::string("adasyn"), std::string("cgan"), std::string("acgan")})
      r.cells.push_back({"original", col, score(f, test_variant(col))});
    return r;
  }

  ExperimentResult evolution_matrix() {
    ExperimentResult r{"evolution_matrix", {}, {}, {}, false, {}};
    std::map<std::string, data::Dataset> tests;
    for (const auto& col : test_variants()) tests.emplace(col, test_variant(col));
    for (const auto& [row, source] : evolution_rows()) {
      const auto& f = forest_for(source, train_variant(source));
      for (const auto& col : test_variants()) r.cells.push_back({row, col, score(f, tests.at(col))});
    }
    return r;
  }

  /// Old-era binary train set against newer-era binary test sets, each read
  /// from external CSVs and standardized with the old train set's statistics.
  ExperimentResult temporal() {
    ExperimentResult r{"temporal", {}, {}, {}, false, {}};
    const auto& cfg = ctx_.config();
    const auto& t = cfg.temporal;
    if (t.train_csv.empty() || t.test_csvs.empty())
      throw Error(ErrorCode::MissingExternalData, "temporal: no old-era train CSV or newer-era test CSVs configured");
    for (const auto& path : std::vector<std::string>{t.train_csv})
      if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingExternalData, "temporal: '" + path + "' not found");
    for (const auto& [name, path] : t.test_csvs)
      if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingExternalData, "temporal: '" + path + "' not found");

    const auto classes = data::ClassMap::binary();
    const auto raw = data::load_csv(t.train_csv, cfg.schema, classes);
    const auto scaler = data::fit_standardizer(raw);
    const auto old = data::transform(scaler, raw);

    auto ada = data::augment(old, oversample::adasyn(old, oversample::expansion_target(old, cfg.phi_a, cfg.phi_b),
                                                       cfg.adasyn_k, ctx_.seed("temporal.adasyn")));
    auto gc = cfg.acgan;
    gc.classes = classes.size();
    gc.seed = ctx_.seed("temporal.acgan");
    auto model = gan::build(gc, cfg.schema, classes);
    gan::train(model, old);
    auto acgan = data::augment(
        old, gan::generate(model, data::expansion_counts(old, cfg.phi_a, cfg.phi_b), ctx_.seed("temporal.generate")));

    auto fcfg = cfg.forest;
    fcfg.seed = ctx_.seed("forest");
    const std::vector<std::pair<std::string, forest::Forest>> fits{
        {"plain", forest::fit(old, fcfg)}, {"adasyn", forest::fit(ada, fcfg)}, {"acgan", forest::fit(acgan, fcfg)}};
    for (const auto& [name, path] : t.test_csvs) {
      const auto test = data::transform(scaler, data::load_csv(path, cfg.schema, classes));
      for (const auto& [variant, f] : fits) r.cells.push_back({variant, name, score(f, test)});
    }
    r.notes.push_back("AC-GAN trained on both classes of the old-era train set");
    return r;
  }

  ExperimentResult discriminator_vs_rf() {
    ExperimentResult r{"discriminator_vs_rf", {}, {}, {}, false, {}};
    const auto mixed = data::augment(data::augment(ctx_.test(), synthetic("cgan").test), synthetic("acgan").test);
    const auto& rf_cgan = forest_for("cgan", train_variant("cgan"));
    const auto& rf_acgan = forest_for("acgan", train_variant("acgan"));
    const auto& d = ctx_.acgan();
    const auto k = ctx_.config().classes.size();
    for (const auto& [col, test] : {std::pair<std::string, const data::Dataset&>{"mixed", mixed},
                                    std::pair<std::string, const data::Dataset&>{"original", ctx_.test()}}) {
      r.cells.push_back({"RF_CGAN", col, score(rf_cgan, test)});
      r.cells.push_back({"RF_AC-GAN", col, score(rf_acgan, test)});
      r.cells.push_back({"AC-GAN_D", col, metrics::evaluate(gan::discriminate_classes(d, test).labels, test.labels(), k)});
    }
    const auto& cfg = ctx_.config();
    r.notes.push_back("mixed test = original test + CGAN and AC-GAN synthetic records, each " +
                      std::to_string(cfg.phi_a) + ":" + std::to_string(cfg.phi_b) +
                      " of the test class counts (" + std::to_string(ctx_.test().size()) + " + " +
                      std::to_string(synthetic("cgan").test.size()) + " + " +
                      std::to_string(synthetic("acgan").test.size()) + " records)");
    return r;
  }

 private:
  const SyntheticPair& synthetic(const std::string& source) {
    if (source == "cgan") return ctx_.cgan_synthetic();
    if (source == "acgan") return ctx_.acgan_synthetic();
    if (source == "adasyn") return ctx_.adasyn_synthetic();
    throw Error(ErrorCode::BadConfig, "unknown synthetic source '" + source + "'");
  }

  Context& ctx_;
  std::map<std::string, forest::Forest> forests_;
};

}  // namespace caleb::harness
