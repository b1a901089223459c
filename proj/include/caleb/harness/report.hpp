#pragma once

#include <Eigen/Core>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "caleb/exploration.hpp"
#include "caleb/harness/experiments.hpp"

#ifndef CALEB_VERSION
#define CALEB_VERSION "0.0.0"
#endif

namespace caleb::harness {

/// Fixed six-decimal rendering used in every result CSV.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Lowercase file-name form of a cell label.
inline std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (c == '.')
      out += '.';
    else if (!out.empty() && out.back() != '_')
      out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
}

inline std::string cells_csv(const ExperimentResult& r) {
  std::string s = "train,test,accuracy,precision,recall,f1,g_mean\n";
  for (const auto& c : r.cells) {
    const auto& e = c.report;
    s += c.row + "," + c.col + "," + fmt(e.accuracy) + "," + fmt(e.precision_macro) + "," + fmt(e.recall_macro) + "," +
         fmt(e.f1_macro) + "," + fmt(e.g_mean) + "\n";
  }
  return s;
}

/// Long-format heatmap: one (row label, col label, value) line per cell.
inline std::string heatmap_csv(const ExperimentResult& r, double metrics::EvalReport::*field) {
  std::string s = "row,col,value\n";
  for (const auto& c : r.cells) s += c.row + "," + c.col + "," + fmt(c.report.*field) + "\n";
  return s;
}

inline std::string fidelity_csv(const ExperimentResult& r) {
  std::string s = "technique,ks_score,kl_score\n";
  for (const auto& f : r.fidelity) s += f.technique + "," + fmt(f.report.ks_score) + "," + fmt(f.report.kl_score) + "\n";
  return s;
}

/// Writes `<dir>/<experiment>/`: one JSON per cell, a flat CSV table and, for
/// the evolution matrix, precision and G-mean heatmaps.
inline void write_result(const ExperimentResult& r, const std::filesystem::path& dir) {
  const auto base = dir / r.name;
  if (r.skipped) {
    write_text(base / "skipped.txt", r.skip_reason + "\n");
    return;
  }
  for (const auto& c : r.cells) {
    auto j = metrics::to_json(c.report);
    j["train"] = c.row;
    j["test"] = c.col;
    write_text(base / (slug(c.row) + "__" + slug(c.col) + ".json"), j.dump(2) + "\n");
  }
  if (!r.cells.empty()) write_text(base / "results.csv", cells_csv(r));
  if (r.name == "evolution_matrix") {
    write_text(base / "precision_heatmap.csv", heatmap_csv(r, &metrics::EvalReport::precision_macro));
    write_text(base / "g_mean_heatmap.csv", heatmap_csv(r, &metrics::EvalReport::g_mean));
  }
  for (const auto& f : r.fidelity) {
    auto j = metrics::to_json(f.report);
    j["technique"] = f.technique;
    write_text(base / (slug(f.technique) + ".json"), j.dump(2) + "\n");
  }
  if (!r.fidelity.empty()) write_text(base / "fidelity.csv", fidelity_csv(r));
}

inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(to_json(c).dump()); }

inline std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json versions() {
  return {{"caleb", CALEB_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__},
          {"gan_checkpoint", gan::kCheckpointVersion}};
}

/// Run manifest: config and its hash, every seed consumed, library versions
/// and per-experiment status. Holds no timestamps so reruns match byte for
/// byte.
inline nlohmann::json manifest(const std::string& command, const ExperimentConfig& cfg,
                               const std::map<std::string, std::uint64_t>& seeds,
                               const std::vector<ExperimentResult>& results = {},
                               const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j{{"command", command},
                   {"config_hash", hex(config_hash(cfg))},
                   {"config", to_json(cfg)},
                   {"seeds", seeds},
                   {"versions", versions()}};
  nlohmann::json exps = nlohmann::json::object();
  for (const auto& r : results) {
    exps[r.name] = {{"status", r.skipped ? "skipped" : "ok"}, {"notes", r.notes}};
    if (r.skipped) exps[r.name]["reason"] = r.skip_reason;
  }
  if (!results.empty()) j["experiments"] = exps;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

inline void write_manifest(const std::filesystem::path& dir, const nlohmann::json& m) {
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

/// Per-category PCA fitted on every record, then one KDE curve of the
/// projections per (category, class): `<dir>/<category>__<class>.csv` with
/// columns x, density. Classes with fewer than two records are skipped.
inline std::vector<std::filesystem::path> write_exploration(const data::Dataset& d, const std::filesystem::path& dir,
                                                            std::size_t grid_points = 200) {
  std::vector<std::filesystem::path> written;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& cat : d.schema().categories()) {
    const auto pc = metrics::pca_fit(d, cat.name);
    const auto proj = metrics::pca_project(pc, d);
    summary.push_back({{"category", cat.name}, {"eigenvalue", pc.eigenvalue}, {"explained_share", pc.explained_share}});
    for (std::size_t c = 0; c < d.classes().size(); ++c) {
      std::vector<double> values;
      for (auto i : d.rows_of_class(c)) values.push_back(proj[i]);
      if (values.size() < 2) continue;
      std::string s = "x,density\n";
      for (const auto& p : metrics::kde_curve(values, grid_points)) s += fmt(p.x) + "," + fmt(p.density) + "\n";
      const auto path = dir / (slug(cat.name) + "__" + slug(d.classes().label(c)) + ".csv");
      write_text(path, s);
      written.push_back(path);
    }
  }
  write_text(dir / "pca.json", summary.dump(2) + "\n");
  return written;
}

/// Runs each experiment in `names` and writes its outputs plus a manifest to
/// the config's output directory. A missing external input skips that
/// experiment with a notice instead of failing the run.
inline std::vector<ExperimentResult> run_experiments(Context& ctx, const std::vector<std::string>& names,
                                                     const std::string& command) {
  Runner runner(ctx);
  std::vector<ExperimentResult> results;
  const std::filesystem::path out = ctx.config().output_dir;
  for (const auto& name : names) {
    ExperimentResult r;
    try {
      r = runner.run(name);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingExternalData) throw;
      r.name = name;
      r.skipped = true;
      r.skip_reason = e.what();
    }
    write_result(r, out);
    results.push_back(std::move(r));
  }
  nlohmann::json gans = nlohmann::json::object();
  for (const auto& [name, rep] : ctx.train_reports()) {
    nlohmann::json e{{"epochs", rep.final_epoch}};
    if (!rep.epochs.empty()) e["final_d_loss"] = rep.epochs.back().d_loss, e["final_g_loss"] = rep.epochs.back().g_loss;
    gans[name] = e;
  }
  nlohmann::json extra{{"gan_training", gans},
                       {"split", {{"train", ctx.train().size()}, {"test", ctx.test().size()}}}};
  write_manifest(out, manifest(command, ctx.config(), ctx.seeds(), results, extra));
  return results;
}

}  // namespace caleb::harness
