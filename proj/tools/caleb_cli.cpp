// caleb: command-line front end for the experiment harness.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>

#include "caleb/harness.hpp"

namespace fs = std::filesystem;
using namespace caleb;
using namespace caleb::harness;

namespace {

struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
  std::string stage;
};

// Runs `f`, tagging any failure with the stage that raised it.
template <typename F>
decltype(auto) stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError(name, e.what());
  } catch (const YAML::Exception& e) {
    throw StageError(name, std::string("BadConfig: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw StageError(name, std::string("Io: ") + e.what());
  }
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

// Single-file outputs get `<file>.manifest.json` beside them.
void file_manifest(const fs::path& out, const nlohmann::json& m) { write_json(out.string() + ".manifest.json", m); }

nlohmann::json scaler_json(const data::Standardizer& s) {
  return {{"mean", nn::matrix_to_json(s.mean)}, {"std", nn::matrix_to_json(s.std)}};
}

data::Standardizer scaler_from(const nlohmann::json& j) {
  data::Standardizer s;
  s.mean = nn::matrix_from_json(j.at("mean"));
  s.std = nn::matrix_from_json(j.at("std"));
  return s;
}

struct Common {
  std::string config;
  std::string cgan_checkpoint;
  std::string acgan_checkpoint;
};

void add_common(CLI::App* cmd, Common& c, bool checkpoints) {
  cmd->add_option("-c,--config", c.config, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
  if (checkpoints) {
    cmd->add_option("--cgan-checkpoint", c.cgan_checkpoint, "use a trained CGAN instead of training one")
        ->check(CLI::ExistingFile);
    cmd->add_option("--acgan-checkpoint", c.acgan_checkpoint, "use a trained AC-GAN instead of training one")
        ->check(CLI::ExistingFile);
  }
}

std::unique_ptr<Context> make_context(const Common& c) {
  auto cfg = stage("config", [&] { return load_config(c.config); });
  auto ctx = stage("data", [&] { return std::make_unique<Context>(std::move(cfg)); });
  stage("checkpoint", [&] {
    for (const auto* path : {&c.cgan_checkpoint, &c.acgan_checkpoint})
      if (!path->empty()) ctx->set_model(gan::load_checkpoint(*path).model);
    return 0;
  });
  return ctx;
}

// Original train or test split, optionally joined with synthetic records of
// `source`.
data::Dataset variant(Runner& runner, const std::string& split, const std::string& source) {
  return split == "train" ? runner.train_variant(source) : runner.test_variant(source);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CALEB: conditional GAN augmentation for multi-class bot detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CALEB_VERSION);

  Common common;
  std::string out;

  auto* fixture = app.add_subcommand("fixture", "sample the configured Gaussian-mixture fixture to CSV");
  add_common(fixture, common, false);
  fixture->add_option("-o,--out", out, "output CSV")->required();

  auto* explore = app.add_subcommand("explore", "per-category PCA and per-class KDE curves");
  add_common(explore, common, false);
  explore->add_option("-o,--out", out, "output directory (default <output_dir>/explore)");
  std::size_t grid = 200;
  explore->add_option("--grid", grid, "KDE grid points")->check(CLI::Range(2, 100000));

  auto* train_gan = app.add_subcommand("train-gan", "train a CGAN or AC-GAN on the standardized train split");
  add_common(train_gan, common, false);
  std::string variant_name = "acgan";
  train_gan->add_option("--variant", variant_name, "cgan or acgan")->check(CLI::IsMember({"cgan", "acgan"}));
  train_gan->add_option("-o,--out", out, "checkpoint JSON")->required();

  auto* generate = app.add_subcommand("generate", "draw class-conditional samples from a checkpoint");
  std::string checkpoint, class_name;
  std::size_t count = 0;
  std::uint64_t gen_seed = 1;
  generate->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
  generate->add_option("--class", class_name, "class label")->required();
  generate->add_option("--count", count, "records to draw")->required();
  generate->add_option("--seed", gen_seed, "noise seed");
  generate->add_option("-o,--out", out, "output CSV")->required();

  auto* augment = app.add_subcommand("augment", "write a split joined with synthetic records");
  add_common(augment, common, true);
  std::string split = "train", source = "acgan";
  augment->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  augment->add_option("--source", source, "acgan, cgan or adasyn")->check(CLI::IsMember({"acgan", "cgan", "adasyn"}));
  augment->add_option("-o,--out", out, "output CSV")->required();

  auto* oversample_cmd = app.add_subcommand("oversample", "classical oversampling of the train split");
  add_common(oversample_cmd, common, false);
  std::string method = "adasyn", target = "balance";
  oversample_cmd->add_option("--method", method, "adasyn, smote or smote-enn")
      ->check(CLI::IsMember({"adasyn", "smote", "smote-enn"}));
  oversample_cmd->add_option("--target", target, "balance (to the majority) or phi")
      ->check(CLI::IsMember({"balance", "phi"}));
  oversample_cmd->add_option("-o,--out", out, "output CSV (originals plus synthetic records)")->required();

  auto* fit_rf = app.add_subcommand("fit-rf", "fit a random forest on a train variant");
  add_common(fit_rf, common, true);
  std::string train_source = "original";
  fit_rf->add_option("--train", train_source, "original, acgan, cgan or adasyn")
      ->check(CLI::IsMember({"original", "acgan", "cgan", "adasyn"}));
  fit_rf->add_option("-o,--out", out, "forest JSON")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a fitted forest on a test variant or CSV");
  add_common(evaluate, common, true);
  std::string forest_path, test_source = "original", test_csv;
  evaluate->add_option("--forest", forest_path, "forest JSON from fit-rf")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--test", test_source, "original, acgan, cgan or adasyn")
      ->check(CLI::IsMember({"original", "acgan", "cgan", "adasyn"}));
  evaluate->add_option("--test-csv", test_csv, "external test CSV, standardized with the forest's statistics")
      ->check(CLI::ExistingFile);
  evaluate->add_option("-o,--out", out, "EvalReport JSON")->required();

  auto* experiment = app.add_subcommand("experiment", "run one experiment or all configured ones");
  add_common(experiment, common, true);
  std::string exp_name;
  std::string output_dir;
  experiment->add_option("name", exp_name, "experiment name or 'all'")->required();
  experiment->add_option("-o,--output-dir", output_dir, "override the config's output directory");

  CLI11_PARSE(app, argc, argv);

  const std::string cmd_line = [&] {
    std::string s;
    for (int i = 1; i < argc; ++i) s += (i > 1 ? " " : "") + std::string(argv[i]);
    return s;
  }();

  try {
    if (*fixture) {
      auto cfg = stage("config", [&] { return load_config(common.config); });
      if (!cfg.fixture) throw StageError("config", "BadConfig: config has no data.fixture section");
      const auto d = stage("fixture", [&] { return make_fixture(*cfg.fixture, cfg.schema, cfg.classes); });
      stage("write", [&] {
        fs::create_directories(fs::absolute(out).parent_path());
        data::save_csv(d, out);
        file_manifest(out, manifest(cmd_line, cfg, {{"fixture", cfg.fixture->seed}}));
        return 0;
      });
      std::cout << "wrote " << d.size() << " records to " << out << "\n";
    } else if (*explore) {
      auto cfg = stage("config", [&] { return load_config(common.config); });
      auto ctx = stage("data", [&] { return std::make_unique<Context>(cfg); });
      const fs::path dir = out.empty() ? fs::path(cfg.output_dir) / "explore" : fs::path(out);
      const auto files = stage("explore", [&] { return write_exploration(ctx->full(), dir, grid); });
      write_manifest(dir, manifest(cmd_line, cfg, ctx->seeds()));
      std::cout << "wrote " << files.size() << " curve files to " << dir.string() << "\n";
    } else if (*train_gan) {
      auto ctx = make_context(common);
      auto& m = stage("train-gan", [&]() -> gan::GanModel& {
        return variant_name == "cgan" ? ctx->cgan() : ctx->acgan();
      });
      stage("write", [&] {
        fs::create_directories(fs::absolute(out).parent_path());
        gan::save_checkpoint(m, out, ctx->scaler());
        nlohmann::json losses = nlohmann::json::array();
        for (const auto& e : ctx->train_reports().at(variant_name).epochs)
          losses.push_back({{"d_loss", e.d_loss}, {"g_loss", e.g_loss}});
        file_manifest(out, manifest(cmd_line, ctx->config(), ctx->seeds(), {}, {{"epoch_losses", losses}}));
        return 0;
      });
      std::cout << "trained " << variant_name << " for " << m.epochs_trained << " epochs; checkpoint " << out << "\n";
    } else if (*generate) {
      auto ck = stage("checkpoint", [&] { return gan::load_checkpoint(checkpoint); });
      const auto c = ck.model.classes.index_of(class_name);
      if (!c) throw StageError("generate", "UnknownLabel: class '" + class_name + "' is not in the checkpoint");
      data::ClassCounts counts(ck.model.classes.size(), 0);
      counts[*c] = count;
      auto d = stage("generate", [&] { return gan::generate(ck.model, counts, gen_seed); });
      if (ck.scaler) d = data::inverse_transform(*ck.scaler, d);
      stage("write", [&] {
        fs::create_directories(fs::absolute(out).parent_path());
        data::save_csv(d, out);
        file_manifest(out, {{"command", cmd_line},
                            {"checkpoint", checkpoint},
                            {"seeds", {{"generate", gen_seed}}},
                            {"inverse_transformed", ck.scaler.has_value()},
                            {"versions", versions()}});
        return 0;
      });
      std::cout << "wrote " << d.size() << " " << class_name << " records to " << out << "\n";
    } else if (*augment) {
      auto ctx = make_context(common);
      Runner runner(*ctx);
      const auto d = stage("augment", [&] { return variant(runner, split, source); });
      stage("write", [&] {
        fs::create_directories(fs::absolute(out).parent_path());
        data::save_csv(data::inverse_transform(ctx->scaler(), d), out);
        file_manifest(out, manifest(cmd_line, ctx->config(), ctx->seeds()));
        return 0;
      });
      std::cout << "wrote " << d.size() << " records to " << out << "\n";
    } else if (*oversample_cmd) {
      auto ctx = make_context(common);
      const auto& cfg = ctx->config();
      const auto& train = ctx->train();
      const auto goal = target == "balance" ? oversample::balance_to_majority(train)
                                            : oversample::expansion_target(train, cfg.phi_a, cfg.phi_b);
      const auto d = stage("oversample", [&] {
        const auto seed = ctx->seed("oversample." + method);
        if (method == "adasyn") return data::augment(train, oversample::adasyn(train, goal, cfg.adasyn_k, seed));
        if (method == "smote") return data::augment(train, oversample::smote(train, goal, cfg.smote_k, seed));
        return oversample::smote_enn(train, goal, seed, cfg.smote_k, cfg.enn_k);
      });
      stage("write", [&] {
        fs::create_directories(fs::absolute(out).parent_path());
        data::save_csv(data::inverse_transform(ctx->scaler(), d), out);
        file_manifest(out, manifest(cmd_line, cfg, ctx->seeds()));
        return 0;
      });
      std::cout << "wrote " << d.size() << " records to " << out << "\n";
    } else if (*fit_rf) {
      auto ctx = make_context(common);
      Runner runner(*ctx);
      const auto& f = stage("fit-rf", [&]() -> const forest::Forest& {
        return runner.forest_for(train_source, runner.train_variant(train_source));
      });
      stage("write", [&] {
        write_json(out, {{"train", train_source},
                         {"classes", ctx->config().classes.labels()},
                         {"standardizer", scaler_json(ctx->scaler())},
                         {"forest", forest::to_json(f)}});
        file_manifest(out, manifest(cmd_line, ctx->config(), ctx->seeds()));
        return 0;
      });
      std::cout << "fitted " << f.trees.size() << " trees on '" << train_source << "'; wrote " << out << "\n";
    } else if (*evaluate) {
      const auto saved = stage("forest", [&] { return read_json(forest_path); });
      const auto f = stage("forest", [&] { return forest::forest_from_json(saved.at("forest")); });
      auto ctx = make_context(common);
      const auto report = stage("evaluate", [&] {
        data::Dataset test = test_csv.empty()
                                 ? Runner(*ctx).test_variant(test_source)
                                 : data::transform(scaler_from(saved.at("standardizer")),
                                                   data::load_csv(test_csv, ctx->config().schema, ctx->config().classes));
        return metrics::evaluate(forest::predict(f, test), test.labels(), test.classes().size());
      });
      stage("write", [&] {
        auto j = metrics::to_json(report);
        j["test"] = test_csv.empty() ? test_source : test_csv;
        write_json(out, j);
        file_manifest(out, manifest(cmd_line, ctx->config(), ctx->seeds()));
        return 0;
      });
      std::cout << "accuracy " << fmt(report.accuracy) << " f1 " << fmt(report.f1_macro) << " g_mean "
                << fmt(report.g_mean) << "\n";
    } else if (*experiment) {
      auto cfg = stage("config", [&] { return load_config(common.config); });
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      std::vector<std::string> names = cfg.experiments;
      if (exp_name != "all") {
        if (std::find(experiment_names().begin(), experiment_names().end(), exp_name) == experiment_names().end())
          throw StageError("config", "BadConfig: unknown experiment '" + exp_name + "'");
        names = {exp_name};
      }
      auto ctx = stage("data", [&] { return std::make_unique<Context>(cfg); });
      stage("checkpoint", [&] {
        for (const auto* path : {&common.cgan_checkpoint, &common.acgan_checkpoint})
          if (!path->empty()) ctx->set_model(gan::load_checkpoint(*path).model);
        return 0;
      });
      const auto results = stage("experiment " + exp_name, [&] { return run_experiments(*ctx, names, cmd_line); });
      for (const auto& r : results) {
        if (r.skipped)
          std::cerr << "skipped " << r.name << ": " << r.skip_reason << "\n";
        else
          std::cout << "wrote " << (fs::path(cfg.output_dir) / r.name).string() << "\n";
      }
    }
  } catch (const StageError& e) {
    std::cerr << "caleb: " << e.stage << " failed: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "caleb: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "caleb: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
