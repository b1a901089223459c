#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "caleb/dataset.hpp"
#include "caleb/error.hpp"
#include "caleb/forest.hpp"
#include "caleb/gan.hpp"

namespace caleb::harness {

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"imbalance", "fidelity", "train_on_original",
                                              "evolution_matrix", "temporal", "discriminator_vs_rf"};
  return names;
}

/// Gaussian-mixture stand-in for the external dataset. Either a named preset
/// or explicit per-class components (mean and sd given as a scalar broadcast
/// over every feature or as a full vector).
struct FixtureConfig {
  std::string preset;  // "separable", "bots" or empty for explicit
  std::size_t n_per_class = 500;
  std::vector<std::size_t> counts;  // optional per-class override
  double spread = 1.0;              // "bots" preset: scale of the random class means
  std::uint64_t seed = 1;
  data::FixtureSpec spec;
};

struct TemporalData {
  std::string train_csv;
  std::vector<std::pair<std::string, std::string>> test_csvs;  // (name, path)
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "results";
  std::string train_csv;
  std::optional<FixtureConfig> fixture;
  TemporalData temporal;
  data::FeatureSchema schema = data::FeatureSchema::bot_default();
  data::ClassMap classes = data::ClassMap::experiment_default();
  double train_fraction = 0.75;
  std::size_t phi_a = 2;
  std::size_t phi_b = 1;
  gan::GanConfig cgan;
  gan::GanConfig acgan;
  std::vector<std::string> generate_classes;  // empty = every class
  forest::ForestConfig forest;
  std::size_t adasyn_k = 5;
  std::size_t smote_k = 5;
  std::size_t enn_k = 3;
  std::vector<std::string> experiments = experiment_names();

  /// Resolves `generate_classes` against the class map.
  std::vector<bool> generation_mask() const {
    std::vector<bool> mask(classes.size(), generate_classes.empty());
    for (const auto& name : generate_classes) {
      const auto i = classes.index_of(name);
      if (!i) throw Error(ErrorCode::BadConfig, "generate_classes names unknown class '" + name + "'");
      mask[*i] = true;
    }
    return mask;
  }

  void validate() const {
    if (phi_b < 1) throw Error(ErrorCode::BadConfig, "phi denominator must be >= 1");
    if (train_csv.empty() == !fixture.has_value())
      throw Error(ErrorCode::BadConfig, "give exactly one of data.train_csv and data.fixture");
    if (!train_csv.empty() && !std::filesystem::exists(train_csv))
      throw Error(ErrorCode::Io, "train CSV '" + train_csv + "' does not exist");
    for (const auto& e : experiments)
      if (std::find(experiment_names().begin(), experiment_names().end(), e) == experiment_names().end())
        throw Error(ErrorCode::BadConfig, "unknown experiment '" + e + "'");
    (void)generation_mask();
    cgan.validate();
    acgan.validate();
  }
};

namespace detail {

template <typename T>
void read(const YAML::Node& n, const char* key, T& out) {
  if (const auto v = n[key]) {
    try {
      out = v.as<T>();
    } catch (const YAML::Exception& e) {
      throw Error(ErrorCode::BadConfig, std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline Eigen::VectorXd vector_or_scalar(const YAML::Node& n, std::size_t width, const char* what) {
  if (n.IsScalar()) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(width), n.as<double>());
  const auto v = n.as<std::vector<double>>();
  if (v.size() != width)
    throw Error(ErrorCode::BadConfig, std::string(what) + " has " + std::to_string(v.size()) + " entries, schema has " +
                                          std::to_string(width) + " features");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void read_gan(const YAML::Node& n, gan::GanConfig& g) {
  if (!n) return;
  read(n, "noise_dim", g.noise_dim);
  read(n, "embed_dim", g.embed_dim);
  read(n, "batch_size", g.batch_size);
  read(n, "epochs", g.epochs);
  read(n, "lr", g.lr);
  read(n, "beta1", g.beta1);
  read(n, "beta2", g.beta2);
  read(n, "eps", g.eps);
  read(n, "generator_hidden", g.generator_hidden);
  read(n, "discriminator_hidden", g.discriminator_hidden);
  read(n, "leaky_alpha", g.leaky_alpha);
  read(n, "init_std", g.init_std);
  read(n, "embed_init_std", g.embed_init_std);
  read(n, "non_saturating", g.non_saturating);
  read(n, "fake_class_loss", g.fake_class_loss);
}

}  // namespace detail

/// "a:b" -> (a, b).
inline std::pair<std::size_t, std::size_t> parse_phi(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) return {std::stoul(s), 1};
    return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadConfig, "expansion multiple '" + s + "' is not of the form a:b");
  }
}

inline data::FeatureSchema parse_schema(const YAML::Node& n) {
  if (!n || (n.IsScalar() && n.as<std::string>() == "bot_default")) return data::FeatureSchema::bot_default();
  std::vector<data::Category> cats;
  for (const auto& c : n) cats.push_back({c["name"].as<std::string>(), c["width"].as<std::size_t>()});
  return data::FeatureSchema(std::move(cats));
}

inline FixtureConfig parse_fixture(const YAML::Node& n, const data::FeatureSchema& schema) {
  FixtureConfig f;
  detail::read(n, "preset", f.preset);
  detail::read(n, "n_per_class", f.n_per_class);
  detail::read(n, "counts", f.counts);
  detail::read(n, "spread", f.spread);
  detail::read(n, "seed", f.seed);
  if (const auto classes = n["classes"]) {
    for (const auto& c : classes) {
      data::ClassFixture cf;
      if (c["count"]) cf.count = c["count"].as<std::size_t>();
      for (const auto& comp : c["components"]) {
        const auto mean = detail::vector_or_scalar(comp["mean"], schema.total_width(), "component mean");
        const auto sd = comp["sd"] ? detail::vector_or_scalar(comp["sd"], schema.total_width(), "component sd")
                                   : Eigen::VectorXd::Ones(static_cast<Eigen::Index>(schema.total_width()));
        cf.components.push_back(data::GaussianComponent::diagonal(mean, sd, comp["weight"].as<double>(1.0)));
      }
      f.spec.classes.push_back(std::move(cf));
    }
  }
  if (f.preset.empty() && f.spec.classes.empty())
    throw Error(ErrorCode::BadConfig, "fixture needs a preset or explicit classes");
  return f;
}

/// Parses a YAML experiment config. Relative data paths resolve against the
/// config file's directory.
inline ExperimentConfig parse_config(const YAML::Node& root, const std::filesystem::path& base = {}) {
  ExperimentConfig c;
  auto resolve = [&](const std::string& p) {
    if (p.empty() || std::filesystem::path(p).is_absolute() || base.empty()) return p;
    return (base / p).lexically_normal().string();
  };
  detail::read(root, "seed", c.seed);
  detail::read(root, "output_dir", c.output_dir);
  if (!c.output_dir.empty()) c.output_dir = resolve(c.output_dir);
  c.schema = parse_schema(root["schema"]);
  if (const auto cls = root["classes"]) {
    if (cls.IsScalar() && cls.as<std::string>() == "binary")
      c.classes = data::ClassMap::binary();
    else if (cls.IsScalar() && cls.as<std::string>() == "full")
      c.classes = data::ClassMap::full();
    else
      c.classes = data::ClassMap(cls.as<std::vector<std::string>>());
  }
  if (const auto d = root["data"]) {
    detail::read(d, "train_csv", c.train_csv);
    c.train_csv = resolve(c.train_csv);
    if (d["fixture"]) c.fixture = parse_fixture(d["fixture"], c.schema);
    if (const auto t = d["temporal"]) {
      detail::read(t, "train_csv", c.temporal.train_csv);
      c.temporal.train_csv = resolve(c.temporal.train_csv);
      if (const auto tests = t["test_csvs"])
        for (const auto& e : tests) c.temporal.test_csvs.emplace_back(e["name"].as<std::string>(), resolve(e["path"].as<std::string>()));
    }
  }
  detail::read(root, "train_fraction", c.train_fraction);
  if (const auto phi = root["phi"]) std::tie(c.phi_a, c.phi_b) = parse_phi(phi.as<std::string>());

  gan::GanConfig shared;
  detail::read_gan(root["gan"], shared);
  c.cgan = shared;
  c.acgan = shared;
  detail::read_gan(root["cgan"], c.cgan);
  detail::read_gan(root["acgan"], c.acgan);
  c.cgan.variant = gan::Variant::cgan;
  c.acgan.variant = gan::Variant::acgan;
  c.cgan.classes = c.acgan.classes = c.classes.size();
  c.cgan.seed = derive_seed(c.seed, "cgan");
  c.acgan.seed = derive_seed(c.seed, "acgan");
  if (const auto g = root["gan"]) detail::read(g, "generate_classes", c.generate_classes);

  if (const auto f = root["forest"]) {
    detail::read(f, "n_trees", c.forest.n_trees);
    detail::read(f, "min_samples_leaf", c.forest.min_samples_leaf);
    detail::read(f, "max_depth", c.forest.max_depth);
    detail::read(f, "bootstrap", c.forest.bootstrap);
    detail::read(f, "threads", c.forest.threads);
    if (const auto mf = f["max_features"]) {
      const auto s = mf.as<std::string>();
      if (s == "sqrt")
        c.forest.max_features = forest::MaxFeatures::sqrt;
      else if (s == "all")
        c.forest.max_features = forest::MaxFeatures::all;
      else {
        c.forest.max_features = forest::MaxFeatures::count;
        c.forest.max_features_count = mf.as<std::size_t>();
      }
    }
  }
  c.forest.seed = derive_seed(c.seed, "forest");
  if (const auto o = root["oversampling"]) {
    detail::read(o, "adasyn_k", c.adasyn_k);
    detail::read(o, "smote_k", c.smote_k);
    detail::read(o, "enn_k", c.enn_k);
  }
  detail::read(root, "experiments", c.experiments);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw Error(ErrorCode::Io, "cannot read config '" + path + "'");
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::BadConfig, "config '" + path + "': " + e.what());
  }
  return parse_config(root, std::filesystem::path(path).parent_path());
}

/// Canonical JSON rendering; its hash identifies the run in manifests.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& cat : c.schema.categories()) cats.push_back({{"name", cat.name}, {"width", cat.width}});
  nlohmann::json j{{"seed", c.seed},
                   {"train_csv", c.train_csv},
                   {"schema", cats},
                   {"classes", c.classes.labels()},
                   {"train_fraction", c.train_fraction},
                   {"phi", std::to_string(c.phi_a) + ":" + std::to_string(c.phi_b)},
                   {"cgan", gan::config_to_json(c.cgan)},
                   {"acgan", gan::config_to_json(c.acgan)},
                   {"generate_classes", c.generate_classes},
                   {"forest",
                    {{"n_trees", c.forest.n_trees},
                     {"max_features", c.forest.max_features == forest::MaxFeatures::sqrt  ? "sqrt"
                                      : c.forest.max_features == forest::MaxFeatures::all ? "all"
                                                                                          : std::to_string(c.forest.max_features_count)},
                     {"min_samples_leaf", c.forest.min_samples_leaf},
                     {"max_depth", c.forest.max_depth},
                     {"bootstrap", c.forest.bootstrap}}},
                   {"oversampling", {{"adasyn_k", c.adasyn_k}, {"smote_k", c.smote_k}, {"enn_k", c.enn_k}}},
                   {"experiments", c.experiments}};
  if (c.fixture) {
    j["fixture"] = {{"preset", c.fixture->preset},
                    {"n_per_class", c.fixture->n_per_class},
                    {"counts", c.fixture->counts},
                    {"spread", c.fixture->spread},
                    {"seed", c.fixture->seed},
                    {"explicit_classes", c.fixture->spec.classes.size()}};
  }
  if (!c.temporal.train_csv.empty()) {
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& [name, path] : c.temporal.test_csvs) tests.push_back({{"name", name}, {"path", path}});
    j["temporal"] = {{"train_csv", c.temporal.train_csv}, {"test_csvs", tests}};
  }
  return j;
}

}  // namespace caleb::harness
