#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "caleb/harness.hpp"
#include "test_support.hpp"

using namespace caleb;
using namespace caleb::harness;
namespace fs = std::filesystem;

namespace {

const char* kSchema = R"(
schema:
  - {name: content, width: 4}
  - {name: sentiment, width: 3}
  - {name: user, width: 3}
)";

// Tiny GANs so a full run finishes in seconds.
const char* kSmallGan = R"(
gan: {noise_dim: 8, embed_dim: 3, batch_size: 64, epochs: 15, init_std: 0.1, generator_hidden: [32, 32], discriminator_hidden: [32, 32], lr: 0.001}
forest: {n_trees: 20}
)";

std::string separable_yaml(const std::string& out, const std::string& classes = "[a, b, c]") {
  return std::string("seed: 5\noutput_dir: ") + out + "\nclasses: " + classes + "\n" + kSchema + kSmallGan +
         "data:\n  fixture: {preset: separable, n_per_class: 120, seed: 2}\n";
}

ExperimentConfig parse(const std::string& yaml) { return parse_config(YAML::Load(yaml)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Every CSV under `dir`, keyed by relative path.
std::map<std::string, std::string> csvs_under(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".csv") out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string("\"") + CALEB_CLI_PATH + "\" " + args + " >\"" + log + "\" 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("config parsing", "[harness][config]") {
  const auto c = parse(std::string("seed: 9\nphi: \"3:2\"\nclasses: [x, y]\n") + kSchema + R"(
data:
  fixture: {preset: separable, n_per_class: 10}
gan: {epochs: 4, batch_size: 32}
acgan: {epochs: 6, fake_class_loss: false}
forest: {n_trees: 7, max_features: all}
oversampling: {adasyn_k: 4}
experiments: [imbalance, temporal]
)");
  CHECK(c.seed == 9);
  CHECK(c.phi_a == 3);
  CHECK(c.phi_b == 2);
  CHECK(c.classes.labels() == std::vector<std::string>{"x", "y"});
  CHECK(c.schema.total_width() == 10);
  CHECK(c.cgan.epochs == 4);
  CHECK(c.acgan.epochs == 6);
  CHECK(c.cgan.batch_size == 32);
  CHECK(c.acgan.batch_size == 32);
  CHECK(c.cgan.fake_class_loss);
  CHECK_FALSE(c.acgan.fake_class_loss);
  CHECK(c.cgan.variant == gan::Variant::cgan);
  CHECK(c.acgan.variant == gan::Variant::acgan);
  CHECK(c.cgan.classes == 2);
  CHECK(c.cgan.seed == derive_seed(9, "cgan"));
  CHECK(c.acgan.seed == derive_seed(9, "acgan"));
  CHECK(c.cgan.noise_dim == 128);
  CHECK(c.forest.n_trees == 7);
  CHECK(c.forest.max_features == forest::MaxFeatures::all);
  CHECK(c.adasyn_k == 4);
  CHECK(c.smote_k == 5);
  CHECK(c.enn_k == 3);
  CHECK(c.experiments == std::vector<std::string>{"imbalance", "temporal"});

  SECTION("defaults") {
    const auto d = parse("data: {fixture: {preset: separable}}");
    CHECK(d.schema == data::FeatureSchema::bot_default());
    CHECK(d.classes == data::ClassMap::experiment_default());
    CHECK(d.phi_a == 2);
    CHECK(d.phi_b == 1);
    CHECK(d.train_fraction == 0.75);
    CHECK(d.cgan.batch_size == 512);
    CHECK(d.cgan.epochs == 300);
    CHECK(d.experiments == experiment_names());
  }

  SECTION("errors") {
    test::require_error(ErrorCode::BadConfig, [] { parse("phi: \"2:0\"\ndata: {fixture: {preset: separable}}"); });
    test::require_error(ErrorCode::BadConfig, [] { parse("phi: \"two\"\ndata: {fixture: {preset: separable}}"); });
    test::require_error(ErrorCode::BadConfig, [] { parse("experiments: [nope]\ndata: {fixture: {preset: separable}}"); });
    test::require_error(ErrorCode::BadConfig, [] { parse("seed: 1"); });
    test::require_error(ErrorCode::BadConfig,
                        [] { parse("data: {train_csv: x.csv, fixture: {preset: separable}}"); });
    test::require_error(ErrorCode::Io, [] { parse("data: {train_csv: /no/such/file.csv}"); });
    test::require_error(ErrorCode::BadConfig,
                        [] { parse("gan: {generate_classes: [robot]}\ndata: {fixture: {preset: separable}}"); });
    test::require_error(ErrorCode::BadConfig, [] { parse("gan: {epochs: many}\ndata: {fixture: {preset: separable}}"); });
    test::require_error(ErrorCode::Io, [] { load_config("/no/such/config.yaml"); });
  }

  SECTION("relative paths resolve against the config file") {
    test::TempDir dir;
    const auto d = data::make_fixture(test::two_gaussians(3, 2.0), 5, data::FeatureSchema({{"f", 3}}),
                                      data::ClassMap::binary(), 1);
    data::save_csv(d, dir.file("train.csv"));
    std::ofstream(dir.file("c.yaml")) << "schema: [{name: f, width: 3}]\nclasses: binary\n"
                                         "output_dir: out\ndata: {train_csv: train.csv}\n";
    const auto c2 = load_config(dir.file("c.yaml"));
    CHECK(fs::equivalent(c2.train_csv, dir.file("train.csv")));
    CHECK(c2.output_dir == (dir.path() / "out").lexically_normal().string());
  }

  SECTION("config hash tracks content") {
    const auto a = parse("data: {fixture: {preset: separable}}");
    const auto b = parse("seed: 8\ndata: {fixture: {preset: separable}}");
    CHECK(config_hash(a) == config_hash(parse("data: {fixture: {preset: separable}}")));
    CHECK(config_hash(a) != config_hash(b));
  }
}

TEST_CASE("fixture presets", "[harness][fixture]") {
  const auto schema = data::FeatureSchema({{"a", 6}});
  FixtureConfig f;
  f.preset = "bots";
  f.n_per_class = 200;
  const auto spec = expand_fixture(f, schema, data::ClassMap::experiment_default());
  REQUIRE(spec.classes.size() == 6);
  const std::vector<std::size_t> expected{200, 75, 60, 50, 40, 200};
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(spec.classes[c].count == expected[c]);
    CHECK(spec.classes[c].components.size() == 2);
  }
  const auto d = make_fixture(f, schema, data::ClassMap::experiment_default());
  CHECK(d.class_counts() == expected);
  CHECK(d.features() == make_fixture(f, schema, data::ClassMap::experiment_default()).features());

  f.preset = "separable";
  f.spread = 2.0;
  const auto sep = expand_fixture(f, schema, data::ClassMap({"a", "b", "c"}));
  Eigen::VectorXd m1(6);
  m1 << 0, 6, 0, 0, 6, 0;
  CHECK(sep.classes[1].components[0].mean == m1);

  f.counts = {1, 2};
  test::require_error(ErrorCode::BadConfig, [&] { expand_fixture(f, schema, data::ClassMap({"a", "b", "c"})); });
  f.preset = "unknown";
  test::require_error(ErrorCode::BadConfig, [&] { expand_fixture(f, schema, data::ClassMap::binary()); });
}

TEST_CASE("context split, scaling and hygiene", "[harness][context]") {
  test::TempDir dir;
  auto cfg = parse(separable_yaml(dir.path().string()));
  cfg.generate_classes = {"a", "c"};
  Context ctx(cfg);

  CHECK(ctx.train().size() == 270);
  CHECK(ctx.test().size() == 90);
  CHECK(ctx.train().class_counts() == data::ClassCounts{90, 90, 90});
  const Eigen::RowVectorXd mean = ctx.train().features().colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ctx.seeds().at("split") == derive_seed(5, "split"));
  CHECK(ctx.seeds().at("fixture") == 2);

  std::set<std::uint64_t> train_ids(ctx.train().ids().begin(), ctx.train().ids().end());
  for (auto id : ctx.test().ids()) CHECK_FALSE(train_ids.count(id));

  CHECK(ctx.expansion(ctx.train()) == data::ClassCounts{180, 0, 180});

  SECTION("leaks are detected") {
    test::require_error(ErrorCode::TestLeak, [&] { ctx.check_hygiene(ctx.test(), "probe"); });
    test::require_error(ErrorCode::TestLeak, [&] {
      ctx.check_hygiene(data::augment(ctx.train(), ctx.test().subset(std::vector<std::size_t>{3})), "probe");
    });
    ctx.check_hygiene(ctx.train(), "train");
  }

  SECTION("synthetic sets respect the mask and never reuse test records for training") {
    Runner runner(ctx);
    const auto& ada = ctx.adasyn_synthetic();
    CHECK(ada.train.class_counts() == data::ClassCounts{180, 0, 180});
    CHECK(ada.test.class_counts() == data::ClassCounts{60, 0, 60});
    for (const auto& source : {"original", "adasyn", "cgan", "acgan"}) {
      const auto tr = runner.train_variant(source);
      ctx.check_hygiene(tr, source);
      const auto te = runner.test_variant(source);
      // shared original core
      REQUIRE(te.size() >= ctx.test().size());
      CHECK(te.features().topRows(static_cast<Eigen::Index>(ctx.test().size())) == ctx.test().features());
      CHECK(std::vector<std::uint64_t>(te.ids().begin(), te.ids().begin() + static_cast<long>(ctx.test().size())) ==
            ctx.test().ids());
    }
    CHECK(ctx.cgan_synthetic().train.count(data::Provenance::cgan) == 360);
    CHECK(ctx.acgan_synthetic().test.count(data::Provenance::acgan) == 120);
  }
}

TEST_CASE("experiment run on the separable fixture", "[harness][experiments]") {
  test::TempDir dir;
  const auto out = dir.path() / "run";
  const auto cfg = parse(separable_yaml(out.string()));
  Context ctx(cfg);
  const auto results = run_experiments(ctx, experiment_names(), "test");
  REQUIRE(results.size() == 6);
  std::map<std::string, const ExperimentResult*> by_name;
  for (const auto& r : results) by_name[r.name] = &r;

  SECTION("imbalance rows") {
    const auto& r = *by_name.at("imbalance");
    REQUIRE(r.cells.size() == 4);
    CHECK(r.cells[0].row == "Original");
    CHECK(r.cells[1].row == "ADASYN");
    CHECK(r.cells[2].row == "SMOTE-ENN");
    CHECK(r.cells[3].row == "CGAN 2:1");
    for (const auto& c : r.cells) CHECK(c.report.accuracy > 0.9);
  }

  SECTION("fidelity") {
    const auto& r = *by_name.at("fidelity");
    REQUIRE(r.fidelity.size() == 3);
    for (const auto& f : r.fidelity) {
      CHECK(f.report.ks_score > 0.0);
      CHECK(f.report.ks_score <= 1.0);
      CHECK(f.report.kl_score > 0.0);
      CHECK(f.report.kl_score <= 1.0);
    }
  }

  SECTION("evolution matrix is complete and shares the train-on-original row") {
    const auto& r = *by_name.at("evolution_matrix");
    REQUIRE(r.cells.size() == 16);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& c : r.cells) seen.emplace(c.row, c.col);
    CHECK(seen.size() == 16);
    const auto& t = *by_name.at("train_on_original");
    for (const auto& col : test_variants())
      CHECK(r.cell("ad4_original", col).report.f1_macro == t.cell("original", col).report.f1_macro);
    CHECK(count_lines(out / "evolution_matrix" / "precision_heatmap.csv") == 17);
    CHECK(count_lines(out / "evolution_matrix" / "g_mean_heatmap.csv") == 17);
    CHECK(slurp(out / "evolution_matrix" / "precision_heatmap.csv").rfind("row,col,value\n", 0) == 0);
    std::size_t json = 0;
    for (const auto& e : fs::directory_iterator(out / "evolution_matrix")) json += e.path().extension() == ".json";
    CHECK(json == 16);
  }

  SECTION("discriminator against forests") {
    const auto& r = *by_name.at("discriminator_vs_rf");
    REQUIRE(r.cells.size() == 6);
    for (const auto& c : r.cells) CHECK(c.report.accuracy > 1.0 / 3.0 + 0.3);
    CHECK_FALSE(r.notes.empty());
  }

  SECTION("temporal is skipped with a notice") {
    const auto& r = *by_name.at("temporal");
    CHECK(r.skipped);
    CHECK(r.skip_reason.find("MissingExternalData") != std::string::npos);
    CHECK(fs::exists(out / "temporal" / "skipped.txt"));
  }

  SECTION("manifest") {
    const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(m.at("config_hash") == hex(config_hash(cfg)));
    for (const auto& name : {"split", "cgan", "acgan", "forest", "adasyn.train", "adasyn.test", "cgan.generate.train",
                             "acgan.generate.test", "imbalance.adasyn", "imbalance.smote_enn"})
      CHECK(m.at("seeds").contains(name));
    CHECK(m.at("experiments").at("temporal").at("status") == "skipped");
    CHECK(m.at("experiments").at("evolution_matrix").at("status") == "ok");
    CHECK(m.at("versions").contains("eigen"));
  }

  SECTION("rerun reproduces every CSV byte for byte") {
    const auto out2 = dir.path() / "rerun";
    auto cfg2 = cfg;
    cfg2.output_dir = out2.string();
    Context ctx2(cfg2);
    run_experiments(ctx2, experiment_names(), "test");
    const auto a = csvs_under(out);
    const auto b = csvs_under(out2);
    CHECK(a.size() == 7);
    CHECK(a == b);
    CHECK(slurp(out / "manifest.json") == slurp(out2 / "manifest.json"));
  }
}

TEST_CASE("temporal experiment with external files", "[harness][experiments]") {
  test::TempDir dir;
  const data::FeatureSchema schema({{"content", 4}, {"sentiment", 3}, {"user", 3}});
  const auto write = [&](const std::string& name, double offset, std::uint64_t seed) {
    data::save_csv(data::make_fixture(test::two_gaussians(10, offset), 80, schema, data::ClassMap::binary(), seed),
                   dir.file(name));
  };
  write("old.csv", 2.0, 1);
  write("new_a.csv", 1.5, 2);
  write("new_b.csv", 1.0, 3);
  const auto yaml = std::string("seed: 3\noutput_dir: ") + dir.file("out") + "\nclasses: binary\n" + kSchema +
                    kSmallGan + "data:\n  train_csv: " + dir.file("old.csv") + "\n  temporal:\n    train_csv: " +
                    dir.file("old.csv") + "\n    test_csvs:\n      - {name: a, path: " + dir.file("new_a.csv") +
                    "}\n      - {name: b, path: " + dir.file("new_b.csv") + "}\n";
  Context ctx(parse(yaml));
  Runner runner(ctx);
  const auto r = runner.temporal();
  REQUIRE(r.cells.size() == 6);
  for (const auto& variant : {"plain", "adasyn", "acgan"})
    for (const auto& test_name : {"a", "b"}) CHECK(r.cell(variant, test_name).report.accuracy > 0.8);
  CHECK(ctx.seeds().count("temporal.acgan"));

  fs::remove(dir.file("new_b.csv"));
  test::require_error(ErrorCode::MissingExternalData, [&] { runner.temporal(); });
}

TEST_CASE("command-line interface", "[harness][cli]") {
  test::TempDir dir;
  const auto cfg_path = dir.file("c.yaml");
  std::ofstream(cfg_path) << separable_yaml(dir.file("results"),
                                            "[spam, social, political, cyborg, self-declared, human]");
  const auto log = dir.file("log.txt");

  SECTION("fixture") {
    REQUIRE(run_cli("fixture -c " + cfg_path + " -o " + dir.file("fx.csv"), log) == 0);
    CHECK(count_lines(dir.file("fx.csv")) == 1 + 6 * 120);
    CHECK(fs::exists(dir.file("fx.csv.manifest.json")));
  }

  SECTION("explore writes one curve per (category, class)") {
    REQUIRE(run_cli("explore -c " + cfg_path + " -o " + dir.file("explore") + " --grid 50", log) == 0);
    std::size_t curves = 0;
    for (const auto& e : fs::directory_iterator(dir.file("explore")))
      if (e.path().extension() == ".csv") {
        ++curves;
        CHECK(count_lines(e.path()) == 51);
      }
    CHECK(curves == 3 * 6);
    CHECK(slurp(dir.path() / "explore" / "sentiment__political.csv").rfind("x,density\n", 0) == 0);
    CHECK(fs::exists(dir.path() / "explore" / "manifest.json"));
  }

  SECTION("train, generate, fit and evaluate") {
    REQUIRE(run_cli("train-gan -c " + cfg_path + " --variant acgan -o " + dir.file("acgan.json"), log) == 0);
    REQUIRE(run_cli("generate --checkpoint " + dir.file("acgan.json") + " --class political --count 100 -o " +
                        dir.file("gen.csv"),
                    log) == 0);
    const auto gen = data::load_csv(dir.file("gen.csv"), data::FeatureSchema({{"content", 4}, {"sentiment", 3}, {"user", 3}}),
                                    data::ClassMap::experiment_default());
    CHECK(gen.size() == 100);
    CHECK(gen.class_counts()[2] == 100);
    // inverse-transformed: the political class mean is 3 on features 2 and 8, 0 elsewhere
    const Eigen::RowVectorXd m = gen.features().colwise().mean();
    CHECK(m(2) > 1.0);
    CHECK(m(8) > 1.0);

    REQUIRE(run_cli("fit-rf -c " + cfg_path + " --train acgan --acgan-checkpoint " + dir.file("acgan.json") + " -o " +
                        dir.file("rf.json"),
                    log) == 0);
    REQUIRE(run_cli("evaluate -c " + cfg_path + " --forest " + dir.file("rf.json") + " --test original -o " +
                        dir.file("eval.json"),
                    log) == 0);
    const auto ev = nlohmann::json::parse(slurp(dir.file("eval.json")));
    CHECK(ev.at("accuracy").get<double>() > 0.9);
    CHECK(fs::exists(dir.file("eval.json.manifest.json")));
  }

  SECTION("augment and oversample") {
    REQUIRE(run_cli("augment -c " + cfg_path + " --split test --source adasyn -o " + dir.file("aug.csv"), log) == 0);
    CHECK(count_lines(dir.file("aug.csv")) == 1 + 180 + 360);
    REQUIRE(run_cli("oversample -c " + cfg_path + " --method smote --target phi -o " + dir.file("os.csv"), log) == 0);
    CHECK(count_lines(dir.file("os.csv")) == 1 + 540 + 1080);
  }

  SECTION("experiment evolution_matrix") {
    REQUIRE(run_cli("experiment evolution_matrix -c " + cfg_path + " -o " + dir.file("exp"), log) == 0);
    const auto base = dir.path() / "exp";
    CHECK(fs::exists(base / "manifest.json"));
    CHECK(fs::exists(base / "evolution_matrix" / "precision_heatmap.csv"));
    CHECK(fs::exists(base / "evolution_matrix" / "g_mean_heatmap.csv"));
    std::size_t json = 0;
    for (const auto& e : fs::directory_iterator(base / "evolution_matrix")) json += e.path().extension() == ".json";
    CHECK(json == 16);
  }

  SECTION("errors name the failing stage and exit nonzero") {
    CHECK(run_cli("", log) != 0);
    CHECK(run_cli("experiment nope -c " + cfg_path, log) != 0);
    CHECK(slurp(log).find("config failed") != std::string::npos);
    std::ofstream(dir.file("bad.yaml")) << "data: {train_csv: " << dir.file("missing.csv") << "}\n";
    CHECK(run_cli("experiment all -c " + dir.file("bad.yaml"), log) != 0);
    CHECK(slurp(log).find("config failed: Io") != std::string::npos);
    std::ofstream(dir.file("bad_csv.csv")) << "content_0,label\n1,spam\n";
    std::ofstream(dir.file("bad2.yaml")) << "data: {train_csv: " << dir.file("bad_csv.csv") << "}\n";
    CHECK(run_cli("experiment all -c " + dir.file("bad2.yaml"), log) != 0);
    CHECK(slurp(log).find("data failed: MissingColumn") != std::string::npos);
  }
}
