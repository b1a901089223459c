#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caleb/dataset.hpp"
#include "caleb/error.hpp"
#include "caleb/numerics.hpp"
#include "caleb/rng.hpp"
#include "caleb/standardizer.hpp"

namespace caleb::gan {

using nn::Matrix;

enum class Variant { cgan, acgan };

inline std::string to_string(Variant v) { return v == Variant::cgan ? "cgan" : "acgan"; }

inline Variant variant_from_string(const std::string& s) {
  if (s == "cgan") return Variant::cgan;
  if (s == "acgan" || s == "ac-gan") return Variant::acgan;
  throw Error(ErrorCode::BadConfig, "unknown GAN variant '" + s + "'");
}

struct GanConfig {
  Variant variant = Variant::cgan;
  std::size_t noise_dim = 128;
  std::size_t embed_dim = 6;
  std::size_t classes = 6;
  std::size_t batch_size = 512;
  std::size_t epochs = 300;
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::size_t> generator_hidden{256, 512};
  std::vector<std::size_t> discriminator_hidden{512, 256};
  double leaky_alpha = 0.2;
  double init_std = 0.02;
  double embed_init_std = 1.0;
  /// Generator minimizes -log D(G(z|c)) instead of log(1 - D(G(z|c))).
  bool non_saturating = true;
  /// AC-GAN discriminator also fits the class head on generated samples.
  bool fake_class_loss = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (noise_dim == 0 || embed_dim == 0 || batch_size == 0)
      throw Error(ErrorCode::BadConfig, "noise_dim, embed_dim and batch_size must be >= 1");
    if (classes < 2) throw Error(ErrorCode::BadConfig, "a conditional GAN needs at least 2 classes");
    if (!(lr > 0.0)) throw Error(ErrorCode::BadConfig, "learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
      throw Error(ErrorCode::BadConfig, "Adam betas must lie in [0,1) and eps > 0");
    for (auto w : generator_hidden)
      if (w == 0) throw Error(ErrorCode::BadConfig, "zero hidden width");
    for (auto w : discriminator_hidden)
      if (w == 0) throw Error(ErrorCode::BadConfig, "zero hidden width");
    if (variant == Variant::acgan && discriminator_hidden.empty())
      throw Error(ErrorCode::BadConfig, "the AC-GAN discriminator needs a hidden trunk");
  }
};

/// Generator/discriminator pair.
///
/// CGAN: G([z, E_g(c)]) -> x, D([x, E_d(c)]) -> P(real).
/// AC-GAN: G([z, E_g(c)]) -> x, trunk(x) -> h, source_head(h) -> P(real),
/// class_head(h) -> class logits. The AC-GAN discriminator never sees c.
struct GanModel {
  GanConfig config;
  data::FeatureSchema schema;
  data::ClassMap classes;

  nn::Embedding generator_embedding;
  nn::DenseNet generator;
  nn::Embedding discriminator_embedding;  // CGAN only
  nn::DenseNet discriminator;             // CGAN: full network; AC-GAN: shared trunk
  nn::DenseNet source_head;               // AC-GAN only
  nn::DenseNet class_head;                // AC-GAN only
  nn::AdamState generator_opt;
  nn::AdamState discriminator_opt;
  Rng rng;
  std::size_t epochs_trained = 0;

  std::size_t feature_width() const { return schema.total_width(); }
  bool trained() const { return epochs_trained > 0; }
};

inline std::vector<std::span<double>> generator_parameters(GanModel& m) {
  auto p = m.generator.parameters();
  for (auto s : m.generator_embedding.parameters()) p.push_back(s);
  return p;
}

inline std::vector<std::span<double>> discriminator_parameters(GanModel& m) {
  auto p = m.discriminator.parameters();
  if (m.config.variant == Variant::cgan) {
    for (auto s : m.discriminator_embedding.parameters()) p.push_back(s);
  } else {
    for (auto s : m.source_head.parameters()) p.push_back(s);
    for (auto s : m.class_head.parameters()) p.push_back(s);
  }
  return p;
}

inline GanModel build(GanConfig config, const data::FeatureSchema& schema, const data::ClassMap& classes) {
  config.validate();
  if (config.classes != classes.size())
    throw Error(ErrorCode::BadConfig, "config.classes = " + std::to_string(config.classes) + " but the class map has " +
                                          std::to_string(classes.size()) + " labels");
  GanModel m{config, schema, classes, {}, {}, {}, {}, {}, {}, {}, {}, Rng(derive_seed(config.seed, "noise")), 0};
  Rng init(derive_seed(config.seed, "init"));
  const std::size_t f = schema.total_width();

  m.generator_embedding = nn::Embedding::make(config.classes, config.embed_dim, init, config.embed_init_std);
  std::vector<std::size_t> gw{config.noise_dim + config.embed_dim};
  gw.insert(gw.end(), config.generator_hidden.begin(), config.generator_hidden.end());
  gw.push_back(f);
  m.generator = nn::DenseNet::make(gw, nn::Activation::leaky_relu, nn::Activation::linear, init, config.leaky_alpha,
                                   config.init_std);

  if (config.variant == Variant::cgan) {
    m.discriminator_embedding = nn::Embedding::make(config.classes, config.embed_dim, init, config.embed_init_std);
    std::vector<std::size_t> dw{f + config.embed_dim};
    dw.insert(dw.end(), config.discriminator_hidden.begin(), config.discriminator_hidden.end());
    dw.push_back(1);
    m.discriminator = nn::DenseNet::make(dw, nn::Activation::leaky_relu, nn::Activation::sigmoid, init,
                                         config.leaky_alpha, config.init_std);
  } else {
    std::vector<std::size_t> dw{f};
    dw.insert(dw.end(), config.discriminator_hidden.begin(), config.discriminator_hidden.end());
    m.discriminator = nn::DenseNet::make(dw, nn::Activation::leaky_relu, nn::Activation::leaky_relu, init,
                                         config.leaky_alpha, config.init_std);
    const std::size_t h = config.discriminator_hidden.back();
    const std::size_t src_w[] = {h, 1};
    const std::size_t cls_w[] = {h, config.classes};
    m.source_head = nn::DenseNet::make(src_w, nn::Activation::linear, nn::Activation::sigmoid, init,
                                       config.leaky_alpha, config.init_std);
    m.class_head = nn::DenseNet::make(cls_w, nn::Activation::linear, nn::Activation::linear, init,
                                      config.leaky_alpha, config.init_std);
  }

  const nn::AdamConfig adam{config.lr, config.beta1, config.beta2, config.eps};
  m.generator_opt = nn::AdamState::zeros_like(generator_parameters(m), adam);
  m.discriminator_opt = nn::AdamState::zeros_like(discriminator_parameters(m), adam);
  return m;
}

/// One minibatch: standardized inputs, their labels, and the noise rows fed
/// to the generator for the same labels.
struct Batch {
  Matrix inputs;
  std::vector<std::size_t> labels;
  Matrix noise;
};

inline Matrix sample_noise(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = rng.normal();
  return z;
}

/// Flat gradient tensors in the order of generator_parameters() or
/// discriminator_parameters().
struct Gradients {
  std::vector<std::vector<double>> tensors;

  std::vector<std::span<const double>> views() const {
    std::vector<std::span<const double>> v;
    for (const auto& t : tensors) v.emplace_back(t);
    return v;
  }
};

struct DiscriminatorEval {
  double loss = 0.0;
  double source_loss_real = 0.0;
  double source_loss_fake = 0.0;
  double class_loss_real = std::numeric_limits<double>::quiet_NaN();
  double class_loss_fake = std::numeric_limits<double>::quiet_NaN();
  Gradients grads;
};

struct GeneratorEval {
  double loss = 0.0;
  double source_loss = 0.0;
  double class_loss = std::numeric_limits<double>::quiet_NaN();
  Gradients grads;
};

namespace detail {

inline Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

inline void append(Gradients& g, const nn::ParamGrads& pg) {
  for (auto v : pg.views()) g.tensors.emplace_back(v.begin(), v.end());
}

inline void append(Gradients& g, const Matrix& m) { g.tensors.emplace_back(m.data(), m.data() + m.size()); }

inline void add_into(nn::ParamGrads& acc, const nn::ParamGrads& g) {
  for (std::size_t k = 0; k < acc.weight.size(); ++k) {
    acc.weight[k] += g.weight[k];
    acc.bias[k] += g.bias[k];
  }
}

inline void check_batch(const GanModel& m, const Batch& b, bool need_inputs) {
  const auto n = b.labels.size();
  if (need_inputs && (static_cast<std::size_t>(b.inputs.rows()) != n ||
                      static_cast<std::size_t>(b.inputs.cols()) != m.feature_width()))
    throw Error(ErrorCode::ShapeMismatch, "batch inputs do not match labels or feature width");
  if (static_cast<std::size_t>(b.noise.rows()) != n || static_cast<std::size_t>(b.noise.cols()) != m.config.noise_dim)
    throw Error(ErrorCode::ShapeMismatch, "batch noise does not match labels or noise width");
}

/// Result of running the AC-GAN discriminator on one set of inputs.
struct AcPass {
  nn::Tape trunk, source, cls;
};

inline AcPass ac_forward(const GanModel& m, const Matrix& x) {
  AcPass p{nn::forward(m.discriminator, x), {}, {}};
  p.source = nn::forward(m.source_head, p.trunk.output());
  p.cls = nn::forward(m.class_head, p.trunk.output());
  return p;
}

/// Back-propagates head gradients through the AC-GAN discriminator; returns
/// parameter grads (trunk, source, class) and the input gradient.
struct AcGrads {
  nn::ParamGrads trunk, source, cls;
  Matrix input_grad;
};

inline AcGrads ac_backward(const GanModel& m, const AcPass& p, const Matrix& g_source, const Matrix& g_class) {
  auto bs = nn::backward(m.source_head, p.source, g_source);
  auto bc = nn::backward(m.class_head, p.cls, g_class);
  auto bt = nn::backward(m.discriminator, p.trunk, bs.input_grad + bc.input_grad);
  return {std::move(bt.grads), std::move(bs.grads), std::move(bc.grads), std::move(bt.input_grad)};
}

}  // namespace detail

/// Generator output for the batch's noise and labels, with its tape.
inline nn::Tape generator_forward(const GanModel& m, const Matrix& noise, std::span<const std::size_t> labels) {
  return nn::forward(m.generator, detail::hcat(noise, nn::embed_lookup(m.generator_embedding, labels)));
}

/// Discriminator losses and gradients for real `batch.inputs` against `fake`;
/// parameters are left untouched.
inline DiscriminatorEval evaluate_discriminator(const GanModel& m, const Batch& batch, const Matrix& fake) {
  detail::check_batch(m, batch, true);
  if (fake.rows() != batch.inputs.rows() || fake.cols() != batch.inputs.cols())
    throw Error(ErrorCode::ShapeMismatch, "fake batch shape differs from real batch");
  DiscriminatorEval ev;
  const auto e = static_cast<Eigen::Index>(m.config.embed_dim);

  if (m.config.variant == Variant::cgan) {
    const Matrix cond = nn::embed_lookup(m.discriminator_embedding, batch.labels);
    const auto real_tape = nn::forward(m.discriminator, detail::hcat(batch.inputs, cond));
    const auto fake_tape = nn::forward(m.discriminator, detail::hcat(fake, cond));
    const auto lr = nn::bce_loss(real_tape.output(), 1.0);
    const auto lf = nn::bce_loss(fake_tape.output(), 0.0);
    ev.source_loss_real = lr.value;
    ev.source_loss_fake = lf.value;
    ev.loss = lr.value + lf.value;
    auto br = nn::backward(m.discriminator, real_tape, lr.grad);
    const auto bf = nn::backward(m.discriminator, fake_tape, lf.grad);
    detail::add_into(br.grads, bf.grads);
    const Matrix cond_grad = br.input_grad.rightCols(e) + bf.input_grad.rightCols(e);
    detail::append(ev.grads, br.grads);
    detail::append(ev.grads, nn::embed_backward(m.discriminator_embedding, batch.labels, cond_grad));
    return ev;
  }

  const auto real = detail::ac_forward(m, batch.inputs);
  const auto gen = detail::ac_forward(m, fake);
  const auto sr = nn::bce_loss(real.source.output(), 1.0);
  const auto sf = nn::bce_loss(gen.source.output(), 0.0);
  const auto cr = nn::softmax_ce_loss(real.cls.output(), batch.labels);
  const auto cf = nn::softmax_ce_loss(gen.cls.output(), batch.labels);
  ev.source_loss_real = sr.value;
  ev.source_loss_fake = sf.value;
  ev.class_loss_real = cr.value;
  ev.class_loss_fake = cf.value;
  ev.loss = sr.value + sf.value + cr.value + (m.config.fake_class_loss ? cf.value : 0.0);
  auto gr = detail::ac_backward(m, real, sr.grad, cr.grad);
  const Matrix fake_cls_grad = m.config.fake_class_loss ? cf.grad : Matrix::Zero(cf.grad.rows(), cf.grad.cols());
  const auto gf = detail::ac_backward(m, gen, sf.grad, fake_cls_grad);
  detail::add_into(gr.trunk, gf.trunk);
  detail::add_into(gr.source, gf.source);
  detail::add_into(gr.cls, gf.cls);
  detail::append(ev.grads, gr.trunk);
  detail::append(ev.grads, gr.source);
  detail::append(ev.grads, gr.cls);
  return ev;
}

/// Generator losses and gradients for the batch's noise and labels; the
/// discriminator is only read.
inline GeneratorEval evaluate_generator(const GanModel& m, const Batch& batch) {
  detail::check_batch(m, batch, false);
  GeneratorEval ev;
  const auto f = static_cast<Eigen::Index>(m.feature_width());
  const auto z = static_cast<Eigen::Index>(m.config.noise_dim);
  const auto e = static_cast<Eigen::Index>(m.config.embed_dim);
  const auto g_tape = generator_forward(m, batch.noise, batch.labels);
  const Matrix& fake = g_tape.output();

  auto source_objective = [&](const Matrix& p) {
    if (m.config.non_saturating) return nn::bce_loss(p, 1.0);
    auto l = nn::bce_loss(p, 0.0);  // -mean log(1 - p)
    l.value = -l.value;
    l.grad = -l.grad;
    return l;
  };

  Matrix fake_grad;
  if (m.config.variant == Variant::cgan) {
    const Matrix cond = nn::embed_lookup(m.discriminator_embedding, batch.labels);
    const auto d_tape = nn::forward(m.discriminator, detail::hcat(fake, cond));
    const auto ls = source_objective(d_tape.output());
    ev.source_loss = ls.value;
    ev.loss = ls.value;
    fake_grad = nn::backward(m.discriminator, d_tape, ls.grad).input_grad.leftCols(f);
  } else {
    const auto pass = detail::ac_forward(m, fake);
    const auto ls = source_objective(pass.source.output());
    const auto lc = nn::softmax_ce_loss(pass.cls.output(), batch.labels);
    ev.source_loss = ls.value;
    ev.class_loss = lc.value;
    ev.loss = ls.value + lc.value;
    fake_grad = detail::ac_backward(m, pass, ls.grad, lc.grad).input_grad;
  }

  const auto bg = nn::backward(m.generator, g_tape, fake_grad);
  detail::append(ev.grads, bg.grads);
  detail::append(ev.grads, nn::embed_backward(m.generator_embedding, batch.labels, bg.input_grad.middleCols(z, e)));
  return ev;
}

inline DiscriminatorEval discriminator_step(GanModel& m, const Batch& batch, const Matrix& fake) {
  auto ev = evaluate_discriminator(m, batch, fake);
  if (!std::isfinite(ev.loss)) throw Error(ErrorCode::NonFiniteLoss, "discriminator loss is not finite");
  nn::adam_step(discriminator_parameters(m), ev.grads.views(), m.discriminator_opt);
  return ev;
}

inline GeneratorEval generator_step(GanModel& m, const Batch& batch) {
  auto ev = evaluate_generator(m, batch);
  if (!std::isfinite(ev.loss)) throw Error(ErrorCode::NonFiniteLoss, "generator loss is not finite");
  nn::adam_step(generator_parameters(m), ev.grads.views(), m.generator_opt);
  return ev;
}

struct CganStep {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct AcganStep {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double class_loss_real = 0.0;
  double class_loss_fake = 0.0;
};

/// One discriminator update followed by one generator update on the same
/// noise.
inline CganStep train_step_cgan(GanModel& m, const Batch& real) {
  if (m.config.variant != Variant::cgan) throw Error(ErrorCode::WrongVariant, "train_step_cgan on an AC-GAN");
  detail::check_batch(m, real, true);
  const Matrix fake = generator_forward(m, real.noise, real.labels).output();
  const auto d = discriminator_step(m, real, fake);
  const auto g = generator_step(m, real);
  return {d.loss, g.loss};
}

inline AcganStep train_step_acgan(GanModel& m, const Batch& real) {
  if (m.config.variant != Variant::acgan) throw Error(ErrorCode::WrongVariant, "train_step_acgan on a CGAN");
  detail::check_batch(m, real, true);
  const Matrix fake = generator_forward(m, real.noise, real.labels).output();
  const auto d = discriminator_step(m, real, fake);
  const auto g = generator_step(m, real);
  return {d.loss, g.loss, d.class_loss_real, d.class_loss_fake};
}

struct EpochStats {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double class_loss_real = std::numeric_limits<double>::quiet_NaN();
  double class_loss_fake = std::numeric_limits<double>::quiet_NaN();

  bool operator==(const EpochStats& o) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return same(d_loss, o.d_loss) && same(g_loss, o.g_loss) && same(class_loss_real, o.class_loss_real) &&
           same(class_loss_fake, o.class_loss_fake);
  }
};

struct TrainReport {
  std::vector<EpochStats> epochs;  // mean of the per-step losses
  double wall_seconds = 0.0;
  std::size_t final_epoch = 0;
};

/// Runs `config.epochs` epochs of minibatch training on standardized data.
/// Each epoch visits a fresh permutation derived from the run seed.
inline TrainReport train(GanModel& m, const data::Dataset& train_data) {
  TrainReport report;
  if (m.config.epochs == 0) return report;
  if (train_data.empty()) throw Error(ErrorCode::EmptyDataset, "GAN training set is empty");
  if (!(train_data.schema() == m.schema) || !(train_data.classes() == m.classes))
    throw Error(ErrorCode::SchemaMismatch, "training data schema or classes differ from the model");

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = train_data.size();
  const std::size_t bs = m.config.batch_size;
  const auto& x = train_data.features();
  std::vector<std::size_t> order(n);

  for (std::size_t e = 0; e < m.config.epochs; ++e) {
    const std::size_t epoch = m.epochs_trained + 1;
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(derive_seed(m.config.seed, "epoch"), epoch));
    shuffle_rng.shuffle(std::span(order));

    EpochStats stats{0.0, 0.0, 0.0, 0.0};
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < n; begin += bs, ++steps) {
      const std::size_t rows = std::min(bs, n - begin);
      Batch b;
      b.inputs.resize(static_cast<Eigen::Index>(rows), x.cols());
      b.labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        b.inputs.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(order[begin + r]));
        b.labels[r] = train_data.labels()[order[begin + r]];
      }
      b.noise = sample_noise(m.rng, rows, m.config.noise_dim);
      try {
        if (m.config.variant == Variant::cgan) {
          const auto s = train_step_cgan(m, b);
          stats.d_loss += s.d_loss;
          stats.g_loss += s.g_loss;
        } else {
          const auto s = train_step_acgan(m, b);
          stats.d_loss += s.d_loss;
          stats.g_loss += s.g_loss;
          stats.class_loss_real += s.class_loss_real;
          stats.class_loss_fake += s.class_loss_fake;
        }
      } catch (const Error& err) {
        if (err.code() != ErrorCode::NonFiniteLoss && err.code() != ErrorCode::NonFiniteActivation) throw;
        throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " step " + std::to_string(steps) +
                                                  ": " + err.what());
      }
    }
    const double k = static_cast<double>(steps);
    stats.d_loss /= k;
    stats.g_loss /= k;
    if (m.config.variant == Variant::acgan) {
      stats.class_loss_real /= k;
      stats.class_loss_fake /= k;
    } else {
      stats.class_loss_real = stats.class_loss_fake = std::numeric_limits<double>::quiet_NaN();
    }
    report.epochs.push_back(stats);
    m.epochs_trained = epoch;
  }
  report.final_epoch = m.epochs_trained;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Draws counts[c] samples G(z|c), z ~ N(0, I), for every class c. Rows are
/// grouped by class and stay in standardized space.
inline data::Dataset generate(const GanModel& m, const data::ClassCounts& counts, std::uint64_t seed) {
  if (!m.trained()) throw Error(ErrorCode::UntrainedModel, "generate called before training");
  if (counts.size() > m.classes.size()) throw Error(ErrorCode::LabelOutOfRange, "counts reference unknown classes");
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::vector<std::size_t> labels;
  labels.reserve(total);
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], c);

  Rng rng(seed);
  Matrix out(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(m.feature_width()));
  constexpr std::size_t kChunk = 1024;
  for (std::size_t begin = 0; begin < total; begin += kChunk) {
    const std::size_t rows = std::min(kChunk, total - begin);
    const Matrix z = sample_noise(rng, rows, m.config.noise_dim);
    const auto tape = generator_forward(m, z, std::span(labels).subspan(begin, rows));
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(rows)) = tape.output();
  }
  const auto prov = m.config.variant == Variant::cgan ? data::Provenance::cgan : data::Provenance::acgan;
  return data::Dataset::from_matrix(m.schema, m.classes, std::move(out), std::move(labels), prov);
}

struct ClassScores {
  Matrix probabilities;  // n x K, rows sum to 1
  std::vector<std::size_t> labels;
};

/// AC-GAN discriminator used as a K-way classifier: softmax of the class head,
/// ties broken to the lowest class index. The source head is ignored.
inline ClassScores discriminate_classes(const GanModel& m, const Matrix& x) {
  if (m.config.variant != Variant::acgan)
    throw Error(ErrorCode::WrongVariant, "only the AC-GAN discriminator carries a class head");
  const auto trunk = nn::forward(m.discriminator, x);
  const auto logits = nn::forward(m.class_head, trunk.output());
  ClassScores s{nn::softmax(logits.output()), {}};
  s.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < s.probabilities.cols(); ++k)
      if (s.probabilities(i, k) > s.probabilities(i, best)) best = k;
    s.labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return s;
}

inline ClassScores discriminate_classes(const GanModel& m, const data::Dataset& d) {
  if (!(d.schema() == m.schema)) throw Error(ErrorCode::SchemaMismatch, "dataset schema differs from the model");
  return discriminate_classes(m, d.features());
}

// ---- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const GanConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"noise_dim", c.noise_dim},
          {"embed_dim", c.embed_dim},
          {"classes", c.classes},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"generator_hidden", c.generator_hidden},
          {"discriminator_hidden", c.discriminator_hidden},
          {"leaky_alpha", c.leaky_alpha},
          {"init_std", c.init_std},
          {"embed_init_std", c.embed_init_std},
          {"non_saturating", c.non_saturating},
          {"fake_class_loss", c.fake_class_loss},
          {"seed", c.seed}};
}

inline GanConfig config_from_json(const nlohmann::json& j) {
  GanConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.noise_dim = j.at("noise_dim").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.generator_hidden = j.at("generator_hidden").get<std::vector<std::size_t>>();
  c.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<std::size_t>>();
  c.leaky_alpha = j.at("leaky_alpha").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.embed_init_std = j.at("embed_init_std").get<double>();
  c.non_saturating = j.at("non_saturating").get<bool>();
  c.fake_class_loss = j.at("fake_class_loss").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json to_json(const GanModel& m) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : m.schema.categories()) cats.push_back({{"name", c.name}, {"width", c.width}});
  nlohmann::json j{{"format", "caleb-gan-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"schema_hash", m.schema.hash()},
                   {"schema", cats},
                   {"classes", m.classes.labels()},
                   {"config", config_to_json(m.config)},
                   {"generator_embedding", nn::matrix_to_json(m.generator_embedding.table)},
                   {"generator", nn::to_json(m.generator)},
                   {"discriminator", nn::to_json(m.discriminator)},
                   {"generator_opt", nn::to_json(m.generator_opt)},
                   {"discriminator_opt", nn::to_json(m.discriminator_opt)},
                   {"rng_state", m.rng.state()},
                   {"epochs_trained", m.epochs_trained}};
  if (m.config.variant == Variant::cgan) {
    j["discriminator_embedding"] = nn::matrix_to_json(m.discriminator_embedding.table);
  } else {
    j["source_head"] = nn::to_json(m.source_head);
    j["class_head"] = nn::to_json(m.class_head);
  }
  return j;
}

inline GanModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "caleb-gan-checkpoint") throw Error(ErrorCode::BadConfig, "not a GAN checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw Error(ErrorCode::BadConfig, "unsupported checkpoint version");
  std::vector<data::Category> cats;
  for (const auto& c : j.at("schema")) cats.push_back({c.at("name").get<std::string>(), c.at("width").get<std::size_t>()});
  data::FeatureSchema schema(std::move(cats));
  if (schema.hash() != j.at("schema_hash").get<std::uint64_t>())
    throw Error(ErrorCode::SchemaMismatch, "checkpoint schema hash does not match its schema");
  data::ClassMap classes(j.at("classes").get<std::vector<std::string>>());
  GanModel m = build(config_from_json(j.at("config")), schema, classes);
  m.generator_embedding.table = nn::matrix_from_json(j.at("generator_embedding"));
  m.generator = nn::dense_net_from_json(j.at("generator"));
  m.discriminator = nn::dense_net_from_json(j.at("discriminator"));
  if (m.config.variant == Variant::cgan) {
    m.discriminator_embedding.table = nn::matrix_from_json(j.at("discriminator_embedding"));
  } else {
    m.source_head = nn::dense_net_from_json(j.at("source_head"));
    m.class_head = nn::dense_net_from_json(j.at("class_head"));
  }
  m.generator_opt = nn::adam_state_from_json(j.at("generator_opt"));
  m.discriminator_opt = nn::adam_state_from_json(j.at("discriminator_opt"));
  m.rng.set_state(j.at("rng_state").get<std::string>());
  m.epochs_trained = j.at("epochs_trained").get<std::size_t>();
  // Shapes must agree with what build() would have produced.
  const auto fresh = build(m.config, m.schema, m.classes);
  auto same_shape = [](const nn::DenseNet& a, const nn::DenseNet& b) {
    if (a.depth() != b.depth()) return false;
    for (std::size_t k = 0; k < a.depth(); ++k)
      if (a.layers()[k].in() != b.layers()[k].in() || a.layers()[k].out() != b.layers()[k].out()) return false;
    return true;
  };
  if (!same_shape(m.generator, fresh.generator) || !same_shape(m.discriminator, fresh.discriminator) ||
      (m.config.variant == Variant::acgan &&
       (!same_shape(m.source_head, fresh.source_head) || !same_shape(m.class_head, fresh.class_head))))
    throw Error(ErrorCode::ShapeMismatch, "checkpoint layer shapes disagree with its config");
  return m;
}

/// Writes the checkpoint; the standardizer that defines model space is stored
/// alongside when given so exported samples can be mapped back.
inline void save_checkpoint(const GanModel& m, const std::string& path,
                            const std::optional<data::Standardizer>& scaler = std::nullopt) {
  auto j = to_json(m);
  if (scaler) {
    j["standardizer"] = {{"mean", nn::matrix_to_json(scaler->mean)}, {"std", nn::matrix_to_json(scaler->std)}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << j.dump();
}

struct Checkpoint {
  GanModel model;
  std::optional<data::Standardizer> scaler;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  const auto j = nlohmann::json::parse(in);
  Checkpoint c{model_from_json(j), std::nullopt};
  if (j.contains("standardizer")) {
    data::Standardizer s;
    s.mean = nn::matrix_from_json(j["standardizer"].at("mean"));
    s.std = nn::matrix_from_json(j["standardizer"].at("std"));
    c.scaler = s;
  }
  return c;
}

}  // namespace caleb::gan
