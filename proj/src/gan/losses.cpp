#include "mgf/gan/losses.hpp"

#include <random>

#include "mgf/error.hpp"

namespace mgf::gan {

LossFamily parse_loss_family(const std::string& s) {
  if (s == "wgan_gp") return LossFamily::kWganGp;
  if (s == "nonsaturating_bce") return LossFamily::kNonSaturatingBce;
  if (s == "acgan") return LossFamily::kAcgan;
  throw ConfigError("unknown loss family '" + s + "' (expected wgan_gp, nonsaturating_bce or acgan)");
}

std::string to_string(LossFamily f) {
  switch (f) {
    case LossFamily::kWganGp: return "wgan_gp";
    case LossFamily::kNonSaturatingBce: return "nonsaturating_bce";
    case LossFamily::kAcgan: return "acgan";
  }
  return "?";
}

HeadKind head_for(LossFamily f) {
  switch (f) {
    case LossFamily::kWganGp: return HeadKind::kCritic;
    case LossFamily::kNonSaturatingBce: return HeadKind::kProbability;
    case LossFamily::kAcgan: return HeadKind::kClassAware;
  }
  return HeadKind::kCritic;
}

void check_compatible(const LossConfig& cfg, const Discriminator& d) {
  if (d.head() != head_for(cfg.family)) {
    throw ConfigError("loss family " + to_string(cfg.family) + " needs a " + to_string(head_for(cfg.family)) +
                      " head, discriminator has " + to_string(d.head()));
  }
  if (cfg.lambda_gp < 0.0 || cfg.lambda_cls < 0.0) throw ConfigError("loss weights must be non-negative");
}

ad::Tensor sample_latent(Rng& rng, std::size_t batch, std::size_t d) {
  if (batch == 0 || d == 0) throw UsageError("sample_latent: batch and latent dimension must be at least 1");
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Tensor z({batch, d});
  for (auto& v : z.data()) v = n(rng);
  return z;
}

ad::Tensor interpolate(const ad::Tensor& real, const ad::Tensor& fake, std::span<const double> alpha) {
  if (real.shape() != fake.shape()) {
    throw ShapeError("interpolate: real " + ad::shape_str(real.shape()) + " vs fake " + ad::shape_str(fake.shape()));
  }
  if (alpha.size() != real.rows()) throw ShapeError("interpolate: need one alpha per row");
  ad::Tensor out(real.shape());
  for (std::size_t i = 0; i < real.rows(); ++i) {
    const double a = alpha[i];
    for (std::size_t j = 0; j < real.cols(); ++j) out.at(i, j) = a * real.at(i, j) + (1.0 - a) * fake.at(i, j);
  }
  return out;
}

ad::Tensor interpolate(const ad::Tensor& real, const ad::Tensor& fake, Rng& rng) {
  if (real.shape() != fake.shape()) {
    throw ShapeError("interpolate: real " + ad::shape_str(real.shape()) + " vs fake " + ad::shape_str(fake.shape()));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> alpha(real.rows());
  for (auto& a : alpha) a = u(rng);
  return interpolate(real, fake, alpha);
}

ad::Tensor class_targets(std::size_t rows, std::size_t num_classes, std::span<const int> classes) {
  if (classes.empty()) throw ConfigError("class targets: no target classes");
  ad::Tensor t({rows, num_classes});
  const double w = 1.0 / static_cast<double>(classes.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (int c : classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
        throw TaskError("class label " + std::to_string(c) + " outside [0, " + std::to_string(num_classes) + ")");
      }
      t.at(i, static_cast<std::size_t>(c)) += w;
    }
  }
  return t;
}

ad::Var loss_acgan(const Discriminator& d, std::span<const ad::Var> phi, ad::Var x, const ad::Tensor& targets) {
  auto logits = d.class_logits(phi, x);
  return ad::softmax_cross_entropy(logits, x.graph()->constant(targets));
}

ad::Var loss_acgan(const Discriminator& d, std::span<const ad::Var> phi, ad::Var x, std::span<const int> labels) {
  if (d.head() != HeadKind::kClassAware) throw ConfigError("acgan loss needs a class-aware head");
  const std::size_t n = x.value().rows();
  if (labels.size() != n) {
    throw ShapeError("acgan loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  ad::Tensor t({n, d.num_classes()});
  for (std::size_t i = 0; i < n; ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= d.num_classes()) {
      throw TaskError("acgan loss: label " + std::to_string(c) + " outside [0, " + std::to_string(d.num_classes()) +
                      ")");
    }
    t.at(i, static_cast<std::size_t>(c)) = 1.0;
  }
  return loss_acgan(d, phi, x, t);
}

LossParts loss_discriminator(ad::Graph& g, const LossConfig& cfg, const Discriminator& d,
                             std::span<const ad::Var> phi, const DiscriminatorBatch& batch, ad::Var fake,
                             Rng& rng) {
  check_compatible(cfg, d);
  if (batch.real == nullptr || batch.real->rows() == 0 || fake.value().rows() == 0) {
    throw UsageError("loss_discriminator: empty batch");
  }
  const ad::Tensor& real = *batch.real;
  auto real_in = g.input(real);

  LossParts parts;
  if (cfg.family == LossFamily::kNonSaturatingBce) {
    auto real_logit = d.score(phi, real_in);
    auto fake_logit = d.score(phi, fake);
    parts.adversarial = ad::mean(ad::softplus(ad::scale(real_logit, -1.0))) + ad::mean(ad::softplus(fake_logit));
    parts.total = parts.adversarial;
    return parts;
  }

  auto real_score = d.score(phi, real_in);
  auto fake_score = d.score(phi, fake);
  parts.adversarial = ad::mean(fake_score) - ad::mean(real_score);
  parts.total = parts.adversarial;

  if (cfg.lambda_gp > 0.0) {
    ad::Tensor mixed = batch.interp_alpha ? interpolate(real, fake.value(), *batch.interp_alpha)
                                          : interpolate(real, fake.value(), rng);
    auto x_hat = g.input(std::move(mixed));
    auto grad = g.input_gradient(ad::sum(d.score(phi, x_hat)), x_hat);
    auto gp = ad::mean(ad::square(ad::add_scalar(ad::row_norm(grad), -1.0)));
    parts.penalty = gp;
    parts.total = parts.total + ad::scale(gp, cfg.lambda_gp);
  }

  if (cfg.family == LossFamily::kAcgan && cfg.lambda_cls > 0.0) {
    auto ce = loss_acgan(d, phi, real_in, batch.real_labels);
    parts.classification = ce;
    parts.total = parts.total + ad::scale(ce, cfg.lambda_cls);
  }
  return parts;
}

LossParts loss_generator(const LossConfig& cfg, const Discriminator& d, std::span<const ad::Var> phi,
                         ad::Var fake, std::span<const int> target_classes) {
  check_compatible(cfg, d);
  LossParts parts;
  auto score = d.score(phi, fake);
  if (cfg.family == LossFamily::kNonSaturatingBce) {
    parts.adversarial = ad::mean(ad::softplus(ad::scale(score, -1.0)));
  } else {
    parts.adversarial = ad::scale(ad::mean(score), -1.0);
  }
  parts.total = parts.adversarial;
  if (cfg.family == LossFamily::kAcgan && cfg.lambda_cls > 0.0) {
    auto ce = loss_acgan(d, phi, fake, class_targets(fake.value().rows(), d.num_classes(), target_classes));
    parts.classification = ce;
    parts.total = parts.total + ad::scale(ce, cfg.lambda_cls);
  }
  return parts;
}

}  // namespace mgf::gan
