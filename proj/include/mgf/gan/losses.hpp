#pragma once

#include <optional>
#include <span>
#include <string>

#include "mgf/ad/graph.hpp"
#include "mgf/gan/network.hpp"
#include "mgf/rng.hpp"

namespace mgf::gan {

enum class LossFamily { kWganGp, kNonSaturatingBce, kAcgan };

LossFamily parse_loss_family(const std::string& s);
std::string to_string(LossFamily f);

struct LossConfig {
  LossFamily family = LossFamily::kWganGp;
  double lambda_gp = 10.0;   // wgan_gp and acgan
  double lambda_cls = 1.0;   // acgan only
};

// The head each family expects: critic for wgan_gp, probability for
// nonsaturating_bce, class_aware for acgan.
HeadKind head_for(LossFamily f);
// ConfigError when the head does not fit the family or weights are negative.
void check_compatible(const LossConfig& cfg, const Discriminator& d);

// batch x d standard normal draws.
ad::Tensor sample_latent(Rng& rng, std::size_t batch, std::size_t d);

// Per-row alpha ~ U(0,1); returns alpha * real + (1 - alpha) * fake.
ad::Tensor interpolate(const ad::Tensor& real, const ad::Tensor& fake, Rng& rng);
ad::Tensor interpolate(const ad::Tensor& real, const ad::Tensor& fake, std::span<const double> alpha);

// Uniform distribution over `classes`, one row per sample.
ad::Tensor class_targets(std::size_t rows, std::size_t num_classes, std::span<const int> classes);

struct DiscriminatorBatch {
  const ad::Tensor* real = nullptr;
  std::span<const int> real_labels;  // acgan only
  std::optional<std::span<const double>> interp_alpha;  // forces the interpolation draws
};

struct LossParts {
  ad::Var total;
  ad::Var adversarial;
  std::optional<ad::Var> penalty;
  std::optional<ad::Var> classification;
};

// Critic objective, minimised: mean D(fake) - mean D(real) + lambda_gp * GP
// for wgan_gp/acgan (acgan adds lambda_cls * CE on the real labels);
// BCE on logits for nonsaturating_bce.
LossParts loss_discriminator(ad::Graph& g, const LossConfig& cfg, const Discriminator& d,
                             std::span<const ad::Var> phi, const DiscriminatorBatch& batch, ad::Var fake,
                             Rng& rng);

// -mean D(fake) for wgan_gp/acgan (acgan adds lambda_cls * CE towards the
// target classes); -mean log sigmoid D(fake) for nonsaturating_bce.
LossParts loss_generator(const LossConfig& cfg, const Discriminator& d, std::span<const ad::Var> phi,
                         ad::Var fake, std::span<const int> target_classes = {});

// Softmax cross-entropy of the class logits against one-hot labels.
ad::Var loss_acgan(const Discriminator& d, std::span<const ad::Var> phi, ad::Var x, std::span<const int> labels);
// Same against an explicit target distribution per row.
ad::Var loss_acgan(const Discriminator& d, std::span<const ad::Var> phi, ad::Var x, const ad::Tensor& targets);

}  // namespace mgf::gan
