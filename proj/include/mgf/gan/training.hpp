#pragma once

#include <functional>
#include <span>

#include "mgf/ad/param_vector.hpp"
#include "mgf/gan/losses.hpp"
#include "mgf/gan/network.hpp"

namespace mgf::gan {

struct GanPair {
  Generator gen;
  Discriminator disc;
  LossConfig loss;
};

GanPair make_pair(const NetworkSpec& spec, const LossConfig& loss, Rng& rng);

// Source of latent batches; tests substitute fixed values.
using LatentSource = std::function<ad::Tensor(Rng&, std::size_t rows, std::size_t dim)>;
LatentSource default_latent_source();

struct StepGradient {
  ad::ParamVector grad;
  double loss = 0.0;
};

// Gradient of the discriminator loss w.r.t. d's parameters, fakes held fixed.
StepGradient discriminator_gradient(const LossConfig& cfg, const Discriminator& d, const ad::Tensor& real,
                                    std::span<const int> real_labels, const ad::Tensor& fake, Rng& rng);

// Gradient of the generator loss w.r.t. g's parameters at latent z, scored by `scorer`.
StepGradient generator_gradient(const LossConfig& cfg, const Generator& g, const Discriminator& scorer,
                                const ad::Tensor& z, std::span<const int> target_classes);

}  // namespace mgf::gan
