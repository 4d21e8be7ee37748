#include "mgf/gan/training.hpp"

namespace mgf::gan {

GanPair make_pair(const NetworkSpec& spec, const LossConfig& loss, Rng& rng) {
  NetworkSpec s = spec;
  s.head = head_for(loss.family);
  GanPair p{make_generator(s, rng), make_discriminator(s, rng), loss};
  check_compatible(p.loss, p.disc);
  return p;
}

LatentSource default_latent_source() {
  return [](Rng& rng, std::size_t rows, std::size_t dim) { return sample_latent(rng, rows, dim); };
}

StepGradient discriminator_gradient(const LossConfig& cfg, const Discriminator& d, const ad::Tensor& real,
                                    std::span<const int> real_labels, const ad::Tensor& fake, Rng& rng) {
  ad::Graph g;
  auto phi = d.net().bind(g);
  DiscriminatorBatch batch{&real, real_labels, std::nullopt};
  auto parts = loss_discriminator(g, cfg, d, phi, batch, g.input(fake), rng);
  return {collect_gradient(d.params(), g, parts.total, phi), parts.total.value().item()};
}

StepGradient generator_gradient(const LossConfig& cfg, const Generator& gen, const Discriminator& scorer,
                                const ad::Tensor& z, std::span<const int> target_classes) {
  ad::Graph g;
  auto theta = gen.net().bind(g);
  auto phi = scorer.net().bind(g);
  auto fake = gen.forward(theta, g.input(z));
  auto parts = loss_generator(cfg, scorer, phi, fake, target_classes);
  return {collect_gradient(gen.params(), g, parts.total, theta), parts.total.value().item()};
}

}  // namespace mgf::gan
