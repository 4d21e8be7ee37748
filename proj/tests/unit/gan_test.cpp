#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mgf/error.hpp"
#include "mgf/gan/losses.hpp"
#include "mgf/gan/training.hpp"
#include "oracles.hpp"

using namespace mgf;
using namespace mgf::gan;
using ad::Tensor;

namespace {

std::vector<double> to_vec(const ad::ParamVector& p) { return {p.values().begin(), p.values().end()}; }

Tensor uniform_tensor(Rng& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({r, c});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Discriminator linear_critic(std::vector<double> w) {
  MlpSpec spec{{w.size(), 1}, Activation::kLeakyRelu, Activation::kIdentity, 0.2, false};
  auto p = Mlp::layout(spec);
  std::copy(w.begin(), w.end(), p.values().begin());
  return Discriminator(Mlp(spec, p), HeadKind::kCritic);
}

NetworkSpec small_spec(LossFamily f) {
  NetworkSpec s;
  s.latent_dim = 3;
  s.data_dim = 2;
  s.gen_hidden = {5};
  s.disc_hidden = {6};
  s.head = head_for(f);
  s.num_classes = f == LossFamily::kAcgan ? 4 : 0;
  return s;
}

// Loss value at discriminator parameters p, evaluated on a fresh graph.
double disc_loss_at(const LossConfig& cfg, const Discriminator& like, const std::vector<double>& p, const Tensor& real,
                    std::span<const int> labels, const Tensor& fake, std::span<const double> alpha) {
  auto params = like.params();
  std::copy(p.begin(), p.end(), params.values().begin());
  Discriminator d(Mlp(like.net().spec(), params), like.head(), like.num_classes());
  ad::Graph g;
  auto phi = d.net().bind(g);
  Rng unused(0);
  DiscriminatorBatch b{&real, labels, alpha};
  return loss_discriminator(g, cfg, d, phi, b, g.input(fake), unused).total.value().item();
}

double gen_loss_at(const LossConfig& cfg, const Generator& like, const std::vector<double>& p,
                   const Discriminator& d, const Tensor& z, std::span<const int> targets) {
  auto params = like.params();
  std::copy(p.begin(), p.end(), params.values().begin());
  Generator gen(Mlp(like.net().spec(), params));
  ad::Graph g;
  auto theta = gen.net().bind(g);
  auto phi = d.net().bind(g);
  return loss_generator(cfg, d, phi, gen.forward(theta, g.input(z)), targets).total.value().item();
}

}  // namespace

TEST_CASE("sample_latent") {
  Rng a(42), b(42);
  CHECK(sample_latent(a, 4, 3) == sample_latent(b, 4, 3));

  Rng rng(1234);
  auto z = sample_latent(rng, 10000, 1);
  const double m = std::accumulate(z.data().begin(), z.data().end(), 0.0) / 10000.0;
  double ss = 0.0;
  for (double v : z.data()) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / 9999.0);
  CHECK(m > -0.05);
  CHECK(m < 0.05);
  CHECK(sd > 0.95);
  CHECK(sd < 1.05);

  CHECK_THROWS_AS(sample_latent(rng, 0, 3), UsageError);
  CHECK_THROWS_AS(sample_latent(rng, 3, 0), UsageError);
}

TEST_CASE("generate") {
  Rng rng(3);
  NetworkSpec s;
  s.data_dim = 64;
  auto gen = make_generator(s, rng);
  auto z = sample_latent(rng, 7, 16);
  auto x = gen.generate(z);
  CHECK(x.shape() == ad::Shape{7, 64});
  CHECK(gen.generate(z) == x);
  for (double v : x.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(gen.generate(sample_latent(rng, 7, 15)), ShapeError);

  // Zero the final layer: tanh(0) everywhere.
  const auto& segs = gen.params().segments();
  for (std::size_t i = segs.size() - 2; i < segs.size(); ++i) gen.params().set_tensor(i, Tensor(segs[i].shape));
  for (double v : gen.generate(z).data()) CHECK(v == 0.0);
}

TEST_CASE("interpolate") {
  const Tensor real = Tensor::matrix(2, 2, {2, 0, 5, -1});
  const Tensor fake = Tensor::matrix(2, 2, {0, 2, 1, 3});
  const double ones[] = {1.0, 1.0}, zeros[] = {0.0, 0.0}, half[] = {0.5, 0.5};
  CHECK(interpolate(real, fake, ones) == real);
  CHECK(interpolate(real, fake, zeros) == fake);
  auto mid = interpolate(real, fake, half);
  CHECK(mid.at(0, 0) == 1.0);
  CHECK(mid.at(0, 1) == 1.0);
  CHECK_THROWS_AS(interpolate(real, Tensor({2, 3}), half), ShapeError);

  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    auto a = uniform_tensor(rng, 4, 3), b = uniform_tensor(rng, 4, 3);
    auto x = interpolate(a, b, rng);
    for (std::size_t i = 0; i < x.data().size(); ++i) {
      CHECK(x.data()[i] >= std::min(a.data()[i], b.data()[i]));
      CHECK(x.data()[i] <= std::max(a.data()[i], b.data()[i]));
    }
  }
}

TEST_CASE("discriminator loss: linear critic closed form") {
  auto d = linear_critic({1.0, 0.0});
  LossConfig cfg;
  const Tensor real = Tensor::matrix(1, 2, {1, 0});
  const Tensor fake = Tensor::matrix(1, 2, {0, 0});
  const double half[] = {0.5};
  ad::Graph g;
  auto phi = d.net().bind(g);
  Rng rng(0);
  auto parts = loss_discriminator(g, cfg, d, phi, {&real, {}, std::span<const double>(half)}, g.input(fake), rng);
  CHECK(parts.adversarial.value().item() == -1.0);
  REQUIRE(parts.penalty);
  CHECK(parts.penalty->value().item() == 0.0);
  CHECK(parts.total.value().item() == -1.0);
}

TEST_CASE("discriminator loss: symmetry and lambda 0") {
  Rng rng(21);
  auto s = small_spec(LossFamily::kWganGp);
  auto d = make_discriminator(s, rng);
  LossConfig plain;
  plain.lambda_gp = 0.0;
  for (int t = 0; t < 20; ++t) {
    auto a = uniform_tensor(rng, 5, 2), b = uniform_tensor(rng, 5, 2);
    ad::Graph g;
    auto phi = d.net().bind(g);
    auto same = loss_discriminator(g, LossConfig{}, d, phi, {&a, {}, std::nullopt}, g.input(a), rng);
    CHECK(same.adversarial.value().item() == 0.0);

    auto ab = loss_discriminator(g, plain, d, phi, {&a, {}, std::nullopt}, g.input(b), rng);
    auto ba = loss_discriminator(g, plain, d, phi, {&b, {}, std::nullopt}, g.input(a), rng);
    CHECK(ab.total.value().item() == -ba.total.value().item());
    CHECK_FALSE(ab.penalty.has_value());

    const Tensor da = d.net().evaluate(a), db = d.net().evaluate(b);
    double ma = 0.0, mb = 0.0;
    for (double v : da.data()) ma += v;
    for (double v : db.data()) mb += v;
    CHECK(ab.total.value().item() == doctest::Approx(mb / 5.0 - ma / 5.0).epsilon(1e-14));
  }
}

TEST_CASE("gradient penalty vanishes for a unit-norm linear critic") {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> w{n(rng), n(rng), n(rng)};
    const double norm = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    for (auto& v : w) v /= norm;
    auto d = linear_critic(w);
    auto real = uniform_tensor(rng, 4, 3), fake = uniform_tensor(rng, 4, 3);
    ad::Graph g;
    auto phi = d.net().bind(g);
    auto parts = loss_discriminator(g, LossConfig{}, d, phi, {&real, {}, std::nullopt}, g.input(fake), rng);
    CHECK(std::abs(parts.penalty->value().item()) < 1e-28);
  }
}

TEST_CASE("generator loss examples") {
  auto d = linear_critic({1.0, 0.0});
  ad::Graph g;
  auto phi = d.net().bind(g);
  CHECK(loss_generator(LossConfig{}, d, phi, g.input(Tensor::matrix(1, 2, {2, 0}))).total.value().item() == -2.0);

  auto zero = linear_critic({0.0, 0.0});
  auto phi0 = zero.net().bind(g);
  auto fake = g.input(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  CHECK(loss_generator(LossConfig{}, zero, phi0, fake).total.value().item() == 0.0);

  Discriminator prob(zero.net(), HeadKind::kProbability);
  LossConfig bce{LossFamily::kNonSaturatingBce};
  CHECK(loss_generator(bce, prob, phi0, fake).total.value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  CHECK_THROWS_AS(loss_generator(bce, zero, phi0, fake), ConfigError);
}

TEST_CASE("acgan loss examples") {
  // Zero weights give uniform logits over 10 classes.
  MlpSpec spec{{2, 11}, Activation::kLeakyRelu, Activation::kIdentity, 0.2, true};
  Discriminator d(Mlp(spec, Mlp::layout(spec)), HeadKind::kClassAware, 10);
  ad::Graph g;
  auto phi = d.net().bind(g);
  auto x = g.input(Tensor::matrix(2, 2, {0.3, -0.2, 1, 1}));
  const int labels[] = {3, 7};
  CHECK(loss_acgan(d, phi, x, labels).value().item() == doctest::Approx(std::log(10.0)).epsilon(1e-14));

  const int bad[] = {3, 10};
  CHECK_THROWS_AS(loss_acgan(d, phi, x, bad), TaskError);
  auto critic = linear_critic({1, 0});
  auto phic = critic.net().bind(g);
  CHECK_THROWS_AS(loss_acgan(critic, phic, x, labels), ConfigError);

  // Growing the margin on the correct logit drives the loss to zero.
  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 60.0}) {
    auto p = Mlp::layout(spec);
    Tensor b({1, 11});
    b.at(0, 1 + 3) = margin;
    p.set_tensor(1, b);
    Discriminator dm(Mlp(spec, p), HeadKind::kClassAware, 10);
    ad::Graph h;
    auto ph = dm.net().bind(h);
    const int three[] = {3};
    const double loss = loss_acgan(dm, ph, h.input(Tensor::matrix(1, 2, {0, 0})), three).value().item();
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-20);
}

TEST_CASE("discriminator gradients match central differences for every family") {
  Rng rng(77);
  for (auto family : {LossFamily::kWganGp, LossFamily::kNonSaturatingBce, LossFamily::kAcgan}) {
    for (int t = 0; t < 12; ++t) {
      auto s = small_spec(family);
      s.disc_hidden = {5};
      auto d = make_discriminator(s, rng);
      // Tanh hidden units keep the penalty smooth for differencing.
      MlpSpec ms = d.net().spec();
      ms.hidden = Activation::kTanh;
      d = Discriminator(Mlp(ms, d.params()), d.head(), d.num_classes());
      LossConfig cfg{family};
      auto real = uniform_tensor(rng, 4, 2), fake = uniform_tensor(rng, 4, 2);
      const std::vector<int> labels{0, 3, 1, 2};
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const std::vector<double> alpha{u(rng), u(rng), u(rng), u(rng)};

      ad::Graph g;
      auto phi = d.net().bind(g);
      Rng unused(0);
      auto parts = loss_discriminator(g, cfg, d, phi, {&real, labels, std::span<const double>(alpha)}, g.input(fake),
                                      unused);
      auto grad = collect_gradient(d.params(), g, parts.total, phi);
      auto fd = testing::central_difference(
          [&](const std::vector<double>& p) { return disc_loss_at(cfg, d, p, real, labels, fake, alpha); },
          to_vec(d.params()));
      INFO(to_string(family));
      CHECK(testing::max_relative_error(to_vec(grad), fd) < (family == LossFamily::kNonSaturatingBce ? 1e-4 : 1e-3));
    }
  }
}

TEST_CASE("generator gradients match central differences through the critic") {
  Rng rng(78);
  for (auto family : {LossFamily::kWganGp, LossFamily::kNonSaturatingBce, LossFamily::kAcgan}) {
    for (int t = 0; t < 12; ++t) {
      auto s = small_spec(family);
      s.gen_output = Activation::kTanh;
      auto pair = make_pair(s, LossConfig{family}, rng);
      MlpSpec gs = pair.gen.net().spec();
      gs.hidden = Activation::kTanh;
      Generator gen(Mlp(gs, pair.gen.params()));
      auto z = sample_latent(rng, 4, s.latent_dim);
      const std::vector<int> targets{1, 2};
      auto step = generator_gradient(LossConfig{family}, gen, pair.disc, z, targets);
      auto fd = testing::central_difference(
          [&](const std::vector<double>& p) { return gen_loss_at(LossConfig{family}, gen, p, pair.disc, z, targets); },
          to_vec(gen.params()));
      INFO(to_string(family));
      CHECK(testing::max_relative_error(to_vec(step.grad), fd) < 1e-4);
    }
  }
}

TEST_CASE("all loss families stay finite on random inputs") {
  Rng rng(1000);
  int trials = 0;
  for (auto family : {LossFamily::kWganGp, LossFamily::kNonSaturatingBce, LossFamily::kAcgan}) {
    auto s = small_spec(family);
    for (int t = 0; t < 334; ++t) {
      auto pair = make_pair(s, LossConfig{family}, rng);
      auto real = uniform_tensor(rng, 3, 2), fake = uniform_tensor(rng, 3, 2);
      const std::vector<int> labels{0, 1, 3};
      auto dg = discriminator_gradient(pair.loss, pair.disc, real, labels, fake, rng);
      auto gg = generator_gradient(pair.loss, pair.gen, pair.disc, uniform_tensor(rng, 3, 3), std::vector<int>{2});
      bool finite = std::isfinite(dg.loss) && std::isfinite(gg.loss);
      for (double v : dg.grad.values()) finite = finite && std::isfinite(v);
      for (double v : gg.grad.values()) finite = finite && std::isfinite(v);
      CHECK(finite);
      ++trials;
    }
  }
  CHECK(trials >= 1000);
}

TEST_CASE("head and family mismatches are config errors") {
  Rng rng(2);
  auto s = small_spec(LossFamily::kWganGp);
  auto d = make_discriminator(s, rng);
  CHECK_THROWS_AS(check_compatible(LossConfig{LossFamily::kAcgan}, d), ConfigError);
  CHECK_THROWS_AS(check_compatible(LossConfig{LossFamily::kWganGp, -1.0}, d), ConfigError);
  CHECK_NOTHROW(check_compatible(LossConfig{}, d));
  CHECK_THROWS_AS(Discriminator(d.net(), HeadKind::kClassAware, 3), ConfigError);
  CHECK_THROWS_AS(parse_loss_family("hinge"), ConfigError);
}
