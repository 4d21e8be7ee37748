#include <cmath>
#include <random>

#include "acceptance.hpp"
#include "mgf/ad/graph.hpp"
#include "mgf/gan/losses.hpp"
#include "mgf/gan/training.hpp"
#include "mgf/meta/meta.hpp"
#include "mgf/tasks/datasets.hpp"
#include "oracles.hpp"

namespace mgf::acceptance {
namespace {

using ad::ParamVector;
using ad::Tensor;
using namespace gan;

constexpr LossFamily kFamilies[] = {LossFamily::kWganGp, LossFamily::kNonSaturatingBce, LossFamily::kAcgan};

std::vector<double> to_vec(const ParamVector& p) { return {p.values().begin(), p.values().end()}; }

Tensor uniform_tensor(Rng& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({r, c});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Small pair with tanh hidden units so every loss is smooth in the parameters.
GanPair smooth_pair(LossFamily f, Rng& rng) {
  NetworkSpec s;
  s.latent_dim = 3;
  s.data_dim = 2;
  s.gen_hidden = {5};
  s.disc_hidden = {5};
  s.gen_output = Activation::kTanh;
  s.head = head_for(f);
  s.num_classes = f == LossFamily::kAcgan ? 4 : 0;
  auto pair = make_pair(s, LossConfig{f}, rng);
  MlpSpec gs = pair.gen.net().spec(), ds = pair.disc.net().spec();
  gs.hidden = Activation::kTanh;
  ds.hidden = Activation::kTanh;
  pair.gen = Generator(Mlp(gs, pair.gen.params()));
  pair.disc = Discriminator(Mlp(ds, pair.disc.params()), pair.disc.head(), pair.disc.num_classes());
  return pair;
}

double disc_loss_at(const LossConfig& cfg, const Discriminator& like, const std::vector<double>& p, const Tensor& real,
                    std::span<const int> labels, const Tensor& fake, std::span<const double> alpha) {
  auto params = like.params();
  std::copy(p.begin(), p.end(), params.values().begin());
  Discriminator d(Mlp(like.net().spec(), params), like.head(), like.num_classes());
  ad::Graph g;
  auto phi = d.net().bind(g);
  Rng unused(0);
  return loss_discriminator(g, cfg, d, phi, {&real, labels, alpha}, g.input(fake), unused).total.value().item();
}

double gen_loss_at(const LossConfig& cfg, const Generator& like, const std::vector<double>& p, const Discriminator& d,
                   const Tensor& z, std::span<const int> targets) {
  auto params = like.params();
  std::copy(p.begin(), p.end(), params.values().begin());
  Generator gen(Mlp(like.net().spec(), params));
  ad::Graph g;
  auto theta = gen.net().bind(g);
  auto phi = d.net().bind(g);
  return loss_generator(cfg, d, phi, gen.forward(theta, g.input(z)), targets).total.value().item();
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

bool all_zero(const ParamVector& p) {
  for (double v : p.values())
    if (v != 0.0) return false;
  return true;
}

struct ScriptedLatent {
  std::vector<double> values;
  std::size_t next = 0;
  LatentSource source() {
    return [this](Rng&, std::size_t rows, std::size_t dim) {
      Tensor z({rows, dim});
      for (auto& v : z.data()) v = values.at(next++ % values.size());
      return z;
    };
  }
};

GanPair small_pair(std::uint64_t seed, LossFamily family = LossFamily::kWganGp) {
  NetworkSpec s;
  s.latent_dim = 2;
  s.data_dim = 2;
  s.gen_hidden = {6};
  s.disc_hidden = {6};
  s.gen_output = Activation::kIdentity;
  s.num_classes = 4;
  Rng rng(seed);
  return make_pair(s, LossConfig{family}, rng);
}

tasks::Dataset small_family() {
  Rng rng(100);
  tasks::GaussianFamilyOptions opts;
  opts.n_classes = 4;
  opts.samples_per_class = 20;
  return tasks::synth_family_gaussian(opts, rng);
}

tasks::TaskPartition partition(const tasks::Dataset& data, std::set<int> held_out) {
  Rng rng(1);
  tasks::PartitionOptions opts;
  opts.held_out = std::move(held_out);
  return tasks::make_partition(data, opts, rng);
}

Generator linear_generator(double theta) {
  MlpSpec spec{{1, 1}, Activation::kIdentity, Activation::kIdentity, 0.2, false};
  auto p = Mlp::layout(spec);
  p.values()[0] = theta;
  return Generator(Mlp(spec, p));
}

Discriminator linear_critic(double phi) {
  MlpSpec spec{{1, 1}, Activation::kIdentity, Activation::kIdentity, 0.2, false};
  auto p = Mlp::layout(spec);
  p.values()[0] = phi;
  return Discriminator(Mlp(spec, p), HeadKind::kCritic);
}

}  // namespace

Outcome gradient_oracles() {
  Ledger ledger;
  Rng rng(2024);
  int instances = 0;
  double worst_penalised = 0.0, worst_other = 0.0;
  const std::vector<int> labels{0, 3, 1, 2};
  const std::vector<int> targets{1, 2};
  for (auto family : kFamilies) {
    const bool penalised = family != LossFamily::kNonSaturatingBce;
    for (int t = 0; t < 40; ++t) {
      auto pair = smooth_pair(family, rng);
      const LossConfig cfg{family};
      auto real = uniform_tensor(rng, 4, 2), fake = uniform_tensor(rng, 4, 2);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const std::vector<double> alpha{u(rng), u(rng), u(rng), u(rng)};

      ad::Graph g;
      auto phi = pair.disc.net().bind(g);
      Rng unused(0);
      auto parts = loss_discriminator(g, cfg, pair.disc, phi, {&real, labels, std::span<const double>(alpha)},
                                      g.input(fake), unused);
      auto grad = collect_gradient(pair.disc.params(), g, parts.total, phi);
      auto fd = testing::central_difference(
          [&](const std::vector<double>& p) { return disc_loss_at(cfg, pair.disc, p, real, labels, fake, alpha); },
          to_vec(pair.disc.params()));
      const double err_d = testing::max_relative_error(to_vec(grad), fd);
      (penalised ? worst_penalised : worst_other) = std::max(penalised ? worst_penalised : worst_other, err_d);
      ledger.expect(err_d < (penalised ? 1e-3 : 1e-4), to_string(family) + " discriminator error " + std::to_string(err_d));

      auto z = sample_latent(rng, 4, 3);
      auto step = generator_gradient(cfg, pair.gen, pair.disc, z, targets);
      auto fdg = testing::central_difference(
          [&](const std::vector<double>& p) { return gen_loss_at(cfg, pair.gen, p, pair.disc, z, targets); },
          to_vec(pair.gen.params()));
      const double err_g = testing::max_relative_error(to_vec(step.grad), fdg);
      worst_other = std::max(worst_other, err_g);
      ledger.expect(err_g < 1e-4, to_string(family) + " generator error " + std::to_string(err_g));
      instances += 2;
    }
  }

  // The penalty's second-order path against a closed-form critic.
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    testing::TanhCritic c;
    c.in = 3;
    c.hidden = 4;
    std::vector<double> flat(c.in * c.hidden + 2 * c.hidden + 1);
    for (auto& v : flat) v = u(rng);
    c.set_flat(flat);
    const std::size_t n = 3;
    std::vector<double> rows(n * c.in);
    for (auto& v : rows) v = u(rng);

    ad::Graph g;
    auto w1 = g.parameter(Tensor({c.in, c.hidden}, c.w));
    auto b1 = g.parameter(Tensor({1, c.hidden}, c.b));
    auto w2 = g.parameter(Tensor({c.hidden, 1}, c.v));
    auto b2 = g.parameter(Tensor({1, 1}, std::vector<double>{c.c}));
    auto x = g.input(Tensor({n, c.in}, rows));
    auto d = ad::add_row(ad::matmul(ad::tanh(ad::add_row(ad::matmul(x, w1), b1)), w2), b2);
    auto gx = g.input_gradient(ad::sum(d), x);
    auto penalty = ad::mean(ad::square(ad::add_scalar(ad::row_norm(gx), -1.0)));
    const ad::Var params[] = {w1, b1, w2, b2};
    auto grads = g.backward(penalty, params);
    std::vector<double> got;
    for (const auto& t : grads) got.insert(got.end(), t.data().begin(), t.data().end());
    auto fd = testing::central_difference(
        [&](const std::vector<double>& p) {
          testing::TanhCritic probe = c;
          probe.set_flat(p);
          return probe.penalty(rows, n);
        },
        flat);
    const double err = testing::max_relative_error(got, fd);
    worst_penalised = std::max(worst_penalised, err);
    ledger.expect(std::abs(penalty.value().item() - c.penalty(rows, n)) < 1e-12, "penalty value mismatch");
    ledger.expect(err < 1e-3, "penalty parameter gradient error " + std::to_string(err));
    ++instances;
  }

  std::ostringstream os;
  os << instances << " instances, max rel err " << worst_penalised << " with penalty, " << worst_other << " otherwise";
  return ledger.outcome(os.str());
}

Outcome algorithm_reductions() {
  Ledger ledger;
  auto data = small_family();
  double worst = 0.0;

  for (auto family : kFamilies) {
    auto pair = small_pair(3, family);
    tasks::Task task("t", {data.domain(1)});
    Rng draw(5);
    auto [train, dev] = tasks::split_train_dev(task.draw_k(8, draw), 4, draw);
    meta::MetaConfig cfg;
    cfg.algorithm = meta::Algorithm::kMaml;
    cfg.inner_steps = 0;
    ScriptedLatent za{{0.1, -0.4, 0.9, 1.3, -0.2, 0.05, 0.6, -1.1}};
    Rng rng(9);
    const int cls[] = {1};
    auto r = meta::inner_loop_maml(train, dev, pair, cls, cfg, rng, za.source());
    ScriptedLatent zb = za;
    zb.next = 0;
    auto src = zb.source();
    Rng ref(9);
    auto fake = pair.gen.generate(src(ref, 4, 2));
    auto gd = discriminator_gradient(pair.loss, pair.disc, dev.x, dev.labels, fake, ref);
    auto gg = generator_gradient(pair.loss, pair.gen, pair.disc, src(ref, 4, 2), cls);
    const double e = std::max(max_abs_diff(r.grad_d, gd.grad), max_abs_diff(r.grad_g, gg.grad));
    worst = std::max(worst, e);
    ledger.expect(e < 1e-12, "maml L=0 " + to_string(family));
  }

  {
    tasks::Task task("t", {data.domain(0)});
    auto pair = small_pair(4);
    meta::MetaConfig cfg;
    cfg.inner_steps = 0;
    Rng rng(1);
    auto r = meta::inner_loop_reptile(task, pair, cfg, rng);
    ledger.expect(all_zero(r.grad_d) && all_zero(r.grad_g), "reptile L=0 not zero");
    cfg.inner_steps = 3;
    cfg.inner_lr = 0.0;
    auto r0 = meta::inner_loop_reptile(task, pair, cfg, rng);
    ledger.expect(all_zero(r0.grad_d) && all_zero(r0.grad_g), "reptile alpha=0 not zero");
  }

  for (auto family : kFamilies) {
    auto pair = small_pair(6, family);
    tasks::Samples one{data.domain(2)->samples.slice_rows(3, 4), {2}};
    meta::MetaConfig cfg;
    cfg.inner_steps = 1;
    cfg.shots = 1;
    cfg.inner_lr = 0.05;
    ScriptedLatent z{{0.7, -0.3}};
    Rng rng(12);
    const int cls[] = {2};
    auto r = meta::inner_loop_reptile(one, pair, cls, cfg, rng, z.source());
    Rng ref(12);
    const Tensor zt = Tensor::matrix(1, 2, {0.7, -0.3});
    auto gd = discriminator_gradient(pair.loss, pair.disc, one.x, one.labels, pair.gen.generate(zt), ref);
    ad::param_scale(gd.grad, cfg.inner_lr);
    Discriminator stepped = pair.disc;
    stepped.params() = r.adapted_d;
    auto gg = generator_gradient(pair.loss, pair.gen, stepped, zt, cls);
    ad::param_scale(gg.grad, cfg.inner_lr);
    const double e = std::max(max_abs_diff(r.grad_d, gd.grad), max_abs_diff(r.grad_g, gg.grad));
    worst = std::max(worst, e);
    ledger.expect(e < 1e-12, "reptile L=1 K=1 " + to_string(family));
  }

  auto part = partition(data, {3});
  for (auto algo : {meta::Algorithm::kMaml, meta::Algorithm::kReptile}) {
    for (auto mode : {meta::OuterMode::kSequential, meta::OuterMode::kAveraged}) {
      auto pair = small_pair(10);
      const auto before = pair;
      meta::MetaConfig cfg;
      cfg.algorithm = algo;
      cfg.outer_mode = mode;
      cfg.outer_lr = 0.0;
      cfg.inner_steps = 2;
      cfg.task_batch = 2;
      meta::outer_loop(part, pair, cfg, 3, 77);
      ledger.expect(pair.disc.params() == before.disc.params() && pair.gen.params() == before.gen.params(),
                    "beta=0 moved parameters (" + meta::to_string(algo) + ")");
    }
  }

  {
    auto single = partition(data, {1, 2, 3});
    auto pair = small_pair(11);
    meta::MetaConfig cfg;
    cfg.outer_lr = 1.0;
    cfg.task_batch = 1;
    cfg.inner_steps = 2;
    cfg.inner_lr = 0.05;
    Rng rng = derive_rng(5, {0, 1});
    auto r = meta::inner_loop_reptile(single.train.at(0), pair, cfg, rng);
    meta::outer_loop(single, pair, cfg, 1, 5);
    ledger.expect(pair.disc.params() == r.adapted_d && pair.gen.params() == r.adapted_g,
                  "reptile beta=1 differs from the adapted clone");
  }

  std::ostringstream os;
  os << "max abs diff " << worst;
  return ledger.outcome(os.str());
}

Outcome hand_trace() {
  // G(z) = theta z, D(x) = phi x, lambda 10, one train and one dev sample.
  // Hand-executed values: grad_d 5.6, grad_g 0.446, phi_hat 1.285, theta_hat 0.757.
  Ledger ledger;
  GanPair pair{linear_generator(0.5), linear_critic(0.8), LossConfig{}};
  tasks::Samples train{Tensor::matrix(1, 1, {1.0}), {0}};
  tasks::Samples dev{Tensor::matrix(1, 1, {-0.5}), {0}};
  ScriptedLatent z{{0.3, -1.2, 0.7, 2.0, -0.4}};
  meta::MetaConfig cfg;
  cfg.algorithm = meta::Algorithm::kMaml;
  cfg.inner_lr = 0.1;
  cfg.inner_steps = 1;
  cfg.shots = 1;
  Rng rng(0);
  const int cls[] = {0};
  auto r = meta::inner_loop_maml(train, dev, pair, cls, cfg, rng, z.source());
  const double errs[] = {std::abs(r.grad_d.values()[0] - 5.6), std::abs(r.grad_g.values()[0] - 0.446),
                         std::abs(r.adapted_d.values()[0] - 1.285), std::abs(r.adapted_g.values()[0] - 0.757)};
  double worst = 0.0;
  for (double e : errs) {
    worst = std::max(worst, e);
    ledger.expect(e < 1e-12, "trace value off by " + std::to_string(e));
  }
  ledger.expect(z.next == 5, "expected five latent draws");
  std::ostringstream os;
  os << "max abs diff " << worst;
  return ledger.outcome(os.str());
}

}  // namespace mgf::acceptance
