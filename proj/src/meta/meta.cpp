#include "mgf/meta/meta.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <optional>
#include <ostream>
#include <thread>

#include "mgf/error.hpp"

namespace mgf::meta {
namespace {

using ad::ParamVector;
using gan::GanPair;

// One network's inner-loop updates: plain scaled gradient steps, or Adam.
class Stepper {
 public:
  Stepper(ad::OptimizerKind kind, double lr, double clip) : kind_(kind), lr_(lr), clip_(clip) {
    if (kind_ == ad::OptimizerKind::kAdam) opt_.emplace(ad::OptimizerConfig{kind_, lr_});
  }

  void step(ParamVector& p, ParamVector g, std::size_t index) {
    if (clip_ > 0.0) {
      const double n = ad::param_norm(g);
      if (n > clip_) ad::param_scale(g, clip_ / n);
    }
    if (opt_) {
      opt_->step(p, g);
    } else {
      ad::param_axpy(p, -lr_, g);
    }
    for (double v : p.values()) {
      if (!std::isfinite(v)) throw NumericError("inner step " + std::to_string(index) + ": non-finite parameters");
    }
  }

 private:
  ad::OptimizerKind kind_;
  double lr_;
  double clip_;
  std::optional<ad::Optimizer> opt_;
};

template <typename F>
auto at_step(std::size_t index, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    const std::string what = e.what();
    if (what.rfind("inner step", 0) == 0) throw;
    throw NumericError("inner step " + std::to_string(index) + ": " + what);
  }
}

gan::StepGradient critic_step(const GanPair& pair, const gan::Discriminator& d, const gan::Generator& g,
                              const tasks::Samples& real, const gan::LatentSource& latent, Rng& rng) {
  const auto z = latent(rng, real.size(), g.latent_dim());
  return gan::discriminator_gradient(pair.loss, d, real.x, real.labels, g.generate(z), rng);
}

double finite_mean(const std::vector<StepRecord>& steps, double StepRecord::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : steps) {
    if (std::isfinite(s.*field)) {
      sum += s.*field;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

void check_finite(const ParamVector& p, const char* what) {
  for (double v : p.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string("outer update: non-finite ") + what + " parameters");
  }
}

void require_layout(const ParamVector& live, const ParamVector& grad, const char* what) {
  if (!live.same_layout(grad)) throw StructuralError(std::string("meta-gradient layout differs from the live ") + what);
}

// Candidate parameters after one outer update; not yet committed.
struct Update {
  ParamVector d;
  ParamVector g;
};

Update gradient_update(const GanPair& pair, const ParamVector& grad_d, const ParamVector& grad_g, double beta) {
  require_layout(pair.disc.params(), grad_d, "discriminator");
  require_layout(pair.gen.params(), grad_g, "generator");
  Update u{pair.disc.params(), pair.gen.params()};
  ad::param_axpy(u.d, -beta, grad_d);
  ad::param_axpy(u.g, -beta, grad_g);
  return u;
}

Update interpolation_update(const GanPair& pair, const ParamVector& target_d, const ParamVector& target_g,
                            double beta) {
  require_layout(pair.disc.params(), target_d, "discriminator");
  require_layout(pair.gen.params(), target_g, "generator");
  Update u{pair.disc.params(), pair.gen.params()};
  ad::param_scale(u.d, 1.0 - beta);
  ad::param_axpy(u.d, beta, target_d);
  ad::param_scale(u.g, 1.0 - beta);
  ad::param_axpy(u.g, beta, target_g);
  return u;
}

void commit(GanPair& pair, Update u) {
  check_finite(u.d, "discriminator");
  check_finite(u.g, "generator");
  pair.disc.params() = std::move(u.d);
  pair.gen.params() = std::move(u.g);
}

void apply_single(GanPair& pair, const InnerLoopResult& r, const MetaConfig& cfg) {
  if (cfg.outer_lr == 0.0) return;
  if (cfg.algorithm == Algorithm::kReptile) {
    commit(pair, interpolation_update(pair, r.adapted_d, r.adapted_g, cfg.outer_lr));
  } else {
    commit(pair, gradient_update(pair, r.grad_d, r.grad_g, cfg.outer_lr));
  }
}

// Mean of one field over results, summed in task-index order.
ParamVector mean_of(const std::vector<InnerLoopResult>& rs, ParamVector InnerLoopResult::*field) {
  ParamVector acc = (rs.front().*field).zeros_like();
  for (const auto& r : rs) ad::param_axpy(acc, 1.0, r.*field);
  ad::param_scale(acc, 1.0 / static_cast<double>(rs.size()));
  return acc;
}

void apply_mean(GanPair& pair, const std::vector<InnerLoopResult>& rs, const MetaConfig& cfg) {
  if (cfg.outer_lr == 0.0) return;
  if (cfg.algorithm == Algorithm::kReptile) {
    commit(pair, interpolation_update(pair, mean_of(rs, &InnerLoopResult::adapted_d),
                                      mean_of(rs, &InnerLoopResult::adapted_g), cfg.outer_lr));
  } else {
    commit(pair, gradient_update(pair, mean_of(rs, &InnerLoopResult::grad_d), mean_of(rs, &InnerLoopResult::grad_g),
                                 cfg.outer_lr));
  }
}

}  // namespace

Algorithm parse_algorithm(const std::string& s) {
  if (s == "maml") return Algorithm::kMaml;
  if (s == "reptile") return Algorithm::kReptile;
  throw ConfigError("unknown meta algorithm '" + s + "' (expected maml or reptile)");
}

std::string to_string(Algorithm a) { return a == Algorithm::kMaml ? "maml" : "reptile"; }

OuterMode parse_outer_mode(const std::string& s) {
  if (s == "sequential") return OuterMode::kSequential;
  if (s == "averaged") return OuterMode::kAveraged;
  throw ConfigError("unknown outer mode '" + s + "' (expected sequential or averaged)");
}

std::string to_string(OuterMode m) { return m == OuterMode::kSequential ? "sequential" : "averaged"; }

void MetaConfig::validate() const {
  if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) throw ConfigError("inner_lr must be non-negative");
  if (inner_optimizer == ad::OptimizerKind::kAdam && inner_lr == 0.0) {
    throw ConfigError("inner_lr must be positive with the adam inner optimizer");
  }
  if (!(outer_lr >= 0.0) || !std::isfinite(outer_lr)) throw ConfigError("outer_lr must be non-negative");
  if (shots == 0) throw ConfigError("shots must be at least 1");
  if (task_batch == 0) throw ConfigError("task_batch must be at least 1");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

InnerLoopResult inner_loop_maml(const tasks::Samples& train, const tasks::Samples& dev, const GanPair& pair,
                                std::span<const int> task_classes, const MetaConfig& cfg, Rng& rng,
                                const gan::LatentSource& latent) {
  cfg.validate();
  if (train.size() == 0 || dev.size() == 0) throw TaskError("maml inner loop: empty train or dev split");
  const std::size_t L = cfg.inner_steps;
  InnerLoopResult out;
  out.steps.resize(L + 1);
  for (std::size_t i = 0; i <= L; ++i) out.steps[i].inner_step = i;

  gan::Generator gen = pair.gen;
  gan::Discriminator disc = pair.disc;
  Stepper step_d(cfg.inner_optimizer, cfg.inner_lr, cfg.clip_norm);
  Stepper step_g(cfg.inner_optimizer, cfg.inner_lr, cfg.clip_norm);

  for (std::size_t i = 0; i < L; ++i) {
    at_step(i, [&] {
      auto s = critic_step(pair, disc, gen, train, latent, rng);
      step_d.step(disc.params(), std::move(s.grad), i);
      out.steps[i].loss_d = s.loss;
    });
  }

  at_step(L, [&] {
    auto s = critic_step(pair, disc, gen, dev, latent, rng);
    out.grad_d = std::move(s.grad);
    out.steps[L].loss_d = s.loss;
  });

  gan::Discriminator dev_disc = pair.disc;
  auto train_dev_disc = [&] {
    Stepper step_dev(cfg.inner_optimizer, cfg.inner_lr, cfg.clip_norm);
    for (std::size_t i = 0; i < L; ++i) {
      at_step(i, [&] {
        auto s = critic_step(pair, dev_disc, gen, dev, latent, rng);
        step_dev.step(dev_disc.params(), std::move(s.grad), i);
      });
    }
  };
  auto train_gen = [&] {
    for (std::size_t i = 0; i < L; ++i) {
      at_step(i, [&] {
        const auto z = latent(rng, train.size(), gen.latent_dim());
        auto s = gan::generator_gradient(pair.loss, gen, disc, z, task_classes);
        step_g.step(gen.params(), std::move(s.grad), i);
        out.steps[i].loss_g = s.loss;
      });
    }
  };
  if (cfg.gen_first) {
    train_gen();
    train_dev_disc();
  } else {
    train_dev_disc();
    train_gen();
  }

  at_step(L, [&] {
    const auto z = latent(rng, train.size(), gen.latent_dim());
    auto s = gan::generator_gradient(pair.loss, gen, dev_disc, z, task_classes);
    out.grad_g = std::move(s.grad);
    out.steps[L].loss_g = s.loss;
  });

  out.adapted_d = std::move(disc.params());
  out.adapted_g = std::move(gen.params());
  return out;
}

InnerLoopResult inner_loop_maml(const tasks::Task& task, const GanPair& pair, const MetaConfig& cfg, Rng& rng,
                                const gan::LatentSource& latent) {
  if (task.pool_size() < 2 * cfg.shots) {
    throw TaskError("maml needs " + std::to_string(2 * cfg.shots) + " samples from task " + task.id() + ", pool has " +
                    std::to_string(task.pool_size()));
  }
  const auto drawn = task.draw_k(2 * cfg.shots, rng);
  auto [train, dev] = tasks::split_train_dev(drawn, cfg.shots, rng);
  return inner_loop_maml(train, dev, pair, task.class_labels(), cfg, rng, latent);
}

InnerLoopResult inner_loop_reptile(const tasks::Samples& shots, const GanPair& pair, std::span<const int> task_classes,
                                   const MetaConfig& cfg, Rng& rng, const gan::LatentSource& latent) {
  cfg.validate();
  gan::Generator gen = pair.gen;
  gan::Discriminator disc = pair.disc;
  Stepper step_d(cfg.inner_optimizer, cfg.inner_lr, cfg.clip_norm);
  Stepper step_g(cfg.inner_optimizer, cfg.inner_lr, cfg.clip_norm);
  InnerLoopResult out;
  const std::size_t K = shots.size();
  std::vector<std::size_t> one(1);
  for (std::size_t i = 0; i < cfg.inner_steps; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t index = i * K + k;
      at_step(index, [&] {
        one[0] = k;
        const auto real = shots.rows(one);
        const auto z = latent(rng, 1, gen.latent_dim());
        auto sd = gan::discriminator_gradient(pair.loss, disc, real.x, real.labels, gen.generate(z), rng);
        step_d.step(disc.params(), std::move(sd.grad), index);
        auto sg = gan::generator_gradient(pair.loss, gen, disc, z, task_classes);
        step_g.step(gen.params(), std::move(sg.grad), index);
        out.steps.push_back({index, sd.loss, sg.loss});
      });
    }
  }
  out.grad_d = ad::param_sub(pair.disc.params(), disc.params());
  out.grad_g = ad::param_sub(pair.gen.params(), gen.params());
  out.adapted_d = std::move(disc.params());
  out.adapted_g = std::move(gen.params());
  return out;
}

InnerLoopResult inner_loop_reptile(const tasks::Task& task, const GanPair& pair, const MetaConfig& cfg, Rng& rng,
                                   const gan::LatentSource& latent) {
  const auto shots = task.draw_k(cfg.shots, rng);
  return inner_loop_reptile(shots, pair, task.class_labels(), cfg, rng, latent);
}

InnerLoopResult run_inner_loop(const tasks::Task& task, const GanPair& pair, const MetaConfig& cfg, Rng& rng) {
  return cfg.algorithm == Algorithm::kMaml ? inner_loop_maml(task, pair, cfg, rng)
                                           : inner_loop_reptile(task, pair, cfg, rng);
}

OuterResult outer_loop(const tasks::TaskPartition& tasks, GanPair& pair, const MetaConfig& cfg, std::size_t epochs,
                       std::uint64_t seed, const OuterHooks& hooks, std::size_t first_epoch) {
  cfg.validate();
  gan::check_compatible(pair.loss, pair.disc);
  if (tasks.train.empty()) throw TaskError("outer loop: no meta-training tasks");
  OuterResult result;

  try {
    for (std::size_t e = first_epoch; e < first_epoch + epochs; ++e) {
      Rng pick = derive_rng(seed, {e});
      std::vector<const tasks::Task*> batch(cfg.task_batch);
      for (auto& t : batch) t = &tasks.sample_train(pick);

      std::vector<InnerLoopResult> results(batch.size());
      auto run = [&](std::size_t i) {
        Rng rng = derive_rng(seed, {e, i + 1});
        results[i] = run_inner_loop(*batch[i], pair, cfg, rng);
      };

      if (cfg.outer_mode == OuterMode::kSequential) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
          run(i);
          apply_single(pair, results[i], cfg);
        }
      } else {
        const std::size_t workers = std::min(cfg.threads, batch.size());
        if (workers <= 1) {
          for (std::size_t i = 0; i < batch.size(); ++i) run(i);
        } else {
          std::vector<std::exception_ptr> errors(batch.size());
          std::vector<std::thread> pool;
          for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
              for (std::size_t i = w; i < batch.size(); i += workers) {
                try {
                  run(i);
                } catch (...) {
                  errors[i] = std::current_exception();
                }
              }
            });
          }
          for (auto& t : pool) t.join();
          for (auto& err : errors) {
            if (err) std::rethrow_exception(err);
          }
        }
        apply_mean(pair, results, cfg);
      }

      EpochRecord rec{e, 0.0, 0.0};
      for (std::size_t i = 0; i < batch.size(); ++i) {
        rec.mean_loss_d += finite_mean(results[i].steps, &StepRecord::loss_d);
        rec.mean_loss_g += finite_mean(results[i].steps, &StepRecord::loss_g);
        if (hooks.on_task) hooks.on_task({e, i, batch[i]->id(), results[i].steps});
      }
      rec.mean_loss_d /= static_cast<double>(batch.size());
      rec.mean_loss_g /= static_cast<double>(batch.size());
      result.epochs.push_back(rec);
      ++result.epochs_run;
      if (hooks.on_epoch && !hooks.on_epoch(rec, pair)) break;
    }
  } catch (const NumericError& err) {
    if (hooks.on_abort) hooks.on_abort(pair, err.what());
    throw;
  }
  return result;
}

GanPair adapt(const GanPair& pair, const tasks::Samples& shots, std::span<const int> task_classes,
              const AdaptConfig& cfg, Rng& rng) {
  GanPair out = pair;
  if (cfg.steps == 0) return out;
  if (shots.size() == 0) throw TaskError("adapt: no samples");
  ad::Optimizer opt_d(cfg.optimizer), opt_g(cfg.optimizer);
  const std::size_t fakes = cfg.fake_batch ? cfg.fake_batch : shots.size();
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    at_step(s, [&] {
      const auto z = gan::sample_latent(rng, shots.size(), out.gen.latent_dim());
      auto sd = gan::discriminator_gradient(out.loss, out.disc, shots.x, shots.labels, out.gen.generate(z), rng);
      opt_d.step(out.disc.params(), sd.grad);
      const auto zg = gan::sample_latent(rng, fakes, out.gen.latent_dim());
      auto sg = gan::generator_gradient(out.loss, out.gen, out.disc, zg, task_classes);
      opt_g.step(out.gen.params(), sg.grad);
    });
  }
  check_finite(out.disc.params(), "adapted discriminator");
  check_finite(out.gen.params(), "adapted generator");
  return out;
}

GanPair adapt(const GanPair& pair, const tasks::Task& task, const AdaptConfig& cfg, Rng& rng) {
  const auto shots = task.draw_k(cfg.shots, rng);
  return adapt(pair, shots, task.class_labels(), cfg, rng);
}

namespace {
std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}
}  // namespace

LossLog::LossLog(std::ostream& out, bool wall_clock) : out_(out), wall_clock_(wall_clock), start_ms_(now_ms()) {
  out_ << "epoch,task_index,inner_step,loss_d,loss_g,wall_ms\n";
}

void LossLog::write(const TaskRecord& r) {
  const std::int64_t ms = wall_clock_ ? now_ms() - start_ms_ : 0;
  for (const auto& s : r.steps) {
    out_ << r.epoch << ',' << r.task_index << ',' << s.inner_step << ',' << std::setprecision(17) << s.loss_d << ','
         << s.loss_g << ',' << ms << '\n';
  }
}

}  // namespace mgf::meta
