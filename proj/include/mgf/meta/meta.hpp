#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mgf/ad/optimizer.hpp"
#include "mgf/gan/training.hpp"
#include "mgf/tasks/task.hpp"

namespace mgf::meta {

enum class Algorithm { kMaml, kReptile };
enum class OuterMode { kSequential, kAveraged };

Algorithm parse_algorithm(const std::string& s);
std::string to_string(Algorithm a);
OuterMode parse_outer_mode(const std::string& s);
std::string to_string(OuterMode m);

struct MetaConfig {
  Algorithm algorithm = Algorithm::kReptile;
  double inner_lr = 0.01;    // alpha
  double outer_lr = 0.1;     // beta
  std::size_t inner_steps = 1;  // L
  std::size_t shots = 4;     // K
  std::size_t task_batch = 4;
  OuterMode outer_mode = OuterMode::kSequential;
  // Inner updates are plain gradient steps unless set to Adam (lr = inner_lr).
  ad::OptimizerKind inner_optimizer = ad::OptimizerKind::kSgd;
  // Run the MAML generator updates before training the dev discriminator.
  bool gen_first = false;
  // Rescale inner gradients whose norm exceeds this; 0 disables.
  double clip_norm = 0.0;
  // Worker threads for averaged mode; 1 keeps everything on the caller.
  std::size_t threads = 1;

  void validate() const;
};

struct StepRecord {
  std::size_t inner_step = 0;
  double loss_d = std::numeric_limits<double>::quiet_NaN();
  double loss_g = std::numeric_limits<double>::quiet_NaN();
};

struct InnerLoopResult {
  ad::ParamVector grad_d;  // applied to phi
  ad::ParamVector grad_g;  // applied to theta
  ad::ParamVector adapted_d;  // phi-hat after the inner loop
  ad::ParamVector adapted_g;  // theta-hat after the inner loop
  std::vector<StepRecord> steps;
};

// First-order MAML inner loop with a dev-trained discriminator:
//   1. L critic steps of phi-hat on `train` against fakes from theta-hat
//   2. grad_d: critic loss on `dev` at (theta-hat, phi-hat)
//   3. phi-dev cloned from the original phi, L critic steps on `dev`
//   4. L generator steps of theta-hat scored by phi-hat
//   5. grad_g: generator loss at theta-hat scored by phi-dev
// gen_first swaps 3 and 4. The pair passed in is never modified.
InnerLoopResult inner_loop_maml(const tasks::Samples& train, const tasks::Samples& dev, const gan::GanPair& pair,
                                std::span<const int> task_classes, const MetaConfig& cfg, Rng& rng,
                                const gan::LatentSource& latent = gan::default_latent_source());
// Draws 2K samples from the task and splits them before running the above.
InnerLoopResult inner_loop_maml(const tasks::Task& task, const gan::GanPair& pair, const MetaConfig& cfg, Rng& rng,
                                const gan::LatentSource& latent = gan::default_latent_source());

// Reptile inner loop: L sweeps over K drawn samples, one critic step and one
// generator step per sample; returns phi - phi-hat and theta - theta-hat.
InnerLoopResult inner_loop_reptile(const tasks::Samples& shots, const gan::GanPair& pair,
                                   std::span<const int> task_classes, const MetaConfig& cfg, Rng& rng,
                                   const gan::LatentSource& latent = gan::default_latent_source());
InnerLoopResult inner_loop_reptile(const tasks::Task& task, const gan::GanPair& pair, const MetaConfig& cfg, Rng& rng,
                                   const gan::LatentSource& latent = gan::default_latent_source());

InnerLoopResult run_inner_loop(const tasks::Task& task, const gan::GanPair& pair, const MetaConfig& cfg, Rng& rng);

struct TaskRecord {
  std::size_t epoch = 0;
  std::size_t task_index = 0;
  std::string task_id;
  std::vector<StepRecord> steps;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss_d = 0.0;
  double mean_loss_g = 0.0;
};

struct OuterHooks {
  std::function<void(const TaskRecord&)> on_task;
  // Called after each epoch's updates; return false to stop early.
  std::function<bool(const EpochRecord&, const gan::GanPair&)> on_epoch;
  // Called with the last good state before a numeric error is rethrown.
  std::function<void(const gan::GanPair&, const std::string& reason)> on_abort;
};

struct OuterResult {
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> epochs;
};

// Meta-training. Epoch e samples task_batch tasks with derive_rng(seed, {e});
// task i of that epoch runs its inner loop with derive_rng(seed, {e, i + 1}).
// MAML updates phi <- phi - beta * grad. Reptile updates are written as
// phi <- (1 - beta) * phi + beta * phi-hat, the same rule arranged so that
// beta = 1 lands exactly on the adapted parameters.
OuterResult outer_loop(const tasks::TaskPartition& tasks, gan::GanPair& pair, const MetaConfig& cfg,
                       std::size_t epochs, std::uint64_t seed, const OuterHooks& hooks = {},
                       std::size_t first_epoch = 0);

struct AdaptConfig {
  std::size_t shots = 4;
  std::size_t steps = 200;
  ad::OptimizerConfig optimizer{ad::OptimizerKind::kAdam, 1e-3, 0.5, 0.9};
  // Fakes per step; 0 uses `shots`.
  std::size_t fake_batch = 0;
};

// Fine-tunes a copy of `pair` on `shots` samples with alternating critic and
// generator steps over the whole K-sample batch.
gan::GanPair adapt(const gan::GanPair& pair, const tasks::Samples& shots, std::span<const int> task_classes,
                   const AdaptConfig& cfg, Rng& rng);
gan::GanPair adapt(const gan::GanPair& pair, const tasks::Task& task, const AdaptConfig& cfg, Rng& rng);

// CSV writer for per-step training records. With wall_clock off the time
// column is written as 0 so logs of identical runs match byte for byte.
class LossLog {
 public:
  LossLog(std::ostream& out, bool wall_clock);
  void write(const TaskRecord& r);

 private:
  std::ostream& out_;
  bool wall_clock_;
  std::int64_t start_ms_;
};

}  // namespace mgf::meta
