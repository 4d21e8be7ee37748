#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgf/ad/param_vector.hpp"

namespace mgf::ad {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain gradient descent or bias-corrected Adam over a whole ParamVector.
// Adam moments are allocated lazily on the first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  void step(ParamVector& params, const ParamVector& grads);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace mgf::ad
