#include "mgf/ad/optimizer.hpp"

#include <cmath>

#include "mgf/error.hpp"

namespace mgf::ad {

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0) || !std::isfinite(cfg_.lr)) {
    throw ConfigError("optimizer: learning rate must be positive, got " + std::to_string(cfg_.lr));
  }
}

void Optimizer::step(ParamVector& params, const ParamVector& grads) {
  if (!params.same_layout(grads)) throw StructuralError("optimizer step: gradient layout does not match parameters");
  auto p = params.values();
  auto g = grads.values();
  ++steps_;
  if (cfg_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg_.lr * g[i];
    return;
  }
  if (m_.empty()) {
    m_.assign(p.size(), 0.0);
    v_.assign(p.size(), 0.0);
  } else if (m_.size() != p.size()) {
    throw StructuralError("optimizer step: Adam moments sized for a different network");
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    p[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
  }
}

}  // namespace mgf::ad
