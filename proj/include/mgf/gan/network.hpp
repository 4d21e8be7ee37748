#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mgf/ad/graph.hpp"
#include "mgf/ad/param_vector.hpp"
#include "mgf/rng.hpp"

namespace mgf::gan {

enum class Activation { kIdentity, kTanh, kRelu, kLeakyRelu, kSigmoid };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

struct MlpSpec {
  // Input width, hidden widths..., output width.
  std::vector<std::size_t> widths;
  Activation hidden = Activation::kLeakyRelu;
  Activation output = Activation::kIdentity;
  double leaky_slope = 0.2;
  bool bias = true;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Fully connected network whose weights live in one ParamVector. Segments
// are "l<i>.w" ([in,out]) and, with bias, "l<i>.b" ([1,out]).
class Mlp {
 public:
  Mlp() = default;
  // Glorot-uniform weights, zero biases.
  Mlp(MlpSpec spec, Rng& rng);
  Mlp(MlpSpec spec, ad::ParamVector params);

  static ad::ParamVector layout(const MlpSpec& spec);

  const MlpSpec& spec() const { return spec_; }
  ad::ParamVector& params() { return params_; }
  const ad::ParamVector& params() const { return params_; }

  // One parameter leaf per segment.
  std::vector<ad::Var> bind(ad::Graph& g) const;
  ad::Var forward(std::span<const ad::Var> bound, ad::Var x) const;
  ad::Tensor evaluate(const ad::Tensor& x) const;

 private:
  MlpSpec spec_;
  ad::ParamVector params_;
};

// Backward from `loss` into the bound parameter leaves, packed with the
// layout of `like`.
ad::ParamVector collect_gradient(const ad::ParamVector& like, const ad::Graph& g, ad::Var loss,
                                 std::span<const ad::Var> bound);

class Generator {
 public:
  Generator() = default;
  explicit Generator(Mlp net);

  std::size_t latent_dim() const { return net_.spec().input_dim(); }
  std::size_t output_dim() const { return net_.spec().output_dim(); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  ad::ParamVector& params() { return net_.params(); }
  const ad::ParamVector& params() const { return net_.params(); }

  ad::Var forward(std::span<const ad::Var> bound, ad::Var z) const;
  ad::Tensor generate(const ad::Tensor& z) const;

 private:
  Mlp net_;
};

enum class HeadKind {
  kCritic,       // one unbounded score
  kProbability,  // one logit, read through a sigmoid
  kClassAware,   // real/fake score followed by one logit per class
};

HeadKind parse_head(const std::string& s);
std::string to_string(HeadKind h);

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(Mlp net, HeadKind head, std::size_t num_classes = 0);

  HeadKind head() const { return head_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t arity() const { return net_.spec().output_dim(); }
  std::size_t input_dim() const { return net_.spec().input_dim(); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  ad::ParamVector& params() { return net_.params(); }
  const ad::ParamVector& params() const { return net_.params(); }

  // Raw head output, [n, arity].
  ad::Var forward(std::span<const ad::Var> bound, ad::Var x) const;
  // Real/fake column, [n, 1].
  ad::Var score(std::span<const ad::Var> bound, ad::Var x) const;
  // Class logits, [n, num_classes]; class-aware heads only.
  ad::Var class_logits(std::span<const ad::Var> bound, ad::Var x) const;

 private:
  Mlp net_;
  HeadKind head_ = HeadKind::kCritic;
  std::size_t num_classes_ = 0;
};

struct NetworkSpec {
  std::size_t latent_dim = 16;
  std::size_t data_dim = 2;
  std::vector<std::size_t> gen_hidden{64, 128};
  std::vector<std::size_t> disc_hidden{128, 64};
  Activation gen_output = Activation::kTanh;
  HeadKind head = HeadKind::kCritic;
  std::size_t num_classes = 0;
  double leaky_slope = 0.2;
};

MlpSpec generator_spec(const NetworkSpec& s);
MlpSpec discriminator_spec(const NetworkSpec& s);
Generator make_generator(const NetworkSpec& s, Rng& rng);
Discriminator make_discriminator(const NetworkSpec& s, Rng& rng);

}  // namespace mgf::gan
