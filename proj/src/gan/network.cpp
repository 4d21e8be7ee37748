#include "mgf/gan/network.hpp"

#include <cmath>
#include <random>

#include "mgf/error.hpp"

namespace mgf::gan {

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

HeadKind parse_head(const std::string& s) {
  if (s == "critic") return HeadKind::kCritic;
  if (s == "probability") return HeadKind::kProbability;
  if (s == "class_aware") return HeadKind::kClassAware;
  throw ConfigError("unknown discriminator head '" + s + "'");
}

std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::kCritic: return "critic";
    case HeadKind::kProbability: return "probability";
    case HeadKind::kClassAware: return "class_aware";
  }
  return "?";
}

namespace {

ad::Var activate(Activation a, double slope, ad::Var x) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kRelu: return ad::relu(x);
    case Activation::kLeakyRelu: return ad::leaky_relu(x, slope);
    case Activation::kSigmoid: return ad::sigmoid(x);
  }
  return x;
}

void validate(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw ConfigError("mlp: need at least input and output widths");
  for (auto w : spec.widths) {
    if (w == 0) throw ConfigError("mlp: layer widths must be positive");
  }
}

}  // namespace

ad::ParamVector Mlp::layout(const MlpSpec& spec) {
  validate(spec);
  ad::ParamVector p;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    p.add_segment("l" + std::to_string(l) + ".w", {spec.widths[l], spec.widths[l + 1]});
    if (spec.bias) p.add_segment("l" + std::to_string(l) + ".b", {1, spec.widths[l + 1]});
  }
  return p;
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)), params_(layout(spec_)) {
  const std::size_t per_layer = spec_.bias ? 2 : 1;
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    const double fan = static_cast<double>(spec_.widths[l] + spec_.widths[l + 1]);
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan), std::sqrt(6.0 / fan));
    for (auto& w : params_.segment_values(l * per_layer)) w = u(rng);
  }
}

Mlp::Mlp(MlpSpec spec, ad::ParamVector params) : spec_(std::move(spec)), params_(std::move(params)) {
  if (!params_.same_layout(layout(spec_))) {
    throw StructuralError("mlp: parameter layout does not match the layer spec");
  }
}

std::vector<ad::Var> Mlp::bind(ad::Graph& g) const {
  std::vector<ad::Var> out;
  out.reserve(params_.segments().size());
  for (std::size_t i = 0; i < params_.segments().size(); ++i) out.push_back(g.parameter(params_.tensor(i)));
  return out;
}

ad::Var Mlp::forward(std::span<const ad::Var> bound, ad::Var x) const {
  const std::size_t per_layer = spec_.bias ? 2 : 1;
  if (bound.size() != spec_.layers() * per_layer) throw UsageError("mlp forward: wrong number of bound parameters");
  if (x.value().rank() != 2 || x.value().cols() != spec_.input_dim()) {
    throw ShapeError("mlp forward: expected input with " + std::to_string(spec_.input_dim()) + " columns, got " +
                     ad::shape_str(x.shape()));
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < spec_.layers(); ++l) {
    h = ad::matmul(h, bound[l * per_layer]);
    if (spec_.bias) h = ad::add_row(h, bound[l * per_layer + 1]);
    const bool last = l + 1 == spec_.layers();
    h = activate(last ? spec_.output : spec_.hidden, spec_.leaky_slope, h);
  }
  return h;
}

ad::Tensor Mlp::evaluate(const ad::Tensor& x) const {
  ad::Graph g;
  auto bound = bind(g);
  return forward(bound, g.input(x)).value();
}

ad::ParamVector collect_gradient(const ad::ParamVector& like, const ad::Graph& g, ad::Var loss,
                                 std::span<const ad::Var> bound) {
  auto grads = g.backward(loss, bound);
  ad::ParamVector out = like.zeros_like();
  for (std::size_t i = 0; i < grads.size(); ++i) out.set_tensor(i, grads[i]);
  return out;
}

Generator::Generator(Mlp net) : net_(std::move(net)) {}

ad::Var Generator::forward(std::span<const ad::Var> bound, ad::Var z) const {
  if (z.value().rank() != 2 || z.value().cols() != latent_dim()) {
    throw ShapeError("generate: latent must be [batch, " + std::to_string(latent_dim()) + "], got " +
                     ad::shape_str(z.shape()));
  }
  return net_.forward(bound, z);
}

ad::Tensor Generator::generate(const ad::Tensor& z) const {
  ad::Graph g;
  auto bound = net_.bind(g);
  return forward(bound, g.input(z)).value();
}

Discriminator::Discriminator(Mlp net, HeadKind head, std::size_t num_classes)
    : net_(std::move(net)), head_(head), num_classes_(num_classes) {
  const std::size_t expected = head == HeadKind::kClassAware ? num_classes + 1 : 1;
  if (head == HeadKind::kClassAware && num_classes == 0) {
    throw ConfigError("class-aware discriminator needs at least one class");
  }
  if (net_.spec().output_dim() != expected) {
    throw ConfigError("discriminator head '" + to_string(head) + "' needs output width " + std::to_string(expected) +
                      ", network has " + std::to_string(net_.spec().output_dim()));
  }
}

ad::Var Discriminator::forward(std::span<const ad::Var> bound, ad::Var x) const { return net_.forward(bound, x); }

ad::Var Discriminator::score(std::span<const ad::Var> bound, ad::Var x) const {
  auto out = forward(bound, x);
  return head_ == HeadKind::kClassAware ? ad::slice_cols(out, 0, 1) : out;
}

ad::Var Discriminator::class_logits(std::span<const ad::Var> bound, ad::Var x) const {
  if (head_ != HeadKind::kClassAware) throw ConfigError("class logits requested from a non-class-aware head");
  return ad::slice_cols(forward(bound, x), 1, num_classes_ + 1);
}

MlpSpec generator_spec(const NetworkSpec& s) {
  MlpSpec m;
  m.widths.push_back(s.latent_dim);
  m.widths.insert(m.widths.end(), s.gen_hidden.begin(), s.gen_hidden.end());
  m.widths.push_back(s.data_dim);
  m.hidden = Activation::kLeakyRelu;
  m.output = s.gen_output;
  m.leaky_slope = s.leaky_slope;
  return m;
}

MlpSpec discriminator_spec(const NetworkSpec& s) {
  MlpSpec m;
  m.widths.push_back(s.data_dim);
  m.widths.insert(m.widths.end(), s.disc_hidden.begin(), s.disc_hidden.end());
  m.widths.push_back(s.head == HeadKind::kClassAware ? s.num_classes + 1 : 1);
  m.hidden = Activation::kLeakyRelu;
  m.output = Activation::kIdentity;
  m.leaky_slope = s.leaky_slope;
  return m;
}

Generator make_generator(const NetworkSpec& s, Rng& rng) { return Generator(Mlp(generator_spec(s), rng)); }

Discriminator make_discriminator(const NetworkSpec& s, Rng& rng) {
  return Discriminator(Mlp(discriminator_spec(s), rng), s.head, s.num_classes);
}

}  // namespace mgf::gan
