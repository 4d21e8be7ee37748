#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mgf/error.hpp"
#include "mgf/eval/metrics.hpp"
#include "mgf/tasks/datasets.hpp"

using namespace mgf;
using namespace mgf::eval;
using ad::Tensor;

namespace {

const std::filesystem::path kData = MGF_DATA_DIR;

tasks::Dataset mnist14() {
  return tasks::load_idx(kData / "mnist5k/images-idx3-ubyte", kData / "mnist5k/labels-idx1-ubyte", {2});
}

// 3x3 box filter with edge clamping.
Tensor box_blur(const Tensor& x, std::size_t h, std::size_t w) {
  Tensor out(x.shape());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double s = 0.0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const auto rr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(r) + dr, 0, long(h) - 1));
            const auto cc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(c) + dc, 0, long(w) - 1));
            s += x.at(n, rr * w + cc);
          }
        }
        out.at(n, r * w + c) = s / 9.0;
      }
    }
  }
  return out;
}

Tensor gaussian_blob(Rng& rng, std::size_t n, double mx, double my, double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  Tensor t({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    t.at(i, 0) = mx + g(rng);
    t.at(i, 1) = my + g(rng);
  }
  return t;
}

// Brute-force unbiased estimators: the paired U-statistic for equal sizes,
// the three-term form otherwise.
double mmd_reference(const Tensor& x, const Tensor& y, double h) {
  auto k = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double d = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) d += (a.at(i, c) - b.at(j, c)) * (a.at(i, c) - b.at(j, c));
    return std::exp(-d / (2 * h * h));
  };
  const double m = static_cast<double>(x.rows()), n = static_cast<double>(y.rows());
  double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j)
      if (i != j) xx += k(x, i, x, j);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      if (i != j) yy += k(y, i, y, j);
  if (x.rows() == y.rows()) {
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < y.rows(); ++j)
        if (i != j) xy += k(x, i, y, j);
    return (xx + yy - 2 * xy) / (m * (m - 1));
  }
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) xy += k(x, i, y, j);
  return xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2 * xy / (m * n);
}

// Classifier on 2x2 "images" whose logits are a fixed linear map.
ReferenceClassifier toy_classifier() {
  gan::MlpSpec spec{{4, 3}, gan::Activation::kLeakyRelu, gan::Activation::kIdentity, 0.2, true};
  auto p = gan::Mlp::layout(spec);
  const double w[] = {3, 0, 0, 0, 3, 0, 0, 0, 3, 1, 1, 1};
  std::copy(std::begin(w), std::end(w), p.values().begin());
  return ReferenceClassifier(gan::Mlp(spec, p), 2, 2, 1.0);
}

}  // namespace

TEST_CASE("sharpness examples") {
  Tensor flat({2, 25}, 0.3);
  CHECK(sharpness(flat, 5, 5) == 0.0);
  Tensor checker({1, 25});
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) checker.at(0, r * 5 + c) = (r + c) % 2 ? 1.0 : -1.0;
  CHECK(sharpness(checker, 5, 5) == 1.0);
  Tensor neg = checker;
  for (auto& v : neg.data()) v = -v;
  CHECK(sharpness(neg, 5, 5) == sharpness(checker, 5, 5));
  CHECK_THROWS_AS(sharpness(Tensor({2, 24}), 5, 5), MetricError);
}

TEST_CASE("real images are sharper than blurred copies") {
  auto data = mnist14();
  for (const auto& d : data.domains) {
    const double s = sharpness(d->samples, 14, 14);
    CHECK(s > sharpness(box_blur(d->samples, 14, 14), 14, 14));
  }
}

TEST_CASE("exp_entropy bounds") {
  const double one[] = {0, 1, 0};
  CHECK(exp_entropy(one) == 1.0);
  std::vector<double> uniform(10, 0.1);
  CHECK(exp_entropy(uniform) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("diversity through a classifier") {
  auto clf = toy_classifier();
  Tensor x({6, 4}, 0.0);
  for (std::size_t i = 0; i < 6; ++i) x.at(i, i % 3) = 10.0;
  const double d = clf.diversity(x);
  CHECK(d == doctest::Approx(3.0).epsilon(1e-9));

  // Permutation and whole-set duplication leave it unchanged.
  std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  CHECK(clf.diversity(x.gather_rows(perm)) == doctest::Approx(d).epsilon(1e-14));
  const Tensor parts[] = {x, x};
  CHECK(clf.diversity(ad::vstack(parts)) == doctest::Approx(d).epsilon(1e-14));

  Tensor confident({5, 4}, 0.0);
  for (std::size_t i = 0; i < 5; ++i) confident.at(i, 1) = 40.0;
  CHECK(clf.diversity(confident) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(clf.diversity(Tensor({2, 3})), MetricError);
}

TEST_CASE("mmd examples") {
  Rng rng(31);
  auto x = gaussian_blob(rng, 60, 0, 0, 0.5);
  auto y = gaussian_blob(rng, 60, 2, 0, 0.5);
  auto z = gaussian_blob(rng, 45, 0, 0, 0.5);

  CHECK(std::abs(mmd(x, x, 1.0)) < 1e-9);
  CHECK(mmd(x, y, 1.0) == mmd(y, x, 1.0));
  CHECK(mmd(x, z, 0.7) == mmd(z, x, 0.7));
  // 4 sigma apart at bandwidth 1.
  CHECK(mmd(x, y, 1.0) > 0.5);
  CHECK(mmd(x, y, 1.0) == doctest::Approx(mmd_reference(x, y, 1.0)).epsilon(1e-12));
  CHECK(mmd(x, z, 0.7) == doctest::Approx(mmd_reference(x, z, 0.7)).epsilon(1e-12));

  for (int t = 0; t < 20; ++t) {
    auto a = gaussian_blob(rng, 30, 0, 0, 1);
    auto b = gaussian_blob(rng, 30, 1.5, 0, 1);
    CHECK(mmd(a, a, 1.0) >= -1e-9);
    CHECK(mmd(a, b, 1.0) > 0.0);
  }

  CHECK_THROWS_AS(mmd(Tensor({1, 2}), y, 1.0), MetricError);
  CHECK_THROWS_AS(mmd(x, Tensor({5, 3}), 1.0), MetricError);
}

TEST_CASE("median bandwidth") {
  const Tensor a = Tensor::matrix(2, 1, {0, 1});
  const Tensor b = Tensor::matrix(1, 1, {3});
  const Tensor* sets[] = {&a, &b};
  // distances 1, 3, 2 -> median 2
  CHECK(median_bandwidth(sets) == 2.0);
}

TEST_CASE("benchmark on the synthetic family") {
  Rng rng(2);
  tasks::GaussianFamilyOptions fo;
  fo.n_classes = 4;
  fo.samples_per_class = 40;
  auto data = tasks::synth_family_gaussian(fo, rng);
  tasks::PartitionOptions po;
  po.held_out = {3};
  auto part = tasks::make_partition(data, po, rng);
  gan::NetworkSpec s;
  s.latent_dim = 2;
  s.gen_hidden = {8};
  s.disc_hidden = {8};
  s.gen_output = gan::Activation::kIdentity;
  auto pair = gan::make_pair(s, gan::LossConfig{}, rng);

  BenchmarkConfig cfg;
  cfg.samples = 64;
  cfg.adapt.steps = 0;
  cfg.epochs = 12;
  cfg.meta_train_minutes = 0.5;
  auto rep = adaptation_benchmark(pair, data, part, cfg);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.errors.empty());
  CHECK(*rep.find("adapted")->mmd == *rep.find("unadapted")->mmd);
  CHECK(rep.find("adapted")->meta_train_minutes == 0.5);
  CHECK(rep.bandwidths.size() == 1);

  cfg.adapt.steps = 5;
  auto a = adaptation_benchmark(pair, data, part, cfg);
  auto b = adaptation_benchmark(pair, data, part, cfg);
  CHECK(a.csv() == b.csv());
  CHECK(*a.find("adapted")->mmd != *a.find("unadapted")->mmd);

  const std::string csv = a.csv();
  CHECK(csv.rfind("model,sharpness,diversity,mmd,epochs,meta_train_minutes,shots\n", 0) == 0);
  CHECK(csv.find("adapted,NA,NA,") != std::string::npos);
  CHECK(csv.find("unadapted,NA,NA,") != std::string::npos);
  CHECK(a.table().find("meta_train_minutes") != std::string::npos);

  // A task that cannot supply K shots is reported and skipped.
  cfg.adapt.shots = 1000;
  auto bad = adaptation_benchmark(pair, data, part, cfg);
  CHECK(bad.rows.empty());
  CHECK(bad.errors.size() == 1);
}
