#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgf/ad/tensor.hpp"
#include "mgf/gan/network.hpp"
#include "mgf/meta/meta.hpp"
#include "mgf/tasks/task.hpp"

namespace mgf::eval {

// Mean over images of mean |4-neighbour Laplacian| / 8 on interior pixels,
// clamped to [0, 1]. Samples are rows of h*w values in [-1, 1].
double sharpness(const ad::Tensor& samples, std::size_t height, std::size_t width);

// exp(entropy) of a probability vector.
double exp_entropy(std::span<const double> p);

// Unbiased squared MMD with k(a, b) = exp(-|a - b|^2 / (2 h^2)). Equal-size
// sets use the paired U-statistic (cross terms with i == j left out), which
// is exactly 0 for identical sets; other sizes use the three-term form.
double mmd(const ad::Tensor& x, const ad::Tensor& y, double bandwidth);

// Median pairwise Euclidean distance over the rows of all given sets.
double median_bandwidth(std::span<const ad::Tensor* const> sets);

struct ClassifierOptions {
  std::vector<std::size_t> hidden{256};
  std::size_t epochs = 60;
  std::size_t batch = 64;
  double lr = 1e-3;
  double holdout = 0.2;
  // Random +-1 pixel shifts of training images.
  bool shift_augment = true;
  std::uint64_t seed = 1;
};

// Small MLP classifier used as the instrument for the diversity metric.
class ReferenceClassifier {
 public:
  ReferenceClassifier() = default;
  ReferenceClassifier(gan::Mlp net, std::size_t height, std::size_t width, double holdout_accuracy);

  // Trains on a shuffled split of `data`; the remainder measures accuracy.
  static ReferenceClassifier train(const tasks::Dataset& data, const ClassifierOptions& opts);
  // Loads `path` when present, otherwise trains and saves there.
  static ReferenceClassifier load_or_train(const std::filesystem::path& path, const tasks::Dataset& data,
                                           const ClassifierOptions& opts);
  void save(const std::filesystem::path& path) const;
  static ReferenceClassifier load(const std::filesystem::path& path);

  std::size_t num_classes() const { return net_.spec().output_dim(); }
  std::size_t input_dim() const { return net_.spec().input_dim(); }
  double holdout_accuracy() const { return holdout_accuracy_; }
  const gan::Mlp& net() const { return net_; }

  // Row-wise softmax probabilities, [n, classes].
  ad::Tensor predict_proba(const ad::Tensor& x) const;
  // Mean of predict_proba over rows.
  std::vector<double> mean_proba(const ad::Tensor& x) const;
  double accuracy(const ad::Tensor& x, std::span<const int> labels) const;
  // exp(entropy of the mean predicted distribution).
  double diversity(const ad::Tensor& x) const;

 private:
  gan::Mlp net_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  double holdout_accuracy_ = 0.0;
};

// One report row; unset metrics print as NA.
struct MetricsRow {
  std::string model;
  std::optional<double> sharpness;
  std::optional<double> diversity;
  std::optional<double> mmd;
  std::optional<std::size_t> epochs;
  std::optional<double> meta_train_minutes;
  std::optional<std::size_t> shots;
  // Mean predicted probability per class; image runs only.
  std::vector<double> class_proba;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  // MMD kernel bandwidth used for each test task.
  std::vector<std::pair<std::string, double>> bandwidths;
  std::vector<std::string> errors;

  const MetricsRow* find(const std::string& model) const;
  std::string csv() const;
  // Mean class probabilities per row; empty when no row has any.
  std::string class_csv() const;
  std::string table() const;
};

struct BenchmarkConfig {
  meta::AdaptConfig adapt;
  std::size_t samples = 256;
  std::uint64_t seed = 1;
  std::size_t epochs = 0;
  double meta_train_minutes = 0.0;
  bool include_real = true;
};

// Copy of `pair` with freshly initialised weights.
gan::GanPair reinitialize(const gan::GanPair& pair, Rng& rng);

// Per test task: K shots, then "adapted" (meta-trained pair fine-tuned),
// "unadapted" (meta-trained pair as is) and "scratch" (fresh pair
// fine-tuned for the same number of steps), each scored on the same
// latent batch. Image datasets report sharpness and diversity, others MMD
// to the task's samples. Failures of one task are recorded and skipped.
MetricsReport adaptation_benchmark(const gan::GanPair& pair, const tasks::Dataset& data,
                                   const tasks::TaskPartition& partition, const BenchmarkConfig& cfg,
                                   const ReferenceClassifier* classifier = nullptr);

}  // namespace mgf::eval
