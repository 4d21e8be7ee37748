#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "mgf/ad/tensor.hpp"
#include "mgf/gan/losses.hpp"
#include "mgf/rng.hpp"

namespace mgf::tasks {

struct ClassId {
  int label = 0;
  std::string name;
  friend bool operator==(const ClassId& a, const ClassId& b) { return a.label == b.label; }
  friend auto operator<=>(const ClassId& a, const ClassId& b) { return a.label <=> b.label; }
};

// All samples of one class, one per row. Immutable once built.
struct Domain {
  ClassId cls;
  ad::Tensor samples;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
};

using DomainPtr = std::shared_ptr<const Domain>;

struct Dataset {
  std::vector<DomainPtr> domains;
  std::size_t dim = 0;
  // Non-zero when samples are flattened grayscale images.
  std::size_t height = 0;
  std::size_t width = 0;

  bool is_image() const { return height > 0 && width > 0; }
  std::size_t num_classes() const;  // largest label + 1
  std::vector<ClassId> classes() const;
  DomainPtr domain(int label) const;
};

// Validates and wraps a list of domains.
Dataset make_dataset(std::vector<DomainPtr> domains, std::size_t height = 0, std::size_t width = 0);

struct Samples {
  ad::Tensor x;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Samples rows(std::span<const std::size_t> index) const;
};

// A class set, a sampler over the union of its domains, and the loss the
// task is trained with.
class Task {
 public:
  Task(std::string id, std::vector<DomainPtr> domains, gan::LossConfig loss = {});

  const std::string& id() const { return id_; }
  std::vector<ClassId> classes() const;
  std::vector<int> class_labels() const;
  const std::vector<DomainPtr>& domains() const { return domains_; }
  const gan::LossConfig& loss() const { return loss_; }
  std::size_t pool_size() const { return pool_size_; }
  std::size_t dim() const;

  // K distinct pooled samples, uniformly without replacement.
  Samples draw_k(std::size_t k, Rng& rng) const;
  Samples pool() const;

 private:
  std::string id_;
  std::vector<DomainPtr> domains_;
  gan::LossConfig loss_;
  std::size_t pool_size_ = 0;
};

struct TaskPartition {
  std::vector<Task> train;
  std::vector<Task> test;
  std::vector<double> train_weights;  // p(T) over train tasks
  std::vector<double> test_weights;

  std::set<int> train_classes() const;
  std::set<int> test_classes() const;
  const Task& sample_train(Rng& rng) const;
};

struct PartitionOptions {
  std::set<int> held_out;
  std::size_t classes_per_task = 1;
  std::size_t max_train_tasks = 0;  // 0: keep every subset
  gan::LossConfig loss;
};

// Train tasks are the r-subsets of the non-held-out classes; test tasks the
// r-subsets of the held-out ones (one task with all of them when fewer than r).
TaskPartition make_partition(const Dataset& data, const PartitionOptions& opts, Rng& rng);

// Text manifest: one line per task, "<split> <task id> <class names...>".
std::string partition_manifest(const TaskPartition& p);

// Two splits of `k` rows each, disjoint, drawn without replacement.
std::pair<Samples, Samples> split_train_dev(const Samples& samples, std::size_t k, Rng& rng);

}  // namespace mgf::tasks
