#include "mgf/tasks/task.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "mgf/error.hpp"

namespace mgf::tasks {

std::size_t Dataset::num_classes() const {
  int mx = -1;
  for (const auto& d : domains) mx = std::max(mx, d->cls.label);
  return static_cast<std::size_t>(mx + 1);
}

std::vector<ClassId> Dataset::classes() const {
  std::vector<ClassId> out;
  for (const auto& d : domains) out.push_back(d->cls);
  return out;
}

DomainPtr Dataset::domain(int label) const {
  for (const auto& d : domains) {
    if (d->cls.label == label) return d;
  }
  throw TaskError("no domain for class " + std::to_string(label));
}

Dataset make_dataset(std::vector<DomainPtr> domains, std::size_t height, std::size_t width) {
  if (domains.empty()) throw DataError("dataset has no domains");
  Dataset ds;
  ds.dim = domains.front()->dim();
  std::set<int> seen;
  for (const auto& d : domains) {
    if (d->size() == 0) throw DataError("domain '" + d->cls.name + "' is empty");
    if (d->dim() != ds.dim) throw DataError("domain '" + d->cls.name + "' has a different sample dimension");
    if (d->cls.label < 0) throw DataError("negative class label");
    if (!seen.insert(d->cls.label).second) throw DataError("duplicate class " + std::to_string(d->cls.label));
  }
  if (height * width != 0 && height * width != ds.dim) throw DataError("image shape does not match sample dimension");
  std::sort(domains.begin(), domains.end(), [](const auto& a, const auto& b) { return a->cls < b->cls; });
  ds.domains = std::move(domains);
  ds.height = height;
  ds.width = width;
  return ds;
}

Samples Samples::rows(std::span<const std::size_t> index) const {
  Samples out;
  out.x = x.gather_rows(index);
  out.labels.reserve(index.size());
  for (auto i : index) out.labels.push_back(labels[i]);
  return out;
}

Task::Task(std::string id, std::vector<DomainPtr> domains, gan::LossConfig loss)
    : id_(std::move(id)), domains_(std::move(domains)), loss_(loss) {
  if (domains_.empty()) throw TaskError("task '" + id_ + "' has no classes");
  for (const auto& d : domains_) {
    if (d->dim() != domains_.front()->dim()) throw TaskError("task '" + id_ + "' mixes sample dimensions");
    pool_size_ += d->size();
  }
}

std::vector<ClassId> Task::classes() const {
  std::vector<ClassId> out;
  for (const auto& d : domains_) out.push_back(d->cls);
  return out;
}

std::vector<int> Task::class_labels() const {
  std::vector<int> out;
  for (const auto& d : domains_) out.push_back(d->cls.label);
  return out;
}

std::size_t Task::dim() const { return domains_.front()->dim(); }

Samples Task::draw_k(std::size_t k, Rng& rng) const {
  if (k == 0) throw TaskError("task '" + id_ + "': K must be at least 1");
  if (k > pool_size_) {
    throw TaskError("task '" + id_ + "': requested " + std::to_string(k) + " samples, pool holds " +
                    std::to_string(pool_size_));
  }
  // Partial Fisher-Yates over pooled indices.
  std::vector<std::size_t> idx(pool_size_);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool_size_ - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Samples out;
  out.x = ad::Tensor({k, dim()});
  out.labels.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = idx[i];
    for (const auto& d : domains_) {
      if (j < d->size()) {
        auto src = d->samples.row_span(j);
        std::copy(src.begin(), src.end(), out.x.row_span(i).begin());
        out.labels.push_back(d->cls.label);
        break;
      }
      j -= d->size();
    }
  }
  return out;
}

Samples Task::pool() const {
  std::vector<ad::Tensor> parts;
  Samples out;
  for (const auto& d : domains_) {
    parts.push_back(d->samples);
    out.labels.insert(out.labels.end(), d->size(), d->cls.label);
  }
  out.x = ad::vstack(parts);
  return out;
}

std::set<int> TaskPartition::train_classes() const {
  std::set<int> s;
  for (const auto& t : train)
    for (int c : t.class_labels()) s.insert(c);
  return s;
}

std::set<int> TaskPartition::test_classes() const {
  std::set<int> s;
  for (const auto& t : test)
    for (int c : t.class_labels()) s.insert(c);
  return s;
}

const Task& TaskPartition::sample_train(Rng& rng) const {
  if (train.empty()) throw TaskError("partition has no training tasks");
  std::discrete_distribution<std::size_t> pick(train_weights.begin(), train_weights.end());
  return train[pick(rng)];
}

namespace {

void combinations(const std::vector<DomainPtr>& pool, std::size_t r, std::size_t start, std::vector<DomainPtr>& cur,
                  std::vector<std::vector<DomainPtr>>& out) {
  if (cur.size() == r) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < pool.size(); ++i) {
    cur.push_back(pool[i]);
    combinations(pool, r, i + 1, cur, out);
    cur.pop_back();
  }
}

std::string task_id(const char* prefix, const std::vector<DomainPtr>& ds) {
  std::string id = prefix;
  for (const auto& d : ds) id += "-" + std::to_string(d->cls.label);
  return id;
}

}  // namespace

TaskPartition make_partition(const Dataset& data, const PartitionOptions& opts, Rng& rng) {
  if (opts.classes_per_task == 0) throw ConfigError("classes per task must be at least 1");
  std::vector<DomainPtr> train_pool, test_pool;
  for (int h : opts.held_out) {
    bool found = false;
    for (const auto& d : data.domains) found = found || d->cls.label == h;
    if (!found) throw ConfigError("held-out class " + std::to_string(h) + " is not in the dataset");
  }
  for (const auto& d : data.domains) {
    (opts.held_out.contains(d->cls.label) ? test_pool : train_pool).push_back(d);
  }
  if (train_pool.empty()) throw ConfigError("held-out classes exhaust the dataset; nothing left to meta-train on");
  if (train_pool.size() < opts.classes_per_task) {
    throw ConfigError("only " + std::to_string(train_pool.size()) + " training classes for tasks of " +
                      std::to_string(opts.classes_per_task) + " classes");
  }

  std::vector<std::vector<DomainPtr>> train_sets, test_sets;
  std::vector<DomainPtr> cur;
  combinations(train_pool, opts.classes_per_task, 0, cur, train_sets);
  if (opts.max_train_tasks > 0 && train_sets.size() > opts.max_train_tasks) {
    std::vector<std::size_t> idx(train_sets.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opts.max_train_tasks);
    std::sort(idx.begin(), idx.end());
    std::vector<std::vector<DomainPtr>> kept;
    for (auto i : idx) kept.push_back(train_sets[i]);
    train_sets = std::move(kept);
  }
  if (!test_pool.empty()) {
    if (test_pool.size() < opts.classes_per_task) {
      test_sets.push_back(test_pool);
    } else {
      combinations(test_pool, opts.classes_per_task, 0, cur, test_sets);
    }
  }

  TaskPartition p;
  for (auto& s : train_sets) p.train.emplace_back(task_id("train", s), s, opts.loss);
  for (auto& s : test_sets) p.test.emplace_back(task_id("test", s), s, opts.loss);
  p.train_weights.assign(p.train.size(), 1.0 / static_cast<double>(p.train.size()));
  if (!p.test.empty()) p.test_weights.assign(p.test.size(), 1.0 / static_cast<double>(p.test.size()));
  return p;
}

std::string partition_manifest(const TaskPartition& p) {
  std::ostringstream os;
  auto emit = [&](const char* split, const std::vector<Task>& ts) {
    for (const auto& t : ts) {
      os << split << ' ' << t.id();
      for (const auto& c : t.classes()) os << ' ' << c.name;
      os << '\n';
    }
  };
  emit("train", p.train);
  emit("test", p.test);
  return os.str();
}

std::pair<Samples, Samples> split_train_dev(const Samples& samples, std::size_t k, Rng& rng) {
  if (k == 0) throw TaskError("split_train_dev: K must be at least 1");
  if (samples.size() < 2 * k) {
    throw TaskError("split_train_dev: need " + std::to_string(2 * k) + " samples for K=" + std::to_string(k) +
                    ", have " + std::to_string(samples.size()));
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::span<const std::size_t> all(idx);
  return {samples.rows(all.subspan(0, k)), samples.rows(all.subspan(k, k))};
}

}  // namespace mgf::tasks
