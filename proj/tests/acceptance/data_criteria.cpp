#include <algorithm>
#include <set>

#include "acceptance.hpp"
#include "mgf/error.hpp"
#include "mgf/tasks/datasets.hpp"
#include "mgf/tasks/task.hpp"

namespace mgf::acceptance {
namespace {

using ad::Tensor;
using namespace tasks;

std::vector<std::uint8_t> image_header(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> b{0, 0, 8, 3};
  for (std::uint32_t v : {count, rows, cols})
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
  return b;
}

Dataset tagged_dataset(std::size_t classes, std::size_t per_class) {
  std::vector<DomainPtr> domains;
  for (std::size_t c = 0; c < classes; ++c) {
    Tensor x({per_class, 2});
    for (std::size_t i = 0; i < per_class; ++i) {
      x.at(i, 0) = static_cast<double>(c);
      x.at(i, 1) = static_cast<double>(i);
    }
    domains.push_back(std::make_shared<const Domain>(Domain{{static_cast<int>(c), std::to_string(c)}, x}));
  }
  return make_dataset(domains);
}

template <typename F>
std::string data_error(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  } catch (...) {
    return "<other exception>";
  }
  return "<no exception>";
}

}  // namespace

Outcome data_layer() {
  Ledger ledger;

  auto good = image_header(2, 28, 28);
  good.resize(16 + 2 * 784, 0);
  good[16] = 255;
  const auto arr = parse_idx_images(good);
  ledger.expect(arr.count == 2 && arr.rows == 28 && arr.cols == 28 && arr.values.size() == 2 * 784,
                "good header dimensions");
  ledger.expect(arr.values[0] == 1.0 && arr.values[1] == -1.0, "pixel scaling endpoints");

  auto as_labels = image_header(1, 1, 1);
  as_labels.push_back(0);
  ledger.expect(data_error([&] { parse_idx_labels(as_labels); }) ==
                    "idx: bad magic 0x00000803 at byte offset 0 (expected 0x00000801 for labels)",
                "bad label magic message");
  const std::vector<std::uint8_t> as_images{0, 0, 8, 1, 0, 0, 0, 1, 7};
  ledger.expect(data_error([&] { parse_idx_images(as_images); }) ==
                    "idx: bad magic 0x00000801 at byte offset 0 (expected 0x00000803 for images)",
                "bad image magic message");

  auto short_pixels = image_header(2, 2, 2);
  short_pixels.resize(16 + 7);
  ledger.expect(data_error([&] { parse_idx_images(short_pixels); }) ==
                    "idx: truncated pixel payload at byte offset 23 (expected 24 bytes)",
                "truncated pixels message");
  const std::vector<std::uint8_t> short_header{0, 0, 8, 3, 0, 0};
  ledger.expect(data_error([&] { parse_idx_images(short_header); }) == "idx: truncated image count at byte offset 4",
                "truncated header message");
  const std::vector<std::uint8_t> short_labels{0, 0, 8, 1, 0, 0, 0, 3, 1, 2};
  ledger.expect(data_error([&] { parse_idx_labels(short_labels); }) ==
                    "idx: truncated label payload at byte offset 10 (expected 11 bytes)",
                "truncated labels message");

  // Partition disjointness under randomized held-out sets.
  auto data = tagged_dataset(8, 3);
  Rng rng(55);
  std::uniform_int_distribution<int> cls(0, 7), count(1, 6), r(1, 3);
  int partitions = 0;
  for (int trial = 0; trial < 300; ++trial) {
    PartitionOptions opts;
    const int n = count(rng);
    while (static_cast<int>(opts.held_out.size()) < n) opts.held_out.insert(cls(rng));
    opts.classes_per_task = static_cast<std::size_t>(r(rng));
    opts.max_train_tasks = trial % 2 ? 4 : 0;
    if (8 - opts.held_out.size() < opts.classes_per_task) continue;
    auto p = make_partition(data, opts, rng);
    bool ok = !p.train.empty() && !p.test.empty();
    for (const auto& t : p.train)
      for (int c : t.class_labels()) ok = ok && opts.held_out.count(c) == 0;
    for (const auto& t : p.test)
      for (int c : t.class_labels()) ok = ok && opts.held_out.count(c) == 1;
    const auto a = p.train_classes(), b = p.test_classes();
    std::vector<int> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    ledger.expect(ok && both.empty(), "partition overlap in trial " + std::to_string(trial));
    ++partitions;
  }

  // draw_k boundaries.
  auto small = tagged_dataset(3, 6);
  Task t("t", {small.domain(0), small.domain(2)});
  Rng dr(3);
  auto all = t.draw_k(12, dr);
  std::set<std::pair<double, double>> seen;
  for (std::size_t i = 0; i < all.size(); ++i) seen.insert({all.x.at(i, 0), all.x.at(i, 1)});
  ledger.expect(seen.size() == 12, "K = pool size must return the whole pool");
  bool over = false, zero = false;
  try {
    t.draw_k(13, dr);
  } catch (const TaskError& e) {
    over = std::string(e.what()).find("13") != std::string::npos;
  }
  try {
    t.draw_k(0, dr);
  } catch (const TaskError&) {
    zero = true;
  }
  ledger.expect(over, "K = pool + 1 must be a task error naming 13");
  ledger.expect(zero, "K = 0 must be a task error");
  Rng r1(8), r2(8);
  ledger.expect(t.draw_k(5, r1).x == t.draw_k(5, r2).x, "equal seeds give equal draws");
  Task single("single", {small.domain(1)});
  auto four = single.draw_k(4, dr);
  std::set<double> idx;
  bool member = true;
  for (std::size_t i = 0; i < 4; ++i) {
    member = member && four.x.at(i, 0) == 1.0 && four.labels[i] == 1;
    idx.insert(four.x.at(i, 1));
  }
  ledger.expect(member && idx.size() == 4, "four distinct samples of the held-out class");

  return ledger.outcome("idx fixtures, " + std::to_string(partitions) + " random partitions, draw_k boundaries");
}

}  // namespace mgf::acceptance
