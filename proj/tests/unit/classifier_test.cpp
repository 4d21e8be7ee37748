#include <filesystem>

#include "doctest.h"
#include "mgf/eval/metrics.hpp"
#include "mgf/tasks/datasets.hpp"

using namespace mgf;

TEST_CASE("reference classifier reaches the accuracy bar and scores the dataset as diverse") {
  const std::filesystem::path data_dir = MGF_DATA_DIR;
  auto data = tasks::load_idx(data_dir / "mnist5k/images-idx3-ubyte", data_dir / "mnist5k/labels-idx1-ubyte", {2});
  auto clf = eval::ReferenceClassifier::load_or_train(MGF_CLASSIFIER_CACHE, data, {});
  INFO("held-out accuracy " << clf.holdout_accuracy());
  CHECK(clf.holdout_accuracy() >= 0.95);

  std::vector<ad::Tensor> parts;
  for (const auto& d : data.domains) parts.push_back(d->samples);
  const double div = clf.diversity(ad::vstack(parts));
  INFO("dataset diversity " << div);
  CHECK(div >= 9.5);
  CHECK(div <= 10.0);

  auto again = eval::ReferenceClassifier::load(MGF_CLASSIFIER_CACHE);
  CHECK(again.net().params() == clf.net().params());
  CHECK(again.holdout_accuracy() == doctest::Approx(clf.holdout_accuracy()));
}
