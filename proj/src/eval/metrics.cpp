#include "mgf/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mgf/ad/optimizer.hpp"
#include "mgf/error.hpp"
#include "mgf/gan/losses.hpp"

namespace mgf::eval {
namespace {

double sq_dist(const ad::Tensor& a, std::size_t i, const ad::Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double d = a.at(i, c) - b.at(j, c);
    s += d * d;
  }
  return s;
}

// Shifts a row-major image by (dy, dx), filling with -1 (background).
void shift_image(std::span<const double> src, std::span<double> dst, std::size_t h, std::size_t w, int dy, int dx) {
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const long sr = static_cast<long>(r) - dy, sc = static_cast<long>(c) - dx;
      const bool inside = sr >= 0 && sc >= 0 && sr < static_cast<long>(h) && sc < static_cast<long>(w);
      dst[r * w + c] = inside ? src[static_cast<std::size_t>(sr) * w + static_cast<std::size_t>(sc)] : -1.0;
    }
  }
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::string fmt(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "NA"; }

}  // namespace

double sharpness(const ad::Tensor& samples, std::size_t height, std::size_t width) {
  if (samples.rank() != 2 || height < 3 || width < 3 || samples.cols() != height * width) {
    throw MetricError("sharpness: samples of shape " + ad::shape_str(samples.shape()) + " are not " +
                      std::to_string(height) + "x" + std::to_string(width) + " images");
  }
  if (samples.rows() == 0) throw MetricError("sharpness: no samples");
  double total = 0.0;
  for (std::size_t n = 0; n < samples.rows(); ++n) {
    const auto img = samples.row_span(n);
    double s = 0.0;
    for (std::size_t r = 1; r + 1 < height; ++r) {
      for (std::size_t c = 1; c + 1 < width; ++c) {
        const std::size_t i = r * width + c;
        const double lap = (img[i] - img[i - 1]) + (img[i] - img[i + 1]) + (img[i] - img[i - width]) +
                          (img[i] - img[i + width]);
        s += std::abs(lap);
      }
    }
    total += s / static_cast<double>((height - 2) * (width - 2)) / 8.0;
  }
  return std::clamp(total / static_cast<double>(samples.rows()), 0.0, 1.0);
}

double exp_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::exp(h);
}

double mmd(const ad::Tensor& x, const ad::Tensor& y, double bandwidth) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
    throw MetricError("mmd: incompatible sample shapes " + ad::shape_str(x.shape()) + " and " +
                      ad::shape_str(y.shape()));
  }
  const std::size_t m = x.rows(), n = y.rows();
  if (m < 2 || n < 2) throw MetricError("mmd: the unbiased estimator needs at least 2 samples per set");
  if (!(bandwidth > 0.0)) throw MetricError("mmd: bandwidth must be positive");
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  auto k = [&](const ad::Tensor& a, std::size_t i, const ad::Tensor& b, std::size_t j) {
    return std::exp(-sq_dist(a, i, b, j) * inv);
  };

  if (m == n) {
    // U-statistic over pairs: h = k(xi,xj) + k(yi,yj) - k(xi,yj) - k(xj,yi).
    // Identical sets cancel term by term and swapping x, y is exact.
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        s += (k(x, i, x, j) + k(y, i, y, j)) - (k(x, i, y, j) + k(x, j, y, i));
      }
    }
    return 2.0 * s / static_cast<double>(m * (m - 1));
  }

  auto within = [&](const ad::Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = i + 1; j < a.rows(); ++j) s += k(a, i, a, j);
    return 2.0 * s / static_cast<double>(a.rows() * (a.rows() - 1));
  };
  // Cross term always iterates the smaller set outermost so the result does
  // not depend on argument order.
  const ad::Tensor& small = m < n ? x : y;
  const ad::Tensor& large = m < n ? y : x;
  double cross = 0.0;
  for (std::size_t i = 0; i < small.rows(); ++i)
    for (std::size_t j = 0; j < large.rows(); ++j) cross += k(small, i, large, j);
  cross /= static_cast<double>(m * n);
  return (within(x) + within(y)) - 2.0 * cross;
}

double median_bandwidth(std::span<const ad::Tensor* const> sets) {
  std::vector<const ad::Tensor*> parts(sets.begin(), sets.end());
  std::vector<std::pair<const ad::Tensor*, std::size_t>> rows;
  for (const auto* t : parts)
    for (std::size_t i = 0; i < t->rows(); ++i) rows.emplace_back(t, i);
  if (rows.size() < 2) throw MetricError("median bandwidth: need at least 2 samples");
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      d.push_back(sq_dist(*rows[i].first, rows[i].second, *rows[j].first, rows[j].second));
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double h = std::sqrt(*mid);
  if (!(h > 0.0)) throw MetricError("median bandwidth: samples coincide");
  return h;
}

ReferenceClassifier::ReferenceClassifier(gan::Mlp net, std::size_t height, std::size_t width, double acc)
    : net_(std::move(net)), height_(height), width_(width), holdout_accuracy_(acc) {}

ad::Tensor ReferenceClassifier::predict_proba(const ad::Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim()) {
    throw MetricError("classifier expects rows of " + std::to_string(input_dim()) + " values, got " +
                      ad::shape_str(x.shape()));
  }
  ad::Tensor p = net_.evaluate(x);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) s += (v = std::exp(v - mx));
    for (double& v : row) v /= s;
  }
  return p;
}

std::vector<double> ReferenceClassifier::mean_proba(const ad::Tensor& x) const {
  const auto p = predict_proba(x);
  std::vector<double> mean(p.cols(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t c = 0; c < p.cols(); ++c) mean[c] += p.at(i, c);
  for (auto& v : mean) v /= static_cast<double>(p.rows());
  return mean;
}

double ReferenceClassifier::accuracy(const ad::Tensor& x, std::span<const int> labels) const {
  const auto p = predict_proba(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row_span(i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    hit += best == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(p.rows());
}

double ReferenceClassifier::diversity(const ad::Tensor& x) const { return exp_entropy(mean_proba(x)); }

ReferenceClassifier ReferenceClassifier::train(const tasks::Dataset& data, const ClassifierOptions& opts) {
  if (!data.is_image()) throw MetricError("reference classifier needs an image dataset");
  Rng rng(opts.seed);
  const std::size_t dim = data.dim, classes = data.num_classes();
  std::vector<std::pair<std::size_t, std::size_t>> index;  // (domain, row)
  for (std::size_t d = 0; d < data.domains.size(); ++d)
    for (std::size_t r = 0; r < data.domains[d]->size(); ++r) index.emplace_back(d, r);
  std::shuffle(index.begin(), index.end(), rng);
  const std::size_t n_test = static_cast<std::size_t>(std::round(opts.holdout * static_cast<double>(index.size())));
  const std::size_t n_train = index.size() - n_test;

  auto gather = [&](std::size_t begin, std::size_t end, ad::Tensor& x, std::vector<int>& y) {
    x = ad::Tensor({end - begin, dim});
    y.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& dom = *data.domains[index[i].first];
      const auto src = dom.samples.row_span(index[i].second);
      std::copy(src.begin(), src.end(), x.row_span(i - begin).begin());
      y[i - begin] = dom.cls.label;
    }
  };
  ad::Tensor train_x, test_x;
  std::vector<int> train_y, test_y;
  gather(0, n_train, train_x, train_y);
  gather(n_train, index.size(), test_x, test_y);

  gan::MlpSpec spec;
  spec.widths.push_back(dim);
  spec.widths.insert(spec.widths.end(), opts.hidden.begin(), opts.hidden.end());
  spec.widths.push_back(classes);
  spec.hidden = gan::Activation::kLeakyRelu;
  spec.output = gan::Activation::kIdentity;
  gan::Mlp net(spec, rng);
  ad::Optimizer opt({ad::OptimizerKind::kAdam, opts.lr});

  std::vector<std::size_t> order(n_train);
  std::uniform_int_distribution<int> shift(-1, 1);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < n_train; b += opts.batch) {
      const std::size_t e = std::min(n_train, b + opts.batch);
      ad::Tensor x({e - b, dim}), t({e - b, classes});
      for (std::size_t i = b; i < e; ++i) {
        const auto src = train_x.row_span(order[i]);
        auto dst = x.row_span(i - b);
        if (opts.shift_augment) {
          shift_image(src, dst, data.height, data.width, shift(rng), shift(rng));
        } else {
          std::copy(src.begin(), src.end(), dst.begin());
        }
        t.at(i - b, static_cast<std::size_t>(train_y[order[i]])) = 1.0;
      }
      ad::Graph g;
      auto bound = net.bind(g);
      auto loss = ad::softmax_cross_entropy(net.forward(bound, g.input(std::move(x))), g.constant(std::move(t)));
      opt.step(net.params(), gan::collect_gradient(net.params(), g, loss, bound));
    }
  }
  ReferenceClassifier clf(std::move(net), data.height, data.width, 0.0);
  clf.holdout_accuracy_ = n_test ? clf.accuracy(test_x, test_y) : 0.0;
  return clf;
}

void ReferenceClassifier::save(const std::filesystem::path& path) const {
  ad::save(net_.params(), path);
  std::ofstream meta(path.string() + ".txt");
  if (!meta) throw DataError("cannot write " + path.string() + ".txt");
  meta << "height = " << height_ << "\nwidth = " << width_ << "\nclasses = " << num_classes()
       << "\nholdout_accuracy = " << holdout_accuracy_ << "\nhidden =";
  for (std::size_t i = 1; i + 1 < net_.spec().widths.size(); ++i) meta << ' ' << net_.spec().widths[i];
  meta << '\n';
}

ReferenceClassifier ReferenceClassifier::load(const std::filesystem::path& path) {
  std::ifstream meta(path.string() + ".txt");
  if (!meta) throw DataError("cannot open " + path.string() + ".txt");
  std::size_t h = 0, w = 0, classes = 0;
  double acc = 0.0;
  std::vector<std::size_t> hidden;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    std::istringstream v(line.substr(eq + 1));
    if (key == "height") v >> h;
    else if (key == "width") v >> w;
    else if (key == "classes") v >> classes;
    else if (key == "holdout_accuracy") v >> acc;
    else if (key == "hidden") for (std::size_t x; v >> x;) hidden.push_back(x);
  }
  gan::MlpSpec spec;
  spec.widths.push_back(h * w);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(classes);
  spec.hidden = gan::Activation::kLeakyRelu;
  spec.output = gan::Activation::kIdentity;
  return ReferenceClassifier(gan::Mlp(spec, ad::load(path)), h, w, acc);
}

ReferenceClassifier ReferenceClassifier::load_or_train(const std::filesystem::path& path, const tasks::Dataset& data,
                                                       const ClassifierOptions& opts) {
  if (std::filesystem::exists(path)) {
    auto clf = load(path);
    if (clf.input_dim() == data.dim && clf.num_classes() == data.num_classes()) return clf;
  }
  auto clf = train(data, opts);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  clf.save(path);
  return clf;
}

const MetricsRow* MetricsReport::find(const std::string& model) const {
  for (const auto& r : rows)
    if (r.model == model) return &r;
  return nullptr;
}

std::string MetricsReport::csv() const {
  std::ostringstream os;
  os << "model,sharpness,diversity,mmd,epochs,meta_train_minutes,shots\n";
  for (const auto& r : rows) {
    os << r.model << ',' << fmt(r.sharpness) << ',' << fmt(r.diversity) << ',' << fmt(r.mmd) << ',' << fmt(r.epochs)
       << ',' << fmt(r.meta_train_minutes) << ',' << fmt(r.shots) << '\n';
  }
  return os.str();
}

std::string MetricsReport::class_csv() const {
  std::size_t classes = 0;
  for (const auto& r : rows) classes = std::max(classes, r.class_proba.size());
  if (classes == 0) return {};
  std::ostringstream os;
  os << "model";
  for (std::size_t c = 0; c < classes; ++c) os << ",p" << c;
  os << '\n';
  for (const auto& r : rows) {
    if (r.class_proba.empty()) continue;
    os << r.model;
    for (double p : r.class_proba) os << ',' << fmt(std::optional<double>(p));
    os << '\n';
  }
  return os.str();
}

std::string MetricsReport::table() const {
  const std::vector<std::string> head{"model", "sharpness", "diversity", "mmd", "epochs", "meta_train_minutes", "shots"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rows) {
    cells.push_back({r.model, fmt(r.sharpness), fmt(r.diversity), fmt(r.mmd), fmt(r.epochs),
                     fmt(r.meta_train_minutes), fmt(r.shots)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << row[c] << std::string(width[c] - row[c].size() + (c + 1 < row.size() ? 2 : 0), ' ');
    }
    os << '\n';
  }
  for (const auto& [task, h] : bandwidths) os << "mmd bandwidth (" << task << "): " << fmt(std::optional<double>(h)) << '\n';
  for (const auto& e : errors) os << "error: " << e << '\n';
  return os.str();
}

gan::GanPair reinitialize(const gan::GanPair& pair, Rng& rng) {
  gan::GanPair out = pair;
  out.gen = gan::Generator(gan::Mlp(pair.gen.net().spec(), rng));
  out.disc = gan::Discriminator(gan::Mlp(pair.disc.net().spec(), rng), pair.disc.head(), pair.disc.num_classes());
  return out;
}

MetricsReport adaptation_benchmark(const gan::GanPair& pair, const tasks::Dataset& data,
                                   const tasks::TaskPartition& partition, const BenchmarkConfig& cfg,
                                   const ReferenceClassifier* classifier) {
  if (partition.test.empty()) throw TaskError("benchmark: partition has no test tasks");
  if (cfg.samples < 2) throw ConfigError("benchmark: need at least 2 generated samples");
  MetricsReport report;
  const bool image = data.is_image();

  if (image && cfg.include_real) {
    std::vector<ad::Tensor> parts;
    for (const auto& d : data.domains) parts.push_back(d->samples);
    const auto all = ad::vstack(parts);
    MetricsRow real;
    real.model = "dataset";
    real.sharpness = sharpness(all, data.height, data.width);
    if (classifier) {
      real.class_proba = classifier->mean_proba(all);
      real.diversity = exp_entropy(real.class_proba);
    }
    report.rows.push_back(std::move(real));
  }

  const bool many = partition.test.size() > 1;
  for (std::size_t ti = 0; ti < partition.test.size(); ++ti) {
    const auto& task = partition.test[ti];
    const std::string suffix = many ? "@" + task.id() : "";
    try {
      Rng draw = derive_rng(cfg.seed, {ti, 0});
      const auto shots = task.draw_k(cfg.adapt.shots, draw);
      const auto classes = task.class_labels();
      Rng ra = derive_rng(cfg.seed, {ti, 1});
      const auto adapted = meta::adapt(pair, shots, classes, cfg.adapt, ra);
      Rng ri = derive_rng(cfg.seed, {ti, 2});
      const auto fresh = reinitialize(pair, ri);
      Rng rs = derive_rng(cfg.seed, {ti, 3});
      const auto scratch = meta::adapt(fresh, shots, classes, cfg.adapt, rs);
      Rng rz = derive_rng(cfg.seed, {ti, 4});
      const auto z = gan::sample_latent(rz, cfg.samples, pair.gen.latent_dim());

      struct Entry {
        std::string name;
        const gan::GanPair* p;
        ad::Tensor x;
        std::size_t epochs;
        double minutes;
        std::size_t shots;
      };
      std::vector<Entry> entries{
          {"adapted", &adapted, adapted.gen.generate(z), cfg.epochs, cfg.meta_train_minutes, cfg.adapt.shots},
          {"unadapted", &pair, pair.gen.generate(z), cfg.epochs, cfg.meta_train_minutes, 0},
          {"scratch", &scratch, scratch.gen.generate(z), 0, 0.0, cfg.adapt.shots}};

      std::optional<double> bandwidth;
      const auto target = task.pool().x;
      if (!image) {
        std::vector<const ad::Tensor*> pooled{&target};
        for (const auto& e : entries) pooled.push_back(&e.x);
        bandwidth = median_bandwidth(pooled);
        report.bandwidths.emplace_back(task.id(), *bandwidth);
      }
      for (auto& e : entries) {
        MetricsRow row;
        row.model = e.name + suffix;
        row.epochs = e.epochs;
        row.meta_train_minutes = e.minutes;
        row.shots = e.shots;
        if (image) {
          row.sharpness = sharpness(e.x, data.height, data.width);
          if (classifier) {
            row.class_proba = classifier->mean_proba(e.x);
            row.diversity = exp_entropy(row.class_proba);
          }
        } else {
          row.mmd = mmd(e.x, target, *bandwidth);
        }
        report.rows.push_back(std::move(row));
      }
    } catch (const Error& err) {
      report.errors.push_back(task.id() + ": " + err.what());
    }
  }
  return report;
}

}  // namespace mgf::eval
