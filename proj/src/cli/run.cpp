#include "mgf/cli/run.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mgf/ad/param_vector.hpp"
#include "mgf/error.hpp"
#include "mgf/eval/metrics.hpp"
#include "mgf/meta/meta.hpp"
#include "mgf/tasks/datasets.hpp"

namespace mgf::cli {
namespace {

namespace fs = std::filesystem;

// Stream tags for derive_rng, kept apart from the outer loop's {epoch, task}.
constexpr std::uint64_t kInitStream = 0xFFFF'FFFF'0000'0001ULL;
constexpr std::uint64_t kPartitionStream = 0xFFFF'FFFF'0000'0002ULL;
constexpr std::uint64_t kAdaptStream = 0xFFFF'FFFF'0000'0003ULL;
constexpr std::uint64_t kSampleStream = 0xFFFF'FFFF'0000'0004ULL;

std::ostream& out(const RunOptions& o) { return o.out ? *o.out : std::cout; }

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunConfig apply_options(RunConfig cfg, const RunOptions& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.single_thread) cfg.meta.threads = 1;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  return cfg;
}

void write_samples(const fs::path& stem, const ad::Tensor& x, const tasks::Dataset& data) {
  if (data.is_image()) {
    write_pgm(stem.string() + ".pgm", x, data.height, data.width,
              static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.rows())))));
  } else {
    write_scatter(stem.string() + ".csv", x);
  }
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const TaskError*>(&e) ||
      dynamic_cast<const MetricError*>(&e)) {
    return kExitData;
  }
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
      dynamic_cast<const StructuralError*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
    return kExitConfig;
  }
  return kExitOther;
}

tasks::Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.data.source == "idx") {
    if (cfg.data.images.empty() || cfg.data.labels.empty()) {
      throw ConfigError("data.source = idx needs data.images and data.labels");
    }
    return tasks::load_idx(cfg.data.images, cfg.data.labels, {cfg.data.downscale});
  }
  Rng rng(cfg.data.seed);
  return tasks::synth_family_gaussian(cfg.data.gaussian, rng);
}

tasks::TaskPartition build_partition(const RunConfig& cfg, const tasks::Dataset& data) {
  tasks::PartitionOptions po;
  po.held_out = cfg.data.held_out;
  if (po.held_out.empty()) po.held_out.insert(data.domains.back()->cls.label);
  po.classes_per_task = cfg.data.classes_per_task;
  po.max_train_tasks = cfg.data.max_train_tasks;
  po.loss = cfg.loss;
  Rng rng = derive_rng(cfg.data.seed, {kPartitionStream});
  return tasks::make_partition(data, po, rng);
}

gan::NetworkSpec network_spec(const RunConfig& cfg, std::size_t data_dim, std::size_t num_classes) {
  gan::NetworkSpec s = cfg.model;
  s.data_dim = data_dim;
  s.head = gan::head_for(cfg.loss.family);
  s.num_classes = s.head == gan::HeadKind::kClassAware ? num_classes : 0;
  return s;
}

gan::GanPair initial_pair(const RunConfig& cfg, const tasks::Dataset& data) {
  Rng rng = derive_rng(cfg.seed, {kInitStream});
  return gan::make_pair(network_spec(cfg, data.dim, data.num_classes()), cfg.loss, rng);
}

void save_checkpoint(const fs::path& prefix, const Checkpoint& c) {
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  ad::save(c.pair.gen.params(), prefix.string() + ".gen.mgpv");
  ad::save(c.pair.disc.params(), prefix.string() + ".disc.mgpv");
  std::ostringstream m;
  m << "# checkpoint manifest\n" << c.config.to_text();
  m << "checkpoint.epoch = " << c.epoch << '\n';
  m << "checkpoint.meta_train_minutes = " << c.meta_train_minutes << '\n';
  m << "checkpoint.data_dim = " << c.data_dim << '\n';
  m << "checkpoint.num_classes = " << c.num_classes << '\n';
  m << "checkpoint.head = " << gan::to_string(c.pair.disc.head()) << '\n';
  auto layers = [&](const char* name, const ad::ParamVector& p) {
    m << "checkpoint." << name << "_layers =";
    for (const auto& s : p.segments()) m << ' ' << s.name << ad::shape_str(s.shape);
    m << '\n';
  };
  layers("gen", c.pair.gen.params());
  layers("disc", c.pair.disc.params());
  m << "checkpoint.created = " << timestamp() << '\n';
  write_text(prefix.string() + ".manifest", m.str());
}

Checkpoint load_checkpoint(const fs::path& prefix) {
  const fs::path manifest = prefix.string() + ".manifest";
  if (!fs::exists(manifest)) throw DataError("checkpoint manifest " + manifest.string() + " not found");
  auto file = ConfigFile::load(manifest);
  Checkpoint c;
  c.epoch = file.count("checkpoint.epoch", 0);
  c.meta_train_minutes = file.real("checkpoint.meta_train_minutes", 0.0);
  c.data_dim = file.count("checkpoint.data_dim", 0);
  c.num_classes = file.count("checkpoint.num_classes", 0);
  for (const char* k : {"checkpoint.epoch", "checkpoint.meta_train_minutes", "checkpoint.data_dim",
                        "checkpoint.num_classes", "checkpoint.head", "checkpoint.gen_layers",
                        "checkpoint.disc_layers", "checkpoint.created"}) {
    file.erase(k);
  }
  c.config = RunConfig::from(file);
  const auto spec = network_spec(c.config, c.data_dim, c.num_classes);
  auto gen_params = ad::load(prefix.string() + ".gen.mgpv");
  auto disc_params = ad::load(prefix.string() + ".disc.mgpv");
  const auto gspec = gan::generator_spec(spec), dspec = gan::discriminator_spec(spec);
  if (!gen_params.same_layout(gan::Mlp::layout(gspec)) || !disc_params.same_layout(gan::Mlp::layout(dspec))) {
    throw ConfigError("checkpoint " + prefix.string() + ": parameter files do not match the manifest's network spec");
  }
  c.pair.gen = gan::Generator(gan::Mlp(gspec, std::move(gen_params)));
  c.pair.disc = gan::Discriminator(gan::Mlp(dspec, std::move(disc_params)), spec.head, spec.num_classes);
  c.pair.loss = c.config.loss;
  return c;
}

void write_pgm(const fs::path& path, const ad::Tensor& samples, std::size_t h, std::size_t w, std::size_t cols) {
  if (samples.rank() != 2 || samples.cols() != h * w) {
    throw ShapeError("image grid: samples " + ad::shape_str(samples.shape()) + " are not " + std::to_string(h) + "x" +
                     std::to_string(w) + " images");
  }
  cols = std::max<std::size_t>(1, cols);
  const std::size_t n = samples.rows();
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t W = cols * w, H = std::max<std::size_t>(1, rows) * h;
  std::vector<std::uint8_t> px(W * H, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t gr = k / cols, gc = k % cols;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double v = std::clamp(std::round((samples.at(k, r * w + c) + 1.0) * 127.5), 0.0, 255.0);
        px[(gr * h + r) * W + gc * w + c] = static_cast<std::uint8_t>(v);
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << "P5\n" << W << ' ' << H << "\n255\n";
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

Graymap read_pgm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::string magic;
  Graymap g;
  int maxval = 0;
  f >> magic >> g.width >> g.height >> maxval;
  if (magic != "P5" || maxval != 255 || !f) throw DataError(path.string() + ": not an 8-bit P5 graymap");
  f.get();
  g.pixels.resize(g.width * g.height);
  f.read(reinterpret_cast<char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  if (static_cast<std::size_t>(f.gcount()) != g.pixels.size()) throw DataError(path.string() + ": truncated pixels");
  return g;
}

void write_scatter(const fs::path& path, const ad::Tensor& samples) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t c = 0; c < samples.cols(); ++c) os << (c ? "," : "") << 'x' << c;
  os << '\n';
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    for (std::size_t c = 0; c < samples.cols(); ++c) os << (c ? "," : "") << samples.at(i, c);
    os << '\n';
  }
  write_text(path, os.str());
}

int cmd_meta_train(const fs::path& config, const RunOptions& opts) {
  return guarded([&] {
    const RunConfig cfg = apply_options(RunConfig::load(config), opts);
    fs::create_directories(cfg.output_dir);
    const auto data = load_dataset(cfg);
    const auto part = build_partition(cfg, data);
    write_text(cfg.output_dir / "partition.txt", tasks::partition_manifest(part));
    auto pair = initial_pair(cfg, data);

    std::ofstream csv(cfg.output_dir / "loss.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw DataError("cannot write " + (cfg.output_dir / "loss.csv").string());
    meta::LossLog log(csv, cfg.wall_clock);
    const auto start = std::chrono::steady_clock::now();
    auto minutes = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
    };
    auto snapshot = [&](const gan::GanPair& p, std::size_t epoch) {
      return Checkpoint{cfg, p, epoch, minutes(), data.dim, data.num_classes()};
    };

    meta::OuterHooks hooks;
    hooks.on_task = [&](const meta::TaskRecord& r) { log.write(r); };
    hooks.on_epoch = [&](const meta::EpochRecord& r, const gan::GanPair& p) {
      const std::size_t done = r.epoch + 1;
      if (cfg.checkpoint_every && done % cfg.checkpoint_every == 0) {
        save_checkpoint(cfg.output_dir / "checkpoints" / ("epoch-" + std::to_string(done)), snapshot(p, done));
        out(opts) << "epoch " << done << " loss_d " << r.mean_loss_d << " loss_g " << r.mean_loss_g << '\n';
      }
      return true;
    };
    std::size_t completed = 0;
    hooks.on_abort = [&](const gan::GanPair& p, const std::string& why) {
      csv.flush();
      save_checkpoint(cfg.output_dir / "abort", snapshot(p, completed));
      std::cerr << "aborting: " << why << "; last good state saved to " << (cfg.output_dir / "abort").string() << '\n';
    };
    auto counting = hooks.on_epoch;
    hooks.on_epoch = [&](const meta::EpochRecord& r, const gan::GanPair& p) {
      completed = r.epoch + 1;
      return counting(r, p);
    };

    meta::outer_loop(part, pair, cfg.meta, cfg.epochs, cfg.seed, hooks);
    csv.close();
    save_checkpoint(cfg.output_dir / "model", snapshot(pair, cfg.epochs));
    out(opts) << "meta-trained " << cfg.epochs << " epochs on " << part.train.size() << " tasks in " << minutes()
              << " min; checkpoint " << (cfg.output_dir / "model").string() << '\n';
    return kExitOk;
  });
}

int cmd_adapt(const fs::path& checkpoint, int class_label, std::optional<std::size_t> shots,
              std::optional<std::size_t> steps, const RunOptions& opts) {
  return guarded([&] {
    auto ckpt = load_checkpoint(checkpoint);
    const RunConfig cfg = apply_options(ckpt.config, opts);
    const auto data = load_dataset(cfg);
    const auto domain = data.domain(class_label);
    if (!domain) throw TaskError("class " + std::to_string(class_label) + " is not in the dataset");
    tasks::Task task("class-" + std::to_string(class_label), {domain}, cfg.loss);
    meta::AdaptConfig ac = cfg.adapt;
    if (shots) ac.shots = *shots;
    if (steps) ac.steps = *steps;
    Rng rng = derive_rng(cfg.seed, {kAdaptStream, static_cast<std::uint64_t>(class_label)});
    const auto adapted = meta::adapt(ckpt.pair, task, ac, rng);

    const fs::path dir = cfg.output_dir / ("adapt-class-" + std::to_string(class_label));
    fs::create_directories(dir);
    Rng zr = derive_rng(cfg.seed, {kSampleStream});
    const auto z = gan::sample_latent(zr, 64, ckpt.pair.gen.latent_dim());
    write_samples(dir / "before", ckpt.pair.gen.generate(z), data);
    write_samples(dir / "after", adapted.gen.generate(z), data);
    Checkpoint next = ckpt;
    next.config = cfg;
    next.pair = adapted;
    save_checkpoint(dir / "model", next);
    out(opts) << "adapted on " << ac.shots << " samples of class " << class_label << " for " << ac.steps
              << " steps; outputs in " << dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_generate(const fs::path& checkpoint, std::size_t count, const RunOptions& opts) {
  return guarded([&] {
    if (count == 0) throw ConfigError("--count must be at least 1");
    auto ckpt = load_checkpoint(checkpoint);
    const RunConfig cfg = apply_options(ckpt.config, opts);
    Rng zr = derive_rng(cfg.seed, {kSampleStream});
    const auto x = ckpt.pair.gen.generate(gan::sample_latent(zr, count, ckpt.pair.gen.latent_dim()));
    const fs::path dir = cfg.output_dir / "generate";
    fs::create_directories(dir);
    tasks::Dataset shape;
    if (cfg.data.source == "idx") {
      const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ckpt.data_dim))));
      if (side * side == ckpt.data_dim) shape.height = shape.width = side;
    }
    write_samples(dir / "samples", x, shape);
    out(opts) << "wrote " << count << " samples to " << dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_evaluate(const fs::path& checkpoint, const fs::path& config, const RunOptions& opts) {
  return guarded([&] {
    auto ckpt = load_checkpoint(checkpoint);
    const RunConfig cfg = apply_options(RunConfig::load(config), opts);
    const auto data = load_dataset(cfg);
    if (data.dim != ckpt.data_dim) {
      throw ConfigError("evaluation data has dimension " + std::to_string(data.dim) + ", checkpoint expects " +
                        std::to_string(ckpt.data_dim));
    }
    if (gan::generator_spec(network_spec(cfg, data.dim, data.num_classes())) != ckpt.pair.gen.net().spec() ||
        cfg.loss.family != ckpt.config.loss.family) {
      throw ConfigError("config " + config.string() + " describes a different network or loss than the checkpoint");
    }
    const auto part = build_partition(cfg, data);
    std::optional<eval::ReferenceClassifier> clf;
    if (data.is_image()) {
      const fs::path cache = cfg.classifier.empty() ? cfg.output_dir / "classifier.mgpv" : cfg.classifier;
      clf = eval::ReferenceClassifier::load_or_train(cache, data, {});
    }
    eval::BenchmarkConfig bc;
    bc.adapt = cfg.adapt;
    bc.samples = cfg.eval_samples;
    bc.seed = cfg.seed;
    bc.epochs = ckpt.epoch;
    bc.meta_train_minutes = ckpt.meta_train_minutes;
    const auto report = eval::adaptation_benchmark(ckpt.pair, data, part, bc, clf ? &*clf : nullptr);
    fs::create_directories(cfg.output_dir);
    write_text(cfg.output_dir / "report.csv", report.csv());
    write_text(cfg.output_dir / "report.txt", report.table());
    if (const auto classes = report.class_csv(); !classes.empty()) {
      write_text(cfg.output_dir / "report_classes.csv", classes);
    }
    out(opts) << report.table();
    return report.errors.empty() ? kExitOk : kExitData;
  });
}

}  // namespace mgf::cli
