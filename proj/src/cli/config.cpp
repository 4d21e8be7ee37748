#include "mgf/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mgf/error.hpp"

namespace mgf::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, std::string origin) {
  ConfigFile cfg;
  cfg.origin_ = std::move(origin);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(cfg.origin_ + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + body + "'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(cfg.origin_ + ":" + std::to_string(line_no) + ": missing key");
    if (auto it = cfg.entries_.find(key); it != cfg.entries_.end()) {
      throw ConfigError(cfg.origin_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second.line) + ")");
    }
    cfg.entries_[key] = {value, line_no};
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

void ConfigFile::fail(const std::string& key, const std::string& message) const {
  const auto it = entries_.find(key);
  const std::string where = it == entries_.end() ? origin_ : origin_ + ":" + std::to_string(it->second.line);
  throw ConfigError(where + ": " + key + ": " + message);
}

std::string ConfigFile::str(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double ConfigFile::real(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second.value;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) fail(key, "expected a number, got '" + s + "'");
  return v;
}

std::uint64_t ConfigFile::u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second.value;
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) fail(key, "expected a non-negative integer, got '" + s + "'");
  return v;
}

std::size_t ConfigFile::count(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(u64(key, fallback));
}

bool ConfigFile::flag(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second.value;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(key, "expected true or false, got '" + s + "'");
}

std::vector<std::size_t> ConfigFile::counts(const std::string& key, const std::vector<std::size_t>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::size_t> out;
  std::string text = it->second.value;
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size()) fail(key, "expected integers, got '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

std::set<std::string> known_keys() {
  return {"data.source", "data.images", "data.labels", "data.downscale", "data.seed", "data.held_out",
          "data.classes_per_task", "data.max_train_tasks", "data.gaussian.classes",
          "data.gaussian.samples_per_class", "data.gaussian.radius", "data.gaussian.sigma",
          "data.gaussian.component_spread", "data.gaussian.components", "model.latent_dim", "model.gen_hidden",
          "model.disc_hidden", "model.gen_output", "model.leaky_slope", "loss.family", "loss.lambda_gp",
          "loss.lambda_cls", "meta.algorithm", "meta.inner_lr", "meta.outer_lr", "meta.inner_steps", "meta.shots",
          "meta.task_batch", "meta.outer_mode", "meta.inner_optimizer", "meta.gen_first", "meta.clip_norm",
          "meta.threads", "train.epochs", "train.seed", "train.checkpoint_every", "output.dir", "log.wall_clock",
          "adapt.shots", "adapt.steps", "adapt.optimizer", "adapt.lr", "adapt.beta1", "adapt.beta2",
          "adapt.fake_batch", "eval.samples", "eval.classifier"};
}

RunConfig RunConfig::from(const ConfigFile& f, const std::filesystem::path& base) {
  const auto known = known_keys();
  for (const auto& [key, entry] : f.entries()) {
    if (!known.count(key)) {
      throw ConfigError(f.origin() + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'");
    }
  }
  auto path = [&](const std::string& key) -> std::filesystem::path {
    const std::string v = f.str(key, "");
    if (v.empty()) return {};
    std::filesystem::path p(v);
    return p.is_relative() && !base.empty() ? (base / p).lexically_normal() : p;
  };
  auto guarded = [&](const std::string& key, auto parse, auto fallback) {
    if (!f.has(key)) return fallback;
    try {
      return parse(f.str(key, ""));
    } catch (const ConfigError& e) {
      f.fail(key, e.what());
    }
  };

  RunConfig c;
  c.data.source = f.str("data.source", c.data.source);
  if (c.data.source != "gaussian" && c.data.source != "idx") {
    f.fail("data.source", "expected gaussian or idx, got '" + c.data.source + "'");
  }
  c.data.images = path("data.images");
  c.data.labels = path("data.labels");
  c.data.downscale = f.count("data.downscale", c.data.downscale);
  c.data.seed = f.u64("data.seed", c.data.seed);
  for (std::size_t v : f.counts("data.held_out", {})) c.data.held_out.insert(static_cast<int>(v));
  c.data.classes_per_task = f.count("data.classes_per_task", c.data.classes_per_task);
  c.data.max_train_tasks = f.count("data.max_train_tasks", c.data.max_train_tasks);
  auto& g = c.data.gaussian;
  g.n_classes = f.count("data.gaussian.classes", g.n_classes);
  g.samples_per_class = f.count("data.gaussian.samples_per_class", g.samples_per_class);
  g.radius = f.real("data.gaussian.radius", g.radius);
  g.sigma = f.real("data.gaussian.sigma", g.sigma);
  g.component_spread = f.real("data.gaussian.component_spread", g.component_spread);
  g.components = f.count("data.gaussian.components", g.components);

  c.model.latent_dim = f.count("model.latent_dim", c.model.latent_dim);
  c.model.gen_hidden = f.counts("model.gen_hidden", c.model.gen_hidden);
  c.model.disc_hidden = f.counts("model.disc_hidden", c.model.disc_hidden);
  c.model.gen_output = guarded("model.gen_output", gan::parse_activation, c.model.gen_output);
  c.model.leaky_slope = f.real("model.leaky_slope", c.model.leaky_slope);
  if (c.model.latent_dim == 0) f.fail("model.latent_dim", "must be at least 1");

  c.loss.family = guarded("loss.family", gan::parse_loss_family, c.loss.family);
  c.loss.lambda_gp = f.real("loss.lambda_gp", c.loss.lambda_gp);
  c.loss.lambda_cls = f.real("loss.lambda_cls", c.loss.lambda_cls);
  if (c.loss.lambda_gp < 0) f.fail("loss.lambda_gp", "must be non-negative");
  if (c.loss.lambda_cls < 0) f.fail("loss.lambda_cls", "must be non-negative");

  auto& m = c.meta;
  m.algorithm = guarded("meta.algorithm", meta::parse_algorithm, m.algorithm);
  m.inner_lr = f.real("meta.inner_lr", m.inner_lr);
  m.outer_lr = f.real("meta.outer_lr", m.outer_lr);
  m.inner_steps = f.count("meta.inner_steps", m.inner_steps);
  m.shots = f.count("meta.shots", m.shots);
  m.task_batch = f.count("meta.task_batch", m.task_batch);
  m.outer_mode = guarded("meta.outer_mode", meta::parse_outer_mode, m.outer_mode);
  m.inner_optimizer = guarded("meta.inner_optimizer", ad::parse_optimizer_kind, m.inner_optimizer);
  m.gen_first = f.flag("meta.gen_first", m.gen_first);
  m.clip_norm = f.real("meta.clip_norm", m.clip_norm);
  m.threads = f.count("meta.threads", m.threads);
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(f.origin() + ": " + e.what());
  }

  c.epochs = f.count("train.epochs", c.epochs);
  c.seed = f.u64("train.seed", c.seed);
  c.checkpoint_every = f.count("train.checkpoint_every", c.checkpoint_every);
  if (f.has("output.dir")) c.output_dir = path("output.dir");
  else if (!base.empty()) c.output_dir = (base / c.output_dir).lexically_normal();
  c.wall_clock = f.flag("log.wall_clock", c.wall_clock);

  c.adapt.shots = f.count("adapt.shots", m.shots);
  c.adapt.steps = f.count("adapt.steps", c.adapt.steps);
  c.adapt.optimizer.kind = guarded("adapt.optimizer", ad::parse_optimizer_kind, c.adapt.optimizer.kind);
  c.adapt.optimizer.lr = f.real("adapt.lr", c.adapt.optimizer.lr);
  c.adapt.optimizer.beta1 = f.real("adapt.beta1", c.adapt.optimizer.beta1);
  c.adapt.optimizer.beta2 = f.real("adapt.beta2", c.adapt.optimizer.beta2);
  c.adapt.fake_batch = f.count("adapt.fake_batch", c.adapt.fake_batch);
  if (!(c.adapt.optimizer.lr > 0)) f.fail("adapt.lr", "must be positive");
  if (c.adapt.shots == 0) f.fail("adapt.shots", "must be at least 1");
  c.eval_samples = f.count("eval.samples", c.eval_samples);
  if (c.eval_samples < 2) f.fail("eval.samples", "must be at least 2");
  c.classifier = path("eval.classifier");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from(ConfigFile::load(path), std::filesystem::absolute(path).parent_path());
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
  kv("data.source", data.source);
  if (!data.images.empty()) kv("data.images", std::filesystem::absolute(data.images).string());
  if (!data.labels.empty()) kv("data.labels", std::filesystem::absolute(data.labels).string());
  kv("data.downscale", std::to_string(data.downscale));
  kv("data.seed", std::to_string(data.seed));
  std::string held;
  for (int h : data.held_out) held += (held.empty() ? "" : " ") + std::to_string(h);
  if (!held.empty()) kv("data.held_out", held);
  kv("data.classes_per_task", std::to_string(data.classes_per_task));
  kv("data.max_train_tasks", std::to_string(data.max_train_tasks));
  kv("data.gaussian.classes", std::to_string(data.gaussian.n_classes));
  kv("data.gaussian.samples_per_class", std::to_string(data.gaussian.samples_per_class));
  kv("data.gaussian.radius", real_text(data.gaussian.radius));
  kv("data.gaussian.sigma", real_text(data.gaussian.sigma));
  kv("data.gaussian.component_spread", real_text(data.gaussian.component_spread));
  kv("data.gaussian.components", std::to_string(data.gaussian.components));
  kv("model.latent_dim", std::to_string(model.latent_dim));
  kv("model.gen_hidden", join(model.gen_hidden));
  kv("model.disc_hidden", join(model.disc_hidden));
  kv("model.gen_output", gan::to_string(model.gen_output));
  kv("model.leaky_slope", real_text(model.leaky_slope));
  kv("loss.family", gan::to_string(loss.family));
  kv("loss.lambda_gp", real_text(loss.lambda_gp));
  kv("loss.lambda_cls", real_text(loss.lambda_cls));
  kv("meta.algorithm", meta::to_string(meta.algorithm));
  kv("meta.inner_lr", real_text(meta.inner_lr));
  kv("meta.outer_lr", real_text(meta.outer_lr));
  kv("meta.inner_steps", std::to_string(meta.inner_steps));
  kv("meta.shots", std::to_string(meta.shots));
  kv("meta.task_batch", std::to_string(meta.task_batch));
  kv("meta.outer_mode", meta::to_string(meta.outer_mode));
  kv("meta.inner_optimizer", ad::to_string(meta.inner_optimizer));
  kv("meta.gen_first", meta.gen_first ? "true" : "false");
  kv("meta.clip_norm", real_text(meta.clip_norm));
  kv("meta.threads", std::to_string(meta.threads));
  kv("train.epochs", std::to_string(epochs));
  kv("train.seed", std::to_string(seed));
  kv("train.checkpoint_every", std::to_string(checkpoint_every));
  kv("output.dir", std::filesystem::absolute(output_dir).string());
  kv("log.wall_clock", wall_clock ? "true" : "false");
  kv("adapt.shots", std::to_string(adapt.shots));
  kv("adapt.steps", std::to_string(adapt.steps));
  kv("adapt.optimizer", ad::to_string(adapt.optimizer.kind));
  kv("adapt.lr", real_text(adapt.optimizer.lr));
  kv("adapt.beta1", real_text(adapt.optimizer.beta1));
  kv("adapt.beta2", real_text(adapt.optimizer.beta2));
  kv("adapt.fake_batch", std::to_string(adapt.fake_batch));
  kv("eval.samples", std::to_string(eval_samples));
  if (!classifier.empty()) kv("eval.classifier", std::filesystem::absolute(classifier).string());
  return os.str();
}

}  // namespace mgf::cli
