#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mgf/gan/network.hpp"
#include "mgf/meta/meta.hpp"
#include "mgf/tasks/datasets.hpp"

namespace mgf::cli {

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

// Flat "key = value" text with '#' comments and dotted keys.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text, std::string origin = "config");
  static ConfigFile load(const std::filesystem::path& path);

  const std::string& origin() const { return origin_; }
  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void erase(const std::string& key) { entries_.erase(key); }

  // Typed reads; a malformed value is a ConfigError naming the line.
  std::string str(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& fallback) const;

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  std::string origin_;
  std::map<std::string, ConfigEntry> entries_;
};

struct DataSpec {
  std::string source = "gaussian";  // gaussian | idx
  std::filesystem::path images;
  std::filesystem::path labels;
  std::size_t downscale = 1;
  tasks::GaussianFamilyOptions gaussian;
  std::uint64_t seed = 0;  // synthetic family draw
  std::set<int> held_out;  // empty: the largest label
  std::size_t classes_per_task = 1;
  std::size_t max_train_tasks = 0;
};

// Everything a run depends on. Two runs with equal configs produce equal
// outputs in single-thread mode.
struct RunConfig {
  DataSpec data;
  gan::NetworkSpec model;  // data_dim, head and num_classes come from the data
  gan::LossConfig loss;
  meta::MetaConfig meta;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;
  std::filesystem::path output_dir = "out";
  bool wall_clock = false;
  meta::AdaptConfig adapt;
  std::size_t eval_samples = 256;
  std::filesystem::path classifier;  // cache path; empty: <output>/classifier.mgpv

  // Unknown keys are rejected. Relative paths resolve against `base`.
  static RunConfig from(const ConfigFile& file, const std::filesystem::path& base = {});
  static RunConfig load(const std::filesystem::path& path);
  // Canonical text form; parses back to an equal config.
  std::string to_text() const;
};

std::set<std::string> known_keys();

}  // namespace mgf::cli
