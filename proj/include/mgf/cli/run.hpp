#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "mgf/cli/config.hpp"
#include "mgf/gan/training.hpp"
#include "mgf/tasks/task.hpp"

namespace mgf::cli {

// Process exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitOther = 1;

int exit_code_for(const std::exception& e);

tasks::Dataset load_dataset(const RunConfig& cfg);
tasks::TaskPartition build_partition(const RunConfig& cfg, const tasks::Dataset& data);
gan::NetworkSpec network_spec(const RunConfig& cfg, std::size_t data_dim, std::size_t num_classes);
gan::GanPair initial_pair(const RunConfig& cfg, const tasks::Dataset& data);

// <prefix>.gen.mgpv, <prefix>.disc.mgpv and a text <prefix>.manifest holding
// the run config, layer shapes, epoch count, training time and a timestamp.
struct Checkpoint {
  RunConfig config;
  gan::GanPair pair;
  std::size_t epoch = 0;
  double meta_train_minutes = 0.0;
  std::size_t data_dim = 0;
  std::size_t num_classes = 0;
};

void save_checkpoint(const std::filesystem::path& prefix, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& prefix);

// Binary graymap ("P5") sheet of images, `cols` per row; pixel values are
// round((x + 1) * 127.5) clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const ad::Tensor& samples, std::size_t height, std::size_t width,
               std::size_t cols);
struct Graymap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};
Graymap read_pgm(const std::filesystem::path& path);
// One "x,y,..." line per sample after a header.
void write_scatter(const std::filesystem::path& path, const ad::Tensor& samples);

struct RunOptions {
  bool single_thread = false;
  std::optional<std::uint64_t> seed;  // replaces train.seed
  std::ostream* out = nullptr;         // progress and summaries
  std::optional<std::filesystem::path> output_dir;
};

// Each returns a process exit status and reports failures on stderr.
int cmd_meta_train(const std::filesystem::path& config, const RunOptions& opts);
int cmd_adapt(const std::filesystem::path& checkpoint, int class_label, std::optional<std::size_t> shots,
              std::optional<std::size_t> steps, const RunOptions& opts);
int cmd_generate(const std::filesystem::path& checkpoint, std::size_t count, const RunOptions& opts);
int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& config, const RunOptions& opts);

}  // namespace mgf::cli
