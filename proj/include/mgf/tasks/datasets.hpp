#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mgf/tasks/task.hpp"

namespace mgf::tasks {

// Parsed IDX image file. Pixel payloads (magic 0x00000803) are mapped to
// [-1, 1] by p / 127.5 - 1; double payloads (magic 0x00000E02, used for
// exported non-image domains) are kept verbatim.
struct IdxArray {
  std::size_t count = 0;
  std::size_t rows = 0;  // image height, or 1 for flat vectors
  std::size_t cols = 0;
  std::vector<double> values;
};

IdxArray parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

struct IdxOptions {
  // Area-average by this integer factor (1 keeps full size).
  std::size_t downscale = 1;
};

// One Domain per distinct label, in label order.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const IdxOptions& opts = {});
Dataset dataset_from_idx(const IdxArray& images, std::span<const int> labels, const IdxOptions& opts = {});

// Image datasets are quantised back to bytes; other datasets are written as
// a [count, dim] double array.
void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);
std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels);

// 2x2 (or f x f) block mean of a flattened h x w image.
std::vector<double> area_downscale(std::span<const double> image, std::size_t h, std::size_t w, std::size_t factor);

struct GaussianFamilyOptions {
  std::size_t n_classes = 8;
  std::size_t samples_per_class = 500;
  double radius = 2.0;
  double sigma = 0.15;
  // Mixture components sit on a small circle around the class anchor.
  double component_spread = 0.25;
  std::size_t components = 3;
};

// Class i is a mixture centred on the radius-2 ring at angle 2*pi*i/n.
Dataset synth_family_gaussian(const GaussianFamilyOptions& opts, Rng& rng);
std::pair<double, double> ring_anchor(std::size_t cls, const GaussianFamilyOptions& opts);

}  // namespace mgf::tasks
