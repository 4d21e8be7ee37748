#include "mgf/tasks/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "mgf/error.hpp"

namespace mgf::tasks {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kDoubleMatrixMagic = 0x00000E02;

std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off, const char* what) {
  if (off + 4 > b.size()) {
    throw DataError(std::string("idx: truncated ") + what + " at byte offset " + std::to_string(off));
  }
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + p.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

IdxArray parse_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = be32(bytes, 0, "magic");
  IdxArray out;
  if (magic == kImageMagic) {
    out.count = be32(bytes, 4, "image count");
    out.rows = be32(bytes, 8, "row count");
    out.cols = be32(bytes, 12, "column count");
    const std::size_t need = out.count * out.rows * out.cols;
    if (bytes.size() - 16 < need) {
      throw DataError("idx: truncated pixel payload at byte offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(16 + need) + " bytes)");
    }
    out.values.resize(need);
    for (std::size_t i = 0; i < need; ++i) out.values[i] = static_cast<double>(bytes[16 + i]) / 127.5 - 1.0;
    return out;
  }
  if (magic == kDoubleMatrixMagic) {
    out.count = be32(bytes, 4, "row count");
    out.rows = 1;
    out.cols = be32(bytes, 8, "column count");
    const std::size_t need = out.count * out.cols;
    if (bytes.size() - 12 < need * 8) {
      throw DataError("idx: truncated double payload at byte offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(12 + need * 8) + " bytes)");
    }
    out.values.resize(need);
    for (std::size_t i = 0; i < need; ++i) {
      std::uint64_t bits = 0;
      for (std::size_t k = 0; k < 8; ++k) bits = (bits << 8) | bytes[12 + i * 8 + k];
      out.values[i] = std::bit_cast<double>(bits);
    }
    return out;
  }
  throw DataError("idx: bad magic " + hex(magic) + " at byte offset 0 (expected " + hex(kImageMagic) + " for images)");
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const auto magic = be32(bytes, 0, "magic");
  if (magic != kLabelMagic) {
    throw DataError("idx: bad magic " + hex(magic) + " at byte offset 0 (expected " + hex(kLabelMagic) +
                    " for labels)");
  }
  const std::size_t count = be32(bytes, 4, "label count");
  if (bytes.size() - 8 < count) {
    throw DataError("idx: truncated label payload at byte offset " + std::to_string(bytes.size()) + " (expected " +
                    std::to_string(8 + count) + " bytes)");
  }
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = bytes[8 + i];
  return labels;
}

std::vector<double> area_downscale(std::span<const double> image, std::size_t h, std::size_t w, std::size_t f) {
  if (f == 0 || h % f != 0 || w % f != 0) {
    throw ConfigError("downscale factor " + std::to_string(f) + " does not divide " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  const std::size_t oh = h / f, ow = w / f;
  std::vector<double> out(oh * ow, 0.0);
  const double norm = 1.0 / static_cast<double>(f * f);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out[(r / f) * ow + c / f] += image[r * w + c];
  for (auto& v : out) v *= norm;
  return out;
}

Dataset dataset_from_idx(const IdxArray& images, std::span<const int> labels, const IdxOptions& opts) {
  if (images.count != labels.size()) {
    throw DataError("idx: " + std::to_string(images.count) + " images but " + std::to_string(labels.size()) +
                    " labels");
  }
  const bool image = images.rows > 1;
  std::size_t h = images.rows, w = images.cols;
  const std::size_t in_dim = h * w;
  if (image && opts.downscale > 1) {
    if (h % opts.downscale || w % opts.downscale) {
      throw ConfigError("downscale factor " + std::to_string(opts.downscale) + " does not divide image size");
    }
    h /= opts.downscale;
    w /= opts.downscale;
  }
  const std::size_t dim = h * w;

  std::map<int, std::vector<double>> by_class;
  for (std::size_t i = 0; i < images.count; ++i) {
    std::span<const double> src(images.values.data() + i * in_dim, in_dim);
    auto& dst = by_class[labels[i]];
    if (image && opts.downscale > 1) {
      auto small = area_downscale(src, images.rows, images.cols, opts.downscale);
      dst.insert(dst.end(), small.begin(), small.end());
    } else {
      dst.insert(dst.end(), src.begin(), src.end());
    }
  }
  std::vector<DomainPtr> domains;
  for (auto& [label, values] : by_class) {
    const std::size_t n = values.size() / dim;
    domains.push_back(std::make_shared<const Domain>(
        Domain{ClassId{label, std::to_string(label)}, ad::Tensor({n, dim}, std::move(values))}));
  }
  return make_dataset(std::move(domains), image ? h : 0, image ? w : 0);
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const IdxOptions& opts) {
  const auto img_bytes = read_file(images);
  const auto lbl_bytes = read_file(labels);
  auto arr = parse_idx_images(img_bytes);
  auto lbl = parse_idx_labels(lbl_bytes);
  return dataset_from_idx(arr, lbl, opts);
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw DataError("idx: label " + std::to_string(l) + " does not fit in a byte");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::vector<int> lbl;
  std::size_t count = 0;
  for (const auto& d : data.domains) {
    count += d->size();
    lbl.insert(lbl.end(), d->size(), d->cls.label);
  }
  std::vector<std::uint8_t> img;
  if (data.is_image()) {
    put_be32(img, kImageMagic);
    put_be32(img, static_cast<std::uint32_t>(count));
    put_be32(img, static_cast<std::uint32_t>(data.height));
    put_be32(img, static_cast<std::uint32_t>(data.width));
    for (const auto& d : data.domains) {
      for (double v : d->samples.data()) {
        const double p = std::clamp(std::round((v + 1.0) * 127.5), 0.0, 255.0);
        img.push_back(static_cast<std::uint8_t>(p));
      }
    }
  } else {
    put_be32(img, kDoubleMatrixMagic);
    put_be32(img, static_cast<std::uint32_t>(count));
    put_be32(img, static_cast<std::uint32_t>(data.dim));
    for (const auto& d : data.domains) {
      for (double v : d->samples.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int s = 56; s >= 0; s -= 8) img.push_back(static_cast<std::uint8_t>(bits >> s));
      }
    }
  }
  write_file(images, img);
  write_file(labels, encode_idx_labels(lbl));
}

std::pair<double, double> ring_anchor(std::size_t cls, const GaussianFamilyOptions& opts) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(cls) / static_cast<double>(opts.n_classes);
  return {opts.radius * std::cos(a), opts.radius * std::sin(a)};
}

Dataset synth_family_gaussian(const GaussianFamilyOptions& opts, Rng& rng) {
  if (opts.n_classes < 2) throw ConfigError("gaussian family needs at least 2 classes");
  if (opts.samples_per_class == 0 || opts.components == 0) throw ConfigError("gaussian family: empty classes");
  std::normal_distribution<double> noise(0.0, opts.sigma);
  std::vector<DomainPtr> domains;
  for (std::size_t c = 0; c < opts.n_classes; ++c) {
    const auto [ax, ay] = ring_anchor(c, opts);
    const double base = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(opts.n_classes);
    ad::Tensor x({opts.samples_per_class, 2});
    for (std::size_t i = 0; i < opts.samples_per_class; ++i) {
      // Round-robin over components keeps the mixture weights exactly equal.
      const std::size_t k = i % opts.components;
      const double ang = base + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(opts.components);
      x.at(i, 0) = ax + opts.component_spread * std::cos(ang) + noise(rng);
      x.at(i, 1) = ay + opts.component_spread * std::sin(ang) + noise(rng);
    }
    domains.push_back(std::make_shared<const Domain>(Domain{ClassId{static_cast<int>(c), "ring-" + std::to_string(c)},
                                                            std::move(x)}));
  }
  return make_dataset(std::move(domains));
}

}  // namespace mgf::tasks
