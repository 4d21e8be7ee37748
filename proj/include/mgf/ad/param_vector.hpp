#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mgf/ad/tensor.hpp"

namespace mgf::ad {

struct Segment {
  std::string name;
  Shape shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_size(shape); }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// All learnable parameters of one network as a single flat array, with a
// segment table recording where each named tensor lives.
class ParamVector {
 public:
  ParamVector() = default;

  // Appends a zero-filled segment and returns its index.
  std::size_t add_segment(std::string name, Shape shape);

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> segment_values(std::size_t i);
  std::span<const double> segment_values(std::size_t i) const;

  Tensor tensor(std::size_t i) const;
  void set_tensor(std::size_t i, const Tensor& t);

  bool same_layout(const ParamVector& other) const { return segments_ == other.segments_; }

  // All-zero vector with this layout.
  ParamVector zeros_like() const;

  // FNV-1a over the raw value bytes; used to assert parameters are untouched.
  std::uint64_t checksum() const;

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.segments_ == b.segments_ && a.values_ == b.values_;
  }

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
};

ParamVector param_clone(const ParamVector& p);
// dst <- dst + a * src
void param_axpy(ParamVector& dst, double a, const ParamVector& src);
// a - b
ParamVector param_sub(const ParamVector& a, const ParamVector& b);
void param_scale(ParamVector& p, double a);
double param_norm(const ParamVector& p);

// Binary "MGPV" format: magic, u32 segment count, per segment (u16 name
// length, name bytes, u8 rank, u32 extents), then every value as
// little-endian f64 in segment order.
std::vector<std::uint8_t> serialize(const ParamVector& p);
ParamVector deserialize(std::span<const std::uint8_t> bytes);
void save(const ParamVector& p, const std::filesystem::path& path);
ParamVector load(const std::filesystem::path& path);

}  // namespace mgf::ad
