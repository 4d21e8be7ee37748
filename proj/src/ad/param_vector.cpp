#include "mgf/ad/param_vector.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mgf/error.hpp"

namespace mgf::ad {
namespace {

void require_layout(const ParamVector& a, const ParamVector& b, const char* op) {
  if (!a.same_layout(b)) {
    throw StructuralError(std::string(op) + ": segment tables differ (" + std::to_string(a.segments().size()) +
                          " vs " + std::to_string(b.segments().size()) + " segments, " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + " values)");
  }
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n, "segment name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError("MGPV: truncated while reading " + std::string(what) + " at byte offset " + std::to_string(pos_));
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t ParamVector::add_segment(std::string name, Shape shape) {
  Segment s{std::move(name), std::move(shape), values_.size()};
  values_.resize(values_.size() + s.size(), 0.0);
  segments_.push_back(std::move(s));
  return segments_.size() - 1;
}

std::span<double> ParamVector::segment_values(std::size_t i) {
  const auto& s = segments_.at(i);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::segment_values(std::size_t i) const {
  const auto& s = segments_.at(i);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

Tensor ParamVector::tensor(std::size_t i) const {
  auto v = segment_values(i);
  return Tensor(segments_[i].shape, std::vector<double>(v.begin(), v.end()));
}

void ParamVector::set_tensor(std::size_t i, const Tensor& t) {
  if (t.shape() != segments_.at(i).shape) {
    throw StructuralError("set_tensor: segment '" + segments_[i].name + "' has shape " + shape_str(segments_[i].shape) +
                          ", got " + shape_str(t.shape()));
  }
  std::copy(t.data().begin(), t.data().end(), segment_values(i).begin());
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  std::fill(z.values_.begin(), z.values_.end(), 0.0);
  return z;
}

std::uint64_t ParamVector::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : values_) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

ParamVector param_clone(const ParamVector& p) { return p; }

void param_axpy(ParamVector& dst, double a, const ParamVector& src) {
  require_layout(dst, src, "param_axpy");
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * s[i];
}

ParamVector param_sub(const ParamVector& a, const ParamVector& b) {
  require_layout(a, b, "param_sub");
  ParamVector out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

void param_scale(ParamVector& p, double a) {
  for (auto& v : p.values()) v *= a;
}

double param_norm(const ParamVector& p) {
  double s = 0.0;
  for (double v : p.values()) s += v * v;
  return std::sqrt(s);
}

std::vector<std::uint8_t> serialize(const ParamVector& p) {
  std::vector<std::uint8_t> out{'M', 'G', 'P', 'V'};
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.segments().size()));
  for (const auto& s : p.segments()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.name.size()));
    out.insert(out.end(), s.name.begin(), s.name.end());
    out.push_back(static_cast<std::uint8_t>(s.shape.size()));
    for (auto e : s.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  }
  for (double v : p.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParamVector deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MGPV", 4) != 0) {
    throw DataError("MGPV: bad magic at byte offset 0");
  }
  Reader r(bytes.subspan(4));
  const auto count = r.get<std::uint32_t>("segment count");
  ParamVector p;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name = r.get_string(len);
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint32_t>("extent"));
    p.add_segment(std::move(name), std::move(shape));
  }
  if (r.remaining() != p.size() * 8) {
    throw DataError("MGPV: expected " + std::to_string(p.size() * 8) + " value bytes at byte offset " +
                    std::to_string(r.pos() + 4) + ", found " + std::to_string(r.remaining()));
  }
  for (auto& v : p.values()) v = std::bit_cast<double>(r.get<std::uint64_t>("value"));
  return p;
}

void save(const ParamVector& p, const std::filesystem::path& path) {
  const auto bytes = serialize(p);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

ParamVector load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace mgf::ad
