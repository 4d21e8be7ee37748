#include "mgf/ad/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mgf/error.hpp"

namespace mgf::ad {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: expected rank-2 tensor, got " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: expected rank-2 tensor, got " + shape_str(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
  return data_[0];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row_span(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw ShapeError("slice_rows: range out of bounds for " + shape_str(shape_));
  const std::size_t c = cols();
  return Tensor({end - begin, c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                      data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> index) const {
  const std::size_t c = cols();
  std::vector<double> out;
  out.reserve(index.size() * c);
  for (auto r : index) {
    if (r >= rows()) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of bounds for " + shape_str(shape_));
    auto src = row_span(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return Tensor({index.size(), c}, std::move(out));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("vstack: no tensors");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("vstack: column mismatch " + shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor({r, c}, std::move(out));
}

}  // namespace mgf::ad
