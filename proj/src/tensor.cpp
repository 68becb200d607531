#include "cdist/tensor.hpp"

#include "cdist/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cdist {

Tensor Tensor::from_feature(const FeatureMap& f) {
  Tensor t(1, f.channels, f.height, f.width);
  t.matrix(0) = f.values;
  return t;
}

FeatureMap Tensor::feature(int n) const {
  return FeatureMap(c_, h_, w_, RowMatrix(matrix(n)));
}

void Tensor::set_feature(int n, const FeatureMap& f) {
  if (f.channels != c_ || f.height != h_ || f.width != w_)
    throw ArgumentError("set_feature: shape mismatch");
  matrix(n) = f.values;
}

Tensor Tensor::image(int n) const {
  Tensor t(1, c_, h_, w_);
  std::memcpy(t.data(), data() + n * image_size(), image_size() * sizeof(double));
  return t;
}

void Tensor::set_image(int n, const Tensor& img) {
  if (img.n() != 1 || img.c() != c_ || img.h() != h_ || img.w() != w_)
    throw ArgumentError("set_image: shape mismatch");
  std::memcpy(data() + n * image_size(), img.data(), image_size() * sizeof(double));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw ArgumentError("tensor add: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> images) {
  if (images.empty()) return {};
  const Tensor& first = images.front();
  Tensor out(static_cast<int>(images.size()), first.c(), first.h(), first.w());
  for (std::size_t i = 0; i < images.size(); ++i) out.set_image(static_cast<int>(i), images[i]);
  return out;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ArgumentError("mean_squared_error: shape mismatch");
  if (a.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace cdist
