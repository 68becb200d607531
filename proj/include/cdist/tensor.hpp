#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace cdist {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

/// A single C x H x W activation block. `values` is the flattened C x (H*W)
/// view, one row per channel.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  RowMatrix values;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), values(RowMatrix::Zero(c, h * w)) {}
  FeatureMap(int c, int h, int w, RowMatrix v) : channels(c), height(h), width(w), values(std::move(v)) {}

  int spatial() const { return height * width; }
};

/// Dense N x C x H x W batch of doubles in row-major (NCHW) order. Images are
/// tensors with C == 3 and values nominally in [0, 1].
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  static Tensor from_feature(const FeatureMap& f);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  // C x HW view of image n.
  RowMatrixMap matrix(int n) { return {data() + n * image_size(), c_, h_ * w_}; }
  ConstRowMatrixMap matrix(int n) const { return {data() + n * image_size(), c_, h_ * w_}; }

  FeatureMap feature(int n) const;
  void set_feature(int n, const FeatureMap& f);
  Tensor image(int n) const;
  void set_image(int n, const Tensor& img);

  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  bool all_finite() const;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Stack single images (N == 1) into one batch.
Tensor stack(std::span<const Tensor> images);

/// Mean of squared element differences.
double mean_squared_error(const Tensor& a, const Tensor& b);

}  // namespace cdist
