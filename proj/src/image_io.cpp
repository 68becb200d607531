#include "cdist/image_io.hpp"

#include "cdist/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace cdist {
namespace {

cv::Mat to_mat(const Tensor& image) {
  cv::Mat m(image.h(), image.w(), CV_64FC3);
  for (int y = 0; y < image.h(); ++y) {
    auto* row = m.ptr<cv::Vec3d>(y);
    for (int x = 0; x < image.w(); ++x)
      for (int c = 0; c < 3; ++c) row[x][c] = image.at(0, c, y, x);
  }
  return m;
}

Tensor from_mat(const cv::Mat& m) {
  Tensor t(1, 3, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3d>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = row[x][c];
  }
  return t;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + path.string());
  cv::Mat rgb, real;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(real, CV_64FC3, 1.0 / 255.0);
  return from_mat(real);
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  if (image.n() != 1 || image.c() != 3) throw ArgumentError("save_image expects a single RGB image");
  cv::Mat rgb8(image.h(), image.w(), CV_8UC3);
  for (int y = 0; y < image.h(); ++y) {
    auto* row = rgb8.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.w(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), rgb8)) throw DataError("cannot write image " + path.string());
}

Tensor resize_image(const Tensor& image, int height, int width) {
  if (image.n() != 1 || image.c() != 3) throw ArgumentError("resize_image expects a single RGB image");
  if (image.h() == height && image.w() == width) return image;
  cv::Mat out;
  const bool shrink = height < image.h() && width < image.w();
  cv::resize(to_mat(image), out, cv::Size(width, height), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  return from_mat(out);
}

Tensor clip_unit(Tensor t) {
  for (double& v : t.storage()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

Tensor reflect_pad_to_multiple(const Tensor& t, int divisor) {
  const int h = (t.h() + divisor - 1) / divisor * divisor;
  const int w = (t.w() + divisor - 1) / divisor * divisor;
  if (h == t.h() && w == t.w()) return t;
  Tensor out(t.n(), t.c(), h, w);
  for (int b = 0; b < t.n(); ++b)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(b, c, y, x) = t.at(b, c, reflect(y, t.h()), reflect(x, t.w()));
  return out;
}

Tensor crop(const Tensor& t, int height, int width) {
  if (height > t.h() || width > t.w()) throw ArgumentError("crop larger than tensor");
  Tensor out(t.n(), t.c(), height, width);
  for (int b = 0; b < t.n(); ++b)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) out.at(b, c, y, x) = t.at(b, c, y, x);
  return out;
}

}  // namespace cdist
