#include "cdist/corpus.hpp"

#include "cdist/error.hpp"
#include "cdist/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

namespace cdist {
namespace {

struct Rgb {
  double r, g, b;
  double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

Rgb random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

std::vector<std::string> split_plus(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, '+'))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void paint_checker(Tensor& t, std::mt19937_64& rng) {
  const int side = t.h();
  std::uniform_int_distribution<int> cell_dist(2, std::max(2, side / 3));
  std::uniform_int_distribution<int> off(0, side);
  const int cell = cell_dist(rng);
  const int ox = off(rng), oy = off(rng);
  const Rgb a = random_color(rng), b = random_color(rng);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool odd = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 1;
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = odd ? a[c] : b[c];
    }
}

void paint_stripes(Tensor& t, std::mt19937_64& rng) {
  const int side = t.h();
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::uniform_real_distribution<double> period(3.0, std::max(4.0, side / 2.0));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  const double th = angle(rng), p = period(rng), ph = phase(rng);
  const Rgb a = random_color(rng), b = random_color(rng);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double s = 0.5 + 0.5 * std::sin(2.0 * M_PI * (x * std::cos(th) + y * std::sin(th)) / p + ph);
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = s * a[c] + (1.0 - s) * b[c];
    }
}

void paint_blobs(Tensor& t, std::mt19937_64& rng) {
  const int side = t.h();
  std::uniform_int_distribution<int> count(2, 6);
  std::uniform_real_distribution<double> pos(0.0, side);
  std::uniform_real_distribution<double> radius(side / 10.0, side / 3.0);
  const Rgb bg = random_color(rng);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = bg[c];
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const double cx = pos(rng), cy = pos(rng), r = radius(rng);
    const Rgb col = random_color(rng);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r * r);
        const double a = std::exp(-d2);
        for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = (1.0 - a) * t.at(0, c, y, x) + a * col[c];
      }
  }
}

void paint_gradient(Tensor& t, std::mt19937_64& rng) {
  const int side = t.h();
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  const double th = angle(rng);
  const Rgb a = random_color(rng), b = random_color(rng);
  const double dx = std::cos(th), dy = std::sin(th);
  const double span = (std::abs(dx) + std::abs(dy)) * side;
  const double base = std::min(0.0, dx * side) + std::min(0.0, dy * side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double s = (x * dx + y * dy - base) / span;
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = s * a[c] + (1.0 - s) * b[c];
    }
}

}  // namespace

Tensor generate_texture(const std::string& generator, int side, std::mt19937_64& rng) {
  std::vector<std::string> families;
  bool noise = false;
  for (const auto& tok : split_plus(generator)) {
    if (tok == "noise")
      noise = true;
    else if (tok == "checker" || tok == "stripes" || tok == "blobs" || tok == "gradient")
      families.push_back(tok);
    else
      throw ConfigError("unknown texture family '" + tok + "'");
  }
  if (families.empty()) throw ConfigError("generator '" + generator + "' names no texture family");
  if (side < 1) throw ArgumentError("texture side must be positive");

  Tensor t(1, 3, side, side);
  std::uniform_int_distribution<std::size_t> pick(0, families.size() - 1);
  const std::string& family = families[pick(rng)];
  if (family == "checker")
    paint_checker(t, rng);
  else if (family == "stripes")
    paint_stripes(t, rng);
  else if (family == "blobs")
    paint_blobs(t, rng);
  else
    paint_gradient(t, rng);
  if (noise) {
    std::normal_distribution<double> n(0.0, 0.04);
    for (double& v : t.storage()) v += n(rng);
  }
  return clip_unit(std::move(t));
}

Corpus load_corpus(const CorpusOptions& options) {
  if (options.crop < 1 || options.resize < options.crop)
    throw ConfigError("corpus crop must be positive and no larger than resize");
  Corpus corpus;
  corpus.crop = options.crop;
  if (!options.path.empty() && !options.generator.empty())
    throw ConfigError("corpus takes either a path or a generator, not both");
  if (!options.path.empty()) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(options.path)) throw DataError("corpus directory " + options.path + " does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(options.path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        corpus.images.push_back(resize_image(load_image(f), options.resize, options.resize));
      } catch (const DataError& e) {
        std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
      }
    }
  } else if (!options.generator.empty()) {
    std::mt19937_64 rng(options.seed);
    for (int i = 0; i < options.samples; ++i) corpus.images.push_back(generate_texture(options.generator, options.resize, rng));
  } else {
    throw ConfigError("corpus needs a path or a generator");
  }
  if (corpus.images.empty()) throw DataError("corpus is empty");
  return corpus;
}

BatchStream::BatchStream(const Corpus& corpus, int batch_size, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), rng_(seed) {
  if (corpus.images.empty()) throw DataError("corpus is empty");
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  order_.resize(corpus.images.size());
}

int BatchStream::steps_per_epoch() const {
  const int n = corpus_->size();
  return (n + batch_size_ - 1) / batch_size_;
}

Tensor BatchStream::next() {
  const int crop_side = corpus_->crop;
  Tensor batch(batch_size_, 3, crop_side, crop_side);
  for (int b = 0; b < batch_size_; ++b) {
    if (cursor_ == 0) {
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), rng_);
    }
    const Tensor& img = corpus_->images[order_[cursor_]];
    cursor_ = (cursor_ + 1) % order_.size();
    ++consumed_;
    std::uniform_int_distribution<int> oy(0, img.h() - crop_side), ox(0, img.w() - crop_side);
    const int y0 = oy(rng_), x0 = ox(rng_);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < crop_side; ++y)
        for (int x = 0; x < crop_side; ++x) batch.at(b, c, y, x) = img.at(0, c, y0 + y, x0 + x);
  }
  return batch;
}

PrefetchingStream::PrefetchingStream(const Corpus& corpus, int batch_size, std::uint64_t seed, std::size_t depth)
    : stream_(corpus, batch_size, seed), depth_(std::max<std::size_t>(1, depth)) {
  worker_ = std::jthread([this](std::stop_token stop) { produce(stop); });
}

PrefetchingStream::~PrefetchingStream() {
  worker_.request_stop();
  cv_.notify_all();
}

void PrefetchingStream::produce(std::stop_token stop) {
  while (!stop.stop_requested()) {
    Tensor batch = stream_.next();
    std::unique_lock lock(mutex_);
    cv_.wait(lock, stop, [&] { return queue_.size() < depth_; });
    if (stop.stop_requested()) return;
    queue_.push_back(std::move(batch));
    cv_.notify_all();
  }
}

Tensor PrefetchingStream::next() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return !queue_.empty(); });
  Tensor batch = std::move(queue_.front());
  queue_.pop_front();
  cv_.notify_all();
  return batch;
}

}  // namespace cdist
