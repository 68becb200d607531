#pragma once

#include "cdist/tensor.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace cdist {

struct CorpusOptions {
  // Directory of PNG/JPEG files. Mutually exclusive with `generator`.
  std::string path;
  // Synthetic texture families joined by '+': checker, stripes, blobs,
  // gradient; "noise" adds pixel noise. E.g. "checker+noise".
  std::string generator;
  int samples = 64;  // generator only
  int resize = 48;
  int crop = 32;
  std::uint64_t seed = 0;
};

/// One synthetic texture of the given side; values lie in [0, 1].
Tensor generate_texture(const std::string& generator, int side, std::mt19937_64& rng);

/// Images resized to resize x resize, ready for random cropping.
struct Corpus {
  std::vector<Tensor> images;
  int crop = 32;

  int size() const { return static_cast<int>(images.size()); }
};

/// Reads a directory (unreadable files are skipped with a warning) or runs
/// the generator. Throws DataError for an empty result.
Corpus load_corpus(const CorpusOptions& options);

/// Deterministic stream of randomly cropped batches. Each epoch visits the
/// corpus in a fresh seeded permutation; batches may straddle epochs.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, int batch_size, std::uint64_t seed);

  Tensor next();
  /// Number of complete passes over the corpus so far.
  int epoch() const { return static_cast<int>(consumed_ / corpus_->images.size()); }
  int steps_per_epoch() const;

 private:
  const Corpus* corpus_;
  int batch_size_;
  std::mt19937_64 rng_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  std::size_t consumed_ = 0;
};

/// Runs a BatchStream on a producer thread with a bounded queue. Yields the
/// same batch sequence as the synchronous stream.
class PrefetchingStream {
 public:
  PrefetchingStream(const Corpus& corpus, int batch_size, std::uint64_t seed, std::size_t depth = 2);
  ~PrefetchingStream();
  PrefetchingStream(const PrefetchingStream&) = delete;
  PrefetchingStream& operator=(const PrefetchingStream&) = delete;

  Tensor next();

 private:
  void produce(std::stop_token stop);

  BatchStream stream_;
  std::size_t depth_;
  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<Tensor> queue_;
  std::jthread worker_;
};

}  // namespace cdist
