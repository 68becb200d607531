#include "cdist/checkpoint.hpp"
#include "cdist/corpus.hpp"
#include "cdist/error.hpp"
#include "cdist/image_io.hpp"
#include "cdist/metrics.hpp"
#include "cdist/optimizer.hpp"
#include "doctest.h"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cdist;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdist_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("synthetic generator stays in range") {
  CorpusOptions o;
  o.generator = "checker+noise";
  o.samples = 100;
  const Corpus c = load_corpus(o);
  CHECK(c.size() == 100);
  for (const auto& im : c.images) {
    CHECK(im.h() == 48);
    for (double v : im.storage()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(generate_texture("plaid", 8, rng), ConfigError);
  o.generator = "";
  CHECK_THROWS_AS(load_corpus(o), ConfigError);
}

TEST_CASE("batch streams are seeded and prefetching changes nothing") {
  CorpusOptions o;
  o.generator = "stripes+blobs";
  o.samples = 10;
  const Corpus c = load_corpus(o);
  BatchStream a(c, 4, 7), b(c, 4, 7), other(c, 4, 8);
  PrefetchingStream p(c, 4, 7);
  bool differs = false;
  for (int i = 0; i < 6; ++i) {
    const Tensor x = a.next(), y = b.next(), z = p.next(), w = other.next();
    CHECK(x.n() == 4);
    CHECK(x.h() == 32);
    CHECK(x.storage() == y.storage());
    CHECK(x.storage() == z.storage());
    differs = differs || x.storage() != w.storage();
  }
  CHECK(differs);
  CHECK(a.epoch() == 2);
}

TEST_CASE("directory corpus crops and skips unreadable files") {
  const fs::path dir = scratch("corpus");
  std::mt19937_64 rng(2);
  save_image(testutil::random_tensor(1, 3, 300, 300, rng), dir / "a.png");
  std::ofstream(dir / "broken.png") << "not an image";
  CorpusOptions o;
  o.path = dir.string();
  o.resize = 300;
  o.crop = 256;
  const Corpus c = load_corpus(o);
  REQUIRE(c.size() == 1);
  BatchStream s(c, 3, 1);
  const Tensor b = s.next();
  CHECK(b.h() == 256);
  CHECK(b.w() == 256);

  const fs::path empty = scratch("corpus_empty");
  o.path = empty.string();
  CHECK_THROWS_AS(load_corpus(o), DataError);
}

TEST_CASE("image io round trip") {
  const fs::path dir = scratch("image");
  Tensor t(1, 3, 5, 7);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i % 256) / 255.0;
  save_image(t, dir / "x.png");
  const Tensor back = load_image(dir / "x.png");
  REQUIRE(back.same_shape(t));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.data()[i] == doctest::Approx(t.data()[i]).epsilon(1e-12));
  CHECK_THROWS_AS(load_image(dir / "missing.png"), DataError);
}

TEST_CASE("reflect padding and crop") {
  Tensor t(1, 1, 3, 3);
  for (int i = 0; i < 9; ++i) t.data()[i] = i;
  const Tensor p = reflect_pad_to_multiple(t, 4);
  REQUIRE(p.h() == 4);
  REQUIRE(p.w() == 4);
  CHECK(p.at(0, 0, 3, 0) == t.at(0, 0, 1, 0));
  CHECK(p.at(0, 0, 0, 3) == t.at(0, 0, 0, 1));
  const Tensor c = crop(p, 3, 3);
  CHECK(c.storage() == t.storage());
  CHECK(reflect_pad_to_multiple(t, 1).storage() == t.storage());
  Tensor big(1, 3, 2, 2, 2.0);
  const Tensor clipped = clip_unit(big);
  for (double v : clipped.storage()) CHECK(v == 1.0);
}

TEST_CASE("checkpoint round trip is byte identical") {
  const fs::path dir = scratch("ckpt");
  const ArchSpec spec = ArchSpec::reference(2, 0.25);
  Checkpoint ck;
  ck.put_network("encoder", build_encoder(spec, 1));
  ck.put_network("decoder", build_mirror_decoder(spec, 2));
  ck.put_embedding(EmbeddingMap::initialized(32, 8, 2, 4));
  ck.put_embedding(EmbeddingMap::initialized(16, 4, 1, 5));
  ck.hyperparams = {{"learning_rate", 1e-4}};
  ck.step = 12;
  ck.save(dir / "a");
  const Checkpoint back = Checkpoint::load(dir / "a");
  back.save(dir / "b");
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(slurp(dir / "a" / "tensors.bin") == slurp(dir / "b" / "tensors.bin"));
  CHECK(back.network("encoder").fingerprint() == build_encoder(spec, 1).fingerprint());
  CHECK(back.network("decoder").role() == NetworkRole::kDecoder);
  const auto maps = back.embeddings();
  REQUIRE(maps.size() == 2);
  CHECK(maps[0].tap_stage == 1);
  CHECK(maps[1].q == EmbeddingMap::initialized(32, 8, 2, 4).q);
  CHECK(back.step == 12);
  CHECK_THROWS_AS(back.network("student"), DataError);
  CHECK_THROWS_AS(Checkpoint::load(dir / "nowhere"), DataError);

  std::ofstream(dir / "a" / "manifest.json") << "{\"format\": \"other\"}";
  CHECK_THROWS_AS(Checkpoint::load(dir / "a"), DataError);
}

TEST_CASE("metrics lines") {
  const fs::path dir = scratch("metrics");
  MetricsRecord r;
  r.step = 3;
  r.embed = {0.5, 0.25};
  r.collab = 1.0;
  r.total = 8.5;
  {
    MetricsWriter w(dir / "m.jsonl");
    w.write(r);
    w.write(r);
  }
  std::ifstream in(dir / "m.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["step"] == 3);
    CHECK(j["embed"].size() == 2);
    CHECK_FALSE(j.contains("pixel"));
    CHECK(j.contains("wall_clock_s"));
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("adam step") {
  std::vector<double> p = {1.0, -2.0}, g = {0.5, -0.1};
  Adam adam(AdamOptions{0.1});
  const std::span<double> ps[] = {p}, gs[] = {g};
  adam.step(ps, gs);
  // First bias-corrected step moves each coordinate by lr against the gradient sign.
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(adam.steps() == 1);

  // Minimizes a quadratic.
  std::vector<double> x = {3.0}, gx = {0.0};
  Adam opt(AdamOptions{0.05});
  const std::span<double> xs[] = {x}, gxs[] = {gx};
  for (int i = 0; i < 2000; ++i) {
    gx[0] = 2.0 * (x[0] - 1.0);
    opt.step(xs, gxs);
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
}
