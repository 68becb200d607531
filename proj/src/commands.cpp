#include "cdist/commands.hpp"

#include "cdist/arch.hpp"
#include "cdist/corpus.hpp"
#include "cdist/error.hpp"
#include "cdist/image_io.hpp"
#include "cdist/stylize.hpp"
#include "cdist/training.hpp"
#include "cdist/transforms.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

namespace cdist {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kDefaultGenerator = "checker+stripes+blobs+gradient+noise";

// Reads keys from one config object, records the resolved values and
// rejects anything it was not asked about.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    T v = std::move(fallback);
    if (j_.contains(key)) {
      try {
        v = j_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("bad value for " + name(key) + ": " + e.what());
      }
    }
    resolved[key] = v;
    return v;
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing required key " + name(key));
    return get<T>(key, T{});
  }

  // Nested object or null; the caller records its resolved form.
  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key " + name(key));
  }

  std::string name(const std::string& key) const { return where_.empty() ? "'" + key + "'" : "'" + where_ + "." + key + "'"; }

  json resolved = json::object();

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

struct Common {
  fs::path out;
  fs::path base;
  std::uint64_t seed = 0;
  bool deterministic = false;

  fs::path path(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
  }
};

Common read_common(Section& s, const RunOptions& run, const std::string& command) {
  Common c;
  c.base = run.base_dir;
  c.seed = run.seed ? *run.seed : s.get<std::uint64_t>("seed", 0);
  s.resolved["seed"] = c.seed;
  if (run.seed) s.get<std::uint64_t>("seed", 0);
  const bool det = s.get<bool>("deterministic", false);
  c.deterministic = det || run.deterministic;
  s.resolved["deterministic"] = c.deterministic;
  if (run.out_dir) {
    c.out = *run.out_dir;
    s.get<std::string>("out", "");
  } else {
    const std::string out = s.get<std::string>("out", "");
    if (out.empty()) throw ConfigError("no output directory: pass --out or set 'out'");
    c.out = c.path(out);
  }
  s.resolved["out"] = c.out.string();
  s.resolved["command"] = command;
  return c;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  f << j.dump(2) << "\n";
  if (!f) throw DataError("cannot write " + path.string());
}

json finish_run(const Common& c, const json& resolved, json report, const std::string& command) {
  report["schema_version"] = kReportSchemaVersion;
  report["command"] = command;
  write_json(c.out / "config.resolved.json", resolved);
  write_json(c.out / "report.json", report);
  return report;
}

HyperParams desk_hyperparams() {
  HyperParams hp;
  hp.resize = 48;
  hp.crop = 32;
  return hp;
}

HyperParams read_hyperparams(Section& s) {
  const json* j = s.child("hyperparams");
  const HyperParams hp = j ? HyperParams::from_json(*j, desk_hyperparams()) : desk_hyperparams();
  s.resolved["hyperparams"] = hp.to_json();
  return hp;
}

ArchSpec read_arch(Section& s, const std::string& key, const json& fallback) {
  const json* j = s.child(key);
  const ArchSpec spec = arch_from_json(j ? *j : fallback);
  s.resolved[key] = to_json(spec);
  return spec;
}

json desk_arch() { return {{"max_stage", 3}, {"width_factor", 0.25}}; }

// {"path"} or {"generator", "samples"}, plus "seed"; sizes come from the
// hyperparameters.
Corpus read_corpus(Section& parent, const std::string& key, const Common& c, const HyperParams& hp,
                   std::uint64_t stream, int default_samples, bool required) {
  const json* j = parent.child(key);
  if (j == nullptr && !required) return {};
  const json empty = json::object();
  Section s(j ? *j : empty, key);
  CorpusOptions o;
  const std::string path = s.get<std::string>("path", "");
  o.generator = s.get<std::string>("generator", path.empty() ? kDefaultGenerator : "");
  if (!path.empty() && !o.generator.empty()) throw ConfigError(key + ": set either 'path' or 'generator'");
  if (!path.empty()) o.path = c.path(path).string();
  o.samples = s.get<int>("samples", default_samples);
  o.seed = s.get<std::uint64_t>("seed", derive_seed(c.seed, stream));
  o.resize = hp.resize;
  o.crop = hp.crop;
  s.finish();
  if (o.samples < 1) throw ConfigError(key + ".samples must be positive");
  parent.resolved[key] = s.resolved;
  if (!path.empty()) parent.resolved[key]["path"] = o.path;
  return load_corpus(o);
}

std::vector<Tensor> eval_images(const Corpus& corpus) {
  std::vector<Tensor> out;
  for (const auto& im : corpus.images) out.push_back(crop(im, corpus.crop, corpus.crop));
  return out;
}

// Encoder from "encoder_checkpoint", else a seeded random one from "arch".
Network read_encoder(Section& s, const Common& c, const json& default_arch) {
  const std::string ck = s.get<std::string>("encoder_checkpoint", "");
  const std::uint64_t seed = s.get<std::uint64_t>("encoder_seed", derive_seed(c.seed, 100));
  if (!ck.empty()) {
    if (s.has("arch")) throw ConfigError("set either 'arch' or 'encoder_checkpoint'");
    s.child("arch");
    s.resolved["encoder_checkpoint"] = c.path(ck).string();
    const Checkpoint chk = Checkpoint::load(c.path(ck));
    for (const char* name : {"encoder", "teacher", "student"})
      if (chk.has_network(name) && chk.networks.at(name).role == NetworkRole::kEncoder) return chk.network(name);
    throw DataError("checkpoint " + ck + " holds no encoder");
  }
  return build_encoder(read_arch(s, "arch", default_arch), seed);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no images in " + dir.string());
  return files;
}

json loss_summary(const std::vector<MetricsRecord>& history) {
  if (history.empty()) return json::object();
  return {{"initial_total", history.front().total}, {"final_total", history.back().total}};
}

void attach_metrics(TrainOptions& o, const fs::path& path, std::shared_ptr<MetricsWriter>& writer) {
  writer = std::make_shared<MetricsWriter>(path);
  o.on_metrics = [w = writer](const MetricsRecord& r) { w->write(r); };
}

}  // namespace

json cmd_train_decoder(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "train-decoder");
  const Network encoder = read_encoder(s, c, desk_arch());
  const int stage = s.get<int>("stage", encoder.spec().max_stage);
  const Collaboration collab = collaboration_from_string(s.get<std::string>("collaboration", "reconstruction"));
  const HyperParams hp = read_hyperparams(s);
  const Corpus content = read_corpus(s, "corpus", c, hp, 1, 64, true);
  const Corpus style = read_corpus(s, "style_corpus", c, hp, 2, 64, collab == Collaboration::kStylization);
  s.finish();

  fs::create_directories(c.out);
  TrainOptions o;
  o.seed = c.seed;
  o.deterministic = c.deterministic;
  o.out_dir = c.out;
  std::shared_ptr<MetricsWriter> writer;
  attach_metrics(o, c.out / "metrics.jsonl", writer);
  const std::uint64_t before = encoder.fingerprint();
  DecoderResult r = train_decoder(encoder, stage, {&content, style.images.empty() ? nullptr : &style}, hp, collab, o);
  if (encoder.fingerprint() != before) throw Error("frozen encoder was modified during training");
  r.checkpoint.save(c.out / "checkpoint");

  json report = loss_summary(r.history);
  report["stage"] = stage;
  report["collaboration"] = to_string(collab);
  report["steps"] = r.history.size();
  report["encoder_fingerprint"] = hex(before);
  report["decoder_fingerprint"] = hex(r.decoder.fingerprint());
  report["decoder_params"] = r.decoder.parameter_count();
  report["checkpoint"] = "checkpoint";
  report["metrics"] = "metrics.jsonl";
  return finish_run(c, s.resolved, report, "train-decoder");
}

json cmd_distill(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "distill");
  const std::string ck_path = s.require<std::string>("decoder_checkpoint");
  s.resolved["decoder_checkpoint"] = c.path(ck_path).string();
  const Checkpoint ck = Checkpoint::load(c.path(ck_path));
  if (!ck.has_network("encoder") || !ck.has_network("decoder"))
    throw DataError("decoder checkpoint must hold 'encoder' and 'decoder'");
  const Network teacher = ck.network("encoder");
  const Network decoder = ck.network("decoder");

  ArchSpec student_spec;
  const double factor = s.get<double>("width_factor", 0.25);
  if (s.has("student")) {
    student_spec = read_arch(s, "student", json::object());
  } else {
    s.child("student");
    auto layout = teacher.spec().layout;
    for (auto& stage : layout)
      for (int& w : stage) w = scale_width(w, factor);
    student_spec = ArchSpec::from_layout(layout);
    student_spec.width_factor = teacher.spec().width_factor * factor;
    s.resolved["student"] = to_json(student_spec);
  }
  const std::string init_name = s.get<std::string>("init", "l1");
  if (init_name != "l1" && init_name != "random") throw ConfigError("init must be 'l1' or 'random'");
  const StudentInit init = init_name == "l1" ? StudentInit::kL1Filters : StudentInit::kRandom;
  const Collaboration collab = collaboration_from_string(s.get<std::string>("collaboration", "reconstruction"));
  const HyperParams hp = read_hyperparams(s);
  const Corpus content = read_corpus(s, "corpus", c, hp, 1, 64, true);
  const Corpus style = read_corpus(s, "style_corpus", c, hp, 2, 64, collab == Collaboration::kStylization);
  const Corpus held = read_corpus(s, "eval_corpus", c, hp, 3, 16, true);
  s.finish();

  fs::create_directories(c.out);
  TrainOptions o;
  o.seed = c.seed;
  o.deterministic = c.deterministic;
  o.out_dir = c.out;
  std::shared_ptr<MetricsWriter> writer;
  attach_metrics(o, c.out / "metrics.jsonl", writer);
  const std::uint64_t t_fp = teacher.fingerprint(), d_fp = decoder.fingerprint();
  DistillResult r = collaborative_distill(teacher, decoder, student_spec,
                                          {&content, style.images.empty() ? nullptr : &style}, hp, collab, o, init);
  if (teacher.fingerprint() != t_fp || decoder.fingerprint() != d_fp)
    throw Error("frozen teacher or decoder was modified during distillation");
  r.checkpoint.save(c.out / "checkpoint");

  const std::vector<Tensor> images = eval_images(held);
  const Tensor batch = stack(images);
  const Tensor style_batch = style.images.empty() ? Tensor() : stack(eval_images(style));
  const Tensor* sb = nullptr;
  Tensor style_eval;
  if (collab == Collaboration::kStylization) {
    std::vector<Tensor> st;
    for (int i = 0; i < batch.n(); ++i) st.push_back(style_batch.image(i % style_batch.n()));
    style_eval = stack(st);
    sb = &style_eval;
  }
  const DistillObjectives before =
      evaluate_distill(teacher, decoder, r.initial_student, r.initial_embeddings, batch, sb, hp, collab);
  const DistillObjectives after = evaluate_distill(teacher, decoder, r.student, r.embeddings, batch, sb, hp, collab);
  const int stage = decoder.spec().max_stage;
  const double teacher_err = reconstruction_error(truncate_encoder(teacher, stage), nullptr, decoder, images);
  const double student_err = reconstruction_error(r.student, &r.embeddings.back(), decoder, images);

  json report = loss_summary(r.history);
  report["stage"] = stage;
  report["collaboration"] = to_string(collab);
  report["init"] = init_name;
  report["steps"] = r.history.size();
  report["objectives_initial"] = {{"embed", before.embed}, {"collab", before.collab}};
  report["objectives_final"] = {{"embed", after.embed}, {"collab", after.collab}};
  report["teacher_reconstruction_error"] = teacher_err;
  report["student_reconstruction_error"] = student_err;
  report["error_ratio"] = student_err / teacher_err;
  report["teacher_params"] = truncate_encoder(teacher, stage).parameter_count();
  report["student_params"] = r.student.parameter_count();
  report["student_fingerprint"] = hex(r.student.fingerprint());
  report["checkpoint"] = "checkpoint";
  report["metrics"] = "metrics.jsonl";
  return finish_run(c, s.resolved, report, "distill");
}

json cmd_stylize(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "stylize");
  const auto ck_names = s.require<std::vector<std::string>>("checkpoints");
  if (ck_names.empty()) throw ConfigError("'checkpoints' must list at least one checkpoint");
  std::vector<fs::path> dirs;
  json resolved_cks = json::array();
  for (const auto& n : ck_names) {
    dirs.push_back(c.path(n));
    resolved_cks.push_back(dirs.back().string());
  }
  s.resolved["checkpoints"] = resolved_cks;
  const bool use_student = s.get<bool>("use_student", true);
  const std::string method = s.get<std::string>("method", "wct");
  if (method != "wct" && method != "adain") throw ConfigError("method must be 'wct' or 'adain'");
  const fs::path content_path = c.path(s.require<std::string>("content"));
  const fs::path style_path = c.path(s.require<std::string>("style"));
  s.resolved["content"] = content_path.string();
  s.resolved["style"] = style_path.string();
  const double alpha = s.get<double>("alpha", 1.0);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  const std::string output = s.get<std::string>("output", "stylized.png");
  const bool also_reconstruct = s.get<bool>("also_reconstruct", false);
  s.finish();

  const ModelBundle bundle = ModelBundle::from_checkpoints(dirs, use_student);
  const Tensor content = load_image(content_path);
  const Tensor style = load_image(style_path);
  fs::create_directories(c.out);
  const Tensor out = method == "wct" ? wct_stylize(bundle, content, style, alpha)
                                     : adain_stylize(bundle, content, style, alpha);
  save_image(out, c.out / output);

  json report;
  report["method"] = method;
  report["alpha"] = alpha;
  json stages = json::array();
  for (const auto& p : bundle.pairs()) stages.push_back(p.stage);
  report["stages"] = stages;
  report["output"] = output;
  report["height"] = out.h();
  report["width"] = out.w();
  if (also_reconstruct) {
    save_image(reconstruct(bundle, content), c.out / "reconstruction.png");
    report["reconstruction"] = "reconstruction.png";
  }
  return finish_run(c, s.resolved, report, "stylize");
}

json cmd_gatys(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "gatys");
  const fs::path content_path = c.path(s.require<std::string>("content"));
  const fs::path style_path = c.path(s.require<std::string>("style"));
  s.resolved["content"] = content_path.string();
  s.resolved["style"] = style_path.string();
  const Network encoder = read_encoder(s, c, desk_arch());
  GatysOptions go;
  go.iterations = s.get<int>("iterations", 200);
  go.weights.lambda_s = s.get<double>("lambda_s", go.weights.lambda_s);
  const std::string output = s.get<std::string>("output", "gatys.png");
  const std::string csv = s.get<std::string>("loss_csv", "loss_history.csv");
  s.finish();
  if (go.iterations < 0) throw ConfigError("iterations must be non-negative");

  const Tensor content = load_image(content_path);
  const int d = encoder.spec().divisor();
  const Tensor cp = reflect_pad_to_multiple(content, d);
  const Tensor sp = reflect_pad_to_multiple(load_image(style_path), d);
  const GatysResult r = gatys_stylize(cp, sp, encoder, go);
  fs::create_directories(c.out);
  save_image(crop(r.image, content.h(), content.w()), c.out / output);
  write_loss_csv(r.loss_history, c.out / csv);

  json report;
  report["iterations"] = go.iterations;
  report["lambda_s"] = go.weights.lambda_s;
  report["initial_loss"] = r.loss_history.empty() ? 0.0 : r.loss_history.front();
  report["final_loss"] = r.loss_history.empty() ? 0.0 : r.loss_history.back();
  report["accepted_steps"] = r.loss_history.empty() ? 0 : r.loss_history.size() - 1;
  report["aborted"] = r.aborted;
  report["output"] = output;
  report["loss_csv"] = csv;
  return finish_run(c, s.resolved, report, "gatys");
}

json cmd_eval(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "eval");
  const fs::path stylized_dir = c.path(s.require<std::string>("stylized_dir"));
  s.resolved["stylized_dir"] = stylized_dir.string();
  std::vector<fs::path> style_files;
  const std::vector<fs::path> stylized = image_files(stylized_dir);
  if (s.has("style_dir") == s.has("style")) throw ConfigError("set exactly one of 'style_dir' or 'style'");
  if (s.has("style_dir")) {
    const fs::path dir = c.path(s.get<std::string>("style_dir", ""));
    s.resolved["style_dir"] = dir.string();
    style_files = image_files(dir);
    if (style_files.size() != stylized.size())
      throw DataError("stylized and style directories hold different numbers of images");
  } else {
    const fs::path one = c.path(s.get<std::string>("style", ""));
    s.resolved["style"] = one.string();
    style_files.assign(stylized.size(), one);
  }
  const Network encoder = read_encoder(s, c, desk_arch());
  const int stages = s.get<int>("stages", encoder.spec().max_stage);
  s.finish();
  if (stages < 1 || stages > encoder.spec().max_stage) throw ConfigError("stages out of range for the encoder");

  const int d = encoder.spec().divisor();
  json rows = json::array();
  std::vector<double> sums(stages, 0.0);
  for (std::size_t i = 0; i < stylized.size(); ++i) {
    const Tensor a = reflect_pad_to_multiple(load_image(stylized[i]), d);
    const Tensor b = reflect_pad_to_multiple(load_image(style_files[i]), d);
    json row = {{"image", stylized[i].filename().string()}, {"style", style_files[i].filename().string()}};
    for (int k = 1; k <= stages; ++k) {
      const double v = style_distance(a, b, encoder, k);
      row["Conv" + std::to_string(k)] = v;
      sums[k - 1] += v;
    }
    rows.push_back(row);
  }
  json mean = json::object();
  for (int k = 1; k <= stages; ++k) mean["Conv" + std::to_string(k)] = sums[k - 1] / static_cast<double>(stylized.size());

  fs::create_directories(c.out);
  json report;
  report["stages"] = stages;
  report["rows"] = rows;
  report["mean"] = mean;
  return finish_run(c, s.resolved, report, "eval");
}

json cmd_bench(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "bench");
  const ArchSpec teacher = read_arch(s, "teacher", {{"preset", "vgg19"}});
  const ArchSpec student = read_arch(s, "student", {{"preset", "vgg19-quarter"}});
  const int resolution = s.get<int>("resolution", 3000);
  const std::int64_t budget = s.get<std::int64_t>("memory_budget_bytes", std::int64_t{12} << 30);
  const int bytes = s.get<int>("bytes_per_scalar", 4);
  const bool timing = s.get<bool>("timing", false);
  const int timing_resolution = s.get<int>("timing_resolution", 64);
  s.finish();
  if (resolution < 1 || bytes < 1 || budget < 1 || timing_resolution < 1)
    throw ConfigError("resolution, budget and bytes_per_scalar must be positive");

  auto row = [&](const ArchSpec& spec) {
    const int d = spec.divisor();
    const int padded = (resolution + d - 1) / d * d;
    const ParamBreakdown p = param_breakdown(spec);
    json r;
    r["arch"] = to_json(spec);
    r["params"] = p.pair;
    r["params_encoder"] = p.encoder;
    r["params_decoder"] = p.decoder;
    r["params_all_stage_pairs"] = p.all_stage_pairs;
    r["storage_mb"] = static_cast<double>(p.pair) * bytes / 1e6;
    r["padded_resolution"] = padded;
    r["gflops"] = static_cast<double>(count_flops(spec, padded, padded, true)) / 1e9;
    r["gflops_encoder"] = static_cast<double>(count_flops(spec, padded, padded, false)) / 1e9;
    r["peak_memory_bytes"] = estimate_peak_activation_memory(spec, padded, padded, bytes);
    r["max_resolution"] = probe_max_resolution(spec, budget, bytes);
    return r;
  };
  const json t = row(teacher), st = row(student);
  json report;
  report["resolution"] = resolution;
  report["memory_budget_bytes"] = budget;
  report["bytes_per_scalar"] = bytes;
  report["teacher"] = t;
  report["student"] = st;
  report["params_ratio"] = t["params"].get<double>() / st["params"].get<double>();
  report["storage_ratio"] = t["storage_mb"].get<double>() / st["storage_mb"].get<double>();
  report["flops_ratio"] = t["gflops"].get<double>() / st["gflops"].get<double>();
  report["max_resolution_ratio"] = st["max_resolution"].get<double>() / t["max_resolution"].get<double>();

  fs::create_directories(c.out);
  if (timing) {
    // Wall-clock numbers live outside report.json so reports stay reproducible.
    json tj;
    for (const auto& [name, spec] : {std::pair{"teacher", teacher}, std::pair{"student", student}}) {
      const Network enc = build_encoder(spec, derive_seed(c.seed, 1));
      const Network dec = build_mirror_decoder(spec, derive_seed(c.seed, 2));
      const int side = (timing_resolution + spec.divisor() - 1) / spec.divisor() * spec.divisor();
      const Tensor x(1, 3, side, side, 0.5);
      const auto t0 = std::chrono::steady_clock::now();
      dec.forward(enc.forward(x));
      tj[name] = {{"side", side}, {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    }
    write_json(c.out / "timing.json", tj);
    report["timing"] = "timing.json";
  }
  return finish_run(c, s.resolved, report, "bench");
}

json cmd_cross_pair(const RunOptions& run) {
  Section s(run.config, "");
  const Common c = read_common(s, run, "cross-pair");
  const ArchSpec spec = read_arch(s, "arch", desk_arch());
  const int stage = s.get<int>("stage", spec.max_stage);
  const auto seeds = s.get<std::vector<std::uint64_t>>(
      "encoder_seeds", {derive_seed(c.seed, 200), derive_seed(c.seed, 201)});
  if (seeds.size() != 2 || seeds[0] == seeds[1]) throw ConfigError("encoder_seeds must hold two different seeds");
  const HyperParams hp = read_hyperparams(s);
  const Corpus corpus = read_corpus(s, "corpus", c, hp, 1, 64, true);
  const Corpus held = read_corpus(s, "eval_corpus", c, hp, 3, 16, true);
  s.finish();

  fs::create_directories(c.out);
  TrainedPair pairs[2];
  json training = json::array();
  for (int i = 0; i < 2; ++i) {
    const Network enc = truncate_encoder(build_encoder(spec, seeds[i]), stage);
    TrainOptions o;
    o.seed = derive_seed(c.seed, 300 + i);
    o.deterministic = c.deterministic;
    o.out_dir = c.out / ("pair" + std::to_string(i));
    std::shared_ptr<MetricsWriter> writer;
    attach_metrics(o, c.out / ("pair" + std::to_string(i)) / "metrics.jsonl", writer);
    DecoderResult r = train_decoder(enc, stage, {&corpus, nullptr}, hp, Collaboration::kReconstruction, o);
    r.checkpoint.save(c.out / ("pair" + std::to_string(i)) / "checkpoint");
    training.push_back(loss_summary(r.history));
    pairs[i] = {enc, std::move(r.decoder), static_cast<std::int64_t>(r.history.size())};
  }
  const CrossMatrix m = cross_pair_experiment(pairs[0], pairs[1], eval_images(held));
  const double max_diag = std::max(m[0][0], m[1][1]);
  const double min_off = std::min(m[0][1], m[1][0]);

  json report;
  report["stage"] = stage;
  report["encoder_seeds"] = seeds;
  report["training"] = training;
  report["matrix"] = {{m[0][0], m[0][1]}, {m[1][0], m[1][1]}};
  report["max_diagonal"] = max_diag;
  report["min_off_diagonal"] = min_off;
  report["ratio"] = min_off / max_diag;
  report["exclusive"] = max_diag < min_off;
  return finish_run(c, s.resolved, report, "cross-pair");
}

json run_command(const std::string& name, const RunOptions& run) {
  if (name == "train-decoder") return cmd_train_decoder(run);
  if (name == "distill") return cmd_distill(run);
  if (name == "stylize") return cmd_stylize(run);
  if (name == "gatys") return cmd_gatys(run);
  if (name == "eval") return cmd_eval(run);
  if (name == "bench") return cmd_bench(run);
  if (name == "cross-pair") return cmd_cross_pair(run);
  throw ArgumentError("unknown command '" + name + "'");
}

}  // namespace cdist
