#include "cdist/training.hpp"

#include "cdist/error.hpp"
#include "cdist/optimizer.hpp"
#include "cdist/pruning.hpp"
#include "cdist/transforms.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <set>

namespace cdist {
namespace {

class BatchSource {
 public:
  BatchSource(const Corpus& corpus, int batch, std::uint64_t seed, bool deterministic) {
    if (deterministic)
      sync_ = std::make_unique<BatchStream>(corpus, batch, seed);
    else
      async_ = std::make_unique<PrefetchingStream>(corpus, batch, seed);
    steps_per_epoch_ = (corpus.size() + batch - 1) / batch;
  }
  Tensor next() { return sync_ ? sync_->next() : async_->next(); }
  int steps_per_epoch() const { return steps_per_epoch_; }

 private:
  std::unique_ptr<BatchStream> sync_;
  std::unique_ptr<PrefetchingStream> async_;
  int steps_per_epoch_ = 1;
};

std::vector<LayerGrad> tap_grads(const Network& enc, const std::vector<Tensor>& grads) {
  std::vector<LayerGrad> out;
  for (std::size_t i = 0; i < grads.size(); ++i) out.push_back({enc.tap_layer(static_cast<int>(i) + 1), &grads[i]});
  return out;
}

std::int64_t total_steps(const HyperParams& hp, int steps_per_epoch) {
  return hp.max_steps > 0 ? hp.max_steps : static_cast<std::int64_t>(hp.epochs) * steps_per_epoch;
}

bool finite(std::span<const std::span<double>> blocks) {
  for (const auto& b : blocks)
    for (double v : b)
      if (!std::isfinite(v)) return false;
  return true;
}

// Shared optimization loop: `compute` fills the gradient blocks and returns
// the step's metrics; `snapshot` builds a checkpoint of the current state.
void run_loop(std::int64_t steps, int steps_per_epoch, const HyperParams& hp, const TrainOptions& options,
              std::vector<std::span<double>> params, std::vector<std::span<double>> grads,
              const std::function<MetricsRecord()>& compute, const std::function<Checkpoint(std::int64_t)>& snapshot,
              std::vector<MetricsRecord>& history) {
  Adam adam(AdamOptions{hp.learning_rate});
  const auto start = std::chrono::steady_clock::now();
  auto diverge = [&](std::int64_t step, const std::string& why) {
    if (!options.out_dir.empty()) snapshot(step).save(options.out_dir / "last_good");
    throw DivergenceError(why + " at step " + std::to_string(step));
  };
  std::vector<std::vector<double>> backup(params.size());
  for (std::int64_t step = 0; step < steps; ++step) {
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    MetricsRecord rec = compute();
    rec.step = step;
    rec.epoch = static_cast<int>(step / steps_per_epoch);
    rec.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(rec.total) || !finite(grads)) diverge(step, "non-finite loss");
    for (std::size_t b = 0; b < params.size(); ++b) backup[b].assign(params[b].begin(), params[b].end());
    adam.step(params, grads);
    if (!finite(params)) {
      for (std::size_t b = 0; b < params.size(); ++b) std::copy(backup[b].begin(), backup[b].end(), params[b].begin());
      diverge(step, "non-finite parameters");
    }
    history.push_back(rec);
    if (options.on_metrics) options.on_metrics(rec);
  }
}

void require_corpora(const TrainingData& data, Collaboration c) {
  if (data.content == nullptr || data.content->images.empty()) throw DataError("training corpus is empty");
  if (c == Collaboration::kStylization && (data.style == nullptr || data.style->images.empty()))
    throw DataError("stylization collaboration needs a non-empty style corpus");
}

}  // namespace

Collaboration collaboration_from_string(const std::string& s) {
  if (s == "reconstruction") return Collaboration::kReconstruction;
  if (s == "stylization") return Collaboration::kStylization;
  throw ConfigError("collaboration must be 'reconstruction' or 'stylization', got '" + s + "'");
}

std::string to_string(Collaboration c) {
  return c == Collaboration::kReconstruction ? "reconstruction" : "stylization";
}

void HyperParams::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 1 && max_steps < 1) throw ConfigError("epochs must be positive");
  if (crop < 1 || crop > resize) throw ConfigError("crop must be positive and no larger than resize");
  if (!(collab_weight >= 0.0)) throw ConfigError("collab_weight must be non-negative");
  try {
    weights.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json HyperParams::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},      {"epochs", epochs},
          {"resize", resize},               {"crop", crop},                  {"max_steps", max_steps},
          {"lambda_p", weights.lambda_p},   {"lambda_s", weights.lambda_s}, {"beta", weights.beta},
          {"collab_weight", collab_weight}};
}

HyperParams HyperParams::from_json(const nlohmann::json& j, const HyperParams& base) {
  static const std::set<std::string> allowed = {"learning_rate", "batch_size", "epochs",   "resize", "crop",
                                                "max_steps",     "lambda_p",   "lambda_s", "beta",   "collab_weight"};
  if (!j.is_object()) throw ConfigError("hyperparams must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown hyperparameter '" + key + "'");
  HyperParams hp = base;
  try {
    hp.learning_rate = j.value("learning_rate", hp.learning_rate);
    hp.batch_size = j.value("batch_size", hp.batch_size);
    hp.epochs = j.value("epochs", hp.epochs);
    hp.resize = j.value("resize", hp.resize);
    hp.crop = j.value("crop", hp.crop);
    hp.max_steps = j.value("max_steps", hp.max_steps);
    hp.weights.lambda_p = j.value("lambda_p", hp.weights.lambda_p);
    hp.weights.lambda_s = j.value("lambda_s", hp.weights.lambda_s);
    hp.weights.beta = j.value("beta", hp.weights.beta);
    hp.collab_weight = j.value("collab_weight", hp.collab_weight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad hyperparameter value: ") + e.what());
  }
  hp.validate();
  return hp;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Network truncate_encoder(const Network& encoder, int stage) {
  if (encoder.role() != NetworkRole::kEncoder) throw ArgumentError("truncate_encoder needs an encoder");
  Network out(encoder.spec().truncated(stage), NetworkRole::kEncoder);
  for (std::size_t i = 0; i < out.convs().size(); ++i) out.convs()[i] = encoder.convs()[i];
  return out;
}

double decoder_objective(const Network& encoder, const Network& decoder, const Tensor& content, const Tensor* style,
                         const HyperParams& hp, Collaboration collaboration, ParamGrads* grads, MetricsRecord* rec) {
  const int stage = decoder.spec().max_stage;
  const FeatureTaps tx = encoder.encode(content, nullptr, stage);
  ForwardTrace td, te;
  ForwardTrace* ptd = grads ? &td : nullptr;
  ForwardTrace* pte = grads ? &te : nullptr;
  MetricsRecord local;
  MetricsRecord& r = rec ? *rec : local;
  if (collaboration == Collaboration::kReconstruction) {
    const Tensor y = decoder.forward(tx.output(), ptd);
    const FeatureTaps ty = encoder.encode(y, pte, stage);
    const ReconstructionLoss loss = reconstruction_loss(y, content, ty, tx, stage, hp.weights);
    if (grads) {
      Tensor gy = encoder.backward(te, nullptr, tap_grads(encoder, loss.grad_taps), nullptr, true);
      gy += loss.grad_image;
      decoder.backward(td, &gy, {}, grads, false);
    }
    r.pixel = loss.pixel;
    r.perceptual = loss.perceptual;
    r.total = loss.total;
  } else {
    if (style == nullptr) throw ArgumentError("stylization objective needs a style batch");
    const FeatureTaps ts = encoder.encode(*style, nullptr, stage);
    const Tensor t = adain_transfer(tx.output(), ts.output());
    const Tensor y = decoder.forward(t, ptd);
    const FeatureTaps ty = encoder.encode(y, pte, stage);
    const StylizationLoss loss = stylization_loss(ty, tx, ts, hp.weights);
    if (grads) {
      const Tensor gy = encoder.backward(te, nullptr, tap_grads(encoder, loss.grad_taps), nullptr, true);
      decoder.backward(td, &gy, {}, grads, false);
    }
    r.content = loss.content;
    r.style = loss.style;
    r.total = loss.total;
  }
  return r.total;
}

double distill_objective(const Network& teacher, const Network& decoder, const Network& student,
                         const std::vector<EmbeddingMap>& embeddings, const Tensor& content, const Tensor* style,
                         const HyperParams& hp, Collaboration collaboration, ParamGrads* student_grads,
                         std::vector<Eigen::MatrixXd>* q_grads, MetricsRecord* rec) {
  const int stage = decoder.spec().max_stage;
  if (static_cast<int>(embeddings.size()) != stage) throw ArgumentError("one embedding per tap is required");
  if ((student_grads == nullptr) != (q_grads == nullptr))
    throw ArgumentError("student and embedding gradients are requested together");
  const bool backprop = student_grads != nullptr;
  if (backprop && q_grads->size() != embeddings.size()) throw ArgumentError("one embedding gradient per tap");
  const double beta = hp.weights.beta;
  const double cw = hp.collab_weight;
  const EmbeddingMap& out_map = embeddings.back();
  MetricsRecord local;
  MetricsRecord& r = rec ? *rec : local;
  r.embed.clear();

  const FeatureTaps tx = teacher.encode(content, nullptr, stage);
  ForwardTrace trace_sx;
  const FeatureTaps sx = student.encode(content, backprop ? &trace_sx : nullptr, stage);

  std::vector<Tensor> student_tap_grads;
  for (int k = 1; k <= stage; ++k) {
    EmbeddingLoss e = embedding_loss(tx.stage(k), sx.stage(k), embeddings[k - 1]);
    r.embed.push_back(e.value);
    if (backprop) {
      (*q_grads)[k - 1] += beta * e.grad_q;
      for (double& v : e.grad_student.storage()) v *= beta;
      student_tap_grads.push_back(std::move(e.grad_student));
    }
  }

  const bool collab_grad = backprop && cw > 0.0;
  ForwardTrace td, te;
  ForwardTrace* ptd = collab_grad ? &td : nullptr;
  ForwardTrace* pte = collab_grad ? &te : nullptr;
  double collab = 0.0;
  if (collaboration == Collaboration::kReconstruction) {
    const Tensor y = decoder.forward(out_map.apply(sx.output()), ptd);
    const FeatureTaps ty = teacher.encode(y, pte, stage);
    const ReconstructionLoss loss = reconstruction_loss(y, content, ty, tx, stage, hp.weights);
    collab = loss.total;
    r.pixel = loss.pixel;
    r.perceptual = loss.perceptual;
    if (collab_grad) {
      Tensor gy = teacher.backward(te, nullptr, tap_grads(teacher, loss.grad_taps), nullptr, true);
      gy += loss.grad_image;
      Tensor gm = decoder.backward(td, &gy, {}, nullptr, true);
      for (double& v : gm.storage()) v *= cw;
      student_tap_grads.back() += out_map.backward(sx.output(), gm, &q_grads->back());
    }
  } else {
    if (style == nullptr) throw ArgumentError("stylization objective needs a style batch");
    const FeatureTaps ts = teacher.encode(*style, nullptr, stage);
    ForwardTrace trace_ss;
    const FeatureTaps ss = student.encode(*style, collab_grad ? &trace_ss : nullptr, stage);
    const Tensor mc = out_map.apply(sx.output());
    const Tensor ms = out_map.apply(ss.output());
    const Tensor t = adain_transfer(mc, ms);
    const Tensor y = decoder.forward(t, ptd);
    const FeatureTaps ty = teacher.encode(y, pte, stage);
    const StylizationLoss loss = stylization_loss(ty, tx, ts, hp.weights);
    collab = loss.total;
    r.content = loss.content;
    r.style = loss.style;
    if (collab_grad) {
      const Tensor gy = teacher.backward(te, nullptr, tap_grads(teacher, loss.grad_taps), nullptr, true);
      const Tensor gt = decoder.backward(td, &gy, {}, nullptr, true);
      Tensor gmc(mc.n(), mc.c(), mc.h(), mc.w()), gms(ms.n(), ms.c(), ms.h(), ms.w());
      for (int b = 0; b < t.n(); ++b) {
        const AdainGrads ag = adain_backward(mc.feature(b), ms.feature(b), gt.feature(b));
        gmc.set_feature(b, ag.content);
        gms.set_feature(b, ag.style);
      }
      for (double& v : gmc.storage()) v *= cw;
      for (double& v : gms.storage()) v *= cw;
      student_tap_grads.back() += out_map.backward(sx.output(), gmc, &q_grads->back());
      const Tensor gss = out_map.backward(ss.output(), gms, &q_grads->back());
      const LayerGrad style_grad{student.tap_layer(stage), &gss};
      student.backward(trace_ss, nullptr, std::span<const LayerGrad>(&style_grad, 1), student_grads, false);
    }
  }
  if (backprop) student.backward(trace_sx, nullptr, tap_grads(student, student_tap_grads), student_grads, false);
  r.collab = collab;
  r.total = total_distill_loss(r.embed, cw * collab, beta);
  return r.total;
}

DecoderResult train_decoder(const Network& encoder, int stage, const TrainingData& data, const HyperParams& hp,
                            Collaboration collaboration, const TrainOptions& options) {
  hp.validate();
  require_corpora(data, collaboration);
  if (encoder.role() != NetworkRole::kEncoder) throw ArgumentError("train_decoder needs an encoder");
  if (stage < 1 || stage > encoder.spec().max_stage) throw ArgumentError("decoder stage out of range");

  const Network enc = truncate_encoder(encoder, stage);
  DecoderResult result;
  result.decoder = build_mirror_decoder(enc.spec(), derive_seed(options.seed, 0));
  Network& dec = result.decoder;
  ParamGrads grads = dec.zero_grads();

  BatchSource content(*data.content, hp.batch_size, derive_seed(options.seed, 1), options.deterministic);
  std::unique_ptr<BatchSource> style;
  if (collaboration == Collaboration::kStylization)
    style = std::make_unique<BatchSource>(*data.style, hp.batch_size, derive_seed(options.seed, 2), options.deterministic);

  auto compute = [&]() {
    MetricsRecord rec;
    const Tensor x = content.next();
    if (style) {
      const Tensor st = style->next();
      decoder_objective(enc, dec, x, &st, hp, collaboration, &grads, &rec);
    } else {
      decoder_objective(enc, dec, x, nullptr, hp, collaboration, &grads, &rec);
    }
    return rec;
  };

  auto snapshot = [&](std::int64_t step) {
    Checkpoint ck;
    ck.put_network("encoder", enc);
    ck.put_network("decoder", dec);
    ck.hyperparams = hp.to_json();
    ck.info = {{"kind", "decoder"}, {"collaboration", to_string(collaboration)}, {"stage", stage},
               {"seed", options.seed}};
    ck.step = step;
    return ck;
  };

  const std::int64_t steps = total_steps(hp, content.steps_per_epoch());
  run_loop(steps, content.steps_per_epoch(), hp, options, dec.parameter_blocks(), dec.grad_blocks(grads), compute,
           snapshot, result.history);
  result.checkpoint = snapshot(steps);
  return result;
}

DistillResult collaborative_distill(const Network& teacher, const Network& decoder, const ArchSpec& student_spec,
                                    const TrainingData& data, const HyperParams& hp, Collaboration collaboration,
                                    const TrainOptions& options, StudentInit init) {
  hp.validate();
  require_corpora(data, collaboration);
  if (decoder.role() != NetworkRole::kDecoder) throw ArgumentError("collaborator must be a decoder");
  const int stage = decoder.spec().max_stage;
  if (stage > teacher.spec().max_stage) throw ConfigError("collaborator is deeper than the teacher encoder");
  const Network tenc = truncate_encoder(teacher, stage);
  if (!(tenc.spec() == decoder.spec())) throw ConfigError("collaborator was not built for this teacher");
  student_spec.validate();
  if (student_spec.max_stage != stage) throw ConfigError("student depth must match the collaborator stage");

  DistillResult result;
  result.student = init == StudentInit::kL1Filters ? init_student_from_teacher(tenc, student_spec)
                                                   : build_encoder(student_spec, derive_seed(options.seed, 3));
  Network& student = result.student;
  const auto t_channels = tenc.spec().tap_channels();
  const auto s_channels = student_spec.tap_channels();
  for (int k = 1; k <= stage; ++k) {
    if (t_channels[k - 1] == s_channels[k - 1])
      result.embeddings.push_back(EmbeddingMap::identity(t_channels[k - 1], k));
    else
      result.embeddings.push_back(
          EmbeddingMap::initialized(t_channels[k - 1], s_channels[k - 1], k, derive_seed(options.seed, 10 + k)));
  }
  const EmbeddingMap& out_map = result.embeddings.back();
  if (out_map.teacher_channels() != decoder.input_channels())
    throw ConfigError("embedding output width does not match the decoder input");

  result.initial_student = student;
  result.initial_embeddings = result.embeddings;

  ParamGrads sgrads = student.zero_grads();
  std::vector<Eigen::MatrixXd> qgrads;
  for (const auto& e : result.embeddings) qgrads.push_back(Eigen::MatrixXd::Zero(e.q.rows(), e.q.cols()));

  std::vector<std::span<double>> params = student.parameter_blocks();
  std::vector<std::span<double>> grads = student.grad_blocks(sgrads);
  for (std::size_t i = 0; i < result.embeddings.size(); ++i) {
    params.emplace_back(result.embeddings[i].q.data(), result.embeddings[i].q.size());
    grads.emplace_back(qgrads[i].data(), qgrads[i].size());
  }

  BatchSource content(*data.content, hp.batch_size, derive_seed(options.seed, 1), options.deterministic);
  std::unique_ptr<BatchSource> style;
  if (collaboration == Collaboration::kStylization)
    style = std::make_unique<BatchSource>(*data.style, hp.batch_size, derive_seed(options.seed, 2), options.deterministic);

  auto compute = [&]() {
    MetricsRecord rec;
    const Tensor x = content.next();
    if (style) {
      const Tensor st = style->next();
      distill_objective(tenc, decoder, student, result.embeddings, x, &st, hp, collaboration, &sgrads, &qgrads, &rec);
    } else {
      distill_objective(tenc, decoder, student, result.embeddings, x, nullptr, hp, collaboration, &sgrads, &qgrads,
                        &rec);
    }
    return rec;
  };

  auto snapshot = [&](std::int64_t step) {
    Checkpoint ck;
    ck.put_network("teacher", tenc);
    ck.put_network("decoder", decoder);
    ck.put_network("student", student);
    for (const auto& e : result.embeddings) ck.put_embedding(e);
    ck.hyperparams = hp.to_json();
    ck.info = {{"kind", "distill"},
               {"collaboration", to_string(collaboration)},
               {"stage", stage},
               {"seed", options.seed},
               {"init", init == StudentInit::kL1Filters ? "l1" : "random"}};
    ck.step = step;
    return ck;
  };

  const std::int64_t steps = total_steps(hp, content.steps_per_epoch());
  run_loop(steps, content.steps_per_epoch(), hp, options, params, grads, compute, snapshot, result.history);
  result.checkpoint = snapshot(steps);
  return result;
}

DistillObjectives evaluate_distill(const Network& teacher, const Network& decoder, const Network& student,
                                   const std::vector<EmbeddingMap>& embeddings, const Tensor& content,
                                   const Tensor* style, const HyperParams& hp, Collaboration collaboration) {
  MetricsRecord rec;
  distill_objective(truncate_encoder(teacher, decoder.spec().max_stage), decoder, student, embeddings, content, style,
                    hp, collaboration, nullptr, nullptr, &rec);
  return {rec.embed, rec.collab.value_or(0.0)};
}

double reconstruction_error(const Network& encoder, const EmbeddingMap* embedding, const Network& decoder,
                            const std::vector<Tensor>& images) {
  if (images.empty()) throw DataError("no evaluation images");
  const int stage = decoder.spec().max_stage;
  double acc = 0.0;
  for (const Tensor& x : images) {
    Tensor f = encoder.encode(x, nullptr, stage).output();
    if (embedding != nullptr) f = embedding->apply(f);
    acc += mean_squared_error(decoder.forward(f), x);
  }
  return acc / static_cast<double>(images.size());
}

CrossMatrix cross_pair_experiment(const TrainedPair& a, const TrainedPair& b, const std::vector<Tensor>& images) {
  if (a.steps <= 0 || b.steps <= 0) throw PreconditionError("cross-pair experiment needs trained pairs");
  const TrainedPair* pairs[2] = {&a, &b};
  CrossMatrix m{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m[i][j] = reconstruction_error(pairs[i]->encoder, nullptr, pairs[j]->decoder, images);
  return m;
}

}  // namespace cdist
