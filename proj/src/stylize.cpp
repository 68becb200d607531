#include "cdist/stylize.hpp"

#include "cdist/error.hpp"
#include "cdist/image_io.hpp"
#include "cdist/transforms.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace cdist {
namespace {

void require_single(const Tensor& t, const char* what) {
  if (t.n() != 1 || t.c() != 3 || t.h() < 1 || t.w() < 1)
    throw ArgumentError(std::string(what) + " must be a single RGB image");
}

Tensor encode_stage(const StagePair& p, const Tensor& x) {
  return p.encoder.encode(x, nullptr, p.stage).output();
}

Tensor embed(const StagePair& p, Tensor f) { return p.embedding ? p.embedding->apply(f) : f; }

// Content + style objective with fixed targets.
class GatysObjective {
 public:
  GatysObjective(const Tensor& content, const Tensor& style, const Network& encoder, const LossWeights& w)
      : encoder_(encoder), w_(w), h_(content.h()), wd_(content.w()) {
    if (encoder.role() != NetworkRole::kEncoder) throw ArgumentError("gatys needs an encoder");
    stages_ = encoder.spec().max_stage;
    const int c = std::min(4, stages_);
    const std::string name = "conv" + std::to_string(c) + "_2";
    content_layer_ = encoder.tap_layer(c);
    for (int i = 0; i < static_cast<int>(encoder.layers().size()); ++i)
      if (encoder.layers()[i].name == name) content_layer_ = i;
    last_layer_ = std::max(content_layer_, encoder.tap_layer(stages_));

    ForwardTrace tc;
    encoder.forward(content, &tc, last_layer_);
    content_target_ = tc.outputs[content_layer_];
    ForwardTrace ts;
    encoder.forward(style, &ts, encoder.tap_layer(stages_));
    for (int k = 1; k <= stages_; ++k) style_grams_.push_back(gram(ts.outputs[encoder.tap_layer(k)].feature(0), true));
  }

  int size() const { return 3 * h_ * wd_; }

  double evaluate(const Tensor& x, Tensor* grad) const {
    ForwardTrace t;
    encoder_.forward(x, &t, last_layer_);
    std::vector<Tensor> grads;
    std::vector<LayerGrad> lg;
    grads.reserve(stages_ + 1);

    const Tensor& f = t.outputs[content_layer_];
    const double nc = static_cast<double>(f.size());
    double content = 0.0;
    Tensor gc(f.n(), f.c(), f.h(), f.w());
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double d = f.data()[i] - content_target_.data()[i];
      content += d * d / nc;
      gc.data()[i] = 2.0 * d / nc;
    }
    grads.push_back(std::move(gc));
    lg.push_back({content_layer_, &grads.back()});

    double style = 0.0;
    for (int k = 1; k <= stages_; ++k) {
      const int layer = encoder_.tap_layer(k);
      const FeatureMap fm = t.outputs[layer].feature(0);
      const Eigen::MatrixXd diff = gram(fm, true) - style_grams_[k - 1];
      const double n2 = static_cast<double>(diff.size());
      style += diff.squaredNorm() / n2;
      if (grad != nullptr) {
        const Eigen::MatrixXd gg = (2.0 * w_.lambda_s / n2) * diff;
        grads.push_back(Tensor::from_feature(FeatureMap(fm.channels, fm.height, fm.width, gram_backward(fm, gg, true))));
        lg.push_back({layer, &grads.back()});
      }
    }
    if (grad != nullptr) *grad = encoder_.backward(t, nullptr, lg, nullptr, true);
    return content + w_.lambda_s * style;
  }

  Tensor image(const double* p) const {
    Tensor x(1, 3, h_, wd_);
    std::copy(p, p + size(), x.data());
    return x;
  }

 private:
  const Network& encoder_;
  LossWeights w_;
  int h_, wd_;
  int stages_ = 0;
  int content_layer_ = 0;
  int last_layer_ = 0;
  Tensor content_target_;
  std::vector<Eigen::MatrixXd> style_grams_;
};

class GatysFunction final : public ceres::FirstOrderFunction {
 public:
  GatysFunction(const GatysObjective& objective, double* best_cost, std::vector<double>* best)
      : objective_(objective), best_cost_(best_cost), best_(best) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    Tensor g;
    const double value = objective_.evaluate(objective_.image(parameters), gradient ? &g : nullptr);
    if (!std::isfinite(value) || (gradient && !g.all_finite())) return false;
    *cost = value;
    if (gradient) std::copy(g.data(), g.data() + g.size(), gradient);
    if (value < *best_cost_) {
      *best_cost_ = value;
      best_->assign(parameters, parameters + objective_.size());
    }
    return true;
  }
  int NumParameters() const override { return objective_.size(); }

 private:
  const GatysObjective& objective_;
  double* best_cost_;
  std::vector<double>* best_;
};

class HistoryCallback final : public ceres::IterationCallback {
 public:
  explicit HistoryCallback(std::vector<double>* history) : history_(history) {}
  ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
    if (s.iteration == 0 || s.step_is_successful) history_->push_back(s.cost);
    return ceres::SOLVER_CONTINUE;
  }

 private:
  std::vector<double>* history_;
};

}  // namespace

StagePair stage_pair_from_checkpoint(const Checkpoint& ck, bool prefer_student) {
  if (!ck.has_network("decoder")) throw DataError("checkpoint has no decoder");
  StagePair p;
  p.decoder = ck.network("decoder");
  p.stage = p.decoder.spec().max_stage;
  if (ck.has_network("student") && prefer_student) {
    p.encoder = ck.network("student");
    const auto maps = ck.embeddings();
    if (maps.empty() || maps.back().tap_stage != p.stage) throw DataError("checkpoint lacks the output embedding");
    p.embedding = maps.back();
  } else if (ck.has_network("encoder")) {
    p.encoder = ck.network("encoder");
  } else if (ck.has_network("teacher")) {
    p.encoder = ck.network("teacher");
  } else {
    throw DataError("checkpoint has no encoder");
  }
  if (p.encoder.spec().max_stage != p.stage) throw DataError("encoder and decoder stages differ");
  const int width = p.embedding ? p.embedding->teacher_channels() : p.encoder.output_channels();
  if (width != p.decoder.input_channels()) throw DataError("encoder output does not match decoder input");
  if (p.embedding && p.embedding->student_channels() != p.encoder.output_channels())
    throw DataError("embedding does not match the student output");
  return p;
}

ModelBundle::ModelBundle(std::vector<StagePair> pairs) : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.stage < b.stage; });
  for (std::size_t i = 1; i < pairs_.size(); ++i)
    if (pairs_[i].stage == pairs_[i - 1].stage) throw ConfigError("duplicate stage in model bundle");
}

ModelBundle ModelBundle::from_checkpoints(const std::vector<std::filesystem::path>& dirs, bool prefer_student) {
  std::vector<StagePair> pairs;
  for (const auto& d : dirs) pairs.push_back(stage_pair_from_checkpoint(Checkpoint::load(d), prefer_student));
  return ModelBundle(std::move(pairs));
}

const StagePair& ModelBundle::at_stage(int stage) const {
  for (const auto& p : pairs_)
    if (p.stage == stage) return p;
  throw ArgumentError("bundle has no stage " + std::to_string(stage));
}

int ModelBundle::divisor() const {
  int d = 1;
  for (const auto& p : pairs_) d = std::max(d, p.encoder.spec().divisor());
  return d;
}

namespace {

Tensor cascade(const ModelBundle& bundle, const Tensor& content, const Tensor* style, double alpha) {
  if (bundle.empty()) throw ArgumentError("empty model bundle");
  require_single(content, "content");
  if (alpha < 0.0 || alpha > 1.0) throw ArgumentError("alpha must lie in [0, 1]");
  const int d = bundle.divisor();
  Tensor img = reflect_pad_to_multiple(content, d);
  Tensor s;
  if (style != nullptr) {
    require_single(*style, "style");
    s = reflect_pad_to_multiple(*style, d);
  }
  for (auto it = bundle.pairs().rbegin(); it != bundle.pairs().rend(); ++it) {
    Tensor f = encode_stage(*it, img);
    if (style != nullptr) {
      const Tensor fs = encode_stage(*it, s);
      f = Tensor::from_feature(wct_transfer(f.feature(0), fs.feature(0), alpha));
    }
    img = it->decoder.forward(embed(*it, std::move(f)));
  }
  return clip_unit(crop(img, content.h(), content.w()));
}

}  // namespace

Tensor wct_stylize(const ModelBundle& bundle, const Tensor& content, const Tensor& style, double alpha) {
  return cascade(bundle, content, &style, alpha);
}

Tensor reconstruct(const ModelBundle& bundle, const Tensor& content) { return cascade(bundle, content, nullptr, 0.0); }

Tensor adain_stylize(const ModelBundle& bundle, const Tensor& content, const Tensor& style, double alpha) {
  if (bundle.empty()) throw ArgumentError("empty model bundle");
  require_single(content, "content");
  require_single(style, "style");
  if (alpha < 0.0 || alpha > 1.0) throw ArgumentError("alpha must lie in [0, 1]");
  const StagePair& p = bundle.at_stage(std::min(4, bundle.deepest()));
  const int d = p.encoder.spec().divisor();
  const Tensor fc = embed(p, encode_stage(p, reflect_pad_to_multiple(content, d)));
  const Tensor fs = embed(p, encode_stage(p, reflect_pad_to_multiple(style, d)));
  Tensor t = adain_transfer(fc, fs);
  if (alpha < 1.0)
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = alpha * t.data()[i] + (1.0 - alpha) * fc.data()[i];
  return clip_unit(crop(p.decoder.forward(t), content.h(), content.w()));
}

double gatys_loss(const Tensor& image, const Tensor& content, const Tensor& style, const Network& encoder,
                  const LossWeights& w, Tensor* grad) {
  require_single(image, "image");
  return GatysObjective(content, style, encoder, w).evaluate(image, grad);
}

GatysResult gatys_stylize(const Tensor& content, const Tensor& style, const Network& encoder,
                          const GatysOptions& options) {
  require_single(content, "content");
  require_single(style, "style");
  if (options.iterations < 0) throw ArgumentError("iterations must be non-negative");
  options.weights.validate();
  const int d = encoder.spec().divisor();
  if (content.h() % d != 0 || content.w() % d != 0 || style.h() % d != 0 || style.w() % d != 0)
    throw PreconditionError("gatys inputs must be divisible by " + std::to_string(d));

  const GatysObjective objective(content, style, encoder, options.weights);
  GatysResult result;
  std::vector<double> x(content.data(), content.data() + content.size());
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<double> best = x;

  const double initial = objective.evaluate(content, nullptr);
  if (!std::isfinite(initial)) {
    result.image = content;
    result.aborted = true;
    return result;
  }
  if (options.iterations == 0 || initial == 0.0) {
    result.image = clip_unit(content);
    result.loss_history.push_back(initial);
    return result;
  }

  ceres::GradientProblemSolver::Options opts;
  opts.line_search_direction_type = ceres::LBFGS;
  opts.max_num_iterations = options.iterations;
  opts.function_tolerance = 0.0;
  opts.gradient_tolerance = 0.0;
  opts.parameter_tolerance = 0.0;
  opts.logging_type = ceres::SILENT;
  HistoryCallback callback(&result.loss_history);
  opts.callbacks.push_back(&callback);
  ceres::GradientProblem problem(new GatysFunction(objective, &best_cost, &best));
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(opts, problem, x.data(), &summary);

  result.aborted = summary.termination_type == ceres::FAILURE;
  const std::vector<double>& chosen = result.aborted ? best : x;
  result.image = clip_unit(objective.image(chosen.data()));
  return result;
}

void write_loss_csv(const std::vector<double>& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i << "," << history[i] << "\n";
}

int probe_max_resolution(const ArchSpec& spec, std::int64_t budget_bytes, int bytes_per_scalar) {
  spec.validate();
  const int d = spec.divisor();
  auto fits = [&](std::int64_t m) {
    return estimate_peak_activation_memory(spec, static_cast<int>(m * d), static_cast<int>(m * d), bytes_per_scalar) <=
           budget_bytes;
  };
  if (!fits(1)) throw InfeasibleError("memory budget is below the smallest input footprint");
  std::int64_t lo = 1, hi = 2;
  // Sides beyond 2^20 would overflow the estimator.
  const std::int64_t cap = (std::int64_t{1} << 20) / d;
  while (hi < cap && fits(hi)) {
    lo = hi;
    hi = std::min(cap, hi * 2);
  }
  if (hi >= cap && fits(hi)) return static_cast<int>(hi * d);
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (fits(mid) ? lo : hi) = mid;
  }
  return static_cast<int>(lo * d);
}

}  // namespace cdist
