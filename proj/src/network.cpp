#include "cdist/network.hpp"

#include "cdist/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cdist {
namespace kernels {
namespace {

RowMatrix im2col(const Tensor& x) {
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  const int hw = h * w;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(c) * 9, static_cast<Eigen::Index>(n) * hw);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          double* dst = cols.row(ch * 9 + ky * 3 + kx).data() + static_cast<std::size_t>(b) * hw;
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y) {
            const double* s = src + (y + dy) * w + dx;
            double* d = dst + y * w;
            for (int xx = x0; xx < x1; ++xx) d[xx] = s[xx];
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix& cols, Tensor& dx) {
  const int n = dx.n(), c = dx.c(), h = dx.h(), w = dx.w();
  const int hw = h * w;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      double* dst = dx.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double* src = cols.row(ch * 9 + ky * 3 + kx).data() + static_cast<std::size_t>(b) * hw;
          const int dy = ky - 1, ddx = kx - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
          for (int y = y0; y < y1; ++y) {
            const double* s = src + y * w;
            double* d = dst + (y + dy) * w + ddx;
            for (int xx = x0; xx < x1; ++xx) d[xx] += s[xx];
          }
        }
      }
    }
  }
}

// Gathers an NCHW tensor into a C x (N*HW) matrix.
RowMatrix gather_channels(const Tensor& t) {
  const int hw = t.h() * t.w();
  RowMatrix m(t.c(), static_cast<Eigen::Index>(t.n()) * hw);
  for (int b = 0; b < t.n(); ++b)
    for (int ch = 0; ch < t.c(); ++ch)
      std::memcpy(m.row(ch).data() + static_cast<std::size_t>(b) * hw,
                  t.data() + (static_cast<std::size_t>(b) * t.c() + ch) * hw, hw * sizeof(double));
  return m;
}

}  // namespace

void conv3x3_forward(const Tensor& x, const ConvParams& p, Tensor& y) {
  if (x.c() != p.in_channels) throw ArgumentError("conv " + p.name + ": expected " + std::to_string(p.in_channels) +
                                                  " input channels, got " + std::to_string(x.c()));
  const int hw = x.h() * x.w();
  const RowMatrix cols = im2col(x);
  ConstRowMatrixMap wmat(p.weight.data(), p.out_channels, static_cast<Eigen::Index>(p.in_channels) * 9);
  RowMatrix out = wmat * cols;
  y = Tensor(x.n(), p.out_channels, x.h(), x.w());
  for (int b = 0; b < x.n(); ++b) {
    for (int co = 0; co < p.out_channels; ++co) {
      const double* s = out.row(co).data() + static_cast<std::size_t>(b) * hw;
      double* d = y.data() + (static_cast<std::size_t>(b) * p.out_channels + co) * hw;
      const double bias = p.bias[co];
      for (int i = 0; i < hw; ++i) d[i] = s[i] + bias;
    }
  }
}

void conv3x3_backward(const Tensor& x, const ConvParams& p, const Tensor& dy, std::vector<double>* dw,
                      std::vector<double>* db, Tensor* dx) {
  const RowMatrix dout = gather_channels(dy);
  if (dw != nullptr || db != nullptr) {
    if (dw != nullptr) {
      const RowMatrix cols = im2col(x);
      RowMatrixMap dwm(dw->data(), p.out_channels, static_cast<Eigen::Index>(p.in_channels) * 9);
      dwm.noalias() += dout * cols.transpose();
    }
    if (db != nullptr)
      for (int co = 0; co < p.out_channels; ++co) (*db)[co] += dout.row(co).sum();
  }
  if (dx != nullptr) {
    ConstRowMatrixMap wmat(p.weight.data(), p.out_channels, static_cast<Eigen::Index>(p.in_channels) * 9);
    const RowMatrix dcols = wmat.transpose() * dout;
    *dx = Tensor(x.n(), x.c(), x.h(), x.w());
    col2im_add(dcols, *dx);
  }
}

Tensor max_pool2(const Tensor& x) {
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx)
          y.at(b, c, yy, xx) = std::max(std::max(x.at(b, c, 2 * yy, 2 * xx), x.at(b, c, 2 * yy, 2 * xx + 1)),
                                        std::max(x.at(b, c, 2 * yy + 1, 2 * xx), x.at(b, c, 2 * yy + 1, 2 * xx + 1)));
  return y;
}

Tensor max_pool2_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.n(), x.c(), x.h(), x.w());
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < dy.h(); ++yy)
        for (int xx = 0; xx < dy.w(); ++xx) {
          // First maximum in raster order receives the gradient.
          int by = 2 * yy, bx = 2 * xx;
          for (int k = 1; k < 4; ++k) {
            const int cy = 2 * yy + k / 2, cx = 2 * xx + k % 2;
            if (x.at(b, c, cy, cx) > x.at(b, c, by, bx)) by = cy, bx = cx;
          }
          dx.at(b, c, by, bx) += dy.at(b, c, yy, xx);
        }
  return dx;
}

Tensor upsample2(const Tensor& x) {
  Tensor y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx) y.at(b, c, yy, xx) = x.at(b, c, yy / 2, xx / 2);
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  Tensor dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int b = 0; b < dy.n(); ++b)
    for (int c = 0; c < dy.c(); ++c)
      for (int yy = 0; yy < dy.h(); ++yy)
        for (int xx = 0; xx < dy.w(); ++xx) dx.at(b, c, yy / 2, xx / 2) += dy.at(b, c, yy, xx);
  return dx;
}

}  // namespace kernels

void ParamGrads::zero() {
  for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

Network::Network(ArchSpec spec, NetworkRole role) : spec_(std::move(spec)), role_(role) {
  spec_.validate();
  layers_ = role_ == NetworkRole::kEncoder ? encoder_layers(spec_) : decoder_layers(spec_);
  for (const auto& l : layers_) {
    if (l.kind != LayerKind::kConv) {
      conv_of_layer_.push_back(-1);
      continue;
    }
    conv_of_layer_.push_back(static_cast<int>(convs_.size()));
    ConvParams p;
    p.name = l.name;
    p.in_channels = l.in_channels;
    p.out_channels = l.out_channels;
    p.weight.assign(static_cast<std::size_t>(l.out_channels) * l.in_channels * 9, 0.0);
    p.bias.assign(l.out_channels, 0.0);
    convs_.push_back(std::move(p));
  }
}

std::int64_t Network::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& c : convs_) n += static_cast<std::int64_t>(c.weight.size() + c.bias.size());
  return n;
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& c : convs_) {
    const double bound = std::sqrt(6.0 / (c.in_channels * 9.0));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : c.weight) w = dist(rng);
    std::fill(c.bias.begin(), c.bias.end(), 0.0);
  }
}

Tensor Network::forward(const Tensor& x, ForwardTrace* trace, int stop_after) const {
  if (x.c() != input_channels())
    throw ArgumentError("network expects " + std::to_string(input_channels()) + " input channels, got " +
                        std::to_string(x.c()));
  const int last = stop_after < 0 ? static_cast<int>(layers_.size()) - 1 : stop_after;
  if (trace != nullptr) {
    trace->inputs.clear();
    trace->outputs.clear();
  }
  Tensor cur = x;
  for (int i = 0; i <= last; ++i) {
    const LayerShape& l = layers_[i];
    Tensor next;
    switch (l.kind) {
      case LayerKind::kConv:
        kernels::conv3x3_forward(cur, convs_[conv_of_layer_[i]], next);
        if (l.relu)
          for (double& v : next.storage()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::kMaxPool:
        if (cur.h() % 2 != 0 || cur.w() % 2 != 0) throw PreconditionError("max-pool input must have even size");
        next = kernels::max_pool2(cur);
        break;
      case LayerKind::kUpsample:
        next = kernels::upsample2(cur);
        break;
    }
    if (trace != nullptr) {
      trace->inputs.push_back(std::move(cur));
      trace->outputs.push_back(next);
    }
    cur = std::move(next);
  }
  return cur;
}

FeatureTaps Network::encode(const Tensor& x, ForwardTrace* trace, int up_to_stage) const {
  if (role_ != NetworkRole::kEncoder) throw ArgumentError("encode() requires an encoder");
  const int stages = up_to_stage == 0 ? spec_.max_stage : up_to_stage;
  if (stages < 1 || stages > spec_.max_stage) throw ArgumentError("tap stage out of range");
  ForwardTrace local;
  ForwardTrace& t = trace != nullptr ? *trace : local;
  forward(x, &t, tap_layer(stages));
  FeatureTaps taps;
  for (int k = 1; k <= stages; ++k) taps.stages.push_back(t.outputs[tap_layer(k)]);
  return taps;
}

Tensor Network::backward(const ForwardTrace& trace, const Tensor* grad_output, std::span<const LayerGrad> layer_grads,
                         ParamGrads* grads, bool need_input_grad) const {
  const int last = trace.layers_run() - 1;
  if (last < 0) throw PreconditionError("backward() needs a traced forward pass");
  Tensor g;
  if (grad_output != nullptr) {
    if (!grad_output->same_shape(trace.outputs[last])) throw ArgumentError("output gradient shape mismatch");
    g = *grad_output;
  } else {
    const Tensor& o = trace.outputs[last];
    g = Tensor(o.n(), o.c(), o.h(), o.w());
  }
  for (const auto& lg : layer_grads)
    if (lg.layer < 0 || lg.layer > last) throw ArgumentError("layer gradient outside the traced range");

  for (int i = last; i >= 0; --i) {
    for (const auto& lg : layer_grads)
      if (lg.layer == i) g += *lg.grad;
    const LayerShape& l = layers_[i];
    const Tensor& in = trace.inputs[i];
    const bool want_dx = i > 0 || need_input_grad;
    Tensor dx;
    switch (l.kind) {
      case LayerKind::kConv: {
        if (l.relu) {
          const Tensor& out = trace.outputs[i];
          for (std::size_t j = 0; j < g.size(); ++j)
            if (!(out.data()[j] > 0.0)) g.data()[j] = 0.0;
        }
        const int ci = conv_of_layer_[i];
        kernels::conv3x3_backward(in, convs_[ci], g, grads ? &grads->weight[ci] : nullptr,
                                  grads ? &grads->bias[ci] : nullptr, want_dx ? &dx : nullptr);
        break;
      }
      case LayerKind::kMaxPool:
        dx = kernels::max_pool2_backward(in, g);
        break;
      case LayerKind::kUpsample:
        dx = kernels::upsample2_backward(g);
        break;
    }
    if (!want_dx) return {};
    g = std::move(dx);
  }
  return g;
}

int Network::tap_layer(int stage) const {
  for (int i = 0; i < static_cast<int>(layers_.size()); ++i)
    if (layers_[i].tap_stage == stage) return i;
  throw ArgumentError("no ReLU_" + std::to_string(stage) + "_1 tap in this network");
}

int Network::layer_index(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(layers_.size()); ++i)
    if (layers_[i].name == name) return i;
  throw ArgumentError("no layer named '" + name + "'");
}

ParamGrads Network::zero_grads() const {
  ParamGrads g;
  for (const auto& c : convs_) {
    g.weight.emplace_back(c.weight.size(), 0.0);
    g.bias.emplace_back(c.bias.size(), 0.0);
  }
  return g;
}

std::vector<std::span<double>> Network::parameter_blocks() {
  std::vector<std::span<double>> out;
  for (auto& c : convs_) {
    out.emplace_back(c.weight);
    out.emplace_back(c.bias);
  }
  return out;
}

std::vector<std::span<double>> Network::grad_blocks(ParamGrads& grads) const {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < grads.weight.size(); ++i) {
    out.emplace_back(grads.weight[i]);
    out.emplace_back(grads.bias[i]);
  }
  return out;
}

bool Network::all_finite() const {
  for (const auto& c : convs_) {
    for (double v : c.weight)
      if (!std::isfinite(v)) return false;
    for (double v : c.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

std::uint64_t Network::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::vector<double>& v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& c : convs_) {
    mix(c.weight);
    mix(c.bias);
  }
  return h;
}

Network build_encoder(const ArchSpec& spec, std::uint64_t seed) {
  Network net(spec, NetworkRole::kEncoder);
  net.initialize(seed);
  return net;
}

Network build_mirror_decoder(const ArchSpec& spec, std::uint64_t seed) {
  Network net(spec, NetworkRole::kDecoder);
  net.initialize(seed);
  return net;
}

}  // namespace cdist
