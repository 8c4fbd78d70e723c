#include "awf/maps.hpp"

#include <cmath>

#include "awf/rng.hpp"

namespace awf {

Tensor ParametricMap::apply(std::span<const Tensor> inputs) const {
  if (inputs.size() != arity())
    throw std::invalid_argument(kind() + ": expected " + std::to_string(arity()) +
                                " inputs, got " + std::to_string(inputs.size()));
  Tensor out = do_apply(inputs);
  ensure_finite(out, kind().c_str());
  return out;
}

Tensor ParametricMap::apply(const Tensor& input) const {
  const Tensor* p = &input;
  return apply(std::span<const Tensor>(p, 1));
}

void ParametricMap::set_params(std::vector<double> p) {
  if (p.size() != params_.size())
    throw std::invalid_argument(kind() + ": parameter count mismatch, expected " +
                                std::to_string(params_.size()));
  params_ = std::move(p);
}

std::vector<double> ParametricMap::param_grad(std::span<const Tensor>, const Tensor&) const {
  throw std::logic_error(kind() + ": analytic gradients not available");
}

Tensor ParametricMap::input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const {
  throw std::logic_error(kind() + ": analytic gradients not available");
}

// ---------------------------------------------------------------------------
// dense helpers

namespace {

void dense_forward(const double* W, const double* b, const double* x, double* y, Dim out,
                   Dim in) {
  for (Dim o = 0; o < out; ++o) {
    double s = b[o];
    const double* row = W + o * in;
    for (Dim i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// Accumulates dW/db and writes dx (if non-null).
void dense_backward(const double* W, const double* x, const double* gy, double* gW, double* gb,
                    double* gx, Dim out, Dim in) {
  if (gx)
    for (Dim i = 0; i < in; ++i) gx[i] = 0.0;
  for (Dim o = 0; o < out; ++o) {
    const double g = gy[o];
    gb[o] += g;
    const double* row = W + o * in;
    double* grow = gW + o * in;
    for (Dim i = 0; i < in; ++i) {
      grow[i] += g * x[i];
      if (gx) gx[i] += g * row[i];
    }
  }
}

inline double activate(double v, Activation a) {
  switch (a) {
    case Activation::Tanh: return std::tanh(v);
    case Activation::Relu: return v > 0.0 ? v : 0.0;
    default: return v;
  }
}

// Derivative in terms of the pre-activation value.
inline double activate_deriv(double pre, Activation a) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    default: return 1.0;
  }
}

void check_flat_input(const Tensor& x, Dim expected, const std::string& kind) {
  if (static_cast<Dim>(x.numel()) != expected)
    throw std::invalid_argument(kind + ": input numel " + std::to_string(x.numel()) +
                                " != " + std::to_string(expected));
}

// 3x3 same-padding convolution.
void conv3_forward(const Tensor& in, const double* K, const double* bias, Tensor& out, Dim cin,
                   Dim cout) {
  const Dim H = in.dim(1), W = in.dim(2);
  for (Dim o = 0; o < cout; ++o) {
    for (Dim i = 0; i < H; ++i) {
      for (Dim j = 0; j < W; ++j) {
        double s = bias ? bias[o] : 0.0;
        for (Dim c = 0; c < cin; ++c) {
          const double* k = K + ((o * cin + c) * 9);
          for (Dim di = 0; di < 3; ++di) {
            const Dim y = i + di - 1;
            if (y < 0 || y >= H) continue;
            for (Dim dj = 0; dj < 3; ++dj) {
              const Dim x = j + dj - 1;
              if (x < 0 || x >= W) continue;
              s += k[di * 3 + dj] * in.at3(c, y, x);
            }
          }
        }
        out.at3(o, i, j) = s;
      }
    }
  }
}

void conv3_backward(const Tensor& in, const double* K, const Tensor& gout, double* gK,
                    double* gbias, Tensor* gin, Dim cin, Dim cout) {
  const Dim H = in.dim(1), W = in.dim(2);
  for (Dim o = 0; o < cout; ++o) {
    for (Dim i = 0; i < H; ++i) {
      for (Dim j = 0; j < W; ++j) {
        const double g = gout.at3(o, i, j);
        if (gbias) gbias[o] += g;
        for (Dim c = 0; c < cin; ++c) {
          const double* k = K + ((o * cin + c) * 9);
          double* gk = gK + ((o * cin + c) * 9);
          for (Dim di = 0; di < 3; ++di) {
            const Dim y = i + di - 1;
            if (y < 0 || y >= H) continue;
            for (Dim dj = 0; dj < 3; ++dj) {
              const Dim x = j + dj - 1;
              if (x < 0 || x >= W) continue;
              gk[di * 3 + dj] += g * in.at3(c, y, x);
              if (gin) gin->at3(c, y, x) += g * k[di * 3 + dj];
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// LinearMap

LinearMap::LinearMap(Dim in_size, Dim out_size) : in_(in_size), out_(out_size) {
  if (in_ <= 0 || out_ <= 0) throw std::invalid_argument("linear: sizes must be positive");
  params_.assign(static_cast<std::size_t>(out_ * in_ + out_), 0.0);
}

Tensor LinearMap::do_apply(std::span<const Tensor> inputs) const {
  const Tensor& x = inputs[0];
  check_flat_input(x, in_, kind());
  Tensor y({out_});
  dense_forward(params_.data(), params_.data() + out_ * in_, x.data(), y.data(), out_, in_);
  return y;
}

std::vector<double> LinearMap::param_grad(std::span<const Tensor> inputs,
                                          const Tensor& grad_out) const {
  const Tensor& x = inputs[0];
  check_flat_input(x, in_, kind());
  check_flat_input(grad_out, out_, kind() + " grad_out");
  std::vector<double> g(params_.size(), 0.0);
  dense_backward(params_.data(), x.data(), grad_out.data(), g.data(), g.data() + out_ * in_,
                 nullptr, out_, in_);
  return g;
}

Tensor LinearMap::input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                             std::size_t) const {
  const Tensor& x = inputs[0];
  check_flat_input(grad_out, out_, kind() + " grad_out");
  Tensor gx(x.shape());
  std::vector<double> scratchW(params_.size(), 0.0);
  dense_backward(params_.data(), x.data(), grad_out.data(), scratchW.data(),
                 scratchW.data() + out_ * in_, gx.data(), out_, in_);
  return gx;
}

// ---------------------------------------------------------------------------
// MlpMap

MlpMap::MlpMap(Dim in_size, Dim hidden, Dim out_size)
    : in_(in_size), hidden_(hidden), out_(out_size) {
  if (in_ <= 0 || hidden_ <= 0 || out_ <= 0)
    throw std::invalid_argument("mlp: sizes must be positive");
  params_.assign(static_cast<std::size_t>(hidden_ * in_ + hidden_ + out_ * hidden_ + out_), 0.0);
}

Tensor MlpMap::do_apply(std::span<const Tensor> inputs) const {
  const Tensor& x = inputs[0];
  check_flat_input(x, in_, kind());
  const double* W1 = params_.data();
  const double* b1 = W1 + hidden_ * in_;
  const double* W2 = b1 + hidden_;
  const double* b2 = W2 + out_ * hidden_;

  std::vector<double> h(static_cast<std::size_t>(hidden_));
  dense_forward(W1, b1, x.data(), h.data(), hidden_, in_);
  for (double& v : h) v = std::tanh(v);
  Tensor y({out_});
  dense_forward(W2, b2, h.data(), y.data(), out_, hidden_);
  return y;
}

std::vector<double> MlpMap::param_grad(std::span<const Tensor> inputs,
                                       const Tensor& grad_out) const {
  const Tensor& x = inputs[0];
  check_flat_input(x, in_, kind());
  check_flat_input(grad_out, out_, kind() + " grad_out");
  const double* W1 = params_.data();
  const double* b1 = W1 + hidden_ * in_;
  const double* W2 = b1 + hidden_;

  std::vector<double> pre(static_cast<std::size_t>(hidden_));
  dense_forward(W1, b1, x.data(), pre.data(), hidden_, in_);
  std::vector<double> h(pre);
  for (double& v : h) v = std::tanh(v);

  std::vector<double> g(params_.size(), 0.0);
  double* gW1 = g.data();
  double* gb1 = gW1 + hidden_ * in_;
  double* gW2 = gb1 + hidden_;
  double* gb2 = gW2 + out_ * hidden_;

  std::vector<double> gh(static_cast<std::size_t>(hidden_), 0.0);
  dense_backward(W2, h.data(), grad_out.data(), gW2, gb2, gh.data(), out_, hidden_);
  for (Dim i = 0; i < hidden_; ++i) gh[i] *= activate_deriv(pre[i], Activation::Tanh);
  dense_backward(W1, x.data(), gh.data(), gW1, gb1, nullptr, hidden_, in_);
  return g;
}

Tensor MlpMap::input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                          std::size_t) const {
  const Tensor& x = inputs[0];
  check_flat_input(x, in_, kind());
  const double* W1 = params_.data();
  const double* b1 = W1 + hidden_ * in_;
  const double* W2 = b1 + hidden_;

  std::vector<double> pre(static_cast<std::size_t>(hidden_));
  dense_forward(W1, b1, x.data(), pre.data(), hidden_, in_);
  std::vector<double> h(pre);
  for (double& v : h) v = std::tanh(v);

  std::vector<double> scratch(params_.size(), 0.0);
  double* sW1 = scratch.data();
  double* sb1 = sW1 + hidden_ * in_;
  double* sW2 = sb1 + hidden_;
  double* sb2 = sW2 + out_ * hidden_;

  std::vector<double> gh(static_cast<std::size_t>(hidden_), 0.0);
  dense_backward(W2, h.data(), grad_out.data(), sW2, sb2, gh.data(), out_, hidden_);
  for (Dim i = 0; i < hidden_; ++i) gh[i] *= activate_deriv(pre[i], Activation::Tanh);
  Tensor gx(x.shape());
  dense_backward(W1, x.data(), gh.data(), sW1, sb1, gx.data(), hidden_, in_);
  return gx;
}

// ---------------------------------------------------------------------------
// ConvStackMap

struct ConvStackMap::Trace {
  std::vector<Tensor> layer_inputs;  // input to each conv
  std::vector<Tensor> pre_acts;      // conv output before activation
};

ConvStackMap::ConvStackMap(std::vector<Dim> channels, Activation hidden_act)
    : channels_(std::move(channels)), act_(hidden_act) {
  if (channels_.size() < 2) throw std::invalid_argument("conv_stack: need >= 2 channel counts");
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < channels_.size(); ++l)
    n += static_cast<std::size_t>(channels_[l + 1] * channels_[l] * 9 + channels_[l + 1]);
  params_.assign(n, 0.0);
}

Tensor ConvStackMap::forward(const Tensor& x, Trace* trace) const {
  if (x.rank() != 3 || x.dim(0) != channels_.front())
    throw std::invalid_argument("conv_stack: input must be [" + std::to_string(channels_.front()) +
                                ",H,W]");
  Tensor cur = x;
  const double* p = params_.data();
  for (std::size_t l = 0; l + 1 < channels_.size(); ++l) {
    const Dim cin = channels_[l], cout = channels_[l + 1];
    Tensor out({cout, cur.dim(1), cur.dim(2)});
    conv3_forward(cur, p, p + cout * cin * 9, out, cin, cout);
    p += cout * cin * 9 + cout;
    if (trace) {
      trace->layer_inputs.push_back(cur);
      trace->pre_acts.push_back(out);
    }
    const bool last = (l + 2 == channels_.size());
    if (!last)
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] = activate(out[i], act_);
    cur = std::move(out);
  }
  return cur;
}

Tensor ConvStackMap::do_apply(std::span<const Tensor> inputs) const {
  return forward(inputs[0], nullptr);
}

void ConvStackMap::backward(const Tensor& x, const Tensor& grad_out, std::vector<double>* pgrad,
                            Tensor* igrad) const {
  Trace trace;
  forward(x, &trace);
  const std::size_t L = channels_.size() - 1;

  // per-layer parameter offsets
  std::vector<std::size_t> offsets(L);
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(channels_[l + 1] * channels_[l] * 9 + channels_[l + 1]);
  }

  Tensor g = grad_out;
  for (std::size_t li = L; li-- > 0;) {
    const Dim cin = channels_[li], cout = channels_[li + 1];
    const bool last = (li + 1 == L);
    if (!last)
      for (std::size_t i = 0; i < g.numel(); ++i)
        g[i] *= activate_deriv(trace.pre_acts[li][i], act_);
    const double* K = params_.data() + offsets[li];
    double* gK = pgrad ? pgrad->data() + offsets[li] : nullptr;
    double* gb = gK ? gK + cout * cin * 9 : nullptr;
    std::vector<double> scratch;
    if (!gK) {
      scratch.assign(static_cast<std::size_t>(cout * cin * 9 + cout), 0.0);
      gK = scratch.data();
      gb = gK + cout * cin * 9;
    }
    const bool need_input = (li > 0) || (igrad != nullptr);
    Tensor gin;
    if (need_input) gin = Tensor({cin, x.dim(1), x.dim(2)});
    conv3_backward(trace.layer_inputs[li], K, g, gK, gb, need_input ? &gin : nullptr, cin, cout);
    if (li == 0 && igrad) *igrad = std::move(gin);
    else if (need_input) g = std::move(gin);
  }
}

std::vector<double> ConvStackMap::param_grad(std::span<const Tensor> inputs,
                                             const Tensor& grad_out) const {
  std::vector<double> g(params_.size(), 0.0);
  backward(inputs[0], grad_out, &g, nullptr);
  return g;
}

Tensor ConvStackMap::input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                                std::size_t) const {
  Tensor g;
  backward(inputs[0], grad_out, nullptr, &g);
  return g;
}

// ---------------------------------------------------------------------------
// CbrStackMap
//
// Hidden layers: conv (no bias) -> per-channel affine -> ReLU.
// Final layer:   conv with bias, linear.
// Per-layer parameter layout: [kernel, scale, shift] / final [kernel, bias].

CbrStackMap::CbrStackMap(std::vector<Dim> channels) : channels_(std::move(channels)) {
  if (channels_.size() < 2) throw std::invalid_argument("cbr_stack: need >= 2 channel counts");
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < channels_.size(); ++l) {
    const bool last = (l + 2 == channels_.size());
    n += static_cast<std::size_t>(channels_[l + 1] * channels_[l] * 9);
    n += static_cast<std::size_t>(last ? channels_[l + 1] : 2 * channels_[l + 1]);
  }
  params_.assign(n, 0.0);
}

Tensor CbrStackMap::do_apply(std::span<const Tensor> inputs) const {
  const Tensor& x = inputs[0];
  if (x.rank() != 3 || x.dim(0) != channels_.front())
    throw std::invalid_argument("cbr_stack: input must be [" + std::to_string(channels_.front()) +
                                ",H,W]");
  Tensor cur = x;
  const double* p = params_.data();
  for (std::size_t l = 0; l + 1 < channels_.size(); ++l) {
    const Dim cin = channels_[l], cout = channels_[l + 1];
    const bool last = (l + 2 == channels_.size());
    Tensor out({cout, cur.dim(1), cur.dim(2)});
    if (last) {
      conv3_forward(cur, p, p + cout * cin * 9, out, cin, cout);
      p += cout * cin * 9 + cout;
    } else {
      conv3_forward(cur, p, nullptr, out, cin, cout);
      const double* scale = p + cout * cin * 9;
      const double* shift = scale + cout;
      const std::size_t hw = static_cast<std::size_t>(out.dim(1) * out.dim(2));
      for (Dim c = 0; c < cout; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          double v = scale[c] * out[c * hw + i] + shift[c];
          out[c * hw + i] = v > 0.0 ? v : 0.0;
        }
      p += cout * cin * 9 + 2 * cout;
    }
    cur = std::move(out);
  }
  return cur;
}

void CbrStackMap::backward(const Tensor& x, const Tensor& grad_out, std::vector<double>* pgrad,
                           Tensor* igrad) const {
  const std::size_t L = channels_.size() - 1;
  // forward with per-layer traces
  std::vector<Tensor> layer_inputs, conv_outs, affine_pre;
  std::vector<std::size_t> offsets(L);
  {
    Tensor cur = x;
    const double* p = params_.data();
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const Dim cin = channels_[l], cout = channels_[l + 1];
      const bool last = (l + 1 == L);
      offsets[l] = off;
      layer_inputs.push_back(cur);
      Tensor out({cout, cur.dim(1), cur.dim(2)});
      if (last) {
        conv3_forward(cur, p, p + cout * cin * 9, out, cin, cout);
        conv_outs.push_back(out);
        affine_pre.push_back(Tensor());
        p += cout * cin * 9 + cout;
        off += static_cast<std::size_t>(cout * cin * 9 + cout);
      } else {
        conv3_forward(cur, p, nullptr, out, cin, cout);
        conv_outs.push_back(out);
        const double* scale = p + cout * cin * 9;
        const double* shift = scale + cout;
        const std::size_t hw = static_cast<std::size_t>(out.dim(1) * out.dim(2));
        Tensor pre = out;
        for (Dim c = 0; c < cout; ++c)
          for (std::size_t i = 0; i < hw; ++i) pre[c * hw + i] = scale[c] * out[c * hw + i] + shift[c];
        affine_pre.push_back(pre);
        Tensor act = pre;
        for (std::size_t i = 0; i < act.numel(); ++i) act[i] = act[i] > 0.0 ? act[i] : 0.0;
        p += cout * cin * 9 + 2 * cout;
        off += static_cast<std::size_t>(cout * cin * 9 + 2 * cout);
        out = std::move(act);
      }
      cur = std::move(out);
    }
  }

  Tensor g = grad_out;
  for (std::size_t li = L; li-- > 0;) {
    const Dim cin = channels_[li], cout = channels_[li + 1];
    const bool last = (li + 1 == L);
    const double* K = params_.data() + offsets[li];
    const std::size_t ksize = static_cast<std::size_t>(cout * cin * 9);
    std::vector<double> scratch;
    double* gK;
    if (pgrad) gK = pgrad->data() + offsets[li];
    else {
      scratch.assign(ksize + static_cast<std::size_t>(last ? cout : 2 * cout), 0.0);
      gK = scratch.data();
    }
    const bool need_input = (li > 0) || (igrad != nullptr);
    Tensor gin;
    if (need_input) gin = Tensor({cin, x.dim(1), x.dim(2)});

    if (last) {
      conv3_backward(layer_inputs[li], K, g, gK, gK + ksize, need_input ? &gin : nullptr, cin,
                     cout);
    } else {
      // grad through ReLU then affine down to the conv output
      const double* scale = K + ksize;
      double* gscale = gK + ksize;
      double* gshift = gscale + cout;
      const std::size_t hw = g.numel() / static_cast<std::size_t>(cout);
      Tensor gconv({cout, layer_inputs[li].dim(1), layer_inputs[li].dim(2)});
      for (Dim c = 0; c < cout; ++c) {
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t idx = c * hw + i;
          const double relu_d = affine_pre[li][idx] > 0.0 ? 1.0 : 0.0;
          const double ga = g[idx] * relu_d;  // grad at affine output
          gscale[c] += ga * conv_outs[li][idx];
          gshift[c] += ga;
          gconv[idx] = ga * scale[c];
        }
      }
      conv3_backward(layer_inputs[li], K, gconv, gK, nullptr, need_input ? &gin : nullptr, cin,
                     cout);
    }
    if (li == 0 && igrad) *igrad = std::move(gin);
    else if (need_input) g = std::move(gin);
  }
}

std::vector<double> CbrStackMap::param_grad(std::span<const Tensor> inputs,
                                            const Tensor& grad_out) const {
  std::vector<double> g(params_.size(), 0.0);
  backward(inputs[0], grad_out, &g, nullptr);
  return g;
}

Tensor CbrStackMap::input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                               std::size_t) const {
  Tensor g;
  backward(inputs[0], grad_out, nullptr, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Token maps

TokenLinearMap::TokenLinearMap(Dim in_dim, Dim out_dim) : in_(in_dim), out_(out_dim) {
  if (in_ <= 0 || out_ <= 0) throw std::invalid_argument("token_linear: sizes must be positive");
  params_.assign(static_cast<std::size_t>(out_ * in_ + out_), 0.0);
}

Tensor TokenLinearMap::do_apply(std::span<const Tensor> inputs) const {
  const Tensor& x = inputs[0];
  if (x.rank() != 2 || x.dim(1) != in_)
    throw std::invalid_argument("token_linear: input must be [N," + std::to_string(in_) + "]");
  const Dim N = x.dim(0);
  Tensor y({N, out_});
  for (Dim n = 0; n < N; ++n)
    dense_forward(params_.data(), params_.data() + out_ * in_, x.data() + n * in_,
                  y.data() + n * out_, out_, in_);
  return y;
}

std::vector<double> TokenLinearMap::param_grad(std::span<const Tensor> inputs,
                                               const Tensor& grad_out) const {
  const Tensor& x = inputs[0];
  std::vector<double> g(params_.size(), 0.0);
  for (Dim n = 0; n < x.dim(0); ++n)
    dense_backward(params_.data(), x.data() + n * in_, grad_out.data() + n * out_, g.data(),
                   g.data() + out_ * in_, nullptr, out_, in_);
  return g;
}

Tensor TokenLinearMap::input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                                  std::size_t) const {
  const Tensor& x = inputs[0];
  Tensor gx(x.shape());
  std::vector<double> scratch(params_.size(), 0.0);
  for (Dim n = 0; n < x.dim(0); ++n)
    dense_backward(params_.data(), x.data() + n * in_, grad_out.data() + n * out_, scratch.data(),
                   scratch.data() + out_ * in_, gx.data() + n * in_, out_, in_);
  return gx;
}

TokenMlpMap::TokenMlpMap(Dim dim, Dim hidden) : dim_(dim), hidden_(hidden) {
  if (dim_ <= 0 || hidden_ <= 0) throw std::invalid_argument("token_mlp: sizes must be positive");
  params_.assign(static_cast<std::size_t>(hidden_ * dim_ + hidden_ + dim_ * hidden_ + dim_), 0.0);
}

Tensor TokenMlpMap::do_apply(std::span<const Tensor> inputs) const {
  const Tensor& x = inputs[0];
  if (x.rank() != 2 || x.dim(1) != dim_)
    throw std::invalid_argument("token_mlp: input must be [N," + std::to_string(dim_) + "]");
  const double* W1 = params_.data();
  const double* b1 = W1 + hidden_ * dim_;
  const double* W2 = b1 + hidden_;
  const double* b2 = W2 + dim_ * hidden_;
  const Dim N = x.dim(0);
  Tensor y({N, dim_});
  std::vector<double> h(static_cast<std::size_t>(hidden_));
  for (Dim n = 0; n < N; ++n) {
    dense_forward(W1, b1, x.data() + n * dim_, h.data(), hidden_, dim_);
    for (double& v : h) v = std::tanh(v);
    dense_forward(W2, b2, h.data(), y.data() + n * dim_, dim_, hidden_);
  }
  return y;
}

std::vector<double> TokenMlpMap::param_grad(std::span<const Tensor> inputs,
                                            const Tensor& grad_out) const {
  const Tensor& x = inputs[0];
  const double* W1 = params_.data();
  const double* b1 = W1 + hidden_ * dim_;
  const double* W2 = b1 + hidden_;

  std::vector<double> g(params_.size(), 0.0);
  double* gW1 = g.data();
  double* gb1 = gW1 + hidden_ * dim_;
  double* gW2 = gb1 + hidden_;
  double* gb2 = gW2 + dim_ * hidden_;

  std::vector<double> pre(static_cast<std::size_t>(hidden_)), h(static_cast<std::size_t>(hidden_)),
      gh(static_cast<std::size_t>(hidden_));
  for (Dim n = 0; n < x.dim(0); ++n) {
    dense_forward(W1, b1, x.data() + n * dim_, pre.data(), hidden_, dim_);
    for (Dim i = 0; i < hidden_; ++i) h[i] = std::tanh(pre[i]);
    std::fill(gh.begin(), gh.end(), 0.0);
    dense_backward(W2, h.data(), grad_out.data() + n * dim_, gW2, gb2, gh.data(), dim_, hidden_);
    for (Dim i = 0; i < hidden_; ++i) gh[i] *= activate_deriv(pre[i], Activation::Tanh);
    dense_backward(W1, x.data() + n * dim_, gh.data(), gW1, gb1, nullptr, hidden_, dim_);
  }
  return g;
}

Tensor TokenMlpMap::input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                               std::size_t) const {
  const Tensor& x = inputs[0];
  const double* W1 = params_.data();
  const double* b1 = W1 + hidden_ * dim_;
  const double* W2 = b1 + hidden_;

  Tensor gx(x.shape());
  std::vector<double> scratch(params_.size(), 0.0);
  double* sW1 = scratch.data();
  double* sb1 = sW1 + hidden_ * dim_;
  double* sW2 = sb1 + hidden_;
  double* sb2 = sW2 + dim_ * hidden_;

  std::vector<double> pre(static_cast<std::size_t>(hidden_)), h(static_cast<std::size_t>(hidden_)),
      gh(static_cast<std::size_t>(hidden_));
  for (Dim n = 0; n < x.dim(0); ++n) {
    dense_forward(W1, b1, x.data() + n * dim_, pre.data(), hidden_, dim_);
    for (Dim i = 0; i < hidden_; ++i) h[i] = std::tanh(pre[i]);
    std::fill(gh.begin(), gh.end(), 0.0);
    dense_backward(W2, h.data(), grad_out.data() + n * dim_, sW2, sb2, gh.data(), dim_, hidden_);
    for (Dim i = 0; i < hidden_; ++i) gh[i] *= activate_deriv(pre[i], Activation::Tanh);
    dense_backward(W1, x.data() + n * dim_, gh.data(), sW1, sb1, gx.data() + n * dim_, hidden_,
                   dim_);
  }
  return gx;
}

// ---------------------------------------------------------------------------

Tensor IdentityMap::do_apply(std::span<const Tensor> inputs) const { return inputs[0]; }

FunctionMap::FunctionMap(std::string name, Fn fn, std::size_t arity)
    : name_(std::move(name)), fn_(std::move(fn)), arity_(arity) {}

Tensor FunctionMap::do_apply(std::span<const Tensor> inputs) const { return fn_(inputs); }

void seed_params(ParametricMap& map, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> p(map.param_count());
  for (double& v : p) v = scale * (2.0 * rng.next_double() - 1.0);
  map.set_params(std::move(p));
}

}  // namespace awf
