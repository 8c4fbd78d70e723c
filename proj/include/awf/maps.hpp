#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "awf/tensor.hpp"

namespace awf {

/// Pure parametric tensor map: a deterministic function of (params, inputs).
///
/// Every learned component in the pipeline (denoiser, ray compensator, offset
/// nets, attention projections, supervision convs) is one of these behind a
/// fixed shape contract. apply() never mutates the parameter vector; calling
/// it twice with identical inputs yields bit-identical outputs.
///
/// The reference families below (linear, MLP, conv stacks) ship with analytic
/// gradients; arbitrary user maps may be finite-difference-only.
class ParametricMap {
 public:
  virtual ~ParametricMap() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t arity() const { return 1; }

  Tensor apply(std::span<const Tensor> inputs) const;
  Tensor apply(const Tensor& input) const;

  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  void set_params(std::vector<double> p);

  virtual bool has_analytic_grad() const { return false; }

  /// d(sum(grad_out . output))/d params.
  virtual std::vector<double> param_grad(std::span<const Tensor> inputs,
                                         const Tensor& grad_out) const;

  /// d(sum(grad_out . output))/d inputs[input_index].
  virtual Tensor input_grad(std::span<const Tensor> inputs, const Tensor& grad_out,
                            std::size_t input_index) const;

 protected:
  virtual Tensor do_apply(std::span<const Tensor> inputs) const = 0;
  std::vector<double> params_;
};

enum class Activation { Identity, Tanh, Relu };

/// y = W.flatten(x) + b over a fixed input size.
class LinearMap : public ParametricMap {
 public:
  LinearMap(Dim in_size, Dim out_size);
  std::string kind() const override { return "linear"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override;
  Tensor input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const override;

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  Dim in_, out_;
};

/// Two dense layers with tanh in between, on flattened input.
class MlpMap : public ParametricMap {
 public:
  MlpMap(Dim in_size, Dim hidden, Dim out_size);
  std::string kind() const override { return "mlp"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override;
  Tensor input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const override;

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  Dim in_, hidden_, out_;
};

/// Stack of 3x3 same-padding convolutions on [C,H,W]; the hidden activation
/// is applied after every layer but the last. Works at any spatial size.
class ConvStackMap : public ParametricMap {
 public:
  explicit ConvStackMap(std::vector<Dim> channels, Activation hidden_act = Activation::Tanh);
  std::string kind() const override { return "conv_stack"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override;
  Tensor input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const override;
  Dim in_channels() const { return channels_.front(); }
  Dim out_channels() const { return channels_.back(); }

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  struct Trace;
  Tensor forward(const Tensor& x, Trace* trace) const;
  void backward(const Tensor& x, const Tensor& grad_out, std::vector<double>* pgrad,
                Tensor* igrad) const;
  std::vector<Dim> channels_;
  Activation act_;
};

/// Conv / per-channel affine / ReLU blocks with a linear conv head, the
/// single-sample stand-in for conv+batchnorm+relu stacks. Zero parameters
/// give a zero output.
class CbrStackMap : public ParametricMap {
 public:
  explicit CbrStackMap(std::vector<Dim> channels);
  std::string kind() const override { return "cbr_stack"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override;
  Tensor input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const override;
  Dim in_channels() const { return channels_.front(); }
  Dim out_channels() const { return channels_.back(); }

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  void backward(const Tensor& x, const Tensor& grad_out, std::vector<double>* pgrad,
                Tensor* igrad) const;
  std::vector<Dim> channels_;
};

/// Shared dense layer applied to every row of a [N,D] token matrix.
class TokenLinearMap : public ParametricMap {
 public:
  TokenLinearMap(Dim in_dim, Dim out_dim);
  std::string kind() const override { return "token_linear"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override;
  Tensor input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const override;
  Dim in_dim() const { return in_; }
  Dim out_dim() const { return out_; }

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  Dim in_, out_;
};

/// Row-wise two-layer MLP (tanh) on a [N,D] token matrix, D -> hidden -> D.
class TokenMlpMap : public ParametricMap {
 public:
  TokenMlpMap(Dim dim, Dim hidden);
  std::string kind() const override { return "token_mlp"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override;
  Tensor input_grad(std::span<const Tensor>, const Tensor&, std::size_t) const override;

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  Dim dim_, hidden_;
};

/// Parameter-free passthrough.
class IdentityMap : public ParametricMap {
 public:
  std::string kind() const override { return "identity"; }
  bool has_analytic_grad() const override { return true; }
  std::vector<double> param_grad(std::span<const Tensor>, const Tensor&) const override { return {}; }
  Tensor input_grad(std::span<const Tensor>, const Tensor& grad_out, std::size_t) const override {
    return grad_out;
  }

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;
};

/// Parameter-free wrapper around an arbitrary function. The callee is
/// responsible for determinism; used for test oracles and fixed transforms.
class FunctionMap : public ParametricMap {
 public:
  using Fn = std::function<Tensor(std::span<const Tensor>)>;
  FunctionMap(std::string name, Fn fn, std::size_t arity = 1);
  std::string kind() const override { return name_; }
  std::size_t arity() const override { return arity_; }

 protected:
  Tensor do_apply(std::span<const Tensor> inputs) const override;

 private:
  std::string name_;
  Fn fn_;
  std::size_t arity_;
};

/// Fills a map with small deterministic values; scale 0 leaves it zeroed.
void seed_params(ParametricMap& map, std::uint64_t seed, double scale);

}  // namespace awf
