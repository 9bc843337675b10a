// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "refqa/error.hpp"
#include "refqa/rng.hpp"
#include "refqa/tensor.hpp"

namespace refqa {

/// Named learnable tensors and their gradient accumulators. Names are unique;
/// iteration follows insertion order, which fixes the update order everywhere.
class ParamRegistry {
 public:
  void add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    grads_.push_back(Tensor::zeros(init.shape));
    values_.push_back(std::move(init));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  Tensor& value(const std::string& name) { return values_[at(name)]; }
  const Tensor& value(const std::string& name) const { return values_[at(name)]; }
  Tensor& grad(const std::string& name) { return grads_[at(name)]; }
  const Tensor& grad(const std::string& name) const { return grads_[at(name)]; }

  Tensor& value_at(std::size_t i) { return values_[i]; }
  const Tensor& value_at(std::size_t i) const { return values_[i]; }
  Tensor& grad_at(std::size_t i) { return grads_[i]; }
  const Tensor& grad_at(std::size_t i) const { return grads_[i]; }
  const std::string& name_at(std::size_t i) const { return names_[i]; }

  void zero_grads() {
    for (Tensor& g : grads_) g.data.assign(g.data.size(), 0.0);
  }

 private:
  std::size_t at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
};

/// Handle to a node on a Graph tape.
struct Var {
  std::size_t idx = 0;
};

/// Reverse-mode tape over Tensor values. Nodes are appended in program order
/// and backward() visits them in exact reverse order, so a fixed build order
/// gives bit-identical gradients run to run. One Graph serves one forward
/// pass (typically a mini-batch) and is then discarded.
class Graph {
 public:
  explicit Graph(ParamRegistry* params = nullptr) : params_(params) {}

  std::size_t node_count() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_[v.idx].value; }
  const Tensor& grad(Var v) const { return nodes_[v.idx].grad; }

  /// Leaf with no gradient consumers outside the tape.
  Var constant(Tensor t) { return push(std::move(t)); }

  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  /// Leaf bound to a registry parameter; backward() adds its gradient into
  /// the registry accumulator. Each parameter appears at most once per graph.
  Var param(const std::string& name) {
    if (!params_) throw ConfigError("graph has no parameter registry");
    auto it = param_vars_.find(name);
    if (it != param_vars_.end()) return it->second;
    Var v = push(params_->value(name));
    nodes_[v.idx].param_name = name;
    param_vars_.emplace(name, v);
    return v;
  }

  // ---- arithmetic ----

  Var add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same(ta, tb, "add");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return push(std::move(out), [a, b](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      g.accumulate(a, go);
      g.accumulate(b, go);
    });
  }

  Var sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same(ta, tb, "sub");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    return push(std::move(out), [a, b](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      g.accumulate(a, go);
      Tensor& gb = g.nodes_[b.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    });
  }

  Var scale_const(Var x, double c) {
    Tensor out = val(x);
    for (double& v : out.data) v *= c;
    return push(std::move(out), [x, c](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
    });
  }

  Var add_const(Var x, double c) {
    Tensor out = val(x);
    for (double& v : out.data) v += c;
    return push(std::move(out), [x](Graph& g, std::size_t self) {
      g.accumulate(x, g.nodes_[self].grad);
    });
  }

  /// y_i = x_i - s, with scalar s.
  Var sub_broadcast(Var x, Var s) {
    require_scalar(s, "sub_broadcast");
    Tensor out = val(x);
    const double sv = val(s)[0];
    for (double& v : out.data) v -= sv;
    return push(std::move(out), [x, s](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      g.accumulate(x, go);
      double total = 0.0;
      for (double v : go.data) total += v;
      g.nodes_[s.idx].grad[0] -= total;
    });
  }

  /// y = s * x with scalar s (the gate application).
  Var scale(Var s, Var x) {
    require_scalar(s, "scale");
    const double sv = val(s)[0];
    Tensor out = val(x);
    for (double& v : out.data) v *= sv;
    return push(std::move(out), [s, x](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      const Tensor& tx = g.nodes_[x.idx].value;
      const double svv = g.nodes_[s.idx].value[0];
      double ds = 0.0;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i) {
        ds += go[i] * tx[i];
        gx[i] += svv * go[i];
      }
      g.nodes_[s.idx].grad[0] += ds;
    });
  }

  Var dot(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same(ta, tb, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
    return push(Tensor::scalar(s), [a, b](Graph& g, std::size_t self) {
      const double go = g.nodes_[self].grad[0];
      const Tensor& ta2 = g.nodes_[a.idx].value;
      const Tensor& tb2 = g.nodes_[b.idx].value;
      Tensor& ga = g.nodes_[a.idx].grad;
      Tensor& gb = g.nodes_[b.idx].grad;
      for (std::size_t i = 0; i < ta2.size(); ++i) {
        ga[i] += go * tb2[i];
        gb[i] += go * ta2[i];
      }
    });
  }

  Var sum(Var x) {
    double s = 0.0;
    for (double v : val(x).data) s += v;
    return push(Tensor::scalar(s), [x](Graph& g, std::size_t self) {
      const double go = g.nodes_[self].grad[0];
      Tensor& gx = g.nodes_[x.idx].grad;
      for (double& v : gx.data) v += go;
    });
  }

  Var concat(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Tensor out = Tensor::zeros({ta.size() + tb.size()});
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i];
    for (std::size_t i = 0; i < tb.size(); ++i) out[ta.size() + i] = tb[i];
    return push(std::move(out), [a, b](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      Tensor& ga = g.nodes_[a.idx].grad;
      Tensor& gb = g.nodes_[b.idx].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[ga.size() + i];
    });
  }

  /// Packs scalar nodes into one vector node (used by the batch losses).
  Var stack(const std::vector<Var>& xs) {
    Tensor out = Tensor::zeros({xs.size()});
    for (std::size_t i = 0; i < xs.size(); ++i) {
      require_scalar(xs[i], "stack");
      out[i] = val(xs[i])[0];
    }
    std::vector<Var> parents = xs;
    return push(std::move(out), [parents](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      for (std::size_t i = 0; i < parents.size(); ++i)
        g.nodes_[parents[i].idx].grad[0] += go[i];
    });
  }

  // ---- linear algebra ----

  /// y = W x for W (m x n), x (n). Bias-free projection.
  Var matvec(Var W, Var x) {
    const Tensor& tw = val(W);
    const Tensor& tx = val(x);
    if (tw.rank() != 2 || tx.rank() != 1 || tw.shape[1] != tx.shape[0])
      throw DimError("matvec: W " + tw.shape_str() + " incompatible with x " + tx.shape_str());
    const std::size_t m = tw.shape[0], n = tw.shape[1];
    Tensor out = Tensor::zeros({m});
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += tw.data[r * n + c] * tx[c];
      out[r] = s;
    }
    return push(std::move(out), [W, x, m, n](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      const Tensor& tw2 = g.nodes_[W.idx].value;
      const Tensor& tx2 = g.nodes_[x.idx].value;
      Tensor& gw = g.nodes_[W.idx].grad;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t r = 0; r < m; ++r) {
        const double gr = go[r];
        for (std::size_t c = 0; c < n; ++c) {
          gw.data[r * n + c] += gr * tx2[c];
          gx[c] += gr * tw2.data[r * n + c];
        }
      }
    });
  }

  /// y = W x + b; the workhorse of every learnable layer.
  Var linear(Var x, Var W, Var b) {
    const Tensor& tw = val(W);
    const Tensor& tx = val(x);
    const Tensor& tb = val(b);
    if (tw.rank() != 2 || tx.rank() != 1 || tw.shape[1] != tx.shape[0])
      throw DimError("linear: W " + tw.shape_str() + " incompatible with x " + tx.shape_str());
    if (tb.rank() != 1 || tb.shape[0] != tw.shape[0])
      throw DimError("linear: b " + tb.shape_str() + " incompatible with W " + tw.shape_str());
    return add(matvec(W, x), b);
  }

  // ---- activations ----

  /// Exact GeLU: x * Phi(x) with Phi the standard normal CDF via erf.
  Var gelu(Var x) {
    const Tensor& tx = val(x);
    Tensor out = tx;
    for (double& v : out.data) v = gelu_value(v);
    return push(std::move(out), [x](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      const Tensor& tx2 = g.nodes_[x.idx].value;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * gelu_derivative(tx2[i]);
    });
  }

  Var relu(Var x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [x](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      const Tensor& tx2 = g.nodes_[x.idx].value;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i)
        if (tx2[i] > 0.0) gx[i] += go[i];
    });
  }

  Var sigmoid(Var x) {
    Tensor out = val(x);
    for (double& v : out.data) v = sigmoid_value(v);
    Tensor saved = out;
    return push(std::move(out), [x, saved](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i)
        gx[i] += go[i] * saved[i] * (1.0 - saved[i]);
    });
  }

  Var softplus(Var x) {
    Tensor out = val(x);
    for (double& v : out.data) v = softplus_value(v);
    return push(std::move(out), [x](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      const Tensor& tx2 = g.nodes_[x.idx].value;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * sigmoid_value(tx2[i]);
    });
  }

  // ---- normalization and regularization ----

  /// (x - mean) / sqrt(pop_var + eps) * gain + bias.
  Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gain);
    const Tensor& tb = val(bias);
    if (tx.rank() != 1 || !tx.same_shape(tg) || !tx.same_shape(tb))
      throw DimError("layer_norm: x " + tx.shape_str() + ", gain " + tg.shape_str() +
                     ", bias " + tb.shape_str());
    const std::size_t n = tx.size();
    double mean = 0.0;
    for (double v : tx.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : tx.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    Tensor xhat = Tensor::zeros({n});
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      xhat[i] = (tx[i] - mean) * inv_std;
      out[i] = xhat[i] * tg[i] + tb[i];
    }
    return push(std::move(out),
                [x, gain, bias, xhat, inv_std, n](Graph& g, std::size_t self) {
                  const Tensor& go = g.nodes_[self].grad;
                  const Tensor& tg2 = g.nodes_[gain.idx].value;
                  Tensor& gx = g.nodes_[x.idx].grad;
                  Tensor& gg = g.nodes_[gain.idx].grad;
                  Tensor& gb = g.nodes_[bias.idx].grad;
                  double mean_a = 0.0, mean_ax = 0.0;
                  for (std::size_t i = 0; i < n; ++i) {
                    const double a = go[i] * tg2[i];
                    mean_a += a;
                    mean_ax += a * xhat[i];
                    gg[i] += go[i] * xhat[i];
                    gb[i] += go[i];
                  }
                  mean_a /= static_cast<double>(n);
                  mean_ax /= static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    const double a = go[i] * tg2[i];
                    gx[i] += inv_std * (a - mean_a - xhat[i] * mean_ax);
                  }
                });
  }

  /// Inverted dropout: kept entries scaled by 1/(1-rate) so evaluation needs
  /// no rescale. rate = 0 or eval mode consumes no randomness.
  Var dropout(Var x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) return x;
    const Tensor& tx = val(x);
    Tensor mask = Tensor::zeros(tx.shape);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    Tensor out = tx;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return push(std::move(out), [x, mask](Graph& g, std::size_t self) {
      const Tensor& go = g.nodes_[self].grad;
      Tensor& gx = g.nodes_[x.idx].grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }

  // ---- scalar helpers for loss composition ----

  Var sqrt_scalar(Var x) {
    require_scalar(x, "sqrt_scalar");
    const double v = val(x)[0];
    if (v <= 0.0) throw NumericError("sqrt_scalar: non-positive input");
    const double r = std::sqrt(v);
    return push(Tensor::scalar(r), [x, r](Graph& g, std::size_t self) {
      g.nodes_[x.idx].grad[0] += g.nodes_[self].grad[0] * 0.5 / r;
    });
  }

  Var div(Var a, Var b) {
    require_scalar(a, "div");
    require_scalar(b, "div");
    const double av = val(a)[0], bv = val(b)[0];
    if (bv == 0.0) throw NumericError("div: zero denominator");
    return push(Tensor::scalar(av / bv), [a, b, av, bv](Graph& g, std::size_t self) {
      const double go = g.nodes_[self].grad[0];
      g.nodes_[a.idx].grad[0] += go / bv;
      g.nodes_[b.idx].grad[0] -= go * av / (bv * bv);
    });
  }

  // ---- backward ----

  /// Seeds d(root)/d(root) = 1, runs the tape in reverse, then flushes the
  /// gradients of parameter leaves into the registry accumulators.
  void backward(Var root) {
    require_scalar(root, "backward");
    nodes_[root.idx].grad[0] = 1.0;
    for (std::size_t i = root.idx + 1; i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
    if (params_) {
      for (const auto& [name, var] : param_vars_) {
        Tensor& acc = params_->grad(name);
        const Tensor& g = nodes_[var.idx].grad;
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g[i];
      }
    }
  }

  // ---- elementwise math, usable outside the tape ----

  static double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  static double softplus_value(double x) {
    double r = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    // log1p(exp(x)) underflows to 0 for very negative x; the contract is a
    // strictly positive output.
    if (r <= 0.0) r = std::numeric_limits<double>::denorm_min();
    return r;
  }

  static double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

  static double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
  }

  static double gelu_value(double x) { return x * normal_cdf(x); }

  static double gelu_derivative(double x) { return normal_cdf(x) + x * normal_pdf(x); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Graph&, std::size_t)> backward;
    std::string param_name;
  };

  const Tensor& val(Var v) const { return nodes_[v.idx].value; }

  void accumulate(Var v, const Tensor& g) {
    Tensor& dst = nodes_[v.idx].grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g[i];
  }

  static void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
      throw DimError(std::string(op) + ": shape " + a.shape_str() + " vs " + b.shape_str());
  }

  void require_scalar(Var v, const char* op) const {
    if (!val(v).is_scalar()) throw DimError(std::string(op) + ": scalar operand required");
  }

  Var push(Tensor value, std::function<void(Graph&, std::size_t)> back = nullptr) {
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  ParamRegistry* params_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, Var> param_vars_;
};

}  // namespace refqa
