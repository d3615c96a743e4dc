#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records one
// forward evaluation; backward() walks it once in reverse and accumulates
// gradients into the Parameters that were bound as leaves.

#include "dyad/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dyad::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

struct Var {
  std::size_t id = 0;
};

template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
};

// Ordered, pointer-stable collection of named parameters.
template <typename S>
class ParameterSet {
 public:
  Parameter<S>& add(const std::string& name, Mat<S> init) {
    if (index_.count(name)) throw ShapeError("duplicate parameter " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->name = name;
    p->grad = Mat<S>::Zero(init.rows(), init.cols());
    p->value = std::move(init);
    index_[name] = items_.size();
    items_.push_back(std::move(p));
    return *items_.back();
  }

  Parameter<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : items_[it->second].get();
  }
  const Parameter<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : items_[it->second].get();
  }
  Parameter<S>& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw ShapeError("unknown parameter " + name);
  }

  std::size_t size() const { return items_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *items_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *items_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p->grad.setZero();
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
class Tape {
 public:
  // With record_gradients = false parameters enter as constants and no
  // backward closures are built.
  explicit Tape(bool record_gradients = true) : record_(record_gradients) { nodes_.reserve(256); }

  Var constant(Mat<S> value) { return push(std::move(value), false); }

  Var parameter(Parameter<S>& p) {
    Var v = push_ref(&p.value, record_);
    nodes_[v.id].param = &p;
    return v;
  }

  const Mat<S>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
  }
  const Mat<S>& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    check(value(a).cols() == value(b).rows(), "matmul: inner dimensions differ");
    Mat<S> out = value(a) * value(b);
    Var r = push(std::move(out), rg(a) || rg(b));
    on_backward(r, [this, a, b, r] {
      const Mat<S>& g = nodes_[r.id].grad;
      if (rg(a)) acc(a, g * value(b).transpose());
      if (rg(b)) acc(b, value(a).transpose() * g);
    });
    return r;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var r = push(value(a) + value(b), rg(a) || rg(b));
    on_backward(r, [this, a, b, r] {
      if (rg(a)) acc(a, nodes_[r.id].grad);
      if (rg(b)) acc(b, nodes_[r.id].grad);
    });
    return r;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var r = push(value(a) - value(b), rg(a) || rg(b));
    on_backward(r, [this, a, b, r] {
      if (rg(a)) acc(a, nodes_[r.id].grad);
      if (rg(b)) acc(b, -nodes_[r.id].grad);
    });
    return r;
  }

  Var scale(Var a, S s) {
    Var r = push(value(a) * s, rg(a));
    on_backward(r, [this, a, r, s] { acc(a, nodes_[r.id].grad * s); });
    return r;
  }

  // x: R x C, bias: 1 x C broadcast over rows.
  Var add_row_bias(Var x, Var bias) {
    check(value(bias).rows() == 1 && value(bias).cols() == value(x).cols(),
          "add_row_bias: bias must be 1 x cols");
    Mat<S> out = value(x);
    out.rowwise() += value(bias).row(0);
    Var r = push(std::move(out), rg(x) || rg(bias));
    on_backward(r, [this, x, bias, r] {
      const Mat<S>& g = nodes_[r.id].grad;
      if (rg(x)) acc(x, g);
      if (rg(bias)) acc(bias, g.colwise().sum());
    });
    return r;
  }

  Var relu(Var x) {
    Mat<S> out = value(x).cwiseMax(S(0));
    Var r = push(std::move(out), rg(x));
    on_backward(r, [this, x, r] {
      const Mat<S>& v = value(x);
      acc(x, (v.array() > S(0)).select(nodes_[r.id].grad.array(), S(0)).matrix());
    });
    return r;
  }

  Var tanh(Var x) {
    Mat<S> out = value(x).array().tanh().matrix();
    Var r = push(std::move(out), rg(x));
    on_backward(r, [this, x, r] {
      const Mat<S>& y = value(r);
      acc(x, (nodes_[r.id].grad.array() * (S(1) - y.array().square())).matrix());
    });
    return r;
  }

  Var transpose(Var x) {
    Var r = push(value(x).transpose(), rg(x));
    on_backward(r, [this, x, r] { acc(x, nodes_[r.id].grad.transpose()); });
    return r;
  }

  Var concat_cols(std::span<const Var> xs) {
    check(!xs.empty(), "concat_cols: no inputs");
    const auto rows = value(xs[0]).rows();
    Eigen::Index cols = 0;
    bool any = false;
    for (Var v : xs) {
      check(value(v).rows() == rows, "concat_cols: row counts differ");
      cols += value(v).cols();
      any = any || rg(v);
    }
    Mat<S> out(rows, cols);
    Eigen::Index c = 0;
    for (Var v : xs) {
      out.middleCols(c, value(v).cols()) = value(v);
      c += value(v).cols();
    }
    Var r = push(std::move(out), any);
    std::vector<Var> inputs(xs.begin(), xs.end());
    on_backward(r, [this, inputs, r] {
      Eigen::Index c0 = 0;
      for (Var v : inputs) {
        const auto w = value(v).cols();
        if (rg(v)) acc(v, nodes_[r.id].grad.middleCols(c0, w));
        c0 += w;
      }
    });
    return r;
  }
  Var concat_cols(std::initializer_list<Var> xs) {
    return concat_cols(std::span<const Var>(xs.begin(), xs.size()));
  }

  Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 0 && start + count <= value(x).rows(), "slice_rows: out of range");
    Var r = push(value(x).middleRows(start, count), rg(x));
    on_backward(r, [this, x, r, start, count] {
      Mat<S>& gx = grad_ref(x);
      gx.middleRows(start, count) += nodes_[r.id].grad;
    });
    return r;
  }

  // (n * group) x c -> n x (group * c); row i concatenates rows i*group .. i*group+group-1.
  Var group_rows(Var x, Eigen::Index group) {
    const Mat<S>& v = value(x);
    check(group > 0 && v.rows() % group == 0, "group_rows: rows not divisible by group");
    const Eigen::Index n = v.rows() / group, c = v.cols();
    Mat<S> out(n, group * c);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index g = 0; g < group; ++g) out.block(i, g * c, 1, c) = v.row(i * group + g);
    Var r = push(std::move(out), rg(x));
    on_backward(r, [this, x, r, group, n, c] {
      const Mat<S>& gout = nodes_[r.id].grad;
      Mat<S>& gx = grad_ref(x);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index g = 0; g < group; ++g) gx.row(i * group + g) += gout.block(i, g * c, 1, c);
    });
    return r;
  }

  // Elementwise maximum; ties route the gradient to the first argument.
  Var maximum(Var a, Var b) {
    check_same(a, b, "maximum");
    Mat<S> out = value(a).cwiseMax(value(b));
    Var r = push(std::move(out), rg(a) || rg(b));
    on_backward(r, [this, a, b, r] {
      const Mat<S>& g = nodes_[r.id].grad;
      auto first = (value(a).array() >= value(b).array());
      if (rg(a)) acc(a, first.select(g.array(), S(0)).matrix());
      if (rg(b)) acc(b, first.select(S(0), g.array()).matrix());
    });
    return r;
  }

  // scores: N x 1. Returns s / sum(s); when |sum(s)| < eps the result is the
  // uniform vector, treated as a constant, and *degenerate is set.
  Var ratio_normalize(Var scores, S eps, bool* degenerate = nullptr) {
    const Mat<S>& s = value(scores);
    check(s.cols() == 1 && s.rows() >= 1, "ratio_normalize: expected a column vector");
    const S total = s.sum();
    const bool flat = !(std::abs(total) >= eps);
    if (degenerate) *degenerate = flat;
    if (flat) return constant(Mat<S>::Constant(s.rows(), 1, S(1) / S(s.rows())));
    Var r = push(s / total, rg(scores));
    on_backward(r, [this, scores, r, total] {
      const Mat<S>& g = nodes_[r.id].grad;
      const Mat<S>& sv = value(scores);
      const S dot = (g.array() * sv.array()).sum();
      acc(scores, ((g.array() / total) - dot / (total * total)).matrix());
    });
    return r;
  }

  // weights: N x 1; values are constants. Returns sum_t w_t * values[t].
  Var weighted_sum(Var weights, std::shared_ptr<const std::vector<Mat<S>>> values) {
    const Mat<S>& w = value(weights);
    check(w.cols() == 1 && static_cast<std::size_t>(w.rows()) == values->size(),
          "weighted_sum: weight count differs from value count");
    check(!values->empty(), "weighted_sum: no values");
    Mat<S> out = Mat<S>::Zero((*values)[0].rows(), (*values)[0].cols());
    for (std::size_t t = 0; t < values->size(); ++t) out += w(static_cast<Eigen::Index>(t)) * (*values)[t];
    Var r = push(std::move(out), rg(weights));
    on_backward(r, [this, weights, values, r] {
      const Mat<S>& g = nodes_[r.id].grad;
      Mat<S> gw(static_cast<Eigen::Index>(values->size()), 1);
      for (std::size_t t = 0; t < values->size(); ++t)
        gw(static_cast<Eigen::Index>(t)) = (g.array() * (*values)[t].array()).sum();
      acc(weights, gw);
    });
    return r;
  }

  // pred and target are K x L (rows are x,y,z per joint). Returns the 1 x 1
  // mean over joints and frames of the squared (or plain) joint distance.
  Var position_loss(Var pred, const Mat<S>& target, bool squared) {
    const Mat<S>& p = value(pred);
    check(p.rows() == target.rows() && p.cols() == target.cols(), "position_loss: shape mismatch");
    check(p.rows() % 3 == 0, "position_loss: rows must be a multiple of 3");
    const Eigen::Index joints = p.rows() / 3, frames = p.cols();
    const S norm = S(1) / S(joints * frames);
    Mat<S> diff = p - target;
    S total = 0;
    Mat<S> dist(joints, frames);
    for (Eigen::Index j = 0; j < joints; ++j) {
      for (Eigen::Index t = 0; t < frames; ++t) {
        const S sq = diff.block(3 * j, t, 3, 1).squaredNorm();
        dist(j, t) = std::sqrt(sq);
        total += squared ? sq : dist(j, t);
      }
    }
    Mat<S> out(1, 1);
    out(0, 0) = total * norm;
    Var r = push(std::move(out), rg(pred));
    on_backward(r, [this, pred, r, diff = std::move(diff), dist = std::move(dist), norm, squared] {
      const S g = nodes_[r.id].grad(0, 0) * norm;
      if (squared) {
        acc(pred, diff * (S(2) * g));
        return;
      }
      Mat<S> gp = Mat<S>::Zero(diff.rows(), diff.cols());
      for (Eigen::Index j = 0; j < dist.rows(); ++j)
        for (Eigen::Index t = 0; t < dist.cols(); ++t)
          if (dist(j, t) > S(0)) gp.block(3 * j, t, 3, 1) = diff.block(3 * j, t, 3, 1) * (g / dist(j, t));
      acc(pred, gp);
    });
    return r;
  }

  // Seeds d(root)/d(root) = 1 for a 1 x 1 root and propagates.
  void backward(Var root) {
    check(value(root).size() == 1, "backward: root must be a scalar");
    if (!rg(root)) return;
    grad_ref(root).setOnes();
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.back) n.back();
      if (n.param) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Mat<S> value;
    const Mat<S>* ref = nullptr;
    Mat<S> grad;
    bool requires_grad = false;
    std::function<void()> back;
    Parameter<S>* param = nullptr;
  };

  Var push(Mat<S> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }
  Var push_ref(const Mat<S>* ref, bool requires_grad) {
    Node n;
    n.ref = ref;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  template <typename F>
  void on_backward(Var r, F&& f) {
    if (nodes_[r.id].requires_grad) nodes_[r.id].back = std::forward<F>(f);
  }

  bool rg(Var v) const { return nodes_[v.id].requires_grad; }

  Mat<S>& grad_ref(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Mat<S>& val = n.ref ? *n.ref : n.value;
      n.grad = Mat<S>::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  template <typename Expr>
  void acc(Var v, const Expr& g) {
    grad_ref(v) += g;
  }

  void check(bool ok, const char* what) const {
    if (!ok) throw ShapeError(what);
  }
  void check_same(Var a, Var b, const char* what) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ShapeError(std::string(what) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
  bool record_ = true;
};

}  // namespace dyad::ad
