// SPDX-License-Identifier: Apache-2.0
#include "oliera/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "oliera/error.hpp"
#include "oliera/kernels.hpp"

namespace oliera {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("value() on an unbound Var");
  return tape_->node(*this).value;
}

bool Var::requires_grad() const {
  if (tape_ == nullptr) throw ContractError("requires_grad() on an unbound Var");
  return tape_->node(*this).requires_grad;
}

const Tensor& GradientMap::at(const Var& v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded for Var " + std::to_string(v.id()));
  return it->second;
}

bool GradAccumulator::wants(std::size_t parent) const {
  return tape_.nodes_[parents_[parent]].requires_grad;
}

void GradAccumulator::add(std::size_t parent, const Tensor& contribution) {
  const std::size_t id = parents_[parent];
  if (!tape_.nodes_[id].requires_grad) return;
  Tensor& slot = tape_.grads_[id];
  if (slot.empty()) {
    slot = contribution;
  } else {
    require_same_shape(slot, contribution, "gradient accumulation");
    kernels::active().add(slot.data().data(), contribution.data().data(), slot.data().data(), slot.numel());
  }
}

const Tape::Node& Tape::node(const Var& v) const {
  check_owned(v);
  return nodes_[v.id()];
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractError("Var does not belong to this tape");
}

Var Tape::leaf(Tensor value) {
  if (consumed_) throw ContractError("tape already consumed by backward(); reset() first");
  require_finite(value, "leaf");
  nodes_.push_back(Node{std::move(value), {}, nullptr, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (consumed_) throw ContractError("tape already consumed by backward(); reset() first");
  require_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  if (consumed_) throw ContractError("tape already consumed by backward(); reset() first");
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    check_owned(p);
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

GradientMap Tape::backward(const Var& loss) {
  check_owned(loss);
  if (consumed_) throw ContractError("backward() called twice on the same tape");
  if (nodes_[loss.id()].value.numel() != 1) {
    throw ContractError("backward() requires a single-element loss, got shape " +
                        to_string(nodes_[loss.id()].value.shape()));
  }
  consumed_ = true;
  visits_ = 0;
  GradientMap out;
  if (!nodes_[loss.id()].requires_grad) return out;

  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id()] = ones(nodes_[loss.id()].value.shape());
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || grads_[id].empty()) continue;
    if (n.is_leaf) {
      out.grads_.emplace(id, std::move(grads_[id]));
      continue;
    }
    ++visits_;
    GradAccumulator acc(*this, n.parents);
    n.backward(grads_[id], acc);
    grads_[id] = Tensor();
  }
  grads_.clear();
  return out;
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  consumed_ = false;
  visits_ = 0;
}

namespace {

void same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  same_tape(a, b, "add");
  return a.tape()->record(add(a.value(), b.value()), {a, b}, [](const Tensor& g, GradAccumulator& acc) {
    acc.add(0, g);
    acc.add(1, g);
  });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b, "sub");
  return a.tape()->record(sub(a.value(), b.value()), {a, b}, [](const Tensor& g, GradAccumulator& acc) {
    acc.add(0, g);
    if (acc.wants(1)) acc.add(1, scale(g, -1.0));
  });
}

Var hadamard(const Var& a, const Var& b) {
  same_tape(a, b, "hadamard");
  return a.tape()->record(hadamard(a.value(), b.value()), {a, b}, [a, b](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(0)) acc.add(0, hadamard(g, b.value()));
    if (acc.wants(1)) acc.add(1, hadamard(g, a.value()));
  });
}

Var scale(const Var& a, double s) {
  return a.tape()->record(scale(a.value(), s), {a},
                          [s](const Tensor& g, GradAccumulator& acc) { acc.add(0, scale(g, s)); });
}

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b, "matmul");
  return a.tape()->record(matmul(a.value(), b.value()), {a, b}, [a, b](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(0)) acc.add(0, matmul(g, transpose(b.value())));
    if (acc.wants(1)) acc.add(1, matmul(transpose(a.value()), g));
  });
}

Var transpose(const Var& m) {
  return m.tape()->record(transpose(m.value()), {m},
                          [](const Tensor& g, GradAccumulator& acc) { acc.add(0, transpose(g)); });
}

Var sum(const Var& m) {
  return m.tape()->record(Tensor::scalar(sum(m.value())), {m}, [m](const Tensor& g, GradAccumulator& acc) {
    acc.add(0, Tensor::full(m.value().shape(), g.item()));
  });
}

Var tanh(const Var& x) {
  Tensor y(x.value().shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(x.value()[i]);
  return x.tape()->record(std::move(y), {x}, [x](const Tensor& g, GradAccumulator& acc) {
    const Tensor& in = x.value();
    Tensor d(in.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) {
      const double t = std::tanh(in[i]);
      d[i] = g[i] * (1.0 - t * t);
    }
    acc.add(0, d);
  });
}

Var exp_taylor(const Var& x, int order) {
  if (order < 1) throw ContractError("exp_taylor: order must be >= 1, got " + std::to_string(order));
  return x.tape()->record(exp_series(x.value(), order), {x}, [x, order](const Tensor& g, GradAccumulator& acc) {
    // d/dx sum_{k<=n} x^k/k! = sum_{k<=n-1} x^k/k!
    acc.add(0, hadamard(g, exp_series(x.value(), order - 1)));
  });
}

Var frobenius_norm(const Var& m) {
  const double norm = frobenius_norm(m.value());
  return m.tape()->record(Tensor::scalar(norm), {m}, [m, norm](const Tensor& g, GradAccumulator& acc) {
    if (norm == 0.0) {
      acc.add(0, Tensor(m.value().shape()));
      return;
    }
    acc.add(0, scale(m.value(), g.item() / norm));
  });
}

Var l1_norm(const Var& m) {
  return m.tape()->record(Tensor::scalar(l1_norm(m.value())), {m}, [m](const Tensor& g, GradAccumulator& acc) {
    const Tensor& in = m.value();
    Tensor d(in.shape());
    const double gv = g.item();
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = in[i] > 0.0 ? gv : (in[i] < 0.0 ? -gv : 0.0);
    acc.add(0, d);
  });
}

Var add_row_bias(const Var& x, const Var& bias) {
  same_tape(x, bias, "add_row_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.rank() != 1 || bv.numel() != xv.cols()) {
    throw ShapeError("add_row_bias: " + to_string(xv.shape()) + " + " + to_string(bv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    kernels::active().add(out.data().data() + r * xv.cols(), bv.data().data(), out.data().data() + r * xv.cols(),
                          xv.cols());
  }
  require_finite(out, "add_row_bias");
  return x.tape()->record(std::move(out), {x, bias}, [](const Tensor& g, GradAccumulator& acc) {
    acc.add(0, g);
    if (acc.wants(1)) {
      Tensor db({g.cols()});
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) db[c] += g(r, c);
      }
      acc.add(1, db);
    }
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || labels.size() != z.rows()) {
    throw ShapeError("softmax_cross_entropy: logits " + to_string(z.shape()) + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = z.rows();
  const std::size_t classes = z.cols();
  Tensor probs(z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    }
    double zmax = z(r, 0);
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z(r, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs(r, c) = std::exp(z(r, c) - zmax);
      denom += probs(r, c);
    }
    for (std::size_t c = 0; c < classes; ++c) probs(r, c) /= denom;
    loss += -(z(r, static_cast<std::size_t>(y)) - zmax - std::log(denom));
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape()->record(
      Tensor::scalar(loss), {logits},
      [probs = std::move(probs), ys = std::move(ys)](const Tensor& g, GradAccumulator& acc) {
        Tensor d = probs;
        const double k = g.item() / static_cast<double>(ys.size());
        for (std::size_t r = 0; r < ys.size(); ++r) {
          d(r, static_cast<std::size_t>(ys[r])) -= 1.0;
        }
        acc.add(0, scale(d, k));
      });
}

Var clamp_magnitude(const Var& x, double eps, std::size_t* clamped) {
  Tensor out = x.value();
  std::vector<char> hit(out.numel(), 0);
  std::size_t count = 0;
  const double floor = std::nextafter(eps, 1.0);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (std::fabs(out[i]) <= eps) {
      out[i] = std::signbit(out[i]) ? -floor : floor;
      hit[i] = 1;
      ++count;
    }
  }
  if (clamped != nullptr) *clamped = count;
  return x.tape()->record(std::move(out), {x}, [hit = std::move(hit)](const Tensor& g, GradAccumulator& acc) {
    Tensor d = g;
    for (std::size_t i = 0; i < d.numel(); ++i) {
      if (hit[i]) d[i] = 0.0;
    }
    acc.add(0, d);
  });
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace oliera
