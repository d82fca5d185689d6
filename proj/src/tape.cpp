#include "lmlvamp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lmlvamp::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(std::string("Tape: ") + what);
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  require(v.id < nodes_.size(), "variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  require(v.id < nodes_.size(), "variable does not belong to this tape");
  return nodes_[v.id];
}

double Tape::scalar(Var v) const {
  const RVec& val = value(v);
  require(val.size() == 1, "scalar() on a non-scalar node");
  return val[0];
}

Var Tape::push(RVec value, std::initializer_list<Var> parents,
               std::function<void(Tape&, std::size_t)> backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || node(p).needs_grad;
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(RVec value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(RVec value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, {}});
  return Var{nodes_.size() - 1};
}

namespace {
constexpr std::size_t kMaxPooled = 512;
}  // namespace

void Tape::clear() {
  for (auto& n : nodes_)
    for (RVec* v : {&n.value, &n.grad, &n.aux})
      if (v->capacity() > 0 && pooled_ < kMaxPooled) {
        pool_[v->capacity()].push_back(std::move(*v));
        ++pooled_;
      }
  nodes_.clear();
}

RVec Tape::take(std::size_t n) {
  // Recorded graphs repeat their shapes, so buffers are found by capacity;
  // large batch buffers would otherwise hit the allocator on every item.
  RVec v;
  const auto it = pool_.lower_bound(n);
  if (it != pool_.end()) {
    v = std::move(it->second.back());
    it->second.pop_back();
    if (it->second.empty()) pool_.erase(it);
    --pooled_;
  }
  v.resize(n);
  std::fill(v.begin(), v.end(), 0.0);
  return v;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw Error("Tape: backward() called before any forward recording");
  require(loss.id < nodes_.size(), "loss variable does not belong to this tape");
  require(nodes_[loss.id].value.size() == 1, "loss must be a scalar");
  for (auto& n : nodes_) {
    if (n.needs_grad && n.grad.capacity() < n.value.size())
      n.grad = take(n.value.size());
    else if (n.needs_grad) {
      n.grad.resize(n.value.size());
      std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }
    else
      n.grad.clear();
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward) n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var Tape::add(Var a, Var b) {
  const RVec &va = value(a), &vb = value(b);
  require(va.size() == vb.size(), "add: shape mismatch");
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    for (Var p : {a, b})
      if (t.node(p).needs_grad) {
        RVec& gp = t.g(p);
        for (std::size_t i = 0; i < go.size(); ++i) gp[i] += go[i];
      }
  });
}

Var Tape::sub(Var a, Var b) {
  const RVec &va = value(a), &vb = value(b);
  require(va.size() == vb.size(), "sub: shape mismatch");
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    if (t.node(a).needs_grad) {
      RVec& ga = t.g(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (t.node(b).needs_grad) {
      RVec& gb = t.g(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const RVec &va = value(a), &vb = value(b);
  require(va.size() == vb.size(), "mul: shape mismatch");
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    const RVec &va = t.value(a), &vb = t.value(b);
    if (t.node(a).needs_grad) {
      RVec& ga = t.g(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
    }
    if (t.node(b).needs_grad) {
      RVec& gb = t.g(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, Var s) {
  const RVec& va = value(a);
  const double sv = scalar(s);
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * va[i];
  return push(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    const RVec& va = t.value(a);
    const double sv = t.value(s)[0];
    if (t.node(a).needs_grad) {
      RVec& ga = t.g(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += sv * go[i];
    }
    if (t.node(s).needs_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * va[i];
      t.g(s)[0] += acc;
    }
  });
}

Var Tape::scale(Var a, double c) {
  RVec out = value(a);
  for (auto& v : out) v *= c;
  return push(std::move(out), {a}, [a, c](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    RVec& ga = t.g(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

Var Tape::add_const(Var a, const RVec& c) {
  const RVec& va = value(a);
  require(va.size() == c.size(), "add_const: shape mismatch");
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + c[i];
  return push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    RVec& ga = t.g(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var Tape::mul_const(Var a, const RVec& c) {
  const RVec& va = value(a);
  require(va.size() == c.size(), "mul_const: shape mismatch");
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * c[i];
  return push(std::move(out), {a}, [a, c](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    RVec& ga = t.g(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c[i];
  });
}

Var Tape::exp(Var a) {
  const RVec& va = value(a);
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(va[i]);
  return push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Node& me = t.nodes_[self];
    RVec& ga = t.g(a);
    for (std::size_t i = 0; i < me.grad.size(); ++i) ga[i] += me.grad[i] * me.value[i];
  });
}

Var Tape::recip(Var a) {
  const RVec& va = value(a);
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / va[i];
  return push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Node& me = t.nodes_[self];
    RVec& ga = t.g(a);
    for (std::size_t i = 0; i < me.grad.size(); ++i)
      ga[i] -= me.grad[i] * me.value[i] * me.value[i];
  });
}

Var Tape::sum(Var a) {
  const RVec& va = value(a);
  double acc = 0.0;
  for (double v : va) acc += v;
  return push(RVec{acc}, {a}, [a](Tape& t, std::size_t self) {
    const double go = t.nodes_[self].grad[0];
    for (auto& v : t.g(a)) v += go;
  });
}

Var Tape::mean(Var a) {
  const std::size_t n = value(a).size();
  require(n > 0, "mean of an empty vector");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  const RVec& va = value(a);
  RVec out = take(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(va[i], lo, hi);
  return push(std::move(out), {a}, [a, lo, hi](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    const RVec& va = t.value(a);
    RVec& ga = t.g(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (va[i] > lo && va[i] < hi) ga[i] += go[i];
  });
}

Var Tape::broadcast(Var s, std::size_t n) {
  return push(RVec(n, scalar(s)), {s}, [s](Tape& t, std::size_t self) {
    double acc = 0.0;
    for (double v : t.nodes_[self].grad) acc += v;
    t.g(s)[0] += acc;
  });
}

// ---------------------------------------------------------------------------
// Complex vectors

Var Tape::cabs(Var c) {
  const RVec& vc = value(c);
  require(vc.size() % 2 == 0, "cabs: complex vectors have even length");
  const std::size_t n = vc.size() / 2;
  RVec out = take(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::hypot(vc[i], vc[n + i]);
  return push(std::move(out), {c}, [c, n](Tape& t, std::size_t self) {
    const Node& me = t.nodes_[self];
    const RVec& vc = t.value(c);
    RVec& gc = t.g(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (me.value[i] == 0.0) continue;
      const double s = me.grad[i] / me.value[i];
      gc[i] += s * vc[i];
      gc[n + i] += s * vc[n + i];
    }
  });
}

Var Tape::cmul_real(Var c, Var r) {
  const RVec &vc = value(c), &vr = value(r);
  const std::size_t n = vr.size();
  require(vc.size() == 2 * n, "cmul_real: shape mismatch");
  RVec out = take(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = vc[i] * vr[i];
    out[n + i] = vc[n + i] * vr[i];
  }
  return push(std::move(out), {c, r}, [c, r, n](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    const RVec &vc = t.value(c), &vr = t.value(r);
    if (t.node(c).needs_grad) {
      RVec& gc = t.g(c);
      for (std::size_t i = 0; i < n; ++i) {
        gc[i] += go[i] * vr[i];
        gc[n + i] += go[n + i] * vr[i];
      }
    }
    if (t.node(r).needs_grad) {
      RVec& gr = t.g(r);
      for (std::size_t i = 0; i < n; ++i) gr[i] += go[i] * vc[i] + go[n + i] * vc[n + i];
    }
  });
}

namespace {

CVec to_complex(const RVec& v) {
  const std::size_t n = v.size() / 2;
  CVec c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = {v[i], v[n + i]};
  return c;
}

void add_split(const CVec& c, RVec& dst) {
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] += c[i].real();
    dst[n + i] += c[i].imag();
  }
}

}  // namespace

Var Tape::dft(Var c, const spectrum::Dft& dft, bool inverse) {
  const RVec& vc = value(c);
  require(vc.size() == 2 * dft.n(), "dft: length mismatch");
  const CVec in = to_complex(vc);
  const CVec res = inverse ? dft.inverse(in) : dft.forward(in);
  RVec out = take(vc.size());
  add_split(res, out);
  // V is unitary, so the adjoint of V is V^H and vice versa.
  return push(std::move(out), {c}, [c, dft, inverse](Tape& t, std::size_t self) {
    const CVec go = to_complex(t.nodes_[self].grad);
    add_split(inverse ? dft.forward(go) : dft.inverse(go), t.g(c));
  });
}

// ---------------------------------------------------------------------------
// Batches

Var Tape::stack(std::span<const Var> rows) {
  require(!rows.empty(), "stack: no rows");
  const std::size_t n = value(rows[0]).size();
  RVec out;
  out.reserve(rows.size() * n);
  bool needs = false;
  for (Var r : rows) {
    const RVec& v = value(r);
    require(v.size() == n, "stack: rows differ in length");
    out.insert(out.end(), v.begin(), v.end());
    needs = needs || node(r).needs_grad;
  }
  std::vector<Var> ids(rows.begin(), rows.end());
  nodes_.push_back(Node{std::move(out), {}, {}, needs, {}});
  if (needs)
    nodes_.back().backward = [ids, n](Tape& t, std::size_t self) {
      const RVec& go = t.nodes_[self].grad;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (!t.node(ids[k]).needs_grad) continue;
        RVec& gr = t.g(ids[k]);
        for (std::size_t i = 0; i < n; ++i) gr[i] += go[k * n + i];
      }
    };
  return Var{nodes_.size() - 1};
}

Var Tape::row(Var m, std::size_t k, std::size_t n) {
  const RVec& vm = value(m);
  require((k + 1) * n <= vm.size(), "row: index out of range");
  RVec out(vm.begin() + k * n, vm.begin() + (k + 1) * n);
  return push(std::move(out), {m}, [m, k, n](Tape& t, std::size_t self) {
    const RVec& go = t.nodes_[self].grad;
    RVec& gm = t.g(m);
    for (std::size_t i = 0; i < n; ++i) gm[k * n + i] += go[i];
  });
}

Var Tape::mlp(Var w1, Var b1, Var w2, Var b2, Var x, std::size_t in, std::size_t hidden,
              std::size_t out) {
  require(in <= simd::kMaxMlpPorts && out <= simd::kMaxMlpPorts, "mlp: too many ports");
  require(value(w1).size() == hidden * in && value(b1).size() == hidden &&
              value(w2).size() == out * hidden && value(b2).size() == out,
          "mlp: weight shape mismatch");
  require(value(x).size() % in == 0, "mlp: input is not a whole batch");
  const std::size_t n = value(x).size() / in;
  const simd::MlpView view{in, hidden, out, value(w1).data(), value(b1).data(),
                           value(w2).data(), value(b2).data()};
  RVec hid = take(hidden * n), y = take(out * n);
  simd::kernels().mlp_forward(view, value(x).data(), n, hid.data(), y.data());
  Var res = push(std::move(y), {w1, b1, w2, b2, x},
                 [w1, b1, w2, b2, x, in, hidden, out, n](Tape& t, std::size_t self) {
                   const simd::MlpView view{in, hidden, out, t.value(w1).data(),
                                            t.value(b1).data(), t.value(w2).data(),
                                            t.value(b2).data()};
                   // Parameters without gradients still need somewhere to accumulate.
                   RVec d_w1, d_b1, d_w2, d_b2;
                   auto slot = [&t](Var p, RVec& tmp, std::size_t len) -> double* {
                     if (t.node(p).needs_grad) return t.g(p).data();
                     tmp.assign(len, 0.0);
                     return tmp.data();
                   };
                   const simd::MlpGrad grad{slot(w1, d_w1, hidden * in), slot(b1, d_b1, hidden),
                                            slot(w2, d_w2, out * hidden), slot(b2, d_b2, out)};
                   const Node& me = t.nodes_[self];
                   if (t.node(x).needs_grad) {
                     RVec dx(in * n);
                     simd::kernels().mlp_backward(view, t.value(x).data(), me.aux.data(),
                                                  me.grad.data(), n, grad, dx.data());
                     RVec& gx = t.g(x);
                     for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
                   } else {
                     simd::kernels().mlp_backward(view, t.value(x).data(), me.aux.data(),
                                                  me.grad.data(), n, grad, nullptr);
                   }
                 });
  nodes_[res.id].aux = std::move(hid);
  return res;
}

// ---------------------------------------------------------------------------
// Losses

Var Tape::masked_sq_error(Var c, const RVec& target, const RVec& mask) {
  const RVec& vc = value(c);
  const std::size_t n = mask.size();
  require(vc.size() == 2 * n && target.size() == 2 * n, "masked_sq_error: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    const double dr = vc[i] - target[i], di = vc[n + i] - target[n + i];
    acc += mask[i] * (dr * dr + di * di);
  }
  return push(RVec{acc}, {c}, [c, target, mask, n](Tape& t, std::size_t self) {
    const double go = t.nodes_[self].grad[0];
    const RVec& vc = t.value(c);
    RVec& gc = t.g(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i] == 0.0) continue;
      gc[i] += 2.0 * go * mask[i] * (vc[i] - target[i]);
      gc[n + i] += 2.0 * go * mask[i] * (vc[n + i] - target[n + i]);
    }
  });
}

Var Tape::lincomb(std::span<const Var> scalars, std::span<const double> weights) {
  require(scalars.size() == weights.size() && !scalars.empty(), "lincomb: size mismatch");
  double acc = 0.0;
  bool needs = false;
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    acc += weights[k] * scalar(scalars[k]);
    needs = needs || node(scalars[k]).needs_grad;
  }
  std::vector<Var> ids(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  nodes_.push_back(Node{RVec{acc}, {}, {}, needs, {}});
  if (needs)
    nodes_.back().backward = [ids, w](Tape& t, std::size_t self) {
      const double go = t.nodes_[self].grad[0];
      for (std::size_t k = 0; k < ids.size(); ++k)
        if (t.node(ids[k]).needs_grad) t.g(ids[k])[0] += w[k] * go;
    };
  return Var{nodes_.size() - 1};
}

}  // namespace lmlvamp::nn
