#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "lmlvamp/common.hpp"
#include "lmlvamp/simd.hpp"
#include "lmlvamp/spectrum.hpp"

namespace lmlvamp::nn {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

// Reverse-mode differentiation over vector-valued nodes. The op set is the
// one the unrolled algorithm needs: elementwise arithmetic, reductions,
// complex vectors stored as [re..., im...], the unitary DFT (its adjoint is
// the inverse transform) and fused two-layer MLPs over a sample batch.
//
// Scalars are length-1 vectors. Shapes are checked when ops are recorded.
class Tape {
 public:
  Var constant(RVec value);
  Var parameter(RVec value);
  Var constant_scalar(double v) { return constant(RVec{v}); }

  const RVec& value(Var v) const { return node(v).value; }
  double scalar(Var v) const;
  // Valid after backward(); zero-length for nodes that carry no gradient.
  const RVec& grad(Var v) const { return node(v).grad; }
  std::size_t size() const { return nodes_.size(); }
  // Drops all nodes; their buffers are kept for reuse by later recordings.
  void clear();

  // Seeds d loss / d loss = 1 and propagates to every parameter.
  void backward(Var loss);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, Var s);  // s scalar
  Var scale(Var a, double c);
  Var add_const(Var a, const RVec& c);
  Var mul_const(Var a, const RVec& c);
  Var exp(Var a);
  Var recip(Var a);
  Var mean(Var a);
  Var sum(Var a);
  // Gradient is passed only where the input lies strictly inside [lo, hi].
  Var clamp(Var a, double lo, double hi);
  Var broadcast(Var s, std::size_t n);

  Var cabs(Var c);                 // 2n -> n
  Var cmul_real(Var c, Var r);     // 2n x n -> 2n
  Var dft(Var c, const spectrum::Dft& dft, bool inverse);

  Var stack(std::span<const Var> rows);             // k rows of n -> k*n
  Var row(Var m, std::size_t k, std::size_t n);     // k-th length-n row
  // Two-layer sigmoid MLP over a batch; x is in x n (SoA), result out x n.
  Var mlp(Var w1, Var b1, Var w2, Var b2, Var x, std::size_t in, std::size_t hidden,
          std::size_t out);

  // sum_i mask[i] |c_i - target_i|^2 for complex c.
  Var masked_sq_error(Var c, const RVec& target, const RVec& mask);
  Var lincomb(std::span<const Var> scalars, std::span<const double> weights);

 private:
  struct Node {
    RVec value;
    RVec grad;
    RVec aux;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(RVec value, std::initializer_list<Var> parents,
           std::function<void(Tape&, std::size_t)> backward);
  RVec& g(Var v) { return node(v).grad; }
  RVec take(std::size_t n);  // zeroed buffer, recycled when possible

  std::vector<Node> nodes_;
  std::map<std::size_t, std::vector<RVec>> pool_;  // by capacity
  std::size_t pooled_ = 0;
};

}  // namespace lmlvamp::nn
