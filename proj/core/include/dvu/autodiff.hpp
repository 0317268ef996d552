#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvu/error.hpp"

namespace dvu::ad {

// Dense row-major f64 tensor. Rank 0 (scalar), 1 or 2 is all the model needs.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor full(std::vector<std::size_t> s, double v);
  static Tensor vec(std::vector<double> d);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return rank() >= 1 ? shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape[1] : 1; }
  bool is_scalar() const { return data.size() == 1 && shape.empty(); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  std::string shape_str() const;
};

enum class OpKind {
  leaf,      // parameter (receives gradient)
  constant,  // input (no gradient)
  matmul,
  add,
  mul,
  tanh,
  sigmoid,
  exp,
  log,
  neg,
  sum,
  concat,
  slice,
  clamp,
};

const char* op_name(OpKind k);

class Tape;

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  std::size_t index() const { return idx_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}
  Tape* tape_ = nullptr;
  std::size_t idx_ = 0;
};

// Record of primitive ops in topological order. Forward values are computed
// eagerly as ops are pushed; backward() walks the record once in reverse.
// Single-threaded by contract; independent tapes may run in parallel.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var param(const Tensor& t);
  Var constant(const Tensor& t);
  Var constant_scalar(double v);
  Var constant_vec(std::span<const double> v);

  // Primitives. Shapes must conform exactly; the only broadcasting is
  // scalar (+|*) tensor. Every result is checked finite.
  Var matmul(Var a, Var b);       // (m,k)x(k,n)->(m,n), (m,k)x(k)->(m)
  Var add(Var a, Var b);          // matched shapes, or scalar + tensor
  Var mul(Var a, Var b);          // matched shapes, or scalar * tensor
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var neg(Var a);
  Var sum(Var a);                 // -> scalar, fixed left-to-right reduction
  Var concat(std::span<const Var> parts);  // rank-1 concat
  Var slice(Var a, std::size_t begin, std::size_t len);  // rank-1 slice
  Var clamp(Var a, double lo, double hi);  // gradient passes where lo<=x<=hi

  // Conveniences built from primitives.
  Var add_scaled(Var a, double c, Var b);  // a + c*b
  Var sub(Var a, Var b) { return add(a, neg(b)); }
  Var scale(Var a, double c) { return mul(constant(Tensor::scalar(c)), a); }
  Var square(Var a) { return mul(a, a); }
  Var affine(Var w, Var x, Var b) { return add(matmul(w, x), b); }

  // Gradient of a scalar loss w.r.t. every node; leaves not reached by the
  // loss get zero gradient. Accumulation order is fixed, so repeated runs of
  // an identical tape are bit-identical.
  void backward(Var loss);
  const Tensor& grad(Var v) const;
  bool has_grads() const { return grads_ready_; }

  std::size_t node_count() const { return used_; }

  // Drops all nodes but keeps allocated capacity, so a tape can be reused
  // across evaluations without churning the allocator.
  void reset();

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    Tensor value;
    std::size_t a = 0, b = 0;          // input indices
    std::vector<std::size_t> inputs;   // used by concat
    std::size_t i0 = 0, i1 = 0;        // slice begin/len
    double lo = 0.0, hi = 0.0;         // clamp bounds
    bool requires_grad = false;
  };

  const Tensor& val(std::size_t i) const { return nodes_[i].value; }
  // Claims the next node slot (recycled after reset() so tensor buffers are
  // reused). May grow nodes_, invalidating references into it.
  Node& alloc(OpKind kind);
  Var finish(Node& n);
  void check_finite(const Node& n, std::size_t idx) const;
  friend class Var;

  std::vector<Node> nodes_;
  std::size_t used_ = 0;
  std::vector<Tensor> grads_;
  bool grads_ready_ = false;
};

// Max over parameters of |analytic - numeric| / max(|numeric|, 1e-8), where
// numeric is the central finite difference of f at the given step. f must be
// deterministic in params (freeze any noise before calling).
double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> params,
                         std::span<const double> analytic_grad, double step);

}  // namespace dvu::ad
