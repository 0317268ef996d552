#include "dvu/autodiff.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dvu::ad {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Shape + size bookkeeping that reuses the destination's buffers.
void shape_to(Tensor& dst, const std::vector<std::size_t>& shape) {
  dst.shape.assign(shape.begin(), shape.end());
  dst.data.resize(shape_product(shape));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("Tensor: shape " + shape_str() + " does not match data size " +
                     std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
  std::size_t n = shape_product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
  std::size_t n = shape_product(s);
  return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::vec(std::vector<double> d) {
  std::size_t n = d.size();
  return Tensor({n}, std::move(d));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::neg: return "neg";
    case OpKind::sum: return "sum";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::clamp: return "clamp";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->val(idx_); }

void Tape::check_finite(const Node& n, std::size_t idx) const {
  for (double v : n.value.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite result in op '") + op_name(n.kind) +
                         "' at tape index " + std::to_string(idx));
    }
  }
}

Tape::Node& Tape::alloc(OpKind kind) {
  if (used_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[used_];
  n.kind = kind;
  n.requires_grad = false;
  n.inputs.clear();
  return n;
}

Var Tape::finish(Node& n) {
  const std::size_t idx = used_;
  if (n.kind != OpKind::leaf && n.kind != OpKind::constant) check_finite(n, idx);
  ++used_;
  return Var(this, idx);
}

Var Tape::param(const Tensor& t) {
  Node& n = alloc(OpKind::leaf);
  n.value.shape.assign(t.shape.begin(), t.shape.end());
  n.value.data.assign(t.data.begin(), t.data.end());
  n.requires_grad = true;
  return finish(n);
}

Var Tape::constant(const Tensor& t) {
  Node& n = alloc(OpKind::constant);
  n.value.shape.assign(t.shape.begin(), t.shape.end());
  n.value.data.assign(t.data.begin(), t.data.end());
  return finish(n);
}

Var Tape::constant_scalar(double v) {
  Node& n = alloc(OpKind::constant);
  n.value.shape.clear();
  n.value.data.assign(1, v);
  return finish(n);
}

Var Tape::constant_vec(std::span<const double> v) {
  Node& n = alloc(OpKind::constant);
  n.value.shape.assign(1, v.size());
  n.value.data.assign(v.begin(), v.end());
  return finish(n);
}

Var Tape::matmul(Var a, Var b) {
  {
    const Tensor& A = val(a.idx_);
    const Tensor& B = val(b.idx_);
    if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.cols() != B.rows()) {
      throw ShapeError("matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    }
  }
  Node& nd = alloc(OpKind::matmul);
  nd.a = a.idx_;
  nd.b = b.idx_;
  const Tensor& A = val(a.idx_);
  const Tensor& B = val(b.idx_);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rank() == 1) {
    nd.value.shape.assign(1, m);
  } else {
    nd.value.shape.assign({m, n});
  }
  nd.value.data.resize(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A.data[i * k + p] * B.data[p * n + j];
      nd.value.data[i * n + j] = acc;
    }
  }
  return finish(nd);
}

Var Tape::add(Var a, Var b) {
  {
    const Tensor& A = val(a.idx_);
    const Tensor& B = val(b.idx_);
    if (!(A.shape == B.shape || A.is_scalar() || B.is_scalar())) {
      throw ShapeError("add: incompatible shapes " + A.shape_str() + " + " + B.shape_str());
    }
  }
  Node& nd = alloc(OpKind::add);
  nd.a = a.idx_;
  nd.b = b.idx_;
  const Tensor& A = val(a.idx_);
  const Tensor& B = val(b.idx_);
  if (A.is_scalar() && !B.is_scalar()) {
    shape_to(nd.value, B.shape);
    for (std::size_t i = 0; i < B.data.size(); ++i) nd.value.data[i] = A.data[0] + B.data[i];
  } else if (B.is_scalar() && !A.is_scalar()) {
    shape_to(nd.value, A.shape);
    for (std::size_t i = 0; i < A.data.size(); ++i) nd.value.data[i] = A.data[i] + B.data[0];
  } else {
    shape_to(nd.value, A.shape);
    for (std::size_t i = 0; i < A.data.size(); ++i) nd.value.data[i] = A.data[i] + B.data[i];
  }
  return finish(nd);
}

Var Tape::mul(Var a, Var b) {
  {
    const Tensor& A = val(a.idx_);
    const Tensor& B = val(b.idx_);
    if (!(A.shape == B.shape || A.is_scalar() || B.is_scalar())) {
      throw ShapeError("mul: incompatible shapes " + A.shape_str() + " * " + B.shape_str());
    }
  }
  Node& nd = alloc(OpKind::mul);
  nd.a = a.idx_;
  nd.b = b.idx_;
  const Tensor& A = val(a.idx_);
  const Tensor& B = val(b.idx_);
  if (A.is_scalar() && !B.is_scalar()) {
    shape_to(nd.value, B.shape);
    for (std::size_t i = 0; i < B.data.size(); ++i) nd.value.data[i] = A.data[0] * B.data[i];
  } else if (B.is_scalar() && !A.is_scalar()) {
    shape_to(nd.value, A.shape);
    for (std::size_t i = 0; i < A.data.size(); ++i) nd.value.data[i] = A.data[i] * B.data[0];
  } else {
    shape_to(nd.value, A.shape);
    for (std::size_t i = 0; i < A.data.size(); ++i) nd.value.data[i] = A.data[i] * B.data[i];
  }
  return finish(nd);
}

#define DVU_UNARY(NAME, EXPR)                                                  \
  Var Tape::NAME(Var a) {                                                     \
    Node& nd = alloc(OpKind::NAME);                                           \
    nd.a = a.idx_;                                                            \
    const Tensor& A = val(a.idx_);                                            \
    shape_to(nd.value, A.shape);                                              \
    for (std::size_t i = 0; i < A.data.size(); ++i) {                         \
      const double x = A.data[i];                                             \
      nd.value.data[i] = (EXPR);                                              \
    }                                                                         \
    return finish(nd);                                                        \
  }

DVU_UNARY(tanh, std::tanh(x))
DVU_UNARY(sigmoid, 1.0 / (1.0 + std::exp(-x)))
DVU_UNARY(exp, std::exp(x))
DVU_UNARY(log, std::log(x))
DVU_UNARY(neg, -x)
#undef DVU_UNARY

Var Tape::sum(Var a) {
  Node& nd = alloc(OpKind::sum);
  nd.a = a.idx_;
  const Tensor& A = val(a.idx_);
  double acc = 0.0;
  for (double v : A.data) acc += v;  // fixed left-to-right order
  nd.value.shape.clear();
  nd.value.data.assign(1, acc);
  return finish(nd);
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const Var& p : parts) {
    if (val(p.idx_).rank() != 1) {
      throw ShapeError("concat: rank-1 inputs required, got " + val(p.idx_).shape_str());
    }
  }
  Node& nd = alloc(OpKind::concat);
  std::size_t total = 0;
  for (const Var& p : parts) {
    nd.inputs.push_back(p.idx_);
    total += val(p.idx_).size();
  }
  nd.value.shape.assign(1, total);
  nd.value.data.resize(total);
  std::size_t off = 0;
  for (std::size_t i : nd.inputs) {
    const Tensor& t = val(i);
    std::copy(t.data.begin(), t.data.end(), nd.value.data.begin() + off);
    off += t.size();
  }
  return finish(nd);
}

Var Tape::slice(Var a, std::size_t begin, std::size_t len) {
  {
    const Tensor& A = val(a.idx_);
    if (A.rank() != 1 || begin + len > A.size()) {
      throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                       ") out of range for " + A.shape_str());
    }
  }
  Node& nd = alloc(OpKind::slice);
  nd.a = a.idx_;
  nd.i0 = begin;
  nd.i1 = len;
  const Tensor& A = val(a.idx_);
  nd.value.shape.assign(1, len);
  nd.value.data.resize(len);
  std::copy(A.data.begin() + begin, A.data.begin() + begin + len, nd.value.data.begin());
  return finish(nd);
}

Var Tape::clamp(Var a, double lo, double hi) {
  Node& nd = alloc(OpKind::clamp);
  nd.a = a.idx_;
  nd.lo = lo;
  nd.hi = hi;
  const Tensor& A = val(a.idx_);
  shape_to(nd.value, A.shape);
  for (std::size_t i = 0; i < A.data.size(); ++i) {
    nd.value.data[i] = std::min(hi, std::max(lo, A.data[i]));
  }
  return finish(nd);
}

Var Tape::add_scaled(Var a, double c, Var b) { return add(a, mul(constant_scalar(c), b)); }

void Tape::backward(Var loss) {
  const Tensor& L = val(loss.idx_);
  if (L.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + L.shape_str());
  }
  if (grads_.size() < used_) grads_.resize(used_);
  for (std::size_t i = 0; i < used_; ++i) {
    grads_[i].shape.assign(nodes_[i].value.shape.begin(), nodes_[i].value.shape.end());
    grads_[i].data.assign(nodes_[i].value.data.size(), 0.0);
  }
  grads_[loss.idx_].data[0] = 1.0;

  for (std::size_t i = used_; i-- > 0;) {
    const Node& n = nodes_[i];
    const Tensor& g = grads_[i];
    bool any = false;
    for (double v : g.data) {
      if (v != 0.0) {
        any = true;
        break;
      }
    }
    if (!any) continue;
    switch (n.kind) {
      case OpKind::leaf:
      case OpKind::constant:
        break;
      case OpKind::matmul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        Tensor& gA = grads_[n.a];
        Tensor& gB = grads_[n.b];
        const std::size_t m = A.rows(), k = A.cols(), c = B.cols();
        // dA += g * B^T ; dB += A^T * g
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += g.data[r * c + j] * B.data[p * c + j];
            gA.data[r * k + p] += acc;
          }
        }
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < m; ++r) acc += A.data[r * k + p] * g.data[r * c + j];
            gB.data[p * c + j] += acc;
          }
        }
        break;
      }
      case OpKind::add: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        Tensor& gA = grads_[n.a];
        Tensor& gB = grads_[n.b];
        if (A.is_scalar() && !B.is_scalar()) {
          double acc = 0.0;
          for (double v : g.data) acc += v;
          gA.data[0] += acc;
          for (std::size_t j = 0; j < g.data.size(); ++j) gB.data[j] += g.data[j];
        } else if (B.is_scalar() && !A.is_scalar()) {
          double acc = 0.0;
          for (double v : g.data) acc += v;
          gB.data[0] += acc;
          for (std::size_t j = 0; j < g.data.size(); ++j) gA.data[j] += g.data[j];
        } else {
          for (std::size_t j = 0; j < g.data.size(); ++j) {
            gA.data[j] += g.data[j];
            gB.data[j] += g.data[j];
          }
        }
        break;
      }
      case OpKind::mul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        Tensor& gA = grads_[n.a];
        Tensor& gB = grads_[n.b];
        if (A.is_scalar() && !B.is_scalar()) {
          double acc = 0.0;
          for (std::size_t j = 0; j < g.data.size(); ++j) {
            acc += g.data[j] * B.data[j];
            gB.data[j] += g.data[j] * A.data[0];
          }
          gA.data[0] += acc;
        } else if (B.is_scalar() && !A.is_scalar()) {
          double acc = 0.0;
          for (std::size_t j = 0; j < g.data.size(); ++j) {
            acc += g.data[j] * A.data[j];
            gA.data[j] += g.data[j] * B.data[0];
          }
          gB.data[0] += acc;
        } else {
          for (std::size_t j = 0; j < g.data.size(); ++j) {
            gA.data[j] += g.data[j] * B.data[j];
            gB.data[j] += g.data[j] * A.data[j];
          }
        }
        break;
      }
      case OpKind::tanh: {
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < g.data.size(); ++j) {
          const double y = n.value.data[j];
          gA.data[j] += g.data[j] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::sigmoid: {
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < g.data.size(); ++j) {
          const double y = n.value.data[j];
          gA.data[j] += g.data[j] * y * (1.0 - y);
        }
        break;
      }
      case OpKind::exp: {
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < g.data.size(); ++j) gA.data[j] += g.data[j] * n.value.data[j];
        break;
      }
      case OpKind::log: {
        const Tensor& A = nodes_[n.a].value;
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < g.data.size(); ++j) gA.data[j] += g.data[j] / A.data[j];
        break;
      }
      case OpKind::neg: {
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < g.data.size(); ++j) gA.data[j] -= g.data[j];
        break;
      }
      case OpKind::sum: {
        Tensor& gA = grads_[n.a];
        for (double& v : gA.data) v += g.data[0];
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (std::size_t src : n.inputs) {
          Tensor& gS = grads_[src];
          for (std::size_t j = 0; j < gS.data.size(); ++j) gS.data[j] += g.data[off + j];
          off += gS.data.size();
        }
        break;
      }
      case OpKind::slice: {
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < n.i1; ++j) gA.data[n.i0 + j] += g.data[j];
        break;
      }
      case OpKind::clamp: {
        const Tensor& A = nodes_[n.a].value;
        Tensor& gA = grads_[n.a];
        for (std::size_t j = 0; j < g.data.size(); ++j) {
          if (A.data[j] >= n.lo && A.data[j] <= n.hi) gA.data[j] += g.data[j];
        }
        break;
      }
    }
  }
  grads_ready_ = true;
}

const Tensor& Tape::grad(Var v) const {
  if (!grads_ready_) throw NumericError("grad: backward() has not been run");
  return grads_[v.idx_];
}

void Tape::reset() {
  used_ = 0;
  grads_ready_ = false;
}

double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> params,
                         std::span<const double> analytic_grad, double step) {
  if (params.size() != analytic_grad.size()) {
    throw ShapeError("finite_diff_check: params/grad size mismatch");
  }
  std::vector<double> p(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + step;
    const double fp = f(p);
    p[i] = keep - step;
    const double fm = f(p);
    p[i] = keep;
    const double numeric = (fp - fm) / (2.0 * step);
    const double rel = std::abs(analytic_grad[i] - numeric) /
                       std::max(std::abs(numeric), 1e-8);
    if (rel > worst) worst = rel;
  }
  return worst;
}

}  // namespace dvu::ad
