#include "wtfd/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

#include "wtfd/errors.hpp"
#include "wtfd/kernels.hpp"

namespace wtfd::ag {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

void require(bool ok, const char* op, const char* what) {
  if (!ok) throw ContractError(std::string(op) + ": " + what);
}

template <class T>
void add_prod(T* dst, const T* a, const T* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

// True when b's shape is a trailing suffix of a's (including equal), so b can
// broadcast over a's leading dims; scalar b always qualifies.
bool suffix_of(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
  return true;
}

}  // namespace

// ------------------------------------------------------------- ParamSet ----

template <class T>
Parameter<T>& ParamSet<T>::create(std::string name, Shape shape, bool decay) {
  if (find(name) != nullptr)
    throw ContractError("parameter name already taken: " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->shape = std::move(shape);
  p->value.assign(numel(p->shape), T(0));
  p->grad.assign(p->value.size(), T(0));
  p->decay = decay;
  items_.push_back(std::move(p));
  return *items_.back();
}

template <class T>
Parameter<T>* ParamSet<T>::find(std::string_view name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <class T>
const Parameter<T>* ParamSet<T>::find(std::string_view name) const {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <class T>
std::size_t ParamSet<T>::total_numel() const {
  std::size_t n = 0;
  for (auto& p : items_) n += p->value.size();
  return n;
}

template <class T>
void ParamSet<T>::zero_grad() {
  for (auto& p : items_) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

// ------------------------------------------------------------------ Var ----

template <class T>
const Shape& Var<T>::shape() const {
  return g->shape_of(id);
}

template <class T>
const std::vector<T>& Var<T>::val() const {
  return g->val_of(id);
}

// ---------------------------------------------------------------- Graph ----

template <class T>
Var<T> Graph<T>::emit(Shape shape, std::vector<T> val, bool needs,
                      const char* op_name) {
  if (val.size() != numel(shape))
    throw ShapeError(std::string(op_name) + ": data length " +
                     std::to_string(val.size()) + " does not match shape " +
                     shape_str(shape));
  if (check_finite_) {
    for (T v : val)
      if (!std::isfinite(double(v)))
        throw DomainError(std::string(op_name) + ": non-finite value produced");
  }
  Node n;
  n.shape = std::move(shape);
  n.val = std::move(val);
  n.needs_grad = needs;
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <class T>
void Graph<T>::attach(Var<T> v, std::function<void()> back) {
  if (nodes_[v.id].needs_grad) nodes_[v.id].back = std::move(back);
}

template <class T>
Var<T> Graph<T>::input(Shape shape, std::vector<T> data, bool needs_grad) {
  return emit(std::move(shape), std::move(data), needs_grad, "input");
}

template <class T>
Var<T> Graph<T>::use(Parameter<T>& p) {
  Var<T> v = emit(p.shape, p.value, true, "use");
  nodes_[v.id].bound = &p;
  return v;
}

template <class T>
Var<T> Graph<T>::frozen(const Parameter<T>& p) {
  return emit(p.shape, p.value, false, "frozen");
}

template <class T>
Var<T> Graph<T>::add(Var<T> a, Var<T> b) {
  const auto& sa = shape_of(a.id);
  const auto& sb = shape_of(b.id);
  if (!suffix_of(sa, sb) && numel(sb) != 1) shape_fail("add", sa, sb);
  const auto& k = kern::table<T>();
  std::size_t na = numel(sa), nb = numel(sb);
  std::vector<T> out(na);
  if (nb == na) {
    k.add(val_of(a.id).data(), val_of(b.id).data(), out.data(), na);
  } else if (nb == 1) {
    T c = val_of(b.id)[0];
    for (std::size_t i = 0; i < na; ++i) out[i] = val_of(a.id)[i] + c;
  } else {
    for (std::size_t off = 0; off < na; off += nb) {
      k.add(val_of(a.id).data() + off, val_of(b.id).data(), out.data() + off,
            nb);
    }
  }
  bool needs = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var<T> y = emit(sa, std::move(out), needs, "add");
  attach(y, [this, a, b, y, na, nb]() {
    const auto& g = grad_buf(y.id);
    const auto& k2 = kern::table<T>();
    if (node(a.id).needs_grad) k2.axpy(T(1), g.data(), grad_buf(a.id).data(), na);
    if (node(b.id).needs_grad) {
      if (nb == 1) {
        grad_buf(b.id)[0] += k2.sum(g.data(), na);
      } else {
        for (std::size_t off = 0; off < na; off += nb)
          k2.axpy(T(1), g.data() + off, grad_buf(b.id).data(), nb);
      }
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::sub(Var<T> a, Var<T> b) {
  const auto& sa = shape_of(a.id);
  const auto& sb = shape_of(b.id);
  if (!suffix_of(sa, sb) && numel(sb) != 1) shape_fail("sub", sa, sb);
  const auto& k = kern::table<T>();
  std::size_t na = numel(sa), nb = numel(sb);
  std::vector<T> out(na);
  if (nb == na) {
    k.sub(val_of(a.id).data(), val_of(b.id).data(), out.data(), na);
  } else if (nb == 1) {
    T c = val_of(b.id)[0];
    for (std::size_t i = 0; i < na; ++i) out[i] = val_of(a.id)[i] - c;
  } else {
    for (std::size_t off = 0; off < na; off += nb)
      k.sub(val_of(a.id).data() + off, val_of(b.id).data(), out.data() + off,
            nb);
  }
  bool needs = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var<T> y = emit(sa, std::move(out), needs, "sub");
  attach(y, [this, a, b, y, na, nb]() {
    const auto& g = grad_buf(y.id);
    const auto& k2 = kern::table<T>();
    if (node(a.id).needs_grad) k2.axpy(T(1), g.data(), grad_buf(a.id).data(), na);
    if (node(b.id).needs_grad) {
      if (nb == 1) {
        grad_buf(b.id)[0] -= k2.sum(g.data(), na);
      } else {
        for (std::size_t off = 0; off < na; off += nb)
          k2.axpy(T(-1), g.data() + off, grad_buf(b.id).data(), nb);
      }
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::mul(Var<T> a, Var<T> b) {
  const auto& sa = shape_of(a.id);
  const auto& sb = shape_of(b.id);
  std::size_t na = numel(sa), nb = numel(sb);
  if (nb != na && nb != 1) shape_fail("mul", sa, sb);
  const auto& k = kern::table<T>();
  std::vector<T> out(na);
  if (nb == na) {
    k.mul(val_of(a.id).data(), val_of(b.id).data(), out.data(), na);
  } else {
    k.scale(val_of(a.id).data(), val_of(b.id)[0], out.data(), na);
  }
  bool needs = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var<T> y = emit(sa, std::move(out), needs, "mul");
  attach(y, [this, a, b, y, na, nb]() {
    const auto& g = grad_buf(y.id);
    const auto& k2 = kern::table<T>();
    if (nb == na) {
      if (node(a.id).needs_grad)
        add_prod(grad_buf(a.id).data(), g.data(), val_of(b.id).data(), na);
      if (node(b.id).needs_grad)
        add_prod(grad_buf(b.id).data(), g.data(), val_of(a.id).data(), na);
    } else {
      if (node(a.id).needs_grad)
        k2.axpy(val_of(b.id)[0], g.data(), grad_buf(a.id).data(), na);
      if (node(b.id).needs_grad)
        grad_buf(b.id)[0] += k2.dot(g.data(), val_of(a.id).data(), na);
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::scale(Var<T> x, T c) {
  std::size_t n = numel(shape_of(x.id));
  std::vector<T> out(n);
  kern::table<T>().scale(val_of(x.id).data(), c, out.data(), n);
  Var<T> y = emit(shape_of(x.id), std::move(out), nodes_[x.id].needs_grad,
                  "scale");
  attach(y, [this, x, y, c, n]() {
    kern::table<T>().axpy(c, grad_buf(y.id).data(), grad_buf(x.id).data(), n);
  });
  return y;
}

template <class T>
Var<T> Graph<T>::exp(Var<T> x) {
  std::size_t n = numel(shape_of(x.id));
  std::vector<T> out(n);
  kern::table<T>().vexp(val_of(x.id).data(), out.data(), n);
  Var<T> y = emit(shape_of(x.id), std::move(out), nodes_[x.id].needs_grad,
                  "exp");
  attach(y, [this, x, y, n]() {
    add_prod(grad_buf(x.id).data(), grad_buf(y.id).data(), val_of(y.id).data(),
             n);
  });
  return y;
}

template <class T>
Var<T> Graph<T>::log(Var<T> x) {
  std::size_t n = numel(shape_of(x.id));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(val_of(x.id)[i]);
  Var<T> y = emit(shape_of(x.id), std::move(out), nodes_[x.id].needs_grad,
                  "log");
  attach(y, [this, x, y, n]() {
    auto& gx = grad_buf(x.id);
    const auto& gy = grad_buf(y.id);
    const auto& xv = val_of(x.id);
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] / xv[i];
  });
  return y;
}

template <class T>
Var<T> Graph<T>::gelu(Var<T> x) {
  // 0.5 x (1 + tanh[sqrt(2/pi) (x + 0.045 x^3)])
  const T c = T(std::sqrt(2.0 / 3.14159265358979323846));
  const T a3 = T(0.045);
  std::size_t n = numel(shape_of(x.id));
  const auto& xv = val_of(x.id);
  std::vector<T> inner(n);
  for (std::size_t i = 0; i < n; ++i)
    inner[i] = c * (xv[i] + a3 * xv[i] * xv[i] * xv[i]);
  std::vector<T> t(n);
  kern::table<T>().vtanh(inner.data(), t.data(), n);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = T(0.5) * xv[i] * (T(1) + t[i]);
  Var<T> y = emit(shape_of(x.id), std::move(out), nodes_[x.id].needs_grad,
                  "gelu");
  attach(y, [this, x, y, t = std::move(t), c, a3, n]() {
    auto& gx = grad_buf(x.id);
    const auto& gy = grad_buf(y.id);
    const auto& xv2 = val_of(x.id);
    for (std::size_t i = 0; i < n; ++i) {
      T ti = t[i];
      T dinner = c * (T(1) + T(3) * a3 * xv2[i] * xv2[i]);
      T d = T(0.5) * (T(1) + ti) +
            T(0.5) * xv2[i] * (T(1) - ti * ti) * dinner;
      gx[i] += gy[i] * d;
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::matmul(Var<T> a, Var<T> b) {
  const Shape& sa = shape_of(a.id);
  const Shape& sb = shape_of(b.id);
  if (sa.size() < 2 || sb.size() < 2) shape_fail("matmul", sa, sb);
  std::size_t m = sa[sa.size() - 2], ka = sa[sa.size() - 1];
  std::size_t kb = sb[sb.size() - 2], nn = sb[sb.size() - 1];
  if (ka != kb) shape_fail("matmul", sa, sb);

  const auto& k = kern::table<T>();
  bool needs = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;

  if (sb.size() == 2) {
    // Shared right operand: flatten a's batch dims into rows.
    std::size_t rows = numel(sa) / ka;
    Shape so(sa.begin(), sa.end() - 1);
    so.push_back(nn);
    std::vector<T> out(rows * nn);
    k.gemm(false, false, rows, nn, ka, val_of(a.id).data(),
           val_of(b.id).data(), out.data(), false);
    Var<T> y = emit(std::move(so), std::move(out), needs, "matmul");
    attach(y, [this, a, b, y, rows, nn, ka]() {
      const auto& k2 = kern::table<T>();
      const auto& g = grad_buf(y.id);
      if (node(a.id).needs_grad)
        k2.gemm(false, true, rows, ka, nn, g.data(), val_of(b.id).data(),
                grad_buf(a.id).data(), true);
      if (node(b.id).needs_grad)
        k2.gemm(true, false, ka, nn, rows, val_of(a.id).data(), g.data(),
                grad_buf(b.id).data(), true);
    });
    return y;
  }

  // Batched: identical leading dims.
  if (sa.size() != sb.size()) shape_fail("matmul", sa, sb);
  for (std::size_t i = 0; i + 2 < sa.size(); ++i)
    if (sa[i] != sb[i]) shape_fail("matmul", sa, sb);
  std::size_t batch = numel(sa) / (m * ka);
  Shape so(sa.begin(), sa.end() - 1);
  so.push_back(nn);
  std::vector<T> out(batch * m * nn);
  for (std::size_t i = 0; i < batch; ++i)
    k.gemm(false, false, m, nn, ka, val_of(a.id).data() + i * m * ka,
           val_of(b.id).data() + i * ka * nn, out.data() + i * m * nn, false);
  Var<T> y = emit(std::move(so), std::move(out), needs, "matmul");
  attach(y, [this, a, b, y, batch, m, nn, ka]() {
    const auto& k2 = kern::table<T>();
    const auto& g = grad_buf(y.id);
    for (std::size_t i = 0; i < batch; ++i) {
      const T* gi = g.data() + i * m * nn;
      if (node(a.id).needs_grad)
        k2.gemm(false, true, m, ka, nn, gi, val_of(b.id).data() + i * ka * nn,
                grad_buf(a.id).data() + i * m * ka, true);
      if (node(b.id).needs_grad)
        k2.gemm(true, false, ka, nn, m, val_of(a.id).data() + i * m * ka, gi,
                grad_buf(b.id).data() + i * ka * nn, true);
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::softmax(Var<T> x, std::size_t axis) {
  const Shape& s = shape_of(x.id);
  require(axis < s.size(), "softmax", "axis out of range");
  std::size_t axis_len = s[axis];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::size_t outer = numel(s) / (axis_len * inner);
  const auto& k = kern::table<T>();
  const auto& xv = val_of(x.id);
  std::vector<T> out(xv.size());
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      const T* row = xv.data() + o * axis_len;
      T* orow = out.data() + o * axis_len;
      T mx = k.max(row, axis_len);
      for (std::size_t j = 0; j < axis_len; ++j) orow[j] = row[j] - mx;
      k.vexp(orow, orow, axis_len);
      T total = k.sum(orow, axis_len);
      k.scale(orow, T(1) / total, orow, axis_len);
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < inner; ++c) {
        std::size_t base = o * axis_len * inner + c;
        T mx = xv[base];
        for (std::size_t j = 1; j < axis_len; ++j)
          mx = std::max(mx, xv[base + j * inner]);
        T total = T(0);
        for (std::size_t j = 0; j < axis_len; ++j) {
          T e = std::exp(xv[base + j * inner] - mx);
          out[base + j * inner] = e;
          total += e;
        }
        for (std::size_t j = 0; j < axis_len; ++j) out[base + j * inner] /= total;
      }
  }
  Var<T> y = emit(s, std::move(out), nodes_[x.id].needs_grad, "softmax");
  attach(y, [this, x, y, outer, axis_len, inner]() {
    const auto& yv = val_of(y.id);
    const auto& gy = grad_buf(y.id);
    auto& gx = grad_buf(x.id);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < inner; ++c) {
        std::size_t base = o * axis_len * inner + c;
        T dotv = T(0);
        for (std::size_t j = 0; j < axis_len; ++j)
          dotv += gy[base + j * inner] * yv[base + j * inner];
        for (std::size_t j = 0; j < axis_len; ++j) {
          std::size_t idx = base + j * inner;
          gx[idx] += yv[idx] * (gy[idx] - dotv);
        }
      }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::layer_norm(Var<T> x, Var<T> gain, Var<T> bias,
                            std::size_t axis, T eps) {
  const Shape& s = shape_of(x.id);
  require(axis == s.size() - 1, "layer_norm", "statistics run over the last axis");
  std::size_t n = s.back();
  std::size_t rows = numel(s) / n;
  if (numel(shape_of(gain.id)) != n) shape_fail("layer_norm", s, shape_of(gain.id));
  if (numel(shape_of(bias.id)) != n) shape_fail("layer_norm", s, shape_of(bias.id));
  const auto& xv = val_of(x.id);
  const auto& gv = val_of(gain.id);
  const auto& bv = val_of(bias.id);
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T mean = kern::table<T>().sum(row, n) / T(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      T d = row[j] - mean;
      var += d * d;
    }
    var /= T(n);
    T iv = T(1) / std::sqrt(var + eps);
    inv[r] = iv;
    for (std::size_t j = 0; j < n; ++j) {
      T xh = (row[j] - mean) * iv;
      xhat[r * n + j] = xh;
      out[r * n + j] = xh * gv[j] + bv[j];
    }
  }
  bool needs = nodes_[x.id].needs_grad || nodes_[gain.id].needs_grad ||
               nodes_[bias.id].needs_grad;
  Var<T> y = emit(s, std::move(out), needs, "layer_norm");
  attach(y, [this, x, gain, bias, y, xhat = std::move(xhat),
             inv = std::move(inv), rows, n]() {
    const auto& gy = grad_buf(y.id);
    const auto& gv2 = val_of(gain.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = gy.data() + r * n;
      const T* xh = xhat.data() + r * n;
      if (node(gain.id).needs_grad) {
        auto& gg = grad_buf(gain.id);
        for (std::size_t j = 0; j < n; ++j) gg[j] += dy[j] * xh[j];
      }
      if (node(bias.id).needs_grad) {
        auto& gb = grad_buf(bias.id);
        for (std::size_t j = 0; j < n; ++j) gb[j] += dy[j];
      }
      if (node(x.id).needs_grad) {
        T sum_dxh = T(0), sum_dxh_xh = T(0);
        for (std::size_t j = 0; j < n; ++j) {
          T dxh = dy[j] * gv2[j];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh[j];
        }
        auto& gx = grad_buf(x.id);
        T iv = inv[r] / T(n);
        for (std::size_t j = 0; j < n; ++j) {
          T dxh = dy[j] * gv2[j];
          gx[r * n + j] += iv * (T(n) * dxh - sum_dxh - xh[j] * sum_dxh_xh);
        }
      }
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::l2_normalize(Var<T> x, T eps) {
  const Shape& s = shape_of(x.id);
  require(!s.empty(), "l2_normalize", "rank must be >= 1");
  std::size_t n = s.back();
  std::size_t rows = numel(s) / n;
  const auto& xv = val_of(x.id);
  std::vector<T> out(xv.size());
  std::vector<T> norms(rows);
  const auto& k = kern::table<T>();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T norm = std::sqrt(k.dot(row, row, n));
    norms[r] = norm;
    T denom = std::max(norm, eps);
    k.scale(row, T(1) / denom, out.data() + r * n, n);
  }
  Var<T> y = emit(s, std::move(out), nodes_[x.id].needs_grad, "l2_normalize");
  attach(y, [this, x, y, norms = std::move(norms), eps, rows, n]() {
    const auto& k2 = kern::table<T>();
    const auto& yv = val_of(y.id);
    const auto& gy = grad_buf(y.id);
    auto& gx = grad_buf(x.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = gy.data() + r * n;
      const T* yr = yv.data() + r * n;
      T* dx = gx.data() + r * n;
      if (norms[r] > eps) {
        T proj = k2.dot(dy, yr, n);
        T iv = T(1) / norms[r];
        for (std::size_t j = 0; j < n; ++j)
          dx[j] += iv * (dy[j] - yr[j] * proj);
      } else {
        k2.axpy(T(1) / eps, dy, dx, n);
      }
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::concat(Var<T> a, Var<T> b, std::size_t axis) {
  const Shape& sa = shape_of(a.id);
  const Shape& sb = shape_of(b.id);
  if (sa.size() != sb.size() || axis >= sa.size()) shape_fail("concat", sa, sb);
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (i != axis && sa[i] != sb[i]) shape_fail("concat", sa, sb);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  std::size_t block_a = sa[axis] * inner;
  std::size_t block_b = sb[axis] * inner;
  std::size_t outer = numel(sa) / block_a;
  Shape so = sa;
  so[axis] += sb[axis];
  std::vector<T> out(numel(so));
  const auto& av = val_of(a.id);
  const auto& bv = val_of(b.id);
  for (std::size_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * (block_a + block_b), av.data() + o * block_a,
                block_a * sizeof(T));
    std::memcpy(out.data() + o * (block_a + block_b) + block_a,
                bv.data() + o * block_b, block_b * sizeof(T));
  }
  bool needs = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var<T> y = emit(std::move(so), std::move(out), needs, "concat");
  attach(y, [this, a, b, y, outer, block_a, block_b]() {
    const auto& g = grad_buf(y.id);
    const auto& k2 = kern::table<T>();
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = g.data() + o * (block_a + block_b);
      if (node(a.id).needs_grad)
        k2.axpy(T(1), src, grad_buf(a.id).data() + o * block_a, block_a);
      if (node(b.id).needs_grad)
        k2.axpy(T(1), src + block_a, grad_buf(b.id).data() + o * block_b,
                block_b);
    }
  });
  return y;
}

template <class T>
Var<T> Graph<T>::slice(Var<T> x, std::size_t axis, std::size_t start,
                       std::size_t len) {
  const Shape& s = shape_of(x.id);
  require(axis < s.size(), "slice", "axis out of range");
  require(len >= 1 && start + len <= s[axis], "slice", "range out of bounds");
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::size_t in_block = s[axis] * inner;
  std::size_t out_block = len * inner;
  std::size_t outer = numel(s) / in_block;
  Shape so = s;
  so[axis] = len;
  std::vector<T> out(numel(so));
  const auto& xv = val_of(x.id);
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_block,
                xv.data() + o * in_block + start * inner, out_block * sizeof(T));
  Var<T> y = emit(std::move(so), std::move(out), nodes_[x.id].needs_grad,
                  "slice");
  attach(y, [this, x, y, outer, in_block, out_block, start, inner]() {
    const auto& g = grad_buf(y.id);
    const auto& k2 = kern::table<T>();
    for (std::size_t o = 0; o < outer; ++o)
      k2.axpy(T(1), g.data() + o * out_block,
              grad_buf(x.id).data() + o * in_block + start * inner, out_block);
  });
  return y;
}

namespace {

// Swap two axes of a row-major array. dst must not alias src.
template <class T>
void swap_axes(const T* src, T* dst, const Shape& in_shape, std::size_t a0,
               std::size_t a1) {
  std::size_t rank = in_shape.size();
  Shape out_shape = in_shape;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<std::size_t> in_strides(rank, 1), out_strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) {
    in_strides[i - 1] = in_strides[i] * in_shape[i];
    out_strides[i - 1] = out_strides[i] * out_shape[i];
  }
  // Fast path: swapping the last two axes is a per-slab 2-D transpose.
  if ((a0 == rank - 2 && a1 == rank - 1) || (a0 == rank - 1 && a1 == rank - 2)) {
    std::size_t r = in_shape[rank - 2], c = in_shape[rank - 1];
    std::size_t slabs = numel(in_shape) / (r * c);
    for (std::size_t s = 0; s < slabs; ++s) {
      const T* sp = src + s * r * c;
      T* dp = dst + s * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dp[j * r + i] = sp[i * c + j];
    }
    return;
  }
  std::size_t total = numel(in_shape);
  std::vector<std::size_t> coord(rank, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t i = 0; i < rank; ++i) {
      coord[i] = rem / in_strides[i];
      rem %= in_strides[i];
    }
    std::swap(coord[a0], coord[a1]);
    std::size_t oidx = 0;
    for (std::size_t i = 0; i < rank; ++i) oidx += coord[i] * out_strides[i];
    dst[oidx] = src[idx];
  }
}

}  // namespace

template <class T>
Var<T> Graph<T>::transpose(Var<T> x, std::size_t a0, std::size_t a1) {
  const Shape& s = shape_of(x.id);
  require(a0 < s.size() && a1 < s.size(), "transpose", "axis out of range");
  Shape so = s;
  std::swap(so[a0], so[a1]);
  std::vector<T> out(numel(so));
  swap_axes(val_of(x.id).data(), out.data(), s, a0, a1);
  Var<T> y = emit(std::move(so), std::move(out), nodes_[x.id].needs_grad,
                  "transpose");
  attach(y, [this, x, y, a0, a1]() {
    // The inverse of an axis swap is the same swap.
    std::vector<T> tmp(grad_buf(y.id).size());
    swap_axes(grad_buf(y.id).data(), tmp.data(), shape_of(y.id), a0, a1);
    kern::table<T>().axpy(T(1), tmp.data(), grad_buf(x.id).data(), tmp.size());
  });
  return y;
}

template <class T>
Var<T> Graph<T>::reshape(Var<T> x, Shape shape) {
  if (numel(shape) != numel(shape_of(x.id)))
    shape_fail("reshape", shape_of(x.id), shape);
  std::vector<T> out = val_of(x.id);
  Var<T> y = emit(std::move(shape), std::move(out), nodes_[x.id].needs_grad,
                  "reshape");
  attach(y, [this, x, y]() {
    kern::table<T>().axpy(T(1), grad_buf(y.id).data(), grad_buf(x.id).data(),
                          grad_buf(y.id).size());
  });
  return y;
}

template <class T>
Var<T> Graph<T>::reduce_sum(Var<T> x) {
  std::size_t n = numel(shape_of(x.id));
  T s = kern::table<T>().sum(val_of(x.id).data(), n);
  Var<T> y = emit(Shape{1}, std::vector<T>{s}, nodes_[x.id].needs_grad,
                  "reduce_sum");
  attach(y, [this, x, y, n]() {
    T g = grad_buf(y.id)[0];
    auto& gx = grad_buf(x.id);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
  return y;
}

template <class T>
Var<T> Graph<T>::reduce_mean(Var<T> x) {
  std::size_t n = numel(shape_of(x.id));
  T s = kern::table<T>().sum(val_of(x.id).data(), n) / T(n);
  Var<T> y = emit(Shape{1}, std::vector<T>{s}, nodes_[x.id].needs_grad,
                  "reduce_mean");
  attach(y, [this, x, y, n]() {
    T g = grad_buf(y.id)[0] / T(n);
    auto& gx = grad_buf(x.id);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
  return y;
}

template <class T>
Var<T> Graph<T>::stop_gradient(Var<T> x) {
  return emit(shape_of(x.id), val_of(x.id), false, "stop_gradient");
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
  if (ran_backward_)
    throw ContractError("backward: graph already consumed; record a new graph");
  if (numel(shape_of(loss.id)) != 1)
    throw ContractError("backward: loss must be scalar, got " +
                        shape_str(shape_of(loss.id)));
  ran_backward_ = true;
  for (auto& nd : nodes_)
    if (nd.needs_grad) nd.grad.assign(nd.val.size(), T(0));
  if (!nodes_[loss.id].needs_grad) return;  // nothing reaches a leaf
  nodes_[loss.id].grad[0] = T(1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back();
  }
  for (auto& nd : nodes_)
    if (nd.bound != nullptr && nd.needs_grad)
      kern::table<T>().axpy(T(1), nd.grad.data(), nd.bound->grad.data(),
                            nd.grad.size());
}

template <class T>
const std::vector<T>& Graph<T>::grad_of(Var<T> v) const {
  if (!ran_backward_) throw ContractError("grad_of: backward has not run");
  if (!nodes_[v.id].needs_grad)
    throw ContractError("grad_of: node does not track gradients");
  return nodes_[v.id].grad;
}

// -------------------------------------------------------------- adam_step --

template <class T>
void adam_step(ParamSet<T>& params, std::size_t step_index, T lr, T beta1,
               T beta2, T eps, T weight_decay) {
  if (step_index < 1) throw ContractError("adam_step: step_index starts at 1");
  T bc1 = T(1) - T(std::pow(double(beta1), double(step_index)));
  T bc2 = T(1) - T(std::pow(double(beta2), double(step_index)));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params.at(pi);
    std::size_t n = p.numel();
    if (p.m.size() != n) {
      p.m.assign(n, T(0));
      p.v.assign(n, T(0));
    }
    if (weight_decay != T(0) && p.decay) {
      T shrink = T(1) - lr * weight_decay;
      for (std::size_t i = 0; i < n; ++i) p.value[i] *= shrink;
    }
    for (std::size_t i = 0; i < n; ++i) {
      T g = p.grad[i];
      p.m[i] = beta1 * p.m[i] + (T(1) - beta1) * g;
      p.v[i] = beta2 * p.v[i] + (T(1) - beta2) * g * g;
      T mhat = p.m[i] / bc1;
      T vhat = p.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class Graph<float>;
template class Graph<double>;
template class ParamSet<float>;
template class ParamSet<double>;
template struct Var<float>;
template struct Var<double>;
template void adam_step<float>(ParamSet<float>&, std::size_t, float, float,
                               float, float, float);
template void adam_step<double>(ParamSet<double>&, std::size_t, double, double,
                                double, double, double);

}  // namespace wtfd::ag
