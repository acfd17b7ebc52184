// Dense-tensor numerics with reverse-mode autodiff. A Graph records ops as
// they execute; backward() replays adjoints in reverse creation order. Graphs
// are single-use: one backward pass, then the graph is discarded.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace wtfd::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Persistent learnable leaf. Lives in a ParamSet across steps; graphs bind to
// it per step and backward() accumulates into grad.
template <class T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> m, v;  // Adam state, sized on first optimizer step
  bool decay = true;    // whether weight decay applies to this tensor

  std::size_t numel() const { return value.size(); }
};

template <class T>
class ParamSet {
 public:
  Parameter<T>& create(std::string name, Shape shape, bool decay = true);
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;

  std::size_t size() const { return items_.size(); }
  Parameter<T>& at(std::size_t i) { return *items_[i]; }
  const Parameter<T>& at(std::size_t i) const { return *items_[i]; }

  std::size_t total_numel() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> items_;
};

template <class T>
class Graph;

// Lightweight handle into a graph. Valid only while the graph lives.
template <class T>
struct Var {
  Graph<T>* g = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
  const std::vector<T>& val() const;
};

template <class T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // When set, every op validates its output for NaN/inf and throws
  // DomainError on the first hit.
  void set_check_finite(bool on) { check_finite_ = on; }

  // Leaves.
  Var<T> input(Shape shape, std::vector<T> data, bool needs_grad = false);
  Var<T> use(Parameter<T>& p);          // learnable leaf, grads flow to p
  Var<T> frozen(const Parameter<T>& p); // constant copy of a parameter

  // Elementwise / scalar.
  Var<T> add(Var<T> a, Var<T> b);  // b may broadcast: trailing-suffix or scalar
  Var<T> sub(Var<T> a, Var<T> b);  // same broadcast rule as add
  Var<T> mul(Var<T> a, Var<T> b);  // same-shape or scalar b
  Var<T> scale(Var<T> x, T c);
  Var<T> exp(Var<T> x);
  Var<T> log(Var<T> x);
  Var<T> gelu(Var<T> x);

  // Linear algebra.
  Var<T> matmul(Var<T> a, Var<T> b);
  Var<T> softmax(Var<T> x, std::size_t axis);
  Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, std::size_t axis, T eps);
  Var<T> l2_normalize(Var<T> x, T eps);

  // Structure.
  Var<T> concat(Var<T> a, Var<T> b, std::size_t axis);
  Var<T> slice(Var<T> x, std::size_t axis, std::size_t start, std::size_t len);
  Var<T> transpose(Var<T> x, std::size_t a0, std::size_t a1);
  Var<T> reshape(Var<T> x, Shape shape);
  Var<T> reduce_sum(Var<T> x);
  Var<T> reduce_mean(Var<T> x);
  Var<T> stop_gradient(Var<T> x);

  // Adjoint sweep from a scalar loss. One shot per graph; a second call is a
  // contract error.
  void backward(Var<T> loss);

  const Shape& shape_of(std::size_t id) const { return nodes_[id].shape; }
  const std::vector<T>& val_of(std::size_t id) const { return nodes_[id].val; }
  const std::vector<T>& grad_of(Var<T> v) const;
  bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;
    bool needs_grad = false;
    std::function<void()> back;  // accumulates this node's grad into inputs
    Parameter<T>* bound = nullptr;
  };

  Var<T> emit(Shape shape, std::vector<T> val, bool needs_grad,
              const char* op_name);
  void attach(Var<T> v, std::function<void()> back);
  Node& node(std::size_t id) { return nodes_[id]; }
  std::vector<T>& grad_buf(std::size_t id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  bool check_finite_ = false;
  bool ran_backward_ = false;
};

// Standard Adam with bias correction and decoupled weight decay, applied to
// every parameter in the set that has a populated grad.
template <class T>
void adam_step(ParamSet<T>& params, std::size_t step_index, T lr, T beta1,
               T beta2, T eps, T weight_decay);

extern template class Graph<float>;
extern template class Graph<double>;
extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template struct Var<float>;
extern template struct Var<double>;
extern template void adam_step<float>(ParamSet<float>&, std::size_t, float,
                                      float, float, float, float);
extern template void adam_step<double>(ParamSet<double>&, std::size_t, double,
                                       double, double, double, double);

}  // namespace wtfd::ag
