// Projector head: n-layer MLP with GeLU between layers, L2-normalized
// bottleneck, and a direction-only (unit-row) linear output layer, so the
// K logits are cosine similarities in [-1, 1].

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wtfd/rng.hpp"
#include "wtfd/tensor.hpp"

namespace wtfd::proj {

struct ProjectorConfig {
  std::vector<std::size_t> dims = {2048, 2048, 256};  // hidden..., bottleneck
  std::size_t out_dim = 1024;                         // K

  static ProjectorConfig desk();
  void validate() const;
  std::size_t n_layers() const { return dims.size(); }
  std::size_t bottleneck() const { return dims.back(); }
};

template <class T>
struct Projector {
  ProjectorConfig cfg;
  std::size_t in_dim = 0;
  std::vector<ag::Parameter<T>*> w;  // per MLP layer
  std::vector<ag::Parameter<T>*> b;
  ag::Parameter<T>* w_last = nullptr;  // [K, bottleneck]
};

template <class T>
Projector<T> make_projector(ag::ParamSet<T>& ps, const ProjectorConfig& cfg,
                            std::size_t in_dim, const std::string& prefix,
                            Rng& rng);

// y: [M, in_dim] -> logits [M, K]. w_last rows are renormalized to unit L2
// inside the graph on every forward; `wn_out` exposes that node when given.
template <class T>
ag::Var<T> project(ag::Graph<T>& g, const Projector<T>& p, ag::Var<T> y,
                   ag::Var<T>* wn_out = nullptr);

}  // namespace wtfd::proj
