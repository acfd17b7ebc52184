#include "wtfd/projector.hpp"

#include <algorithm>

#include "wtfd/errors.hpp"

namespace wtfd::proj {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;
}

ProjectorConfig ProjectorConfig::desk() {
  ProjectorConfig c;
  c.dims = {256, 256, 64};
  c.out_dim = 64;
  return c;
}

void ProjectorConfig::validate() const {
  if (dims.empty()) throw ConfigError("projector: dims must be non-empty");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("projector: zero layer dim");
  if (out_dim < 2) throw ConfigError("projector: K must be >= 2");
}

template <class T>
Projector<T> make_projector(ag::ParamSet<T>& ps, const ProjectorConfig& cfg,
                            std::size_t in_dim, const std::string& prefix,
                            Rng& rng) {
  cfg.validate();
  if (in_dim == 0) throw ConfigError("projector: in_dim must be positive");
  Projector<T> p;
  p.cfg = cfg;
  p.in_dim = in_dim;
  std::size_t prev = in_dim;
  for (std::size_t i = 0; i < cfg.dims.size(); ++i) {
    auto& w = ps.create(prefix + "w" + std::to_string(i), {prev, cfg.dims[i]}, true);
    for (auto& v : w.value) v = T(kInitStd * rng.truncated_normal());
    auto& b = ps.create(prefix + "b" + std::to_string(i), {cfg.dims[i]}, false);
    std::fill(b.value.begin(), b.value.end(), T(0));
    p.w.push_back(&w);
    p.b.push_back(&b);
    prev = cfg.dims[i];
  }
  p.w_last = &ps.create(prefix + "w_last", {cfg.out_dim, cfg.bottleneck()}, true);
  for (auto& v : p.w_last->value) v = T(kInitStd * rng.truncated_normal());
  return p;
}

template <class T>
ag::Var<T> project(ag::Graph<T>& g, const Projector<T>& p, ag::Var<T> y,
                   ag::Var<T>* wn_out) {
  const auto& s = y.shape();
  if (s.empty() || s.back() != p.in_dim)
    throw ShapeError("project: input shape " + ag::shape_str(s) +
                     " does not end in " + std::to_string(p.in_dim));
  ag::Var<T> h = y;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    h = g.add(g.matmul(h, g.use(*p.w[i])), g.use(*p.b[i]));
    if (i + 1 < p.w.size()) h = g.gelu(h);
  }
  auto bhat = g.l2_normalize(h, T(kNormEps));
  auto wn = g.l2_normalize(g.use(*p.w_last), T(kNormEps));
  if (wn_out) *wn_out = wn;
  return g.matmul(bhat, g.transpose(wn, 0, 1));
}

template Projector<float> make_projector(ag::ParamSet<float>&,
                                         const ProjectorConfig&, std::size_t,
                                         const std::string&, Rng&);
template Projector<double> make_projector(ag::ParamSet<double>&,
                                          const ProjectorConfig&, std::size_t,
                                          const std::string&, Rng&);
template ag::Var<float> project(ag::Graph<float>&, const Projector<float>&,
                                ag::Var<float>, ag::Var<float>*);
template ag::Var<double> project(ag::Graph<double>&, const Projector<double>&,
                                 ag::Var<double>, ag::Var<double>*);

}  // namespace wtfd::proj
