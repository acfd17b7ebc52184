#include "wtfd/projector.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "wtfd/errors.hpp"

using namespace wtfd;

namespace {

proj::ProjectorConfig tiny_cfg() {
  proj::ProjectorConfig c;
  c.dims = {10, 10, 6};
  c.out_dim = 8;
  return c;
}

double gelu_ref(double x) {
  return 0.5 * x *
         (1.0 + std::tanh(std::sqrt(2.0 / 3.14159265358979323846) *
                          (x + 0.045 * x * x * x)));
}

// Explicit-loop forward pass on the same parameter values.
std::vector<double> oracle_logits(const proj::Projector<double>& p,
                                  const std::vector<double>& y) {
  std::vector<double> h = y;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    std::size_t in = p.w[i]->shape[0], out = p.w[i]->shape[1];
    std::vector<double> next(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t k = 0; k < in; ++k)
        next[o] += h[k] * p.w[i]->value[k * out + o];
      next[o] += p.b[i]->value[o];
      if (i + 1 < p.w.size()) next[o] = gelu_ref(next[o]);
    }
    h = std::move(next);
  }
  double norm = 0.0;
  for (double v : h) norm += v * v;
  norm = std::max(std::sqrt(norm), 1e-6);
  for (double& v : h) v /= norm;
  std::size_t kk = p.cfg.out_dim, bn = p.cfg.bottleneck();
  std::vector<double> logits(kk, 0.0);
  for (std::size_t r = 0; r < kk; ++r) {
    double wn = 0.0;
    for (std::size_t c = 0; c < bn; ++c) {
      double w = p.w_last->value[r * bn + c];
      wn += w * w;
    }
    wn = std::max(std::sqrt(wn), 1e-6);
    for (std::size_t c = 0; c < bn; ++c)
      logits[r] += h[c] * p.w_last->value[r * bn + c] / wn;
  }
  return logits;
}

}  // namespace

TEST_CASE("projector config presets and validation") {
  proj::ProjectorConfig paper;
  CHECK(paper.dims == std::vector<std::size_t>{2048, 2048, 256});
  CHECK(paper.out_dim == 1024);
  paper.validate();
  auto desk = proj::ProjectorConfig::desk();
  CHECK(desk.dims == std::vector<std::size_t>{256, 256, 64});
  CHECK(desk.out_dim == 64);
  desk.validate();
  proj::ProjectorConfig bad = desk;
  bad.out_dim = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = desk;
  bad.dims.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("logits equal cosine similarities against a dot-product oracle") {
  ag::ParamSet<double> ps;
  Rng r(211);
  auto p = proj::make_projector(ps, tiny_cfg(), 12, "proj.", r);
  Rng ry(212);
  std::vector<double> y(12);
  for (auto& v : y) v = ry.uniform(-2.0, 2.0);
  ag::Graph<double> g;
  auto logits = proj::project(g, p, g.input({1, 12}, y));
  REQUIRE(logits.shape() == ag::Shape{1, 8});
  auto ref = oracle_logits(p, y);
  for (std::size_t k = 0; k < 8; ++k)
    CHECK(std::fabs(logits.val()[k] - ref[k]) < 1e-6);
}

TEST_CASE("final-layer rows have unit norm after the forward pass") {
  ag::ParamSet<double> ps;
  Rng r(213);
  auto p = proj::make_projector(ps, tiny_cfg(), 12, "proj.", r);
  ag::Graph<double> g;
  ag::Var<double> wn;
  proj::project(g, p, g.input({1, 12}, std::vector<double>(12, 0.3)), &wn);
  REQUIRE(wn.shape() == ag::Shape{8, 6});
  for (std::size_t row = 0; row < 8; ++row) {
    double norm = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      double v = wn.val()[row * 6 + c];
      norm += v * v;
    }
    CHECK(std::fabs(std::sqrt(norm) - 1.0) <= 1e-6);
  }
}

TEST_CASE("logits are invariant to rescaling the bottleneck") {
  ag::ParamSet<double> ps;
  Rng r(217);
  auto p = proj::make_projector(ps, tiny_cfg(), 12, "proj.", r);
  std::vector<double> y(12);
  Rng ry(218);
  for (auto& v : y) v = ry.uniform(-1.0, 1.0);
  std::vector<double> base;
  {
    ag::Graph<double> g;
    base = proj::project(g, p, g.input({1, 12}, y)).val();
  }
  // Scaling the last (linear) MLP layer scales the bottleneck by 3.
  for (auto& v : p.w.back()->value) v *= 3.0;
  for (auto& v : p.b.back()->value) v *= 3.0;
  {
    ag::Graph<double> g;
    auto scaled = proj::project(g, p, g.input({1, 12}, y)).val();
    for (std::size_t k = 0; k < base.size(); ++k)
      CHECK(scaled[k] == doctest::Approx(base[k]).epsilon(1e-9));
  }
}

TEST_CASE("all logits lie in [-1, 1]") {
  ag::ParamSet<double> ps;
  Rng r(219);
  auto p = proj::make_projector(ps, tiny_cfg(), 12, "proj.", r);
  Rng ry(220);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(12);
    for (auto& v : y) v = ry.uniform(-5.0, 5.0);
    ag::Graph<double> g;
    auto logits = proj::project(g, p, g.input({1, 12}, y));
    for (double v : logits.val()) {
      CHECK(v >= -1.0 - 1e-12);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("output dimension is K regardless of encoder dim") {
  for (std::size_t d : {5ul, 12ul, 48ul}) {
    ag::ParamSet<double> ps;
    Rng r(221);
    auto p = proj::make_projector(ps, tiny_cfg(), d, "proj.", r);
    ag::Graph<double> g;
    auto logits = proj::project(g, p, g.input({3, d}, std::vector<double>(3 * d, 0.1)));
    CHECK(logits.shape() == ag::Shape{3, 8});
  }
}

TEST_CASE("projector gradients match finite differences") {
  ag::ParamSet<double> ps;
  Rng r(223);
  auto p = proj::make_projector(ps, tiny_cfg(), 9, "proj.", r);
  // Scale weights so the bottleneck norm is O(1); near-zero norms put the
  // probe point in a region where central differences themselves degrade.
  Rng ry(224);
  for (std::size_t pi = 0; pi < ps.size(); ++pi)
    for (auto& v : ps.at(pi).value)
      v = v * 10.0 + ry.uniform(-0.05, 0.05);
  std::vector<double> y(2 * 9);
  for (auto& v : y) v = ry.uniform(-1.5, 1.5);

  auto eval_loss = [&]() {
    ag::Graph<double> g;
    auto logits = proj::project(g, p, g.input({2, 9}, y));
    std::vector<double> w(logits.val().size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.21 * double(i + 1) - 1.3;
    return g.reduce_sum(g.mul(logits, g.input({2, 8}, std::move(w)))).val()[0];
  };

  ps.zero_grad();
  {
    ag::Graph<double> g;
    auto logits = proj::project(g, p, g.input({2, 9}, y));
    std::vector<double> w(logits.val().size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.21 * double(i + 1) - 1.3;
    g.backward(g.reduce_sum(g.mul(logits, g.input({2, 8}, std::move(w)))));
  }

  Rng pick(225);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    auto& prm = ps.at(pi);
    for (int probe = 0; probe < 3; ++probe) {
      std::size_t idx = pick.below(std::uint32_t(prm.value.size()));
      double save = prm.value[idx], h = 1e-5;
      prm.value[idx] = save + h;
      double up = eval_loss();
      prm.value[idx] = save - h;
      double dn = eval_loss();
      prm.value[idx] = save;
      double fd = (up - dn) / (2.0 * h);
      double rel = std::fabs(fd - prm.grad[idx]) /
                   std::max({std::fabs(fd), std::fabs(prm.grad[idx]), 1e-3});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}
