#include "wtfd/dino.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "wtfd/binio.hpp"
#include "wtfd/checkpoint.hpp"
#include "wtfd/errors.hpp"

using namespace wtfd;

namespace {

tfm::TimeFrequencyMap random_map(std::size_t size, Rng& rng) {
  tfm::TimeFrequencyMap m;
  m.h = size;
  m.w = size;
  m.c = 3;
  m.pixels.resize(size * size * 3);
  for (auto& v : m.pixels) v = float(rng.uniform());
  return m;
}

tfm::TimeFrequencyMap constant_map(std::size_t size, float value) {
  tfm::TimeFrequencyMap m;
  m.h = size;
  m.w = size;
  m.c = 3;
  m.pixels.assign(size * size * 3, value);
  return m;
}

double ce_ref(const std::vector<double>& pt, const std::vector<double>& ps) {
  double ce = 0.0;
  for (std::size_t i = 0; i < pt.size(); ++i)
    if (pt[i] > 0.0) ce -= pt[i] * std::log(ps[i]);
  return ce;
}

struct TinyRig {
  dino::TrainSetup setup;
  std::vector<tfm::TimeFrequencyMap> data;
};

TinyRig tiny_rig(std::uint64_t seed) {
  TinyRig r;
  r.setup.vit_cfg.patch_size = 4;
  r.setup.vit_cfg.embed_dim = 12;
  r.setup.vit_cfg.n_heads = 2;
  r.setup.vit_cfg.head_dim = 6;
  r.setup.vit_cfg.mlp_dim = 24;
  r.setup.vit_cfg.depth = 1;
  r.setup.proj_cfg.dims = {16, 8};
  r.setup.proj_cfg.out_dim = 8;
  r.setup.cfg.n_local = 2;
  r.setup.cfg.batch = 4;
  r.setup.cfg.epochs = 2;
  r.setup.cfg.warmup_epochs = 1;
  r.setup.input_size = 8;
  r.setup.seed = seed;
  Rng rng = Rng::stream(seed, "test.data");
  for (int i = 0; i < 8; ++i) r.data.push_back(random_map(8, rng));
  return r;
}

bool rows_equal(const dino::MetricsRow& a, const dino::MetricsRow& b) {
  return a.epoch == b.epoch && a.step == b.step && a.loss == b.loss &&
         a.kl == b.kl && a.entropy == b.entropy && a.lr == b.lr && a.m == b.m &&
         a.center_norm == b.center_norm;
}

}  // namespace

TEST_CASE("draw_crop stays inside the requested area-fraction range") {
  Rng rng = Rng::stream(7, "test.crop");
  for (int i = 0; i < 1000; ++i) {
    auto r = dino::draw_crop(rng, 32, 32, 0.05, 0.4);
    double f = double(r.h * r.w) / (32.0 * 32.0);
    REQUIRE(f >= 0.05);
    REQUIRE(f <= 0.4);
    REQUIRE(r.top + r.h <= 32);
    REQUIRE(r.left + r.w <= 32);
  }
  for (int i = 0; i < 1000; ++i) {
    auto r = dino::draw_crop(rng, 32, 32, 0.4, 1.0);
    double f = double(r.h * r.w) / (32.0 * 32.0);
    REQUIRE(f >= 0.4);
    REQUIRE(f <= 1.0);
  }
}

TEST_CASE("augment emits the configured crop set with valid pixels") {
  Rng data_rng = Rng::stream(11, "test.aug");
  auto x = random_map(32, data_rng);
  dino::DinoConfig cfg;
  cfg.n_local = 5;

  Rng a = Rng::stream(11, "aug", 0, 0);
  auto crops = dino::augment(x, cfg, a);
  CHECK(crops.globals.size() == 2);
  CHECK(crops.locals.size() == 5);
  for (const auto& list : {crops.globals, crops.locals})
    for (const auto& c : list) {
      CHECK(c.h == 32);
      CHECK(c.w == 32);
      CHECK(c.c == 3);
      for (float v : c.pixels) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
      }
    }

  Rng b = Rng::stream(11, "aug", 0, 0);
  auto again = dino::augment(x, cfg, b);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(again.globals[i].pixels == crops.globals[i].pixels);
  for (std::size_t i = 0; i < cfg.n_local; ++i)
    CHECK(again.locals[i].pixels == crops.locals[i].pixels);

  tfm::TimeFrequencyMap bad = x;
  bad.c = 1;
  bad.pixels.resize(32 * 32);
  CHECK_THROWS_AS(dino::augment(bad, cfg, a), ShapeError);
}

TEST_CASE("solarize reflects only values above one half") {
  tfm::TimeFrequencyMap m = constant_map(2, 0.0f);
  m.pixels = {0.3f, 0.8f, 0.5f, 0.0f, 1.0f, 0.50001f,
              0.3f, 0.8f, 0.5f, 0.0f, 1.0f, 0.7f};
  auto y = dino::solarize(m);
  CHECK(y.pixels[0] == 0.3f);
  CHECK(y.pixels[1] == 1.0f - 0.8f);
  CHECK(y.pixels[2] == 0.5f);
  CHECK(y.pixels[3] == 0.0f);
  CHECK(y.pixels[4] == 0.0f);
  CHECK(y.pixels[5] == 1.0f - 0.50001f);
  CHECK(y.pixels[11] == 1.0f - 0.7f);
}

TEST_CASE("gaussian_blur preserves constants and the pixel range") {
  auto m = constant_map(32, 0.7f);
  auto y = dino::gaussian_blur(m, 1.3);
  for (float v : y.pixels) CHECK(v == doctest::Approx(0.7).epsilon(1e-6));

  Rng rng = Rng::stream(3, "test.blur");
  auto r = random_map(16, rng);
  auto z = dino::gaussian_blur(r, 0.4);
  for (float v : z.pixels) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  // Smoothing shrinks the variance of an iid field.
  auto var = [](const std::vector<float>& p) {
    double mean = 0.0;
    for (float v : p) mean += v;
    mean /= double(p.size());
    double s = 0.0;
    for (float v : p) s += (v - mean) * (v - mean);
    return s / double(p.size());
  };
  CHECK(var(z.pixels) < var(r.pixels));

  CHECK_THROWS_AS(dino::gaussian_blur(m, 0.0), DomainError);
  CHECK_THROWS_AS(dino::gaussian_blur(m, -1.0), DomainError);
}

TEST_CASE("color_jitter factor semantics") {
  Rng rng = Rng::stream(5, "test.jitter");
  auto x = random_map(8, rng);

  auto id = dino::color_jitter(x, 1.0, 1.0, 1.0);
  for (std::size_t i = 0; i < x.pixels.size(); ++i)
    CHECK(double(id.pixels[i]) ==
          doctest::Approx(double(x.pixels[i])).epsilon(1e-6));

  tfm::TimeFrequencyMap flat = constant_map(4, 0.8f);
  auto dim = dino::color_jitter(flat, 0.5, 1.0, 1.0);
  for (float v : dim.pixels) CHECK(v == 0.4f);

  auto gray_world = dino::color_jitter(x, 1.0, 0.0, 1.0);
  double mean = 0.0;
  for (float v : x.pixels) mean += double(v);
  mean /= double(x.pixels.size());
  for (float v : gray_world.pixels)
    CHECK(double(v) == doctest::Approx(mean).epsilon(1e-6));

  auto desat = dino::color_jitter(x, 1.0, 1.0, 0.0);
  for (std::size_t px = 0; px < x.h * x.w; ++px) {
    double g = (double(x.pixels[px * 3]) + double(x.pixels[px * 3 + 1]) +
                double(x.pixels[px * 3 + 2])) /
               3.0;
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(double(desat.pixels[px * 3 + c]) ==
            doctest::Approx(g).epsilon(1e-5));
  }

  auto clamped = dino::color_jitter(flat, 2.0, 1.0, 1.0);
  for (float v : clamped.pixels) CHECK(v == 1.0f);
}

TEST_CASE("tempered_softmax matches the direct definition") {
  std::vector<double> uniform_logits(16, 0.25);
  auto u = dino::tempered_softmax(uniform_logits, 0.04);
  for (double p : u) CHECK(p == doctest::Approx(1.0 / 16).epsilon(1e-12));

  // Two logits one unit apart at tau 0.04: odds e^25 to 1.
  auto two = dino::tempered_softmax({1.0, 0.0}, 0.04);
  double e = std::exp(-25.0);
  CHECK(two[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));
  CHECK(two[1] < 1e-10);

  Rng rng = Rng::stream(9, "test.softmax");
  std::vector<double> q(32);
  for (auto& v : q) v = rng.uniform(-3.0, 3.0);
  for (double tau : {0.04, 0.1, 1.0, 100.0}) {
    auto p = dino::tempered_softmax(q, tau);
    double denom = 0.0;
    for (double v : q) denom += std::exp(v / tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(p[i] == doctest::Approx(std::exp(q[i] / tau) / denom).epsilon(1e-9));
      sum += p[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto flat = dino::tempered_softmax(q, 1e6);
  for (double p : flat) CHECK(p == doctest::Approx(1.0 / 32).epsilon(1e-2));

  CHECK_THROWS_AS(dino::tempered_softmax(q, 0.0), DomainError);
  CHECK_THROWS_AS(dino::tempered_softmax(q, -0.1), DomainError);
  CHECK_THROWS_AS(dino::tempered_softmax({}, 0.1), ContractError);
}

TEST_CASE("center update follows the EMA recurrence and applies the old c") {
  std::vector<double> c(2, 0.0);

  auto out1 = dino::center_apply_and_update({1.0, 2.0, 3.0, 4.0}, 2, c, 0.9);
  CHECK(out1 == std::vector<double>{1.0, 2.0, 3.0, 4.0});
  CHECK(c[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.3).epsilon(1e-12));

  auto out2 = dino::center_apply_and_update({0.0, 0.0}, 2, c, 0.9);
  CHECK(out2[0] == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(out2[1] == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(c[0] == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.27).epsilon(1e-12));

  auto out3 = dino::center_apply_and_update({1.0, 1.0}, 2, c, 0.9);
  CHECK(out3[0] == doctest::Approx(0.82).epsilon(1e-12));
  CHECK(out3[1] == doctest::Approx(0.73).epsilon(1e-12));
  CHECK(c[0] == doctest::Approx(0.262).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.343).epsilon(1e-12));

  SUBCASE("m_c endpoints") {
    std::vector<double> keep = {5.0, -5.0};
    dino::center_apply_and_update({1.0, 2.0}, 2, keep, 1.0);
    CHECK(keep == std::vector<double>{5.0, -5.0});

    std::vector<double> jump = {5.0, -5.0};
    dino::center_apply_and_update({1.0, 2.0, 3.0, 4.0}, 2, jump, 0.0);
    CHECK(jump == std::vector<double>{2.0, 3.0});
  }

  SUBCASE("frozen center never moves") {
    std::vector<double> z(2, 0.25);
    auto out = dino::center_apply_and_update({1.0, 2.0}, 2, z, 0.9, true);
    CHECK(out[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(z == std::vector<double>{0.25, 0.25});
  }

  SUBCASE("contract violations") {
    std::vector<double> z(2, 0.0);
    CHECK_THROWS_AS(dino::center_apply_and_update({1.0, 2.0, 3.0}, 2, z, 0.9),
                    ContractError);
    CHECK_THROWS_AS(dino::center_apply_and_update({}, 2, z, 0.9), ContractError);
    std::vector<double> wrong(3, 0.0);
    CHECK_THROWS_AS(dino::center_apply_and_update({1.0, 2.0}, 2, wrong, 0.9),
                    ShapeError);
  }
}

TEST_CASE("dino_loss pairs teacher globals with every other student view") {
  std::vector<double> t0 = {0.7, 0.2, 0.1};
  std::vector<double> t1 = {0.5, 0.3, 0.2};
  std::vector<double> s0 = {0.6, 0.25, 0.15};
  std::vector<double> s1 = {0.2, 0.5, 0.3};
  std::vector<double> s2 = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::vector<double> s3 = {0.1, 0.1, 0.8};

  double expected = (ce_ref(t0, s1) + ce_ref(t0, s2) + ce_ref(t0, s3) +
                     ce_ref(t1, s0) + ce_ref(t1, s2) + ce_ref(t1, s3)) /
                    6.0;
  double got = dino::dino_loss({s0, s1, s2, s3}, {t0, t1});
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));

  SUBCASE("matched distributions give the teacher entropy") {
    std::vector<double> p = {0.25, 0.5, 0.25};
    double h = -(0.25 * std::log(0.25) + 0.5 * std::log(0.5) +
                 0.25 * std::log(0.25));
    CHECK(dino::dino_loss({p, p, p}, {p, p}) ==
          doctest::Approx(h).epsilon(1e-12));
  }

  SUBCASE("one-hot everywhere is exactly zero") {
    std::vector<double> hot = {0.0, 1.0, 0.0};
    CHECK(dino::dino_loss({hot, hot, hot}, {hot, hot}) == 0.0);
  }

  SUBCASE("contract violations") {
    std::vector<double> p = {0.5, 0.5, 0.0};
    std::vector<double> not_p = {0.5, 0.4, 0.0};
    std::vector<double> neg = {1.5, -0.5, 0.0};
    CHECK_THROWS_AS(dino::dino_loss({p, not_p}, {p, p}), ContractError);
    CHECK_THROWS_AS(dino::dino_loss({p, p}, {p, neg}), ContractError);
    CHECK_THROWS_AS(dino::dino_loss({p, p}, {p}), ContractError);
    CHECK_THROWS_AS(dino::dino_loss({p}, {p, p}), ContractError);
    std::vector<double> short_p = {0.5, 0.5};
    CHECK_THROWS_AS(dino::dino_loss({p, short_p}, {p, p}), ShapeError);
  }
}

TEST_CASE("diagnostics identity and exact anchors") {
  SUBCASE("identical teacher and student views give zero kl") {
    std::vector<double> p = {0.3, 0.3, 0.4};
    auto d = dino::diagnostics({p, p}, {p, p});
    CHECK(d.kl == 0.0);
    CHECK(d.target_entropy == doctest::Approx(d.entropy).epsilon(1e-12));
  }

  SUBCASE("uniform teacher has entropy ln K") {
    std::size_t k = 64;
    std::vector<double> u(k, 1.0 / double(k));
    auto d = dino::diagnostics({u, u, u}, {u, u});
    CHECK(std::fabs(d.entropy - std::log(double(k))) < 1e-9);
  }

  SUBCASE("cross-entropy decomposes as kl plus entropy") {
    Rng rng = Rng::stream(21, "test.diag");
    for (int trial = 0; trial < 50; ++trial) {
      std::size_t k = trial % 2 == 0 ? 16 : 64;
      auto draw = [&] {
        std::vector<double> q(k);
        for (auto& v : q) v = rng.uniform(-2.0, 2.0);
        return dino::tempered_softmax(q, 0.5);
      };
      std::vector<std::vector<double>> t = {draw(), draw()};
      std::vector<std::vector<double>> s = {draw(), draw(), draw()};
      auto d = dino::diagnostics(s, t);
      CHECK(std::fabs(d.target_entropy - d.kl - d.entropy) < 1e-9);
      CHECK(d.kl >= -1e-12);
      CHECK(dino::dino_loss(s, t) ==
            doctest::Approx(d.target_entropy).epsilon(1e-12));
    }
  }
}

TEST_CASE("ema_update_teacher endpoints and blend") {
  ag::ParamSet<float> teacher, student;
  auto& ta = teacher.create("a", {2, 2});
  auto& tb = teacher.create("b", {3});
  auto& sa = student.create("a", {2, 2});
  auto& sb = student.create("b", {3});
  ta.value = {1.0f, 2.0f, 3.0f, 4.0f};
  tb.value = {-1.0f, 0.0f, 1.0f};
  sa.value = {5.0f, 6.0f, 7.0f, 8.0f};
  sb.value = {2.0f, 2.0f, 2.0f};
  ta.m = {9.0f, 9.0f, 9.0f, 9.0f};  // optimizer state must never move

  auto t_before_a = ta.value;
  auto t_before_b = tb.value;
  dino::ema_update_teacher(teacher, student, 1.0f);
  CHECK(ta.value == t_before_a);
  CHECK(tb.value == t_before_b);

  dino::ema_update_teacher(teacher, student, 0.996f);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(ta.value[i] ==
          0.996f * t_before_a[i] + (1.0f - 0.996f) * sa.value[i]);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(tb.value[i] ==
          0.996f * t_before_b[i] + (1.0f - 0.996f) * sb.value[i]);
  CHECK(ta.m == std::vector<float>{9.0f, 9.0f, 9.0f, 9.0f});

  dino::ema_update_teacher(teacher, student, 0.0f);
  CHECK(ta.value == sa.value);
  CHECK(tb.value == sb.value);

  CHECK_THROWS_AS(dino::ema_update_teacher(teacher, student, -0.1f),
                  ContractError);
  CHECK_THROWS_AS(dino::ema_update_teacher(teacher, student, 1.5f),
                  ContractError);

  ag::ParamSet<float> extra;
  extra.create("a", {2, 2});
  CHECK_THROWS_AS(dino::ema_update_teacher(teacher, extra, 0.5f), ShapeError);
  ag::ParamSet<float> renamed;
  renamed.create("a", {2, 2});
  renamed.create("c", {3});
  CHECK_THROWS_AS(dino::ema_update_teacher(teacher, renamed, 0.5f), ShapeError);
}

TEST_CASE("metrics rows round-trip through the JSON line format") {
  dino::MetricsRow r;
  r.epoch = 17;
  r.step = 4242;
  r.loss = 3.0625;
  r.kl = 0.1;
  r.entropy = 4.1588830833596715;
  r.lr = 1.25e-4;
  r.m = 0.9967;
  r.center_norm = 12.5;

  auto line = dino::metrics_json(r);
  CHECK(line.front() == '{');
  CHECK(line.find("\"epoch\":17") != std::string::npos);
  auto back = dino::parse_metrics_line(line, 1);
  CHECK(back.epoch == r.epoch);
  CHECK(back.step == r.step);
  CHECK(back.loss == r.loss);
  CHECK(back.kl == r.kl);
  CHECK(back.entropy == r.entropy);
  CHECK(back.lr == r.lr);
  CHECK(back.m == r.m);
  CHECK(back.center_norm == r.center_norm);

  SUBCASE("malformed lines name their line number") {
    CHECK_THROWS_WITH_AS(dino::parse_metrics_line("{\"epoch\":", 7),
                         doctest::Contains("line 7"), ParseError);
    CHECK_THROWS_WITH_AS(dino::parse_metrics_line("{\"epoch\":1}", 3),
                         doctest::Contains("line 3"), ParseError);
  }

  SUBCASE("log files parse line by line") {
    auto dir = std::filesystem::temp_directory_path() / "wtfd_dino_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "metrics.jsonl";
    std::string text;
    for (std::size_t e = 0; e < 3; ++e) {
      dino::MetricsRow row = r;
      row.epoch = e;
      text += dino::metrics_json(row) + "\n";
    }
    io::write_file(path, text);
    auto rows = dino::parse_metrics_log(path);
    REQUIRE(rows.size() == 3);
    CHECK(rows[2].epoch == 2);
    CHECK(rows[1].loss == r.loss);

    io::write_file(path, text + "not json\n");
    CHECK_THROWS_WITH_AS(dino::parse_metrics_log(path),
                         doctest::Contains("line 4"), ParseError);
  }
}

TEST_CASE("collapse_classify trailing-window verdicts") {
  auto rows = [](double kl, double h, std::size_t count) {
    std::vector<dino::MetricsRow> v(count);
    for (auto& r : v) {
      r.kl = kl;
      r.entropy = h;
    }
    return v;
  };
  double lnk = std::log(64.0);

  CHECK(dino::collapse_classify(rows(0.02, 1.0, 6), 64) == dino::Verdict::none);
  CHECK(dino::collapse_classify(rows(0.001, 0.95 * lnk, 5), 64) ==
        dino::Verdict::over_uniformity);
  CHECK(dino::collapse_classify(rows(0.001, 0.05 * lnk, 5), 64) ==
        dino::Verdict::over_alignment);
  CHECK(dino::collapse_classify(rows(0.001, 0.5 * lnk, 5), 64) ==
        dino::Verdict::indeterminate);

  SUBCASE("only the trailing window counts") {
    auto early_collapse = rows(0.5, 2.0, 10);
    for (std::size_t i = 5; i < 10; ++i) {
      early_collapse[i].kl = 0.001;
      early_collapse[i].entropy = 0.95 * lnk;
    }
    CHECK(dino::collapse_classify(early_collapse, 64) ==
          dino::Verdict::over_uniformity);
  }

  SUBCASE("verdict names") {
    CHECK(std::string(dino::verdict_name(dino::Verdict::none)) == "none");
    CHECK(std::string(dino::verdict_name(dino::Verdict::over_uniformity)) ==
          "over_uniformity");
    CHECK(std::string(dino::verdict_name(dino::Verdict::over_alignment)) ==
          "over_alignment");
    CHECK(std::string(dino::verdict_name(dino::Verdict::indeterminate)) ==
          "indeterminate");
  }

  SUBCASE("contract violations") {
    CHECK_THROWS_AS(dino::collapse_classify(rows(0.1, 1.0, 3), 64),
                    ContractError);
    CHECK_THROWS_AS(dino::collapse_classify(rows(0.1, 1.0, 6), 1),
                    ContractError);
    CHECK_THROWS_AS(dino::collapse_classify(rows(0.1, 1.0, 6), 64, 0.01, 0),
                    ContractError);
  }
}

TEST_CASE("learning-rate and momentum schedules hit their endpoints") {
  dino::DinoConfig cfg;  // 100 epochs, 10 warmup, 1e-6 -> 1.25e-4 -> 1e-6

  CHECK(dino::lr_at(cfg, 0) ==
        doctest::Approx(1e-6 + (1.25e-4 - 1e-6) * 0.1).epsilon(1e-12));
  CHECK(dino::lr_at(cfg, 9) == doctest::Approx(1.25e-4).epsilon(1e-12));
  CHECK(dino::lr_at(cfg, 10) == doctest::Approx(1.25e-4).epsilon(1e-12));
  CHECK(dino::lr_at(cfg, 99) == doctest::Approx(1e-6).epsilon(1e-12));
  for (std::size_t e = 10; e < 99; ++e)
    CHECK(dino::lr_at(cfg, e) >= dino::lr_at(cfg, e + 1));
  for (std::size_t e = 0; e < 9; ++e)
    CHECK(dino::lr_at(cfg, e) < dino::lr_at(cfg, e + 1));

  CHECK(dino::m_at(cfg, 0, 1000) == cfg.m0);
  CHECK(dino::m_at(cfg, 999, 1000) == 1.0);
  for (std::size_t s = 0; s < 999; ++s)
    CHECK(dino::m_at(cfg, s, 1000) <= dino::m_at(cfg, s + 1, 1000));
  CHECK(dino::m_at(cfg, 0, 1) == cfg.m0);
}

TEST_CASE("init_state seeds student and teacher independently") {
  auto rig = tiny_rig(42);
  auto st = dino::init_state(rig.setup);

  REQUIRE(st.student.size() == st.teacher.size());
  CHECK(st.center == std::vector<double>(8, 0.0));
  CHECK(st.next_epoch == 0);

  bool any_diff = false;
  for (std::size_t i = 0; i < st.student.size(); ++i) {
    CHECK(st.student.at(i).name == st.teacher.at(i).name);
    if (st.student.at(i).value != st.teacher.at(i).value) any_diff = true;
  }
  CHECK(any_diff);

  auto rig2 = tiny_rig(42);
  rig2.setup.cfg.identical_init = true;
  auto st2 = dino::init_state(rig2.setup);
  for (std::size_t i = 0; i < st2.student.size(); ++i)
    CHECK(st2.student.at(i).value == st2.teacher.at(i).value);
}

TEST_CASE("train emits one finite metrics row per epoch, deterministically") {
  auto rig = tiny_rig(42);
  std::vector<dino::MetricsRow> rows;
  auto st = dino::init_state(rig.setup);
  dino::train(st, rig.setup, rig.data,
              [&](const dino::MetricsRow& r) { rows.push_back(r); });

  REQUIRE(rows.size() == 2);
  CHECK(rows[0].epoch == 0);
  CHECK(rows[0].step == 2);
  CHECK(rows[1].epoch == 1);
  CHECK(rows[1].step == 4);
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss > 0.0);
    CHECK(r.kl >= -1e-12);
    CHECK(r.entropy > 0.0);
    CHECK(r.entropy <= std::log(8.0) + 1e-9);
    CHECK(r.lr > 0.0);
    CHECK(r.m >= rig.setup.cfg.m0);
    CHECK(r.m <= 1.0);
    CHECK(r.center_norm >= 0.0);
  }
  CHECK(rows[1].center_norm > 0.0);
  CHECK(st.next_epoch == 2);
  CHECK(st.global_step == 4);

  SUBCASE("teacher gradients are never touched") {
    for (std::size_t i = 0; i < st.teacher.size(); ++i)
      for (float g : st.teacher.at(i).grad) CHECK(g == 0.0f);
  }

  SUBCASE("same seed reproduces, a different seed does not") {
    auto rig_b = tiny_rig(42);
    std::vector<dino::MetricsRow> rows_b;
    auto st_b = dino::init_state(rig_b.setup);
    dino::train(st_b, rig_b.setup, rig_b.data,
                [&](const dino::MetricsRow& r) { rows_b.push_back(r); });
    REQUIRE(rows_b.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      CHECK(rows_equal(rows[i], rows_b[i]));

    auto rig_c = tiny_rig(42);
    rig_c.setup.seed = 43;
    std::vector<dino::MetricsRow> rows_c;
    auto st_c = dino::init_state(rig_c.setup);
    dino::train(st_c, rig_c.setup, rig_c.data,
                [&](const dino::MetricsRow& r) { rows_c.push_back(r); });
    CHECK(!rows_equal(rows[0], rows_c[0]));
  }

  SUBCASE("frozen center stays at zero") {
    auto rig_f = tiny_rig(42);
    rig_f.setup.cfg.freeze_center = true;
    std::vector<dino::MetricsRow> rows_f;
    auto st_f = dino::init_state(rig_f.setup);
    dino::train(st_f, rig_f.setup, rig_f.data,
                [&](const dino::MetricsRow& r) { rows_f.push_back(r); });
    CHECK(st_f.center == std::vector<double>(8, 0.0));
    for (const auto& r : rows_f) CHECK(r.center_norm == 0.0);
  }

  SUBCASE("shape and emptiness contracts") {
    auto st_d = dino::init_state(rig.setup);
    CHECK_THROWS_AS(dino::train(st_d, rig.setup, {}, nullptr), ContractError);
    std::vector<tfm::TimeFrequencyMap> wrong = rig.data;
    wrong[3].h = 16;
    wrong[3].w = 16;
    wrong[3].pixels.resize(16 * 16 * 3, 0.1f);
    CHECK_THROWS_AS(dino::train(st_d, rig.setup, wrong, nullptr), ShapeError);
  }
}

TEST_CASE("checkpoint save/load restores training bit-exactly") {
  auto rig = tiny_rig(7);
  auto dir = std::filesystem::temp_directory_path() / "wtfd_dino_ckpt";
  std::filesystem::create_directories(dir);
  auto ck = dir / "epoch0.bin";

  std::vector<dino::MetricsRow> rows_full;
  auto st_full = dino::init_state(rig.setup);
  dino::train(st_full, rig.setup, rig.data, [&](const dino::MetricsRow& r) {
    rows_full.push_back(r);
    if (r.epoch == 0) dino::save_state(ck, st_full);
  });
  REQUIRE(rows_full.size() == 2);

  auto st_resumed = dino::init_state(rig.setup);
  dino::load_state(ck, st_resumed);
  CHECK(st_resumed.next_epoch == 1);
  CHECK(st_resumed.global_step == 2);
  CHECK(st_resumed.adam_steps == 2);

  std::vector<dino::MetricsRow> rows_resumed;
  dino::train(st_resumed, rig.setup, rig.data,
              [&](const dino::MetricsRow& r) { rows_resumed.push_back(r); });
  REQUIRE(rows_resumed.size() == 1);
  CHECK(rows_equal(rows_resumed[0], rows_full[1]));

  SUBCASE("loaded parameters and optimizer state match the saved ones") {
    auto st_check = dino::init_state(rig.setup);
    dino::save_state(dir / "final.bin", st_full);
    dino::load_state(dir / "final.bin", st_check);
    for (std::size_t i = 0; i < st_full.student.size(); ++i) {
      CHECK(st_check.student.at(i).value == st_full.student.at(i).value);
      CHECK(st_check.student.at(i).m == st_full.student.at(i).m);
      CHECK(st_check.student.at(i).v == st_full.student.at(i).v);
      CHECK(st_check.teacher.at(i).value == st_full.teacher.at(i).value);
    }
    CHECK(st_check.center == st_full.center);
  }

  SUBCASE("missing tensors and wrong shapes are rejected") {
    auto entries = ckpt::load(ck);
    std::vector<ckpt::Entry> no_center;
    for (const auto& e : entries)
      if (e.name != "state.center") no_center.push_back(e);
    ckpt::save(dir / "no_center.bin", no_center);
    auto st_a = dino::init_state(rig.setup);
    CHECK_THROWS_AS(dino::load_state(dir / "no_center.bin", st_a), ParseError);

    std::vector<ckpt::Entry> bad_center = entries;
    for (auto& e : bad_center)
      if (e.name == "state.center") {
        e.shape = {4};
        e.data.resize(4);
      }
    ckpt::save(dir / "bad_center.bin", bad_center);
    auto st_b = dino::init_state(rig.setup);
    CHECK_THROWS_AS(dino::load_state(dir / "bad_center.bin", st_b), ShapeError);
  }
}

TEST_CASE("config validation gates the temperature ordering") {
  dino::DinoConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  cfg.tau_t = 0.1;
  cfg.tau_s = 0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(cfg.validate(true));

  cfg = {};
  cfg.tau_s = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.m0 = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scale_split = 0.05;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.warmup_epochs = 200;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
