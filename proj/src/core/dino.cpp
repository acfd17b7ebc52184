#include "wtfd/dino.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"

namespace wtfd::dino {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_prob(const std::vector<double>& p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0))
      throw ContractError(std::string(what) + ": negative or non-finite entry");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw ContractError(std::string(what) + ": sums to " + std::to_string(sum) +
                        ", not 1");
}

double cross_entropy(const std::vector<double>& pt, const std::vector<double>& ps) {
  double ce = 0.0;
  for (std::size_t k = 0; k < pt.size(); ++k)
    if (pt[k] > 0.0) ce -= pt[k] * std::log(ps[k]);
  return ce;
}

double kl_div(const std::vector<double>& pt, const std::vector<double>& ps) {
  double kl = 0.0;
  for (std::size_t k = 0; k < pt.size(); ++k)
    if (pt[k] > 0.0) kl += pt[k] * std::log(pt[k] / ps[k]);
  return kl;
}

double entropy_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

void check_views(const std::vector<std::vector<double>>& student_probs,
                 const std::vector<std::vector<double>>& teacher_probs) {
  if (teacher_probs.size() != 2)
    throw ContractError("dino pairing: exactly 2 teacher views required");
  if (student_probs.size() < 2)
    throw ContractError("dino pairing: student views must include the globals");
  std::size_t k = teacher_probs[0].size();
  for (const auto& p : teacher_probs) {
    if (p.size() != k) throw ShapeError("dino pairing: ragged teacher views");
    check_prob(p, "teacher view");
  }
  for (const auto& p : student_probs) {
    if (p.size() != k) throw ShapeError("dino pairing: ragged student views");
    check_prob(p, "student view");
  }
}

}  // namespace

void DinoConfig::validate(bool allow_ablation) const {
  if (!(tau_t > 0.0) || !(tau_s > 0.0))
    throw ConfigError("temperatures must be positive");
  if (tau_t >= tau_s && !allow_ablation)
    throw ConfigError(
        "tau_t must be lower than tau_s (pass the ablation flag to lift this)");
  if (!(m0 >= 0.0 && m0 <= 1.0)) throw ConfigError("m0 must be in [0,1]");
  if (!(m_c >= 0.0 && m_c <= 1.0)) throw ConfigError("m_c must be in [0,1]");
  if (!(scale_split > 0.05 && scale_split < 1.0))
    throw ConfigError("scale_split must be in (0.05, 1)");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (warmup_epochs > epochs) throw ConfigError("warmup_epochs exceeds epochs");
  if (!(lr_start > 0.0) || !(lr_peak > 0.0) || !(lr_floor > 0.0))
    throw ConfigError("learning rates must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

// ----------------------------------------------------------- augmentation --

CropRect draw_crop(Rng& rng, std::size_t img_h, std::size_t img_w, double lo,
                   double hi) {
  double area = double(img_h) * double(img_w);
  for (int tries = 0; tries < 10; ++tries) {
    double f = rng.uniform(lo, hi);
    double r = rng.uniform(0.75, 4.0 / 3.0);
    auto h = std::size_t(std::llround(std::sqrt(f * area / r)));
    auto w = std::size_t(std::llround(std::sqrt(f * area * r)));
    if (h < 2 || w < 2 || h > img_h || w > img_w) continue;
    double realized = double(h) * double(w) / area;
    if (realized < lo || realized > hi) continue;
    std::size_t top = rng.below(std::uint32_t(img_h - h + 1));
    std::size_t left = rng.below(std::uint32_t(img_w - w + 1));
    return {top, left, h, w};
  }
  std::size_t top = rng.below(std::uint32_t(img_h - 1));
  std::size_t left = rng.below(std::uint32_t(img_w - 1));
  return {top, left, 2, 2};
}

namespace {

tfm::TimeFrequencyMap crop_resize(const tfm::TimeFrequencyMap& x,
                                  const CropRect& r, std::size_t out) {
  std::vector<double> sub(r.h * r.w * x.c);
  for (std::size_t i = 0; i < r.h; ++i)
    for (std::size_t j = 0; j < r.w; ++j)
      for (std::size_t c = 0; c < x.c; ++c)
        sub[(i * r.w + j) * x.c + c] =
            double(x.pixels[((r.top + i) * x.w + (r.left + j)) * x.c + c]);
  auto resized = tfm::resize_cubic(sub, r.h, r.w, x.c, out, out);
  tfm::TimeFrequencyMap y;
  y.h = out;
  y.w = out;
  y.c = x.c;
  y.source_id = x.source_id;
  y.pixels.resize(resized.size());
  for (std::size_t i = 0; i < resized.size(); ++i) y.pixels[i] = float(resized[i]);
  return y;
}

float clamp01(double v) { return float(std::clamp(v, 0.0, 1.0)); }

}  // namespace

tfm::TimeFrequencyMap gaussian_blur(const tfm::TimeFrequencyMap& x, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("gaussian_blur: sigma must be > 0");
  std::size_t k = std::max<std::size_t>(1, x.h / 4);
  if (k % 2 == 0) ++k;
  std::size_t half = k / 2;
  std::vector<double> w(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double d = double(i) - double(half);
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;

  auto clampi = [](long i, long n) { return std::size_t(std::clamp(i, 0l, n - 1)); };
  std::vector<double> mid(x.pixels.size()), out(x.pixels.size());
  for (std::size_t i = 0; i < x.h; ++i)
    for (std::size_t j = 0; j < x.w; ++j)
      for (std::size_t c = 0; c < x.c; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
          std::size_t jj = clampi(long(j) + long(t) - long(half), long(x.w));
          acc += w[t] * double(x.pixels[(i * x.w + jj) * x.c + c]);
        }
        mid[(i * x.w + j) * x.c + c] = acc;
      }
  tfm::TimeFrequencyMap y = x;
  for (std::size_t i = 0; i < x.h; ++i)
    for (std::size_t j = 0; j < x.w; ++j)
      for (std::size_t c = 0; c < x.c; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
          std::size_t ii = clampi(long(i) + long(t) - long(half), long(x.h));
          acc += w[t] * mid[(ii * x.w + j) * x.c + c];
        }
        y.pixels[(i * x.w + j) * x.c + c] = clamp01(acc);
      }
  return y;
}

tfm::TimeFrequencyMap color_jitter(const tfm::TimeFrequencyMap& x,
                                   double brightness, double contrast,
                                   double saturation) {
  tfm::TimeFrequencyMap y = x;
  for (auto& v : y.pixels) v = clamp01(double(v) * brightness);
  double mean = 0.0;
  for (float v : y.pixels) mean += double(v);
  mean /= double(y.pixels.size());
  for (auto& v : y.pixels) v = clamp01(mean + (double(v) - mean) * contrast);
  for (std::size_t px = 0; px < y.h * y.w; ++px) {
    double gray = (double(y.pixels[px * 3]) + double(y.pixels[px * 3 + 1]) +
                   double(y.pixels[px * 3 + 2])) /
                  3.0;
    for (std::size_t c = 0; c < 3; ++c)
      y.pixels[px * 3 + c] =
          clamp01(gray + (double(y.pixels[px * 3 + c]) - gray) * saturation);
  }
  return y;
}

tfm::TimeFrequencyMap solarize(const tfm::TimeFrequencyMap& x) {
  tfm::TimeFrequencyMap y = x;
  for (auto& v : y.pixels)
    if (v > 0.5f) v = 1.0f - v;
  return y;
}

CropSet augment(const tfm::TimeFrequencyMap& x, const DinoConfig& cfg, Rng& rng) {
  if (!(cfg.scale_split > 0.05 && cfg.scale_split < 1.0))
    throw ContractError("augment: scale_split must be in (0.05, 1)");
  if (x.h != x.w || x.h < 2 || x.c != 3)
    throw ShapeError("augment: expected a square 3-channel map, got " +
                     std::to_string(x.h) + "x" + std::to_string(x.w) + "x" +
                     std::to_string(x.c));

  // Per crop the rng draw order is fixed: crop rect, blur decision and sigma,
  // jitter decision and factors, solarize decision.
  auto finish = [&](tfm::TimeFrequencyMap crop, double blur_prob,
                    bool always_blur, bool may_solarize) {
    bool do_blur = always_blur || rng.uniform() < blur_prob;
    if (do_blur) crop = gaussian_blur(crop, rng.uniform(0.1, 2.0));
    if (rng.uniform() < 0.8) {
      double fb = rng.uniform(0.6, 1.4);
      double fc = rng.uniform(0.6, 1.4);
      double fs = rng.uniform(0.6, 1.4);
      crop = color_jitter(crop, fb, fc, fs);
    }
    if (may_solarize && rng.uniform() < 0.2) crop = solarize(crop);
    return crop;
  };

  CropSet out;
  for (int i = 0; i < 2; ++i) {
    auto rect = draw_crop(rng, x.h, x.w, cfg.scale_split, 1.0);
    auto crop = crop_resize(x, rect, x.h);
    if (i == 0)
      out.globals.push_back(finish(std::move(crop), 0.0, true, false));
    else
      out.globals.push_back(finish(std::move(crop), 0.1, false, true));
  }
  for (std::size_t i = 0; i < cfg.n_local; ++i) {
    auto rect = draw_crop(rng, x.h, x.w, 0.05, cfg.scale_split);
    auto crop = crop_resize(x, rect, x.h);
    out.locals.push_back(finish(std::move(crop), 0.5, false, false));
  }
  return out;
}

// ------------------------------------------------------------- core math --

std::vector<double> tempered_softmax(const std::vector<double>& logits,
                                     double tau) {
  if (!(tau > 0.0)) throw DomainError("tempered_softmax: tau must be > 0");
  if (logits.empty()) throw ContractError("tempered_softmax: empty logits");
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / tau);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

std::vector<double> center_apply_and_update(const std::vector<double>& logits,
                                            std::size_t k,
                                            std::vector<double>& c, double m_c,
                                            bool frozen) {
  if (k == 0 || logits.empty() || logits.size() % k != 0)
    throw ContractError("center: logits must be a non-empty batch of rows");
  if (c.size() != k) throw ShapeError("center: c length mismatch");
  std::size_t b = logits.size() / k;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out[i * k + j] = logits[i * k + j] - c[j];
  if (!frozen) {
    for (std::size_t j = 0; j < k; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < b; ++i) mean += logits[i * k + j];
      mean /= double(b);
      c[j] = m_c * c[j] + (1.0 - m_c) * mean;
    }
  }
  return out;
}

double dino_loss(const std::vector<std::vector<double>>& student_probs,
                 const std::vector<std::vector<double>>& teacher_probs) {
  check_views(student_probs, teacher_probs);
  std::size_t v = student_probs.size();
  double total = 0.0;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t sv = 0; sv < v; ++sv)
      if (sv != t) total += cross_entropy(teacher_probs[t], student_probs[sv]);
  return total / double(2 * (v - 1));
}

Diag diagnostics(const std::vector<std::vector<double>>& student_probs,
                 const std::vector<std::vector<double>>& teacher_probs) {
  check_views(student_probs, teacher_probs);
  std::size_t v = student_probs.size();
  Diag d;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t sv = 0; sv < v; ++sv)
      if (sv != t) {
        d.target_entropy += cross_entropy(teacher_probs[t], student_probs[sv]);
        d.kl += kl_div(teacher_probs[t], student_probs[sv]);
        d.entropy += entropy_of(teacher_probs[t]);
      }
  double pairs = double(2 * (v - 1));
  d.target_entropy /= pairs;
  d.kl /= pairs;
  d.entropy /= pairs;
  return d;
}

void ema_update_teacher(ag::ParamSet<float>& teacher,
                        const ag::ParamSet<float>& student, float m) {
  if (!(m >= 0.0f && m <= 1.0f))
    throw ContractError("ema_update_teacher: m must be in [0,1]");
  if (teacher.size() != student.size())
    throw ShapeError("ema_update_teacher: parameter sets differ in size");
  if (m == 1.0f) return;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto& t = teacher.at(i);
    const auto& s = student.at(i);
    if (t.name != s.name || t.shape != s.shape)
      throw ShapeError("ema_update_teacher: mismatched parameter " + t.name);
    if (m == 0.0f) {
      t.value = s.value;
    } else {
      for (std::size_t j = 0; j < t.value.size(); ++j)
        t.value[j] = m * t.value[j] + (1.0f - m) * s.value[j];
    }
  }
}

// --------------------------------------------------------------- metrics --

namespace {

void append_num(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void append_num(std::string& out, std::size_t v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string metrics_json(const MetricsRow& row) {
  std::string s = "{\"epoch\":";
  append_num(s, row.epoch);
  s += ",\"step\":";
  append_num(s, row.step);
  s += ",\"loss\":";
  append_num(s, row.loss);
  s += ",\"kl\":";
  append_num(s, row.kl);
  s += ",\"entropy\":";
  append_num(s, row.entropy);
  s += ",\"lr\":";
  append_num(s, row.lr);
  s += ",\"m\":";
  append_num(s, row.m);
  s += ",\"center_norm\":";
  append_num(s, row.center_norm);
  s += "}";
  return s;
}

MetricsRow parse_metrics_line(const std::string& line, std::size_t line_no) {
  try {
    auto j = nlohmann::json::parse(line);
    MetricsRow r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.step = j.at("step").get<std::size_t>();
    r.loss = j.at("loss").get<double>();
    r.kl = j.at("kl").get<double>();
    r.entropy = j.at("entropy").get<double>();
    r.lr = j.at("lr").get<double>();
    r.m = j.at("m").get<double>();
    r.center_norm = j.at("center_norm").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("metrics log line " + std::to_string(line_no) + ": " +
                     e.what());
  }
}

std::vector<MetricsRow> parse_metrics_log(const std::filesystem::path& path) {
  std::string text = io::read_file(path);
  std::vector<MetricsRow> rows;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string line = text.substr(pos, end - pos);
    if (!line.empty()) rows.push_back(parse_metrics_line(line, line_no));
    pos = end + 1;
  }
  return rows;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::none: return "none";
    case Verdict::over_uniformity: return "over_uniformity";
    case Verdict::over_alignment: return "over_alignment";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "?";
}

Verdict collapse_classify(const std::vector<MetricsRow>& trace,
                          std::size_t k_dim, double eps_kl,
                          std::size_t window) {
  if (window == 0) throw ContractError("collapse_classify: window must be >= 1");
  if (k_dim < 2) throw ContractError("collapse_classify: K must be >= 2");
  if (trace.size() < window)
    throw ContractError("collapse_classify: need at least " +
                        std::to_string(window) + " epochs, got " +
                        std::to_string(trace.size()));
  double kl = 0.0, h = 0.0;
  for (std::size_t i = trace.size() - window; i < trace.size(); ++i) {
    kl += trace[i].kl;
    h += trace[i].entropy;
  }
  kl /= double(window);
  h /= double(window);
  double lnk = std::log(double(k_dim));
  if (kl >= eps_kl) return Verdict::none;
  if (h > 0.9 * lnk) return Verdict::over_uniformity;
  if (h < 0.1 * lnk) return Verdict::over_alignment;
  return Verdict::indeterminate;
}

// ------------------------------------------------------------- schedules --

double lr_at(const DinoConfig& cfg, std::size_t epoch) {
  if (epoch < cfg.warmup_epochs)
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * double(epoch + 1) /
                              double(cfg.warmup_epochs);
  std::size_t span = cfg.epochs > cfg.warmup_epochs + 1
                         ? cfg.epochs - 1 - cfg.warmup_epochs
                         : 1;
  double u = std::min(1.0, double(epoch - cfg.warmup_epochs) / double(span));
  return cfg.lr_floor +
         (cfg.lr_peak - cfg.lr_floor) * 0.5 * (1.0 + std::cos(kPi * u));
}

double m_at(const DinoConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps < 2) return cfg.m0;
  double u = std::min(1.0, double(step) / double(total_steps - 1));
  return 1.0 - (1.0 - cfg.m0) * 0.5 * (1.0 + std::cos(kPi * u));
}

}  // namespace wtfd::dino
