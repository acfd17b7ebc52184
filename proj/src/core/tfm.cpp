#include "wtfd/tfm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"
#include "wtfd/kernels.hpp"

namespace wtfd::tfm {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kOmega0 = 6.0;
constexpr double kMorletAmp = 0.7511255444649425;  // pi^(-1/4)
// The Gaussian envelope is negligible past |u| = 8 (exp(-32) ~ 1e-14), which
// keeps truncated results within the oracle tolerances.
constexpr double kSupport = 8.0;

struct Anchor {
  double v, r, g, b;
};
constexpr Anchor kAnchors[] = {
    {0.00, 0.0, 0.00, 0.5},
    {0.25, 0.0, 0.75, 1.0},
    {0.50, 0.5, 1.00, 0.5},
    {0.75, 1.0, 0.75, 0.0},
    {1.00, 0.5, 0.00, 0.0},
};

void check_signal(const sig::VibrationSignal& signal) {
  if (signal.samples.empty()) throw ContractError("cwt: signal is empty");
  if (!(signal.sample_rate > 0)) throw ContractError("cwt: sample_rate must be > 0");
}

void check_scales(const std::vector<double>& scales) {
  if (scales.empty()) throw ContractError("cwt: scales are empty");
  for (double a : scales)
    if (!(a > 0)) throw DomainError("cwt: non-positive scale " + std::to_string(a));
}

// Natural cubic spline through S uniformly spaced knots; evaluates at the
// given positions (in knot units). Second derivatives via the Thomas solve.
void spline_line(const double* y, std::size_t stride, std::size_t s,
                 const double* pos, std::size_t t, double* out,
                 std::size_t out_stride, std::vector<double>& m,
                 std::vector<double>& scratch) {
  m.assign(s, 0.0);
  if (s > 2) {
    std::size_t k = s - 2;  // interior unknowns
    scratch.assign(2 * k, 0.0);
    double* cp = scratch.data();      // modified upper diagonal
    double* dp = scratch.data() + k;  // modified rhs
    auto rhs = [&](std::size_t i) {
      return 6.0 * (y[(i + 2) * stride] - 2.0 * y[(i + 1) * stride] +
                    y[i * stride]);
    };
    cp[0] = 1.0 / 4.0;
    dp[0] = rhs(0) / 4.0;
    for (std::size_t i = 1; i < k; ++i) {
      double denom = 4.0 - cp[i - 1];
      cp[i] = 1.0 / denom;
      dp[i] = (rhs(i) - dp[i - 1]) / denom;
    }
    m[k] = dp[k - 1];
    for (std::size_t i = k - 1; i-- > 0;) m[i + 1] = dp[i] - cp[i] * m[i + 2];
  }
  for (std::size_t j = 0; j < t; ++j) {
    double x = pos[j];
    std::size_t i = std::min(std::size_t(x), s - 2);
    double u = x - double(i);
    double w = 1.0 - u;
    double y0 = y[i * stride], y1 = y[(i + 1) * stride];
    out[j * out_stride] = m[i] * w * w * w / 6.0 + m[i + 1] * u * u * u / 6.0 +
                          (y0 - m[i] / 6.0) * w + (y1 - m[i + 1] / 6.0) * u;
  }
}

std::vector<double> sample_positions(std::size_t src, std::size_t target) {
  std::vector<double> pos(target);
  if (target == 1) {
    pos[0] = double(src - 1) / 2.0;
  } else {
    for (std::size_t i = 0; i < target; ++i)
      pos[i] = double(i) * double(src - 1) / double(target - 1);
  }
  return pos;
}

}  // namespace

double scale_to_frequency(double scale) { return kOmega0 / (2.0 * kPi * scale); }
double frequency_to_scale(double frequency_hz) {
  return kOmega0 / (2.0 * kPi * frequency_hz);
}

std::vector<double> default_scales(double sample_rate,
                                   std::size_t window_length,
                                   std::size_t n_scales) {
  if (n_scales < 2) throw ConfigError("n_scales must be >= 2");
  if (!(sample_rate > 0)) throw ConfigError("sample_rate must be > 0");
  if (window_length < 2) throw ConfigError("window_length must be >= 2");
  double f_hi = sample_rate / 4.0;
  double f_lo = sample_rate / double(window_length);
  // Degenerate very short windows: keep an octave of coverage.
  if (f_lo >= f_hi) f_lo = f_hi / 2.0;
  std::vector<double> scales(n_scales);
  double ratio = f_hi / f_lo;
  for (std::size_t i = 0; i < n_scales; ++i) {
    double f = f_lo * std::pow(ratio, double(i) / double(n_scales - 1));
    scales[i] = frequency_to_scale(f);
  }
  return scales;
}

void cwt_complex(const sig::VibrationSignal& signal,
                 const std::vector<double>& scales, std::vector<double>& re,
                 std::vector<double>& im) {
  check_signal(signal);
  check_scales(scales);
  const std::size_t n = signal.samples.size();
  const double dt = 1.0 / signal.sample_rate;
  re.assign(scales.size() * n, 0.0);
  im.assign(scales.size() * n, 0.0);

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = double(signal.samples[i]);

  const auto& k = kern::f64();
  std::vector<double> wre, wim;
  for (std::size_t si = 0; si < scales.size(); ++si) {
    double a = scales[si];
    double half = kSupport * a / dt;
    std::size_t l = half >= double(n) ? n - 1 : std::size_t(std::ceil(half));
    double amp = kMorletAmp * dt / std::sqrt(a);
    wre.assign(2 * l + 1, 0.0);
    wim.assign(2 * l + 1, 0.0);
    for (std::size_t idx = 0; idx <= 2 * l; ++idx) {
      double u = (double(idx) - double(l)) * dt / a;
      double env = amp * std::exp(-0.5 * u * u);
      // Conjugate wavelet: exp(-i omega0 u) under the Gaussian.
      wre[idx] = env * std::cos(kOmega0 * u);
      wim[idx] = -env * std::sin(kOmega0 * u);
    }
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t klo = l > j ? l - j : 0;
      std::size_t khi = std::min(2 * l, n - 1 - j + l);
      std::size_t count = khi - klo + 1;
      const double* xs = x.data() + (j + klo - l);
      re[si * n + j] = k.dot(xs, wre.data() + klo, count);
      im[si * n + j] = k.dot(xs, wim.data() + klo, count);
    }
  }
}

TimeFrequencyRepresentation cwt(const sig::VibrationSignal& signal,
                                const std::vector<double>& scales) {
  std::vector<double> re, im;
  cwt_complex(signal, scales, re, im);
  TimeFrequencyRepresentation out;
  out.n_scales = scales.size();
  out.n_times = signal.samples.size();
  out.scales = scales;
  out.times.resize(out.n_times);
  double dt = 1.0 / signal.sample_rate;
  for (std::size_t j = 0; j < out.n_times; ++j) out.times[j] = double(j) * dt;
  out.magnitudes.resize(re.size());
  for (std::size_t i = 0; i < re.size(); ++i)
    out.magnitudes[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
  return out;
}

TimeFrequencyRepresentation normalize(TimeFrequencyRepresentation tfr) {
  if (tfr.magnitudes.empty()) return tfr;
  auto [mn_it, mx_it] =
      std::minmax_element(tfr.magnitudes.begin(), tfr.magnitudes.end());
  double mn = *mn_it, mx = *mx_it;
  if (mx > mn) {
    double inv = 1.0 / (mx - mn);
    for (double& v : tfr.magnitudes) v = (v - mn) * inv;
  } else {
    std::fill(tfr.magnitudes.begin(), tfr.magnitudes.end(), 0.0);
  }
  return tfr;
}

std::vector<double> colormap(const TimeFrequencyRepresentation& tfr) {
  std::vector<double> out(tfr.magnitudes.size() * 3);
  for (std::size_t i = 0; i < tfr.magnitudes.size(); ++i) {
    double v = tfr.magnitudes[i];
    if (!(v >= 0.0 && v <= 1.0))
      throw DomainError("colormap: value outside [0,1]: " + std::to_string(v));
    std::size_t seg = std::min(std::size_t(v * 4.0), std::size_t(3));
    double t = (v - kAnchors[seg].v) * 4.0;
    out[i * 3 + 0] = kAnchors[seg].r + t * (kAnchors[seg + 1].r - kAnchors[seg].r);
    out[i * 3 + 1] = kAnchors[seg].g + t * (kAnchors[seg + 1].g - kAnchors[seg].g);
    out[i * 3 + 2] = kAnchors[seg].b + t * (kAnchors[seg + 1].b - kAnchors[seg].b);
  }
  return out;
}

std::vector<double> resize_cubic(const std::vector<double>& image,
                                 std::size_t src_h, std::size_t src_w,
                                 std::size_t channels, std::size_t target_h,
                                 std::size_t target_w) {
  if (src_h < 2 || src_w < 2)
    throw DomainError("resize_cubic: source dims must be >= 2, got " +
                      std::to_string(src_h) + "x" + std::to_string(src_w));
  if (target_h < 1 || target_w < 1)
    throw DomainError("resize_cubic: target dims must be >= 1");
  if (image.size() != src_h * src_w * channels)
    throw ShapeError("resize_cubic: image size does not match dims");

  std::vector<double> m, scratch;
  // Pass 1: width, per (row, channel).
  auto wpos = sample_positions(src_w, target_w);
  std::vector<double> mid(src_h * target_w * channels);
  for (std::size_t r = 0; r < src_h; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      spline_line(image.data() + (r * src_w) * channels + c, channels, src_w,
                  wpos.data(), target_w,
                  mid.data() + (r * target_w) * channels + c, channels, m,
                  scratch);
  // Pass 2: height, per (column, channel).
  auto hpos = sample_positions(src_h, target_h);
  std::vector<double> out(target_h * target_w * channels);
  for (std::size_t col = 0; col < target_w; ++col)
    for (std::size_t c = 0; c < channels; ++c)
      spline_line(mid.data() + col * channels + c, target_w * channels, src_h,
                  hpos.data(), target_h, out.data() + col * channels + c,
                  target_w * channels, m, scratch);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

TimeFrequencyMap preprocess(const sig::VibrationSignal& signal,
                            const TfmConfig& config) {
  if (config.target_size < 1) throw ConfigError("target_size must be >= 1");
  auto scales = default_scales(signal.sample_rate, signal.samples.size(),
                               config.n_scales);
  auto tfr = normalize(cwt(signal, scales));
  auto rgb = colormap(tfr);
  auto resized = resize_cubic(rgb, tfr.n_scales, tfr.n_times, 3,
                              config.target_size, config.target_size);
  TimeFrequencyMap map;
  map.h = config.target_size;
  map.w = config.target_size;
  map.c = 3;
  map.pixels.resize(resized.size());
  for (std::size_t i = 0; i < resized.size(); ++i)
    map.pixels[i] = float(resized[i]);
  return map;
}

namespace {
constexpr char kTfmMagic[8] = {'T', 'F', 'M', 'A', 'P', '0', '0', '1'};
}

void save_tfm(const std::filesystem::path& path, const TimeFrequencyMap& map) {
  if (map.pixels.size() != map.h * map.w * map.c)
    throw ShapeError("save_tfm: pixel count does not match dims");
  std::string buf;
  buf.append(kTfmMagic, 8);
  io::put_u32(buf, std::uint32_t(map.h));
  io::put_u32(buf, std::uint32_t(map.w));
  io::put_u32(buf, std::uint32_t(map.c));
  for (float v : map.pixels) io::put_f32(buf, v);
  io::write_file(path, buf);
}

TimeFrequencyMap load_tfm(const std::filesystem::path& path) {
  std::string buf = io::read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), kTfmMagic, 8) != 0)
    throw ParseError("not a TFM file: " + path.string());
  io::Reader r(buf, "TFM " + path.string(), 8);
  TimeFrequencyMap map;
  map.h = r.u32();
  map.w = r.u32();
  map.c = r.u32();
  std::size_t n = map.h * map.w * map.c;
  map.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    float v = r.f32();
    if (!(v >= 0.0f && v <= 1.0f))
      throw ParseError("TFM " + path.string() + ": pixel " + std::to_string(i) +
                       " outside [0,1]");
    map.pixels[i] = v;
  }
  map.source_id = path.string();
  return map;
}

}  // namespace wtfd::tfm
