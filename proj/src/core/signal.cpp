#include "wtfd/signal.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <string>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"
#include "wtfd/rng.hpp"

namespace wtfd::sig {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRotationHz = 30.0;

// Impulse frequencies loosely follow typical bearing defect ratios at 30 Hz
// shaft speed; severe variants share the rate but shift the resonance band.
const FaultClassInfo kCatalogue[] = {
    //  name                imp_hz  res_hz  decay     amp   rot   rot2
    {"normal",              0.0,    0.0,    0.0,      0.0,  0.30, 0.05},
    {"inner_race",          162.2,  3000.0, 0.0008,   1.0,  0.25, 0.00},
    {"outer_race",          107.4,  2200.0, 0.0012,   1.0,  0.25, 0.00},
    {"ball",                70.6,   3600.0, 0.0006,   1.0,  0.25, 0.00},
    {"inner_race_severe",   162.2,  4300.0, 0.0004,   1.6,  0.25, 0.00},
    {"outer_race_severe",   107.4,  1700.0, 0.0016,   1.6,  0.25, 0.00},
    {"ball_severe",         70.6,   2700.0, 0.0005,   1.6,  0.25, 0.00},
    {"cage",                14.8,   1500.0, 0.0024,   0.8,  0.25, 0.00},
    {"imbalance",           0.0,    0.0,    0.0,      0.0,  1.00, 0.45},
    {"misalignment",        0.0,    0.0,    0.0,      0.0,  0.55, 0.90},
};

constexpr char kMagic[8] = {'V', 'I', 'B', 'S', 'I', 'G', '0', '1'};

}  // namespace

std::size_t class_catalogue_size() {
  return sizeof(kCatalogue) / sizeof(kCatalogue[0]);
}

const FaultClassInfo& class_info(int class_id) {
  if (class_id < 0 || std::size_t(class_id) >= class_catalogue_size())
    throw ConfigError("unknown fault class id: " + std::to_string(class_id));
  return kCatalogue[class_id];
}

int class_id_by_name(const std::string& name) {
  for (std::size_t i = 0; i < class_catalogue_size(); ++i)
    if (name == kCatalogue[i].name) return int(i);
  return -1;
}

VibrationSignal synth_fault_signal(int class_id, std::size_t duration_samples,
                                   double sample_rate, double noise_std,
                                   std::uint64_t seed) {
  if (duration_samples < 1)
    throw ContractError("synth_fault_signal: duration_samples must be >= 1");
  if (noise_std < 0)
    throw ContractError("synth_fault_signal: noise_std must be >= 0");
  const FaultClassInfo& cls = class_info(class_id);

  Rng rng = Rng::stream(seed, "synth", std::uint64_t(class_id), 0);
  double rot_phase = rng.uniform(0.0, 2.0 * kPi);
  double imp_offset = cls.impulse_hz > 0
                          ? rng.uniform(0.0, 1.0 / cls.impulse_hz)
                          : 0.0;

  std::vector<double> x(duration_samples, 0.0);
  double dt = 1.0 / sample_rate;

  for (std::size_t n = 0; n < duration_samples; ++n) {
    double t = double(n) * dt;
    x[n] = cls.rotation_amp * std::sin(2.0 * kPi * kRotationHz * t + rot_phase) +
           cls.harmonic2_amp *
               std::sin(2.0 * kPi * 2.0 * kRotationHz * t + 1.7 * rot_phase);
  }

  if (cls.impulse_hz > 0.0) {
    double period = 1.0 / cls.impulse_hz;
    double span = double(duration_samples) * dt;
    // Each impulse rings the resonance for about five decay constants.
    double ring = 5.0 * cls.decay_s;
    for (double tk = imp_offset - ring; tk < span; tk += period) {
      // The impulse amplitude is modulated by the shaft rotation, as a
      // rolling defect would be.
      double mod = 1.0 + 0.4 * std::cos(2.0 * kPi * kRotationHz * tk + rot_phase);
      std::size_t n0 = tk <= 0 ? 0 : std::size_t(std::ceil(tk / dt));
      std::size_t n1 = std::min(duration_samples,
                                std::size_t(std::ceil((tk + ring) / dt)));
      for (std::size_t n = n0; n < n1; ++n) {
        double u = double(n) * dt - tk;
        if (u < 0) continue;
        x[n] += cls.impulse_amp * mod * std::exp(-u / cls.decay_s) *
                std::sin(2.0 * kPi * cls.resonance_hz * u);
      }
    }
  }

  if (noise_std > 0.0) {
    for (std::size_t n = 0; n < duration_samples; ++n)
      x[n] += noise_std * rng.normal();
  }

  VibrationSignal out;
  out.sample_rate = sample_rate;
  out.label = class_id;
  out.samples.resize(duration_samples);
  for (std::size_t n = 0; n < duration_samples; ++n)
    out.samples[n] = float(x[n]);
  return out;
}

VibrationSignal load_signal(const std::filesystem::path& path,
                            double sample_rate) {
  std::string buf = io::read_file(path);
  VibrationSignal out;
  out.sample_rate = sample_rate;

  if (buf.size() >= 8 && std::memcmp(buf.data(), kMagic, 8) == 0) {
    io::Reader r(buf, "signal " + path.string(), 8);
    std::uint32_t count = r.u32();
    out.samples.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) out.samples[i] = r.f32();
    if (out.samples.empty())
      throw ParseError("empty signal file: " + path.string());
    return out;
  }

  std::size_t line_no = 0, pos = 0;
  while (pos < buf.size()) {
    ++line_no;
    std::size_t eol = buf.find('\n', pos);
    if (eol == std::string::npos) eol = buf.size();
    std::size_t b = pos, e = eol;
    pos = eol + 1;
    while (b < e && (buf[b] == ' ' || buf[b] == '\t')) ++b;
    while (e > b && (buf[e - 1] == ' ' || buf[e - 1] == '\t' ||
                     buf[e - 1] == '\r'))
      --e;
    if (b == e || buf[b] == '#') continue;
    float v;
    auto res = std::from_chars(buf.data() + b, buf.data() + e, v);
    if (res.ec != std::errc() || res.ptr != buf.data() + e)
      throw ParseError("signal " + path.string() + ": line " +
                       std::to_string(line_no) + " is not a number: '" +
                       buf.substr(b, e - b) + "'");
    out.samples.push_back(v);
  }
  if (out.samples.empty())
    throw ParseError("empty signal file: " + path.string());
  return out;
}

void save_signal_text(const std::filesystem::path& path,
                      const VibrationSignal& s) {
  std::string buf;
  buf.reserve(s.samples.size() * 14);
  char tmp[32];
  for (float v : s.samples) {
    auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
    buf.append(tmp, res.ptr);
    buf.push_back('\n');
  }
  io::write_file(path, buf);
}

void save_signal_binary(const std::filesystem::path& path,
                        const VibrationSignal& s) {
  std::string buf;
  buf.append(kMagic, 8);
  io::put_u32(buf, std::uint32_t(s.samples.size()));
  for (float v : s.samples) io::put_f32(buf, v);
  io::write_file(path, buf);
}

std::vector<VibrationSignal> segment(const VibrationSignal& signal,
                                     const SegmentSpec& spec) {
  if (spec.window_length < 2)
    throw ContractError("segment: window_length must be >= 2");
  if (spec.stride < 1) throw ContractError("segment: stride must be >= 1");
  if (signal.samples.size() < spec.window_length)
    throw DomainError("segment: signal length " +
                      std::to_string(signal.samples.size()) +
                      " is shorter than window " +
                      std::to_string(spec.window_length));
  std::size_t count =
      (signal.samples.size() - spec.window_length) / spec.stride + 1;
  std::vector<VibrationSignal> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    VibrationSignal w;
    w.sample_rate = signal.sample_rate;
    w.label = signal.label;
    std::size_t start = i * spec.stride;
    w.samples.assign(signal.samples.begin() + start,
                     signal.samples.begin() + start + spec.window_length);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace wtfd::sig
