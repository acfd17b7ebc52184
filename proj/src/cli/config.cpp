#include "wtfd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"
#include "wtfd/signal.hpp"

namespace wtfd::cli {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const std::string& source, std::size_t line,
                       const std::string& msg) {
  throw ConfigError("config " + source + ":" + std::to_string(line) + ": " +
                    msg);
}

struct Setter {
  const char* key;
  // kind: u = size_t, d = double, b = bool, l = size_t list, s = u64 seed
  char kind;
  void* field;
};

std::vector<Setter> setters(RunConfig& c) {
  return {
      {"classes", 'u', &c.classes},
      {"n_per_class", 'u', &c.n_per_class},
      {"duration", 'u', &c.duration},
      {"sample_rate", 'd', &c.sample_rate},
      {"noise_std", 'd', &c.noise_std},
      {"test_fraction", 'd', &c.test_fraction},
      {"labeled_fraction", 'd', &c.labeled_fraction},
      {"target_size", 'u', &c.target_size},
      {"n_scales", 'u', &c.n_scales},
      {"patch_size", 'u', &c.patch_size},
      {"embed_dim", 'u', &c.embed_dim},
      {"n_heads", 'u', &c.n_heads},
      {"head_dim", 'u', &c.head_dim},
      {"mlp_dim", 'u', &c.mlp_dim},
      {"depth", 'u', &c.depth},
      {"proj_dims", 'l', &c.proj_dims},
      {"proj_out", 'u', &c.proj_out},
      {"tau_t", 'd', &c.tau_t},
      {"tau_s", 'd', &c.tau_s},
      {"m0", 'd', &c.m0},
      {"m_c", 'd', &c.m_c},
      {"scale_split", 'd', &c.scale_split},
      {"n_local", 'u', &c.n_local},
      {"batch", 'u', &c.batch},
      {"epochs", 'u', &c.epochs},
      {"warmup_epochs", 'u', &c.warmup_epochs},
      {"lr_start", 'd', &c.lr_start},
      {"lr_peak", 'd', &c.lr_peak},
      {"lr_floor", 'd', &c.lr_floor},
      {"weight_decay", 'd', &c.weight_decay},
      {"identical_init", 'b', &c.identical_init},
      {"freeze_center", 'b', &c.freeze_center},
      {"n_neighbors", 'u', &c.n_neighbors},
      {"tau_k", 'd', &c.tau_k},
      {"seed", 's', &c.seed},
  };
}

std::size_t parse_u(const std::string& v, const std::string& src,
                    std::size_t line) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(src, line, "not an unsigned integer: '" + v + "'");
  return out;
}

double parse_d(const std::string& v, const std::string& src, std::size_t line) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(src, line, "not a number: '" + v + "'");
  return out;
}

void append_num(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void append_num(std::string& out, std::uint64_t v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  auto sets = setters(cfg);
  std::vector<bool> seen(sets.size(), false);

  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line_no;
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    if (trim(line).empty()) continue;

    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(source, line_no, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(source, line_no, "empty key");
    if (value.empty()) fail(source, line_no, "empty value for '" + key + "'");

    auto it = std::find_if(sets.begin(), sets.end(),
                           [&](const Setter& s) { return key == s.key; });
    if (it == sets.end()) fail(source, line_no, "unknown key '" + key + "'");
    std::size_t slot = std::size_t(it - sets.begin());
    if (seen[slot]) fail(source, line_no, "duplicate key '" + key + "'");
    seen[slot] = true;

    switch (it->kind) {
      case 'u':
        *static_cast<std::size_t*>(it->field) = parse_u(value, source, line_no);
        break;
      case 'd':
        *static_cast<double*>(it->field) = parse_d(value, source, line_no);
        break;
      case 's': {
        std::uint64_t v = 0;
        auto res = std::from_chars(value.data(), value.data() + value.size(), v);
        if (res.ec != std::errc() || res.ptr != value.data() + value.size())
          fail(source, line_no, "not an unsigned integer: '" + value + "'");
        *static_cast<std::uint64_t*>(it->field) = v;
        break;
      }
      case 'b': {
        if (value == "true")
          *static_cast<bool*>(it->field) = true;
        else if (value == "false")
          *static_cast<bool*>(it->field) = false;
        else
          fail(source, line_no, "expected true or false, got '" + value + "'");
        break;
      }
      case 'l': {
        std::vector<std::size_t> dims;
        std::size_t p = 0;
        while (p <= value.size()) {
          std::size_t comma = value.find(',', p);
          if (comma == std::string::npos) comma = value.size();
          std::string part = trim(value.substr(p, comma - p));
          if (part.empty()) fail(source, line_no, "empty list element");
          dims.push_back(parse_u(part, source, line_no));
          p = comma + 1;
        }
        *static_cast<std::vector<std::size_t>*>(it->field) = std::move(dims);
        break;
      }
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path), path.string());
}

std::string format_config(const RunConfig& c) {
  RunConfig copy = c;  // the setter table needs mutable field pointers
  std::string out;
  for (const auto& s : setters(copy)) {
    out += s.key;
    out += " = ";
    switch (s.kind) {
      case 'u':
        append_num(out, std::uint64_t(*static_cast<std::size_t*>(s.field)));
        break;
      case 'd':
        append_num(out, *static_cast<double*>(s.field));
        break;
      case 's':
        append_num(out, *static_cast<std::uint64_t*>(s.field));
        break;
      case 'b':
        out += *static_cast<bool*>(s.field) ? "true" : "false";
        break;
      case 'l': {
        const auto& dims = *static_cast<std::vector<std::size_t>*>(s.field);
        for (std::size_t i = 0; i < dims.size(); ++i) {
          if (i) out += ",";
          append_num(out, std::uint64_t(dims[i]));
        }
        break;
      }
    }
    out += "\n";
  }
  return out;
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  io::write_file(path, format_config(cfg));
}

void RunConfig::validate(bool allow_ablation) const {
  if (classes < 1 || classes > sig::class_catalogue_size())
    throw ConfigError("classes must be in [1, " +
                      std::to_string(sig::class_catalogue_size()) + "]");
  if (n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
  if (duration < 2) throw ConfigError("duration must be >= 2 samples");
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must be in [0, 1)");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
    throw ConfigError("labeled_fraction must be in (0, 1]");
  if (target_size < 2) throw ConfigError("target_size must be >= 2");
  if (target_size % patch_size != 0)
    throw ConfigError("target_size " + std::to_string(target_size) +
                      " is not divisible by patch_size " +
                      std::to_string(patch_size));
  if (n_neighbors < 1) throw ConfigError("n_neighbors must be >= 1");
  if (!(tau_k >= 0.0)) throw ConfigError("tau_k must be >= 0 (0 disables it)");
  vit().validate();
  projector().validate();
  dino().validate(allow_ablation);
}

vit::ViTConfig RunConfig::vit() const {
  vit::ViTConfig v;
  v.patch_size = patch_size;
  v.embed_dim = embed_dim;
  v.n_heads = n_heads;
  v.head_dim = head_dim;
  v.mlp_dim = mlp_dim;
  v.depth = depth;
  return v;
}

proj::ProjectorConfig RunConfig::projector() const {
  proj::ProjectorConfig p;
  p.dims = proj_dims;
  p.out_dim = proj_out;
  return p;
}

dino::DinoConfig RunConfig::dino() const {
  dino::DinoConfig d;
  d.tau_t = tau_t;
  d.tau_s = tau_s;
  d.m0 = m0;
  d.m_c = m_c;
  d.scale_split = scale_split;
  d.n_local = n_local;
  d.batch = batch;
  d.epochs = epochs;
  d.warmup_epochs = warmup_epochs;
  d.lr_start = lr_start;
  d.lr_peak = lr_peak;
  d.lr_floor = lr_floor;
  d.weight_decay = weight_decay;
  d.identical_init = identical_init;
  d.freeze_center = freeze_center;
  return d;
}

tfm::TfmConfig RunConfig::tfm() const {
  tfm::TfmConfig t;
  t.target_size = target_size;
  t.n_scales = n_scales;
  return t;
}

std::optional<double> RunConfig::knn_tau() const {
  if (tau_k == 0.0) return std::nullopt;
  return tau_k;
}

}  // namespace wtfd::cli
