#include "wtfd/vit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"

namespace wtfd::vit {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;
}

ViTConfig ViTConfig::desk() {
  ViTConfig c;
  c.patch_size = 8;
  c.embed_dim = 48;
  c.n_heads = 3;
  c.head_dim = 16;
  c.mlp_dim = 192;
  c.depth = 4;
  return c;
}

void ViTConfig::validate() const {
  if (!patch_size || !embed_dim || !n_heads || !head_dim || !mlp_dim)
    throw ConfigError("vit: all dimensions must be positive");
  if (n_heads * head_dim != embed_dim)
    throw ConfigError("vit: n_heads*head_dim must equal embed_dim, got " +
                      std::to_string(n_heads) + "*" + std::to_string(head_dim) +
                      " != " + std::to_string(embed_dim));
}

std::size_t ViTConfig::n_patches(std::size_t img_h, std::size_t img_w) const {
  if (img_h % patch_size != 0 || img_w % patch_size != 0)
    throw ShapeError("vit: image " + std::to_string(img_h) + "x" +
                     std::to_string(img_w) + " not divisible by patch size " +
                     std::to_string(patch_size));
  return (img_h / patch_size) * (img_w / patch_size);
}

namespace {

template <class T>
void fill_trunc_normal(ag::Parameter<T>& p, Rng& rng) {
  for (auto& v : p.value) v = T(kInitStd * rng.truncated_normal());
}

}  // namespace

template <class T>
Encoder<T> make_encoder(ag::ParamSet<T>& ps, const ViTConfig& cfg,
                        std::size_t img_h, std::size_t img_w,
                        std::size_t channels, const std::string& prefix,
                        Rng& rng) {
  cfg.validate();
  Encoder<T> e;
  e.cfg = cfg;
  e.img_h = img_h;
  e.img_w = img_w;
  e.channels = channels;
  e.n = cfg.n_patches(img_h, img_w);
  std::size_t d = cfg.embed_dim, hd = cfg.n_heads * cfg.head_dim;
  std::size_t ppc = cfg.patch_size * cfg.patch_size * channels;

  auto mat = [&](const std::string& name, ag::Shape shape) {
    auto& p = ps.create(prefix + name, std::move(shape), true);
    fill_trunc_normal(p, rng);
    return &p;
  };
  auto vec = [&](const std::string& name, std::size_t len, T init) {
    auto& p = ps.create(prefix + name, {len}, false);
    std::fill(p.value.begin(), p.value.end(), init);
    return &p;
  };

  e.w_emd = mat("w_emd", {ppc, d});
  e.x_class = mat("x_class", {1, d});
  e.e_pos = mat("e_pos", {e.n + 1, d});
  e.blocks.resize(cfg.depth);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    auto& b = e.blocks[l];
    std::string bp = "block" + std::to_string(l) + ".";
    b.ln1_g = vec(bp + "ln1_g", d, T(1));
    b.ln1_b = vec(bp + "ln1_b", d, T(0));
    b.w_q = mat(bp + "w_q", {d, hd});
    b.w_k = mat(bp + "w_k", {d, hd});
    b.w_v = mat(bp + "w_v", {d, hd});
    b.w_o = mat(bp + "w_o", {hd, d});
    b.ln2_g = vec(bp + "ln2_g", d, T(1));
    b.ln2_b = vec(bp + "ln2_b", d, T(0));
    b.w1 = mat(bp + "w1", {d, cfg.mlp_dim});
    b.b1 = vec(bp + "b1", cfg.mlp_dim, T(0));
    b.w2 = mat(bp + "w2", {cfg.mlp_dim, d});
    b.b2 = vec(bp + "b2", d, T(0));
  }
  e.lnf_g = vec("lnf_g", d, T(1));
  e.lnf_b = vec("lnf_b", d, T(0));
  return e;
}

std::vector<float> patch_rows(const tfm::TimeFrequencyMap& x, std::size_t p) {
  if (x.h % p != 0 || x.w % p != 0)
    throw ShapeError("patch_rows: map " + std::to_string(x.h) + "x" +
                     std::to_string(x.w) + " not divisible by " +
                     std::to_string(p));
  std::size_t gh = x.h / p, gw = x.w / p, c = x.c;
  std::vector<float> rows(gh * gw * p * p * c);
  std::size_t idx = 0;
  for (std::size_t pr = 0; pr < gh; ++pr)
    for (std::size_t pc = 0; pc < gw; ++pc)
      for (std::size_t py = 0; py < p; ++py)
        for (std::size_t px = 0; px < p; ++px)
          for (std::size_t ch = 0; ch < c; ++ch)
            rows[idx++] =
                x.pixels[((pr * p + py) * x.w + (pc * p + px)) * c + ch];
  return rows;
}

template <class T>
ag::Var<T> patch_embed(ag::Graph<T>& g, const Encoder<T>& enc,
                       ag::Var<T> patches) {
  const auto& s = patches.shape();
  if (s.size() != 3 || s[1] != enc.n ||
      s[2] != enc.cfg.patch_size * enc.cfg.patch_size * enc.channels)
    throw ShapeError("patch_embed: bad patches shape " + ag::shape_str(s));
  std::size_t m = s[0], d = enc.cfg.embed_dim;
  auto emb = g.matmul(patches, g.use(*enc.w_emd));  // [M, N, d]
  auto ones = g.input({m, 1}, std::vector<T>(m, T(1)));
  auto cls = g.reshape(g.matmul(ones, g.use(*enc.x_class)), {m, 1, d});
  auto z = g.concat(cls, emb, 1);            // [M, N+1, d]
  return g.add(z, g.use(*enc.e_pos));        // broadcast over the batch
}

template <class T>
ag::Var<T> msa(ag::Graph<T>& g, const Encoder<T>& enc, std::size_t block,
               ag::Var<T> z, std::vector<std::vector<T>>* attn_out) {
  const auto& b = enc.blocks.at(block);
  std::size_t dk = enc.cfg.head_dim;
  T inv_sqrt_dk = T(1) / std::sqrt(T(dk));
  auto u = g.layer_norm(z, g.use(*b.ln1_g), g.use(*b.ln1_b), 2, T(kLnEps));
  auto q = g.matmul(u, g.use(*b.w_q));
  auto k = g.matmul(u, g.use(*b.w_k));
  auto v = g.matmul(u, g.use(*b.w_v));
  if (attn_out) attn_out->clear();
  ag::Var<T> heads{};
  for (std::size_t h = 0; h < enc.cfg.n_heads; ++h) {
    auto qh = g.slice(q, 2, h * dk, dk);
    auto kh = g.slice(k, 2, h * dk, dk);
    auto vh = g.slice(v, 2, h * dk, dk);
    auto logits = g.scale(g.matmul(qh, g.transpose(kh, 1, 2)), inv_sqrt_dk);
    auto attn = g.softmax(logits, 2);  // [M, S, S]
    if (attn_out) attn_out->push_back(attn.val());
    auto ctx = g.matmul(attn, vh);
    heads = h == 0 ? ctx : g.concat(heads, ctx, 2);
  }
  return g.add(g.matmul(heads, g.use(*b.w_o)), z);
}

template <class T>
ag::Var<T> mlp_block(ag::Graph<T>& g, const Encoder<T>& enc, std::size_t block,
                     ag::Var<T> z) {
  const auto& b = enc.blocks.at(block);
  auto u = g.layer_norm(z, g.use(*b.ln2_g), g.use(*b.ln2_b), 2, T(kLnEps));
  auto h1 = g.gelu(g.add(g.matmul(u, g.use(*b.w1)), g.use(*b.b1)));
  auto out = g.add(g.matmul(h1, g.use(*b.w2)), g.use(*b.b2));
  return g.add(out, z);
}

template <class T>
ag::Var<T> encode_batch(ag::Graph<T>& g, const Encoder<T>& enc,
                        ag::Var<T> patches,
                        std::vector<std::vector<T>>* last_attn) {
  auto z = patch_embed(g, enc, patches);
  for (std::size_t l = 0; l < enc.cfg.depth; ++l) {
    bool last = l + 1 == enc.cfg.depth;
    z = msa(g, enc, l, z, last ? last_attn : nullptr);
    z = mlp_block(g, enc, l, z);
  }
  std::size_t m = patches.shape()[0], d = enc.cfg.embed_dim;
  auto cls = g.reshape(g.slice(z, 1, 0, 1), {m, d});
  return g.layer_norm(cls, g.use(*enc.lnf_g), g.use(*enc.lnf_b), 1, T(kLnEps));
}

template <class T>
std::vector<T> encode(const Encoder<T>& enc, const tfm::TimeFrequencyMap& x) {
  ag::Graph<T> g;
  auto rows = patch_rows(x, enc.cfg.patch_size);
  std::vector<T> data(rows.begin(), rows.end());
  auto patches =
      g.input({1, enc.n, enc.cfg.patch_size * enc.cfg.patch_size * enc.channels},
              std::move(data));
  auto y = encode_batch(g, enc, patches);
  return y.val();
}

template <class T>
AttentionMaps extract_attention(const Encoder<T>& enc,
                                const tfm::TimeFrequencyMap& x,
                                double keep_mass) {
  if (!(keep_mass > 0.0 && keep_mass <= 1.0))
    throw ContractError("extract_attention: keep_mass must be in (0,1]");
  ag::Graph<T> g;
  auto rows = patch_rows(x, enc.cfg.patch_size);
  std::vector<T> data(rows.begin(), rows.end());
  auto patches =
      g.input({1, enc.n, enc.cfg.patch_size * enc.cfg.patch_size * enc.channels},
              std::move(data));
  std::vector<std::vector<T>> attn;
  encode_batch(g, enc, patches, &attn);

  std::size_t nh = enc.cfg.n_heads, n = enc.n, s = n + 1;
  AttentionMaps m;
  m.n_heads = nh;
  m.n_patches = n;
  m.eam.resize(nh * s * s);
  m.cam.resize(nh * n);
  for (std::size_t h = 0; h < nh; ++h) {
    for (std::size_t i = 0; i < s * s; ++i) m.eam[h * s * s + i] = float(attn[h][i]);
    // Class-token row without its self-weight, renormalized over patches.
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += double(attn[h][j + 1]);
    for (std::size_t j = 0; j < n; ++j)
      m.cam[h * n + j] = total > 0.0 ? float(double(attn[h][j + 1]) / total) : 0.0f;
  }

  std::vector<double> avg(n, 0.0);
  for (std::size_t h = 0; h < nh; ++h)
    for (std::size_t j = 0; j < n; ++j) avg[j] += double(m.cam[h * n + j]) / double(nh);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return avg[a] > avg[b]; });
  double total = std::accumulate(avg.begin(), avg.end(), 0.0);
  double threshold = keep_mass * total - 1e-12;
  m.tam.assign(n, 0);
  double cum = 0.0;
  for (std::size_t j : order) {
    if (cum >= threshold || avg[j] == 0.0) break;
    m.tam[j] = 1;
    cum += avg[j];
  }
  return m;
}

namespace {
constexpr char kAttnMagic[8] = {'A', 'T', 'T', 'N', 'M', 'A', 'P', '1'};
}

void save_attention(const std::filesystem::path& path, const AttentionMaps& m) {
  std::size_t s = m.n_patches + 1;
  if (m.cam.size() != m.n_heads * m.n_patches || m.tam.size() != m.n_patches ||
      m.eam.size() != m.n_heads * s * s)
    throw ShapeError("save_attention: field sizes do not match dims");
  std::string buf;
  buf.append(kAttnMagic, 8);
  io::put_u32(buf, std::uint32_t(m.n_heads));
  io::put_u32(buf, std::uint32_t(m.n_patches));
  for (float v : m.cam) io::put_f32(buf, v);
  for (std::uint8_t v : m.tam) buf.push_back(char(v));
  for (float v : m.eam) io::put_f32(buf, v);
  io::write_file(path, buf);
}

AttentionMaps load_attention(const std::filesystem::path& path) {
  std::string buf = io::read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), kAttnMagic, 8) != 0)
    throw ParseError("not an attention-map file: " + path.string());
  io::Reader r(buf, "attention map " + path.string(), 8);
  AttentionMaps m;
  m.n_heads = r.u32();
  m.n_patches = r.u32();
  std::size_t s = m.n_patches + 1;
  m.cam.resize(m.n_heads * m.n_patches);
  for (auto& v : m.cam) v = r.f32();
  m.tam.resize(m.n_patches);
  for (auto& v : m.tam) v = r.u8();
  m.eam.resize(m.n_heads * s * s);
  for (auto& v : m.eam) v = r.f32();
  return m;
}

template Encoder<float> make_encoder(ag::ParamSet<float>&, const ViTConfig&,
                                     std::size_t, std::size_t, std::size_t,
                                     const std::string&, Rng&);
template Encoder<double> make_encoder(ag::ParamSet<double>&, const ViTConfig&,
                                      std::size_t, std::size_t, std::size_t,
                                      const std::string&, Rng&);
template ag::Var<float> patch_embed(ag::Graph<float>&, const Encoder<float>&,
                                    ag::Var<float>);
template ag::Var<double> patch_embed(ag::Graph<double>&, const Encoder<double>&,
                                     ag::Var<double>);
template ag::Var<float> msa(ag::Graph<float>&, const Encoder<float>&,
                            std::size_t, ag::Var<float>,
                            std::vector<std::vector<float>>*);
template ag::Var<double> msa(ag::Graph<double>&, const Encoder<double>&,
                             std::size_t, ag::Var<double>,
                             std::vector<std::vector<double>>*);
template ag::Var<float> mlp_block(ag::Graph<float>&, const Encoder<float>&,
                                  std::size_t, ag::Var<float>);
template ag::Var<double> mlp_block(ag::Graph<double>&, const Encoder<double>&,
                                   std::size_t, ag::Var<double>);
template ag::Var<float> encode_batch(ag::Graph<float>&, const Encoder<float>&,
                                     ag::Var<float>,
                                     std::vector<std::vector<float>>*);
template ag::Var<double> encode_batch(ag::Graph<double>&,
                                      const Encoder<double>&, ag::Var<double>,
                                      std::vector<std::vector<double>>*);
template std::vector<float> encode(const Encoder<float>&,
                                   const tfm::TimeFrequencyMap&);
template std::vector<double> encode(const Encoder<double>&,
                                    const tfm::TimeFrequencyMap&);
template AttentionMaps extract_attention(const Encoder<float>&,
                                         const tfm::TimeFrequencyMap&, double);
template AttentionMaps extract_attention(const Encoder<double>&,
                                         const tfm::TimeFrequencyMap&, double);

}  // namespace wtfd::vit
