#include "wtfd/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"

namespace wtfd::knn {

namespace {

constexpr std::size_t kEncodeChunk = 64;

std::vector<double> unit_rows(const std::vector<float>& v, std::size_t rows,
                              std::size_t d) {
  std::vector<double> out(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += double(v[i * d + j]) * v[i * d + j];
    double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = double(v[i * d + j]) * inv;
  }
  return out;
}

void check_bank(const FeatureBank& b, const char* what) {
  if (b.m == 0 || b.d == 0)
    throw ContractError(std::string(what) + ": empty feature bank");
  if (b.vectors.size() != b.m * b.d || b.labels.size() != b.m)
    throw ShapeError(std::string(what) + ": bank fields disagree on M or d");
  for (float v : b.vectors)
    if (!std::isfinite(v))
      throw DomainError(std::string(what) + ": non-finite feature entry");
}

}  // namespace

FeatureBank extract_features(const std::vector<tfm::TimeFrequencyMap>& maps,
                             const std::vector<std::uint16_t>& labels,
                             const vit::Encoder<float>& enc) {
  if (maps.empty()) throw ContractError("extract_features: no samples");
  if (maps.size() != labels.size())
    throw ContractError("extract_features: " + std::to_string(maps.size()) +
                        " maps vs " + std::to_string(labels.size()) + " labels");
  const std::size_t p = enc.cfg.patch_size;
  const std::size_t row_len = p * p * 3;
  for (const auto& x : maps)
    if (x.h != enc.img_h || x.w != enc.img_w || x.c != enc.channels)
      throw ShapeError("extract_features: map is " + std::to_string(x.h) + "x" +
                       std::to_string(x.w) + "x" + std::to_string(x.c) +
                       ", encoder expects " + std::to_string(enc.img_h) + "x" +
                       std::to_string(enc.img_w) + "x" +
                       std::to_string(enc.channels));

  FeatureBank bank;
  bank.m = maps.size();
  bank.d = enc.cfg.embed_dim;
  bank.labels = labels;
  bank.vectors.resize(bank.m * bank.d);
  for (std::size_t start = 0; start < bank.m; start += kEncodeChunk) {
    std::size_t b = std::min(kEncodeChunk, bank.m - start);
    std::vector<float> rows(b * enc.n * row_len);
    for (std::size_t i = 0; i < b; ++i) {
      auto pr = vit::patch_rows(maps[start + i], p);
      std::copy(pr.begin(), pr.end(),
                rows.begin() + std::ptrdiff_t(i * enc.n * row_len));
    }
    ag::Graph<float> g;
    auto patches = g.input({b, enc.n, row_len}, std::move(rows));
    auto y = vit::encode_batch(g, enc, patches);
    const auto& yv = y.val();
    std::copy(yv.begin(), yv.end(),
              bank.vectors.begin() + std::ptrdiff_t(start * bank.d));
  }
  return bank;
}

Prediction classify(const std::vector<float>& query, const FeatureBank& bank,
                    const KnnConfig& cfg) {
  check_bank(bank, "classify");
  if (query.size() != bank.d)
    throw ShapeError("classify: query length " + std::to_string(query.size()) +
                     ", bank dimension " + std::to_string(bank.d));
  if (cfg.n_neighbors < 1 || cfg.n_neighbors > bank.m)
    throw ContractError("classify: N_k " + std::to_string(cfg.n_neighbors) +
                        " outside [1, " + std::to_string(bank.m) + "]");
  if (cfg.tau_k && !(*cfg.tau_k > 0.0))
    throw ConfigError("classify: tau_k must be positive");

  auto qn = unit_rows(query, 1, bank.d);
  auto bn = unit_rows(bank.vectors, bank.m, bank.d);
  std::vector<double> sim(bank.m, 0.0);
  for (std::size_t i = 0; i < bank.m; ++i)
    for (std::size_t j = 0; j < bank.d; ++j) sim[i] += bn[i * bank.d + j] * qn[j];

  std::vector<std::size_t> idx(bank.m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(cfg.n_neighbors),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      if (sim[a] != sim[b]) return sim[a] > sim[b];
                      return a < b;
                    });

  Prediction out;
  std::vector<std::pair<std::uint16_t, double>>& scores = out.scores;
  for (std::size_t r = 0; r < cfg.n_neighbors; ++r) {
    std::size_t i = idx[r];
    double w = cfg.tau_k ? std::exp(sim[i] / *cfg.tau_k) : 1.0;
    auto it = std::find_if(scores.begin(), scores.end(),
                           [&](const auto& s) { return s.first == bank.labels[i]; });
    if (it == scores.end())
      scores.emplace_back(bank.labels[i], w);
    else
      it->second += w;
  }
  std::sort(scores.begin(), scores.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out.label = scores[0].first;
  double best = scores[0].second;
  for (const auto& [cls, sc] : scores)
    if (sc > best) {
      best = sc;
      out.label = cls;
    }
  return out;
}

EvalReport evaluate(const FeatureBank& test, const FeatureBank& bank,
                    const KnnConfig& cfg) {
  check_bank(test, "evaluate(test)");
  check_bank(bank, "evaluate(bank)");
  if (test.d != bank.d)
    throw ShapeError("evaluate: test dimension " + std::to_string(test.d) +
                     " vs bank " + std::to_string(bank.d));

  EvalReport rep;
  rep.classes.assign(bank.labels.begin(), bank.labels.end());
  std::sort(rep.classes.begin(), rep.classes.end());
  rep.classes.erase(std::unique(rep.classes.begin(), rep.classes.end()),
                    rep.classes.end());
  bool unknown = false;
  for (auto l : test.labels)
    if (!std::binary_search(rep.classes.begin(), rep.classes.end(), l))
      unknown = true;
  std::size_t known = rep.classes.size();
  if (unknown) rep.classes.push_back(kUnknownClass);
  std::size_t n = rep.classes.size();
  auto slot = [&](std::uint16_t label) {
    auto it = std::lower_bound(rep.classes.begin(), rep.classes.begin() +
                                                        std::ptrdiff_t(known),
                               label);
    if (it != rep.classes.begin() + std::ptrdiff_t(known) && *it == label)
      return std::size_t(it - rep.classes.begin());
    return known;  // the unknown slot
  };

  std::vector<std::size_t> counts(n * n, 0);
  rep.row_counts.assign(n, 0);
  std::size_t correct = 0;
  std::vector<float> q(test.d);
  for (std::size_t i = 0; i < test.m; ++i) {
    std::copy(test.vectors.begin() + std::ptrdiff_t(i * test.d),
              test.vectors.begin() + std::ptrdiff_t((i + 1) * test.d),
              q.begin());
    auto pred = classify(q, bank, cfg);
    std::size_t row = slot(test.labels[i]);
    std::size_t col = slot(pred.label);
    ++counts[row * n + col];
    ++rep.row_counts[row];
    if (pred.label == test.labels[i]) ++correct;
  }
  rep.accuracy = double(correct) / double(test.m);
  rep.per_class.assign(n, 0.0);
  rep.confusion.assign(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (rep.row_counts[r] == 0) continue;
    for (std::size_t c = 0; c < n; ++c)
      rep.confusion[r * n + c] =
          100.0 * double(counts[r * n + c]) / double(rep.row_counts[r]);
    rep.per_class[r] = double(counts[r * n + r]) / double(rep.row_counts[r]);
  }
  return rep;
}

std::vector<SweepRow> sweep(const FeatureBank& test, const FeatureBank& bank,
                            const std::vector<std::size_t>& n_k_values,
                            double tau_k) {
  std::vector<SweepRow> rows;
  for (std::size_t n_k : n_k_values) {
    SweepRow r;
    r.n_k = n_k;
    r.acc_plain = evaluate(test, bank, {n_k, std::nullopt}).accuracy;
    r.acc_tempered = evaluate(test, bank, {n_k, tau_k}).accuracy;
    rows.push_back(r);
  }
  return rows;
}

void save_bank(const std::filesystem::path& path, const FeatureBank& bank) {
  check_bank(bank, "save_bank");
  std::string buf = "FEATBNK1";
  io::put_u32(buf, std::uint32_t(bank.m));
  io::put_u32(buf, std::uint32_t(bank.d));
  for (float v : bank.vectors) io::put_f32(buf, v);
  for (auto l : bank.labels) io::put_u16(buf, l);
  io::write_file(path, buf);
}

FeatureBank load_bank(const std::filesystem::path& path) {
  std::string buf = io::read_file(path);
  if (buf.size() < 8 || buf.compare(0, 8, "FEATBNK1") != 0)
    throw ParseError("feature bank " + path.string() + ": bad magic");
  io::Reader r(buf, "feature bank " + path.string(), 8);
  FeatureBank bank;
  bank.m = r.u32();
  bank.d = r.u32();
  bank.vectors.resize(bank.m * bank.d);
  for (auto& v : bank.vectors) v = r.f32();
  bank.labels.resize(bank.m);
  for (auto& l : bank.labels) l = r.u16();
  if (r.remaining() != 0)
    throw ParseError("feature bank " + path.string() + ": trailing bytes");
  check_bank(bank, ("feature bank " + path.string()).c_str());
  return bank;
}

}  // namespace wtfd::knn
