#include "wtfd/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>

#include "wtfd/binio.hpp"
#include "wtfd/errors.hpp"
#include "wtfd/knn.hpp"
#include "wtfd/rng.hpp"
#include "wtfd/signal.hpp"
#include "wtfd/vit.hpp"

namespace fs = std::filesystem;

namespace wtfd::cli {
namespace {

std::string fmt_num(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt_fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string json_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

dino::TrainSetup make_setup(const RunConfig& cfg, const fs::path& snapshot) {
  dino::TrainSetup s;
  s.vit_cfg = cfg.vit();
  s.proj_cfg = cfg.projector();
  s.cfg = cfg.dino();
  s.input_size = cfg.target_size;
  s.seed = cfg.seed;
  s.snapshot_path = snapshot;
  return s;
}

}  // namespace

RunConfig effective_config(const GlobalOpts& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

SplitData load_split(const fs::path& manifest, Split split) {
  SplitData d;
  const fs::path dir = manifest.parent_path();
  for (const ManifestRow& row : read_manifest(manifest)) {
    if (row.split != split) continue;
    d.maps.push_back(tfm::load_tfm(tfm_path(dir, row)));
    d.labels.push_back(row.cls);
  }
  return d;
}

// ---------------------------------------------------------------- synth ---

int cmd_synth(const GlobalOpts& g, const SynthOpts& o, std::ostream& out,
              std::ostream& err) {
  RunConfig cfg = effective_config(g);
  if (o.classes) cfg.classes = *o.classes;
  if (o.n_per_class) cfg.n_per_class = *o.n_per_class;
  cfg.validate(true);

  if (fs::exists(o.out_dir) && !fs::is_empty(o.out_dir) && !g.force)
    throw IoError("output directory " + o.out_dir.string() +
                  " is not empty (rerun with --force to overwrite)");
  if (cfg.classes == 1)
    err << "warning: classes = 1 produces a single-class dataset; "
           "evaluation against it is trivial\n";

  fs::create_directories(o.out_dir / "signals");

  const std::size_t n = cfg.n_per_class;
  std::vector<ManifestRow> rows;
  rows.reserve(cfg.classes * n);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    // Test indices are carved out first, stratified per class; the labeled
    // subset is a slice of what remains, with a floor of two per class so a
    // feature bank always holds at least one within-class neighbor pair.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng = Rng::stream(cfg.seed, "split", c);
    split_rng.shuffle(order.begin(), order.end());
    const auto n_test = static_cast<std::size_t>(
        std::llround(cfg.test_fraction * static_cast<double>(n)));
    const std::size_t rest = n - n_test;
    std::size_t n_lab = static_cast<std::size_t>(
        std::llround(cfg.labeled_fraction * static_cast<double>(rest)));
    if (rest > 0) n_lab = std::clamp<std::size_t>(n_lab, std::min<std::size_t>(2, rest), rest);

    std::vector<Split> split_of(n, Split::unlabeled);
    for (std::size_t i = 0; i < n_test; ++i) split_of[order[i]] = Split::test;
    for (std::size_t i = n_test; i < n_test + n_lab; ++i)
      split_of[order[i]] = Split::labeled;

    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t sample_seed =
          Rng::stream(cfg.seed, "synth", c, i).next_u64();
      sig::VibrationSignal s = sig::synth_fault_signal(
          static_cast<int>(c), cfg.duration, cfg.sample_rate, cfg.noise_std,
          sample_seed);
      char name[64];
      std::snprintf(name, sizeof name, "signals/c%zu_%04zu.sig", c, i);
      sig::save_signal_binary(o.out_dir / name, s);
      rows.push_back({name, static_cast<std::uint16_t>(c), split_of[i]});
    }
  }

  write_manifest(o.out_dir / "manifest.csv", rows);
  save_config(o.out_dir / "config.txt", cfg);

  std::size_t n_lab = 0, n_unlab = 0, n_test = 0;
  for (const auto& r : rows) {
    if (r.split == Split::labeled) ++n_lab;
    else if (r.split == Split::unlabeled) ++n_unlab;
    else ++n_test;
  }
  out << "wrote " << rows.size() << " signals across " << cfg.classes
      << " classes to " << o.out_dir.string() << "\n"
      << "splits: " << n_lab << " labeled, " << n_unlab << " unlabeled, "
      << n_test << " test\n";
  return 0;
}

// ----------------------------------------------------------- preprocess ---

int cmd_preprocess(const GlobalOpts& g, const PreprocessOpts& o,
                   std::ostream& out, std::ostream& err) {
  RunConfig cfg = effective_config(g);
  cfg.validate(true);

  const std::vector<ManifestRow> rows = read_manifest(o.manifest);
  const fs::path dir = o.manifest.parent_path();
  fs::create_directories(dir / "tfm");

  // Distinct rows must land on distinct map files; the stem is the identity.
  std::map<std::string, const ManifestRow*> by_name;
  for (const auto& row : rows) {
    const std::string name = tfm_path(dir, row).filename().string();
    auto [it, fresh] = by_name.emplace(name, &row);
    if (!fresh)
      throw ConfigError("manifest rows " + it->second->path + " and " +
                        row.path + " map to the same output file " + name);
  }

  const fs::path cache_path = dir / "tfm" / "cache.txt";
  std::map<std::string, std::string> cache;
  if (fs::exists(cache_path)) {
    const std::string text = io::read_file(cache_path);
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      const std::size_t sp = line.find(' ');
      if (sp != std::string::npos)
        cache[line.substr(0, sp)] = line.substr(sp + 1);
    }
  }

  // Content hash folds in the parameters that shape the output, so a config
  // change invalidates stale maps even when the signal bytes are unchanged.
  const std::string param_key = fmt_num(cfg.sample_rate) + "|" +
                                std::to_string(cfg.target_size) + "|" +
                                std::to_string(cfg.n_scales);

  struct Outcome {
    char state = 'f';  // 'p' processed, 's' skipped, 'f' failed
    std::string name, hash, message;
  };
  std::vector<Outcome> res(rows.size());
  std::atomic<std::size_t> cursor{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= rows.size()) return;
      const ManifestRow& row = rows[i];
      Outcome& r = res[i];
      try {
        const fs::path in = dir / row.path;
        const fs::path outp = tfm_path(dir, row);
        r.name = outp.filename().string();
        const std::string bytes = io::read_file(in);
        char hex[24];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a64(param_key + "\n" + bytes)));
        r.hash = hex;
        auto it = cache.find(r.name);
        if (it != cache.end() && it->second == r.hash && fs::exists(outp)) {
          r.state = 's';
          continue;
        }
        sig::VibrationSignal s = sig::load_signal(in, cfg.sample_rate);
        s.label = row.cls;
        tfm::save_tfm(outp, tfm::preprocess(s, cfg.tfm()));
        r.state = 'p';
      } catch (const Error& e) {
        r.state = 'f';
        r.message = e.what();
      }
    }
  };

  std::size_t n_threads = g.threads ? g.threads
                                    : std::thread::hardware_concurrency();
  n_threads = std::clamp<std::size_t>(n_threads, 1,
                                      std::max<std::size_t>(rows.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::map<std::string, std::string> fresh_cache;
  std::size_t made = 0, skipped = 0, failed = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Outcome& r = res[i];
    if (r.state == 'f') {
      ++failed;
      err << "error: " << rows[i].path << ": " << r.message << "\n";
      continue;
    }
    fresh_cache[r.name] = r.hash;
    if (r.state == 'p') ++made;
    else ++skipped;
  }
  std::string cache_text;
  for (const auto& [name, hash] : fresh_cache)
    cache_text += name + " " + hash + "\n";
  io::write_file(cache_path, cache_text);

  out << "preprocessed " << made << " maps, " << skipped << " up to date, "
      << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------- train ---

std::vector<dino::MetricsRow> run_training(const RunConfig& cfg,
                                           const fs::path& manifest,
                                           const fs::path& out_dir,
                                           bool resume, std::ostream& out) {
  const fs::path dir = manifest.parent_path();
  std::vector<tfm::TimeFrequencyMap> data;
  for (const ManifestRow& row : read_manifest(manifest)) {
    if (row.split == Split::test) continue;  // labels unused, test held out
    data.push_back(tfm::load_tfm(tfm_path(dir, row)));
  }
  if (data.empty())
    throw ConfigError("manifest has no labeled or unlabeled rows to train on");

  fs::create_directories(out_dir);
  const dino::TrainSetup setup = make_setup(cfg, out_dir / "snapshot.ckpt");
  dino::TrainState st = dino::init_state(setup);

  const fs::path metrics_path = out_dir / "metrics.jsonl";
  std::vector<dino::MetricsRow> history;
  if (resume) {
    dino::load_state(out_dir / "latest.ckpt", st);
    if (fs::exists(metrics_path)) {
      for (const auto& r : dino::parse_metrics_log(metrics_path))
        if (r.epoch < st.next_epoch) history.push_back(r);
    }
  }
  std::string replay;
  for (const auto& r : history) replay += dino::metrics_json(r) + "\n";
  io::write_file(metrics_path, replay);

  std::ofstream mf(metrics_path, std::ios::app | std::ios::binary);
  if (!mf)
    throw IoError("cannot append to " + metrics_path.string());

  dino::EpochSink sink = [&](const dino::MetricsRow& r) {
    mf << dino::metrics_json(r) << "\n";
    mf.flush();
    history.push_back(r);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", r.epoch);
    dino::save_state(out_dir / name, st);
    dino::save_state(out_dir / "latest.ckpt", st);
    out << "epoch " << r.epoch << "  loss " << fmt_fixed(r.loss, 4) << "  kl "
        << fmt_fixed(r.kl, 4) << "  entropy " << fmt_fixed(r.entropy, 4)
        << "  lr " << fmt_num(r.lr) << "\n";
  };
  dino::train(st, setup, data, sink);
  dino::save_state(out_dir / "final.ckpt", st);
  return history;
}

int cmd_train(const GlobalOpts& g, const TrainOpts& o, std::ostream& out,
              std::ostream&) {
  RunConfig cfg = effective_config(g);
  cfg.validate(o.ablation);
  const auto history = run_training(cfg, o.manifest, o.out_dir, o.resume, out);
  out << "trained " << history.size() << " epochs; checkpoints in "
      << o.out_dir.string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ---

namespace {

std::string render_report(const knn::EvalReport& rep,
                          const std::vector<knn::SweepRow>& sw,
                          std::size_t n_k, const RunConfig& cfg,
                          bool untrained) {
  std::string j = "{";
  j += "\"accuracy\":" + fmt_num(rep.accuracy);
  j += ",\"n_k\":" + std::to_string(n_k);
  j += ",\"tau_k\":" + fmt_num(cfg.tau_k);
  j += ",\"untrained\":" + std::string(untrained ? "true" : "false");
  j += ",\"classes\":[";
  for (std::size_t i = 0; i < rep.classes.size(); ++i)
    j += (i ? "," : "") + std::to_string(rep.classes[i]);
  j += "],\"row_counts\":[";
  for (std::size_t i = 0; i < rep.row_counts.size(); ++i)
    j += (i ? "," : "") + std::to_string(rep.row_counts[i]);
  j += "],\"per_class\":[";
  for (std::size_t i = 0; i < rep.per_class.size(); ++i)
    j += (i ? "," : "") + fmt_num(rep.per_class[i]);
  j += "],\"confusion\":[";
  const std::size_t k = rep.classes.size();
  for (std::size_t r = 0; r < k; ++r) {
    j += r ? ",[" : "[";
    for (std::size_t c = 0; c < k; ++c)
      j += (c ? "," : "") + fmt_num(rep.confusion[r * k + c]);
    j += "]";
  }
  j += "],\"sweep\":[";
  for (std::size_t i = 0; i < sw.size(); ++i) {
    j += i ? "," : "";
    j += "{\"n_k\":" + std::to_string(sw[i].n_k);
    j += ",\"plain\":" + fmt_num(sw[i].acc_plain);
    j += ",\"tempered\":" + fmt_num(sw[i].acc_tempered) + "}";
  }
  j += "],\"config\":\"" + json_escape(format_config(cfg)) + "\"}";
  return j;
}

std::string class_label(std::uint16_t id) {
  return id == knn::kUnknownClass ? std::string("?") : std::to_string(id);
}

}  // namespace

int cmd_eval(const GlobalOpts& g, const EvalOpts& o, std::ostream& out,
             std::ostream&) {
  RunConfig cfg = effective_config(g);
  cfg.validate(true);

  const SplitData labeled = load_split(o.manifest, Split::labeled);
  const SplitData test = load_split(o.manifest, Split::test);
  if (labeled.maps.empty())
    throw ConfigError("manifest has no labeled rows to build a bank from");
  if (test.maps.empty()) throw ConfigError("manifest has no test rows");

  const std::size_t n_k = o.n_k ? *o.n_k : cfg.n_neighbors;
  if (n_k == 0) throw ConfigError("n_neighbors must be at least 1");
  if (n_k > labeled.maps.size())
    throw ConfigError("n_neighbors " + std::to_string(n_k) + " exceeds the " +
                      std::to_string(labeled.maps.size()) +
                      " labeled bank vectors");
  for (std::size_t v : o.sweep)
    if (v == 0 || v > labeled.maps.size())
      throw ConfigError("sweep value " + std::to_string(v) +
                        " outside the valid neighbor range 1.." +
                        std::to_string(labeled.maps.size()));
  if (!o.sweep.empty() && cfg.tau_k <= 0.0)
    throw ConfigError(
        "the sweep compares plain and tempered votes; it needs tau_k > 0");

  dino::TrainState st = dino::init_state(make_setup(cfg, {}));
  if (!o.untrained) dino::load_state(o.checkpoint, st);

  const knn::FeatureBank bank =
      knn::extract_features(labeled.maps, labeled.labels, st.t_enc);
  const knn::FeatureBank queries =
      knn::extract_features(test.maps, test.labels, st.t_enc);

  const knn::KnnConfig kc{n_k, cfg.knn_tau()};
  const knn::EvalReport rep = knn::evaluate(queries, bank, kc);
  std::vector<knn::SweepRow> sw;
  if (!o.sweep.empty()) sw = knn::sweep(queries, bank, o.sweep, cfg.tau_k);

  if (!o.report.empty())
    io::write_file(o.report, render_report(rep, sw, n_k, cfg, o.untrained));

  out << "bank " << bank.m << " vectors, " << queries.m << " queries, n_k "
      << n_k;
  if (kc.tau_k) out << ", tau_k " << fmt_num(*kc.tau_k);
  out << (o.untrained ? ", untrained encoder" : "") << "\n";
  out << "accuracy " << fmt_fixed(100.0 * rep.accuracy, 2) << "%\n";
  out << "per-class accuracy:\n";
  for (std::size_t i = 0; i < rep.classes.size(); ++i)
    out << "  class " << class_label(rep.classes[i]) << ": "
        << fmt_fixed(100.0 * rep.per_class[i], 2) << "%  ("
        << rep.row_counts[i] << " samples)\n";
  out << "confusion (rows actual, %):\n";
  const std::size_t k = rep.classes.size();
  for (std::size_t r = 0; r < k; ++r) {
    out << "  " << class_label(rep.classes[r]) << " |";
    for (std::size_t c = 0; c < k; ++c)
      out << " " << fmt_fixed(rep.confusion[r * k + c], 1);
    out << "\n";
  }
  if (!sw.empty()) {
    out << "sweep (accuracy %, plain vs tempered):\n";
    for (const auto& row : sw)
      out << "  n_k " << row.n_k << ": " << fmt_fixed(100.0 * row.acc_plain, 2)
          << " vs " << fmt_fixed(100.0 * row.acc_tempered, 2) << "\n";
  }
  if (!o.report.empty())
    out << "report written to " << o.report.string() << "\n";
  return 0;
}

// ------------------------------------------------------------- diagnose ---

namespace {

struct TrailingStats {
  double kl = 0.0, entropy = 0.0;
  std::size_t window = 0;
};

TrailingStats trailing_means(const std::vector<dino::MetricsRow>& rows,
                             std::size_t window) {
  TrailingStats t;
  t.window = std::min(window, rows.size());
  if (t.window == 0) return t;
  for (std::size_t i = rows.size() - t.window; i < rows.size(); ++i) {
    t.kl += rows[i].kl;
    t.entropy += rows[i].entropy;
  }
  t.kl /= static_cast<double>(t.window);
  t.entropy /= static_cast<double>(t.window);
  return t;
}

}  // namespace

int cmd_diagnose(const GlobalOpts& g, const DiagnoseOpts& o, std::ostream& out,
                 std::ostream&) {
  RunConfig cfg = effective_config(g);
  cfg.validate(true);

  if (!o.four_designs) {
    const auto trace = dino::parse_metrics_log(o.metrics);
    const dino::Verdict v = dino::collapse_classify(trace, cfg.proj_out);
    const TrailingStats t = trailing_means(trace, 5);
    out << "epochs " << trace.size() << ", trailing-" << t.window
        << " means: kl " << fmt_num(t.kl) << ", entropy " << fmt_num(t.entropy)
        << " (uniform would be " << fmt_num(std::log(double(cfg.proj_out)))
        << ")\n";
    out << "verdict: " << dino::verdict_name(v) << "\n";
    return 0;
  }

  struct Design {
    const char* name;
    const char* slug;
    bool equal_taus;   // removes sharpening
    bool freeze;       // removes centering
  };
  // Sharpening is the low teacher temperature; removing it sets tau_t = tau_s.
  // Centering is the EMA-centered teacher logit; removing it pins the center.
  const Design designs[] = {
      {"both", "both", false, false},
      {"only centering", "only_centering", true, false},
      {"only sharpening", "only_sharpening", false, true},
      {"neither", "neither", true, true},
  };

  struct Row {
    const Design* d;
    double loss;
    TrailingStats t;
    dino::Verdict v;
  };
  std::vector<Row> table;
  for (const Design& d : designs) {
    RunConfig dc = cfg;
    if (d.equal_taus) dc.tau_t = dc.tau_s;
    dc.freeze_center = d.freeze;
    dc.validate(true);
    out << "--- design: " << d.name << " ---\n";
    const auto hist =
        run_training(dc, o.manifest, o.out_dir / d.slug, false, out);
    table.push_back({&d, hist.back().loss, trailing_means(hist, 5),
                     dino::collapse_classify(hist, dc.proj_out)});
  }

  out << "\ndesign            final_loss  kl        entropy   verdict\n";
  for (const Row& r : table) {
    char line[160];
    std::snprintf(line, sizeof line, "%-17s %-11.4f %-9.4f %-9.4f %s\n",
                  r.d->name, r.loss, r.t.kl, r.t.entropy,
                  dino::verdict_name(r.v));
    out << line;
  }
  return 0;
}

// ------------------------------------------------------------ attention ---

namespace {

void write_ppm(const fs::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& rgb) {
  std::string s = "P6\n" + std::to_string(w) + " " + std::to_string(h) +
                  "\n255\n";
  s.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  io::write_file(path, s);
}

std::uint8_t to_byte(double v) {
  const long b = std::lround(255.0 * v);
  return static_cast<std::uint8_t>(std::clamp(b, 0L, 255L));
}

}  // namespace

int cmd_attention(const GlobalOpts& g, const AttentionOpts& o,
                  std::ostream& out, std::ostream&) {
  RunConfig cfg = effective_config(g);
  cfg.validate(true);
  if (o.keep_mass <= 0.0 || o.keep_mass > 1.0)
    throw ConfigError("keep_mass must be in (0, 1]");

  const tfm::TimeFrequencyMap map = tfm::load_tfm(o.tfm_file);
  if (map.h != cfg.target_size || map.w != cfg.target_size || map.c != 3)
    throw ShapeError("map is " + std::to_string(map.h) + "x" +
                     std::to_string(map.w) + "x" + std::to_string(map.c) +
                     ", the configured encoder expects " +
                     std::to_string(cfg.target_size) + "x" +
                     std::to_string(cfg.target_size) + "x3");

  dino::TrainState st = dino::init_state(make_setup(cfg, {}));
  if (!o.untrained) dino::load_state(o.checkpoint, st);

  const vit::AttentionMaps att =
      vit::extract_attention(st.t_enc, map, o.keep_mass);
  vit::save_attention(fs::path(o.out_prefix.string() + ".attn"), att);

  const std::size_t N = att.n_patches;
  std::vector<double> cam(N, 0.0);
  for (std::size_t h = 0; h < att.n_heads; ++h)
    for (std::size_t p = 0; p < N; ++p)
      cam[p] += att.cam[h * N + p] / static_cast<double>(att.n_heads);
  const double mx = *std::max_element(cam.begin(), cam.end());
  const double mn = *std::min_element(cam.begin(), cam.end());
  const std::size_t kept = static_cast<std::size_t>(
      std::count(att.tam.begin(), att.tam.end(), std::uint8_t{1}));

  // Nearest-neighbor upscale; heat ramps blue -> red over the patch grid.
  const std::size_t scale = std::max<std::size_t>(1, 256 / map.h);
  const std::size_t W = map.w * scale, H = map.h * scale;
  const std::size_t grid = map.w / cfg.patch_size;
  std::vector<std::uint8_t> cam_img(W * H * 3), tam_img(W * H * 3);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t si = i / scale, sj = j / scale;
      const std::size_t p =
          (si / cfg.patch_size) * grid + (sj / cfg.patch_size);
      const float* base = &map.pixels[(si * map.w + sj) * 3];
      const double v = mx > 0.0 ? cam[p] / mx : 0.0;
      const double heat[3] = {v, 0.25 * v, 1.0 - v};
      const double keep = att.tam[p] ? 1.0 : 0.2;
      for (std::size_t c = 0; c < 3; ++c) {
        cam_img[(i * W + j) * 3 + c] = to_byte(0.45 * base[c] + 0.55 * heat[c]);
        tam_img[(i * W + j) * 3 + c] = to_byte(keep * base[c]);
      }
    }
  }
  write_ppm(fs::path(o.out_prefix.string() + "_cam.ppm"), W, H, cam_img);
  write_ppm(fs::path(o.out_prefix.string() + "_tam.ppm"), W, H, tam_img);

  out << "attention: " << att.n_heads << " heads over " << N << " patches, "
      << kept << "/" << N << " retained at keep_mass " << fmt_num(o.keep_mass)
      << "\n";
  out << "class-attention max/min ratio: "
      << (mn > 0.0 ? fmt_num(mx / mn) : std::string("inf")) << "\n";
  out << "wrote " << o.out_prefix.string() << ".attn, _cam.ppm, _tam.ppm\n";
  return 0;
}

}  // namespace wtfd::cli
