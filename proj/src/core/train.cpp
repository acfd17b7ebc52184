#include <algorithm>
#include <cmath>
#include <numeric>

#include "wtfd/checkpoint.hpp"
#include "wtfd/dino.hpp"
#include "wtfd/errors.hpp"

namespace wtfd::dino {

TrainState init_state(const TrainSetup& setup) {
  setup.vit_cfg.validate();
  setup.proj_cfg.validate();
  setup.cfg.validate(true);
  TrainState st;
  {
    Rng r = Rng::stream(setup.seed, "init.student");
    st.s_enc = vit::make_encoder(st.student, setup.vit_cfg, setup.input_size,
                                 setup.input_size, 3, "enc.", r);
    st.s_proj = proj::make_projector(st.student, setup.proj_cfg,
                                     setup.vit_cfg.embed_dim, "proj.", r);
  }
  {
    Rng r = Rng::stream(
        setup.seed, setup.cfg.identical_init ? "init.student" : "init.teacher");
    st.t_enc = vit::make_encoder(st.teacher, setup.vit_cfg, setup.input_size,
                                 setup.input_size, 3, "enc.", r);
    st.t_proj = proj::make_projector(st.teacher, setup.proj_cfg,
                                     setup.vit_cfg.embed_dim, "proj.", r);
  }
  st.center.assign(setup.proj_cfg.out_dim, 0.0);
  return st;
}

void save_state(const std::filesystem::path& path, const TrainState& st) {
  std::vector<ckpt::Entry> entries;
  ckpt::append_params(entries, st.student, "student.");
  ckpt::append_params(entries, st.teacher, "teacher.");
  for (std::size_t i = 0; i < st.student.size(); ++i) {
    const auto& p = st.student.at(i);
    if (p.m.empty()) continue;
    entries.push_back({"adam.m.student." + p.name, p.shape, p.m});
    entries.push_back({"adam.v.student." + p.name, p.shape, p.v});
  }
  std::vector<float> center(st.center.size());
  for (std::size_t i = 0; i < center.size(); ++i) center[i] = float(st.center[i]);
  entries.push_back({"state.center", {st.center.size()}, std::move(center)});
  // Counters stay well below 2^24, so the f32 payload is exact.
  entries.push_back({"state.counters",
                     {3},
                     {float(st.next_epoch), float(st.global_step),
                      float(st.adam_steps)}});
  ckpt::save(path, entries);
}

void load_state(const std::filesystem::path& path, TrainState& st) {
  auto entries = ckpt::load(path);
  ckpt::restore_params(entries, st.student, "student.");
  ckpt::restore_params(entries, st.teacher, "teacher.");
  for (std::size_t i = 0; i < st.student.size(); ++i) {
    auto& p = st.student.at(i);
    const auto* em = ckpt::find(entries, "adam.m.student." + p.name);
    const auto* ev = ckpt::find(entries, "adam.v.student." + p.name);
    if (!em != !ev)
      throw ParseError("checkpoint: half of the optimizer state for " + p.name);
    if (!em) continue;
    if (em->data.size() != p.numel() || ev->data.size() != p.numel())
      throw ShapeError("checkpoint: optimizer state size mismatch for " +
                       p.name);
    p.m = em->data;
    p.v = ev->data;
  }
  const auto* ec = ckpt::find(entries, "state.center");
  if (!ec) throw ParseError("checkpoint: missing state.center");
  if (ec->data.size() != st.center.size())
    throw ShapeError("checkpoint: center length " +
                     std::to_string(ec->data.size()) + ", expected " +
                     std::to_string(st.center.size()));
  for (std::size_t i = 0; i < st.center.size(); ++i)
    st.center[i] = double(ec->data[i]);
  const auto* ek = ckpt::find(entries, "state.counters");
  if (!ek || ek->data.size() != 3)
    throw ParseError("checkpoint: missing state.counters");
  st.next_epoch = std::size_t(ek->data[0]);
  st.global_step = std::size_t(ek->data[1]);
  st.adam_steps = std::size_t(ek->data[2]);
}

void train(TrainState& st, const TrainSetup& setup,
           const std::vector<tfm::TimeFrequencyMap>& data,
           const EpochSink& sink) {
  const DinoConfig& cfg = setup.cfg;
  cfg.validate(true);
  if (data.empty()) throw ContractError("train: no samples");
  const std::size_t size = setup.input_size;
  for (const auto& mp : data)
    if (mp.h != size || mp.w != size || mp.c != 3)
      throw ShapeError("train: sample is " + std::to_string(mp.h) + "x" +
                       std::to_string(mp.w) + "x" + std::to_string(mp.c) +
                       ", expected " + std::to_string(size) + "x" +
                       std::to_string(size) + "x3");

  const std::size_t n = data.size();
  const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  const std::size_t k = setup.proj_cfg.out_dim;
  const std::size_t n_views = 2 + cfg.n_local;
  const std::size_t p = setup.vit_cfg.patch_size;
  const std::size_t n_patches = st.s_enc.n;
  const std::size_t row_len = p * p * 3;
  const double pairs = double(2 * (n_views - 1));

  for (std::size_t epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
      Rng r = Rng::stream(setup.seed, "order", epoch);
      r.shuffle(order.begin(), order.end());
    }
    const double lr = lr_at(cfg, epoch);
    double ep_loss = 0.0, ep_kl = 0.0, ep_h = 0.0, last_m = cfg.m0;

    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t b = std::min(cfg.batch, n - start);
      const double m = m_at(cfg, st.global_step, total_steps);
      last_m = m;

      std::vector<CropSet> crops(b);
      for (std::size_t i = 0; i < b; ++i) {
        Rng r = Rng::stream(setup.seed, "augment", epoch, start + i);
        crops[i] = augment(data[order[start + i]], cfg, r);
      }

      // Teacher forward, globals only, view-major rows.
      std::vector<std::vector<double>> pt(2);
      {
        std::vector<float> rows(2 * b * n_patches * row_len);
        for (std::size_t t = 0; t < 2; ++t)
          for (std::size_t i = 0; i < b; ++i) {
            auto pr = vit::patch_rows(crops[i].globals[t], p);
            std::copy(pr.begin(), pr.end(),
                      rows.begin() +
                          std::ptrdiff_t((t * b + i) * n_patches * row_len));
          }
        ag::Graph<float> g;
        auto patches = g.input({2 * b, n_patches, row_len}, std::move(rows));
        auto y = vit::encode_batch(g, st.t_enc, patches);
        auto logits = proj::project(g, st.t_proj, y);
        const auto& lv = logits.val();
        std::vector<double> raw(lv.begin(), lv.end());
        auto centered =
            center_apply_and_update(raw, k, st.center, cfg.m_c, cfg.freeze_center);
        for (std::size_t t = 0; t < 2; ++t) {
          pt[t].resize(b * k);
          for (std::size_t i = 0; i < b; ++i) {
            std::vector<double> row(centered.begin() +
                                        std::ptrdiff_t((t * b + i) * k),
                                    centered.begin() +
                                        std::ptrdiff_t((t * b + i + 1) * k));
            auto prob = tempered_softmax(row, cfg.tau_t);
            std::copy(prob.begin(), prob.end(),
                      pt[t].begin() + std::ptrdiff_t(i * k));
          }
        }
      }

      // Student forward on all views, then the paired cross-entropy.
      ag::Graph<float> g;
      {
        std::vector<float> rows(n_views * b * n_patches * row_len);
        for (std::size_t v = 0; v < n_views; ++v)
          for (std::size_t i = 0; i < b; ++i) {
            const auto& crop =
                v < 2 ? crops[i].globals[v] : crops[i].locals[v - 2];
            auto pr = vit::patch_rows(crop, p);
            std::copy(pr.begin(), pr.end(),
                      rows.begin() +
                          std::ptrdiff_t((v * b + i) * n_patches * row_len));
          }
        auto patches = g.input({n_views * b, n_patches, row_len}, std::move(rows));
        auto y = vit::encode_batch(g, st.s_enc, patches);
        auto logits = proj::project(g, st.s_proj, y);

        std::vector<ag::Var<float>> sm(n_views), lg(n_views);
        for (std::size_t v = 0; v < n_views; ++v) {
          auto view = g.slice(logits, 0, v * b, b);
          sm[v] = g.softmax(g.scale(view, float(1.0 / cfg.tau_s)), 1);
          lg[v] = g.log(sm[v]);
        }

        ag::Var<float> acc;
        bool first = true;
        std::vector<ag::Var<float>> pt_in(2);
        for (std::size_t t = 0; t < 2; ++t) {
          std::vector<float> ptf(pt[t].begin(), pt[t].end());
          pt_in[t] = g.input({b, k}, std::move(ptf));
        }
        for (std::size_t t = 0; t < 2; ++t)
          for (std::size_t v = 0; v < n_views; ++v) {
            if (v == t) continue;
            auto term = g.reduce_sum(g.mul(lg[v], pt_in[t]));
            acc = first ? term : g.add(acc, term);
            first = false;
          }
        auto loss = g.scale(acc, float(-1.0 / (pairs * double(b))));

        const double loss_val = double(loss.val()[0]);
        if (!std::isfinite(loss_val)) {
          if (!setup.snapshot_path.empty()) save_state(setup.snapshot_path, st);
          throw DomainError("train: non-finite loss at epoch " +
                            std::to_string(epoch) + " step " +
                            std::to_string(st.global_step));
        }

        g.backward(loss);
        adam_step(st.student, ++st.adam_steps, float(lr), 0.9f, 0.999f, 1e-8f,
                  float(cfg.weight_decay));
        st.student.zero_grad();
        ema_update_teacher(st.teacher, st.student, float(m));

        ep_loss += loss_val * double(b);
        for (std::size_t i = 0; i < b; ++i) {
          std::vector<std::vector<double>> sp(n_views), tp(2);
          for (std::size_t v = 0; v < n_views; ++v) {
            const auto& sv = sm[v].val();
            sp[v].assign(sv.begin() + std::ptrdiff_t(i * k),
                         sv.begin() + std::ptrdiff_t((i + 1) * k));
            // f32 softmax rows can miss the exact-sum contract; renormalize.
            double sum = std::accumulate(sp[v].begin(), sp[v].end(), 0.0);
            for (double& e : sp[v]) e /= sum;
          }
          for (std::size_t t = 0; t < 2; ++t)
            tp[t].assign(pt[t].begin() + std::ptrdiff_t(i * k),
                         pt[t].begin() + std::ptrdiff_t((i + 1) * k));
          auto d = diagnostics(sp, tp);
          ep_kl += d.kl;
          ep_h += d.entropy;
        }
      }
      ++st.global_step;
    }

    MetricsRow row;
    row.epoch = epoch;
    row.step = st.global_step;
    row.loss = ep_loss / double(n);
    row.kl = ep_kl / double(n);
    row.entropy = ep_h / double(n);
    row.lr = lr;
    row.m = last_m;
    double sq = 0.0;
    for (double cv : st.center) sq += cv * cv;
    row.center_norm = std::sqrt(sq);

    // Quantize after the metrics are taken so a save/load resume replays the
    // next epoch bit-identically.
    for (double& cv : st.center) cv = double(float(cv));
    st.next_epoch = epoch + 1;
    if (sink) sink(row);
  }
}

}  // namespace wtfd::dino
