// Self-distillation training: multi-crop augmentation, tempered softmax,
// centering, cross-entropy objective, EMA teacher, collapse diagnostics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wtfd/projector.hpp"
#include "wtfd/rng.hpp"
#include "wtfd/tensor.hpp"
#include "wtfd/tfm.hpp"
#include "wtfd/vit.hpp"

namespace wtfd::dino {

struct DinoConfig {
  double tau_t = 0.04;
  double tau_s = 0.1;
  double m0 = 0.996;  // teacher EMA start; cosine to 1 over training
  double m_c = 0.9;   // center EMA
  double scale_split = 0.4;
  std::size_t n_local = 8;
  std::size_t batch = 64;
  std::size_t epochs = 100;
  std::size_t warmup_epochs = 10;
  double lr_start = 1e-6;
  double lr_peak = 1.25e-4;
  double lr_floor = 1e-6;
  double weight_decay = 0.04;
  bool identical_init = false;  // teacher starts as a copy of the student
  bool freeze_center = false;   // ablation: c pinned at 0 (only sharpening)

  // tau_t >= tau_s is refused unless the ablation flag allows it.
  void validate(bool allow_ablation = false) const;
};

struct CropSet {
  std::vector<tfm::TimeFrequencyMap> globals;  // exactly 2
  std::vector<tfm::TimeFrequencyMap> locals;   // exactly n_local
};

// Crop (area fraction in the range for the view kind, aspect in [3/4, 4/3]),
// cubic resize back to input size, then blur / color jitter / solarize with
// the per-view probabilities. Deterministic given the rng state.
CropSet augment(const tfm::TimeFrequencyMap& x, const DinoConfig& cfg, Rng& rng);

// Augmentation primitives, exposed for direct testing.
struct CropRect {
  std::size_t top = 0, left = 0, h = 0, w = 0;
};
// Area fraction drawn from [lo, hi], aspect from [3/4, 4/3]; draws whose
// rounded dims leave the fraction range are rejected, and after bounded
// retries a minimal 2x2 crop at a random position is used.
CropRect draw_crop(Rng& rng, std::size_t img_h, std::size_t img_w, double lo,
                   double hi);
tfm::TimeFrequencyMap gaussian_blur(const tfm::TimeFrequencyMap& x, double sigma);
tfm::TimeFrequencyMap color_jitter(const tfm::TimeFrequencyMap& x,
                                   double brightness, double contrast,
                                   double saturation);
tfm::TimeFrequencyMap solarize(const tfm::TimeFrequencyMap& x);

// P = softmax(q / tau), numerically stabilized. tau <= 0 is a domain error.
std::vector<double> tempered_softmax(const std::vector<double>& logits,
                                     double tau);

// Returns logits - c (the c from before the update), then updates
// c <- m_c*c + (1-m_c)*batch_mean(logits) unless frozen. logits is a batch
// of B rows of length k.
std::vector<double> center_apply_and_update(const std::vector<double>& logits,
                                            std::size_t k,
                                            std::vector<double>& c, double m_c,
                                            bool frozen = false);

// student_probs: one distribution per view (globals first); teacher_probs:
// one per global view, index-aligned with the first student views. The loss
// sums -sum(P_t log P_s) over pairs with distinct views, averaged over the
// 2*(V-1) pairs. Distributions must sum to 1 within 1e-6.
double dino_loss(const std::vector<std::vector<double>>& student_probs,
                 const std::vector<std::vector<double>>& teacher_probs);

struct Diag {
  double target_entropy = 0.0;  // mean cross-entropy over pairs
  double kl = 0.0;              // mean KL(P_t || P_s) over pairs
  double entropy = 0.0;         // mean h(P_t) over pairs
};
Diag diagnostics(const std::vector<std::vector<double>>& student_probs,
                 const std::vector<std::vector<double>>& teacher_probs);

// theta_t <- m*theta_t + (1-m)*theta_s, elementwise over aligned parameter
// sets. m=1 and m=0 are bit-exact endpoints. Optimizer state is untouched.
void ema_update_teacher(ag::ParamSet<float>& teacher,
                        const ag::ParamSet<float>& student, float m);

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double lr = 0.0;
  double m = 0.0;
  double center_norm = 0.0;
};
// One JSON object, fixed key order, shortest round-trip number text.
std::string metrics_json(const MetricsRow& row);
MetricsRow parse_metrics_line(const std::string& line, std::size_t line_no);
std::vector<MetricsRow> parse_metrics_log(const std::filesystem::path& path);

enum class Verdict { none, over_uniformity, over_alignment, indeterminate };
const char* verdict_name(Verdict v);

// Trailing-window means: kl >= eps_kl -> none; otherwise entropy above
// 0.9*ln(K) -> over_uniformity, below 0.1*ln(K) -> over_alignment, and the
// band between is reported as indeterminate.
Verdict collapse_classify(const std::vector<MetricsRow>& trace,
                          std::size_t k_dim, double eps_kl = 0.01,
                          std::size_t window = 5);

struct TrainSetup {
  vit::ViTConfig vit_cfg;
  proj::ProjectorConfig proj_cfg;
  DinoConfig cfg;
  std::size_t input_size = 32;
  std::uint64_t seed = 0;
  // When non-empty, a diagnostic snapshot is written here before a NaN abort.
  std::filesystem::path snapshot_path;
};

struct TrainState {
  ag::ParamSet<float> student, teacher;
  vit::Encoder<float> s_enc, t_enc;
  proj::Projector<float> s_proj, t_proj;
  std::vector<double> center;  // length K; f32-quantized at epoch boundaries
  std::size_t next_epoch = 0;
  std::size_t global_step = 0;
  std::size_t adam_steps = 0;
};

TrainState init_state(const TrainSetup& setup);
void save_state(const std::filesystem::path& path, const TrainState& st);
// Restores into a state freshly built by init_state with the same setup;
// mismatched shapes raise ShapeError, missing tensors ParseError.
void load_state(const std::filesystem::path& path, TrainState& st);

using EpochSink = std::function<void(const MetricsRow&)>;

// Runs epochs [st.next_epoch, cfg.epochs), calling the sink once per epoch.
// Aborts with DomainError on a non-finite loss after saving the snapshot.
void train(TrainState& st, const TrainSetup& setup,
           const std::vector<tfm::TimeFrequencyMap>& data,
           const EpochSink& sink);

// Schedules, exposed for tests: epoch learning rate and per-step momentum.
double lr_at(const DinoConfig& cfg, std::size_t epoch);
double m_at(const DinoConfig& cfg, std::size_t step, std::size_t total_steps);

}  // namespace wtfd::dino
