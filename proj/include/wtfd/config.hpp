// Flat key = value run configuration shared by every CLI command, with
// cross-field validation and a byte-stable round-trip.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wtfd/dino.hpp"
#include "wtfd/projector.hpp"
#include "wtfd/tfm.hpp"
#include "wtfd/vit.hpp"

namespace wtfd::cli {

// Defaults are the desk preset: runnable end to end on a CPU in minutes.
// Paper-scale values go in a config file.
struct RunConfig {
  // synthesis
  std::size_t classes = 4;
  std::size_t n_per_class = 50;
  std::size_t duration = 1024;  // samples per signal
  double sample_rate = 12000.0;
  double noise_std = 0.1;
  double test_fraction = 0.2;
  double labeled_fraction = 0.01;
  // time-frequency maps
  std::size_t target_size = 32;
  std::size_t n_scales = 64;
  // encoder
  std::size_t patch_size = 8;
  std::size_t embed_dim = 48;
  std::size_t n_heads = 3;
  std::size_t head_dim = 16;
  std::size_t mlp_dim = 192;
  std::size_t depth = 4;
  // projector
  std::vector<std::size_t> proj_dims = {256, 256, 64};
  std::size_t proj_out = 64;
  // self-distillation
  double tau_t = 0.04;
  double tau_s = 0.1;
  double m0 = 0.996;
  double m_c = 0.9;
  double scale_split = 0.4;
  std::size_t n_local = 8;
  std::size_t batch = 64;
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 3;
  double lr_start = 1e-6;
  double lr_peak = 1.25e-4;
  double lr_floor = 1e-6;
  double weight_decay = 0.04;
  bool identical_init = false;
  bool freeze_center = false;
  // evaluation
  std::size_t n_neighbors = 5;
  double tau_k = 0.04;  // 0 disables the tempered vote
  // master seed; every random stream derives from it
  std::uint64_t seed = 0;

  void validate(bool allow_ablation = false) const;

  vit::ViTConfig vit() const;
  proj::ProjectorConfig projector() const;
  dino::DinoConfig dino() const;
  tfm::TfmConfig tfm() const;
  std::optional<double> knn_tau() const;
};

// `source` names the input in parse errors (file path or "<inline>").
RunConfig parse_config(const std::string& text, const std::string& source);
RunConfig load_config(const std::filesystem::path& path);

// Fixed key order, shortest round-trip numbers: format(parse(format(c)))
// equals format(c) byte for byte.
std::string format_config(const RunConfig& cfg);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace wtfd::cli
