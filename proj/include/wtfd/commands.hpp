// Subcommand implementations behind the wtfd binary. Each command takes the
// shared global options plus its own option struct and writes human-readable
// progress to `out`. Per-item failures (a bad manifest row, an unreadable
// signal) are reported to `err` and turn into a nonzero return; anything that
// invalidates the whole invocation throws an Error subclass instead.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "wtfd/config.hpp"
#include "wtfd/dino.hpp"
#include "wtfd/manifest.hpp"
#include "wtfd/tfm.hpp"

namespace wtfd::cli {

struct GlobalOpts {
  std::filesystem::path config_path;  // empty = built-in defaults
  std::optional<std::uint64_t> seed;  // overrides the config file seed
  std::size_t threads = 0;            // 0 = one per hardware thread
  bool force = false;
};

// Config file (or defaults) with the --seed override applied. Validation is
// left to each command so train can honour --ablation.
RunConfig effective_config(const GlobalOpts& g);

struct SynthOpts {
  std::filesystem::path out_dir;
  std::optional<std::size_t> classes;      // override config
  std::optional<std::size_t> n_per_class;  // override config
};
int cmd_synth(const GlobalOpts& g, const SynthOpts& o, std::ostream& out,
              std::ostream& err);

struct PreprocessOpts {
  std::filesystem::path manifest;
};
int cmd_preprocess(const GlobalOpts& g, const PreprocessOpts& o,
                   std::ostream& out, std::ostream& err);

struct TrainOpts {
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  bool resume = false;
  bool ablation = false;  // lifts the tau_t < tau_s gate
};
int cmd_train(const GlobalOpts& g, const TrainOpts& o, std::ostream& out,
              std::ostream& err);

struct EvalOpts {
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;  // unused with untrained = true
  std::filesystem::path report;      // JSON report destination
  std::vector<std::size_t> sweep;    // optional N_k sweep
  std::optional<std::size_t> n_k;    // overrides config n_neighbors
  bool untrained = false;            // evaluate a freshly initialised encoder
};
int cmd_eval(const GlobalOpts& g, const EvalOpts& o, std::ostream& out,
             std::ostream& err);

struct DiagnoseOpts {
  std::filesystem::path metrics;  // log to classify
  bool four_designs = false;
  std::filesystem::path manifest;  // four-designs training input
  std::filesystem::path out_dir;   // four-designs workspace
};
int cmd_diagnose(const GlobalOpts& g, const DiagnoseOpts& o, std::ostream& out,
                 std::ostream& err);

struct AttentionOpts {
  std::filesystem::path checkpoint;
  std::filesystem::path tfm_file;
  std::filesystem::path out_prefix;  // produces <prefix>.attn and two .ppm
  double keep_mass = 0.9;
  bool untrained = false;
};
int cmd_attention(const GlobalOpts& g, const AttentionOpts& o,
                  std::ostream& out, std::ostream& err);

// --- shared building blocks (used by diagnose --four-designs and tests) ---

struct SplitData {
  std::vector<tfm::TimeFrequencyMap> maps;
  std::vector<std::uint16_t> labels;
};

// Loads the preprocessed maps for every manifest row in `split`.
SplitData load_split(const std::filesystem::path& manifest, Split split);

// One full training run into out_dir: metrics.jsonl, per-epoch + latest +
// final checkpoints. cfg must already be validated.
std::vector<dino::MetricsRow> run_training(const RunConfig& cfg,
                                           const std::filesystem::path& manifest,
                                           const std::filesystem::path& out_dir,
                                           bool resume, std::ostream& out);

}  // namespace wtfd::cli
