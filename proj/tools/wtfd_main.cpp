// wtfd: synthetic vibration signals -> Morlet time-frequency maps ->
// self-distilled ViT features -> tempered-KNN diagnosis, plus collapse
// diagnostics and attention rendering. All subcommands are deterministic
// under a fixed --seed.
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "wtfd/commands.hpp"
#include "wtfd/errors.hpp"

int main(int argc, char** argv) {
  using namespace wtfd;

  CLI::App app{"limited-label bearing fault diagnosis toolkit"};
  app.require_subcommand(1);

  cli::GlobalOpts g;
  std::string config_path;
  std::uint64_t seed = 0;
  auto* seed_opt =
      app.add_option("--seed", seed, "override the configured RNG seed");
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--threads", g.threads, "worker threads (0 = one per core)");
  app.add_flag("--force", g.force, "overwrite a non-empty output directory");

  cli::SynthOpts synth;
  std::size_t classes = 0, n_per_class = 0;
  auto* s_app =
      app.add_subcommand("synth", "generate a synthetic fault dataset");
  s_app->fallthrough();
  s_app->add_option("--out", synth.out_dir, "dataset directory")->required();
  auto* cls_opt =
      s_app->add_option("--classes", classes, "override the class count");
  auto* npc_opt = s_app->add_option("--n-per-class", n_per_class,
                                    "override samples per class");

  cli::PreprocessOpts pre;
  auto* p_app = app.add_subcommand(
      "preprocess", "compute time-frequency maps for every manifest row");
  p_app->fallthrough();
  p_app->add_option("--manifest", pre.manifest, "dataset manifest")
      ->required();

  cli::TrainOpts tr;
  auto* t_app =
      app.add_subcommand("train", "self-distillation training run");
  t_app->fallthrough();
  t_app->add_option("--manifest", tr.manifest, "dataset manifest")
      ->required();
  t_app->add_option("--out", tr.out_dir, "run directory for checkpoints")
      ->required();
  t_app->add_flag("--resume", tr.resume, "continue from latest.ckpt");
  t_app->add_flag("--ablation", tr.ablation,
                  "permit tau_t >= tau_s (collapse-study designs)");

  cli::EvalOpts ev;
  std::size_t n_k = 0;
  auto* e_app = app.add_subcommand(
      "eval", "tempered-KNN evaluation over frozen teacher features");
  e_app->fallthrough();
  e_app->add_option("--manifest", ev.manifest, "dataset manifest")
      ->required();
  e_app->add_option("--checkpoint", ev.checkpoint, "training checkpoint");
  e_app->add_option("--report", ev.report, "JSON report path");
  e_app->add_option("--sweep", ev.sweep, "neighbor counts to sweep")
      ->delimiter(',');
  auto* nk_opt =
      e_app->add_option("--n-k", n_k, "override the neighbor count");
  e_app->add_flag("--untrained", ev.untrained,
                  "evaluate a freshly initialised encoder");

  cli::DiagnoseOpts di;
  auto* d_app = app.add_subcommand(
      "diagnose", "classify a training run for mode collapse");
  d_app->fallthrough();
  d_app->add_option("--metrics", di.metrics, "metrics.jsonl to classify");
  d_app->add_flag("--four-designs", di.four_designs,
                  "train and compare the four centering/sharpening designs");
  d_app->add_option("--manifest", di.manifest,
                    "dataset manifest (four-designs)");
  d_app->add_option("--out", di.out_dir, "workspace (four-designs)");

  cli::AttentionOpts at;
  auto* a_app = app.add_subcommand(
      "attention", "export attention maps and overlays for one map");
  a_app->fallthrough();
  a_app->add_option("--checkpoint", at.checkpoint, "training checkpoint");
  a_app->add_option("--tfm", at.tfm_file, "preprocessed map file")
      ->required();
  a_app->add_option("--out-prefix", at.out_prefix, "output path prefix")
      ->required();
  a_app->add_option("--keep-mass", at.keep_mass,
                    "attention mass the token-area map must retain");
  a_app->add_flag("--untrained", at.untrained,
                  "render a freshly initialised encoder");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) g.config_path = config_path;
    if (seed_opt->count()) g.seed = seed;
    if (cls_opt->count()) synth.classes = classes;
    if (npc_opt->count()) synth.n_per_class = n_per_class;
    if (nk_opt->count()) ev.n_k = n_k;

    if (s_app->parsed())
      return cli::cmd_synth(g, synth, std::cout, std::cerr);
    if (p_app->parsed())
      return cli::cmd_preprocess(g, pre, std::cout, std::cerr);
    if (t_app->parsed()) return cli::cmd_train(g, tr, std::cout, std::cerr);
    if (e_app->parsed()) {
      if (!ev.untrained && ev.checkpoint.empty())
        throw ConfigError("eval needs --checkpoint (or --untrained)");
      return cli::cmd_eval(g, ev, std::cout, std::cerr);
    }
    if (d_app->parsed()) {
      if (di.four_designs) {
        if (di.manifest.empty() || di.out_dir.empty())
          throw ConfigError("--four-designs needs --manifest and --out");
      } else if (di.metrics.empty()) {
        throw ConfigError("diagnose needs --metrics (or --four-designs)");
      }
      return cli::cmd_diagnose(g, di, std::cout, std::cerr);
    }
    if (a_app->parsed()) {
      if (!at.untrained && at.checkpoint.empty())
        throw ConfigError("attention needs --checkpoint (or --untrained)");
      return cli::cmd_attention(g, at, std::cout, std::cerr);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
