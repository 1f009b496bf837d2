// Command-line front end: synth, train, detect, eval, gradcheck.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mscd/baselines.hpp"
#include "mscd/detector.hpp"
#include "mscd/eval.hpp"
#include "mscd/gradcheck.hpp"
#include "mscd/parallel.hpp"
#include "mscd/synth.hpp"
#include "mscd/trainer.hpp"

namespace fs = std::filesystem;
using namespace mscd;

namespace {

struct TrainArgs {
  std::string config;
  std::string x1, z2, out, trace;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool sar_db = false;
  bool quiet = false;
};

struct DetectArgs {
  std::string checkpoint;
  std::string method = "deep";
  std::string x1, z2, out;
  std::string threshold = "otsu";
  int window = 3;
  bool sar_db = false;
};

struct EvalArgs {
  std::string map, ref, fcc, method;
};

struct SynthArgs {
  std::vector<long> dims{256, 256};
  SynthSpec spec;
  std::string out = ".";
};

struct GradcheckArgs {
  std::uint64_t seed = 7;
  int draws = 20;
};

/// Writes through a sibling temporary file so a failed run leaves nothing behind.
template <typename Writer>
void write_atomically(const fs::path& path, Writer&& writer) {
  const fs::path tmp = path.string() + ".tmp";
  try {
    writer(tmp);
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

int run_train(const TrainArgs& args) {
  TrainConfig cfg;
  if (!args.config.empty()) cfg = load_train_config(args.config);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();

  const auto pair = prepare_pair(load_raster(args.x1), load_raster(args.z2), args.sar_db);
  Rng init = Rng::derive(cfg.seed, 0);
  SiameseCDModel model = build_model(cfg.arch(), init);
  Trainer trainer(model, pair.optical, pair.sar, cfg);
  if (!args.quiet) {
    std::clog << "training on " << trainer.anchors().size() << " patches, " << model.parameter_count()
              << " parameters" << std::endl;
  }
  const TrainResult result = trainer.run({}, args.quiet ? nullptr : &std::clog);

  const fs::path trace = args.trace.empty() ? fs::path(args.out + ".trace.csv") : fs::path(args.trace);
  write_atomically(args.out, [&](const fs::path& p) { save_checkpoint(model, p); });
  write_atomically(trace, [&](const fs::path& p) { write_trace_csv(result.trace, p); });
  return 0;
}

fs::path with_prefix(const std::string& prefix, const std::string& name) {
  if (!prefix.empty() && fs::is_directory(prefix)) return fs::path(prefix) / name;
  return fs::path(prefix + name);
}

int run_detect(const DetectArgs& args) {
  const auto pair = prepare_pair(load_raster(args.x1), load_raster(args.z2), args.sar_db);
  MagnitudeImage g;
  if (args.method == "deep") {
    if (args.checkpoint.empty()) throw Error("--method deep needs --checkpoint");
    SiameseCDModel model = load_checkpoint(args.checkpoint);
    g = feature_magnitude(model, pair.optical, pair.sar);
  } else if (args.method == "cva") {
    g = cva(pair.optical, pair.sar);
  } else if (args.method == "rcva") {
    g = rcva(pair.optical, pair.sar, args.window);
  } else {
    throw Error("unknown method '" + args.method + "'");
  }

  float threshold = 0.0f;
  if (args.threshold == "otsu") {
    threshold = otsu_threshold(g);
  } else if (args.threshold == "isodata") {
    threshold = isodata_threshold(g);
  } else {
    std::size_t used = 0;
    try {
      threshold = std::stof(args.threshold, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != args.threshold.size()) throw Error("--threshold must be otsu, isodata or a number");
  }
  const ChangeMap map = apply_threshold(g, threshold);

  save_raster(g, with_prefix(args.out, "G.rf32"));
  save_raster(map, with_prefix(args.out, "map.pgm"));
  std::cout << std::setprecision(9) << threshold << std::endl;
  return 0;
}

int run_eval(const EvalArgs& args) {
  const Raster pred = load_raster(args.map);
  const Raster ref = load_raster(args.ref);
  const EvalReport report = evaluate(pred, ref);
  if (!args.fcc.empty()) save_raster(fcc_map(pred, ref), args.fcc);
  std::cout << format_metrics_row(report, args.method) << std::endl;
  return 0;
}

int run_synth(SynthArgs args) {
  if (args.dims.size() != 2) throw Error("--dims expects ROWS COLS");
  args.spec.rows = args.dims[0];
  args.spec.cols = args.dims[1];
  const SynthScene scene = generate_scene(args.spec);
  const fs::path dir(args.out);
  fs::create_directories(dir);
  save_raster(scene.optical, dir / "X1.rf32");
  save_raster(scene.sar, dir / "Z2.rf32");
  save_raster(scene.reference, dir / "ref.pgm");
  std::ofstream(dir / "synth.cfg") << args.spec.to_text();
  return 0;
}

int run_gradcheck(const GradcheckArgs& args) {
  GradcheckOptions options;
  options.seed = args.seed;
  options.draws = args.draws;
  const auto report = run_gradcheck(options);
  std::cout << report.summary() << report.cases.size() << " checks in " << report.seconds << " s: "
            << (report.passed() ? "PASS" : "FAIL") << std::endl;
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised optical/SAR change detection"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the two-branch network on one scene pair");
  train_cmd->add_option("--config", train_args.config, "key = value training config");
  train_cmd->add_option("--x1", train_args.x1, "Pre-change optical raster")->required();
  train_cmd->add_option("--z2", train_args.z2, "Post-change SAR raster")->required();
  train_cmd->add_option("--out", train_args.out, "Checkpoint path")->required();
  train_cmd->add_option("--trace", train_args.trace, "Loss trace CSV (default: <out>.trace.csv)");
  train_cmd->add_option("--seed", train_args.seed, "Overrides the config seed");
  train_cmd->add_option("--set", train_args.overrides, "Config override KEY=VALUE (repeatable)");
  train_cmd->add_flag("--sar-db", train_args.sar_db, "Convert SAR to decibels before standardizing");
  train_cmd->add_flag("--quiet", train_args.quiet, "No progress output");

  DetectArgs detect_args;
  auto* detect_cmd = app.add_subcommand("detect", "Compute the change magnitude and binary map");
  detect_cmd->add_option("--checkpoint", detect_args.checkpoint, "Trained checkpoint (deep method)");
  detect_cmd->add_option("--method", detect_args.method, "deep|cva|rcva")
      ->check(CLI::IsMember({"deep", "cva", "rcva"}));
  detect_cmd->add_option("--x1", detect_args.x1, "Pre-change optical raster")->required();
  detect_cmd->add_option("--z2", detect_args.z2, "Post-change SAR raster")->required();
  detect_cmd->add_option("--out", detect_args.out, "Output prefix (or directory)")->required();
  detect_cmd->add_option("--threshold", detect_args.threshold, "otsu|isodata|<value>");
  detect_cmd->add_option("--window", detect_args.window, "RCVA window (odd)");
  detect_cmd->add_flag("--sar-db", detect_args.sar_db, "Convert SAR to decibels before standardizing");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Sensitivity/specificity against a reference map");
  eval_cmd->add_option("--map", eval_args.map, "Predicted change map")->required();
  eval_cmd->add_option("--ref", eval_args.ref, "Reference change map")->required();
  eval_cmd->add_option("--fcc", eval_args.fcc, "False-color comparison output (.ppm)");
  eval_cmd->add_option("--method", eval_args.method, "Method name for the CSV row");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic optical/SAR scene pair");
  synth_cmd->add_option("--dims", synth_args.dims, "ROWS COLS")->expected(2);
  synth_cmd->add_option("--classes", synth_args.spec.n_classes, "Landcover classes");
  synth_cmd->add_option("--change-fraction", synth_args.spec.change_fraction, "Target changed share");
  synth_cmd->add_option("--looks", synth_args.spec.speckle_looks, "SAR speckle looks");
  synth_cmd->add_option("--sites", synth_args.spec.n_sites, "Voronoi sites (0 = auto)");
  synth_cmd->add_option("--seed", synth_args.spec.seed, "Random seed");
  synth_cmd->add_option("--out", synth_args.out, "Output directory");

  GradcheckArgs gradcheck_args;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "Base seed");
  gradcheck_cmd->add_option("--draws", gradcheck_args.draws, "Random draws per operator");

  CLI11_PARSE(app, argc, argv);

  try {
    configure_workers_from_env();
    if (*train_cmd) return run_train(train_args);
    if (*detect_cmd) return run_detect(detect_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*synth_cmd) return run_synth(synth_args);
    if (*gradcheck_cmd) return run_gradcheck(gradcheck_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
