// rebarnet command-line tool: synthetic B-scan generation, window dataset
// construction, training, evaluation, sweeps, and rebar detection.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rebarnet/checkpoint.hpp"
#include "rebarnet/detector.hpp"
#include "rebarnet/errors.hpp"
#include "rebarnet/gprsynth.hpp"
#include "rebarnet/gradcheck.hpp"
#include "rebarnet/netdef.hpp"
#include "rebarnet/rng.hpp"
#include "rebarnet/trainer.hpp"
#include "rebarnet/windowing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rebarnet;

namespace {

// ---- shared option plumbing -------------------------------------------

struct SizeOpt {
  int w = 0, h = 0;
};

// "WxH", e.g. "200x80".
SizeOpt parse_size(const std::string& text, const char* what) {
  SizeOpt s;
  const auto x = text.find('x');
  try {
    if (x == std::string::npos || x == 0 || x + 1 >= text.size())
      throw std::invalid_argument("no x");
    s.w = std::stoi(text.substr(0, x));
    s.h = std::stoi(text.substr(x + 1));
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + " must look like WxH, got '" +
                      text + "'");
  }
  if (s.w <= 0 || s.h <= 0)
    throw ConfigError(std::string(what) + " must be positive, got '" + text +
                      "'");
  return s;
}

void require_preset_or_override(const SizeOpt& win, bool allow_custom) {
  if (is_preset_window(win.w, win.h) || allow_custom) return;
  std::string presets;
  for (const auto& [w, h] : kWindowPresets) {
    if (!presets.empty()) presets += ", ";
    presets += std::to_string(w) + "x" + std::to_string(h);
  }
  throw ConfigError("window " + std::to_string(win.w) + "x" +
                    std::to_string(win.h) + " is not a preset (" + presets +
                    "); pass --allow-custom-window to use it anyway");
}

void write_run_manifest(const std::string& dir, const std::string& command,
                        const json& params) {
  fs::create_directories(dir);
  json m;
  m["tool"] = "rebarnet";
  m["version"] = "0.1.0";
  m["command"] = command;
  m["params"] = params;
  const fs::path path = fs::path(dir) / "run_manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << m.dump(2) << '\n';
  if (!out) throw IoError("short write: " + path.string());
}

void print_histogram(const Dataset& ds) {
  const std::vector<std::size_t> hist = class_histogram(ds);
  std::printf("samples: %zu (%dx%d input)\n", ds.count(), ds.input_w,
              ds.input_h);
  for (int c = 0; c < kNumClasses; ++c)
    std::printf("  %-5s %zu\n", window_label_name(c),
                hist[static_cast<std::size_t>(c)]);
}

void print_eval(const EvalResult& ev) {
  std::printf("accuracy: %.4f (%zu/%zu)\n", ev.accuracy, ev.correct,
              ev.total);
  std::printf("%-6s %9s %9s\n", "class", "precision", "recall");
  for (int c = 0; c < kNumClasses; ++c)
    std::printf("%-6s %9.4f %9.4f\n", window_label_name(c),
                ev.precision[static_cast<std::size_t>(c)],
                ev.recall[static_cast<std::size_t>(c)]);
  std::printf("confusion (rows=true, cols=pred): Left Peak Right Other\n");
  for (std::size_t t = 0; t < ev.confusion.size(); ++t) {
    std::printf("  %-5s", window_label_name(static_cast<int>(t)));
    for (std::size_t p = 0; p < ev.confusion[t].size(); ++p)
      std::printf(" %6zu", ev.confusion[t][p]);
    std::printf("\n");
  }
}

// ---- subcommand option blocks ------------------------------------------

struct SynthOpts {
  std::string out;
  int count = 48;
  std::string element = "mixed";
  std::uint64_t seed = 1;
  double noise = 0.02;
  bool no_direct_wave = false;
};

struct DatasetOpts {
  std::string images;
  std::string out;
  std::string window = "200x80";
  std::string stride;  // empty = half window
  std::string input = "28x28";
  bool augment = false;
  bool allow_custom = false;
  double peak_band = 0.4;
  double proximity = 1.0;
};

struct TrainOpts {
  std::string data;
  std::string net = "tranet";
  std::string out = ".";
  int epochs = 30;
  int batch = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay_factor = 1.0;
  int lr_decay_every = 0;
  double train_frac = 0.8;
  std::uint64_t seed = 1;
  bool quiet = false;
};

struct EvalOpts {
  std::string data;
  std::string checkpoint;
  int batch = 64;
};

struct SweepOpts {
  std::vector<std::string> nets = {"tranet"};
  std::vector<std::string> windows = {"all"};
  std::vector<std::string> corpora = {"mixed"};
  std::vector<std::uint64_t> seeds = {1};
  int images_per_corpus = 12;
  int epochs = 12;
  double noise = 0.02;
  double lr = 0.01;
  int batch = 32;
  std::string out;
  bool allow_custom = false;
  bool elements_csv = false;
  bool deterministic = true;
  bool quiet = false;
};

struct DetectOpts {
  std::string checkpoint;
  std::string image;
  std::string manifest;
  std::string window = "200x80";
  std::string stride;
  std::string out;
  bool oracle = false;
  bool allow_custom = false;
};

struct GradcheckOpts {
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

// ---- subcommand bodies ---------------------------------------------------

int run_synth(const SynthOpts& o) {
  if (o.count < 0) throw ConfigError("--count must be non-negative");
  if (o.noise < 0) throw ConfigError("--noise must be non-negative");
  if (o.element != "mixed") element_kind_from_name(o.element);  // validates

  write_run_manifest(o.out, "synth",
                     json{{"out", o.out},
                          {"count", o.count},
                          {"element", o.element},
                          {"seed", o.seed},
                          {"noise", o.noise},
                          {"direct_wave", !o.no_direct_wave}});

  const std::vector<ElementKind> cycle = {ElementKind::Column,
                                          ElementKind::Wall, ElementKind::Slab};
  for (int i = 0; i < o.count; ++i) {
    const ElementKind kind =
        o.element == "mixed"
            ? cycle[static_cast<std::size_t>(i) % cycle.size()]
            : element_kind_from_name(o.element);
    SceneSpec spec = preset_scene(
        kind, derive_seed(o.seed, "corpus", static_cast<std::uint64_t>(i)));
    spec.noise_sigma = o.noise;
    spec.direct_wave = !o.no_direct_wave;
    char stem[64];
    std::snprintf(stem, sizeof(stem), "scene_%s_%04d",
                  element_kind_name(kind), i);
    save_scene(spec, o.out, stem);
  }
  std::printf("wrote %d scene(s) to %s\n", o.count, o.out.c_str());
  return 0;
}

int run_dataset(const DatasetOpts& o) {
  const SizeOpt win = parse_size(o.window, "--window");
  require_preset_or_override(win, o.allow_custom);
  const SizeOpt stride = o.stride.empty()
                             ? SizeOpt{std::max(1, win.w / 2),
                                       std::max(1, win.h / 2)}
                             : parse_size(o.stride, "--stride");
  const SizeOpt input = parse_size(o.input, "--input");

  write_run_manifest(o.out, "dataset",
                     json{{"images", o.images},
                          {"out", o.out},
                          {"window", {win.w, win.h}},
                          {"stride", {stride.w, stride.h}},
                          {"input", {input.w, input.h}},
                          {"augment", o.augment},
                          {"peak_band", o.peak_band},
                          {"proximity_widths", o.proximity}});

  const std::vector<std::string> manifests = find_scene_manifests(o.images);
  if (manifests.empty())
    throw DataError("no scene manifests (*.json) under " + o.images);
  LabelGeometry geom;
  geom.peak_band = o.peak_band;
  geom.proximity_widths = o.proximity;
  const Dataset ds =
      build_dataset(manifests, win.w, win.h, stride.w, stride.h, input.h,
                    input.w, o.augment, geom);
  save_dataset(ds, o.out);
  print_histogram(ds);
  std::printf("wrote dataset to %s\n", o.out.c_str());
  return 0;
}

int run_train(const TrainOpts& o) {
  const Dataset ds = load_dataset(o.data);
  const NetChoice choice = parse_net_name(o.net);
  const NetworkSpec spec = build_net(choice, ds.input_h, ds.input_w);

  TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.lr_decay_factor = o.lr_decay_factor;
  cfg.lr_decay_every = o.lr_decay_every;
  cfg.train_frac = o.train_frac;
  cfg.seed = o.seed;
  cfg.verbose = !o.quiet;

  write_run_manifest(o.out, "train",
                     json{{"data", o.data},
                          {"net", choice.name},
                          {"input", {ds.input_w, ds.input_h}},
                          {"epochs", cfg.epochs},
                          {"batch", cfg.batch_size},
                          {"lr", cfg.lr},
                          {"momentum", cfg.momentum},
                          {"weight_decay", cfg.weight_decay},
                          {"lr_decay_factor", cfg.lr_decay_factor},
                          {"lr_decay_every", cfg.lr_decay_every},
                          {"train_frac", cfg.train_frac},
                          {"seed", cfg.seed}});

  const TrainResult res = train(spec, ds, cfg);
  const fs::path ckpt = fs::path(o.out) / "checkpoint.rbsc";
  const fs::path metrics = fs::path(o.out) / "metrics.csv";
  save_checkpoint(res.net, ckpt.string());
  write_metrics_csv(res.metrics, metrics.string());
  std::printf("best test accuracy %.4f at epoch %d\n",
              res.metrics.best_test_acc, res.metrics.best_epoch);
  print_eval(res.metrics.final_eval);
  std::printf("wrote %s and %s\n", ckpt.string().c_str(),
              metrics.string().c_str());
  return 0;
}

int run_eval(const EvalOpts& o) {
  const Network net = load_checkpoint(o.checkpoint);
  const Dataset ds = load_dataset(o.data);
  print_eval(evaluate(net, ds, o.batch));
  return 0;
}

int run_sweep(const SweepOpts& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  SweepConfig cfg;
  cfg.nets = o.nets;
  cfg.windows.clear();
  for (const std::string& w : o.windows) {
    if (w == "all") {
      for (const auto& p : kWindowPresets) cfg.windows.push_back(p);
    } else {
      const SizeOpt s = parse_size(w, "--windows");
      require_preset_or_override(s, o.allow_custom);
      cfg.windows.emplace_back(s.w, s.h);
    }
  }
  cfg.corpora = o.corpora;
  cfg.seeds = o.seeds;
  cfg.images_per_corpus = o.images_per_corpus;
  cfg.epochs = o.epochs;
  cfg.noise = o.noise;
  cfg.train.lr = o.lr;
  cfg.train.batch_size = o.batch;
  cfg.out_dir = o.out;
  cfg.deterministic = o.deterministic;
  cfg.verbose = !o.quiet;
  for (const std::string& name : cfg.nets) parse_net_name(name);  // validates

  json jwindows = json::array();
  for (const auto& [w, h] : cfg.windows) jwindows.push_back({w, h});
  write_run_manifest(o.out, "sweep",
                     json{{"nets", cfg.nets},
                          {"windows", jwindows},
                          {"corpora", cfg.corpora},
                          {"seeds", cfg.seeds},
                          {"images_per_corpus", cfg.images_per_corpus},
                          {"epochs", cfg.epochs},
                          {"noise", cfg.noise},
                          {"lr", cfg.train.lr},
                          {"batch", cfg.train.batch_size},
                          {"deterministic", cfg.deterministic}});

  const std::vector<RunReport> reports = sweep_window_sizes(cfg);
  const fs::path csv = fs::path(o.out) / "sweep.csv";
  write_sweep_csv(reports, csv.string(), cfg.deterministic);
  std::printf("wrote %s (%zu cells)\n", csv.string().c_str(), reports.size());

  if (o.elements_csv) {
    // Aggregate the same cells per (network, corpus) without re-running.
    std::vector<ElementRow> rows;
    for (const std::string& net : cfg.nets) {
      for (const auto& [win_w, win_h] : cfg.windows) {
        for (const std::string& corpus : cfg.corpora) {
          ElementRow row;
          row.network = net;
          row.corpus = corpus;
          row.window_w = win_w;
          row.window_h = win_h;
          double sum = 0.0;
          std::size_t ok = 0;
          for (const RunReport& r : reports) {
            if (r.network != net || r.corpus != corpus ||
                r.window_w != win_w || r.window_h != win_h)
              continue;
            row.seeds.push_back(r.seed);
            if (r.status == "ok") {
              row.accs.push_back(r.test_accuracy);
              sum += r.test_accuracy;
              ++ok;
            } else {
              row.accs.push_back(
                  std::numeric_limits<double>::quiet_NaN());
            }
          }
          if (ok > 0) {
            row.mean_acc = sum / static_cast<double>(ok);
            double var = 0.0;
            for (double a : row.accs)
              if (std::isfinite(a))
                var += (a - row.mean_acc) * (a - row.mean_acc);
            row.std_acc = std::sqrt(var / static_cast<double>(ok));
          }
          rows.push_back(std::move(row));
        }
      }
    }
    const fs::path ecsv = fs::path(o.out) / "elements.csv";
    write_elements_csv(rows, ecsv.string());
    std::printf("wrote %s\n", ecsv.string().c_str());
  }
  return 0;
}

int run_detect(const DetectOpts& o) {
  const SizeOpt win = parse_size(o.window, "--window");
  require_preset_or_override(win, o.allow_custom);
  const SizeOpt stride = o.stride.empty()
                             ? SizeOpt{std::max(1, win.w / 2),
                                       std::max(1, win.h / 2)}
                             : parse_size(o.stride, "--stride");
  if (o.oracle) {
    if (o.manifest.empty())
      throw ConfigError("--oracle needs --manifest <scene.json>");
  } else if (o.checkpoint.empty()) {
    throw ConfigError("either --checkpoint or --oracle with --manifest "
                      "is required");
  }
  if (o.out.empty()) throw ConfigError("--out is required");

  LabelMap map;
  std::string image_id;
  if (o.oracle) {
    const SceneManifest scene = read_scene_manifest(o.manifest);
    map = oracle_label_map(scene, win.w, win.h, stride.w, stride.h);
    image_id = scene.image_id;
  } else {
    if (o.image.empty()) throw ConfigError("--image is required");
    const Network net = load_checkpoint(o.checkpoint);
    const GrayImage image = read_pgm(o.image);
    map = classify_windows(net, image, win.w, win.h, stride.w, stride.h);
    image_id = image.id;
  }
  const std::vector<Detection> detections = localize_rebar(map);
  write_detections_csv(o.out, image_id, detections);
  std::printf("%zu detection(s) in %s\n", detections.size(),
              image_id.c_str());
  for (const Detection& d : detections)
    std::printf("  x=%8.2f px  conf=%.4f  flanks: %s%s\n", d.x_px,
                d.confidence, d.flanked_left ? "L" : "-",
                d.flanked_right ? "R" : "-");
  std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

int run_gradcheck_cmd(const GradcheckOpts& o) {
  const GradCheckSummary summary = run_gradcheck(o.tolerance, o.seed);
  std::printf("finite-difference gradient checks (step %.0e, tolerance "
              "%.0e)\n",
              summary.step, summary.tolerance);
  for (const GradCheckReport& r : summary.reports)
    std::printf("  %-18s max_rel_err %.3e  (%zu checks)  %s\n",
                r.name.c_str(), r.max_rel_err, r.checks,
                r.passed ? "PASS" : "FAIL");
  std::printf(summary.all_passed ? "all gradient checks passed\n"
                                 : "GRADIENT CHECKS FAILED\n");
  return summary.all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rebar B-scan toolkit: synthesize, window, train, detect"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML file");

  SynthOpts sy;
  auto* synth = app.add_subcommand("synth", "Render synthetic B-scan scenes");
  synth->add_option("--out", sy.out, "Output directory")->required();
  synth->add_option("--count", sy.count, "Number of scenes")
      ->capture_default_str();
  synth->add_option("--element", sy.element,
                    "column, wall, slab, or mixed")->capture_default_str();
  synth->add_option("--seed", sy.seed, "Root seed")->capture_default_str();
  synth->add_option("--noise", sy.noise, "Gaussian noise fraction")->capture_default_str();
  synth->add_flag("--no-direct-wave", sy.no_direct_wave,
                  "Drop the horizontal direct-wave band");

  DatasetOpts da;
  auto* dataset =
      app.add_subcommand("dataset", "Window + label scenes into a dataset");
  dataset->add_option("--images", da.images, "Directory of scenes")
      ->required();
  dataset->add_option("--out", da.out, "Output dataset directory")
      ->required();
  dataset->add_option("--window", da.window, "Window WxH")->capture_default_str();
  dataset->add_option("--stride", da.stride,
                      "Stride XxY (default: half the window)");
  dataset->add_option("--input", da.input, "Network input WxH")->capture_default_str();
  dataset->add_flag("--augment", da.augment, "Add horizontal mirrors");
  dataset->add_flag("--allow-custom-window", da.allow_custom,
                    "Accept a non-preset window size");
  dataset->add_option("--peak-band", da.peak_band,
                      "Central band fraction for Peak")->capture_default_str();
  dataset->add_option("--proximity", da.proximity,
                      "Limb proximity in window-widths")->capture_default_str();

  TrainOpts tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--net", tr.net,
                        "tranet, alexnet, or alexnet-sN")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Output directory")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.weight_decay, "L2 decay")->capture_default_str();
  train_cmd->add_option("--lr-decay-factor", tr.lr_decay_factor,
                        "LR multiplier per decay step")->capture_default_str();
  train_cmd->add_option("--lr-decay-every", tr.lr_decay_every,
                        "Epochs between LR decays (0 = off)")->capture_default_str();
  train_cmd->add_option("--train-frac", tr.train_frac,
                        "Stratified train fraction")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Root seed")->capture_default_str();
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalOpts ev;
  auto* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--batch", ev.batch, "Inference batch size")->capture_default_str();

  SweepOpts sw;
  auto* sweep =
      app.add_subcommand("sweep", "Train across windows/corpora/seeds");
  sweep->add_option("--nets", sw.nets, "Networks (comma list)")->capture_default_str()
      ->delimiter(',');
  sweep->add_option("--windows", sw.windows,
                    "Window sizes WxH (comma list) or 'all'")->capture_default_str()
      ->delimiter(',');
  sweep->add_option("--corpora", sw.corpora,
                    "column, wall, slab, mixed (comma list)")->capture_default_str()
      ->delimiter(',');
  sweep->add_option("--seeds", sw.seeds, "Seeds (comma list)")->capture_default_str()
      ->delimiter(',');
  sweep->add_option("--images-per-corpus", sw.images_per_corpus,
                    "Scenes per corpus")->capture_default_str();
  sweep->add_option("--epochs", sw.epochs, "Epochs per cell")->capture_default_str();
  sweep->add_option("--noise", sw.noise,
                    "Scene noise sigma for rendered corpora")->capture_default_str();
  sweep->add_option("--lr", sw.lr, "Learning rate")->capture_default_str();
  sweep->add_option("--batch", sw.batch, "Mini-batch size")->capture_default_str();
  sweep->add_option("--out", sw.out, "Output directory")->required();
  sweep->add_flag("--allow-custom-window", sw.allow_custom,
                  "Accept non-preset window sizes");
  sweep->add_flag("--elements", sw.elements_csv,
                  "Also write per-corpus aggregate elements.csv");
  sweep->add_flag("--deterministic,!--no-deterministic", sw.deterministic,
                  "Zero wall_secs in sweep.csv so reruns are byte-identical");
  sweep->add_flag("--quiet", sw.quiet, "No per-cell progress");

  DetectOpts de;
  auto* detect = app.add_subcommand("detect", "Locate rebars in one image");
  detect->add_option("--checkpoint", de.checkpoint, "Checkpoint file");
  detect->add_option("--image", de.image, "B-scan PGM");
  detect->add_option("--manifest", de.manifest,
                     "Scene manifest (with --oracle)");
  detect->add_option("--window", de.window, "Window WxH")->capture_default_str();
  detect->add_option("--stride", de.stride,
                     "Stride XxY (default: half the window)");
  detect->add_option("--out", de.out, "detections.csv path")->required();
  detect->add_flag("--oracle", de.oracle,
                   "Label windows from the manifest instead of a network");
  detect->add_flag("--allow-custom-window", de.allow_custom,
                   "Accept a non-preset window size");

  GradcheckOpts gc;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck_cmd->add_option("--tolerance", gc.tolerance,
                            "Max relative error")->capture_default_str();
  gradcheck_cmd->add_option("--seed", gc.seed, "Check seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (synth->parsed()) return run_synth(sy);
    if (dataset->parsed()) return run_dataset(da);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (sweep->parsed()) return run_sweep(sw);
    if (detect->parsed()) return run_detect(de);
    if (gradcheck_cmd->parsed()) return run_gradcheck_cmd(gc);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 5;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 6;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 7;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
