#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rebarnet/netdef.hpp"
#include "rebarnet/trainer.hpp"
#include "rebarnet/windowing.hpp"

namespace rebarnet {

// Whole-image window classification, rebar localization from Peak clusters,
// and the window-size / element sweep harnesses.

// One classified window: class probabilities (sum to 1) and the argmax label.
struct LabelEntry {
  Rect rect;
  std::array<double, 4> probs{};
  int label = static_cast<int>(WindowLabel::Other);
};

struct LabelMap {
  int image_w = 0, image_h = 0;
  int win_w = 0, win_h = 0;
  int stride_x = 0, stride_y = 0;
  std::vector<LabelEntry> entries;  // split_image order (y outer, x inner)
};

// Slides the window grid over the image and classifies every crop with the
// network (crops are bilinear-resized to the network input).
LabelMap classify_windows(const Network& net, const GrayImage& image,
                          int win_w, int win_h, int stride_x, int stride_y,
                          int batch_size = 64);

// Ground-truth label map from the scene manifest (one-hot probabilities);
// the reference the classifier map is compared against.
LabelMap oracle_label_map(const SceneManifest& scene, int win_w, int win_h,
                          int stride_x, int stride_y,
                          const LabelGeometry& geom = {});

struct Detection {
  double x_px = 0.0;      // estimated rebar column (pixel)
  double confidence = 0.0;
  bool flanked_left = false;   // a Left-limb window sits just left of the cluster
  bool flanked_right = false;
};

// Clusters Peak-labeled windows along x (gaps over 2*stride_x start a new
// cluster), takes the Peak-probability-weighted centroid of the window
// centers as the rebar position, and raises confidence by 0.1 per adjacent
// limb window (capped at 1). Returned sorted by x_px.
std::vector<Detection> localize_rebar(const LabelMap& map);

// detections.csv: image_id,x_px,confidence,flanked_left,flanked_right.
void write_detections_csv(const std::string& path, const std::string& image_id,
                          const std::vector<Detection>& detections);

// ---- network catalogue ----

struct NetChoice {
  std::string name;          // canonical: "tranet", "alexnet", "alexnet-sN"
  bool alexnet = false;
  double width_scale = 1.0;  // alexnet only
  int default_h = 28, default_w = 28;
};

// "tranet" (28x28), "alexnet" (227x227), or "alexnet-sN" for the 1/N-width
// variant (64x64 default input). Anything else raises ConfigError.
NetChoice parse_net_name(const std::string& name);

NetworkSpec build_net(const NetChoice& choice, int in_h, int in_w,
                      int num_classes = 4);

// ---- corpora and sweeps ----

// Renders `count` preset scenes. corpus is an element name or "mixed"
// (cycles column/wall/slab). Scene seeds derive from (seed, index).
std::vector<ScenePair> synth_corpus(const std::string& corpus, int count,
                                    std::uint64_t seed, double noise = 0.02);

struct SweepConfig {
  std::vector<std::string> nets = {"tranet"};
  std::vector<std::pair<int, int>> windows = {{200, 80}};  // (w, h)
  std::vector<std::string> corpora = {"mixed"};
  std::vector<std::uint64_t> seeds = {1};
  int images_per_corpus = 12;
  int epochs = 12;
  double noise = 0.02;      // scene noise level for the rendered corpora
  TrainConfig train;        // epochs/seed are overridden per cell
  std::string out_dir;      // when set, per-cell checkpoint + metrics land here
  bool deterministic = true;  // report wall_secs as 0 in the CSV
  bool verbose = false;
};

struct RunReport {
  std::string network;
  int window_w = 0, window_h = 0;
  std::string corpus;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  int epochs_run = 0;
  double wall_secs = 0.0;
  std::string status = "ok";  // "ok", "diverged", or "starved"
};

// One training run per (net, window, corpus, seed), in that loop order.
// Rendered corpora are cached per (corpus, seed). Divergence and class
// starvation mark the cell failed instead of aborting the sweep.
std::vector<RunReport> sweep_window_sizes(const SweepConfig& cfg);

// sweep.csv: network,window_w,window_h,corpus,seed,test_accuracy,epochs_run,
// wall_secs,status. Failed cells leave accuracy/epochs empty. deterministic
// writes wall_secs as 0.000 so reruns are byte-identical.
void write_sweep_csv(const std::vector<RunReport>& reports,
                     const std::string& path, bool deterministic);

struct ElementRow {
  std::string network;
  std::string corpus;
  int window_w = 0, window_h = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accs;  // parallel to seeds; NaN for failed cells
  double mean_acc = 0.0;
  double std_acc = 0.0;      // population standard deviation over ok cells
};

// Aggregates a sweep over element corpora into per-(network, corpus) rows.
std::vector<ElementRow> compare_elements(const SweepConfig& cfg);

void write_elements_csv(const std::vector<ElementRow>& rows,
                        const std::string& path);

}  // namespace rebarnet
