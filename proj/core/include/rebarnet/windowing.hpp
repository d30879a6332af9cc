#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rebarnet/gprsynth.hpp"
#include "rebarnet/tensor.hpp"

namespace rebarnet {

// Splits B-scan images into rectangular windows, labels each window from the
// scene's ground truth, and assembles network-ready datasets.

enum class WindowLabel : int { Left = 0, Peak = 1, Right = 2, Other = 3 };
constexpr int kNumClasses = 4;

const char* window_label_name(WindowLabel label);
const char* window_label_name(int label);

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

// The four preset splitting rectangles, width x height in pixels.
extern const std::vector<std::pair<int, int>> kWindowPresets;
bool is_preset_window(int w, int h);

// Regular grid of window rects: top-left origin, the given strides, trailing
// partial windows dropped. Emitted row-major (y outer, x inner).
std::vector<Rect> split_image(int image_w, int image_h, int win_w, int win_h,
                              int stride_x, int stride_y);

// Tunable labeling thresholds. Defaults: an apex must sit in the central 40%
// of a window's width to make it a Peak, and a limb window's apex may sit at
// most one window-width outside it.
struct LabelGeometry {
  double peak_band = 0.4;
  double proximity_widths = 1.0;
};

// Geometric ground-truth labeling:
//  Peak  — exactly one apex inside the rect, in the central band;
//  Left  — no apex inside, nearest apex right of the rect within
//          proximity_widths rect-widths, and that hyperbola's left limb
//          crosses the rect (travel-time curve intersects its row range);
//  Right — mirrored;
//  Other — everything else. Total and deterministic.
WindowLabel auto_label(const Rect& rect, const SceneManifest& scene,
                       const LabelGeometry& geom = {});

struct SampleInfo {
  std::string image_id;
  Rect rect;
  bool flipped = false;
};

// Network-ready window collection: float32 crops (resized, [0,1]) plus
// labels and provenance.
struct Dataset {
  int input_h = 0, input_w = 0;                 // sample dims (single channel)
  int win_w = 0, win_h = 0;                     // splitting rect
  int stride_x = 0, stride_y = 0;
  bool augmented = false;
  std::vector<float> pixels;                    // count * input_h * input_w
  std::vector<int> labels;
  std::vector<SampleInfo> info;

  std::size_t count() const { return labels.size(); }
  std::size_t sample_numel() const {
    return static_cast<std::size_t>(input_h) * input_w;
  }
  // Gathers samples into a [B, channels, H, W] double batch; channels > 1
  // replicates the gray plane.
  Tensor batch(const std::vector<int>& indices, int channels = 1) const;
  Dataset subset(const std::vector<int>& indices) const;
};

// Per-class sample counts, indexed by label.
std::vector<std::size_t> class_histogram(const Dataset& ds);

// Adds the horizontal mirror of every window: Left and Right swap, Peak and
// Other keep their labels. Doubles the dataset.
void flip_augment(Dataset& ds);

// Crops, labels, resizes (bilinear), and normalizes every window of every
// scene. Scenes pair each image with its manifest. Throws DataError when any
// class ends up empty (starved), IoError/FormatError on unreadable inputs.
struct ScenePair {
  GrayImage image;
  SceneManifest manifest;
};

Dataset build_dataset(const std::vector<ScenePair>& scenes, int win_w,
                      int win_h, int stride_x, int stride_y, int input_h,
                      int input_w, bool augment,
                      const LabelGeometry& geom = {});

// File-based variant: each path names a scene manifest (.json); the PGM it
// references is loaded from the same directory.
Dataset build_dataset(const std::vector<std::string>& manifest_paths,
                      int win_w, int win_h, int stride_x, int stride_y,
                      int input_h, int input_w, bool augment,
                      const LabelGeometry& geom = {});

// Lists the scene manifests (*.json) under a directory, sorted by name.
std::vector<std::string> find_scene_manifests(const std::string& dir);

// Dataset directory: data.bin (float32 LE), index.csv, meta.json.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace rebarnet
