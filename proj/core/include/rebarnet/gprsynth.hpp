#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rebarnet {

// Synthetic B-scan generator: point reflectors (rebars) traced through the
// two-way travel-time formula, a Ricker source wavelet, 1/t spreading loss,
// an optional direct-wave band, and seeded Gaussian noise. Rows are time
// samples, columns are scan positions (traces).

enum class ElementKind { Column, Wall, Slab };

const char* element_kind_name(ElementKind kind);
ElementKind element_kind_from_name(const std::string& name);

struct Rebar {
  double x0 = 0.0;    // horizontal position, meters
  double depth = 0.0; // cover depth, meters
};

struct SceneSpec {
  ElementKind element = ElementKind::Column;
  std::vector<Rebar> rebars;
  double velocity = 1.0e8;  // wave speed in concrete, m/s
  double f_c = 2.7e9;       // wavelet center frequency, Hz
  double dx = 0.002;        // trace spacing, m
  double dt = 0.0;          // sample interval, s; 0 = auto (1.25x deepest
                            // two-way time over n_samples)
  int n_traces = 500;
  int n_samples = 512;
  double noise_sigma = 0.02;  // Gaussian noise as a fraction of peak amplitude
  bool direct_wave = true;
  std::uint64_t seed = 1;
};

struct Apex {
  int trace = 0;   // column index
  int sample = 0;  // row index
};

struct BScan {
  int n_samples = 0;
  int n_traces = 0;
  double dx = 0.0;
  double dt = 0.0;
  std::vector<double> amplitude;     // [n_samples][n_traces], normalized [0,1]
  std::vector<std::uint8_t> pixels;  // 8-bit quantization of amplitude
  std::vector<Apex> apexes;          // ground truth, parallel to spec.rebars
};

// Two-way travel time t = (2/v) * sqrt(depth^2 + (x - x0)^2).
double travel_time(double x, double x0, double depth, double v);

// (1 - 2 pi^2 f^2 t^2) * exp(-pi^2 f^2 t^2); peak 1 at t = 0.
double ricker_wavelet(double t, double f_c);

// The dt render_bscan uses: scene.dt when set, else 1.25x the deepest
// rebar's two-way apex time divided by n_samples.
double effective_dt(const SceneSpec& scene);

BScan render_bscan(const SceneSpec& scene);

// Seeded scene generators for the three element presets: rebar spacing
// 150 / 100 / 50 mm (Column / Wall / Slab) with per-seed jitter on
// positions and depths.
SceneSpec preset_scene(ElementKind kind, std::uint64_t seed);

// Everything windowing needs to label crops of a rendered image: the pixel
// grid geometry, the ground-truth apexes, and the scene parameters that let
// it trace each hyperbola's travel-time curve.
struct SceneManifest {
  std::string image_id;    // stem, unique within a corpus
  std::string image_file;  // file name of the PGM, relative to the manifest
  ElementKind element = ElementKind::Column;
  int width = 0;   // n_traces
  int height = 0;  // n_samples
  double dx = 0.0, dt = 0.0;
  double velocity = 0.0, f_c = 0.0;
  double noise_sigma = 0.0;
  bool direct_wave = true;
  std::uint64_t seed = 0;
  std::vector<Rebar> rebars;
  std::vector<Apex> apexes;
};

SceneManifest make_manifest(const SceneSpec& scene, const BScan& scan,
                            const std::string& image_id);

// 8-bit grayscale image and its PGM (P5, maxval 255) round-trip.
struct GrayImage {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::string& path, const GrayImage& image);
GrayImage read_pgm(const std::string& path);

void write_scene_manifest(const std::string& path, const SceneManifest& m);
SceneManifest read_scene_manifest(const std::string& path);

// Renders a scene and writes <stem>.pgm plus <stem>.json into dir;
// returns the manifest it wrote.
SceneManifest save_scene(const SceneSpec& scene, const std::string& dir,
                         const std::string& stem);

}  // namespace rebarnet
