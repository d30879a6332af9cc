#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rebarnet/errors.hpp"
#include "rebarnet/gprsynth.hpp"
#include "rebarnet/windowing.hpp"

using namespace rebarnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("rebarnet_win_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

// A manifest with hand-placed apexes on a synthetic grid. Geometry only;
// no image is needed to exercise auto_label.
SceneManifest toy_scene(std::vector<Rebar> rebars, std::vector<Apex> apexes) {
  SceneManifest m;
  m.image_id = "toy";
  m.element = ElementKind::Column;
  m.width = 500;
  m.height = 512;
  m.dx = 0.002;
  m.velocity = 1.0e8;
  m.f_c = 2.7e9;
  m.rebars = std::move(rebars);
  m.apexes = std::move(apexes);
  // dt chosen like the renderer: 1.25x the deepest two-way time / height.
  double deepest = 0.0;
  for (const Rebar& r : m.rebars) deepest = std::max(deepest, r.depth);
  m.dt = deepest > 0.0 ? 1.25 * (2.0 * deepest / m.velocity) / m.height
                       : 1e-12;
  return m;
}

// One rebar whose apex lands at (trace, sample) consistent with the manifest
// geometry, mirroring how the renderer derives apex cells.
SceneManifest single_rebar_scene(double x0, double depth) {
  SceneManifest m = toy_scene({{x0, depth}}, {});
  Apex a;
  a.trace = static_cast<int>(std::lround(x0 / m.dx));
  a.sample = static_cast<int>(std::lround(2.0 * depth / m.velocity / m.dt));
  m.apexes = {a};
  return m;
}

ScenePair rendered_scene(ElementKind kind, std::uint64_t seed) {
  SceneSpec spec = preset_scene(kind, seed);
  BScan scan = render_bscan(spec);
  ScenePair sp;
  sp.manifest = make_manifest(spec, scan, "probe");
  sp.image.id = "probe";
  sp.image.width = scan.n_traces;
  sp.image.height = scan.n_samples;
  sp.image.pixels = scan.pixels;
  return sp;
}

}  // namespace

TEST_CASE("split_image exact tiling and row-major order") {
  // 10x6 image, 5x3 windows, stride = window: a 2x2 grid, no remainder.
  const auto rects = split_image(10, 6, 5, 3, 5, 3);
  REQUIRE(rects.size() == 4);
  CHECK(rects[0].x == 0);
  CHECK(rects[0].y == 0);
  CHECK(rects[1].x == 5);  // x varies fastest
  CHECK(rects[1].y == 0);
  CHECK(rects[2].x == 0);
  CHECK(rects[2].y == 3);
  CHECK(rects[3].x == 5);
  CHECK(rects[3].y == 3);
}

TEST_CASE("split_image drops trailing partial windows") {
  // (500 - 200) / 100 + 1 = 4 columns; (512 - 80) / 40 + 1 = 11 rows.
  const auto rects = split_image(500, 512, 200, 80, 100, 40);
  CHECK(rects.size() == 44);
  for (const Rect& r : rects) {
    CHECK(r.x + r.w <= 500);
    CHECK(r.y + r.h <= 512);
  }
}

TEST_CASE("split_image rejects bad geometry") {
  CHECK_THROWS_AS(split_image(100, 100, 0, 10, 5, 5), ConfigError);
  CHECK_THROWS_AS(split_image(100, 100, 10, 10, 0, 5), ConfigError);
  CHECK(split_image(100, 100, 200, 50, 10, 10).empty());  // window > image
}

TEST_CASE("window presets are exactly the documented four") {
  REQUIRE(kWindowPresets.size() == 4);
  CHECK(is_preset_window(120, 30));
  CHECK(is_preset_window(150, 50));
  CHECK(is_preset_window(200, 80));
  CHECK(is_preset_window(250, 100));
  CHECK_FALSE(is_preset_window(200, 30));
  CHECK_FALSE(is_preset_window(64, 64));
}

TEST_CASE("auto_label: centered apex is Peak") {
  SceneManifest m = single_rebar_scene(0.5, 0.07);
  const Apex a = m.apexes[0];
  Rect r{a.trace - 100, a.sample - 40, 200, 80};
  CHECK(auto_label(r, m) == WindowLabel::Peak);
}

TEST_CASE("auto_label: apex inside but off-band is Other") {
  SceneManifest m = single_rebar_scene(0.5, 0.07);
  const Apex a = m.apexes[0];
  // Apex 10 px from the left edge of a 200-wide window: outside the
  // central 40% band (which spans x+60 .. x+140), still inside the rect.
  Rect r{a.trace - 10, a.sample - 40, 200, 80};
  CHECK(auto_label(r, m) == WindowLabel::Other);
}

TEST_CASE("auto_label: empty window far from any apex is Other") {
  SceneManifest m = single_rebar_scene(0.25, 0.07);
  Rect r{450, 10, 40, 40};  // top-right corner, far from everything
  CHECK(auto_label(r, m) == WindowLabel::Other);
}

TEST_CASE("auto_label: left limb window labels Left, mirrored labels Right") {
  // Deep rebar: with auto dt the apex row is always ~410, and the limb stays
  // on-image out to 0.75 * depth of horizontal offset (125 px at 0.25 m).
  SceneManifest m = single_rebar_scene(0.5, 0.25);
  const Apex a = m.apexes[0];  // trace 250, sample 410
  CHECK(a.sample == 410);
  // A tall window just left of the apex catches the descending left limb.
  Rect left{a.trace - 45, 390, 40, 110};
  CHECK(auto_label(left, m) == WindowLabel::Left);
  Rect right{a.trace + 5, 390, 40, 110};
  CHECK(auto_label(right, m) == WindowLabel::Right);
}

TEST_CASE("auto_label: distance gate turns far limbs into Other") {
  SceneManifest m = single_rebar_scene(0.5, 0.25);
  const Apex a = m.apexes[0];
  // Gap of about two window-widths: beyond the proximity default of 1.0,
  // but the limb's travel-time curve still crosses the window rows.
  Rect far{a.trace - 45 - 80, 390, 40, 110};
  CHECK(auto_label(far, m) == WindowLabel::Other);
  LabelGeometry loose;
  loose.proximity_widths = 3.0;
  CHECK(auto_label(far, m, loose) == WindowLabel::Left);
}

TEST_CASE("auto_label: two apexes inside one window is Other") {
  SceneManifest a = single_rebar_scene(0.48, 0.07);
  SceneManifest b = single_rebar_scene(0.52, 0.07);
  SceneManifest m = a;
  m.rebars.push_back(b.rebars[0]);
  m.apexes.push_back(b.apexes[0]);
  Rect r{190, a.apexes[0].sample - 40, 120, 80};  // spans traces 190..310
  CHECK(auto_label(r, m) == WindowLabel::Other);
}

TEST_CASE("auto_label validates its inputs") {
  SceneManifest m = single_rebar_scene(0.5, 0.07);
  Rect r{0, 0, 100, 50};
  LabelGeometry g;
  g.peak_band = 0.0;
  CHECK_THROWS_AS(auto_label(r, m, g), ConfigError);
  g = LabelGeometry{};
  g.proximity_widths = -1.0;
  CHECK_THROWS_AS(auto_label(r, m, g), ConfigError);
  SceneManifest bad = m;
  bad.apexes.clear();  // parity between rebars and apexes broken
  CHECK_THROWS_AS(auto_label(r, bad), FormatError);
  bad = m;
  bad.dx = 0.0;
  CHECK_THROWS_AS(auto_label(r, bad), ConfigError);
}

TEST_CASE("build_dataset crops, resizes, and normalizes") {
  ScenePair sp = rendered_scene(ElementKind::Column, 4);
  Dataset ds = build_dataset({sp}, 120, 30, 40, 15, 28, 28, false);
  CHECK(ds.input_h == 28);
  CHECK(ds.input_w == 28);
  CHECK(ds.count() == 330);  // 10 x 33 grid from the 500x512 image
  CHECK(ds.pixels.size() == ds.count() * ds.sample_numel());
  float lo = 1e9f, hi = -1e9f;
  for (float v : ds.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0f);
  CHECK(hi <= 1.0f);
  CHECK(hi > 0.1f);
  for (const SampleInfo& info : ds.info) CHECK(info.image_id == "probe");
}

TEST_CASE("dataset labels match auto_label on every window") {
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    CHECK(ds.labels[i] ==
          static_cast<int>(auto_label(ds.info[i].rect, sp.manifest)));
  }
}

TEST_CASE("class_histogram counts every label") {
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  const auto hist = class_histogram(ds);
  REQUIRE(hist.size() == 4);
  std::size_t total = 0;
  for (std::size_t c : hist) total += c;
  CHECK(total == ds.count());
  CHECK(hist[static_cast<int>(WindowLabel::Other)] > 0);
  CHECK(hist[static_cast<int>(WindowLabel::Peak)] > 0);
}

TEST_CASE("flip_augment doubles the set and swaps Left/Right") {
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  const auto before = class_histogram(ds);
  const std::size_t n = ds.count();
  Dataset flipped = ds;
  flip_augment(flipped);
  CHECK(flipped.count() == 2 * n);
  CHECK(flipped.augmented);
  const auto after = class_histogram(flipped);
  CHECK(after[0] == before[0] + before[2]);  // Left gains mirrored Rights
  CHECK(after[2] == before[2] + before[0]);
  CHECK(after[1] == 2 * before[1]);
  CHECK(after[3] == 2 * before[3]);

  // Mirror of the mirror restores the original pixels.
  for (std::size_t s = 0; s < n; ++s) {
    const float* orig = ds.pixels.data() + s * ds.sample_numel();
    const float* mirr = flipped.pixels.data() + (n + s) * ds.sample_numel();
    for (int row = 0; row < ds.input_h; ++row)
      for (int col = 0; col < ds.input_w; ++col)
        CHECK(orig[row * ds.input_w + col] ==
              mirr[row * ds.input_w + (ds.input_w - 1 - col)]);
    CHECK(flipped.info[n + s].flipped);
  }
}

TEST_CASE("starved classes raise DataError naming the counts") {
  // A scene whose single apex sits dead-center: huge windows at stride =
  // image leave no Left/Right windows at all.
  SceneManifest m = single_rebar_scene(0.5, 0.07);
  GrayImage img;
  img.id = "toy";
  img.width = m.width;
  img.height = m.height;
  img.pixels.assign(static_cast<std::size_t>(m.width) * m.height, 7);
  ScenePair sp{img, m};
  try {
    build_dataset({sp}, 500, 512, 500, 512, 28, 28, false);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("starved") != std::string::npos);
    CHECK(msg.find("Left") != std::string::npos);
  }
}

TEST_CASE("batch gathers samples as [B, C, H, W] doubles") {
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  Tensor b = ds.batch({0, 5, 7});
  CHECK(b.shape() == std::vector<int>({3, 1, 28, 28}));
  CHECK(b.at(1, 0, 3, 4) ==
        doctest::Approx(static_cast<double>(
            ds.pixels[5 * ds.sample_numel() + 3 * 28 + 4])));
  Tensor b3 = ds.batch({0}, 3);
  CHECK(b3.shape() == std::vector<int>({1, 3, 28, 28}));
  CHECK(b3.at(0, 0, 9, 9) == b3.at(0, 2, 9, 9));  // replicated gray plane
}

TEST_CASE("subset keeps pixels, labels, and provenance aligned") {
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  Dataset sub = ds.subset({2, 9, 11});
  CHECK(sub.count() == 3);
  CHECK(sub.labels[1] == ds.labels[9]);
  CHECK(sub.info[2].rect.x == ds.info[11].rect.x);
  for (std::size_t i = 0; i < sub.sample_numel(); ++i)
    CHECK(sub.pixels[sub.sample_numel() + i] ==
          ds.pixels[9 * ds.sample_numel() + i]);
}

TEST_CASE("dataset save/load round-trip") {
  TempDir tmp;
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  save_dataset(ds, tmp.path.string());
  CHECK(fs::exists(tmp.path / "data.bin"));
  CHECK(fs::exists(tmp.path / "index.csv"));
  CHECK(fs::exists(tmp.path / "meta.json"));
  Dataset back = load_dataset(tmp.path.string());
  CHECK(back.count() == ds.count());
  CHECK(back.input_h == ds.input_h);
  CHECK(back.input_w == ds.input_w);
  CHECK(back.win_w == ds.win_w);
  CHECK(back.stride_x == ds.stride_x);
  CHECK(back.augmented == ds.augmented);
  CHECK(back.pixels == ds.pixels);  // float32 exact
  CHECK(back.labels == ds.labels);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    CHECK(back.info[i].image_id == ds.info[i].image_id);
    CHECK(back.info[i].rect.x == ds.info[i].rect.x);
    CHECK(back.info[i].rect.y == ds.info[i].rect.y);
    CHECK(back.info[i].flipped == ds.info[i].flipped);
  }
}

TEST_CASE("load_dataset rejects tampered metadata") {
  TempDir tmp;
  ScenePair sp = rendered_scene(ElementKind::Wall, 6);
  Dataset ds = build_dataset({sp}, 150, 50, 75, 25, 28, 28, false);
  save_dataset(ds, tmp.path.string());

  // Truncate the pixel payload.
  const fs::path bin = tmp.path / "data.bin";
  fs::resize_file(bin, fs::file_size(bin) - 16);
  CHECK_THROWS_AS(load_dataset(tmp.path.string()), FormatError);
}

TEST_CASE("load_dataset on a missing directory is an IoError") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/rebarnet/ds"), IoError);
}

TEST_CASE("window label names are stable") {
  CHECK(std::string(window_label_name(WindowLabel::Left)) == "Left");
  CHECK(std::string(window_label_name(WindowLabel::Peak)) == "Peak");
  CHECK(std::string(window_label_name(WindowLabel::Right)) == "Right");
  CHECK(std::string(window_label_name(WindowLabel::Other)) == "Other");
  CHECK(std::string(window_label_name(static_cast<int>(WindowLabel::Peak))) ==
        "Peak");
  CHECK(std::string(window_label_name(17)) == "?");
}
