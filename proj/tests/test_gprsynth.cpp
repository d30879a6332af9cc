#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rebarnet/errors.hpp"
#include "rebarnet/gprsynth.hpp"

using namespace rebarnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("rebarnet_synth_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("travel time closed forms") {
  // Directly above the rebar: t = 2 d / v.
  CHECK(travel_time(0.0, 0.0, 0.05, 1.0e8) == doctest::Approx(1.0e-9));
  // 3-4-5 triangle: depth 0.03, offset 0.04 -> slant 0.05.
  CHECK(travel_time(0.04, 0.0, 0.03, 1.0e8) ==
        doctest::Approx(2.0 * 0.05 / 1.0e8));
  // Symmetric in the offset.
  CHECK(travel_time(0.07, 0.05, 0.04, 1.0e8) ==
        travel_time(0.03, 0.05, 0.04, 1.0e8));
}

TEST_CASE("ricker wavelet shape") {
  const double f = 2.7e9;
  CHECK(ricker_wavelet(0.0, f) == 1.0);                      // peak
  CHECK(ricker_wavelet(1e-10, f) == ricker_wavelet(-1e-10, f));  // even
  // Zero crossing at t = 1 / (pi f sqrt(2)).
  const double t0 = 1.0 / (M_PI * f * std::sqrt(2.0));
  CHECK(ricker_wavelet(t0, f) == doctest::Approx(0.0).epsilon(1e-9));
  // Monotone decay of the envelope far from the peak.
  CHECK(std::abs(ricker_wavelet(5 * t0, f)) <
        std::abs(ricker_wavelet(2 * t0, f)));
}

TEST_CASE("effective_dt auto rule") {
  SceneSpec scene;
  scene.rebars = {{0.5, 0.08}, {0.3, 0.05}};
  scene.dt = 0.0;
  const double deepest = 2.0 * 0.08 / scene.velocity;
  CHECK(effective_dt(scene) ==
        doctest::Approx(1.25 * deepest / scene.n_samples));
  scene.dt = 1e-11;
  CHECK(effective_dt(scene) == 1e-11);
}

TEST_CASE("rendered apexes sit at the travel-time rows above each rebar") {
  SceneSpec scene;
  scene.rebars = {{0.3, 0.06}, {0.7, 0.09}};
  scene.noise_sigma = 0.0;
  scene.direct_wave = false;
  scene.seed = 5;
  BScan scan = render_bscan(scene);
  REQUIRE(scan.apexes.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const Rebar& r = scene.rebars[i];
    const Apex& a = scan.apexes[i];
    CHECK(a.trace == static_cast<int>(std::lround(r.x0 / scene.dx)));
    const double t_apex = 2.0 * r.depth / scene.velocity;
    CHECK(a.sample == static_cast<int>(std::lround(t_apex / scan.dt)));
    CHECK(a.sample >= 0);
    CHECK(a.sample < scan.n_samples);
  }
}

TEST_CASE("hyperbola is symmetric around the apex in a noiseless scan") {
  SceneSpec scene;
  scene.rebars = {{0.5, 0.07}};
  scene.noise_sigma = 0.0;
  scene.direct_wave = false;
  BScan scan = render_bscan(scene);
  const Apex a = scan.apexes[0];
  const auto at = [&](int row, int col) {
    return scan.amplitude[static_cast<std::size_t>(row) *
                              static_cast<std::size_t>(scan.n_traces) +
                          static_cast<std::size_t>(col)];
  };
  for (int off = 1; off <= 40; ++off) {
    for (int row = 0; row < scan.n_samples; row += 37) {
      CHECK(at(row, a.trace - off) ==
            doctest::Approx(at(row, a.trace + off)).epsilon(1e-9));
    }
  }
}

TEST_CASE("amplitude normalization and quantization") {
  SceneSpec scene;
  scene.rebars = {{0.4, 0.05}, {0.6, 0.10}};
  scene.seed = 9;
  BScan scan = render_bscan(scene);
  CHECK(scan.amplitude.size() ==
        static_cast<std::size_t>(scan.n_samples) *
            static_cast<std::size_t>(scan.n_traces));
  CHECK(scan.pixels.size() == scan.amplitude.size());
  double lo = 1e9, hi = -1e9;
  for (double v : scan.amplitude) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(hi > 0.5);  // something bright exists
  for (std::size_t i = 0; i < scan.pixels.size(); i += 997) {
    CHECK(scan.pixels[i] ==
          static_cast<std::uint8_t>(std::lround(scan.amplitude[i] * 255.0)));
  }
}

TEST_CASE("same seed reproduces the scan bit for bit") {
  SceneSpec scene;
  scene.rebars = {{0.5, 0.07}};
  scene.seed = 31;
  BScan a = render_bscan(scene);
  BScan b = render_bscan(scene);
  CHECK(a.amplitude == b.amplitude);
  CHECK(a.pixels == b.pixels);
  scene.seed = 32;
  BScan c = render_bscan(scene);
  CHECK(a.pixels != c.pixels);  // noise actually depends on the seed
}

TEST_CASE("presets have the documented rebar counts and spacing") {
  SceneSpec col = preset_scene(ElementKind::Column, 1);
  SceneSpec wall = preset_scene(ElementKind::Wall, 1);
  SceneSpec slab = preset_scene(ElementKind::Slab, 1);
  CHECK(col.rebars.size() == 5);
  CHECK(wall.rebars.size() == 7);
  CHECK(slab.rebars.size() == 12);
  // Mean spacing close to 150 / 100 / 50 mm (jitter is per rebar).
  const auto mean_gap = [](const SceneSpec& s) {
    double acc = 0.0;
    for (std::size_t i = 1; i < s.rebars.size(); ++i)
      acc += s.rebars[i].x0 - s.rebars[i - 1].x0;
    return acc / static_cast<double>(s.rebars.size() - 1);
  };
  CHECK(mean_gap(col) == doctest::Approx(0.150).epsilon(0.15));
  CHECK(mean_gap(wall) == doctest::Approx(0.100).epsilon(0.15));
  CHECK(mean_gap(slab) == doctest::Approx(0.050).epsilon(0.15));
  // Jitter differs between seeds but the count is stable.
  SceneSpec col2 = preset_scene(ElementKind::Column, 2);
  CHECK(col2.rebars.size() == 5);
  CHECK(col2.rebars[0].x0 != col.rebars[0].x0);
}

TEST_CASE("pgm round-trip preserves pixels and dimensions") {
  TempDir tmp;
  GrayImage img;
  img.id = "probe";
  img.width = 19;
  img.height = 7;
  img.pixels.resize(19 * 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>((i * 13) % 256);
  const std::string path = tmp.file("probe.pgm");
  write_pgm(path, img);
  GrayImage back = read_pgm(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("read_pgm rejects junk and missing files") {
  TempDir tmp;
  CHECK_THROWS_AS(read_pgm(tmp.file("absent.pgm")), IoError);
  const std::string path = tmp.file("junk.pgm");
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("P6\n2 2\n255\n....", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_pgm(path), FormatError);
}

TEST_CASE("scene manifest round-trips every field") {
  TempDir tmp;
  SceneSpec scene = preset_scene(ElementKind::Wall, 77);
  scene.noise_sigma = 0.037;
  BScan scan = render_bscan(scene);
  SceneManifest m = make_manifest(scene, scan, "wall_077");
  const std::string path = tmp.file("wall_077.json");
  write_scene_manifest(path, m);
  SceneManifest back = read_scene_manifest(path);
  CHECK(back.image_id == m.image_id);
  CHECK(back.image_file == m.image_file);
  CHECK(back.element == m.element);
  CHECK(back.width == m.width);
  CHECK(back.height == m.height);
  CHECK(back.dx == m.dx);
  CHECK(back.dt == m.dt);
  CHECK(back.velocity == m.velocity);
  CHECK(back.f_c == m.f_c);
  CHECK(back.noise_sigma == m.noise_sigma);
  CHECK(back.seed == m.seed);
  REQUIRE(back.rebars.size() == m.rebars.size());
  REQUIRE(back.apexes.size() == m.apexes.size());
  for (std::size_t i = 0; i < m.rebars.size(); ++i) {
    CHECK(back.rebars[i].x0 == m.rebars[i].x0);
    CHECK(back.rebars[i].depth == m.rebars[i].depth);
    CHECK(back.apexes[i].trace == m.apexes[i].trace);
    CHECK(back.apexes[i].sample == m.apexes[i].sample);
  }
}

TEST_CASE("save_scene writes a matching pgm + manifest pair") {
  TempDir tmp;
  SceneSpec scene = preset_scene(ElementKind::Column, 8);
  SceneManifest m = save_scene(scene, tmp.path.string(), "col_008");
  CHECK(fs::exists(tmp.file("col_008.pgm")));
  CHECK(fs::exists(tmp.file("col_008.json")));
  GrayImage img = read_pgm(tmp.file("col_008.pgm"));
  CHECK(img.width == m.width);
  CHECK(img.height == m.height);
  SceneManifest back = read_scene_manifest(tmp.file("col_008.json"));
  CHECK(back.image_file == "col_008.pgm");
  CHECK(back.apexes.size() == scene.rebars.size());
}

TEST_CASE("scene validation rejects out-of-range parameters") {
  SceneSpec scene;
  scene.rebars = {{0.5, 0.07}};
  scene.velocity = 0.0;
  CHECK_THROWS_AS(render_bscan(scene), ConfigError);
  scene = SceneSpec{};
  scene.rebars = {{0.5, 0.07}};
  scene.n_traces = 0;
  CHECK_THROWS_AS(render_bscan(scene), ConfigError);
  scene = SceneSpec{};
  scene.rebars = {{0.5, -0.01}};
  CHECK_THROWS_AS(render_bscan(scene), ConfigError);
}

TEST_CASE("empty scene with no noise or direct wave renders an all-zero grid") {
  SceneSpec scene;
  scene.rebars.clear();
  scene.noise_sigma = 0.0;
  scene.direct_wave = false;
  const BScan scan = render_bscan(scene);
  CHECK(scan.apexes.empty());
  bool all_zero = true;
  for (double a : scan.amplitude) all_zero = all_zero && a == 0.0;
  for (std::uint8_t p : scan.pixels) all_zero = all_zero && p == 0;
  CHECK(all_zero);
}

TEST_CASE("element kind names round-trip") {
  for (ElementKind k :
       {ElementKind::Column, ElementKind::Wall, ElementKind::Slab})
    CHECK(element_kind_from_name(element_kind_name(k)) == k);
  CHECK_THROWS_AS(element_kind_from_name("bridge"), ConfigError);
}
