#include "rebarnet/gprsynth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "rebarnet/errors.hpp"
#include "rebarnet/rng.hpp"

namespace rebarnet {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;
// A rebar at this cover depth reflects with unit apex amplitude; everything
// else scales as 1/t relative to it (spherical spreading).
constexpr double kReferenceDepth = 0.05;

void check_scene(const SceneSpec& s) {
  if (s.velocity <= 0.0) throw ConfigError("scene velocity must be > 0");
  if (s.f_c <= 0.0) throw ConfigError("scene f_c must be > 0");
  if (s.dx <= 0.0) throw ConfigError("scene dx must be > 0");
  if (s.n_traces < 1 || s.n_samples < 1) {
    throw ConfigError("scene grid must be at least 1x1");
  }
  if (s.noise_sigma < 0.0) throw ConfigError("scene noise_sigma must be >= 0");
  const double width = s.n_traces * s.dx;
  for (std::size_t i = 0; i < s.rebars.size(); ++i) {
    const Rebar& r = s.rebars[i];
    if (r.depth <= 0.0) {
      throw ConfigError("rebar " + std::to_string(i) + " depth must be > 0");
    }
    if (r.x0 < 0.0 || r.x0 > width) {
      throw ConfigError("rebar " + std::to_string(i) + " x0 = " +
                        std::to_string(r.x0) + " outside the scanned span [0, " +
                        std::to_string(width) + "]");
    }
  }
}

double deepest_apex_time(const SceneSpec& s) {
  double t = 0.0;
  for (const Rebar& r : s.rebars) t = std::max(t, 2.0 * r.depth / s.velocity);
  return t;
}

}  // namespace

const char* element_kind_name(ElementKind kind) {
  switch (kind) {
    case ElementKind::Column: return "column";
    case ElementKind::Wall: return "wall";
    case ElementKind::Slab: return "slab";
  }
  return "unknown";
}

ElementKind element_kind_from_name(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(
      static_cast<unsigned char>(c))));
  if (lower == "column") return ElementKind::Column;
  if (lower == "wall") return ElementKind::Wall;
  if (lower == "slab") return ElementKind::Slab;
  throw ConfigError("unknown element kind '" + name +
                    "' (expected column, wall, or slab)");
}

double travel_time(double x, double x0, double depth, double v) {
  const double dx = x - x0;
  return 2.0 / v * std::sqrt(depth * depth + dx * dx);
}

double ricker_wavelet(double t, double f_c) {
  const double a = kPi * kPi * f_c * f_c * t * t;
  return (1.0 - 2.0 * a) * std::exp(-a);
}

double effective_dt(const SceneSpec& scene) {
  if (scene.dt > 0.0) return scene.dt;
  double t_deep = deepest_apex_time(scene);
  if (t_deep == 0.0) {
    // No rebars: fall back to a nominal 0.1 m cover so the grid still has a
    // well-defined time base.
    t_deep = 2.0 * 0.1 / scene.velocity;
  }
  return 1.25 * t_deep / scene.n_samples;
}

BScan render_bscan(const SceneSpec& scene) {
  check_scene(scene);
  const double dt = effective_dt(scene);
  if (dt <= 0.0) throw ConfigError("scene dt must be > 0");
  const double t_window = dt * scene.n_samples;
  const double t_deep = deepest_apex_time(scene);
  if (t_deep > t_window) {
    throw ConfigError(
        "time window " + std::to_string(t_window) +
        " s is too short for the deepest rebar (apex two-way time " +
        std::to_string(t_deep) + " s)");
  }

  BScan scan;
  scan.n_samples = scene.n_samples;
  scan.n_traces = scene.n_traces;
  scan.dx = scene.dx;
  scan.dt = dt;
  scan.amplitude.assign(
      static_cast<std::size_t>(scene.n_samples) * scene.n_traces, 0.0);

  const double t_ref = 2.0 * kReferenceDepth / scene.velocity;
  for (const Rebar& r : scene.rebars) {
    for (int j = 0; j < scene.n_traces; ++j) {
      const double t0 = travel_time(j * scene.dx, r.x0, r.depth,
                                    scene.velocity);
      const double a = t_ref / t0;
      for (int i = 0; i < scene.n_samples; ++i) {
        scan.amplitude[static_cast<std::size_t>(i) * scene.n_traces + j] +=
            a * ricker_wavelet(i * dt - t0, scene.f_c);
      }
    }
  }

  if (scene.direct_wave) {
    // Strong horizontal band inside the first two wavelet periods: the
    // air/surface arrival every real radargram carries.
    const double t_d = 1.0 / scene.f_c;
    for (int i = 0; i < scene.n_samples; ++i) {
      const double w = 2.0 * ricker_wavelet(i * dt - t_d, scene.f_c);
      if (w == 0.0) continue;
      for (int j = 0; j < scene.n_traces; ++j) {
        scan.amplitude[static_cast<std::size_t>(i) * scene.n_traces + j] += w;
      }
    }
  }

  if (scene.noise_sigma > 0.0) {
    double peak = 0.0;
    for (double v : scan.amplitude) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) peak = 1.0;
    Rng rng(derive_seed(scene.seed, "noise"));
    const double sigma = scene.noise_sigma * peak;
    for (double& v : scan.amplitude) v += sigma * rng.normal();
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : scan.amplitude) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  scan.pixels.resize(scan.amplitude.size());
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < scan.amplitude.size(); ++i) {
      scan.amplitude[i] = (scan.amplitude[i] - lo) * inv;
      scan.pixels[i] =
          static_cast<std::uint8_t>(std::lround(scan.amplitude[i] * 255.0));
    }
  } else {
    std::fill(scan.amplitude.begin(), scan.amplitude.end(), 0.0);
    std::fill(scan.pixels.begin(), scan.pixels.end(), std::uint8_t{0});
  }

  for (const Rebar& r : scene.rebars) {
    Apex apex;
    apex.trace = static_cast<int>(std::lround(r.x0 / scene.dx));
    apex.trace = std::clamp(apex.trace, 0, scene.n_traces - 1);
    apex.sample =
        static_cast<int>(std::lround(2.0 * r.depth / scene.velocity / dt));
    apex.sample = std::clamp(apex.sample, 0, scene.n_samples - 1);
    scan.apexes.push_back(apex);
  }
  return scan;
}

SceneSpec preset_scene(ElementKind kind, std::uint64_t seed) {
  SceneSpec scene;
  scene.element = kind;
  scene.seed = seed;

  int count = 0;
  double spacing = 0.0, pos_jitter = 0.0;
  switch (kind) {
    case ElementKind::Column:  // few bars, wide even spacing
      count = 5;
      spacing = 0.150;
      pos_jitter = 0.010;
      break;
    case ElementKind::Wall:
      count = 7;
      spacing = 0.100;
      pos_jitter = 0.008;
      break;
    case ElementKind::Slab:  // dense mesh, limbs overlap
      count = 12;
      spacing = 0.050;
      pos_jitter = 0.005;
      break;
  }

  Rng rng(derive_seed(seed, "preset",
                      static_cast<std::uint64_t>(kind)));
  const double width = scene.n_traces * scene.dx;
  const double span = spacing * (count - 1);
  const double start =
      (width - span) / 2.0 + rng.uniform(-0.02, 0.02);
  const double base_depth = rng.uniform(0.07, 0.10);
  for (int i = 0; i < count; ++i) {
    Rebar r;
    r.x0 = start + i * spacing + rng.uniform(-pos_jitter, pos_jitter);
    r.x0 = std::clamp(r.x0, 0.0, width);
    r.depth = base_depth + rng.uniform(-0.015, 0.015);
    scene.rebars.push_back(r);
  }
  return scene;
}

SceneManifest make_manifest(const SceneSpec& scene, const BScan& scan,
                            const std::string& image_id) {
  SceneManifest m;
  m.image_id = image_id;
  m.image_file = image_id + ".pgm";
  m.element = scene.element;
  m.width = scan.n_traces;
  m.height = scan.n_samples;
  m.dx = scan.dx;
  m.dt = scan.dt;
  m.velocity = scene.velocity;
  m.f_c = scene.f_c;
  m.noise_sigma = scene.noise_sigma;
  m.direct_wave = scene.direct_wave;
  m.seed = scene.seed;
  m.rebars = scene.rebars;
  m.apexes = scan.apexes;
  return m;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() !=
          static_cast<std::size_t>(image.width) * image.height) {
    throw ConfigError("image dimensions do not match the pixel buffer");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open PGM for writing: " + path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  out.flush();
  if (!out) throw IoError("write failed for PGM: " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PGM: " + path);

  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {  // comment to end of line
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError("truncated PGM header: " + path);
    return tok;
  };

  if (next_token() != "P5") {
    throw FormatError("not a binary PGM (P5): " + path);
  }
  GrayImage img;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) {
      throw FormatError("PGM maxval " + std::to_string(maxval) +
                        " unsupported (expected 255): " + path);
    }
  } catch (const std::logic_error&) {
    throw FormatError("malformed PGM header: " + path);
  }
  if (img.width < 1 || img.height < 1) {
    throw FormatError("PGM has empty dimensions: " + path);
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw FormatError("truncated PGM pixel data: " + path);
  }
  img.id = std::filesystem::path(path).stem().string();
  return img;
}

void write_scene_manifest(const std::string& path, const SceneManifest& m) {
  json j;
  j["image_id"] = m.image_id;
  j["image_file"] = m.image_file;
  j["element"] = element_kind_name(m.element);
  j["width"] = m.width;
  j["height"] = m.height;
  j["dx"] = m.dx;
  j["dt"] = m.dt;
  j["velocity"] = m.velocity;
  j["f_c"] = m.f_c;
  j["noise_sigma"] = m.noise_sigma;
  j["direct_wave"] = m.direct_wave;
  j["seed"] = m.seed;
  json rebars = json::array();
  for (const Rebar& r : m.rebars) {
    rebars.push_back({{"x0", r.x0}, {"depth", r.depth}});
  }
  j["rebars"] = std::move(rebars);
  json apexes = json::array();
  for (const Apex& a : m.apexes) {
    apexes.push_back({{"trace", a.trace}, {"sample", a.sample}});
  }
  j["apexes"] = std::move(apexes);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for manifest: " + path);
}

SceneManifest read_scene_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  SceneManifest m;
  try {
    const json j = json::parse(in);
    m.image_id = j.at("image_id").get<std::string>();
    m.image_file = j.at("image_file").get<std::string>();
    m.element = element_kind_from_name(j.at("element").get<std::string>());
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.dx = j.at("dx").get<double>();
    m.dt = j.at("dt").get<double>();
    m.velocity = j.at("velocity").get<double>();
    m.f_c = j.at("f_c").get<double>();
    m.noise_sigma = j.at("noise_sigma").get<double>();
    m.direct_wave = j.at("direct_wave").get<bool>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const json& rj : j.at("rebars")) {
      m.rebars.push_back({rj.at("x0").get<double>(),
                          rj.at("depth").get<double>()});
    }
    for (const json& aj : j.at("apexes")) {
      m.apexes.push_back({aj.at("trace").get<int>(),
                          aj.at("sample").get<int>()});
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed scene manifest " + path + ": " + e.what());
  }
  if (m.width < 1 || m.height < 1) {
    throw FormatError("scene manifest has empty dimensions: " + path);
  }
  if (m.rebars.size() != m.apexes.size()) {
    throw FormatError("scene manifest rebar/apex counts differ: " + path);
  }
  return m;
}

SceneManifest save_scene(const SceneSpec& scene, const std::string& dir,
                         const std::string& stem) {
  const BScan scan = render_bscan(scene);
  SceneManifest m = make_manifest(scene, scan, stem);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " +
                        ec.message());

  GrayImage img;
  img.id = stem;
  img.width = scan.n_traces;
  img.height = scan.n_samples;
  img.pixels = scan.pixels;
  const std::filesystem::path base(dir);
  write_pgm((base / (stem + ".pgm")).string(), img);
  write_scene_manifest((base / (stem + ".json")).string(), m);
  return m;
}

}  // namespace rebarnet
