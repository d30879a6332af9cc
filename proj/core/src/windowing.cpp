#include "rebarnet/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "rebarnet/errors.hpp"
#include "rebarnet/layers.hpp"

namespace rebarnet {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::pair<int, int>> kWindowPresets = {
    {120, 30}, {150, 50}, {200, 80}, {250, 100}};

bool is_preset_window(int w, int h) {
  for (const auto& [pw, ph] : kWindowPresets) {
    if (pw == w && ph == h) return true;
  }
  return false;
}

const char* window_label_name(WindowLabel label) {
  switch (label) {
    case WindowLabel::Left: return "Left";
    case WindowLabel::Peak: return "Peak";
    case WindowLabel::Right: return "Right";
    case WindowLabel::Other: return "Other";
  }
  return "?";
}

const char* window_label_name(int label) {
  if (label < 0 || label >= kNumClasses) return "?";
  return window_label_name(static_cast<WindowLabel>(label));
}

std::vector<Rect> split_image(int image_w, int image_h, int win_w, int win_h,
                              int stride_x, int stride_y) {
  if (win_w <= 0 || win_h <= 0)
    throw ConfigError("window dimensions must be positive, got " +
                      std::to_string(win_w) + "x" + std::to_string(win_h));
  if (stride_x <= 0 || stride_y <= 0)
    throw ConfigError("strides must be positive, got " +
                      std::to_string(stride_x) + "," +
                      std::to_string(stride_y));
  std::vector<Rect> rects;
  if (image_w < win_w || image_h < win_h) return rects;
  for (int y = 0; y + win_h <= image_h; y += stride_y)
    for (int x = 0; x + win_w <= image_w; x += stride_x)
      rects.push_back(Rect{x, y, win_w, win_h});
  return rects;
}

namespace {

// Continuous reflection-curve row for rebar (x0, depth) at pixel column c.
double curve_row(const SceneManifest& scene, const Rebar& rebar, int c) {
  const double t =
      travel_time(c * scene.dx, rebar.x0, rebar.depth, scene.velocity);
  return t / scene.dt;
}

// True when rebar i's limb, sampled over the rect's column span, enters the
// rect's row range [y, y+h). The curve is monotone in |x - x0|, so checking
// the two endpoint columns bounds the whole span.
bool limb_crosses(const Rect& rect, const SceneManifest& scene,
                  const Rebar& rebar) {
  const double r0 = curve_row(scene, rebar, rect.x);
  const double r1 = curve_row(scene, rebar, rect.x + rect.w - 1);
  const double lo = std::min(r0, r1);
  const double hi = std::max(r0, r1);
  return lo < rect.y + rect.h && hi >= rect.y;
}

}  // namespace

WindowLabel auto_label(const Rect& rect, const SceneManifest& scene,
                       const LabelGeometry& geom) {
  if (scene.dx <= 0.0 || scene.dt <= 0.0 || scene.velocity <= 0.0)
    throw ConfigError("scene manifest has non-positive dx/dt/velocity");
  if (scene.apexes.size() != scene.rebars.size())
    throw FormatError("scene manifest apex/rebar count mismatch: " +
                      std::to_string(scene.apexes.size()) + " vs " +
                      std::to_string(scene.rebars.size()));
  if (geom.peak_band <= 0.0 || geom.peak_band > 1.0)
    throw ConfigError("peak_band must lie in (0, 1], got " +
                      std::to_string(geom.peak_band));
  if (geom.proximity_widths <= 0.0)
    throw ConfigError("proximity_widths must be positive");

  // Apexes whose pixel position falls inside the rect.
  int inside = -1;
  int inside_count = 0;
  for (std::size_t i = 0; i < scene.apexes.size(); ++i) {
    const Apex& a = scene.apexes[i];
    if (a.trace >= rect.x && a.trace < rect.x + rect.w && a.sample >= rect.y &&
        a.sample < rect.y + rect.h) {
      inside = static_cast<int>(i);
      ++inside_count;
    }
  }
  if (inside_count == 1) {
    const Apex& a = scene.apexes[static_cast<std::size_t>(inside)];
    const double band_lo = rect.x + (1.0 - geom.peak_band) / 2.0 * rect.w;
    const double band_hi = rect.x + (1.0 + geom.peak_band) / 2.0 * rect.w;
    if (a.trace >= band_lo && a.trace < band_hi) return WindowLabel::Peak;
  }
  if (inside_count > 0) return WindowLabel::Other;

  // No apex inside: look for the nearest hyperbola on each side whose limb
  // reaches into this rect. An apex to the RIGHT makes this a LEFT-limb
  // window, and vice versa.
  const double max_gap = geom.proximity_widths * rect.w;
  int right_apex = -1, left_apex = -1;
  double right_gap = std::numeric_limits<double>::infinity();
  double left_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.apexes.size(); ++i) {
    const Apex& a = scene.apexes[i];
    if (a.trace >= rect.x + rect.w) {
      const double gap = a.trace - (rect.x + rect.w - 1);
      if (gap < right_gap) {
        right_gap = gap;
        right_apex = static_cast<int>(i);
      }
    } else if (a.trace < rect.x) {
      const double gap = rect.x - a.trace;
      if (gap < left_gap) {
        left_gap = gap;
        left_apex = static_cast<int>(i);
      }
    }
  }
  const bool left_ok =
      right_apex >= 0 && right_gap <= max_gap &&
      limb_crosses(rect, scene, scene.rebars[static_cast<std::size_t>(right_apex)]);
  const bool right_ok =
      left_apex >= 0 && left_gap <= max_gap &&
      limb_crosses(rect, scene, scene.rebars[static_cast<std::size_t>(left_apex)]);
  if (left_ok && right_ok)
    return right_gap <= left_gap ? WindowLabel::Left : WindowLabel::Right;
  if (left_ok) return WindowLabel::Left;
  if (right_ok) return WindowLabel::Right;
  return WindowLabel::Other;
}

Tensor Dataset::batch(const std::vector<int>& indices, int channels) const {
  if (channels <= 0) throw ConfigError("batch channels must be positive");
  if (indices.empty()) throw DataError("batch: empty index list");
  Tensor out({static_cast<int>(indices.size()), channels, input_h, input_w});
  const std::size_t numel = sample_numel();
  double* dst = out.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const int idx = indices[b];
    if (idx < 0 || static_cast<std::size_t>(idx) >= count())
      throw DataError("batch: sample index " + std::to_string(idx) +
                      " out of range (dataset has " + std::to_string(count()) +
                      " samples)");
    const float* src = pixels.data() + static_cast<std::size_t>(idx) * numel;
    for (int c = 0; c < channels; ++c) {
      double* plane = dst + (b * channels + c) * numel;
      for (std::size_t i = 0; i < numel; ++i)
        plane[i] = static_cast<double>(src[i]);
    }
  }
  return out;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.input_h = input_h;
  out.input_w = input_w;
  out.win_w = win_w;
  out.win_h = win_h;
  out.stride_x = stride_x;
  out.stride_y = stride_y;
  out.augmented = augmented;
  const std::size_t numel = sample_numel();
  out.pixels.reserve(indices.size() * numel);
  out.labels.reserve(indices.size());
  out.info.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= count())
      throw DataError("subset: sample index " + std::to_string(idx) +
                      " out of range");
    const float* src = pixels.data() + static_cast<std::size_t>(idx) * numel;
    out.pixels.insert(out.pixels.end(), src, src + numel);
    out.labels.push_back(labels[static_cast<std::size_t>(idx)]);
    out.info.push_back(info[static_cast<std::size_t>(idx)]);
  }
  return out;
}

std::vector<std::size_t> class_histogram(const Dataset& ds) {
  std::vector<std::size_t> hist(kNumClasses, 0);
  for (int label : ds.labels) {
    if (label < 0 || label >= kNumClasses)
      throw DataError("dataset contains out-of-range label " +
                      std::to_string(label));
    ++hist[static_cast<std::size_t>(label)];
  }
  return hist;
}

void flip_augment(Dataset& ds) {
  const std::size_t n = ds.count();
  const std::size_t numel = ds.sample_numel();
  ds.pixels.reserve(2 * n * numel);
  ds.labels.reserve(2 * n);
  ds.info.reserve(2 * n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t base = s * numel;
    for (int r = 0; r < ds.input_h; ++r) {
      const float* row =
          ds.pixels.data() + base + static_cast<std::size_t>(r) * ds.input_w;
      for (int c = ds.input_w - 1; c >= 0; --c) ds.pixels.push_back(row[c]);
    }
    int label = ds.labels[s];
    if (label == static_cast<int>(WindowLabel::Left))
      label = static_cast<int>(WindowLabel::Right);
    else if (label == static_cast<int>(WindowLabel::Right))
      label = static_cast<int>(WindowLabel::Left);
    ds.labels.push_back(label);
    SampleInfo fi = ds.info[s];
    fi.flipped = true;
    ds.info.push_back(fi);
  }
  ds.augmented = true;
}

namespace {

void append_window(Dataset& ds, const GrayImage& image, const Rect& rect,
                   int label) {
  // Crop to [1, h, w] in [0, 1].
  Tensor crop({1, rect.h, rect.w});
  double* cd = crop.data();
  for (int r = 0; r < rect.h; ++r) {
    const std::uint8_t* src =
        image.pixels.data() +
        static_cast<std::size_t>(rect.y + r) * image.width + rect.x;
    for (int c = 0; c < rect.w; ++c)
      cd[static_cast<std::size_t>(r) * rect.w + c] = src[c] / 255.0;
  }
  if (rect.h != ds.input_h || rect.w != ds.input_w)
    crop = resize_bilinear(crop, ds.input_h, ds.input_w);
  const double* rd = crop.data();
  for (std::size_t i = 0; i < ds.sample_numel(); ++i)
    ds.pixels.push_back(static_cast<float>(rd[i]));
  ds.labels.push_back(label);
  ds.info.push_back(SampleInfo{image.id, rect, false});
}

}  // namespace

Dataset build_dataset(const std::vector<ScenePair>& scenes, int win_w,
                      int win_h, int stride_x, int stride_y, int input_h,
                      int input_w, bool augment, const LabelGeometry& geom) {
  if (scenes.empty()) throw DataError("build_dataset: no scenes given");
  if (input_h < 2 || input_w < 2)
    throw ConfigError("network input size must be at least 2x2, got " +
                      std::to_string(input_w) + "x" + std::to_string(input_h));
  Dataset ds;
  ds.input_h = input_h;
  ds.input_w = input_w;
  ds.win_w = win_w;
  ds.win_h = win_h;
  ds.stride_x = stride_x;
  ds.stride_y = stride_y;
  for (const ScenePair& sp : scenes) {
    if (sp.image.width != sp.manifest.width ||
        sp.image.height != sp.manifest.height)
      throw FormatError("scene '" + sp.manifest.image_id +
                        "': image is " + std::to_string(sp.image.width) + "x" +
                        std::to_string(sp.image.height) +
                        " but manifest says " +
                        std::to_string(sp.manifest.width) + "x" +
                        std::to_string(sp.manifest.height));
    const std::vector<Rect> rects =
        split_image(sp.image.width, sp.image.height, win_w, win_h, stride_x,
                    stride_y);
    for (const Rect& rect : rects) {
      const WindowLabel label = auto_label(rect, sp.manifest, geom);
      append_window(ds, sp.image, rect, static_cast<int>(label));
    }
  }
  if (augment) flip_augment(ds);
  const std::vector<std::size_t> hist = class_histogram(ds);
  for (int c = 0; c < kNumClasses; ++c) {
    if (hist[static_cast<std::size_t>(c)] == 0) {
      std::string counts;
      for (int k = 0; k < kNumClasses; ++k) {
        if (k) counts += ", ";
        counts += std::string(window_label_name(k)) + "=" +
                  std::to_string(hist[static_cast<std::size_t>(k)]);
      }
      throw DataError("dataset starved: class " +
                      std::string(window_label_name(c)) +
                      " has no samples (counts: " + counts +
                      "); try a different window/stride or more images");
    }
  }
  return ds;
}

Dataset build_dataset(const std::vector<std::string>& manifest_paths,
                      int win_w, int win_h, int stride_x, int stride_y,
                      int input_h, int input_w, bool augment,
                      const LabelGeometry& geom) {
  std::vector<ScenePair> scenes;
  scenes.reserve(manifest_paths.size());
  for (const std::string& path : manifest_paths) {
    ScenePair sp;
    sp.manifest = read_scene_manifest(path);
    const fs::path image_path =
        fs::path(path).parent_path() / sp.manifest.image_file;
    sp.image = read_pgm(image_path.string());
    scenes.push_back(std::move(sp));
  }
  return build_dataset(scenes, win_w, win_h, stride_x, stride_y, input_h,
                       input_w, augment, geom);
}

std::vector<std::string> find_scene_manifests(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw IoError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() != ".json") continue;
    const std::string stem = p.filename().string();
    if (stem == "run_manifest.json" || stem == "meta.json") continue;
    paths.push_back(p.string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  if (ds.count() == 0) throw DataError("save_dataset: dataset is empty");
  fs::create_directories(dir);
  const fs::path root(dir);

  {
    std::ofstream bin(root / "data.bin", std::ios::binary);
    if (!bin) throw IoError("cannot open for writing: " +
                            (root / "data.bin").string());
    bin.write(reinterpret_cast<const char*>(ds.pixels.data()),
              static_cast<std::streamsize>(ds.pixels.size() * sizeof(float)));
    if (!bin) throw IoError("short write: " + (root / "data.bin").string());
  }
  {
    std::ofstream csv(root / "index.csv");
    if (!csv) throw IoError("cannot open for writing: " +
                            (root / "index.csv").string());
    csv << "sample_id,image_id,x,y,w,h,flipped,label\n";
    for (std::size_t s = 0; s < ds.count(); ++s) {
      const SampleInfo& si = ds.info[s];
      csv << s << ',' << si.image_id << ',' << si.rect.x << ',' << si.rect.y
          << ',' << si.rect.w << ',' << si.rect.h << ','
          << (si.flipped ? 1 : 0) << ',' << ds.labels[s] << '\n';
    }
    if (!csv) throw IoError("short write: " + (root / "index.csv").string());
  }
  {
    json meta;
    meta["format"] = "rebarnet-dataset";
    meta["version"] = 1;
    meta["count"] = ds.count();
    meta["input_h"] = ds.input_h;
    meta["input_w"] = ds.input_w;
    meta["win_w"] = ds.win_w;
    meta["win_h"] = ds.win_h;
    meta["stride_x"] = ds.stride_x;
    meta["stride_y"] = ds.stride_y;
    meta["augmented"] = ds.augmented;
    json hist = json::object();
    const std::vector<std::size_t> counts = class_histogram(ds);
    for (int c = 0; c < kNumClasses; ++c)
      hist[window_label_name(c)] = counts[static_cast<std::size_t>(c)];
    meta["class_histogram"] = hist;
    std::ofstream mj(root / "meta.json");
    if (!mj) throw IoError("cannot open for writing: " +
                           (root / "meta.json").string());
    mj << meta.dump(2) << '\n';
    if (!mj) throw IoError("short write: " + (root / "meta.json").string());
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream iss(line);
  while (std::getline(iss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root))
    throw IoError("not a dataset directory: " + dir);

  Dataset ds;
  std::size_t expected_count = 0;
  {
    std::ifstream mj(root / "meta.json");
    if (!mj) throw IoError("cannot open: " + (root / "meta.json").string());
    json meta;
    try {
      mj >> meta;
      if (meta.value("format", "") != "rebarnet-dataset")
        throw FormatError("meta.json is not a dataset descriptor");
      expected_count = meta.at("count").get<std::size_t>();
      ds.input_h = meta.at("input_h").get<int>();
      ds.input_w = meta.at("input_w").get<int>();
      ds.win_w = meta.at("win_w").get<int>();
      ds.win_h = meta.at("win_h").get<int>();
      ds.stride_x = meta.at("stride_x").get<int>();
      ds.stride_y = meta.at("stride_y").get<int>();
      ds.augmented = meta.at("augmented").get<bool>();
    } catch (const json::exception& e) {
      throw FormatError("malformed meta.json: " + std::string(e.what()));
    }
    if (ds.input_h <= 0 || ds.input_w <= 0)
      throw FormatError("meta.json has non-positive input dimensions");
  }
  {
    std::ifstream csv(root / "index.csv");
    if (!csv) throw IoError("cannot open: " + (root / "index.csv").string());
    std::string line;
    if (!std::getline(csv, line))
      throw FormatError("index.csv is empty");
    std::size_t row = 0;
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> f = split_csv_line(line);
      if (f.size() != 8)
        throw FormatError("index.csv row " + std::to_string(row) + " has " +
                          std::to_string(f.size()) + " fields, expected 8");
      try {
        SampleInfo si;
        si.image_id = f[1];
        si.rect = Rect{std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]),
                       std::stoi(f[5])};
        si.flipped = std::stoi(f[6]) != 0;
        const int label = std::stoi(f[7]);
        if (label < 0 || label >= kNumClasses)
          throw FormatError("index.csv row " + std::to_string(row) +
                            " has out-of-range label " + f[7]);
        ds.info.push_back(std::move(si));
        ds.labels.push_back(label);
      } catch (const std::invalid_argument&) {
        throw FormatError("index.csv row " + std::to_string(row) +
                          " has a non-numeric field");
      } catch (const std::out_of_range&) {
        throw FormatError("index.csv row " + std::to_string(row) +
                          " has an out-of-range numeric field");
      }
      ++row;
    }
    if (ds.count() != expected_count)
      throw FormatError("index.csv lists " + std::to_string(ds.count()) +
                        " samples but meta.json says " +
                        std::to_string(expected_count));
  }
  {
    std::ifstream bin(root / "data.bin", std::ios::binary | std::ios::ate);
    if (!bin) throw IoError("cannot open: " + (root / "data.bin").string());
    const std::streamsize bytes = bin.tellg();
    const std::size_t expected_bytes =
        expected_count * ds.sample_numel() * sizeof(float);
    if (static_cast<std::size_t>(bytes) != expected_bytes)
      throw FormatError("data.bin is " + std::to_string(bytes) +
                        " bytes, expected " + std::to_string(expected_bytes));
    bin.seekg(0);
    ds.pixels.resize(expected_count * ds.sample_numel());
    bin.read(reinterpret_cast<char*>(ds.pixels.data()),
             static_cast<std::streamsize>(expected_bytes));
    if (bin.gcount() != static_cast<std::streamsize>(expected_bytes))
      throw FormatError("data.bin truncated while reading");
  }
  return ds;
}

}  // namespace rebarnet
