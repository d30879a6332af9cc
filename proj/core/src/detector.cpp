#include "rebarnet/detector.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "rebarnet/checkpoint.hpp"
#include "rebarnet/errors.hpp"
#include "rebarnet/layers.hpp"
#include "rebarnet/rng.hpp"

namespace rebarnet {

namespace fs = std::filesystem;

namespace {

// Crop rect from an 8-bit image to a [1,h,w] tensor in [0,1], resized to the
// network input.
Tensor crop_for_net(const GrayImage& image, const Rect& rect, int in_h,
                    int in_w) {
  Tensor crop({1, rect.h, rect.w});
  double* cd = crop.data();
  for (int r = 0; r < rect.h; ++r) {
    const std::uint8_t* src =
        image.pixels.data() +
        static_cast<std::size_t>(rect.y + r) * image.width + rect.x;
    for (int c = 0; c < rect.w; ++c)
      cd[static_cast<std::size_t>(r) * rect.w + c] = src[c] / 255.0;
  }
  if (rect.h != in_h || rect.w != in_w)
    crop = resize_bilinear(crop, in_h, in_w);
  return crop;
}

}  // namespace

LabelMap classify_windows(const Network& net, const GrayImage& image,
                          int win_w, int win_h, int stride_x, int stride_y,
                          int batch_size) {
  if (batch_size < 1)
    throw ConfigError("classify_windows: batch_size must be at least 1");
  if (net.spec.num_classes != kNumClasses)
    throw ConfigError("classify_windows expects a " +
                      std::to_string(kNumClasses) + "-class network, got " +
                      std::to_string(net.spec.num_classes));

  LabelMap map;
  map.image_w = image.width;
  map.image_h = image.height;
  map.win_w = win_w;
  map.win_h = win_h;
  map.stride_x = stride_x;
  map.stride_y = stride_y;

  const std::vector<Rect> rects =
      split_image(image.width, image.height, win_w, win_h, stride_x, stride_y);
  map.entries.reserve(rects.size());

  const int in_h = net.spec.in_h, in_w = net.spec.in_w;
  const std::size_t numel = static_cast<std::size_t>(in_h) * in_w;
  for (std::size_t start = 0; start < rects.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop =
        std::min(rects.size(), start + static_cast<std::size_t>(batch_size));
    const int n = static_cast<int>(stop - start);
    Tensor batch({n, net.spec.in_channels, in_h, in_w});
    double* bd = batch.data();
    for (std::size_t b = 0; b < stop - start; ++b) {
      const Tensor crop = crop_for_net(image, rects[start + b], in_h, in_w);
      for (int c = 0; c < net.spec.in_channels; ++c)
        std::copy(crop.data(), crop.data() + numel,
                  bd + (b * net.spec.in_channels + c) * numel);
    }
    const Tensor probs = infer_probs(net, batch);
    const double* pd = probs.data();
    for (std::size_t b = 0; b < stop - start; ++b) {
      LabelEntry entry;
      entry.rect = rects[start + b];
      int best = 0;
      for (int k = 0; k < kNumClasses; ++k) {
        entry.probs[static_cast<std::size_t>(k)] =
            pd[b * kNumClasses + static_cast<std::size_t>(k)];
        if (entry.probs[static_cast<std::size_t>(k)] >
            entry.probs[static_cast<std::size_t>(best)])
          best = k;
      }
      entry.label = best;
      map.entries.push_back(entry);
    }
  }
  return map;
}

LabelMap oracle_label_map(const SceneManifest& scene, int win_w, int win_h,
                          int stride_x, int stride_y,
                          const LabelGeometry& geom) {
  LabelMap map;
  map.image_w = scene.width;
  map.image_h = scene.height;
  map.win_w = win_w;
  map.win_h = win_h;
  map.stride_x = stride_x;
  map.stride_y = stride_y;
  const std::vector<Rect> rects =
      split_image(scene.width, scene.height, win_w, win_h, stride_x, stride_y);
  map.entries.reserve(rects.size());
  for (const Rect& rect : rects) {
    LabelEntry entry;
    entry.rect = rect;
    entry.label = static_cast<int>(auto_label(rect, scene, geom));
    entry.probs[static_cast<std::size_t>(entry.label)] = 1.0;
    map.entries.push_back(entry);
  }
  return map;
}

std::vector<Detection> localize_rebar(const LabelMap& map) {
  if (map.stride_x <= 0)
    throw ConfigError("localize_rebar: label map has no stride");

  struct PeakRect {
    int x;
    double center;
    double prob;
  };
  std::vector<PeakRect> peaks;
  for (const LabelEntry& e : map.entries) {
    if (e.label == static_cast<int>(WindowLabel::Peak))
      peaks.push_back({e.rect.x, e.rect.x + e.rect.w / 2.0,
                       e.probs[static_cast<std::size_t>(WindowLabel::Peak)]});
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const PeakRect& a, const PeakRect& b) { return a.x < b.x; });

  std::vector<Detection> detections;
  const int max_gap = 2 * map.stride_x;
  std::size_t i = 0;
  while (i < peaks.size()) {
    std::size_t j = i + 1;
    while (j < peaks.size() && peaks[j].x - peaks[j - 1].x <= max_gap) ++j;

    double wsum = 0.0, csum = 0.0, psum = 0.0;
    const int cluster_min_x = peaks[i].x;
    const int cluster_max_x = peaks[j - 1].x;
    for (std::size_t k = i; k < j; ++k) {
      wsum += peaks[k].prob;
      csum += peaks[k].prob * peaks[k].center;
      psum += peaks[k].prob;
    }
    Detection det;
    det.x_px = wsum > 0.0 ? csum / wsum
                          : (cluster_min_x + cluster_max_x + map.win_w) / 2.0;
    double conf = psum / static_cast<double>(j - i);  // mean Peak probability

    for (const LabelEntry& e : map.entries) {
      if (e.label == static_cast<int>(WindowLabel::Left) &&
          e.rect.x < cluster_min_x && cluster_min_x - e.rect.x <= max_gap)
        det.flanked_left = true;
      if (e.label == static_cast<int>(WindowLabel::Right) &&
          e.rect.x > cluster_max_x && e.rect.x - cluster_max_x <= max_gap)
        det.flanked_right = true;
    }
    if (det.flanked_left) conf += 0.1;
    if (det.flanked_right) conf += 0.1;
    det.confidence = std::min(1.0, conf);
    detections.push_back(det);
    i = j;
  }
  std::sort(detections.begin(), detections.end(),
            [](const Detection& a, const Detection& b) {
              return a.x_px < b.x_px;
            });
  return detections;
}

void write_detections_csv(const std::string& path, const std::string& image_id,
                          const std::vector<Detection>& detections) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "image_id,x_px,confidence,flanked_left,flanked_right\n";
  char buf[160];
  for (const Detection& d : detections) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.4f,%d,%d\n", image_id.c_str(),
                  d.x_px, d.confidence, d.flanked_left ? 1 : 0,
                  d.flanked_right ? 1 : 0);
    out << buf;
  }
  if (!out) throw IoError("short write: " + path);
}

NetChoice parse_net_name(const std::string& name) {
  NetChoice choice;
  choice.name = name;
  if (name == "tranet") {
    choice.default_h = 28;
    choice.default_w = 28;
    return choice;
  }
  if (name == "alexnet") {
    choice.alexnet = true;
    choice.default_h = 227;
    choice.default_w = 227;
    return choice;
  }
  if (name.rfind("alexnet-s", 0) == 0) {
    const std::string tail = name.substr(9);
    if (!tail.empty() &&
        std::all_of(tail.begin(), tail.end(),
                    [](unsigned char c) { return std::isdigit(c); })) {
      const int n = std::stoi(tail);
      if (n >= 1 && n <= 64) {
        choice.alexnet = true;
        choice.width_scale = 1.0 / n;
        choice.default_h = 64;
        choice.default_w = 64;
        return choice;
      }
    }
  }
  throw ConfigError("unknown network '" + name +
                    "' (expected tranet, alexnet, or alexnet-sN)");
}

NetworkSpec build_net(const NetChoice& choice, int in_h, int in_w,
                      int num_classes) {
  if (choice.alexnet)
    return build_alexnet(in_h, in_w, num_classes, 1, choice.width_scale);
  return build_tranet(in_h, in_w, num_classes, 1);
}

std::vector<ScenePair> synth_corpus(const std::string& corpus, int count,
                                    std::uint64_t seed, double noise) {
  if (count < 1)
    throw ConfigError("corpus needs at least 1 image, got " +
                      std::to_string(count));
  if (noise < 0.0)
    throw ConfigError("noise level must be non-negative");
  const std::vector<ElementKind> cycle = {ElementKind::Column,
                                          ElementKind::Wall, ElementKind::Slab};
  std::vector<ScenePair> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ElementKind kind;
    if (corpus == "mixed")
      kind = cycle[static_cast<std::size_t>(i) % cycle.size()];
    else
      kind = element_kind_from_name(corpus);
    const std::uint64_t scene_seed =
        derive_seed(seed, "corpus", static_cast<std::uint64_t>(i));
    SceneSpec spec = preset_scene(kind, scene_seed);
    spec.noise_sigma = noise;
    const BScan scan = render_bscan(spec);

    char stem[64];
    std::snprintf(stem, sizeof(stem), "scene_%s_%04d",
                  element_kind_name(kind), i);
    ScenePair sp;
    sp.manifest = make_manifest(spec, scan, stem);
    sp.image.id = stem;
    sp.image.width = scan.n_traces;
    sp.image.height = scan.n_samples;
    sp.image.pixels = scan.pixels;
    scenes.push_back(std::move(sp));
  }
  return scenes;
}

namespace {

std::string cell_tag(const RunReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s_%dx%d_%s_s%llu", r.network.c_str(),
                r.window_w, r.window_h, r.corpus.c_str(),
                static_cast<unsigned long long>(r.seed));
  return buf;
}

}  // namespace

std::vector<RunReport> sweep_window_sizes(const SweepConfig& cfg) {
  if (cfg.nets.empty() || cfg.windows.empty() || cfg.corpora.empty() ||
      cfg.seeds.empty())
    throw ConfigError("sweep needs at least one net, window, corpus, and seed");
  if (cfg.epochs < 1)
    throw ConfigError("sweep epochs must be at least 1");

  std::map<std::pair<std::string, std::uint64_t>, std::vector<ScenePair>>
      corpus_cache;
  const auto corpus_of = [&](const std::string& name, std::uint64_t seed)
      -> const std::vector<ScenePair>& {
    const auto key = std::make_pair(name, seed);
    auto it = corpus_cache.find(key);
    if (it == corpus_cache.end())
      it = corpus_cache
               .emplace(key, synth_corpus(name, cfg.images_per_corpus, seed,
                                          cfg.noise))
               .first;
    return it->second;
  };

  std::vector<RunReport> reports;
  for (const std::string& net_name : cfg.nets) {
    const NetChoice choice = parse_net_name(net_name);
    for (const auto& [win_w, win_h] : cfg.windows) {
      for (const std::string& corpus : cfg.corpora) {
        for (const std::uint64_t seed : cfg.seeds) {
          RunReport report;
          report.network = net_name;
          report.window_w = win_w;
          report.window_h = win_h;
          report.corpus = corpus;
          report.seed = seed;

          const auto t0 = std::chrono::steady_clock::now();
          try {
            const std::vector<ScenePair>& scenes = corpus_of(corpus, seed);
            const Dataset ds = build_dataset(
                scenes, win_w, win_h, std::max(1, win_w / 2),
                std::max(1, win_h / 2), choice.default_h, choice.default_w,
                /*augment=*/false);
            TrainConfig tc = cfg.train;
            tc.epochs = cfg.epochs;
            tc.seed = seed;
            tc.verbose = false;
            const NetworkSpec spec =
                build_net(choice, choice.default_h, choice.default_w);
            const TrainResult res = train(spec, ds, tc);
            report.test_accuracy = res.metrics.best_test_acc;
            report.epochs_run =
                static_cast<int>(res.metrics.epochs.size());
            if (!cfg.out_dir.empty()) {
              const fs::path cell_dir =
                  fs::path(cfg.out_dir) / "cells" / cell_tag(report);
              fs::create_directories(cell_dir);
              save_checkpoint(res.net, (cell_dir / "checkpoint.rbsc").string());
              write_metrics_csv(res.metrics,
                                (cell_dir / "metrics.csv").string());
            }
          } catch (const DivergenceError&) {
            report.status = "diverged";
          } catch (const DataError&) {
            report.status = "starved";
          }
          const auto t1 = std::chrono::steady_clock::now();
          report.wall_secs =
              std::chrono::duration<double>(t1 - t0).count();
          if (cfg.verbose)
            std::printf("[sweep] %-36s %s acc=%.4f (%.1fs)\n",
                        cell_tag(report).c_str(), report.status.c_str(),
                        report.test_accuracy, report.wall_secs);
          reports.push_back(std::move(report));
        }
      }
    }
  }
  return reports;
}

void write_sweep_csv(const std::vector<RunReport>& reports,
                     const std::string& path, bool deterministic) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "network,window_w,window_h,corpus,seed,test_accuracy,epochs_run,"
         "wall_secs,status\n";
  char buf[256];
  for (const RunReport& r : reports) {
    const double wall = deterministic ? 0.0 : r.wall_secs;
    if (r.status == "ok")
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%s,%llu,%.6f,%d,%.3f,%s\n",
                    r.network.c_str(), r.window_w, r.window_h,
                    r.corpus.c_str(), static_cast<unsigned long long>(r.seed),
                    r.test_accuracy, r.epochs_run, wall, r.status.c_str());
    else
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%s,%llu,,,%.3f,%s\n",
                    r.network.c_str(), r.window_w, r.window_h,
                    r.corpus.c_str(), static_cast<unsigned long long>(r.seed),
                    wall, r.status.c_str());
    out << buf;
  }
  if (!out) throw IoError("short write: " + path);
}

std::vector<ElementRow> compare_elements(const SweepConfig& cfg) {
  const std::vector<RunReport> reports = sweep_window_sizes(cfg);
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
          if (r.network != net || r.corpus != corpus || r.window_w != win_w ||
              r.window_h != win_h)
            continue;
          row.seeds.push_back(r.seed);
          if (r.status == "ok") {
            row.accs.push_back(r.test_accuracy);
            sum += r.test_accuracy;
            ++ok;
          } else {
            row.accs.push_back(std::numeric_limits<double>::quiet_NaN());
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
  return rows;
}

void write_elements_csv(const std::vector<ElementRow>& rows,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  // All rows of one file share a seed list; take it from the first row.
  out << "network,corpus,window_w,window_h,mean_accuracy,std_accuracy";
  if (!rows.empty())
    for (const std::uint64_t s : rows.front().seeds)
      out << ",acc_seed_" << s;
  out << '\n';
  char buf[64];
  for (const ElementRow& row : rows) {
    out << row.network << ',' << row.corpus << ',' << row.window_w << ','
        << row.window_h << ',';
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", row.mean_acc, row.std_acc);
    out << buf;
    for (const double a : row.accs) {
      if (std::isfinite(a)) {
        std::snprintf(buf, sizeof(buf), ",%.6f", a);
        out << buf;
      } else {
        out << ',';
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("short write: " + path);
}

}  // namespace rebarnet
