#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rebarnet/netdef.hpp"
#include "rebarnet/windowing.hpp"

namespace rebarnet {

// Mini-batch SGD training with momentum and weight decay, stratified
// train/test splitting, and evaluation with per-class statistics.

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int epochs = 30;
  double lr_decay_factor = 1.0;  // multiplies lr every lr_decay_every epochs
  int lr_decay_every = 0;        // 0 disables the decay schedule
  double train_frac = 0.8;       // used by the auto-splitting train() overload
  std::uint64_t seed = 1;
  bool verbose = false;          // per-epoch progress on stdout
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  // confusion[t][p]: samples of true class t predicted as p.
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> precision;  // per class; 0 when the class is never predicted
  std::vector<double> recall;     // per class; 0 when the class has no samples
  std::vector<int> predictions;   // one per sample, dataset order
};

struct EpochStats {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // sample-weighted mean cross-entropy over the epoch
  double test_acc = 0;
};

struct Metrics {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;        // 1-based epoch of the snapshot kept
  double best_test_acc = 0;
  EvalResult final_eval;     // best snapshot evaluated on the test split
};

struct TrainResult {
  Network net;  // parameters of the best-test-accuracy epoch
  Metrics metrics;
};

struct SplitResult {
  Dataset train;
  Dataset test;
};

// Stratified split: per class, shuffle then cut at floor(train_frac * n),
// clamped so both sides keep at least one sample. A class with fewer than
// two samples cannot be split and raises DataError.
SplitResult split_dataset(const Dataset& ds, double train_frac,
                          std::uint64_t seed);

// One SGD-with-momentum update:
//   v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v.
void sgd_step(Tensor& weights, Tensor& velocity, const Tensor& grad,
              double lr, double momentum, double weight_decay);

// Trains a fresh network on the given split. Keeps the parameters of the
// epoch with the highest test accuracy (earliest on ties). Non-finite
// training loss raises DivergenceError naming the epoch.
TrainResult train_on(const NetworkSpec& spec, const Dataset& train_ds,
                     const Dataset& test_ds, const TrainConfig& cfg);

// Splits the dataset internally (stratified, cfg.train_frac, cfg.seed) and
// delegates to train_on.
TrainResult train(const NetworkSpec& spec, const Dataset& ds,
                  const TrainConfig& cfg);

// Batched inference over the whole dataset.
EvalResult evaluate(const Network& net, const Dataset& ds,
                    int batch_size = 64);

// metrics.csv: "epoch,train_loss,test_acc" rows followed by a commented
// confusion-matrix block for the best snapshot.
void write_metrics_csv(const Metrics& metrics, const std::string& path);

}  // namespace rebarnet
