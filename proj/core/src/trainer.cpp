#include "rebarnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rebarnet/errors.hpp"
#include "rebarnet/layers.hpp"
#include "rebarnet/rng.hpp"

namespace rebarnet {

namespace {

void check_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1)
    throw ConfigError("epochs must be at least 1, got " +
                      std::to_string(cfg.epochs));
  if (cfg.batch_size < 1)
    throw ConfigError("batch_size must be at least 1, got " +
                      std::to_string(cfg.batch_size));
  if (!(cfg.lr > 0.0))
    throw ConfigError("learning rate must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("momentum must lie in [0, 1), got " +
                      std::to_string(cfg.momentum));
  if (cfg.weight_decay < 0.0)
    throw ConfigError("weight_decay must be non-negative");
  if (cfg.lr_decay_every < 0)
    throw ConfigError("lr_decay_every must be non-negative");
  if (cfg.lr_decay_every > 0 && !(cfg.lr_decay_factor > 0.0))
    throw ConfigError("lr_decay_factor must be positive");
}

void check_dataset(const NetworkSpec& spec, const Dataset& ds,
                   const char* which) {
  if (ds.count() == 0)
    throw DataError(std::string(which) + " set is empty");
  if (ds.input_h != spec.in_h || ds.input_w != spec.in_w)
    throw ShapeError(std::string(which) + " samples are " +
                     std::to_string(ds.input_w) + "x" +
                     std::to_string(ds.input_h) + " but network '" +
                     spec.name + "' expects " + std::to_string(spec.in_w) +
                     "x" + std::to_string(spec.in_h));
  for (int label : ds.labels)
    if (label < 0 || label >= spec.num_classes)
      throw DataError(std::string(which) + " set has label " +
                      std::to_string(label) + " outside [0, " +
                      std::to_string(spec.num_classes) + ")");
}

// Trainable parameter tensors in fixed layer order, paired with the slot the
// backward pass drops their gradients into.
std::vector<Tensor*> trainable_tensors(Network& net) {
  std::vector<Tensor*> out;
  for (LayerState& st : net.states) {
    if (!st.weights.empty()) out.push_back(&st.weights);
    if (!st.bias.empty()) out.push_back(&st.bias);
    if (!st.gamma.empty()) out.push_back(&st.gamma);
    if (!st.beta.empty()) out.push_back(&st.beta);
  }
  return out;
}

std::vector<const Tensor*> gradient_tensors(const Network& net,
                                            std::vector<LayerGrads>& grads) {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < net.states.size(); ++i) {
    const LayerState& st = net.states[i];
    if (!st.weights.empty()) out.push_back(&grads[i].weights);
    if (!st.bias.empty()) out.push_back(&grads[i].bias);
    if (!st.gamma.empty()) out.push_back(&grads[i].gamma);
    if (!st.beta.empty()) out.push_back(&grads[i].beta);
  }
  return out;
}

}  // namespace

SplitResult split_dataset(const Dataset& ds, double train_frac,
                          std::uint64_t seed) {
  if (!(train_frac > 0.0) || !(train_frac < 1.0))
    throw ConfigError("train_frac must lie strictly in (0, 1), got " +
                      std::to_string(train_frac));
  const std::vector<std::size_t> hist = class_histogram(ds);
  for (int c = 0; c < kNumClasses; ++c) {
    if (hist[static_cast<std::size_t>(c)] > 0 &&
        hist[static_cast<std::size_t>(c)] < 2)
      throw DataError("class " + std::string(window_label_name(c)) +
                      " has only " +
                      std::to_string(hist[static_cast<std::size_t>(c)]) +
                      " sample(s); at least 2 are needed to split");
  }

  std::vector<int> train_idx, test_idx;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<int> members;
    for (std::size_t s = 0; s < ds.count(); ++s)
      if (ds.labels[s] == c) members.push_back(static_cast<int>(s));
    if (members.empty()) continue;
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
    rng.shuffle(members);
    const auto n = static_cast<std::ptrdiff_t>(members.size());
    auto cut = static_cast<std::ptrdiff_t>(
        std::floor(train_frac * static_cast<double>(n)));
    cut = std::clamp<std::ptrdiff_t>(cut, 1, n - 1);
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + cut);
    test_idx.insert(test_idx.end(), members.begin() + cut, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  SplitResult out;
  out.train = ds.subset(train_idx);
  out.test = ds.subset(test_idx);
  return out;
}

void sgd_step(Tensor& weights, Tensor& velocity, const Tensor& grad,
              double lr, double momentum, double weight_decay) {
  if (!weights.same_shape(velocity) || !weights.same_shape(grad))
    throw ShapeError("sgd_step: weights " + weights.shape_str() +
                     ", velocity " + velocity.shape_str() + ", grad " +
                     grad.shape_str() + " must all match");
  double* w = weights.data();
  double* v = velocity.data();
  const double* g = grad.data();
  const std::size_t n = weights.size();
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] - lr * (g[i] + weight_decay * w[i]);
    w[i] += v[i];
  }
}

EvalResult evaluate(const Network& net, const Dataset& ds, int batch_size) {
  if (batch_size < 1)
    throw ConfigError("evaluate: batch_size must be at least 1");
  check_dataset(net.spec, ds, "evaluation");

  EvalResult res;
  const int k = net.spec.num_classes;
  res.confusion.assign(static_cast<std::size_t>(k),
                       std::vector<std::size_t>(static_cast<std::size_t>(k), 0));
  res.predictions.reserve(ds.count());
  for (std::size_t start = 0; start < ds.count();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop =
        std::min(ds.count(), start + static_cast<std::size_t>(batch_size));
    std::vector<int> idx(stop - start);
    std::iota(idx.begin(), idx.end(), static_cast<int>(start));
    const Tensor batch = ds.batch(idx, net.spec.in_channels);
    const std::vector<int> preds = predict(net, batch);
    for (std::size_t b = 0; b < preds.size(); ++b) {
      const int truth = ds.labels[start + b];
      const int pred = preds[b];
      ++res.confusion[static_cast<std::size_t>(truth)]
                     [static_cast<std::size_t>(pred)];
      if (truth == pred) ++res.correct;
      res.predictions.push_back(pred);
    }
  }
  res.total = ds.count();
  res.accuracy =
      static_cast<double>(res.correct) / static_cast<double>(res.total);

  res.precision.assign(static_cast<std::size_t>(k), 0.0);
  res.recall.assign(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    std::size_t col = 0, row = 0;
    for (int o = 0; o < k; ++o) {
      col += res.confusion[static_cast<std::size_t>(o)][static_cast<std::size_t>(c)];
      row += res.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)];
    }
    const std::size_t hit =
        res.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    if (col > 0)
      res.precision[static_cast<std::size_t>(c)] =
          static_cast<double>(hit) / static_cast<double>(col);
    if (row > 0)
      res.recall[static_cast<std::size_t>(c)] =
          static_cast<double>(hit) / static_cast<double>(row);
  }
  return res;
}

TrainResult train_on(const NetworkSpec& spec, const Dataset& train_ds,
                     const Dataset& test_ds, const TrainConfig& cfg) {
  check_config(cfg);
  check_dataset(spec, train_ds, "training");
  check_dataset(spec, test_ds, "test");

  Network net = init_params(spec, cfg.seed);
  std::vector<Tensor*> params = trainable_tensors(net);
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (const Tensor* p : params) velocity.emplace_back(p->shape());

  TrainResult result;
  result.metrics.best_epoch = 0;
  result.metrics.best_test_acc = -1.0;

  std::vector<int> order(train_ds.count());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    if (cfg.lr_decay_every > 0)
      lr *= std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);

    Rng shuffle_rng(
        derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::vector<int> batch_labels(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b)
        batch_labels[b] = train_ds.labels[static_cast<std::size_t>(idx[b])];

      const Tensor batch = train_ds.batch(idx, spec.in_channels);
      Tape tape;
      const std::uint64_t step_seed =
          derive_seed(cfg.seed, "step", static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(step));
      const Tensor logits = forward(net, batch, true, step_seed, &tape);
      const SoftmaxXentResult sx = softmax_xent(logits, batch_labels);
      if (!std::isfinite(sx.loss))
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch + 1) + ", step " +
                              std::to_string(step + 1) +
                              " — lower the learning rate");
      loss_sum += sx.loss * static_cast<double>(idx.size());

      std::vector<LayerGrads> grads = backward(net, tape, sx.grad_logits);
      const std::vector<const Tensor*> gts = gradient_tensors(net, grads);
      for (std::size_t p = 0; p < params.size(); ++p)
        sgd_step(*params[p], velocity[p], *gts[p], lr, cfg.momentum,
                 cfg.weight_decay);
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_sum / static_cast<double>(train_ds.count());
    stats.test_acc = evaluate(net, test_ds).accuracy;
    result.metrics.epochs.push_back(stats);

    if (stats.test_acc > result.metrics.best_test_acc) {
      result.metrics.best_test_acc = stats.test_acc;
      result.metrics.best_epoch = stats.epoch;
      result.net = net;  // deep copy of spec + states
    }
    if (cfg.verbose)
      std::printf("epoch %3d/%d  train_loss %.6f  test_acc %.4f\n",
                  stats.epoch, cfg.epochs, stats.train_loss, stats.test_acc);
  }

  result.metrics.final_eval = evaluate(result.net, test_ds);
  return result;
}

TrainResult train(const NetworkSpec& spec, const Dataset& ds,
                  const TrainConfig& cfg) {
  check_config(cfg);
  SplitResult split = split_dataset(ds, cfg.train_frac, cfg.seed);
  return train_on(spec, split.train, split.test, cfg);
}

void write_metrics_csv(const Metrics& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,train_loss,test_acc\n";
  char buf[128];
  for (const EpochStats& es : metrics.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", es.epoch, es.train_loss,
                  es.test_acc);
    out << buf;
  }
  out << "# best_epoch=" << metrics.best_epoch;
  std::snprintf(buf, sizeof(buf), " best_test_acc=%.6f\n",
                metrics.best_test_acc);
  out << buf;
  out << "# confusion (rows=true, cols=pred; order Left,Peak,Right,Other)\n";
  for (std::size_t t = 0; t < metrics.final_eval.confusion.size(); ++t) {
    out << "# " << window_label_name(static_cast<int>(t));
    for (std::size_t p = 0; p < metrics.final_eval.confusion[t].size(); ++p)
      out << ',' << metrics.final_eval.confusion[t][p];
    out << '\n';
  }
  if (!out) throw IoError("short write: " + path);
}

}  // namespace rebarnet
