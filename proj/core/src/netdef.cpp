#include "rebarnet/netdef.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "rebarnet/errors.hpp"
#include "rebarnet/rng.hpp"

namespace rebarnet {

namespace {

struct ShapeWalk {
  std::vector<std::vector<int>> in_shapes;   // per layer, batch dim omitted
  std::vector<std::vector<int>> out_shapes;
};

std::string layer_tag(const NetworkSpec& spec, int i) {
  const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
  std::string tag = "layer " + std::to_string(i);
  if (!l.name.empty()) tag += " (" + l.name + ")";
  return tag;
}

[[noreturn]] void fail(const NetworkSpec& spec, int i, const std::string& msg) {
  throw ShapeError("network '" + spec.name + "', " + layer_tag(spec, i) +
                   ": " + msg);
}

ShapeWalk walk_shapes(const NetworkSpec& spec) {
  if (spec.in_channels < 1 || spec.in_h < 1 || spec.in_w < 1) {
    throw ShapeError("network '" + spec.name + "': input shape [" +
                     std::to_string(spec.in_channels) + ", " +
                     std::to_string(spec.in_h) + ", " +
                     std::to_string(spec.in_w) + "] has an extent < 1");
  }
  if (spec.layers.empty()) {
    throw ShapeError("network '" + spec.name + "' has no layers");
  }
  if (spec.num_classes < 2) {
    throw ShapeError("network '" + spec.name + "': num_classes must be >= 2");
  }

  ShapeWalk walk;
  std::vector<int> cur = {spec.in_channels, spec.in_h, spec.in_w};
  const int n_layers = static_cast<int>(spec.layers.size());
  for (int i = 0; i < n_layers; ++i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    walk.in_shapes.push_back(cur);
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cur.size() != 3) fail(spec, i, "conv requires a [C,H,W] input");
        if (l.conv.out_channels < 1) fail(spec, i, "out_channels < 1");
        if (l.conv.kernel_h < 1 || l.conv.kernel_w < 1)
          fail(spec, i, "kernel extents must be >= 1");
        if (l.conv.stride < 1) fail(spec, i, "stride must be >= 1");
        if (l.conv.padding < 0) fail(spec, i, "padding must be >= 0");
        const int h = cur[1], w = cur[2];
        if (h + 2 * l.conv.padding < l.conv.kernel_h ||
            w + 2 * l.conv.padding < l.conv.kernel_w) {
          fail(spec, i,
               "kernel " + std::to_string(l.conv.kernel_h) + "x" +
                   std::to_string(l.conv.kernel_w) +
                   " does not fit padded input " + std::to_string(h) + "x" +
                   std::to_string(w) + " (padding " +
                   std::to_string(l.conv.padding) + ")");
        }
        const int ho =
            conv_out_extent(h, l.conv.kernel_h, l.conv.stride, l.conv.padding);
        const int wo =
            conv_out_extent(w, l.conv.kernel_w, l.conv.stride, l.conv.padding);
        if (ho < 1 || wo < 1) {
          fail(spec, i,
               "output extent " + std::to_string(ho) + "x" +
                   std::to_string(wo) + " < 1");
        }
        cur = {l.conv.out_channels, ho, wo};
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        if (cur.size() != 3) fail(spec, i, "pool requires a [C,H,W] input");
        if (l.pool_h < 1 || l.pool_w < 1 || l.pool_stride < 1)
          fail(spec, i, "pool window and stride must be >= 1");
        const int h = cur[1], w = cur[2];
        if (l.pool_h > h || l.pool_w > w) {
          fail(spec, i,
               "pool window " + std::to_string(l.pool_h) + "x" +
                   std::to_string(l.pool_w) + " larger than input " +
                   std::to_string(h) + "x" + std::to_string(w));
        }
        cur = {cur[0], (h - l.pool_h) / l.pool_stride + 1,
               (w - l.pool_w) / l.pool_stride + 1};
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Sigmoid:
      case LayerKind::Dropout:
        if (l.kind == LayerKind::Dropout &&
            (l.dropout_rate < 0.0 || l.dropout_rate >= 1.0))
          fail(spec, i, "dropout rate must be in [0, 1)");
        break;  // shape preserving
      case LayerKind::Lrn:
      case LayerKind::BatchNorm:
        if (cur.size() != 3)
          fail(spec, i, "needs a channel axis ([C,H,W] input)");
        break;
      case LayerKind::Flatten:
        if (cur.size() != 3) fail(spec, i, "flatten requires a [C,H,W] input");
        cur = {cur[0] * cur[1] * cur[2]};
        break;
      case LayerKind::Dense:
        if (cur.size() != 1)
          fail(spec, i, "dense requires a flattened [D] input");
        if (l.dense_out < 1) fail(spec, i, "dense width must be >= 1");
        cur = {l.dense_out};
        break;
      case LayerKind::SoftmaxOutput:
        if (i != n_layers - 1)
          fail(spec, i, "softmax output must be the final layer");
        if (cur.size() != 1 || cur[0] != spec.num_classes) {
          fail(spec, i,
               "softmax input is " + Tensor::shape_str(cur) + ", expected [" +
                   std::to_string(spec.num_classes) + "] (num_classes)");
        }
        break;
    }
    walk.out_shapes.push_back(cur);
  }
  if (spec.layers.back().kind != LayerKind::SoftmaxOutput) {
    fail(spec, n_layers - 1, "final layer must be SoftmaxOutput");
  }
  return walk;
}

// Weight init style depends on what the values feed into next.
enum class Downstream { Relu, Sigmoid, Linear };

Downstream downstream_activation(const NetworkSpec& spec, int i) {
  for (std::size_t j = static_cast<std::size_t>(i) + 1;
       j < spec.layers.size(); ++j) {
    switch (spec.layers[j].kind) {
      case LayerKind::Relu:
        return Downstream::Relu;
      case LayerKind::Sigmoid:
        return Downstream::Sigmoid;
      case LayerKind::Conv:
      case LayerKind::Dense:
      case LayerKind::SoftmaxOutput:
        return Downstream::Linear;
      default:
        break;  // pools, LRN, BN, dropout, flatten pass activations through
    }
  }
  return Downstream::Linear;
}

void fill_normal(Tensor& t, Rng& rng, double std) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * std;
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Lrn: return "lrn";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::SoftmaxOutput: return "softmax";
  }
  return "unknown";
}

LayerKind layer_kind_from_name(const std::string& name) {
  static const std::map<std::string, LayerKind> table = {
      {"conv", LayerKind::Conv},         {"maxpool", LayerKind::MaxPool},
      {"avgpool", LayerKind::AvgPool},   {"relu", LayerKind::Relu},
      {"sigmoid", LayerKind::Sigmoid},   {"lrn", LayerKind::Lrn},
      {"batchnorm", LayerKind::BatchNorm}, {"dropout", LayerKind::Dropout},
      {"flatten", LayerKind::Flatten},   {"dense", LayerKind::Dense},
      {"softmax", LayerKind::SoftmaxOutput},
  };
  auto it = table.find(name);
  if (it == table.end()) {
    throw FormatError("unknown layer kind '" + name + "'");
  }
  return it->second;
}

std::vector<std::vector<int>> infer_shapes(const NetworkSpec& spec) {
  return walk_shapes(spec).out_shapes;
}

void assign_layer_names(NetworkSpec& spec) {
  std::map<std::string, int> counts;
  for (LayerSpec& l : spec.layers) {
    if (!l.name.empty()) continue;
    const std::string base = layer_kind_name(l.kind);
    l.name = base + std::to_string(++counts[base]);
  }
}

NetworkSpec build_tranet(int in_h, int in_w, int num_classes, int in_channels,
                         bool avg_pool) {
  if (in_h < 18 || in_w < 18) {
    throw ConfigError(
        "tranet input must be at least 18x18 so every feature map stays "
        ">= 1; got " +
        std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  NetworkSpec spec;
  spec.name = "tranet";
  spec.in_channels = in_channels;
  spec.in_h = in_h;
  spec.in_w = in_w;
  spec.num_classes = num_classes;

  const LayerKind pool = avg_pool ? LayerKind::AvgPool : LayerKind::MaxPool;
  auto conv_block = [&](int out_channels, int index) {
    LayerSpec c;
    c.kind = LayerKind::Conv;
    c.name = "conv" + std::to_string(index);
    c.conv = ConvParams{out_channels, 3, 3, 1, 0};
    spec.layers.push_back(c);
    LayerSpec r;
    r.kind = LayerKind::Relu;
    r.name = "relu" + std::to_string(index);
    spec.layers.push_back(r);
    LayerSpec b;
    b.kind = LayerKind::BatchNorm;
    b.name = "bn" + std::to_string(index);
    spec.layers.push_back(b);
  };
  auto pool_layer = [&](int index) {
    LayerSpec p;
    p.kind = pool;
    p.name = "pool" + std::to_string(index);
    p.pool_h = 2;
    p.pool_w = 2;
    p.pool_stride = 2;
    spec.layers.push_back(p);
  };

  conv_block(8, 1);
  pool_layer(1);
  conv_block(16, 2);
  pool_layer(2);
  conv_block(32, 3);
  LayerSpec f;
  f.kind = LayerKind::Flatten;
  f.name = "flatten";
  spec.layers.push_back(f);
  LayerSpec d;
  d.kind = LayerKind::Dense;
  d.name = "dense1";
  d.dense_out = num_classes;
  spec.layers.push_back(d);
  LayerSpec s;
  s.kind = LayerKind::SoftmaxOutput;
  s.name = "softmax";
  spec.layers.push_back(s);

  walk_shapes(spec);  // builder bug guard
  return spec;
}

NetworkSpec build_alexnet(int in_h, int in_w, int num_classes, int in_channels,
                          double width_scale) {
  if (width_scale <= 0.0 || width_scale > 1.0) {
    throw ConfigError("alexnet width_scale must be in (0, 1], got " +
                      std::to_string(width_scale));
  }
  if (in_h < 11 || in_w < 11) {
    throw ConfigError(
        "alexnet input must be at least 11x11 for the 11x11/s4 stem; got " +
        std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  auto scaled = [&](int base) {
    return static_cast<int>(std::ceil(base * width_scale));
  };

  NetworkSpec spec;
  spec.name = width_scale == 1.0 ? "alexnet" : "alexnet-s";
  spec.in_channels = in_channels;
  spec.in_h = in_h;
  spec.in_w = in_w;
  spec.num_classes = num_classes;

  int h = in_h, w = in_w;
  auto conv = [&](int index, int out_channels, int k, int stride, int pad) {
    LayerSpec c;
    c.kind = LayerKind::Conv;
    c.name = "conv" + std::to_string(index);
    c.conv = ConvParams{out_channels, k, k, stride, pad};
    spec.layers.push_back(c);
    h = conv_out_extent(h, k, stride, pad);
    w = conv_out_extent(w, k, stride, pad);
    LayerSpec r;
    r.kind = LayerKind::Relu;
    r.name = "relu" + std::to_string(index);
    spec.layers.push_back(r);
  };
  auto lrn = [&](int index) {
    LayerSpec l;
    l.kind = LayerKind::Lrn;
    l.name = "lrn" + std::to_string(index);
    spec.layers.push_back(l);
  };
  auto pool = [&](int index) {
    LayerSpec p;
    p.kind = LayerKind::MaxPool;
    p.name = "pool" + std::to_string(index);
    p.pool_h = std::min(3, h);  // clamp so small feature maps stay legal
    p.pool_w = std::min(3, w);
    p.pool_stride = 2;
    spec.layers.push_back(p);
    h = (h - p.pool_h) / p.pool_stride + 1;
    w = (w - p.pool_w) / p.pool_stride + 1;
  };
  auto dense = [&](int index, int out, bool relu_drop) {
    LayerSpec d;
    d.kind = LayerKind::Dense;
    d.name = "dense" + std::to_string(index);
    d.dense_out = out;
    spec.layers.push_back(d);
    if (relu_drop) {
      LayerSpec r;
      r.kind = LayerKind::Relu;
      r.name = "relu" + std::to_string(index + 5);
      spec.layers.push_back(r);
      LayerSpec dp;
      dp.kind = LayerKind::Dropout;
      dp.name = "drop" + std::to_string(index);
      dp.dropout_rate = 0.5;
      spec.layers.push_back(dp);
    }
  };

  conv(1, scaled(96), 11, 4, 0);
  lrn(1);
  pool(1);
  conv(2, scaled(256), 5, 1, 2);
  lrn(2);
  pool(2);
  conv(3, scaled(384), 3, 1, 1);
  conv(4, scaled(384), 3, 1, 1);
  conv(5, scaled(256), 3, 1, 1);
  pool(3);
  LayerSpec f;
  f.kind = LayerKind::Flatten;
  f.name = "flatten";
  spec.layers.push_back(f);
  dense(1, scaled(4096), true);
  dense(2, scaled(4096), true);
  dense(3, num_classes, false);
  LayerSpec s;
  s.kind = LayerKind::SoftmaxOutput;
  s.name = "softmax";
  spec.layers.push_back(s);

  walk_shapes(spec);
  return spec;
}

Network allocate_params(const NetworkSpec& spec) {
  const ShapeWalk walk = walk_shapes(spec);
  Network net;
  net.spec = spec;
  assign_layer_names(net.spec);
  net.states.resize(net.spec.layers.size());

  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    const LayerSpec& l = net.spec.layers[i];
    const std::vector<int>& in = walk.in_shapes[i];
    LayerState& st = net.states[i];
    switch (l.kind) {
      case LayerKind::Conv:
        st.weights = Tensor(
            {l.conv.out_channels, in[0], l.conv.kernel_h, l.conv.kernel_w});
        st.bias = Tensor({l.conv.out_channels});
        break;
      case LayerKind::Dense:
        st.weights = Tensor({in[0], l.dense_out});
        st.bias = Tensor({l.dense_out});
        break;
      case LayerKind::BatchNorm: {
        const int c = in[0];
        st.gamma = Tensor::full({c}, 1.0);
        st.beta = Tensor({c});
        st.running_mean = Tensor({c});
        st.running_var = Tensor::full({c}, 1.0);
        break;
      }
      default:
        break;
    }
  }
  return net;
}

Network init_params(const NetworkSpec& spec, std::uint64_t seed) {
  Network net = allocate_params(spec);
  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    const LayerSpec& l = net.spec.layers[i];
    LayerState& st = net.states[i];
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense) continue;

    int fan_in, fan_out;
    if (l.kind == LayerKind::Conv) {
      fan_in = st.weights.dim(1) * l.conv.kernel_h * l.conv.kernel_w;
      fan_out = l.conv.out_channels * l.conv.kernel_h * l.conv.kernel_w;
    } else {
      fan_in = st.weights.dim(0);
      fan_out = l.dense_out;
    }
    const double std_dev =
        downstream_activation(net.spec, static_cast<int>(i)) ==
                Downstream::Relu
            ? std::sqrt(2.0 / fan_in)
            : std::sqrt(2.0 / (fan_in + fan_out));
    Rng rng(derive_seed(seed, "init", static_cast<std::uint64_t>(i)));
    fill_normal(st.weights, rng, std_dev);
  }
  return net;
}

std::size_t trainable_param_count(const NetworkSpec& spec) {
  const ShapeWalk walk = walk_shapes(spec);
  std::size_t count = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::vector<int>& in = walk.in_shapes[i];
    switch (l.kind) {
      case LayerKind::Conv:
        count += static_cast<std::size_t>(l.conv.out_channels) * in[0] *
                     l.conv.kernel_h * l.conv.kernel_w +
                 l.conv.out_channels;
        break;
      case LayerKind::Dense:
        count += static_cast<std::size_t>(in[0]) * l.dense_out + l.dense_out;
        break;
      case LayerKind::BatchNorm:
        count += 2 * static_cast<std::size_t>(in[0]);
        break;
      default:
        break;
    }
  }
  return count;
}

std::size_t trainable_param_count(const Network& net) {
  return trainable_param_count(net.spec);
}

namespace {

Tensor forward_walk(Network& net, const Tensor& batch, bool train,
                    std::uint64_t step_seed, Tape* tape) {
  const NetworkSpec& spec = net.spec;
  if (batch.rank() != 4 || batch.dim(1) != spec.in_channels ||
      batch.dim(2) != spec.in_h || batch.dim(3) != spec.in_w) {
    throw ShapeError("network '" + spec.name + "' expects batches of [N, " +
                     std::to_string(spec.in_channels) + ", " +
                     std::to_string(spec.in_h) + ", " +
                     std::to_string(spec.in_w) + "], got " +
                     batch.shape_str());
  }
  if (tape) {
    tape->layers.assign(spec.layers.size(), LayerTape{});
    tape->train = train;
  }

  const int n = batch.dim(0);
  Tensor x = batch;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    LayerState& st = net.states[i];
    LayerTape* t = tape ? &tape->layers[i] : nullptr;
    switch (l.kind) {
      case LayerKind::Conv: {
        Tensor out = conv2d_forward(x, st.weights, st.bias, l.conv);
        if (t) t->input = std::move(x);
        x = std::move(out);
        break;
      }
      case LayerKind::MaxPool: {
        MaxPoolResult res = maxpool_forward(x, l.pool_h, l.pool_w,
                                            l.pool_stride);
        x = res.output;
        if (t) t->maxpool = std::move(res);
        break;
      }
      case LayerKind::AvgPool: {
        if (t) t->in_shape = x.shape();
        x = avgpool_forward(x, l.pool_h, l.pool_w, l.pool_stride);
        break;
      }
      case LayerKind::Relu: {
        Tensor out = relu(x);
        if (t) t->input = std::move(x);
        x = std::move(out);
        break;
      }
      case LayerKind::Sigmoid: {
        x = sigmoid(x);
        if (t) t->output = x;
        break;
      }
      case LayerKind::Lrn: {
        Tensor out = lrn_forward(x, l.lrn);
        if (t) t->input = std::move(x);
        x = std::move(out);
        break;
      }
      case LayerKind::BatchNorm: {
        x = batchnorm_forward(x, st.gamma, st.beta, l.bn_eps, train,
                              st.running_mean, st.running_var, l.bn_momentum,
                              t ? &t->bn : nullptr);
        break;
      }
      case LayerKind::Dropout: {
        if (train) {
          DropoutResult res =
              dropout(x, l.dropout_rate,
                      derive_seed(step_seed, "dropout",
                                  static_cast<std::uint64_t>(i)),
                      true);
          x = std::move(res.output);
          if (t) t->dropout_mask = std::move(res.mask);
        }
        break;
      }
      case LayerKind::Flatten: {
        if (t) t->in_shape = x.shape();
        x = x.reshaped({n, x.dim(1) * x.dim(2) * x.dim(3)});
        break;
      }
      case LayerKind::Dense: {
        Tensor out = dense_forward(x, st.weights, st.bias);
        if (t) t->input = std::move(x);
        x = std::move(out);
        break;
      }
      case LayerKind::SoftmaxOutput:
        break;  // identity; softmax lives in the loss / infer_probs
    }
  }
  return x;
}

}  // namespace

Tensor forward(Network& net, const Tensor& batch, bool train,
               std::uint64_t step_seed, Tape* tape) {
  return forward_walk(net, batch, train, step_seed, tape);
}

Tensor infer_logits(const Network& net, const Tensor& batch) {
  // train=false never mutates running stats or records anything, so the
  // const_cast stays an implementation detail.
  return forward_walk(const_cast<Network&>(net), batch, false, 0, nullptr);
}

Tensor infer_probs(const Network& net, const Tensor& batch) {
  return softmax_rows(infer_logits(net, batch));
}

std::vector<int> predict(const Network& net, const Tensor& batch) {
  const Tensor logits = infer_logits(net, batch);
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;  // ties -> lowest
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

std::vector<LayerGrads> backward(const Network& net, const Tape& tape,
                                 const Tensor& grad_logits) {
  const NetworkSpec& spec = net.spec;
  if (!tape.train || tape.layers.size() != spec.layers.size()) {
    throw ShapeError("backward needs the tape from a train-mode forward of "
                     "the same network");
  }
  std::vector<LayerGrads> grads(spec.layers.size());
  Tensor g = grad_logits;
  for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    const LayerState& st = net.states[static_cast<std::size_t>(i)];
    const LayerTape& t = tape.layers[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerKind::Conv: {
        ConvGrads cg = conv2d_backward(t.input, st.weights, l.conv, g);
        grads[static_cast<std::size_t>(i)].weights = std::move(cg.grad_weights);
        grads[static_cast<std::size_t>(i)].bias = std::move(cg.grad_bias);
        g = std::move(cg.grad_input);
        break;
      }
      case LayerKind::MaxPool:
        g = maxpool_backward(t.maxpool, g);
        break;
      case LayerKind::AvgPool:
        g = avgpool_backward(t.in_shape, l.pool_h, l.pool_w, l.pool_stride, g);
        break;
      case LayerKind::Relu:
        g = relu_backward(t.input, g);
        break;
      case LayerKind::Sigmoid:
        g = sigmoid_backward(t.output, g);
        break;
      case LayerKind::Lrn:
        g = lrn_backward(t.input, l.lrn, g);
        break;
      case LayerKind::BatchNorm: {
        BatchNormGrads bg = batchnorm_backward(t.bn, st.gamma, g);
        grads[static_cast<std::size_t>(i)].gamma = std::move(bg.grad_gamma);
        grads[static_cast<std::size_t>(i)].beta = std::move(bg.grad_beta);
        g = std::move(bg.grad_input);
        break;
      }
      case LayerKind::Dropout:
        if (!t.dropout_mask.empty()) {
          g = dropout_backward(t.dropout_mask, l.dropout_rate, g);
        }
        break;
      case LayerKind::Flatten:
        g = g.reshaped(t.in_shape);
        break;
      case LayerKind::Dense: {
        DenseGrads dg = dense_backward(t.input, st.weights, g);
        grads[static_cast<std::size_t>(i)].weights = std::move(dg.grad_weights);
        grads[static_cast<std::size_t>(i)].bias = std::move(dg.grad_bias);
        g = std::move(dg.grad_input);
        break;
      }
      case LayerKind::SoftmaxOutput:
        break;
    }
  }
  return grads;
}

std::vector<TensorRef> tensor_refs(Network& net) {
  std::vector<TensorRef> refs;
  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    const std::string& name = net.spec.layers[i].name;
    LayerState& st = net.states[i];
    auto add = [&](const char* field, Tensor& t, bool trainable) {
      if (!t.empty()) refs.push_back({name + "." + field, &t, trainable});
    };
    add("weights", st.weights, true);
    add("bias", st.bias, true);
    add("gamma", st.gamma, true);
    add("beta", st.beta, true);
    add("running_mean", st.running_mean, false);
    add("running_var", st.running_var, false);
  }
  return refs;
}

}  // namespace rebarnet
