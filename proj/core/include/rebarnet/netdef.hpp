#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rebarnet/layers.hpp"
#include "rebarnet/tensor.hpp"

namespace rebarnet {

// Declarative layer list. A network is a spec plus a parallel vector of
// parameter states; parameter shapes are derivable from the spec alone,
// which is what makes checkpoints verifiable against it.

enum class LayerKind {
  Conv,
  MaxPool,
  AvgPool,
  Relu,
  Sigmoid,
  Lrn,
  BatchNorm,
  Dropout,
  Flatten,
  Dense,
  SoftmaxOutput,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;  // unique within a spec, e.g. "conv1"

  ConvParams conv;  // Conv

  int pool_h = 2;  // MaxPool / AvgPool
  int pool_w = 2;
  int pool_stride = 2;

  LrnParams lrn;  // Lrn

  double bn_eps = 1e-5;  // BatchNorm
  double bn_momentum = 0.1;

  double dropout_rate = 0.5;  // Dropout

  int dense_out = 0;  // Dense
};

struct NetworkSpec {
  std::string name;
  int in_channels = 1;
  int in_h = 0;
  int in_w = 0;
  int num_classes = 4;
  std::vector<LayerSpec> layers;
};

// Output shape of every layer, batch dimension omitted: [C,H,W] before
// Flatten, [D] after. Validates the whole chain composes and that the final
// layer is SoftmaxOutput of width num_classes; throws ShapeError naming the
// offending layer otherwise.
std::vector<std::vector<int>> infer_shapes(const NetworkSpec& spec);

// Fills in "kindN" style names for layers that have none; builders already
// assign names, this is for hand-rolled specs.
void assign_layer_names(NetworkSpec& spec);

// Table-2 network: 3x (Conv 3x3 + ReLU + BatchNorm) with 2x2/s2 pools after
// the first two blocks, then Flatten -> Dense -> SoftmaxOutput. Input must
// be at least 18x18 for every intermediate shape to stay >= 1.
NetworkSpec build_tranet(int in_h, int in_w, int num_classes = 4,
                         int in_channels = 1, bool avg_pool = false);

// AlexNet geometry (Krizhevsky et al. 2012): 5 conv + 3 dense. width_scale
// in (0,1] multiplies every channel/dense width, rounded up. Pools whose
// 3x3 window exceeds a small feature map are clamped to the map extent at
// build time, so scaled-down variants stay valid on small inputs; the
// clamped window is recorded in the spec and travels with checkpoints.
NetworkSpec build_alexnet(int in_h, int in_w, int num_classes = 4,
                          int in_channels = 1, double width_scale = 1.0);

struct LayerState {
  Tensor weights, bias;               // Conv, Dense
  Tensor gamma, beta;                 // BatchNorm scale/shift
  Tensor running_mean, running_var;   // BatchNorm buffers (not trainable)
};

struct Network {
  NetworkSpec spec;
  std::vector<LayerState> states;  // parallel to spec.layers
};

// Allocates every tensor the spec implies (weights/biases/beta zero, gamma
// and running_var one) without random init; checkpoint loading fills these.
Network allocate_params(const NetworkSpec& spec);

// He normal (std = sqrt(2/fan_in)) for conv/dense whose downstream
// activation is ReLU, Xavier/Glorot normal otherwise (sigmoid or softmax
// paths); biases 0, gamma 1, beta 0. Draws are keyed by (seed, layer index)
// so the same seed is bit-reproducible.
Network init_params(const NetworkSpec& spec, std::uint64_t seed);

std::size_t trainable_param_count(const NetworkSpec& spec);
std::size_t trainable_param_count(const Network& net);

// Activation record for one layer, kept only while a backward pass needs it.
struct LayerTape {
  Tensor input;                      // Conv, Relu, Lrn, Dense
  Tensor output;                     // Sigmoid
  MaxPoolResult maxpool;             // MaxPool
  std::vector<int> in_shape;         // AvgPool, Flatten
  BatchNormCache bn;                 // BatchNorm
  std::vector<std::uint8_t> dropout_mask;
};

struct Tape {
  std::vector<LayerTape> layers;
  bool train = false;
};

// Runs the network on a [N,C,H,W] batch and returns logits [N,num_classes]
// (SoftmaxOutput itself is the identity; softmax lives in the loss and in
// infer_probs). Train mode applies dropout (masks keyed by step_seed and
// layer index), updates BatchNorm running stats, and records the tape.
Tensor forward(Network& net, const Tensor& batch, bool train,
               std::uint64_t step_seed, Tape* tape);

// Infer-mode forward: no dropout, BatchNorm uses running stats, nothing is
// mutated or recorded.
Tensor infer_logits(const Network& net, const Tensor& batch);
Tensor infer_probs(const Network& net, const Tensor& batch);
// Argmax class per row, ties to the lowest index.
std::vector<int> predict(const Network& net, const Tensor& batch);

// Per-layer parameter gradients; tensors are empty for layers without the
// corresponding parameter. Indices parallel spec.layers.
struct LayerGrads {
  Tensor weights, bias, gamma, beta;
};

std::vector<LayerGrads> backward(const Network& net, const Tape& tape,
                                 const Tensor& grad_logits);

// Flat view over every tensor a network owns, in fixed manifest order
// ("<layer>.<field>", params before buffers within a layer). Checkpoints
// and the optimizer both walk this.
struct TensorRef {
  std::string name;
  Tensor* tensor;
  bool trainable;
};
std::vector<TensorRef> tensor_refs(Network& net);

}  // namespace rebarnet
