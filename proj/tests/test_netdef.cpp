#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "rebarnet/errors.hpp"
#include "rebarnet/netdef.hpp"
#include "rebarnet/rng.hpp"

using namespace rebarnet;

namespace {

int count_kind(const NetworkSpec& spec, LayerKind kind) {
  int n = 0;
  for (const LayerSpec& l : spec.layers) n += (l.kind == kind);
  return n;
}

// Spatial extent (H) after each Conv/Pool layer, in order.
std::vector<int> spatial_trace(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::vector<int> trace;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerKind k = spec.layers[i].kind;
    if (k == LayerKind::Conv || k == LayerKind::MaxPool ||
        k == LayerKind::AvgPool)
      trace.push_back(shapes[i][1]);  // [C,H,W]
  }
  return trace;
}

Tensor random_batch(const std::vector<int>& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("tranet layer sequence and shape trace") {
  const NetworkSpec spec = build_tranet(28, 28, 4);
  CHECK(count_kind(spec, LayerKind::Conv) == 3);
  CHECK(count_kind(spec, LayerKind::MaxPool) == 2);
  CHECK(count_kind(spec, LayerKind::Dense) == 1);
  CHECK(count_kind(spec, LayerKind::BatchNorm) == 3);
  CHECK(count_kind(spec, LayerKind::Relu) == 3);
  CHECK(spec.layers.back().kind == LayerKind::SoftmaxOutput);

  // conv 26, pool 13, conv 11, pool 5, conv 3
  CHECK(spatial_trace(spec) == std::vector<int>({26, 13, 11, 5, 3}));
}

TEST_CASE("tranet parameter count is frozen at 7156") {
  const NetworkSpec spec = build_tranet(28, 28, 4);
  CHECK(trainable_param_count(spec) == 7156);
}

TEST_CASE("tranet rejects inputs below its minimum extent") {
  CHECK_NOTHROW(infer_shapes(build_tranet(18, 18, 4)));
  CHECK_THROWS_AS(build_tranet(17, 17, 4), ConfigError);
}

TEST_CASE("alexnet layer counts and canonical spatial trace") {
  const NetworkSpec spec = build_alexnet(227, 227, 4, 1, 1.0);
  CHECK(count_kind(spec, LayerKind::Conv) == 5);
  CHECK(count_kind(spec, LayerKind::Dense) == 3);
  CHECK(count_kind(spec, LayerKind::MaxPool) == 3);
  CHECK(count_kind(spec, LayerKind::Lrn) == 2);
  CHECK(count_kind(spec, LayerKind::Dropout) == 2);

  // conv1 55, pool 27, conv2 27->pool 13, conv3 13, conv4 13, conv5 13, pool 6
  const std::vector<int> trace = spatial_trace(spec);
  CHECK(trace == std::vector<int>({55, 27, 27, 13, 13, 13, 13, 6}));
}

TEST_CASE("alexnet width scaling rounds channel counts up") {
  const NetworkSpec full = build_alexnet(227, 227, 4, 1, 1.0);
  const NetworkSpec eighth = build_alexnet(64, 64, 4, 1, 0.125);
  // First conv: 96 channels at full width, ceil(96/8)=12 at one eighth.
  int full_c0 = 0, eighth_c0 = 0;
  for (const LayerSpec& l : full.layers)
    if (l.kind == LayerKind::Conv) {
      full_c0 = l.conv.out_channels;
      break;
    }
  for (const LayerSpec& l : eighth.layers)
    if (l.kind == LayerKind::Conv) {
      eighth_c0 = l.conv.out_channels;
      break;
    }
  CHECK(full_c0 == 96);
  CHECK(eighth_c0 == 12);
  CHECK(count_kind(eighth, LayerKind::Conv) == 5);
  CHECK(count_kind(eighth, LayerKind::Dense) == 3);
  CHECK_NOTHROW(infer_shapes(eighth));
}

TEST_CASE("alexnet rejects width_scale outside (0, 1]") {
  CHECK_THROWS_AS(build_alexnet(227, 227, 4, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(build_alexnet(227, 227, 4, 1, 1.5), ConfigError);
}

TEST_CASE("infer_shapes names the offending layer") {
  NetworkSpec spec = build_tranet(28, 28, 4);
  spec.in_h = 4;  // far too small for the second pool
  try {
    infer_shapes(spec);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("conv") != std::string::npos);
  }
}

TEST_CASE("init_params is seed-reproducible and layer-keyed") {
  const NetworkSpec spec = build_tranet(28, 28, 4);
  Network a = init_params(spec, 11);
  Network b = init_params(spec, 11);
  Network c = init_params(spec, 12);
  bool all_equal = true, any_differs = false;
  auto ra = tensor_refs(a), rb = tensor_refs(b), rc = tensor_refs(c);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < ra[i].tensor->size(); ++j) {
      if ((*ra[i].tensor)[j] != (*rb[i].tensor)[j]) all_equal = false;
      if ((*ra[i].tensor)[j] != (*rc[i].tensor)[j]) any_differs = true;
    }
  }
  CHECK(all_equal);
  CHECK(any_differs);
}

TEST_CASE("init_params He scale is empirically right for conv1") {
  // conv1 of tranet: 8 kernels of 1x3x3, fan_in 9, He std = sqrt(2/9).
  const NetworkSpec spec = build_tranet(28, 28, 4);
  Network net = init_params(spec, 99);
  const Tensor& w = net.states[0].weights;
  REQUIRE(w.size() == 72);
  double sum2 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) sum2 += w[i] * w[i];
  const double sd = std::sqrt(sum2 / static_cast<double>(w.size()));
  const double expect = std::sqrt(2.0 / 9.0);
  // 72 draws: loose bracket, catches a wrong fan or missing factor.
  CHECK(sd > 0.5 * expect);
  CHECK(sd < 1.6 * expect);

  // Biases start at zero, batchnorm gamma at one.
  for (std::size_t i = 0; i < net.states[0].bias.size(); ++i)
    CHECK(net.states[0].bias[i] == 0.0);
  for (const LayerState& s : net.states)
    for (std::size_t i = 0; i < s.gamma.size(); ++i) CHECK(s.gamma[i] == 1.0);
}

TEST_CASE("forward produces finite logits of the right shape") {
  const NetworkSpec spec = build_tranet(28, 28, 4);
  Network net = init_params(spec, 3);
  Tensor batch = random_batch({5, 1, 28, 28}, 21);
  Tensor logits = infer_logits(net, batch);
  CHECK(logits.shape() == std::vector<int>({5, 4}));
  CHECK(logits.all_finite());

  Tensor probs = infer_probs(net, batch);
  for (int n = 0; n < 5; ++n) {
    double s = 0.0;
    for (int c = 0; c < 4; ++c) s += probs.at(n, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("infer is deterministic and batch-size invariant") {
  const NetworkSpec spec = build_tranet(28, 28, 4);
  Network net = init_params(spec, 3);
  Tensor batch = random_batch({4, 1, 28, 28}, 22);
  Tensor l1 = infer_logits(net, batch);
  Tensor l2 = infer_logits(net, batch);
  for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1[i] == l2[i]);

  // Row 2 alone must reproduce row 2 of the batch (BatchNorm in infer mode
  // uses running stats, so rows are independent).
  Tensor single({1, 1, 28, 28});
  for (int i = 0; i < 28; ++i)
    for (int j = 0; j < 28; ++j) single.at(0, 0, i, j) = batch.at(2, 0, i, j);
  Tensor ls = infer_logits(net, single);
  for (int c = 0; c < 4; ++c)
    CHECK(ls.at(0, c) == doctest::Approx(l1.at(2, c)).epsilon(1e-12));
}

TEST_CASE("whole-network gradient matches finite differences on a tiny net") {
  // Two conv blocks + dense, small enough for dense FD over every parameter.
  NetworkSpec spec;
  spec.name = "tiny";
  spec.in_channels = 1;
  spec.in_h = 8;
  spec.in_w = 8;
  spec.num_classes = 3;
  LayerSpec conv1;
  conv1.kind = LayerKind::Conv;
  conv1.conv.out_channels = 2;
  conv1.conv.kernel_h = conv1.conv.kernel_w = 3;
  LayerSpec act1;
  act1.kind = LayerKind::Relu;
  LayerSpec pool;
  pool.kind = LayerKind::MaxPool;
  pool.pool_h = pool.pool_w = 2;
  pool.pool_stride = 2;
  LayerSpec conv2;
  conv2.kind = LayerKind::Conv;
  conv2.conv.out_channels = 2;
  conv2.conv.kernel_h = conv2.conv.kernel_w = 3;
  LayerSpec act2;
  act2.kind = LayerKind::Sigmoid;
  LayerSpec flat;
  flat.kind = LayerKind::Flatten;
  LayerSpec dense;
  dense.kind = LayerKind::Dense;
  dense.dense_out = 3;
  LayerSpec out;
  out.kind = LayerKind::SoftmaxOutput;
  spec.layers = {conv1, act1, pool, conv2, act2, flat, dense, out};
  assign_layer_names(spec);

  Network net = init_params(spec, 17);
  Tensor batch = random_batch({2, 1, 8, 8}, 23);
  const std::vector<int> labels = {0, 2};

  Tape tape;
  tape.train = true;
  Tensor logits = forward(net, batch, true, 0, &tape);
  SoftmaxXentResult sm = softmax_xent(logits, labels);
  std::vector<LayerGrads> grads = backward(net, tape, sm.grad_logits);

  auto loss_at = [&](Network& n) {
    Tape t;
    Tensor l = forward(n, batch, true, 0, &t);
    return softmax_xent(l, labels).loss;
  };

  const double eps = 1e-5;
  double max_rel = 0.0;
  auto refs = tensor_refs(net);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (!refs[r].trainable) continue;
    Tensor* param = refs[r].tensor;
    // Map the ref back to its layer's gradient tensor by name suffix.
    const std::string& name = refs[r].name;
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
      const std::string prefix = net.spec.layers[li].name + ".";
      if (name.rfind(prefix, 0) != 0) continue;
      const std::string field = name.substr(prefix.size());
      const Tensor* gt = nullptr;
      if (field == "weights") gt = &grads[li].weights;
      if (field == "bias") gt = &grads[li].bias;
      if (field == "gamma") gt = &grads[li].gamma;
      if (field == "beta") gt = &grads[li].beta;
      REQUIRE(gt != nullptr);
      REQUIRE(gt->size() == param->size());
      for (std::size_t i = 0; i < param->size(); ++i) {
        const double keep = (*param)[i];
        (*param)[i] = keep + eps;
        const double fp = loss_at(net);
        (*param)[i] = keep - eps;
        const double fm = loss_at(net);
        (*param)[i] = keep;
        const double fd = (fp - fm) / (2 * eps);
        const double denom =
            std::max({std::abs((*gt)[i]), std::abs(fd), 1e-3});
        max_rel = std::max(max_rel, std::abs((*gt)[i] - fd) / denom);
      }
      break;
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("tensor_refs order is stable and pairs params with roles") {
  const NetworkSpec spec = build_tranet(28, 28, 4);
  Network net = init_params(spec, 1);
  auto refs = tensor_refs(net);
  std::size_t trainable_elems = 0;
  bool saw_buffer = false;
  for (const TensorRef& r : refs) {
    if (r.trainable)
      trainable_elems += r.tensor->size();
    else
      saw_buffer = true;
  }
  CHECK(trainable_elems == 7156);
  CHECK(saw_buffer);  // batchnorm running stats
}

TEST_CASE("layer_kind_name round-trips") {
  for (LayerKind k :
       {LayerKind::Conv, LayerKind::MaxPool, LayerKind::AvgPool,
        LayerKind::Relu, LayerKind::Sigmoid, LayerKind::Lrn,
        LayerKind::BatchNorm, LayerKind::Dropout, LayerKind::Flatten,
        LayerKind::Dense, LayerKind::SoftmaxOutput}) {
    CHECK(layer_kind_from_name(layer_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(layer_kind_from_name("convolution9000"), FormatError);
}
