#include "rebarnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "rebarnet/layers.hpp"
#include "rebarnet/netdef.hpp"
#include "rebarnet/rng.hpp"
#include "rebarnet/tensor.hpp"

namespace rebarnet {

namespace {

constexpr double kStep = 1e-5;

double rel_err(double analytic, double fd) {
  const double denom =
      std::max({std::abs(analytic), std::abs(fd), 1e-3});
  return std::abs(analytic - fd) / denom;
}

Tensor random_tensor(const std::vector<int>& shape, Rng& rng,
                     double scale = 1.0) {
  Tensor t(shape);
  double* d = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = rng.normal() * scale;
  return t;
}

// Pushes every element away from zero so ReLU's kink and max-pool ties stay
// clear of the FD step.
void nudge_from_zero(Tensor& t, double margin) {
  double* d = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(d[i]) < margin) d[i] = d[i] < 0.0 ? -margin : margin;
  }
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  const double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) s += ad[i] * bd[i];
  return s;
}

// Compares an analytic gradient tensor against central differences of
// `eval` taken element-by-element through `arg`.
void check_tensor(GradCheckReport& report, Tensor& arg,
                  const Tensor& analytic,
                  const std::function<double()>& eval) {
  double* d = arg.data();
  const double* a = analytic.data();
  for (std::size_t i = 0; i < arg.size(); ++i) {
    const double orig = d[i];
    d[i] = orig + kStep;
    const double lp = eval();
    d[i] = orig - kStep;
    const double lm = eval();
    d[i] = orig;
    const double fd = (lp - lm) / (2.0 * kStep);
    report.max_rel_err = std::max(report.max_rel_err, rel_err(a[i], fd));
    ++report.checks;
  }
}

GradCheckReport make_report(const std::string& name) {
  GradCheckReport r;
  r.name = name;
  return r;
}

void finish(GradCheckReport& r, double tol,
            std::vector<GradCheckReport>& out) {
  r.passed = r.checks > 0 && r.max_rel_err <= tol;
  out.push_back(r);
}

void check_conv(std::uint64_t seed, double tol,
                std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "conv"));
  ConvParams p;
  p.out_channels = 4;
  p.kernel_h = 3;
  p.kernel_w = 3;
  p.stride = 1;
  p.padding = 1;
  Tensor x = random_tensor({2, 3, 6, 7}, rng);
  Tensor w = random_tensor({4, 3, 3, 3}, rng, 0.5);
  Tensor b = random_tensor({4}, rng, 0.1);
  const Tensor g = random_tensor(conv2d_forward(x, w, b, p).shape(), rng);

  const ConvGrads grads = conv2d_backward(x, w, p, g);
  const auto eval = [&] { return dot(g, conv2d_forward(x, w, b, p)); };

  GradCheckReport ri = make_report("conv.input");
  check_tensor(ri, x, grads.grad_input, eval);
  finish(ri, tol, out);
  GradCheckReport rw = make_report("conv.weights");
  check_tensor(rw, w, grads.grad_weights, eval);
  finish(rw, tol, out);
  GradCheckReport rb = make_report("conv.bias");
  check_tensor(rb, b, grads.grad_bias, eval);
  finish(rb, tol, out);
}

void check_maxpool(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "maxpool"));
  Tensor x({2, 3, 6, 6});
  // Distinct, well-separated values: no window has a near-tie the FD step
  // could flip, so max-pooling is locally linear around x.
  std::vector<int> ranks(x.size());
  for (std::size_t i = 0; i < ranks.size(); ++i)
    ranks[i] = static_cast<int>(i);
  rng.shuffle(ranks);
  double* d = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = 0.01 * ranks[i] - 1.0;

  const MaxPoolResult fwd = maxpool_forward(x, 2, 2, 2);
  const Tensor g = random_tensor(fwd.output.shape(), rng);
  const Tensor analytic = maxpool_backward(fwd, g);
  const auto eval = [&] { return dot(g, maxpool_forward(x, 2, 2, 2).output); };

  GradCheckReport r = make_report("maxpool.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_avgpool(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "avgpool"));
  Tensor x = random_tensor({2, 3, 7, 6}, rng);
  const Tensor fwd = avgpool_forward(x, 2, 2, 2);
  const Tensor g = random_tensor(fwd.shape(), rng);
  const Tensor analytic = avgpool_backward(x.shape(), 2, 2, 2, g);
  const auto eval = [&] { return dot(g, avgpool_forward(x, 2, 2, 2)); };

  GradCheckReport r = make_report("avgpool.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_relu(std::uint64_t seed, double tol,
                std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "relu"));
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  nudge_from_zero(x, 1e-2);
  const Tensor g = random_tensor(x.shape(), rng);
  const Tensor analytic = relu_backward(x, g);
  const auto eval = [&] { return dot(g, relu(x)); };

  GradCheckReport r = make_report("relu.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_sigmoid(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "sigmoid"));
  Tensor x = random_tensor({3, 8}, rng);
  const Tensor g = random_tensor(x.shape(), rng);
  const Tensor analytic = sigmoid_backward(sigmoid(x), g);
  const auto eval = [&] { return dot(g, sigmoid(x)); };

  GradCheckReport r = make_report("sigmoid.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_lrn(std::uint64_t seed, double tol,
               std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "lrn"));
  LrnParams p;  // depth 5, k 2, alpha 1e-4, beta 0.75
  Tensor x = random_tensor({2, 6, 4, 4}, rng);
  const Tensor g = random_tensor(x.shape(), rng);
  const Tensor analytic = lrn_backward(x, p, g);
  const auto eval = [&] { return dot(g, lrn_forward(x, p)); };

  GradCheckReport r = make_report("lrn.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_batchnorm(std::uint64_t seed, double tol,
                     std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "batchnorm"));
  Tensor x = random_tensor({3, 4, 5, 5}, rng);
  Tensor gamma = random_tensor({4}, rng, 0.5);
  double* gm = gamma.data();
  for (int c = 0; c < 4; ++c) gm[c] += 1.0;
  Tensor beta = random_tensor({4}, rng, 0.2);
  const double eps = 1e-5;

  // Every evaluation runs on scratch running stats: train-mode forward
  // mutates them, and FD needs a pure function of the inputs.
  const auto run = [&](BatchNormCache* cache) {
    Tensor rmean({4});
    Tensor rvar = Tensor::full({4}, 1.0);
    return batchnorm_forward(x, gamma, beta, eps, true, rmean, rvar, 0.1,
                             cache);
  };
  BatchNormCache cache;
  run(&cache);
  const Tensor g = random_tensor(x.shape(), rng);
  const BatchNormGrads grads = batchnorm_backward(cache, gamma, g);
  const auto eval = [&] { return dot(g, run(nullptr)); };

  GradCheckReport ri = make_report("batchnorm.input");
  check_tensor(ri, x, grads.grad_input, eval);
  finish(ri, tol, out);
  GradCheckReport rg = make_report("batchnorm.gamma");
  check_tensor(rg, gamma, grads.grad_gamma, eval);
  finish(rg, tol, out);
  GradCheckReport rb = make_report("batchnorm.beta");
  check_tensor(rb, beta, grads.grad_beta, eval);
  finish(rb, tol, out);
}

void check_dropout(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "dropout"));
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const double rate = 0.3;
  const std::uint64_t mask_seed = derive_seed(seed, "dropout-mask");
  // The mask depends only on the seed and element count, so repeated calls
  // see the same mask and the mapping stays differentiable.
  const DropoutResult fwd = dropout(x, rate, mask_seed, true);
  const Tensor g = random_tensor(x.shape(), rng);
  const Tensor analytic = dropout_backward(fwd.mask, rate, g);
  const auto eval = [&] {
    return dot(g, dropout(x, rate, mask_seed, true).output);
  };

  GradCheckReport r = make_report("dropout.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_flatten(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "flatten"));
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const Tensor g = random_tensor({2, 48}, rng);
  // Flatten is a reshape; its backward is the inverse reshape.
  const Tensor analytic = g.reshaped(x.shape());
  const auto eval = [&] { return dot(g, x.reshaped({2, 48})); };

  GradCheckReport r = make_report("flatten.input");
  check_tensor(r, x, analytic, eval);
  finish(r, tol, out);
}

void check_dense(std::uint64_t seed, double tol,
                 std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "dense"));
  Tensor x = random_tensor({3, 10}, rng);
  Tensor w = random_tensor({10, 6}, rng, 0.5);
  Tensor b = random_tensor({6}, rng, 0.1);
  const Tensor g = random_tensor({3, 6}, rng);
  const DenseGrads grads = dense_backward(x, w, g);
  const auto eval = [&] { return dot(g, dense_forward(x, w, b)); };

  GradCheckReport ri = make_report("dense.input");
  check_tensor(ri, x, grads.grad_input, eval);
  finish(ri, tol, out);
  GradCheckReport rw = make_report("dense.weights");
  check_tensor(rw, w, grads.grad_weights, eval);
  finish(rw, tol, out);
  GradCheckReport rb = make_report("dense.bias");
  check_tensor(rb, b, grads.grad_bias, eval);
  finish(rb, tol, out);
}

void check_softmax(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  Rng rng(derive_seed(seed, "softmax"));
  Tensor logits = random_tensor({5, 4}, rng);
  const std::vector<int> labels = {0, 1, 2, 3, 0};
  const SoftmaxXentResult sx = softmax_xent(logits, labels);
  const auto eval = [&] { return softmax_xent(logits, labels).loss; };

  GradCheckReport r = make_report("softmax.logits");
  Tensor analytic = sx.grad_logits;
  check_tensor(r, logits, analytic, eval);
  finish(r, tol, out);
}

void check_network(std::uint64_t seed, double tol,
                   std::vector<GradCheckReport>& out) {
  NetworkSpec spec;
  spec.name = "gradcheck-tiny";
  spec.in_channels = 1;
  spec.in_h = 8;
  spec.in_w = 8;
  spec.num_classes = 4;
  {
    LayerSpec conv1;
    conv1.kind = LayerKind::Conv;
    conv1.conv = ConvParams{2, 3, 3, 1, 1};
    spec.layers.push_back(conv1);
    LayerSpec relu1;
    relu1.kind = LayerKind::Relu;
    spec.layers.push_back(relu1);
    LayerSpec bn1;
    bn1.kind = LayerKind::BatchNorm;
    spec.layers.push_back(bn1);
    LayerSpec conv2;
    conv2.kind = LayerKind::Conv;
    conv2.conv = ConvParams{3, 3, 3, 1, 0};
    spec.layers.push_back(conv2);
    LayerSpec relu2;
    relu2.kind = LayerKind::Relu;
    spec.layers.push_back(relu2);
    LayerSpec pool;
    pool.kind = LayerKind::MaxPool;
    pool.pool_h = 2;
    pool.pool_w = 2;
    pool.pool_stride = 2;
    spec.layers.push_back(pool);
    LayerSpec flatten;
    flatten.kind = LayerKind::Flatten;
    spec.layers.push_back(flatten);
    LayerSpec dense;
    dense.kind = LayerKind::Dense;
    dense.dense_out = 4;
    spec.layers.push_back(dense);
    LayerSpec sm;
    sm.kind = LayerKind::SoftmaxOutput;
    spec.layers.push_back(sm);
  }
  assign_layer_names(spec);

  Rng rng(derive_seed(seed, "network"));
  Network net = init_params(spec, derive_seed(seed, "network-init"));
  Tensor batch = random_tensor({2, 1, 8, 8}, rng, 0.5);
  const std::vector<int> labels = {1, 3};
  const std::uint64_t step_seed = derive_seed(seed, "network-step");

  // Train-mode forward mutates BatchNorm running stats, so every FD
  // evaluation (and the analytic pass) runs on a scratch copy.
  const auto eval_with = [&](Network& candidate) {
    Network scratch = candidate;
    Tape tape;
    const Tensor logits = forward(scratch, batch, true, step_seed, &tape);
    return softmax_xent(logits, labels).loss;
  };

  Network scratch = net;
  Tape tape;
  const Tensor logits = forward(scratch, batch, true, step_seed, &tape);
  const SoftmaxXentResult sx = softmax_xent(logits, labels);
  const std::vector<LayerGrads> grads = backward(scratch, tape, sx.grad_logits);

  GradCheckReport report = make_report("network.params");
  const auto eval = [&] { return eval_with(net); };
  for (std::size_t li = 0; li < net.states.size(); ++li) {
    LayerState& st = net.states[li];
    if (!st.weights.empty())
      check_tensor(report, st.weights, grads[li].weights, eval);
    if (!st.bias.empty()) check_tensor(report, st.bias, grads[li].bias, eval);
    if (!st.gamma.empty())
      check_tensor(report, st.gamma, grads[li].gamma, eval);
    if (!st.beta.empty()) check_tensor(report, st.beta, grads[li].beta, eval);
  }
  finish(report, tol, out);
}

}  // namespace

GradCheckSummary run_gradcheck(double tolerance, std::uint64_t seed) {
  GradCheckSummary summary;
  summary.tolerance = tolerance;
  summary.step = kStep;
  auto& reports = summary.reports;

  check_conv(seed, tolerance, reports);
  check_maxpool(seed, tolerance, reports);
  check_avgpool(seed, tolerance, reports);
  check_relu(seed, tolerance, reports);
  check_sigmoid(seed, tolerance, reports);
  check_lrn(seed, tolerance, reports);
  check_batchnorm(seed, tolerance, reports);
  check_dropout(seed, tolerance, reports);
  check_flatten(seed, tolerance, reports);
  check_dense(seed, tolerance, reports);
  check_softmax(seed, tolerance, reports);
  check_network(seed, tolerance, reports);

  summary.all_passed = true;
  for (const GradCheckReport& r : reports)
    if (!r.passed) summary.all_passed = false;
  return summary;
}

}  // namespace rebarnet
