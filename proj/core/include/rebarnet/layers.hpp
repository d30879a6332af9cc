#pragma once

#include <cstdint>
#include <vector>

#include "rebarnet/tensor.hpp"

namespace rebarnet {

// Differentiable layer primitives. Forward passes take [N, C, H, W] unless
// noted; every backward is hand-written and checked against central finite
// differences in the test suite.

struct ConvParams {
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;  // symmetric zero padding
};

struct LrnParams {
  int depth = 5;        // cross-channel window size (c +/- depth/2)
  double k = 2.0;       // additive offset
  double alpha = 1e-4;  // scale of the squared sum
  double beta = 0.75;   // exponent
};

// Output spatial extent of a strided window op, floor semantics.
int conv_out_extent(int in, int kernel, int stride, int padding);

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, const ConvParams& params);

// Six-nested-loop reference convolution. Slow; exists as the correctness
// oracle for the im2col/GEMM path above.
Tensor conv2d_forward_naive(const Tensor& input, const Tensor& weights,
                            const Tensor& bias, const ConvParams& params);

struct ConvGrads {
  Tensor grad_input;
  Tensor grad_weights;
  Tensor grad_bias;
};
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const ConvParams& params, const Tensor& grad_out);

// Max pooling, floor semantics: trailing rows/cols that do not fill a window
// are dropped. Ties break to the lowest linear index so backward routing is
// deterministic.
struct MaxPoolResult {
  Tensor output;
  std::vector<std::int64_t> argmax;  // linear index into the input, per output cell
  std::vector<int> input_shape;
};
MaxPoolResult maxpool_forward(const Tensor& input, int pool_h, int pool_w,
                              int stride);
Tensor maxpool_backward(const MaxPoolResult& cache, const Tensor& grad_out);

Tensor avgpool_forward(const Tensor& input, int pool_h, int pool_w,
                       int stride);
Tensor avgpool_backward(const std::vector<int>& input_shape, int pool_h,
                        int pool_w, int stride, const Tensor& grad_out);

Tensor relu(const Tensor& input);
// Subgradient at 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor sigmoid(const Tensor& input);
// Takes the forward output y and uses y * (1 - y).
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

Tensor lrn_forward(const Tensor& input, const LrnParams& params);
Tensor lrn_backward(const Tensor& input, const LrnParams& params,
                    const Tensor& grad_out);

struct BatchNormCache {
  Tensor xhat;                  // normalized input, same shape as input
  std::vector<double> inv_std;  // per channel
  bool train = true;
};
// Train mode normalizes by batch statistics over (N, H, W) per channel and
// updates running_mean/running_var in place with the given momentum; infer
// mode normalizes by the running stats and leaves them untouched.
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma,
                         const Tensor& beta_shift, double eps, bool train,
                         Tensor& running_mean, Tensor& running_var,
                         double momentum, BatchNormCache* cache);

struct BatchNormGrads {
  Tensor grad_input;
  Tensor grad_gamma;
  Tensor grad_beta;
};
BatchNormGrads batchnorm_backward(const BatchNormCache& cache,
                                  const Tensor& gamma, const Tensor& grad_out);

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); infer mode is the identity.
struct DropoutResult {
  Tensor output;
  std::vector<std::uint8_t> mask;  // 1 = kept
};
DropoutResult dropout(const Tensor& input, double rate, std::uint64_t seed,
                      bool train);
Tensor dropout_backward(const std::vector<std::uint8_t>& mask, double rate,
                        const Tensor& grad_out);

// input [N, D] x weights [D, M] + bias [M].
Tensor dense_forward(const Tensor& input, const Tensor& weights,
                     const Tensor& bias);
// Triple-loop reference for the GEMM-backed dense_forward.
Tensor dense_forward_naive(const Tensor& input, const Tensor& weights,
                           const Tensor& bias);
struct DenseGrads {
  Tensor grad_input;
  Tensor grad_weights;
  Tensor grad_bias;
};
DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_out);

// Row-wise softmax with max subtraction, mean cross-entropy loss, and the
// loss gradient (probs - onehot) / N in one pass.
struct SoftmaxXentResult {
  double loss = 0.0;
  Tensor probs;
  Tensor grad_logits;
};
SoftmaxXentResult softmax_xent(const Tensor& logits,
                               const std::vector<int>& labels);

// Row-wise softmax alone (for reporting class probabilities).
Tensor softmax_rows(const Tensor& logits);

// Bilinear resize of a [C, H, W] image with corner-aligned sampling.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

}  // namespace rebarnet
