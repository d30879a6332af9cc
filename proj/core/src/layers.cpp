#include "rebarnet/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rebarnet/errors.hpp"
#include "rebarnet/rng.hpp"

namespace rebarnet {

namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatRM>;
using MapConstMat = Eigen::Map<const MatRM>;
using MapConstVec = Eigen::Map<const Eigen::VectorXd>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void require_rank(const Tensor& t, int rank, const std::string& name) {
  if (t.rank() != rank) {
    throw ShapeError(name + " must have rank " + std::to_string(rank) +
                     ", got shape " + t.shape_str());
  }
}

// Gathers conv patches: col is [Cin*kh*kw, Ho*Wo] for one image.
void im2col(const double* img, int c_in, int h, int w, int kh, int kw,
            int stride, int pad, int ho, int wo, double* col) {
  const int cols = ho * wo;
  for (int ci = 0; ci < c_in; ++ci) {
    const double* plane = img + static_cast<std::size_t>(ci) * h * w;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        double* row =
            col + (static_cast<std::size_t>(ci) * kh * kw + dy * kw + dx) * cols;
        for (int y = 0; y < ho; ++y) {
          const int iy = y * stride + dy - pad;
          if (iy < 0 || iy >= h) {
            std::fill(row + y * wo, row + (y + 1) * wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < wo; ++x) {
            const int ix = x * stride + dx - pad;
            row[y * wo + x] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatters col gradients back into an image, accumulating overlaps.
void col2im(const double* col, int c_in, int h, int w, int kh, int kw,
            int stride, int pad, int ho, int wo, double* img) {
  const int cols = ho * wo;
  for (int ci = 0; ci < c_in; ++ci) {
    double* plane = img + static_cast<std::size_t>(ci) * h * w;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        const double* row =
            col + (static_cast<std::size_t>(ci) * kh * kw + dy * kw + dx) * cols;
        for (int y = 0; y < ho; ++y) {
          const int iy = y * stride + dy - pad;
          if (iy < 0 || iy >= h) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < wo; ++x) {
            const int ix = x * stride + dx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[y * wo + x];
          }
        }
      }
    }
  }
}

struct ConvGeom {
  int n, c_in, h, w, c_out, kh, kw, ho, wo;
};

ConvGeom check_conv(const Tensor& input, const Tensor& weights,
                    const Tensor* bias, const ConvParams& p) {
  require_rank(input, 4, "conv input");
  require_rank(weights, 4, "conv weights");
  if (p.stride < 1) throw ConfigError("conv stride must be >= 1");
  if (p.padding < 0) throw ConfigError("conv padding must be >= 0");

  ConvGeom g;
  g.n = input.dim(0);
  g.c_in = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.c_out = weights.dim(0);
  g.kh = weights.dim(2);
  g.kw = weights.dim(3);

  require(weights.dim(0) == p.out_channels,
          "weights dim 0 (out_channels) is " + std::to_string(weights.dim(0)) +
              ", params say " + std::to_string(p.out_channels));
  require(weights.dim(1) == g.c_in,
          "weights dim 1 (in_channels) is " + std::to_string(weights.dim(1)) +
              ", input has " + std::to_string(g.c_in) + " channels");
  require(weights.dim(2) == p.kernel_h && weights.dim(3) == p.kernel_w,
          "weights kernel dims " + std::to_string(weights.dim(2)) + "x" +
              std::to_string(weights.dim(3)) + " do not match params " +
              std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w));
  if (bias) {
    require_rank(*bias, 1, "conv bias");
    require(bias->dim(0) == g.c_out,
            "bias dim 0 is " + std::to_string(bias->dim(0)) + ", expected " +
                std::to_string(g.c_out) + " (out_channels)");
  }
  require(g.h + 2 * p.padding >= g.kh,
          "kernel height " + std::to_string(g.kh) +
              " exceeds padded input height " +
              std::to_string(g.h + 2 * p.padding));
  require(g.w + 2 * p.padding >= g.kw,
          "kernel width " + std::to_string(g.kw) +
              " exceeds padded input width " +
              std::to_string(g.w + 2 * p.padding));

  g.ho = conv_out_extent(g.h, g.kh, p.stride, p.padding);
  g.wo = conv_out_extent(g.w, g.kw, p.stride, p.padding);
  require(g.ho >= 1, "conv output height < 1");
  require(g.wo >= 1, "conv output width < 1");
  return g;
}

struct PoolGeom {
  int n, c, h, w, ho, wo;
};

PoolGeom check_pool(const Tensor& input, int ph, int pw, int stride) {
  require_rank(input, 4, "pool input");
  if (stride < 1) throw ConfigError("pool stride must be >= 1");
  if (ph < 1 || pw < 1) throw ConfigError("pool window must be >= 1");
  PoolGeom g;
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  require(ph <= g.h && pw <= g.w,
          "pool window " + std::to_string(ph) + "x" + std::to_string(pw) +
              " larger than input " + std::to_string(g.h) + "x" +
              std::to_string(g.w));
  g.ho = (g.h - ph) / stride + 1;
  g.wo = (g.w - pw) / stride + 1;
  return g;
}

void check_lrn(const Tensor& input, const LrnParams& p) {
  require_rank(input, 4, "lrn input");
  if (p.depth < 1) throw ConfigError("lrn depth must be >= 1");
  if (p.k <= 0.0) throw ConfigError("lrn k must be > 0");
  if (p.alpha < 0.0) throw ConfigError("lrn alpha must be >= 0");
  if (p.beta <= 0.0) throw ConfigError("lrn beta must be > 0");
}

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, const ConvParams& p) {
  const ConvGeom g = check_conv(input, weights, &bias, p);
  Tensor out({g.n, g.c_out, g.ho, g.wo});

  const int patch = g.c_in * g.kh * g.kw;
  const int cols = g.ho * g.wo;
  std::vector<double> col(static_cast<std::size_t>(patch) * cols);
  MapConstMat wmat(weights.data(), g.c_out, patch);
  MapConstVec bvec(bias.data(), g.c_out);

  for (int n = 0; n < g.n; ++n) {
    im2col(input.data() + static_cast<std::size_t>(n) * g.c_in * g.h * g.w,
           g.c_in, g.h, g.w, g.kh, g.kw, p.stride, p.padding, g.ho, g.wo,
           col.data());
    MapConstMat cmat(col.data(), patch, cols);
    MapMat omat(out.data() + static_cast<std::size_t>(n) * g.c_out * cols,
                g.c_out, cols);
    omat.noalias() = wmat * cmat;
    omat.colwise() += bvec;
  }
  return out;
}

Tensor conv2d_forward_naive(const Tensor& input, const Tensor& weights,
                            const Tensor& bias, const ConvParams& p) {
  const ConvGeom g = check_conv(input, weights, &bias, p);
  Tensor out({g.n, g.c_out, g.ho, g.wo});
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.c_out; ++co) {
      for (int y = 0; y < g.ho; ++y) {
        for (int x = 0; x < g.wo; ++x) {
          double acc = bias[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < g.c_in; ++ci) {
            for (int dy = 0; dy < g.kh; ++dy) {
              const int iy = y * p.stride + dy - p.padding;
              if (iy < 0 || iy >= g.h) continue;
              for (int dx = 0; dx < g.kw; ++dx) {
                const int ix = x * p.stride + dx - p.padding;
                if (ix < 0 || ix >= g.w) continue;
                acc += input.at(n, ci, iy, ix) * weights.at(co, ci, dy, dx);
              }
            }
          }
          out.at(n, co, y, x) = acc;
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const ConvParams& p, const Tensor& grad_out) {
  const ConvGeom g = check_conv(input, weights, nullptr, p);
  require_rank(grad_out, 4, "conv grad_out");
  require(grad_out.dim(0) == g.n && grad_out.dim(1) == g.c_out &&
              grad_out.dim(2) == g.ho && grad_out.dim(3) == g.wo,
          "conv grad_out shape " + grad_out.shape_str() + " does not match [" +
              std::to_string(g.n) + ", " + std::to_string(g.c_out) + ", " +
              std::to_string(g.ho) + ", " + std::to_string(g.wo) + "]");

  ConvGrads grads;
  grads.grad_input = Tensor(input.shape());
  grads.grad_weights = Tensor(weights.shape());
  grads.grad_bias = Tensor({g.c_out});

  const int patch = g.c_in * g.kh * g.kw;
  const int cols = g.ho * g.wo;
  std::vector<double> col(static_cast<std::size_t>(patch) * cols);
  std::vector<double> col_grad(static_cast<std::size_t>(patch) * cols);

  MapConstMat wmat(weights.data(), g.c_out, patch);
  MapMat gwmat(grads.grad_weights.data(), g.c_out, patch);

  for (int n = 0; n < g.n; ++n) {
    im2col(input.data() + static_cast<std::size_t>(n) * g.c_in * g.h * g.w,
           g.c_in, g.h, g.w, g.kh, g.kw, p.stride, p.padding, g.ho, g.wo,
           col.data());
    MapConstMat cmat(col.data(), patch, cols);
    const double* gout_base =
        grad_out.data() + static_cast<std::size_t>(n) * g.c_out * cols;
    MapConstMat gout(gout_base, g.c_out, cols);

    gwmat.noalias() += gout * cmat.transpose();
    // Sequential so the summation order never depends on buffer addresses
    // (Eigen's vectorized redux peels to runtime alignment).
    for (int c = 0; c < g.c_out; ++c) {
      double s = 0.0;
      const double* row = gout_base + static_cast<std::size_t>(c) * cols;
      for (int j = 0; j < cols; ++j) s += row[j];
      grads.grad_bias[static_cast<std::size_t>(c)] += s;
    }

    MapMat cgrad(col_grad.data(), patch, cols);
    cgrad.noalias() = wmat.transpose() * gout;
    col2im(col_grad.data(), g.c_in, g.h, g.w, g.kh, g.kw, p.stride, p.padding,
           g.ho, g.wo,
           grads.grad_input.data() +
               static_cast<std::size_t>(n) * g.c_in * g.h * g.w);
  }
  return grads;
}

MaxPoolResult maxpool_forward(const Tensor& input, int ph, int pw,
                              int stride) {
  const PoolGeom g = check_pool(input, ph, pw, stride);
  MaxPoolResult res;
  res.output = Tensor({g.n, g.c, g.ho, g.wo});
  res.argmax.resize(res.output.size());
  res.input_shape = input.shape();

  const double* in = input.data();
  double* out = res.output.data();
  std::size_t o = 0;
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      const std::size_t plane =
          (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
      for (int y = 0; y < g.ho; ++y) {
        for (int x = 0; x < g.wo; ++x, ++o) {
          const int y0 = y * stride;
          const int x0 = x * stride;
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = -1;
          for (int dy = 0; dy < ph; ++dy) {
            const std::size_t row = plane + static_cast<std::size_t>(y0 + dy) * g.w;
            for (int dx = 0; dx < pw; ++dx) {
              const std::size_t idx = row + x0 + dx;
              if (in[idx] > best) {  // strict: ties keep the lowest index
                best = in[idx];
                best_idx = static_cast<std::int64_t>(idx);
              }
            }
          }
          out[o] = best;
          res.argmax[o] = best_idx;
        }
      }
    }
  }
  return res;
}

Tensor maxpool_backward(const MaxPoolResult& cache, const Tensor& grad_out) {
  if (!grad_out.same_shape(cache.output)) {
    throw ShapeError("maxpool grad_out shape " + grad_out.shape_str() +
                     " does not match forward output " +
                     cache.output.shape_str());
  }
  Tensor grad_input(cache.input_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) {
    grad_input[static_cast<std::size_t>(cache.argmax[o])] += grad_out[o];
  }
  return grad_input;
}

Tensor avgpool_forward(const Tensor& input, int ph, int pw, int stride) {
  const PoolGeom g = check_pool(input, ph, pw, stride);
  Tensor out({g.n, g.c, g.ho, g.wo});
  const double inv = 1.0 / (static_cast<double>(ph) * pw);
  const double* in = input.data();
  double* o = out.data();
  std::size_t oi = 0;
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      const std::size_t plane =
          (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
      for (int y = 0; y < g.ho; ++y) {
        for (int x = 0; x < g.wo; ++x, ++oi) {
          double sum = 0.0;
          for (int dy = 0; dy < ph; ++dy) {
            const std::size_t row =
                plane + static_cast<std::size_t>(y * stride + dy) * g.w;
            for (int dx = 0; dx < pw; ++dx) sum += in[row + x * stride + dx];
          }
          o[oi] = sum * inv;
        }
      }
    }
  }
  return out;
}

Tensor avgpool_backward(const std::vector<int>& input_shape, int ph, int pw,
                        int stride, const Tensor& grad_out) {
  Tensor grad_input(input_shape);
  const PoolGeom g = check_pool(grad_input, ph, pw, stride);
  require_rank(grad_out, 4, "avgpool grad_out");
  require(grad_out.dim(0) == g.n && grad_out.dim(1) == g.c &&
              grad_out.dim(2) == g.ho && grad_out.dim(3) == g.wo,
          "avgpool grad_out shape " + grad_out.shape_str() +
              " inconsistent with input " + Tensor::shape_str(input_shape));
  const double inv = 1.0 / (static_cast<double>(ph) * pw);
  double* gi = grad_input.data();
  const double* go = grad_out.data();
  std::size_t oi = 0;
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      const std::size_t plane =
          (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
      for (int y = 0; y < g.ho; ++y) {
        for (int x = 0; x < g.wo; ++x, ++oi) {
          const double v = go[oi] * inv;
          for (int dy = 0; dy < ph; ++dy) {
            const std::size_t row =
                plane + static_cast<std::size_t>(y * stride + dy) * g.w;
            for (int dx = 0; dx < pw; ++dx) gi[row + x * stride + dx] += v;
          }
        }
      }
    }
  }
  return grad_input;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!grad_out.same_shape(input)) {
    throw ShapeError("relu grad_out shape " + grad_out.shape_str() +
                     " does not match input " + input.shape_str());
  }
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return grad;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-input[i]));
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
  if (!grad_out.same_shape(output)) {
    throw ShapeError("sigmoid grad_out shape " + grad_out.shape_str() +
                     " does not match output " + output.shape_str());
  }
  Tensor grad(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    grad[i] = grad_out[i] * output[i] * (1.0 - output[i]);
  }
  return grad;
}

Tensor lrn_forward(const Tensor& input, const LrnParams& p) {
  check_lrn(input, p);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int half = p.depth / 2;
  const int hw = h * w;
  Tensor out(input.shape());
  for (int b = 0; b < n; ++b) {
    const double* img = input.data() + static_cast<std::size_t>(b) * c * hw;
    double* o = out.data() + static_cast<std::size_t>(b) * c * hw;
    for (int ci = 0; ci < c; ++ci) {
      const int lo = std::max(0, ci - half);
      const int hi = std::min(c - 1, ci + half);
      for (int s = 0; s < hw; ++s) {
        double sq = 0.0;
        for (int cj = lo; cj <= hi; ++cj) {
          const double v = img[static_cast<std::size_t>(cj) * hw + s];
          sq += v * v;
        }
        o[static_cast<std::size_t>(ci) * hw + s] =
            img[static_cast<std::size_t>(ci) * hw + s] *
            std::pow(p.k + p.alpha * sq, -p.beta);
      }
    }
  }
  return out;
}

Tensor lrn_backward(const Tensor& input, const LrnParams& p,
                    const Tensor& grad_out) {
  check_lrn(input, p);
  if (!grad_out.same_shape(input)) {
    throw ShapeError("lrn grad_out shape " + grad_out.shape_str() +
                     " does not match input " + input.shape_str());
  }
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  const int half = p.depth / 2;
  const int hw = h * w;
  Tensor grad(input.shape());

  // d/da_j [ a_c * d_c^-beta ] with d_c = k + alpha * sum_{win(c)} a^2:
  //   delta_cj * d_c^-beta - 2 alpha beta a_j a_c d_c^(-beta-1) [j in win(c)]
  for (int b = 0; b < n; ++b) {
    const double* img = input.data() + static_cast<std::size_t>(b) * c * hw;
    const double* go = grad_out.data() + static_cast<std::size_t>(b) * c * hw;
    double* gi = grad.data() + static_cast<std::size_t>(b) * c * hw;
    for (int s = 0; s < hw; ++s) {
      for (int ci = 0; ci < c; ++ci) {
        const int lo = std::max(0, ci - half);
        const int hi = std::min(c - 1, ci + half);
        double sq = 0.0;
        for (int cj = lo; cj <= hi; ++cj) {
          const double v = img[static_cast<std::size_t>(cj) * hw + s];
          sq += v * v;
        }
        const double denom = p.k + p.alpha * sq;
        const double dpow = std::pow(denom, -p.beta);
        const double a_c = img[static_cast<std::size_t>(ci) * hw + s];
        const double g_c = go[static_cast<std::size_t>(ci) * hw + s];
        gi[static_cast<std::size_t>(ci) * hw + s] += g_c * dpow;
        const double common =
            -2.0 * p.alpha * p.beta * g_c * a_c * dpow / denom;
        for (int cj = lo; cj <= hi; ++cj) {
          gi[static_cast<std::size_t>(cj) * hw + s] +=
              common * img[static_cast<std::size_t>(cj) * hw + s];
        }
      }
    }
  }
  return grad;
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma,
                         const Tensor& beta_shift, double eps, bool train,
                         Tensor& running_mean, Tensor& running_var,
                         double momentum, BatchNormCache* cache) {
  require_rank(input, 4, "batchnorm input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  require_rank(gamma, 1, "batchnorm gamma");
  require_rank(beta_shift, 1, "batchnorm beta");
  require(gamma.dim(0) == c && beta_shift.dim(0) == c,
          "batchnorm scale/shift length must equal channel count " +
              std::to_string(c));
  if (eps <= 0.0) throw ConfigError("batchnorm eps must be > 0");
  const std::size_t reduce = static_cast<std::size_t>(n) * h * w;
  if (reduce == 0) throw ShapeError("batchnorm: empty batch in train mode");

  Tensor out(input.shape());
  const int hw = h * w;
  std::vector<double> mean(c), var(c);
  if (train) {
    for (int ci = 0; ci < c; ++ci) {
      double sum = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p =
            input.data() + (static_cast<std::size_t>(b) * c + ci) * hw;
        for (int s = 0; s < hw; ++s) sum += p[s];
      }
      const double m = sum / static_cast<double>(reduce);
      double v = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p =
            input.data() + (static_cast<std::size_t>(b) * c + ci) * hw;
        for (int s = 0; s < hw; ++s) v += (p[s] - m) * (p[s] - m);
      }
      v /= static_cast<double>(reduce);
      mean[ci] = m;
      var[ci] = v;
      running_mean[ci] = (1.0 - momentum) * running_mean[ci] + momentum * m;
      running_var[ci] = (1.0 - momentum) * running_var[ci] + momentum * v;
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      mean[ci] = running_mean[ci];
      var[ci] = running_var[ci];
    }
  }

  if (cache) {
    cache->xhat = Tensor(input.shape());
    cache->inv_std.resize(c);
    cache->train = train;
  }
  for (int ci = 0; ci < c; ++ci) {
    const double inv_std = 1.0 / std::sqrt(var[ci] + eps);
    if (cache) cache->inv_std[static_cast<std::size_t>(ci)] = inv_std;
    const double g = gamma[static_cast<std::size_t>(ci)];
    const double sh = beta_shift[static_cast<std::size_t>(ci)];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ci) * hw;
      const double* p = input.data() + off;
      double* o = out.data() + off;
      for (int s = 0; s < hw; ++s) {
        const double xh = (p[s] - mean[ci]) * inv_std;
        if (cache) cache->xhat[off + s] = xh;
        o[s] = g * xh + sh;
      }
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache,
                                  const Tensor& gamma,
                                  const Tensor& grad_out) {
  if (!cache.train) {
    throw ShapeError("batchnorm backward requires a train-mode cache");
  }
  if (!grad_out.same_shape(cache.xhat)) {
    throw ShapeError("batchnorm grad_out shape " + grad_out.shape_str() +
                     " does not match cached activation " +
                     cache.xhat.shape_str());
  }
  const int n = cache.xhat.dim(0), c = cache.xhat.dim(1),
            h = cache.xhat.dim(2), w = cache.xhat.dim(3);
  const int hw = h * w;
  const double reduce = static_cast<double>(n) * hw;

  BatchNormGrads grads;
  grads.grad_input = Tensor(cache.xhat.shape());
  grads.grad_gamma = Tensor({c});
  grads.grad_beta = Tensor({c});

  for (int ci = 0; ci < c; ++ci) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ci) * hw;
      for (int s = 0; s < hw; ++s) {
        sum_g += grad_out[off + s];
        sum_gx += grad_out[off + s] * cache.xhat[off + s];
      }
    }
    grads.grad_beta[static_cast<std::size_t>(ci)] = sum_g;
    grads.grad_gamma[static_cast<std::size_t>(ci)] = sum_gx;

    const double g = gamma[static_cast<std::size_t>(ci)];
    const double scale = g * cache.inv_std[static_cast<std::size_t>(ci)] / reduce;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ci) * hw;
      for (int s = 0; s < hw; ++s) {
        grads.grad_input[off + s] =
            scale * (reduce * grad_out[off + s] - sum_g -
                     cache.xhat[off + s] * sum_gx);
      }
    }
  }
  return grads;
}

DropoutResult dropout(const Tensor& input, double rate, std::uint64_t seed,
                      bool train) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " +
                      std::to_string(rate));
  }
  DropoutResult res;
  res.output = Tensor(input.shape());
  res.mask.assign(input.size(), 1);
  if (!train || rate == 0.0) {
    for (std::size_t i = 0; i < input.size(); ++i) res.output[i] = input[i];
    return res;
  }
  Rng rng(seed);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (rng.uniform() < rate) {
      res.mask[i] = 0;
      res.output[i] = 0.0;
    } else {
      res.output[i] = input[i] * scale;
    }
  }
  return res;
}

Tensor dropout_backward(const std::vector<std::uint8_t>& mask, double rate,
                        const Tensor& grad_out) {
  if (mask.size() != grad_out.size()) {
    throw ShapeError("dropout mask size " + std::to_string(mask.size()) +
                     " does not match grad_out " +
                     std::to_string(grad_out.size()));
  }
  const double scale = 1.0 / (1.0 - rate);
  Tensor grad(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad[i] = mask[i] ? grad_out[i] * scale : 0.0;
  }
  return grad;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights,
                     const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  require_rank(bias, 1, "dense bias");
  const int n = input.dim(0), d = input.dim(1);
  require(weights.dim(0) == d,
          "dense inner dimensions differ: input has " + std::to_string(d) +
              " features, weights expect " + std::to_string(weights.dim(0)));
  const int m = weights.dim(1);
  require(bias.dim(0) == m, "dense bias length " + std::to_string(bias.dim(0)) +
                                " does not match output width " +
                                std::to_string(m));
  Tensor out({n, m});
  MapConstMat x(input.data(), n, d);
  MapConstMat wmat(weights.data(), d, m);
  MapMat o(out.data(), n, m);
  o.noalias() = x * wmat;
  o.rowwise() += MapConstVec(bias.data(), m).transpose();
  return out;
}

Tensor dense_forward_naive(const Tensor& input, const Tensor& weights,
                           const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const int n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  require(weights.dim(0) == d,
          "dense inner dimensions differ: input has " + std::to_string(d) +
              " features, weights expect " + std::to_string(weights.dim(0)));
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = bias[static_cast<std::size_t>(j)];
      for (int k = 0; k < d; ++k) acc += input.at(i, k) * weights.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_out) {
  require_rank(grad_out, 2, "dense grad_out");
  const int n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  require(grad_out.dim(0) == n && grad_out.dim(1) == m,
          "dense grad_out shape " + grad_out.shape_str() +
              " does not match [" + std::to_string(n) + ", " +
              std::to_string(m) + "]");
  DenseGrads grads;
  grads.grad_input = Tensor({n, d});
  grads.grad_weights = Tensor({d, m});
  grads.grad_bias = Tensor({m});

  MapConstMat x(input.data(), n, d);
  MapConstMat wmat(weights.data(), d, m);
  MapConstMat g(grad_out.data(), n, m);
  MapMat gi(grads.grad_input.data(), n, d);
  MapMat gw(grads.grad_weights.data(), d, m);

  gi.noalias() = g * wmat.transpose();
  gw.noalias() = x.transpose() * g;
  // Sequential so the summation order never depends on buffer addresses
  // (Eigen's vectorized redux peels to runtime alignment).
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      grads.grad_bias[static_cast<std::size_t>(j)] +=
          grad_out[static_cast<std::size_t>(i) * m + j];
  return grads;
}

SoftmaxXentResult softmax_xent(const Tensor& logits,
                               const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax logits");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " does not match batch size " + std::to_string(n));
  }
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0 ||
        labels[static_cast<std::size_t>(i)] >= k) {
      throw DataError("label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " outside [0, " + std::to_string(k) +
                      ")");
    }
  }

  SoftmaxXentResult res;
  res.probs = Tensor({n, k});
  res.grad_logits = Tensor({n, k});
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + static_cast<std::size_t>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - m);
    const double log_sum = std::log(sum);
    for (int j = 0; j < k; ++j) {
      const double pj = std::exp(row[j] - m) / sum;
      res.probs.at(i, j) = pj;
      res.grad_logits.at(i, j) = pj * inv_n;
    }
    const int y = labels[static_cast<std::size_t>(i)];
    loss -= (row[y] - m - log_sum);
    res.grad_logits.at(i, y) -= inv_n;
  }
  res.loss = loss * inv_n;
  return res;
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax logits");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor probs({n, k});
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + static_cast<std::size_t>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - m);
    for (int j = 0; j < k; ++j) probs.at(i, j) = std::exp(row[j] - m) / sum;
  }
  return probs;
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  require_rank(image, 3, "resize input");
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("resize target must be >= 1x1");
  }
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, out_h, out_w});
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = image.data() + static_cast<std::size_t>(ci) * h * w;
    for (int y = 0; y < out_h; ++y) {
      const double fy = y * sy;
      const int y0 = std::min(static_cast<int>(fy), h - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double ty = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        const double fx = x * sx;
        const int x0 = std::min(static_cast<int>(fx), w - 1);
        const int x1 = std::min(x0 + 1, w - 1);
        const double tx = fx - x0;
        const double top = plane[static_cast<std::size_t>(y0) * w + x0] * (1.0 - tx) +
                           plane[static_cast<std::size_t>(y0) * w + x1] * tx;
        const double bot = plane[static_cast<std::size_t>(y1) * w + x0] * (1.0 - tx) +
                           plane[static_cast<std::size_t>(y1) * w + x1] * tx;
        out.at(ci, y, x) = top * (1.0 - ty) + bot * ty;
      }
    }
  }
  return out;
}

}  // namespace rebarnet
