#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "../rng.hpp"
#include "tensor.hpp"

namespace shaftpose::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Output extent of a "same"-padded window: ceil(size / stride).
inline int same_out(int size, int stride) { return (size + stride - 1) / stride; }
// Leading (top/left) padding of a "same"-padded window; any remainder pads the trailing side.
inline int same_pad(int size, int kernel, int stride) {
  const int total = std::max((same_out(size, stride) - 1) * stride + kernel - size, 0);
  return total / 2;
}

// 2-D convolution, NHWC, HWIO weights, kernel 1 or 3, stride 1 or 2, same padding.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias = true)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), has_bias_(bias) {
    require(kernel == 1 || kernel == 3, "conv2d: kernel must be 1 or 3");
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    require(in_channels > 0 && out_channels > 0, "conv2d: channel counts must be positive");
    weight_.resize({kernel, kernel, in_channels, out_channels});
    if (has_bias_) bias_.resize({1, 1, 1, out_channels});
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  // He (fan-in) initialisation; bias starts at zero.
  void init(Rng& rng) {
    const double scale = std::sqrt(2.0 / (k_ * k_ * in_));
    for (auto& w : weight_.values()) w = static_cast<T>(scale * rng.normal());
    if (has_bias_) std::fill(bias_.values().begin(), bias_.values().end(), T(0));
  }

  void forward(const Tensor<T>& in, Tensor<T>& out) {
    const Shape s = in.shape();
    if (s.c != in_) fail(ErrorCode::kInvalidArgument, "conv2d: expected " + std::to_string(in_) + " input channels, got " + s.str());
    in_shape_ = s;
    const int ho = same_out(s.h, stride_), wo = same_out(s.w, stride_);
    out.reshape({s.n, ho, wo, out_});
    const Eigen::Index rows = static_cast<Eigen::Index>(s.n) * ho * wo;
    const Eigen::Index cols = static_cast<Eigen::Index>(k_) * k_ * in_;
    ConstMatrixMap<T> wm(weight_.data(), cols, out_);
    MatrixMap<T> y(out.data(), rows, out_);
    if (pointwise()) {
      y.noalias() = ConstMatrixMap<T>(in.data(), rows, cols) * wm;
    } else {
      im2col(in);
      y.noalias() = ConstMatrixMap<T>(col_.data(), rows, cols) * wm;
    }
    if (has_bias_) {
      y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.data(), out_);
    }
    check_finite<T>(out.values(), "conv2d");
  }

  // Accumulates parameter gradients and, if `propagate`, the input gradient.
  void backward(Tensor<T>& in, const Tensor<T>& out, bool propagate = true) {
    const Shape s = in_shape_;
    const Shape so = out.shape();
    const Eigen::Index rows = static_cast<Eigen::Index>(so.n) * so.h * so.w;
    const Eigen::Index cols = static_cast<Eigen::Index>(k_) * k_ * in_;
    ConstMatrixMap<T> dy(out.grad(), rows, out_);
    MatrixMap<T> dw(weight_.grad(), cols, out_);
    const T* colp = pointwise() ? in.data() : col_.data();
    dw.noalias() += ConstMatrixMap<T>(colp, rows, cols).transpose() * dy;
    if (has_bias_) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad(), out_) += dy.colwise().sum();
    }
    if (!propagate) return;
    ConstMatrixMap<T> wm(weight_.data(), cols, out_);
    if (pointwise()) {
      MatrixMap<T>(in.grad(), rows, cols).noalias() += dy * wm.transpose();
    } else {
      dcol_.resize(static_cast<std::size_t>(rows * cols));
      MatrixMap<T>(dcol_.data(), rows, cols).noalias() = dy * wm.transpose();
      col2im(in, s);
    }
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }
  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> p{&weight_};
    if (has_bias_) p.push_back(&bias_);
    return p;
  }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1; }

  void im2col(const Tensor<T>& in) {
    const Shape s = in.shape();
    const int ho = same_out(s.h, stride_), wo = same_out(s.w, stride_);
    const int pt = same_pad(s.h, k_, stride_), pl = same_pad(s.w, k_, stride_);
    const std::size_t cols = static_cast<std::size_t>(k_) * k_ * in_;
    col_.assign(static_cast<std::size_t>(s.n) * ho * wo * cols, T(0));
    T* dst = col_.data();
    for (int n = 0; n < s.n; ++n) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, dst += cols) {
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ + ky - pt;
            if (iy < 0 || iy >= s.h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ + kx - pl;
              if (ix < 0 || ix >= s.w) continue;
              const T* src = in.data() + in.index(n, iy, ix, 0);
              std::copy(src, src + in_, dst + (ky * k_ + kx) * in_);
            }
          }
        }
      }
    }
  }

  void col2im(Tensor<T>& in, const Shape& s) {
    const int ho = same_out(s.h, stride_), wo = same_out(s.w, stride_);
    const int pt = same_pad(s.h, k_, stride_), pl = same_pad(s.w, k_, stride_);
    const std::size_t cols = static_cast<std::size_t>(k_) * k_ * in_;
    const T* src = dcol_.data();
    for (int n = 0; n < s.n; ++n) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, src += cols) {
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ + ky - pt;
            if (iy < 0 || iy >= s.h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ + kx - pl;
              if (ix < 0 || ix >= s.w) continue;
              T* dst = in.grad() + in.index(n, iy, ix, 0);
              const T* g = src + (ky * k_ + kx) * in_;
              for (int c = 0; c < in_; ++c) dst[c] += g[c];
            }
          }
        }
      }
    }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1;
  bool has_bias_ = true;
  Tensor<T> weight_;
  Tensor<T> bias_;
  Shape in_shape_;
  Buffer<T> col_;
  Buffer<T> dcol_;
};

// relu'(0) is taken as 0.
template <typename T>
class Relu {
 public:
  void forward(const Tensor<T>& in, Tensor<T>& out) {
    out.reshape(in.shape());
    const T* x = in.data();
    T* y = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  }
  void backward(Tensor<T>& in, const Tensor<T>& out) {
    const T* x = in.data();
    const T* dy = out.grad();
    T* dx = in.grad();
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (x[i] > T(0)) dx[i] += dy[i];
    }
  }
};

template <typename T>
class Tanh {
 public:
  void forward(const Tensor<T>& in, Tensor<T>& out) {
    out.reshape(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  }
  void backward(Tensor<T>& in, const Tensor<T>& out) {
    const T* y = out.data();
    const T* dy = out.grad();
    T* dx = in.grad();
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
  }
};

// Per-channel normalisation over (N, H, W). Train mode uses batch statistics and updates the
// running estimates; eval mode applies the frozen running estimates as a fixed affine map.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int channels, double momentum = 0.1, double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps) {
    gamma_.resize({1, 1, 1, channels}, T(1));
    beta_.resize({1, 1, 1, channels}, T(0));
    running_mean_.resize({1, 1, 1, channels}, T(0));
    running_var_.resize({1, 1, 1, channels}, T(1));
  }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  void forward(const Tensor<T>& in, Tensor<T>& out) {
    const Shape s = in.shape();
    if (s.c != channels_) fail(ErrorCode::kInvalidArgument, "batchnorm: channel mismatch " + s.str());
    out.reshape(s);
    const std::size_t m = s.size() / channels_;
    xhat_.resize(s.size());
    inv_std_.assign(channels_, T(0));
    std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
    const T* x = in.data();
    if (training_) {
      for (std::size_t i = 0; i < m; ++i) {
        for (int c = 0; c < channels_; ++c) mean[c] += x[i * channels_ + c];
      }
      for (int c = 0; c < channels_; ++c) mean[c] /= static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        for (int c = 0; c < channels_; ++c) {
          const double d = x[i * channels_ + c] - mean[c];
          var[c] += d * d;
        }
      }
      for (int c = 0; c < channels_; ++c) {
        var[c] /= static_cast<double>(m);
        const double unbiased = m > 1 ? var[c] * m / (m - 1.0) : var[c];
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c]);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
      }
    } else {
      for (int c = 0; c < channels_; ++c) {
        mean[c] = running_mean_[c];
        var[c] = running_var_[c];
      }
    }
    for (int c = 0; c < channels_; ++c) inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var[c] + eps_));
    T* y = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const std::size_t k = i * channels_ + c;
        xhat_[k] = (x[k] - static_cast<T>(mean[c])) * inv_std_[c];
        y[k] = gamma_[c] * xhat_[k] + beta_[c];
      }
    }
    check_finite<T>(out.values(), "batchnorm");
  }

  void backward(Tensor<T>& in, const Tensor<T>& out) {
    const std::size_t m = in.size() / channels_;
    const T* dy = out.grad();
    T* dx = in.grad();
    std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const std::size_t k = i * channels_ + c;
        sum_dy[c] += dy[k];
        sum_dy_xhat[c] += dy[k] * xhat_[k];
      }
    }
    for (int c = 0; c < channels_; ++c) {
      gamma_.grad()[c] += static_cast<T>(sum_dy_xhat[c]);
      beta_.grad()[c] += static_cast<T>(sum_dy[c]);
    }
    if (!training_) {
      for (std::size_t i = 0; i < m; ++i) {
        for (int c = 0; c < channels_; ++c) dx[i * channels_ + c] += dy[i * channels_ + c] * gamma_[c] * inv_std_[c];
      }
      return;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const std::size_t k = i * channels_ + c;
        const double g = static_cast<double>(gamma_[c]) * inv_std_[c];
        dx[k] += static_cast<T>(g * (dy[k] - inv_m * sum_dy[c] - xhat_[k] * inv_m * sum_dy_xhat[c]));
      }
    }
  }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  std::vector<Tensor<T>*> params() { return {&gamma_, &beta_}; }
  std::vector<Tensor<T>*> buffers() { return {&running_mean_, &running_var_}; }

 private:
  int channels_ = 0;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  bool training_ = true;
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
  Buffer<T> xhat_;
  Buffer<T> inv_std_;
};

// 2x2 window, stride 2; odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2 {
 public:
  void forward(const Tensor<T>& in, Tensor<T>& out) {
    const Shape s = in.shape();
    require(s.h >= 2 && s.w >= 2, "maxpool2: input smaller than the window");
    out.reshape({s.n, s.h / 2, s.w / 2, s.c});
    argmax_.resize(out.size());
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int y = 0; y < s.h / 2; ++y) {
        for (int x = 0; x < s.w / 2; ++x) {
          for (int c = 0; c < s.c; ++c, ++o) {
            std::size_t best = in.index(n, 2 * y, 2 * x, c);
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t k = in.index(n, 2 * y + dy, 2 * x + dx, c);
                if (in[k] > in[best]) best = k;
              }
            }
            argmax_[o] = best;
            out[o] = in[best];
          }
        }
      }
    }
  }
  void backward(Tensor<T>& in, const Tensor<T>& out) {
    for (std::size_t o = 0; o < out.size(); ++o) in.grad()[argmax_[o]] += out.grad()[o];
  }

 private:
  std::vector<std::size_t> argmax_;
};

// Channel-wise concatenation of tensors with equal (N, H, W).
template <typename T>
class ConcatChannels {
 public:
  void forward(std::span<const Tensor<T>* const> ins, Tensor<T>& out) {
    require(!ins.empty(), "concat: no inputs");
    Shape s = ins[0]->shape();
    int channels = 0;
    for (const auto* t : ins) {
      const Shape si = t->shape();
      if (si.n != s.n || si.h != s.h || si.w != s.w) {
        fail(ErrorCode::kInvalidArgument, "concat: spatial mismatch " + si.str() + " vs " + s.str());
      }
      channels += si.c;
    }
    s.c = channels;
    out.reshape(s);
    const std::size_t pixels = s.size() / channels;
    int offset = 0;
    for (const auto* t : ins) {
      const int c = t->shape().c;
      for (std::size_t p = 0; p < pixels; ++p) {
        std::copy_n(t->data() + p * c, c, out.data() + p * channels + offset);
      }
      offset += c;
    }
  }
  void backward(std::span<Tensor<T>* const> ins, const Tensor<T>& out) {
    const int channels = out.shape().c;
    const std::size_t pixels = out.size() / channels;
    int offset = 0;
    for (auto* t : ins) {
      const int c = t->shape().c;
      for (std::size_t p = 0; p < pixels; ++p) {
        const T* g = out.grad() + p * channels + offset;
        T* d = t->grad() + p * c;
        for (int k = 0; k < c; ++k) d[k] += g[k];
      }
      offset += c;
    }
  }
};

// Fully connected layer over the flattened (H, W, C) of each batch item; output {N,1,1,out}.
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(int in_features, int out_features) : in_(in_features), out_(out_features) {
    weight_.resize({1, 1, in_features, out_features});
    bias_.resize({1, 1, 1, out_features});
  }
  void init(Rng& rng) {
    const double scale = std::sqrt(2.0 / in_);
    for (auto& w : weight_.values()) w = static_cast<T>(scale * rng.normal());
    std::fill(bias_.values().begin(), bias_.values().end(), T(0));
  }
  void forward(const Tensor<T>& in, Tensor<T>& out) {
    const int n = in.shape().n;
    if (static_cast<int>(in.size() / n) != in_) fail(ErrorCode::kInvalidArgument, "dense: input size mismatch " + in.shape().str());
    out.reshape({n, 1, 1, out_});
    MatrixMap<T> y(out.data(), n, out_);
    y.noalias() = ConstMatrixMap<T>(in.data(), n, in_) * ConstMatrixMap<T>(weight_.data(), in_, out_);
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.data(), out_);
    check_finite<T>(out.values(), "dense");
  }
  void backward(Tensor<T>& in, const Tensor<T>& out) {
    const int n = in.shape().n;
    ConstMatrixMap<T> dy(out.grad(), n, out_);
    MatrixMap<T>(weight_.grad(), in_, out_).noalias() += ConstMatrixMap<T>(in.data(), n, in_).transpose() * dy;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad(), out_) += dy.colwise().sum();
    MatrixMap<T>(in.grad(), n, in_).noalias() += dy * ConstMatrixMap<T>(weight_.data(), in_, out_).transpose();
  }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::vector<Tensor<T>*> params() { return {&weight_, &bias_}; }

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> weight_, bias_;
};

}  // namespace shaftpose::nn
