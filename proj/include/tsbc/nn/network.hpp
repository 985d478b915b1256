// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Policy network: conv -> [instance norm] -> ReLU stack, dense -> layer norm
// -> ReLU stack, then a mean head and a raw-variance head producing a
// diagonal Gaussian. Templated on the scalar so training can run in float
// while gradient checks run in double.
//
// Activations are kept as row-major C x (B * P) matrices: row c holds the
// channel-c pixels of every sample back to back (column b * P + p).

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsbc/error.hpp"
#include "tsbc/gaussian.hpp"
#include "tsbc/nn/architecture.hpp"
#include "tsbc/nn/tensor.hpp"
#include "tsbc/random.hpp"

namespace tsbc {

inline constexpr double kNormEpsilon = 1e-5;

template <class T>
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> data;

  std::size_t size() const { return data.size(); }
  bool operator==(const ParamTensor&) const = default;
};

template <class T>
using ParameterSet = std::vector<ParamTensor<T>>;

template <class T>
ParameterSet<T> zeros_like(const ParameterSet<T>& p) {
  ParameterSet<T> z = p;
  for (auto& t : z) std::fill(t.data.begin(), t.data.end(), T(0));
  return z;
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-layer activations of one forward pass, plus what backward needs.
template <class T>
struct ForwardCache {
  struct Conv {
    RowMatrix<T> col;      ///< im2col of the layer input, K x (B * P_out)
    RowMatrix<T> xhat;     ///< normalized pre-activation (empty without norm)
    RowMatrix<T> inv_std;  ///< C x B
    RowMatrix<T> act;      ///< post-ReLU feature, C x (B * P_out)
  };
  struct Dense {
    RowMatrix<T> xhat;     ///< width x B
    RowMatrix<T> inv_std;  ///< 1 x B
    RowMatrix<T> act;      ///< width x B
  };

  Architecture arch;
  std::size_t batch = 0;
  std::vector<Conv> conv;
  RowMatrix<T> flat;  ///< flattened last conv feature, (C * P) x B
  std::vector<Dense> dense;
  RowMatrix<T> head_input;
  RowMatrix<T> raw_variance;  ///< A x B

  /// x_l for one sample as a [C, H, W] tensor.
  Tensor<double> conv_feature(std::size_t layer, std::size_t sample) const {
    const auto shape = arch.conv_shapes().at(layer);
    const std::size_t p = std::size_t{shape.out_height} * shape.out_width;
    Tensor<double> t({shape.out_channels, shape.out_height, shape.out_width});
    const auto& a = conv.at(layer).act;
    for (std::size_t c = 0; c < shape.out_channels; ++c) {
      for (std::size_t i = 0; i < p; ++i) {
        t[c * p + i] = static_cast<double>(a(c, sample * p + i));
      }
    }
    return t;
  }

  std::vector<double> dense_feature(std::size_t layer, std::size_t sample) const {
    const auto& a = dense.at(layer).act;
    std::vector<double> v(a.rows());
    for (Eigen::Index j = 0; j < a.rows(); ++j) v[j] = static_cast<double>(a(j, sample));
    return v;
  }
};

template <class T>
struct ForwardResult {
  GaussianBatch gaussians;
  std::optional<ForwardCache<T>> cache;
};

template <class T>
class PolicyNetwork {
 public:
  using Scalar = T;
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  struct ConvIndex {
    std::size_t kernel, bias, scale = npos, shift = npos;
  };
  struct DenseIndex {
    std::size_t weight, bias, scale, shift;
  };
  struct HeadIndex {
    std::size_t mean_weight, mean_bias, var_weight, var_bias;
  };

  /// Zero-initialized parameters; see `initialized` for the random init.
  explicit PolicyNetwork(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    const auto shapes = arch_.conv_shapes();
    auto add = [this](std::string name, std::vector<std::size_t> shape) {
      params_.push_back({std::move(name), shape, std::vector<T>(shape_size(shape), T(0))});
      return params_.size() - 1;
    };
    for (std::size_t l = 0; l < arch_.conv.size(); ++l) {
      const auto& s = shapes[l];
      const std::size_t k = arch_.conv[l].geometry.kernel;
      const std::string p = "conv" + std::to_string(l) + ".";
      ConvIndex idx{add(p + "kernel", {s.out_channels, s.in_channels, k, k}),
                    add(p + "bias", {s.out_channels})};
      if (arch_.conv[l].instance_norm) {
        idx.scale = add(p + "norm_scale", {s.out_channels});
        idx.shift = add(p + "norm_shift", {s.out_channels});
      }
      conv_idx_.push_back(idx);
    }
    std::size_t in = arch_.conv_output_size();
    for (std::size_t d = 0; d < arch_.dense.size(); ++d) {
      const std::size_t out = arch_.dense[d];
      const std::string p = "dense" + std::to_string(d) + ".";
      dense_idx_.push_back({add(p + "weight", {out, in}), add(p + "bias", {out}),
                            add(p + "norm_scale", {out}), add(p + "norm_shift", {out})});
      in = out;
    }
    const std::size_t a = arch_.action_dim;
    head_idx_ = {add("head.mean_weight", {a, in}), add("head.mean_bias", {a}),
                 add("head.var_weight", {a, in}), add("head.var_bias", {a})};
  }

  /// Fan-in scaled uniform weights and biases, norm affine = (1, 0).
  static PolicyNetwork initialized(Architecture arch, std::uint64_t seed) {
    PolicyNetwork net(std::move(arch));
    Rng rng(seed);
    auto fill = [&rng](std::vector<T>& v, double bound) {
      for (T& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    };
    for (const ConvIndex& c : net.conv_idx_) {
      const auto& shape = net.params_[c.kernel].shape;
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape[1] * shape[2] * shape[3]));
      fill(net.params_[c.kernel].data, bound);
      fill(net.params_[c.bias].data, bound);
      if (c.scale != npos) std::fill(net.params_[c.scale].data.begin(), net.params_[c.scale].data.end(), T(1));
    }
    for (const DenseIndex& d : net.dense_idx_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.params_[d.weight].shape[1]));
      fill(net.params_[d.weight].data, bound);
      fill(net.params_[d.bias].data, bound);
      std::fill(net.params_[d.scale].data.begin(), net.params_[d.scale].data.end(), T(1));
    }
    const double bound =
        1.0 / std::sqrt(static_cast<double>(net.params_[net.head_idx_.mean_weight].shape[1]));
    for (std::size_t i : {net.head_idx_.mean_weight, net.head_idx_.mean_bias,
                          net.head_idx_.var_weight, net.head_idx_.var_bias}) {
      fill(net.params_[i].data, bound);
    }
    return net;
  }

  template <class U>
  PolicyNetwork<U> cast() const {
    PolicyNetwork<U> out(arch_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      for (std::size_t j = 0; j < params_[i].data.size(); ++j) {
        out.parameters()[i].data[j] = static_cast<U>(params_[i].data[j]);
      }
    }
    return out;
  }

  const Architecture& architecture() const { return arch_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  const std::vector<ConvIndex>& conv_index() const { return conv_idx_; }
  const std::vector<DenseIndex>& dense_index() const { return dense_idx_; }
  const HeadIndex& head_index() const { return head_idx_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  /// Dense layer d weight as an out x in matrix copy.
  RowMatrix<double> dense_weight(std::size_t d) const {
    const auto& p = params_[dense_idx_.at(d).weight];
    RowMatrix<double> w(p.shape[0], p.shape[1]);
    for (std::size_t i = 0; i < p.data.size(); ++i) w.data()[i] = static_cast<double>(p.data[i]);
    return w;
  }

  /// images: [B, C, H, W] with values in [0, 1].
  ForwardResult<T> forward(const Tensor<float>& images, bool want_cache) const {
    if (images.rank() != 4 || images.dim(1) != arch_.in_channels ||
        images.dim(2) != arch_.in_height || images.dim(3) != arch_.in_width) {
      throw ShapeError("forward: expected images [B," + std::to_string(arch_.in_channels) + "," +
                       std::to_string(arch_.in_height) + "," + std::to_string(arch_.in_width) +
                       "], got " + shape_string(images.shape()));
    }
    const std::size_t batch = images.dim(0);
    if (batch == 0) throw ShapeError("forward: empty batch");

    ForwardCache<T> cache;
    cache.arch = arch_;
    cache.batch = batch;

    const auto shapes = arch_.conv_shapes();
    std::size_t channels = arch_.in_channels;
    std::size_t height = arch_.in_height, width = arch_.in_width;
    RowMatrix<T> x(channels, batch * height * width);
    {
      const std::size_t p = height * width;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < p; ++i) {
            x(c, b * p + i) = static_cast<T>(images[(b * channels + c) * p + i]);
          }
        }
      }
    }

    for (std::size_t l = 0; l < arch_.conv.size(); ++l) {
      const auto& sh = shapes[l];
      const ConvGeometry& g = arch_.conv[l].geometry;
      typename ForwardCache<T>::Conv rec;
      rec.col = im2col(x, batch, sh, g);
      const std::size_t k_len = std::size_t{sh.in_channels} * g.kernel * g.kernel;
      const auto& kp = params_[conv_idx_[l].kernel].data;
      const auto& bp = params_[conv_idx_[l].bias].data;
      Eigen::Map<const RowMatrix<T>> w(kp.data(), sh.out_channels, k_len);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(bp.data(), sh.out_channels);
      const std::size_t p_out = std::size_t{sh.out_height} * sh.out_width;
      RowMatrix<T> z = per_sample_product(w, rec.col, batch, p_out);
      z.colwise() += bias;
      if (arch_.conv[l].instance_norm) {
        normalize_segments(z, batch, p_out, params_[conv_idx_[l].scale].data,
                           params_[conv_idx_[l].shift].data, rec.xhat, rec.inv_std);
      }
      rec.act = z.cwiseMax(T(0));
      check_finite(rec.act, "conv layer " + std::to_string(l));
      x = rec.act;
      cache.conv.push_back(std::move(rec));
      channels = sh.out_channels;
      height = sh.out_height;
      width = sh.out_width;
    }

    // [C, P] per sample -> column of length C * P
    const std::size_t p_last = height * width;
    cache.flat.resize(channels * p_last, batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < p_last; ++i) cache.flat(c * p_last + i, b) = x(c, b * p_last + i);
      }
    }

    RowMatrix<T> h = cache.flat;
    for (std::size_t d = 0; d < arch_.dense.size(); ++d) {
      const DenseIndex& di = dense_idx_[d];
      const auto& wp = params_[di.weight];
      Eigen::Map<const RowMatrix<T>> w(wp.data.data(), wp.shape[0], wp.shape[1]);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(params_[di.bias].data.data(),
                                                                 wp.shape[0]);
      RowMatrix<T> z = per_sample_product(w, h, batch, 1);
      z.colwise() += bias;
      typename ForwardCache<T>::Dense rec;
      layer_norm(z, params_[di.scale].data, params_[di.shift].data, rec.xhat, rec.inv_std);
      rec.act = z.cwiseMax(T(0));
      check_finite(rec.act, "dense layer " + std::to_string(d));
      h = rec.act;
      cache.dense.push_back(std::move(rec));
    }
    cache.head_input = h;

    const std::size_t a = arch_.action_dim;
    const auto& mw = params_[head_idx_.mean_weight];
    const auto& vw = params_[head_idx_.var_weight];
    Eigen::Map<const RowMatrix<T>> wm(mw.data.data(), a, mw.shape[1]);
    Eigen::Map<const RowMatrix<T>> wv(vw.data.data(), a, vw.shape[1]);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bm(params_[head_idx_.mean_bias].data.data(), a);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(params_[head_idx_.var_bias].data.data(), a);
    RowMatrix<T> mean = per_sample_product(wm, h, batch, 1);
    mean.colwise() += bm;
    RowMatrix<T> raw = per_sample_product(wv, h, batch, 1);
    raw.colwise() += bv;

    ForwardResult<T> result;
    result.gaussians = GaussianBatch(batch, a);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < a; ++j) {
        const double m = static_cast<double>(mean(j, b));
        const double v = variance_from_raw(static_cast<double>(raw(j, b)));
        if (!std::isfinite(m) || !std::isfinite(v)) {
          throw NumericalError("forward: non-finite Gaussian head output");
        }
        result.gaussians.mean[b * a + j] = m;
        result.gaussians.variance[b * a + j] = v;
      }
    }
    cache.raw_variance = std::move(raw);
    if (want_cache) result.cache = std::move(cache);
    return result;
  }

  /// Parameter gradients for head gradients `head` (B x A, as from the loss).
  /// Row b of the head gradient is scaled by weights[b] before accumulation;
  /// an empty span means unit weights.
  ParameterSet<T> backward(const ForwardCache<T>& cache, const HeadGradient& head,
                           std::span<const double> weights = {}) const {
    const std::size_t batch = cache.batch;
    const std::size_t a = arch_.action_dim;
    if (cache.arch != arch_ || cache.conv.size() != arch_.conv.size() ||
        cache.dense.size() != arch_.dense.size()) {
      throw ShapeError("backward: cache does not belong to this network");
    }
    if (head.d_mean.size() != batch * a || head.d_variance.size() != batch * a) {
      throw ShapeError("backward: head gradient size mismatch");
    }
    if (!weights.empty() && weights.size() != batch) {
      throw ShapeError("backward: weight vector length must equal the batch size");
    }
    ParameterSet<T> grads = zeros_like(params_);

    RowMatrix<T> d_mean(a, batch), d_raw(a, batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < a; ++j) {
        double gm = head.d_mean[b * a + j];
        double gv = head.d_variance[b * a + j] * sigmoid(static_cast<double>(cache.raw_variance(j, b)));
        if (!weights.empty()) {
          gm *= weights[b];
          gv *= weights[b];
        }
        d_mean(j, b) = static_cast<T>(gm);
        d_raw(j, b) = static_cast<T>(gv);
      }
    }

    const RowMatrix<T>& h = cache.head_input;
    {
      const auto& mw = params_[head_idx_.mean_weight];
      const auto& vw = params_[head_idx_.var_weight];
      Eigen::Map<RowMatrix<T>>(grads[head_idx_.mean_weight].data.data(), a, mw.shape[1]) =
          d_mean * h.transpose();
      Eigen::Map<RowMatrix<T>>(grads[head_idx_.var_weight].data.data(), a, vw.shape[1]) =
          d_raw * h.transpose();
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads[head_idx_.mean_bias].data.data(), a) =
          d_mean.rowwise().sum();
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads[head_idx_.var_bias].data.data(), a) =
          d_raw.rowwise().sum();
    }
    Eigen::Map<const RowMatrix<T>> wm(params_[head_idx_.mean_weight].data.data(), a, h.rows());
    Eigen::Map<const RowMatrix<T>> wv(params_[head_idx_.var_weight].data.data(), a, h.rows());
    RowMatrix<T> dh = wm.transpose() * d_mean + wv.transpose() * d_raw;

    for (std::size_t d = arch_.dense.size(); d-- > 0;) {
      const DenseIndex& di = dense_idx_[d];
      const auto& rec = cache.dense[d];
      RowMatrix<T> dz = (rec.act.array() > T(0)).select(dh.array(), T(0)).matrix();
      layer_norm_backward(dz, rec.xhat, rec.inv_std, params_[di.scale].data, grads[di.scale].data,
                          grads[di.shift].data);
      const RowMatrix<T>& input = d == 0 ? cache.flat : cache.dense[d - 1].act;
      const auto& wp = params_[di.weight];
      Eigen::Map<RowMatrix<T>>(grads[di.weight].data.data(), wp.shape[0], wp.shape[1]) =
          dz * input.transpose();
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads[di.bias].data.data(), wp.shape[0]) =
          dz.rowwise().sum();
      Eigen::Map<const RowMatrix<T>> w(wp.data.data(), wp.shape[0], wp.shape[1]);
      dh = w.transpose() * dz;
    }

    if (!arch_.conv.empty()) {
      const auto shapes = arch_.conv_shapes();
      const auto& last = shapes.back();
      const std::size_t p_last = std::size_t{last.out_height} * last.out_width;
      RowMatrix<T> dx(last.out_channels, batch * p_last);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < last.out_channels; ++c) {
          for (std::size_t i = 0; i < p_last; ++i) dx(c, b * p_last + i) = dh(c * p_last + i, b);
        }
      }
      for (std::size_t l = arch_.conv.size(); l-- > 0;) {
        const auto& sh = shapes[l];
        const ConvGeometry& g = arch_.conv[l].geometry;
        const ConvIndex& ci = conv_idx_[l];
        const auto& rec = cache.conv[l];
        const std::size_t p_out = std::size_t{sh.out_height} * sh.out_width;
        RowMatrix<T> dz = (rec.act.array() > T(0)).select(dx.array(), T(0)).matrix();
        if (arch_.conv[l].instance_norm) {
          segments_backward(dz, batch, p_out, rec.xhat, rec.inv_std, params_[ci.scale].data,
                            grads[ci.scale].data, grads[ci.shift].data);
        }
        const std::size_t k_len = std::size_t{sh.in_channels} * g.kernel * g.kernel;
        Eigen::Map<RowMatrix<T>>(grads[ci.kernel].data.data(), sh.out_channels, k_len) =
            dz * rec.col.transpose();
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads[ci.bias].data.data(), sh.out_channels) =
            dz.rowwise().sum();
        if (l > 0) {
          Eigen::Map<const RowMatrix<T>> w(params_[ci.kernel].data.data(), sh.out_channels, k_len);
          const RowMatrix<T> dcol = w.transpose() * dz;
          dx = col2im(dcol, batch, sh, g);
        }
      }
    }

    for (const auto& g : grads) {
      for (const T& v : g.data) {
        if (!std::isfinite(v)) throw NumericalError("backward: non-finite gradient in " + g.name);
      }
    }
    return grads;
  }

 private:
  using Shape = Architecture::ConvShape;

  static void check_finite(const RowMatrix<T>& m, const std::string& where) {
    if (!m.allFinite()) throw NumericalError("forward: non-finite activation in " + where);
  }

  // w * x evaluated one sample (p columns) at a time, so a sample's result
  // does not depend on where it sits in the batch.
  template <class W>
  static RowMatrix<T> per_sample_product(const W& w, const RowMatrix<T>& x, std::size_t batch,
                                         std::size_t p) {
    RowMatrix<T> out(w.rows(), x.cols());
    for (std::size_t b = 0; b < batch; ++b) {
      const auto c0 = static_cast<Eigen::Index>(b * p), n = static_cast<Eigen::Index>(p);
      out.middleCols(c0, n).noalias() = w * x.middleCols(c0, n);
    }
    return out;
  }

  static RowMatrix<T> im2col(const RowMatrix<T>& x, std::size_t batch, const Shape& sh,
                             const ConvGeometry& g) {
    const std::size_t k = g.kernel, s = g.stride;
    const std::ptrdiff_t pad = g.padding;
    const std::size_t p_in = std::size_t{sh.in_height} * sh.in_width;
    const std::size_t p_out = std::size_t{sh.out_height} * sh.out_width;
    RowMatrix<T> col = RowMatrix<T>::Zero(sh.in_channels * k * k, batch * p_out);
    for (std::size_t c = 0; c < sh.in_channels; ++c) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t row = (c * k + ky) * k + kx;
          T* dst = col.row(row).data();
          const T* src = x.row(c).data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t oy = 0; oy < sh.out_height; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(sh.in_height)) continue;
              for (std::size_t ox = 0; ox < sh.out_width; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(sh.in_width)) continue;
                dst[b * p_out + oy * sh.out_width + ox] = src[b * p_in + iy * sh.in_width + ix];
              }
            }
          }
        }
      }
    }
    return col;
  }

  static RowMatrix<T> col2im(const RowMatrix<T>& dcol, std::size_t batch, const Shape& sh,
                             const ConvGeometry& g) {
    const std::size_t k = g.kernel, s = g.stride;
    const std::ptrdiff_t pad = g.padding;
    const std::size_t p_in = std::size_t{sh.in_height} * sh.in_width;
    const std::size_t p_out = std::size_t{sh.out_height} * sh.out_width;
    RowMatrix<T> dx = RowMatrix<T>::Zero(sh.in_channels, batch * p_in);
    for (std::size_t c = 0; c < sh.in_channels; ++c) {
      T* dst = dx.row(c).data();
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T* src = dcol.row((c * k + ky) * k + kx).data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t oy = 0; oy < sh.out_height; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(sh.in_height)) continue;
              for (std::size_t ox = 0; ox < sh.out_width; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(sh.in_width)) continue;
                dst[b * p_in + iy * sh.in_width + ix] += src[b * p_out + oy * sh.out_width + ox];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  // Instance norm: each (channel, sample) segment of p contiguous values.
  static void normalize_segments(RowMatrix<T>& z, std::size_t batch, std::size_t p,
                                 const std::vector<T>& scale, const std::vector<T>& shift,
                                 RowMatrix<T>& xhat, RowMatrix<T>& inv_std) {
    xhat.resize(z.rows(), z.cols());
    inv_std.resize(z.rows(), batch);
    for (Eigen::Index c = 0; c < z.rows(); ++c) {
      for (std::size_t b = 0; b < batch; ++b) {
        T* seg = z.row(c).data() + b * p;
        T* out = xhat.row(c).data() + b * p;
        double mean = 0.0;
        for (std::size_t i = 0; i < p; ++i) mean += seg[i];
        mean /= static_cast<double>(p);
        double var = 0.0;
        for (std::size_t i = 0; i < p; ++i) var += (seg[i] - mean) * (seg[i] - mean);
        var /= static_cast<double>(p);
        const T is = static_cast<T>(1.0 / std::sqrt(var + kNormEpsilon));
        inv_std(c, b) = is;
        for (std::size_t i = 0; i < p; ++i) {
          out[i] = static_cast<T>(seg[i] - mean) * is;
          seg[i] = scale[c] * out[i] + shift[c];
        }
      }
    }
  }

  static void segments_backward(RowMatrix<T>& dz, std::size_t batch, std::size_t p,
                                const RowMatrix<T>& xhat, const RowMatrix<T>& inv_std,
                                const std::vector<T>& scale, std::vector<T>& d_scale,
                                std::vector<T>& d_shift) {
    const T inv_p = T(1) / static_cast<T>(p);
    for (Eigen::Index c = 0; c < dz.rows(); ++c) {
      T gs = 0, gb = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        T* dy = dz.row(c).data() + b * p;
        const T* xh = xhat.row(c).data() + b * p;
        T m1 = 0, m2 = 0;
        for (std::size_t i = 0; i < p; ++i) {
          gs += dy[i] * xh[i];
          gb += dy[i];
          const T dxh = dy[i] * scale[c];
          m1 += dxh;
          m2 += dxh * xh[i];
        }
        m1 *= inv_p;
        m2 *= inv_p;
        const T is = inv_std(c, b);
        for (std::size_t i = 0; i < p; ++i) dy[i] = is * (dy[i] * scale[c] - m1 - xh[i] * m2);
      }
      d_scale[c] = gs;
      d_shift[c] = gb;
    }
  }

  // Layer norm over the rows of each column (one column per sample).
  static void layer_norm(RowMatrix<T>& z, const std::vector<T>& scale, const std::vector<T>& shift,
                         RowMatrix<T>& xhat, RowMatrix<T>& inv_std) {
    const Eigen::Index n = z.rows();
    xhat.resize(n, z.cols());
    inv_std.resize(1, z.cols());
    for (Eigen::Index b = 0; b < z.cols(); ++b) {
      double mean = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) mean += z(j, b);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) var += (z(j, b) - mean) * (z(j, b) - mean);
      var /= static_cast<double>(n);
      const T is = static_cast<T>(1.0 / std::sqrt(var + kNormEpsilon));
      inv_std(0, b) = is;
      for (Eigen::Index j = 0; j < n; ++j) {
        xhat(j, b) = static_cast<T>(z(j, b) - mean) * is;
        z(j, b) = scale[j] * xhat(j, b) + shift[j];
      }
    }
  }

  static void layer_norm_backward(RowMatrix<T>& dz, const RowMatrix<T>& xhat,
                                  const RowMatrix<T>& inv_std, const std::vector<T>& scale,
                                  std::vector<T>& d_scale, std::vector<T>& d_shift) {
    const Eigen::Index n = dz.rows();
    const T inv_n = T(1) / static_cast<T>(n);
    for (Eigen::Index b = 0; b < dz.cols(); ++b) {
      T m1 = 0, m2 = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        d_scale[j] += dz(j, b) * xhat(j, b);
        d_shift[j] += dz(j, b);
        const T dxh = dz(j, b) * scale[j];
        m1 += dxh;
        m2 += dxh * xhat(j, b);
      }
      m1 *= inv_n;
      m2 *= inv_n;
      for (Eigen::Index j = 0; j < n; ++j) {
        dz(j, b) = inv_std(0, b) * (dz(j, b) * scale[j] - m1 - xhat(j, b) * m2);
      }
    }
  }

  Architecture arch_;
  ParameterSet<T> params_;
  std::vector<ConvIndex> conv_idx_;
  std::vector<DenseIndex> dense_idx_;
  HeadIndex head_idx_{};
};

/// Gathers the frames at `indices` of a packed [N, C, H, W] image store into a batch.
inline Tensor<float> make_batch(std::span<const float> images, std::size_t c, std::size_t h,
                                std::size_t w, std::span<const std::size_t> indices) {
  const std::size_t frame = c * h * w;
  Tensor<float> batch({indices.size(), c, h, w});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images.begin() + indices[i] * frame, frame, batch.data() + i * frame);
  }
  return batch;
}

}  // namespace tsbc
