// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// VisualBackProp attention maps.
//
// Original: m_L = mean_c(x_L); m_{l-1} = deconv1(m_l) * mean_c(x_{l-1});
// one last all-ones deconvolution to the input size, then min-max to [0, 1].
//
// Modified: optionally every channel-mean map and dense activation is
// min-max scaled to [0, 1] before it enters an element product (the seed and
// deconvolved masks are divided by their max so they stay in [0, 1]), and
// optionally the seed is built by pushing the last dense activation back
// through binary top-k connection matrices. A last conv layer with a 1x1
// output is a dense layer over its flattened input, so the push continues
// through it and the seed lands on x_{L-1} with its spatial layout.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "tsbc/error.hpp"
#include "tsbc/nn/architecture.hpp"
#include "tsbc/nn/network.hpp"
#include "tsbc/nn/tensor.hpp"

namespace tsbc {

/// H x W mask in [0, 1] at input resolution.
using AttentionMap = Tensor<double>;

struct VbpConfig {
  bool normalize_features = false;
  bool include_fcn = false;
  double top_fraction = 0.10;

  void validate() const {
    if (!(top_fraction > 0.0) || top_fraction > 1.0) {
      throw ConfigError("vbp: top_fraction must lie in (0, 1]");
    }
  }
};

/// Everything VisualBackProp reads for one sample.
struct VbpInputs {
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::vector<ConvGeometry> geometry;          ///< one per conv layer
  std::vector<Tensor<double>> conv;            ///< x_1 .. x_L, each [C, H, W]
  std::vector<std::vector<double>> dense;      ///< dense hidden activations
  std::vector<RowMatrix<double>> dense_weight; ///< out x in, empty unless needed
  RowMatrix<double> last_conv_weight;          ///< C_L x (C_{L-1} H W) if x_L is 1x1
};

/// Dense matrix equal to conv layer l when its output is 1x1.
template <class T>
RowMatrix<double> conv_as_dense(const PolicyNetwork<T>& net, std::size_t l) {
  const auto shapes = net.architecture().conv_shapes();
  const auto& cs = shapes.at(l);
  if (cs.out_height != 1 || cs.out_width != 1) throw ShapeError("conv_as_dense: output is not 1x1");
  const auto& p = net.parameters()[net.conv_index()[l].kernel];
  const std::size_t k = p.shape[2], pad = net.architecture().conv[l].geometry.padding;
  const std::size_t hw = std::size_t{cs.in_height} * cs.in_width;
  RowMatrix<double> w = RowMatrix<double>::Zero(cs.out_channels, std::size_t{cs.in_channels} * hw);
  for (std::size_t o = 0; o < cs.out_channels; ++o) {
    for (std::size_t c = 0; c < cs.in_channels; ++c) {
      for (std::size_t y = 0; y < cs.in_height; ++y) {
        for (std::size_t x = 0; x < cs.in_width; ++x) {
          if (y + pad >= k || x + pad >= k) continue;
          w(o, c * hw + y * cs.in_width + x) =
              static_cast<double>(p.data[((o * cs.in_channels + c) * k + y + pad) * k + x + pad]);
        }
      }
    }
  }
  return w;
}

template <class T>
VbpInputs vbp_inputs(const ForwardCache<T>& cache, std::size_t sample,
                     const PolicyNetwork<T>* net = nullptr) {
  if (sample >= cache.batch) throw ShapeError("vbp: sample index out of range");
  if (cache.conv.size() != cache.arch.conv.size() || cache.conv.empty()) {
    throw ShapeError("vbp: cache is missing conv features");
  }
  VbpInputs in;
  in.in_height = cache.arch.in_height;
  in.in_width = cache.arch.in_width;
  for (std::size_t l = 0; l < cache.conv.size(); ++l) {
    in.geometry.push_back(cache.arch.conv[l].geometry);
    in.conv.push_back(cache.conv_feature(l, sample));
  }
  for (std::size_t d = 0; d < cache.dense.size(); ++d) {
    in.dense.push_back(cache.dense_feature(d, sample));
  }
  if (net != nullptr) {
    if (!(net->architecture() == cache.arch)) {
      throw ShapeError("vbp: network does not match the cache");
    }
    for (std::size_t d = 0; d < cache.arch.dense.size(); ++d) {
      in.dense_weight.push_back(net->dense_weight(d));
    }
    const Tensor<double>& last = in.conv.back();
    if (in.conv.size() >= 2 && last.dim(1) == 1 && last.dim(2) == 1) {
      in.last_conv_weight = conv_as_dense(*net, in.conv.size() - 1);
    }
  }
  return in;
}

/// [C, H, W] -> [H, W] arithmetic mean over channels.
inline Tensor<double> channel_mean(const Tensor<double>& feature) {
  if (feature.rank() != 3 || feature.dim(0) == 0) {
    throw ShapeError("channel_mean: expected [C, H, W] with C >= 1");
  }
  const std::size_t c = feature.dim(0), p = feature.dim(1) * feature.dim(2);
  Tensor<double> out({feature.dim(1), feature.dim(2)});
  for (std::size_t i = 0; i < p; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += feature[k * p + i];
    out[i] = s / static_cast<double>(c);
  }
  return out;
}

/// Transposed single-channel convolution with an all-ones kernel and zero
/// bias, producing the target_h x target_w map the forward layer consumed.
inline Tensor<double> deconv_ones(const Tensor<double>& mask, const ConvGeometry& g,
                                  std::size_t target_h, std::size_t target_w) {
  if (mask.rank() != 2) throw ShapeError("deconv_ones: expected an [H, W] mask");
  if (g.output_size(static_cast<std::uint32_t>(target_h)) != mask.dim(0) ||
      g.output_size(static_cast<std::uint32_t>(target_w)) != mask.dim(1)) {
    throw ShapeError("deconv_ones: mask " + shape_string(mask.shape()) +
                     " is not the forward output of " + std::to_string(target_h) + "x" +
                     std::to_string(target_w) + " under this geometry");
  }
  Tensor<double> out({target_h, target_w});
  const auto th = static_cast<std::ptrdiff_t>(target_h), tw = static_cast<std::ptrdiff_t>(target_w);
  for (std::size_t oy = 0; oy < mask.dim(0); ++oy) {
    for (std::size_t ox = 0; ox < mask.dim(1); ++ox) {
      const double v = mask.at(oy, ox);
      for (std::uint32_t ky = 0; ky < g.kernel; ++ky) {
        const std::ptrdiff_t iy =
            static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
        if (iy < 0 || iy >= th) continue;
        for (std::uint32_t kx = 0; kx < g.kernel; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ix < 0 || ix >= tw) continue;
          out.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) += v;
        }
      }
    }
  }
  return out;
}

/// Min-max to [0, 1]; a constant input maps to all zeros.
inline void min_max_normalize(std::span<double> v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  const double inv = 1.0 / (mx - mn);
  for (double& x : v) x = (x - mn) * inv;
}

namespace detail {

// Divide a non-negative vector by its max; an all-zero vector stays zero.
inline void max_scale(std::span<double> v) {
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, x);
  if (!(mx > 0.0)) return;
  for (double& x : v) x /= mx;
}

}  // namespace detail

/// Binary out x in matrix with ones at the ceil(fraction * out * in) entries of
/// largest |w|; ties go to the lower row-major index.
inline RowMatrix<double> sparse_connection_matrix(const RowMatrix<double>& weight,
                                                  double top_fraction) {
  if (weight.size() == 0) throw ShapeError("sparse_connection_matrix: empty matrix");
  if (!(top_fraction > 0.0) || top_fraction > 1.0) {
    throw ConfigError("sparse_connection_matrix: top_fraction must lie in (0, 1]");
  }
  const std::size_t n = static_cast<std::size_t>(weight.size());
  const double target = top_fraction * static_cast<double>(n);
  // Guard against 0.1 * 40 evaluating to 4.000000000000001.
  std::size_t k = static_cast<std::size_t>(std::ceil(target - 1e-9 * std::max(1.0, target)));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double* w = weight.data();
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [w](std::size_t a, std::size_t b) {
                      const double fa = std::abs(w[a]), fb = std::abs(w[b]);
                      return fa != fb ? fa > fb : a < b;
                    });
  RowMatrix<double> s = RowMatrix<double>::Zero(weight.rows(), weight.cols());
  for (std::size_t i = 0; i < k; ++i) s.data()[order[i]] = 1.0;
  return s;
}

/// The final map plus every intermediate mask, deepest first.
struct VbpTrace {
  std::vector<double> fcn_weights;          ///< per last-conv element, empty without FCN
  std::vector<Tensor<double>> masks;        ///< m_L, ..., m_1
  std::vector<Tensor<double>> deconvolved;  ///< deconv(m_L), ..., deconv(m_1)
  AttentionMap map;
};

inline VbpTrace vbp_trace(const VbpInputs& in, const VbpConfig& cfg) {
  cfg.validate();
  const std::size_t n_conv = in.conv.size();
  if (n_conv == 0 || in.geometry.size() != n_conv) throw ShapeError("vbp: missing conv features");
  for (const auto& x : in.conv) {
    if (x.rank() != 3) throw ShapeError("vbp: conv features must be [C, H, W]");
  }

  const bool norm = cfg.normalize_features;
  auto mean_map = [&](const Tensor<double>& x) {
    Tensor<double> avg = channel_mean(x);
    if (norm) min_max_normalize(avg.values());
    return avg;
  };

  VbpTrace trace;
  const Tensor<double>& last = in.conv.back();
  Tensor<double> m;
  Tensor<double> spatial_seed;  // m_{L-1} from the dense push, if it reaches x_{L-1}
  if (cfg.include_fcn) {
    if (in.dense.empty()) throw ConfigError("vbp: include_fcn needs at least one dense layer");
    if (in.dense_weight.size() != in.dense.size()) {
      throw ConfigError("vbp: include_fcn needs the dense weight matrices");
    }
    auto push = [&](std::vector<double>& v, const RowMatrix<double>& w) {
      const RowMatrix<double> s = sparse_connection_matrix(w, cfg.top_fraction);
      if (static_cast<std::size_t>(s.rows()) != v.size()) throw ShapeError("vbp: dense width mismatch");
      Eigen::VectorXd u = s.transpose() * Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
      v.assign(u.data(), u.data() + u.size());
      if (norm) detail::max_scale(v);
    };
    auto gate = [&](std::vector<double>& v, std::vector<double> act) {
      if (act.size() != v.size()) throw ShapeError("vbp: dense width mismatch");
      if (norm) min_max_normalize(act);
      for (std::size_t j = 0; j < v.size(); ++j) v[j] *= act[j];
    };
    std::vector<double> v = in.dense.back();
    if (norm) min_max_normalize(v);
    for (std::size_t d = in.dense.size(); d-- > 0;) {
      push(v, in.dense_weight[d]);
      if (d > 0) gate(v, in.dense[d - 1]);
    }
    if (v.size() != last.size()) {
      throw ShapeError("vbp: dense input does not match the last conv feature");
    }
    // Weighted channel mean, weight per (channel, pixel).
    const std::size_t c = last.dim(0), p = last.dim(1) * last.dim(2);
    m = Tensor<double>({last.dim(1), last.dim(2)});
    for (std::size_t i = 0; i < p; ++i) {
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        num += v[k * p + i] * last[k * p + i];
        den += v[k * p + i];
      }
      m[i] = den > 0.0 ? num / den : 0.0;
    }
    trace.fcn_weights = v;
    if (in.last_conv_weight.size() > 0) {
      const Tensor<double>& prev = in.conv[n_conv - 2];
      if (static_cast<std::size_t>(in.last_conv_weight.cols()) != prev.size()) {
        throw ShapeError("vbp: last conv weight does not match x_{L-1}");
      }
      gate(v, std::vector<double>(last.values().begin(), last.values().end()));
      push(v, in.last_conv_weight);
      gate(v, std::vector<double>(prev.values().begin(), prev.values().end()));
      spatial_seed = channel_mean(Tensor<double>(prev.shape(), std::move(v)));
      if (norm) detail::max_scale(spatial_seed.values());
    }
  } else {
    m = channel_mean(last);
  }
  if (norm) detail::max_scale(m.values());
  trace.masks.push_back(m);

  for (std::size_t l = n_conv; l-- > 0;) {
    const std::size_t th = l > 0 ? in.conv[l - 1].dim(1) : in.in_height;
    const std::size_t tw = l > 0 ? in.conv[l - 1].dim(2) : in.in_width;
    Tensor<double> up = deconv_ones(m, in.geometry[l], th, tw);
    if (norm && l > 0) detail::max_scale(up.values());
    trace.deconvolved.push_back(up);
    if (l == 0) {
      m = std::move(up);
      break;
    }
    if (l == n_conv - 1 && !spatial_seed.empty()) {
      up = spatial_seed;
    } else {
      const Tensor<double> avg = mean_map(in.conv[l - 1]);
      for (std::size_t i = 0; i < up.size(); ++i) up[i] *= avg[i];
    }
    m = std::move(up);
    trace.masks.push_back(m);
  }
  min_max_normalize(m.values());
  trace.map = std::move(m);
  return trace;
}

template <class T>
AttentionMap vbp_original(const ForwardCache<T>& cache, std::size_t sample = 0) {
  return vbp_trace(vbp_inputs(cache, sample), VbpConfig{}).map;
}

template <class T>
AttentionMap vbp_modified(const ForwardCache<T>& cache, const PolicyNetwork<T>& net,
                          const VbpConfig& cfg, std::size_t sample = 0) {
  return vbp_trace(vbp_inputs(cache, sample, cfg.include_fcn ? &net : nullptr), cfg).map;
}

}  // namespace tsbc
