#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "preblock/error.hpp"

// Inference primitives in single precision. Summation order is fixed so a
// given build produces bit-identical results run to run.
namespace preblock::layers {

/// Channels x rows x cols, row-major.
struct Activation {
  std::size_t channels = 0, rows = 0, cols = 0;
  std::vector<float> data;

  Activation() = default;
  Activation(std::size_t c, std::size_t r, std::size_t w)
      : channels(c), rows(r), cols(w), data(c * r * w, 0.0f) {}

  std::size_t plane() const { return rows * cols; }
  float *channel(std::size_t c) { return data.data() + c * plane(); }
  const float *channel(std::size_t c) const { return data.data() + c * plane(); }
  float &at(std::size_t c, std::size_t r, std::size_t w) {
    return data[(c * rows + r) * cols + w];
  }
  float at(std::size_t c, std::size_t r, std::size_t w) const {
    return data[(c * rows + r) * cols + w];
  }
};

/// 3x3 convolution, stride 1, zero padding 1 (cross-correlation, PyTorch
/// layout weight[out][in][ky][kx]).
///
/// Lowered to im2col: row k = (in, ky, kx) of the column matrix holds the
/// shifted input plane. Every output plane starts at its bias and adds the
/// rows in ascending k, so each output value is summed in (in, ky, kx) order
/// regardless of how the loops are blocked.
inline Activation conv3x3(const Activation &in, std::span<const float> weight,
                          std::span<const float> bias) {
  const std::size_t c_out = bias.size();
  const std::size_t k_rows = in.channels * 9;
  if (weight.size() != c_out * k_rows)
    throw ContractError("conv3x3: weight shape does not match input channels");
  const std::size_t h = in.rows, w = in.cols, plane = h * w;

  std::vector<float> cols(k_rows * plane, 0.0f);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        float *row = cols.data() + ((c * 3 + ky) * 3 + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h))
            continue;
          const float *src = in.channel(c) + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w))
              row[y * w + x] = src[sx];
          }
        }
      }

  Activation out(c_out, h, w);
  constexpr std::size_t kBlock = 4;
  std::size_t o = 0;
  for (; o + kBlock <= c_out; o += kBlock) {
    float *d0 = out.channel(o), *d1 = out.channel(o + 1),
          *d2 = out.channel(o + 2), *d3 = out.channel(o + 3);
    std::fill_n(d0, plane, bias[o]);
    std::fill_n(d1, plane, bias[o + 1]);
    std::fill_n(d2, plane, bias[o + 2]);
    std::fill_n(d3, plane, bias[o + 3]);
    const float *w0 = weight.data() + o * k_rows, *w1 = w0 + k_rows,
                *w2 = w1 + k_rows, *w3 = w2 + k_rows;
    for (std::size_t k = 0; k < k_rows; ++k) {
      const float *src = cols.data() + k * plane;
      const float a0 = w0[k], a1 = w1[k], a2 = w2[k], a3 = w3[k];
      for (std::size_t p = 0; p < plane; ++p) {
        const float v = src[p];
        d0[p] += a0 * v;
        d1[p] += a1 * v;
        d2[p] += a2 * v;
        d3[p] += a3 * v;
      }
    }
  }
  for (; o < c_out; ++o) {
    float *d = out.channel(o);
    std::fill_n(d, plane, bias[o]);
    const float *wr = weight.data() + o * k_rows;
    for (std::size_t k = 0; k < k_rows; ++k) {
      const float *src = cols.data() + k * plane;
      const float a = wr[k];
      for (std::size_t p = 0; p < plane; ++p)
        d[p] += a * src[p];
    }
  }
  return out;
}

inline constexpr float kBatchNormEps = 1e-5f;

/// Inference batch norm, y = gamma (x - mean) / sqrt(var + eps) + beta,
/// evaluated as scale * (x - mean) + beta with scale rounded to float.
inline void batch_norm(Activation &x, std::span<const float> gamma,
                       std::span<const float> beta, std::span<const float> mean,
                       std::span<const float> var, float eps = kBatchNormEps) {
  if (gamma.size() != x.channels || beta.size() != x.channels ||
      mean.size() != x.channels || var.size() != x.channels)
    throw ContractError("batch_norm: parameter length != channels");
  for (std::size_t c = 0; c < x.channels; ++c) {
    const auto scale = static_cast<float>(
        static_cast<double>(gamma[c]) /
        std::sqrt(static_cast<double>(var[c]) + static_cast<double>(eps)));
    float *p = x.channel(c);
    for (std::size_t i = 0; i < x.plane(); ++i)
      p[i] = scale * (p[i] - mean[c]) + beta[c];
  }
}

inline void relu(std::span<float> x) {
  for (float &v : x)
    v = std::max(v, 0.0f);
}

/// 2x2 max pool, stride 2, floor: odd trailing rows/cols are dropped.
inline Activation max_pool2x2(const Activation &in) {
  Activation out(in.channels, in.rows / 2, in.cols / 2);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t y = 0; y < out.rows; ++y)
      for (std::size_t x = 0; x < out.cols; ++x)
        out.at(c, y, x) = std::max(
            std::max(in.at(c, 2 * y, 2 * x), in.at(c, 2 * y, 2 * x + 1)),
            std::max(in.at(c, 2 * y + 1, 2 * x), in.at(c, 2 * y + 1, 2 * x + 1)));
  return out;
}

/// Per-channel mean, accumulated in double.
inline std::vector<float> global_avg_pool(const Activation &in) {
  std::vector<float> out(in.channels);
  for (std::size_t c = 0; c < in.channels; ++c) {
    double sum = 0.0;
    const float *p = in.channel(c);
    for (std::size_t i = 0; i < in.plane(); ++i)
      sum += p[i];
    out[c] = static_cast<float>(sum / static_cast<double>(in.plane()));
  }
  return out;
}

/// y = W x + b with W row-major [out][in]; each dot product accumulated in
/// double from the bias.
inline std::vector<float> affine(std::span<const float> x,
                                 std::span<const float> weight,
                                 std::span<const float> bias) {
  const std::size_t n_out = bias.size();
  if (weight.size() != n_out * x.size())
    throw ContractError("affine: weight shape does not match input");
  std::vector<float> y(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = bias[o];
    const float *row = weight.data() + o * x.size();
    for (std::size_t i = 0; i < x.size(); ++i)
      acc += static_cast<double>(row[i]) * static_cast<double>(x[i]);
    y[o] = static_cast<float>(acc);
  }
  return y;
}

} // namespace preblock::layers
