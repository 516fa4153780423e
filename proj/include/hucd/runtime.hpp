#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hucd/constants.hpp"
#include "hucd/error.hpp"
#include "hucd/model.hpp"
#include "hucd/numerics.hpp"
#include "hucd/tensor.hpp"

namespace hucd {

enum class MaskingMode { LayerMasking, InpaintOriginalScale, CropAndRescale };

inline const char* to_string(MaskingMode m) {
  switch (m) {
    case MaskingMode::LayerMasking: return "layer_masking";
    case MaskingMode::InpaintOriginalScale: return "inpaint_original_scale";
    case MaskingMode::CropAndRescale: return "crop_and_rescale";
  }
  return "unknown";
}

inline MaskingMode parse_masking_mode(const std::string& s) {
  if (s == "layer_masking") return MaskingMode::LayerMasking;
  if (s == "inpaint_original_scale") return MaskingMode::InpaintOriginalScale;
  if (s == "crop_and_rescale") return MaskingMode::CropAndRescale;
  throw ArgumentError(detail::cat("unknown masking mode '", s, "'"));
}

struct ForwardResult {
  Vector phi;      // post-pool features, length D
  Vector logits;   // length K
  Mask valid;      // valid positions entering the global pool (layer masking only)
};

struct MaskingOptions {
  MaskingMode mode = MaskingMode::LayerMasking;
  double shrink_area_frac = defaults::kShrinkAreaFrac;
  std::vector<double> fill_color;  // empty: use the model's mean_color (or zeros)
};

// ---------------------------------------------------------------------------
// Mask geometry
// ---------------------------------------------------------------------------

/// Output position is valid iff its receptive window holds at least one valid
/// in-bounds input position (max-pooling of the mask with the layer geometry).
inline Mask propagate_mask(const Mask& in, int kernel_h, int kernel_w, int stride, int padding) {
  if (kernel_h < 1 || kernel_w < 1 || stride < 1 || padding < 0)
    throw ArgumentError("propagate_mask: invalid geometry");
  const int oh = pooled_extent(in.h(), kernel_h, stride, padding);
  const int ow = pooled_extent(in.w(), kernel_w, stride, padding);
  if (oh < 1 || ow < 1) throw ArgumentError("propagate_mask: kernel larger than padded input");
  Mask out(oh, ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      bool any = false;
      for (int a = 0; a < kernel_h && !any; ++a) {
        const int iy = oy * stride - padding + a;
        if (iy < 0 || iy >= in.h()) continue;
        for (int b = 0; b < kernel_w; ++b) {
          const int ix = ox * stride - padding + b;
          if (ix >= 0 && ix < in.w() && in.at(iy, ix)) {
            any = true;
            break;
          }
        }
      }
      out.set(oy, ox, any);
    }
  }
  return out;
}

/// Mask carried past the first convolution: an output position is valid iff a
/// valid input lies in the stride×stride cell at its kernel anchor, so every
/// kept value reads only pixels within the kernel radius of the mask.
inline Mask anchor_mask(const Mask& in, const Conv2d& c) {
  const int oh = pooled_extent(in.h(), c.kernel_h, c.stride, c.padding);
  const int ow = pooled_extent(in.w(), c.kernel_w, c.stride, c.padding);
  Mask out(oh, ow);
  const int shift = (c.stride - 1) / 2;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int y0 = oy * c.stride - c.padding + (c.kernel_h - 1) / 2 - shift;
      const int x0 = ox * c.stride - c.padding + (c.kernel_w - 1) / 2 - shift;
      bool any = false;
      for (int a = 0; a < c.stride && !any; ++a)
        for (int b = 0; b < c.stride; ++b) {
          const int iy = y0 + a, ix = x0 + b;
          if (iy >= 0 && iy < in.h() && ix >= 0 && ix < in.w() && in.at(iy, ix)) {
            any = true;
            break;
          }
        }
      out.set(oy, ox, any);
    }
  }
  return out;
}

/// Morphological erosion with a k×k structuring element. Out-of-image positions
/// count as invalid unless `border_valid` is set, in which case the mask only
/// shrinks away from masked pixels.
inline Mask erode_mask(const Mask& in, int k, bool border_valid = false) {
  if (k < 1) throw ArgumentError("erode_mask: k must be >= 1");
  const int lo = (k - 1) / 2;  // offset of the anchor from the window's top-left
  Mask out(in.h(), in.w());
  for (int y = 0; y < in.h(); ++y) {
    for (int x = 0; x < in.w(); ++x) {
      bool all = true;
      for (int a = 0; a < k && all; ++a) {
        const int iy = y - lo + a;
        for (int b = 0; b < k; ++b) {
          const int ix = x - lo + b;
          const bool inside = iy >= 0 && iy < in.h() && ix >= 0 && ix < in.w();
          if (inside ? !in.at(iy, ix) : !border_valid) {
            all = false;
            break;
          }
        }
      }
      out.set(y, x, all);
    }
  }
  return out;
}

/// Fills masked positions near the valid region by iterated 8-neighbour
/// averaging of valid/already-filled positions, ⌈k/2⌉ rounds. Values stored at
/// masked positions of `mt` are never read; unreached positions are zero.
inline Tensor neighborhood_pad(const MaskedTensor& mt, int kernel_size) {
  const Tensor& v = mt.values;
  const Mask& m = mt.mask;
  if (m.h() != v.h() || m.w() != v.w()) throw ArgumentError("neighborhood_pad: mask/value shape mismatch");
  if (kernel_size < 1) throw ArgumentError("neighborhood_pad: kernel size must be >= 1");
  if (m.empty()) throw ContractViolation("neighborhood_pad: fully masked plane");
  const int h = v.h(), w = v.w();
  Tensor out(v.n(), v.c(), h, w);
  std::vector<std::uint8_t> filled(m.bits());
  for (int n = 0; n < v.n(); ++n)
    for (int c = 0; c < v.c(); ++c) {
      auto src = v.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < dst.size(); ++i)
        if (filled[i]) dst[i] = src[i];
    }
  const int rounds = (kernel_size + 1) / 2;
  std::vector<int> frontier;
  for (int r = 0; r < rounds; ++r) {
    frontier.clear();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto i = static_cast<std::size_t>(y) * w + x;
        if (filled[i]) continue;
        bool touch = false;
        for (int dy = -1; dy <= 1 && !touch; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if ((dy || dx) && yy >= 0 && yy < h && xx >= 0 && xx < w && filled[static_cast<std::size_t>(yy) * w + xx]) {
              touch = true;
              break;
            }
          }
        if (touch) frontier.push_back(static_cast<int>(i));
      }
    if (frontier.empty()) break;
    // Jacobi update: every frontier position averages the state of the previous round.
    for (int n = 0; n < v.n(); ++n)
      for (int c = 0; c < v.c(); ++c) {
        auto dst = out.plane(n, c);
        for (int i : frontier) {
          const int y = i / w, x = i % w;
          double sum = 0.0;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if ((dy || dx) && yy >= 0 && yy < h && xx >= 0 && xx < w) {
                const auto j = static_cast<std::size_t>(yy) * w + xx;
                if (filled[j]) {
                  sum += dst[j];
                  ++cnt;
                }
              }
            }
          dst[static_cast<std::size_t>(i)] = sum / cnt;
        }
      }
    for (int i : frontier) filled[static_cast<std::size_t>(i)] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer kernels (single image, n = 1)
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor conv2d(const Conv2d& c, const Tensor& in) {
  const int oh = pooled_extent(in.h(), c.kernel_h, c.stride, c.padding);
  const int ow = pooled_extent(in.w(), c.kernel_w, c.stride, c.padding);
  Tensor out(1, c.out_channels, oh, ow);
  const int kh = c.kernel_h, kw = c.kernel_w, s = c.stride, p = c.padding;
  for (int oc = 0; oc < c.out_channels; ++oc) {
    auto dst = out.plane(0, oc);
    if (c.has_bias) std::fill(dst.begin(), dst.end(), c.bias[static_cast<std::size_t>(oc)]);
    for (int ic = 0; ic < c.in_channels; ++ic) {
      auto src = in.plane(0, ic);
      const double* wk = c.weight.data() + (static_cast<std::size_t>(oc) * c.in_channels + ic) * kh * kw;
      for (int a = 0; a < kh; ++a) {
        for (int b = 0; b < kw; ++b) {
          const double wt = wk[a * kw + b];
          if (wt == 0.0) continue;
          // ox range with 0 <= ox*s - p + b < in.w()
          const int ox_lo = std::max(0, (p - b + s - 1) / s);
          const int hi_num = in.w() - 1 + p - b;
          const int ox_hi = hi_num < 0 ? 0 : std::min(ow, hi_num / s + 1);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s - p + a;
            if (iy < 0 || iy >= in.h()) continue;
            const double* row = src.data() + static_cast<std::size_t>(iy) * in.w();
            double* orow = dst.data() + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wt * row[ox * s - p + b];
          }
        }
      }
    }
  }
  return out;
}

inline void batchnorm_inplace(const BatchNorm& bn, Tensor& t, const Mask* valid) {
  for (int c = 0; c < t.c(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double scale = bn.gamma[ci] / std::sqrt(bn.running_var[ci] + bn.eps);
    const double shift = bn.beta[ci] - bn.running_mean[ci] * scale;
    auto pl = t.plane(0, c);
    for (std::size_t i = 0; i < pl.size(); ++i) {
      if (valid && !(*valid)[i]) continue;
      pl[i] = pl[i] * scale + shift;
    }
  }
}

inline void relu_inplace(Tensor& t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
}

inline Tensor maxpool(const MaxPool& mp, const Tensor& in, const Mask* valid) {
  const int oh = pooled_extent(in.h(), mp.kernel, mp.stride, mp.padding);
  const int ow = pooled_extent(in.w(), mp.kernel, mp.stride, mp.padding);
  Tensor out(1, in.c(), oh, ow);
  for (int c = 0; c < in.c(); ++c) {
    auto src = in.plane(0, c);
    auto dst = out.plane(0, c);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (int a = 0; a < mp.kernel; ++a) {
          const int iy = oy * mp.stride - mp.padding + a;
          if (iy < 0 || iy >= in.h()) continue;
          for (int b = 0; b < mp.kernel; ++b) {
            const int ix = ox * mp.stride - mp.padding + b;
            if (ix < 0 || ix >= in.w()) continue;
            const auto idx = static_cast<std::size_t>(iy) * in.w() + ix;
            if (valid && !(*valid)[idx]) continue;
            best = any ? std::max(best, src[idx]) : src[idx];
            any = true;
          }
        }
        dst[static_cast<std::size_t>(oy) * ow + ox] = any ? best : 0.0;
      }
  }
  return out;
}

inline Vector global_avg_pool(const Tensor& in, const Mask* valid) {
  Vector phi(in.c());
  std::size_t count = 0;
  if (valid) {
    count = valid->count();
  } else {
    count = in.plane_size();
  }
  for (int c = 0; c < in.c(); ++c) {
    auto pl = in.plane(0, c);
    double sum = 0.0;
    for (std::size_t i = 0; i < pl.size(); ++i) {
      if (valid && !(*valid)[i]) continue;
      sum += pl[i];
    }
    phi(c) = count == 0 ? 0.0 : sum / static_cast<double>(count);
  }
  return phi;
}

inline Vector linear(const Linear& l, const Vector& phi) {
  Vector out(l.out_features);
  for (int k = 0; k < l.out_features; ++k) {
    const double* row = l.weight.data() + static_cast<std::size_t>(k) * l.in_features;
    double acc = 0.0;
    for (int d = 0; d < l.in_features; ++d) acc += row[d] * phi(d);
    out(k) = acc + l.bias[static_cast<std::size_t>(k)];
  }
  return out;
}

inline void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline void zero_invalid(Tensor& t, const Mask& valid) {
  for (int c = 0; c < t.c(); ++c) {
    auto pl = t.plane(0, c);
    for (std::size_t i = 0; i < pl.size(); ++i)
      if (!valid[i]) pl[i] = 0.0;
  }
}

// Plain inference over a layer list.
inline Tensor run_plain(const std::vector<Layer>& layers, Tensor x) {
  for (const auto& layer : layers) {
    if (const auto* c = std::get_if<Conv2d>(&layer.op)) {
      x = conv2d(*c, x);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer.op)) {
      batchnorm_inplace(*bn, x, nullptr);
    } else if (layer.is<ReLU>()) {
      relu_inplace(x);
    } else if (const auto* mp = std::get_if<MaxPool>(&layer.op)) {
      x = maxpool(*mp, x, nullptr);
    } else if (const auto* r = std::get_if<ResidualBlock>(&layer.op)) {
      Tensor main = run_plain(r->main, x);
      if (r->projection.empty()) {
        add_inplace(main, x);
      } else {
        add_inplace(main, run_plain(r->projection, x));
      }
      x = std::move(main);
    } else {
      throw ContractViolation("run_plain: pooling/linear layers handled by the caller");
    }
  }
  return x;
}

// Masked inference: values at invalid positions of `mt` are zero on entry and on exit.
inline MaskedTensor run_masked(const std::vector<Layer>& layers, MaskedTensor mt) {
  for (const auto& layer : layers) {
    if (const auto* c = std::get_if<Conv2d>(&layer.op)) {
      Mask out_mask = propagate_mask(mt.mask, c->kernel_h, c->kernel_w, c->stride, c->padding);
      Tensor out;
      if (c->kernel_size() > 1 && !mt.mask.full() && !mt.mask.empty()) {
        out = conv2d(*c, neighborhood_pad(mt, c->kernel_size()));
      } else {
        out = conv2d(*c, mt.values);
      }
      zero_invalid(out, out_mask);
      mt = {std::move(out), std::move(out_mask)};
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer.op)) {
      batchnorm_inplace(*bn, mt.values, &mt.mask);
    } else if (layer.is<ReLU>()) {
      relu_inplace(mt.values);
    } else if (const auto* mp = std::get_if<MaxPool>(&layer.op)) {
      Mask out_mask = propagate_mask(mt.mask, mp->kernel, mp->kernel, mp->stride, mp->padding);
      Tensor out = maxpool(*mp, mt.values, &mt.mask);
      mt = {std::move(out), std::move(out_mask)};
    } else if (const auto* r = std::get_if<ResidualBlock>(&layer.op)) {
      MaskedTensor main = run_masked(r->main, mt);
      MaskedTensor side = r->projection.empty() ? mt : run_masked(r->projection, mt);
      // Invalid positions hold zero in each branch, so the sum keeps a lone valid branch's value.
      add_inplace(main.values, side.values);
      main.mask |= side.mask;
      mt = std::move(main);
    } else {
      throw ContractViolation("run_masked: pooling/linear layers handled by the caller");
    }
  }
  return mt;
}

inline std::vector<Layer> body_slice(const ModelGraph& g, std::size_t begin, std::size_t end) {
  return {g.layers.begin() + static_cast<std::ptrdiff_t>(begin), g.layers.begin() + static_cast<std::ptrdiff_t>(end)};
}

inline void check_image(const ModelGraph& g, const Tensor& image, const char* op) {
  if (image.n() != 1 || image.c() != g.input.c || image.h() != g.input.h || image.w() != g.input.w)
    throw ArgumentError(detail::cat(op, ": image shape ", image.n(), "x", image.c(), "x", image.h(), "x", image.w(),
                                    " does not match model input 1x", g.input.c, "x", g.input.h, "x", g.input.w));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// Standard inference on a single image (n = 1): φ = h(x), logits = W φ + b.
inline ForwardResult forward_image(const ModelGraph& g, const Tensor& image) {
  detail::check_image(g, image, "forward");
  const std::size_t body_end = g.layers.size() - 2;
  Tensor x = detail::run_plain(detail::body_slice(g, 0, body_end), image);
  ForwardResult r;
  r.phi = detail::global_avg_pool(x, nullptr);
  r.logits = detail::linear(g.head(), r.phi);
  r.valid = Mask(x.h(), x.w(), true);
  return r;
}

struct BatchForward {
  Matrix phi;     // N × D
  Matrix logits;  // N × K
};

/// Batched inference; every image is processed independently.
inline BatchForward forward(const ModelGraph& g, const Tensor& batch) {
  if (batch.c() != g.input.c || batch.h() != g.input.h || batch.w() != g.input.w)
    throw ArgumentError("forward: batch shape does not match model input");
  BatchForward out{Matrix(batch.n(), g.feature_dim()), Matrix(batch.n(), g.num_classes)};
  for (int i = 0; i < batch.n(); ++i) {
    auto r = forward_image(g, batch.image(i));
    out.phi.row(i) = r.phi.transpose();
    out.logits.row(i) = r.logits.transpose();
  }
  return out;
}

inline std::vector<double> fill_color_for(const ModelGraph& g, const MaskingOptions& opt) {
  if (!opt.fill_color.empty()) {
    if (opt.fill_color.size() != static_cast<std::size_t>(g.input.c))
      throw ArgumentError("fill_color length differs from input channels");
    return opt.fill_color;
  }
  if (!g.mean_color.empty()) return g.mean_color;
  return std::vector<double>(static_cast<std::size_t>(g.input.c), 0.0);
}

/// Replaces masked pixels with the baseline color.
inline Tensor inpaint_with_color(const Tensor& image, const Mask& keep, const std::vector<double>& color) {
  Tensor out = image;
  for (int c = 0; c < out.c(); ++c) {
    auto pl = out.plane(0, c);
    for (std::size_t i = 0; i < pl.size(); ++i)
      if (!keep[i]) pl[i] = color[static_cast<std::size_t>(c)];
  }
  return out;
}

/// Crops the mask's bounding box (baseline color outside the mask) and rescales
/// it bilinearly back to the image size. An empty mask yields a uniform image.
inline Tensor crop_and_rescale(const Tensor& image, const Mask& keep, const std::vector<double>& color) {
  const int h = image.h(), w = image.w();
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (keep.at(y, x)) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  Tensor out(1, image.c(), h, w);
  if (y1 < 0) {
    for (int c = 0; c < image.c(); ++c) {
      auto pl = out.plane(0, c);
      std::fill(pl.begin(), pl.end(), color[static_cast<std::size_t>(c)]);
    }
    return out;
  }
  const int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
  auto sample = [&](int c, int yy, int xx) {
    const int sy = y0 + yy, sx = x0 + xx;
    return keep.at(sy, sx) ? image.at(0, c, sy, sx) : color[static_cast<std::size_t>(c)];
  };
  const double sy = static_cast<double>(bh) / h, sx = static_cast<double>(bw) / w;
  for (int c = 0; c < image.c(); ++c)
    for (int y = 0; y < h; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(bh - 1));
      const int ya = static_cast<int>(fy);
      const int yb = std::min(ya + 1, bh - 1);
      const double ty = fy - ya;
      for (int x = 0; x < w; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(bw - 1));
        const int xa = static_cast<int>(fx);
        const int xb = std::min(xa + 1, bw - 1);
        const double tx = fx - xa;
        const double top = sample(c, ya, xa) * (1 - tx) + sample(c, ya, xb) * tx;
        const double bot = sample(c, yb, xa) * (1 - tx) + sample(c, yb, xb) * tx;
        out.at(0, c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  return out;
}

/// Layer-masked inference. The first convolution sees the full image; the
/// (possibly eroded) mask is propagated from its output onward. An empty mask
/// gives φ = 0 (no valid position reaches the pool), i.e. logits = bias.
inline ForwardResult layer_masked_forward(const ModelGraph& g, const Tensor& image, const Mask& pixel_mask,
                                          double shrink_area_frac = defaults::kShrinkAreaFrac) {
  detail::check_image(g, image, "masked_forward");
  if (pixel_mask.h() != image.h() || pixel_mask.w() != image.w())
    throw ArgumentError("masked_forward: mask shape does not match image");
  const std::size_t body_end = g.layers.size() - 2;
  const int first = g.first_conv_index();
  ForwardResult r;
  if (pixel_mask.empty()) {
    r.phi = Vector::Zero(g.feature_dim());
    r.logits = detail::linear(g.head(), r.phi);
    return r;
  }

  Mask mask = pixel_mask;
  MaskedTensor mt;
  std::size_t next = 0;
  if (first >= 0) {
    const auto& conv = g.layers[static_cast<std::size_t>(first)].as<Conv2d>();
    if (mask.area_fraction() > shrink_area_frac) {
      Mask eroded = erode_mask(mask, conv.kernel_size(), /*border_valid=*/true);
      if (!eroded.empty()) mask = std::move(eroded);
    }
    // Everything up to and including the first conv runs on the unmasked image.
    Tensor x = image;
    for (std::size_t i = 0; i <= static_cast<std::size_t>(first); ++i) {
      const auto& layer = g.layers[i];
      if (const auto* mp = std::get_if<MaxPool>(&layer.op)) {
        mask = propagate_mask(mask, mp->kernel, mp->kernel, mp->stride, mp->padding);
      } else if (const auto* c = std::get_if<Conv2d>(&layer.op)) {
        mask = anchor_mask(mask, *c);
      } else if (const auto* rb = std::get_if<ResidualBlock>(&layer.op)) {
        MaskedTensor probe{Tensor(1, 1, mask.h(), mask.w()), mask};
        mask = detail::run_masked(rb->main, probe).mask;
      }
      x = detail::run_plain({layer}, std::move(x));
    }
    detail::zero_invalid(x, mask);
    mt = {std::move(x), std::move(mask)};
    next = static_cast<std::size_t>(first) + 1;
  } else {
    Tensor x = image;
    detail::zero_invalid(x, mask);
    mt = {std::move(x), std::move(mask)};
  }
  mt = detail::run_masked(detail::body_slice(g, next, body_end), std::move(mt));
  r.phi = detail::global_avg_pool(mt.values, &mt.mask);
  r.logits = detail::linear(g.head(), r.phi);
  r.valid = std::move(mt.mask);
  return r;
}

/// Inference restricted to the pixels where `pixel_mask` is 1.
inline ForwardResult masked_forward(const ModelGraph& g, const Tensor& image, const Mask& pixel_mask,
                                    const MaskingOptions& opt = {}) {
  detail::check_image(g, image, "masked_forward");
  if (pixel_mask.h() != image.h() || pixel_mask.w() != image.w())
    throw ArgumentError(detail::cat("masked_forward: mask ", pixel_mask.h(), "x", pixel_mask.w(),
                                    " does not match image ", image.h(), "x", image.w()));
  if (pixel_mask.empty()) throw ArgumentError("masked_forward: mask has no unmasked pixel");
  switch (opt.mode) {
    case MaskingMode::LayerMasking:
      return layer_masked_forward(g, image, pixel_mask, opt.shrink_area_frac);
    case MaskingMode::InpaintOriginalScale:
      return forward_image(g, inpaint_with_color(image, pixel_mask, fill_color_for(g, opt)));
    case MaskingMode::CropAndRescale:
      return forward_image(g, crop_and_rescale(image, pixel_mask, fill_color_for(g, opt)));
  }
  throw ArgumentError("masked_forward: unknown mode");
}

/// Like masked_forward but defined for empty masks (used by the flipping benchmarks).
inline ForwardResult occluded_forward(const ModelGraph& g, const Tensor& image, const Mask& keep,
                                      const MaskingOptions& opt = {}) {
  if (!keep.empty()) return masked_forward(g, image, keep, opt);
  switch (opt.mode) {
    case MaskingMode::LayerMasking:
      return layer_masked_forward(g, image, keep, opt.shrink_area_frac);
    case MaskingMode::InpaintOriginalScale:
      return forward_image(g, inpaint_with_color(image, keep, fill_color_for(g, opt)));
    case MaskingMode::CropAndRescale:
      return forward_image(g, crop_and_rescale(image, keep, fill_color_for(g, opt)));
  }
  throw ArgumentError("occluded_forward: unknown mode");
}

}  // namespace hucd
