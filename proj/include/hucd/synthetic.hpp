#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "hucd/concepts.hpp"
#include "hucd/embedding.hpp"
#include "hucd/model.hpp"
#include "hucd/runtime.hpp"
#include "hucd/segments.hpp"

namespace hucd::synth {

inline std::string image_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
  return buf;
}

// ---------------------------------------------------------------------------
// Planted linear model: 1×1 identity conv → GAP → linear, one input channel per
// concept plus a background channel. With zero-color inpainting the true-class
// logit is b + Σ_segments area·amplitude·w, so every curve has a closed form.
// ---------------------------------------------------------------------------

struct PlantedBench {
  ModelGraph model;
  ConceptSpace space;  // concept l = e_l, complement = background channel
  ClassHead head;      // class 0
  MaskingOptions opt;
  std::vector<DatasetItem> items;        // all class 0
  std::vector<std::vector<double>> amp;  // per image, per concept
};

/// `weights` are the class-0 weights of the n concept channels; the other class
/// has zero weights and bias `threshold`. Each image is split into n + 1
/// vertical stripes of random width in a random order; stripe l carries
/// amplitude amp[l] on channel l, the last stripe is background.
inline PlantedBench planted_bench(const std::vector<double>& weights, int images, std::uint64_t seed,
                                  double threshold = 0.0, double background_weight = 0.0, int h = 8,
                                  int stripe = 4) {
  const int n = static_cast<int>(weights.size());
  if (n < 1) throw ArgumentError("planted_bench: need at least one concept");
  const int d = n + 1, w = stripe * d;
  PlantedBench pb;
  pb.model.input = {d, h, w};
  pb.model.num_classes = 2;
  Conv2d id;
  id.in_channels = id.out_channels = d;
  id.has_bias = false;
  id.weight.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int c = 0; c < d; ++c) id.weight[static_cast<std::size_t>(c) * d + c] = 1.0;
  Linear lin;
  lin.in_features = d;
  lin.out_features = 2;
  lin.weight.assign(static_cast<std::size_t>(2) * d, 0.0);
  for (int l = 0; l < n; ++l) lin.weight[static_cast<std::size_t>(l)] = weights[static_cast<std::size_t>(l)];
  lin.weight[static_cast<std::size_t>(n)] = background_weight;
  lin.bias = {0.0, threshold};
  pb.model.layers = {id, GlobalAveragePool{}, lin};
  validate(pb.model);
  pb.head = class_head(pb.model, 0);
  pb.opt.mode = MaskingMode::InpaintOriginalScale;
  pb.opt.fill_color.assign(static_cast<std::size_t>(d), 0.0);

  std::vector<ConceptBasis> bases;
  for (int l = 0; l < n; ++l) {
    ConceptBasis b;
    b.concept_id = l;
    b.basis = Matrix::Zero(d, 1);
    b.basis(l, 0) = 1.0;
    b.captured_variance = 1.0;
    bases.push_back(std::move(b));
  }
  pb.space = build_space(std::move(bases));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ua(0.5, 1.5);
  std::uniform_int_distribution<int> uw(1, 2 * stripe - 1);
  for (int i = 0; i < images; ++i) {
    // random stripe widths summing to w, each ≥ 1
    std::vector<int> widths(static_cast<std::size_t>(d), stripe);
    for (int k = 0; k < d; ++k) {
      const int a = k, b = (k + 1) % d;
      const int give = std::min(uw(rng) - stripe, widths[static_cast<std::size_t>(a)] - 1);
      if (give > 0) widths[static_cast<std::size_t>(a)] -= give, widths[static_cast<std::size_t>(b)] += give;
    }
    std::vector<int> order(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) order[static_cast<std::size_t>(k)] = k;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> amp(static_cast<std::size_t>(n));
    for (auto& a : amp) a = ua(rng);
    Tensor img(1, d, h, w);
    MaskSet ms{image_name("planted", i), h, w, {}};
    int x0 = 0;
    for (int k = 0; k < d; ++k) {
      const int ch = order[static_cast<std::size_t>(k)];
      const int x1 = x0 + widths[static_cast<std::size_t>(k)];
      Mask m(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = x0; x < x1; ++x) {
          m.set(y, x, true);
          img.at(0, ch, y, x) = ch < n ? amp[static_cast<std::size_t>(ch)] : 1.0;
        }
      ms.masks.push_back(make_mask_entry(ch + 1, std::move(m)));
      x0 = x1;
    }
    pb.items.push_back({ms.image_id, 0, std::move(img), select_granular(ms, 0.0)});
    pb.amp.push_back(std::move(amp));
  }
  return pb;
}


// ---------------------------------------------------------------------------
// Toy shapes task: red discs (class 0) and blue squares (class 1) on gray noise,
// with a hand-set residual CNN. A third "background" logit wins through its bias
// when no shape evidence reaches the pool.
// ---------------------------------------------------------------------------

inline constexpr int kToySize = 64;
inline constexpr int kToyFeatures = 24;

namespace detail {

inline std::vector<double> rounded(std::vector<double> v) {
  for (auto& x : v) x = static_cast<float>(x);
  return v;
}

}  // namespace detail

inline ModelGraph toy_model(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> small(-0.05, 0.05), mix(-0.3, 0.3);
  ModelGraph g;
  g.input = {3, kToySize, kToySize};
  g.num_classes = 3;
  g.mean_color = {0.5, 0.5, 0.5};

  // 5×5 colour and edge detectors
  Conv2d c1;
  c1.in_channels = 3;
  c1.out_channels = 8;
  c1.kernel_h = c1.kernel_w = 5;
  c1.padding = 2;
  c1.weight.assign(8 * 3 * 25, 0.0);
  c1.bias.assign(8, 0.0);
  auto w1 = [&](int o, int i, int y, int x) -> double& { return c1.weight[((o * 3 + i) * 5 + y) * 5 + x]; };
  const double colour[3][3] = {{1.0, -0.5, -0.5}, {-0.5, -0.5, 1.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) w1(o, i, y, x) = colour[o][i] / 25.0 * (o < 2 ? 4.0 : 1.0);
  c1.bias[0] = c1.bias[1] = -0.6;
  c1.bias[2] = -0.3;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 5; ++k) {
      w1(3, i, 0, k) = w1(3, i, 1, k) = 0.05;   // horizontal edge
      w1(3, i, 3, k) = w1(3, i, 4, k) = -0.05;
      w1(4, i, k, 0) = w1(4, i, k, 1) = 0.05;   // vertical edge
      w1(4, i, k, 3) = w1(4, i, k, 4) = -0.05;
      for (int y = 0; y < 5; ++y) {
        w1(5, i, k, y) = -w1(3, i, k, y);
        w1(6, i, k, y) = -w1(4, i, k, y);
        w1(7, i, k, y) = (k == 2 && y == 2) ? 0.3 : -0.3 / 24.0;  // centre-surround
      }
    }
  c1.weight = detail::rounded(c1.weight);
  c1.bias = detail::rounded(c1.bias);

  BatchNorm bn;
  bn.channels = 8;
  bn.gamma = detail::rounded({1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 1.5});
  bn.beta = detail::rounded({0.0, 0.0, 0.0, 0.01, 0.01, 0.01, 0.01, 0.02});
  bn.running_mean.assign(8, 0.0);
  bn.running_var.assign(8, 1.0);

  // residual body: colour channels pass through a depthwise 3×3 blur, the
  // others are mixed with small random weights
  auto body_conv = [&]() {
    Conv2d c;
    c.in_channels = c.out_channels = 8;
    c.kernel_h = c.kernel_w = 3;
    c.padding = 1;
    c.weight.assign(8 * 8 * 9, 0.0);
    c.bias.assign(8, 0.0);
    for (int o = 0; o < 8; ++o)
      for (int i = 0; i < 8; ++i)
        for (int k = 0; k < 9; ++k) {
          double& v = c.weight[static_cast<std::size_t>((o * 8 + i) * 9 + k)];
          if (o == i) v = o < 2 ? 0.5 / 9.0 : (k == 4 ? 0.4 : 0.0);
          if (o >= 2 && i >= 2) v += small(rng);
        }
    c.weight = detail::rounded(c.weight);
    return c;
  };
  ResidualBlock res;
  res.main = {body_conv(), ReLU{}, body_conv()};

  // background texture reaches the features only faintly
  Conv2d c2;
  c2.in_channels = 8;
  c2.out_channels = kToyFeatures;
  c2.kernel_h = c2.kernel_w = 3;
  c2.stride = 2;
  c2.padding = 1;
  c2.weight.assign(static_cast<std::size_t>(kToyFeatures) * 8 * 9, 0.0);
  c2.bias.assign(kToyFeatures, 0.0);
  for (int o = 0; o < kToyFeatures; ++o)
    for (int i = 0; i < 8; ++i)
      for (int k = 0; k < 9; ++k) {
        double& v = c2.weight[static_cast<std::size_t>((o * 8 + i) * 9 + k)];
        if (o < 2) v = (i == o && k == 4) ? 1.0 : 0.0;
        else if (i >= 2) v = mix(rng) / 30.0;
      }
  for (int o = 2; o < kToyFeatures; ++o) c2.bias[static_cast<std::size_t>(o)] = small(rng) / 10.0;
  c2.weight = detail::rounded(c2.weight);
  c2.bias = detail::rounded(c2.bias);

  Linear head;
  head.in_features = kToyFeatures;
  head.out_features = 3;
  head.weight.assign(3 * kToyFeatures, 0.0);
  head.weight[0] = 6.0;
  head.weight[kToyFeatures + 1] = 6.0;
  head.bias = detail::rounded({0.0, 0.0, 0.12});

  g.layers = {c1, bn, ReLU{}, MaxPool{2, 2, 0}, res, ReLU{}, c2, ReLU{}, GlobalAveragePool{}, head};
  validate(g);
  return g;
}

struct ToyImage {
  std::string image_id;
  int class_label = 0;
  Tensor image;
  MaskSet masks;
};

/// Image i has class i % 2; masks alternate grid(3,3) and voronoi(9) every two images.
inline ToyImage toy_image(int i, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(i));
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_int_distribution<int> centre(18, 46);
  ToyImage t;
  t.image_id = image_name("toy", i);
  t.class_label = i % 2;
  const int n = kToySize;
  t.image = Tensor(1, 3, n, n);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) t.image.at(0, c, y, x) = 0.5 + noise(rng);
  const int cy = centre(rng), cx = centre(rng);
  std::uniform_int_distribution<int> size(8, 14);
  const int r = size(rng);
  const double rgb[2][3] = {{0.85, 0.15, 0.15}, {0.15, 0.15, 0.85}};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const bool inside = t.class_label == 0 ? (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r
                                             : std::abs(y - cy) <= r - 2 && std::abs(x - cx) <= r - 2;
      if (inside)
        for (int c = 0; c < 3; ++c) t.image.at(0, c, y, x) = rgb[t.class_label][c] + noise(rng);
    }
  for (auto& v : t.image.data()) v = static_cast<float>(v);
  const auto spec = (i / 2) % 2 == 0 ? grid_spec(3, 3) : voronoi_spec(9);
  t.masks = synthetic_segmenter(n, n, spec, seed + static_cast<std::uint64_t>(i), t.image_id);
  return t;
}

}  // namespace hucd::synth
