#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hucd/error.hpp"

namespace hucd {

// ---------------------------------------------------------------------------
// Layer kinds
// ---------------------------------------------------------------------------

struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  bool has_bias = true;
  std::vector<double> weight;  // out × in × kh × kw
  std::vector<double> bias;    // out (empty when !has_bias)

  int kernel_size() const { return std::max(kernel_h, kernel_w); }
};

struct BatchNorm {
  int channels = 0;
  double eps = 1e-5;
  std::vector<double> gamma, beta, running_mean, running_var;
};

struct ReLU {};

struct MaxPool {
  int kernel = 2;
  int stride = 2;
  int padding = 0;
};

struct GlobalAveragePool {};

struct Linear {
  int in_features = 0;
  int out_features = 0;
  std::vector<double> weight;  // out × in
  std::vector<double> bias;    // out
};

struct Layer;

/// out = main(x) + projection(x); an empty projection is the identity.
struct ResidualBlock {
  std::vector<Layer> main;
  std::vector<Layer> projection;
};

struct Layer {
  std::variant<Conv2d, BatchNorm, ReLU, MaxPool, GlobalAveragePool, ResidualBlock, Linear> op;

  template <typename T>
    requires(std::is_same_v<std::decay_t<T>, Conv2d> || std::is_same_v<std::decay_t<T>, BatchNorm> ||
             std::is_same_v<std::decay_t<T>, ReLU> || std::is_same_v<std::decay_t<T>, MaxPool> ||
             std::is_same_v<std::decay_t<T>, GlobalAveragePool> || std::is_same_v<std::decay_t<T>, ResidualBlock> ||
             std::is_same_v<std::decay_t<T>, Linear>)
  Layer(T t) : op(std::move(t)) {}  // NOLINT(google-explicit-constructor)

  template <typename T>
  bool is() const { return std::holds_alternative<T>(op); }
  template <typename T>
  const T& as() const { return std::get<T>(op); }
  template <typename T>
  T& as() { return std::get<T>(op); }
};

inline const char* kind_name(const Layer& l) {
  struct V {
    const char* operator()(const Conv2d&) const { return "conv2d"; }
    const char* operator()(const BatchNorm&) const { return "batchnorm"; }
    const char* operator()(const ReLU&) const { return "relu"; }
    const char* operator()(const MaxPool&) const { return "maxpool"; }
    const char* operator()(const GlobalAveragePool&) const { return "global_avg_pool"; }
    const char* operator()(const ResidualBlock&) const { return "residual"; }
    const char* operator()(const Linear&) const { return "linear"; }
  };
  return std::visit(V{}, l.op);
}

struct Shape3 {
  int c = 0, h = 0, w = 0;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Conv/pool output extent along one axis.
inline int pooled_extent(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

/// A CNN that ends in exactly one GlobalAveragePool followed by one Linear head.
struct ModelGraph {
  Shape3 input;
  int num_classes = 0;
  std::vector<double> mean_color;  // per input channel; fill value for baseline-color masking
  std::vector<Layer> layers;

  const Linear& head() const { return layers.back().as<Linear>(); }
  int feature_dim() const { return head().in_features; }

  /// Top-level index of the first Conv2d layer, or -1.
  int first_conv_index() const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].is<Conv2d>()) return static_cast<int>(i);
    return -1;
  }
};

// ---------------------------------------------------------------------------
// Shape validation
// ---------------------------------------------------------------------------

namespace detail {

inline Shape3 infer_layer(const Layer& layer, Shape3 in, const std::string& path);

inline Shape3 infer_list(const std::vector<Layer>& layers, Shape3 s, const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) s = infer_layer(layers[i], s, prefix + std::to_string(i));
  return s;
}

inline Shape3 infer_layer(const Layer& layer, Shape3 in, const std::string& path) {
  auto fail = [&](const std::string& msg) -> DataError {
    return DataError(detail::cat("layer ", path, " (", kind_name(layer), "): ", msg));
  };
  if (const auto* c = std::get_if<Conv2d>(&layer.op)) {
    if (c->in_channels != in.c)
      throw fail(detail::cat("expects ", c->in_channels, " input channels, got ", in.c));
    if (c->kernel_h < 1 || c->kernel_w < 1 || c->stride < 1 || c->padding < 0 || c->out_channels < 1)
      throw fail("invalid geometry");
    if (c->weight.size() != static_cast<std::size_t>(c->out_channels) * c->in_channels * c->kernel_h * c->kernel_w)
      throw fail("weight size inconsistent with declared shape");
    if (c->has_bias ? c->bias.size() != static_cast<std::size_t>(c->out_channels) : !c->bias.empty())
      throw fail("bias size inconsistent with declared shape");
    Shape3 out{c->out_channels, pooled_extent(in.h, c->kernel_h, c->stride, c->padding),
               pooled_extent(in.w, c->kernel_w, c->stride, c->padding)};
    if (out.h < 1 || out.w < 1) throw fail("kernel larger than padded input");
    return out;
  }
  if (const auto* b = std::get_if<BatchNorm>(&layer.op)) {
    const auto n = static_cast<std::size_t>(b->channels);
    if (b->channels != in.c) throw fail(detail::cat("expects ", b->channels, " channels, got ", in.c));
    if (b->gamma.size() != n || b->beta.size() != n || b->running_mean.size() != n || b->running_var.size() != n)
      throw fail("parameter sizes inconsistent with channel count");
    for (double v : b->running_var)
      if (!(v > 0.0)) throw fail("running variance must be positive");
    if (!(b->eps >= 0.0)) throw fail("eps must be non-negative");
    return in;
  }
  if (layer.is<ReLU>()) return in;
  if (const auto* p = std::get_if<MaxPool>(&layer.op)) {
    if (p->kernel < 1 || p->stride < 1 || p->padding < 0 || 2 * p->padding >= p->kernel + 1)
      throw fail("invalid geometry");
    Shape3 out{in.c, pooled_extent(in.h, p->kernel, p->stride, p->padding),
               pooled_extent(in.w, p->kernel, p->stride, p->padding)};
    if (out.h < 1 || out.w < 1) throw fail("kernel larger than padded input");
    return out;
  }
  if (layer.is<GlobalAveragePool>()) return {in.c, 1, 1};
  if (const auto* r = std::get_if<ResidualBlock>(&layer.op)) {
    if (r->main.empty()) throw fail("main branch is empty");
    for (const auto& l : r->main)
      if (l.is<GlobalAveragePool>() || l.is<Linear>()) throw fail("pooling/linear layers are not allowed in branches");
    for (const auto& l : r->projection)
      if (l.is<GlobalAveragePool>() || l.is<Linear>()) throw fail("pooling/linear layers are not allowed in branches");
    const Shape3 a = infer_list(r->main, in, path + ".main.");
    const Shape3 b = r->projection.empty() ? in : infer_list(r->projection, in, path + ".projection.");
    if (!(a == b))
      throw fail(detail::cat("branch shapes differ: main ", a.c, "x", a.h, "x", a.w, " vs projection ", b.c, "x", b.h,
                             "x", b.w));
    return a;
  }
  const auto& lin = layer.as<Linear>();
  if (in.h != 1 || in.w != 1 || lin.in_features != in.c)
    throw fail(detail::cat("expects ", lin.in_features, " features, got ", in.c, "x", in.h, "x", in.w));
  if (lin.weight.size() != static_cast<std::size_t>(lin.in_features) * lin.out_features ||
      lin.bias.size() != static_cast<std::size_t>(lin.out_features))
    throw fail("parameter sizes inconsistent with declared shape");
  return {lin.out_features, 1, 1};
}

}  // namespace detail

/// Checks the pooling→linear tail and all intermediate shapes; throws DataError naming the layer.
inline void validate(const ModelGraph& g) {
  if (g.input.c < 1 || g.input.h < 1 || g.input.w < 1) throw DataError("model: invalid input shape");
  const std::size_t n = g.layers.size();
  if (n < 2 || !g.layers[n - 1].is<Linear>() || !g.layers[n - 2].is<GlobalAveragePool>())
    throw DataError("model: layer list must end with global_avg_pool followed by linear");
  for (std::size_t i = 0; i + 2 < n; ++i)
    if (g.layers[i].is<GlobalAveragePool>() || g.layers[i].is<Linear>())
      throw DataError(detail::cat("layer ", i, " (", kind_name(g.layers[i]), "): only one pooling->linear tail allowed"));
  if (!g.mean_color.empty() && g.mean_color.size() != static_cast<std::size_t>(g.input.c))
    throw DataError("model: mean_color length differs from input channels");
  const Shape3 out = detail::infer_list(g.layers, g.input, "");
  if (out.c != g.num_classes)
    throw DataError(detail::cat("model: linear head produces ", out.c, " logits but num_classes = ", g.num_classes));
}

// ---------------------------------------------------------------------------
// Manifest + blob persistence
// ---------------------------------------------------------------------------

namespace detail {

inline float load_le_f32(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline void store_le_f32(float f, std::string& out) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(detail::cat("cannot open ", p.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(detail::cat("cannot write ", p.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

class BlobWriter {
 public:
  std::size_t offset() const { return bytes_.size(); }
  void put(const std::vector<double>& v) {
    for (double d : v) store_le_f32(static_cast<float>(d), bytes_);
  }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

inline nlohmann::json layers_to_json(const std::vector<Layer>& layers, BlobWriter& blob);

inline nlohmann::json layer_to_json(const Layer& layer, BlobWriter& blob) {
  nlohmann::json j;
  j["kind"] = kind_name(layer);
  const std::size_t start = blob.offset();
  if (const auto* c = std::get_if<Conv2d>(&layer.op)) {
    j["in_channels"] = c->in_channels;
    j["out_channels"] = c->out_channels;
    j["kernel"] = {c->kernel_h, c->kernel_w};
    j["stride"] = c->stride;
    j["padding"] = c->padding;
    j["bias"] = c->has_bias;
    blob.put(c->weight);
    blob.put(c->bias);
  } else if (const auto* b = std::get_if<BatchNorm>(&layer.op)) {
    j["channels"] = b->channels;
    j["eps"] = b->eps;
    blob.put(b->gamma);
    blob.put(b->beta);
    blob.put(b->running_mean);
    blob.put(b->running_var);
  } else if (const auto* p = std::get_if<MaxPool>(&layer.op)) {
    j["kernel"] = p->kernel;
    j["stride"] = p->stride;
    j["padding"] = p->padding;
  } else if (const auto* r = std::get_if<ResidualBlock>(&layer.op)) {
    j["main"] = layers_to_json(r->main, blob);
    j["projection"] = layers_to_json(r->projection, blob);
  } else if (const auto* l = std::get_if<Linear>(&layer.op)) {
    j["in_features"] = l->in_features;
    j["out_features"] = l->out_features;
    blob.put(l->weight);
    blob.put(l->bias);
  }
  j["weight_offset"] = start;
  j["weight_len"] = blob.offset() - start;
  return j;
}

inline nlohmann::json layers_to_json(const std::vector<Layer>& layers, BlobWriter& blob) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) arr.push_back(layer_to_json(l, blob));
  return arr;
}

class BlobReader {
 public:
  explicit BlobReader(const std::string& bytes) : bytes_(bytes) {}

  // Reads `count` floats starting at byte `offset`; the caller checks layer ranges first.
  std::vector<double> take(std::size_t& offset, std::size_t count) const {
    std::vector<double> out(count);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + offset;
    for (std::size_t i = 0; i < count; ++i) out[i] = load_le_f32(p + 4 * i);
    offset += 4 * count;
    return out;
  }
  std::size_t size() const { return bytes_.size(); }

 private:
  const std::string& bytes_;
};

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw DataError(detail::cat("layer ", path, ": missing field '", key, "'"));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(detail::cat("layer ", path, ": field '", key, "' has the wrong type"));
  }
}

inline std::vector<Layer> layers_from_json(const nlohmann::json& arr, const BlobReader& blob, const std::string& prefix);

inline Layer layer_from_json(const nlohmann::json& j, const BlobReader& blob, const std::string& path) {
  if (!j.is_object()) throw DataError(detail::cat("layer ", path, ": not an object"));
  const auto kind = get_field<std::string>(j, "kind", path);
  const auto offset = get_field<std::size_t>(j, "weight_offset", path);
  const auto len = get_field<std::size_t>(j, "weight_len", path);
  if (len % 4 != 0) throw DataError(detail::cat("layer ", path, " (", kind, "): weight_len not a multiple of 4"));
  if (offset > blob.size() || len > blob.size() - offset)
    throw DataError(detail::cat("layer ", path, " (", kind, "): weight range [", offset, ", ", offset + len,
                                ") exceeds blob of ", blob.size(), " bytes (truncated blob?)"));
  std::size_t cursor = offset;
  auto expect_len = [&](std::size_t floats) {
    if (floats * 4 != len)
      throw DataError(detail::cat("layer ", path, " (", kind, "): weight_len ", len, " bytes but shape needs ",
                                  floats * 4));
  };
  if (kind == "conv2d") {
    Conv2d c;
    c.in_channels = get_field<int>(j, "in_channels", path);
    c.out_channels = get_field<int>(j, "out_channels", path);
    const auto k = get_field<std::vector<int>>(j, "kernel", path);
    if (k.size() != 2) throw DataError(detail::cat("layer ", path, " (conv2d): kernel must be [h, w]"));
    c.kernel_h = k[0];
    c.kernel_w = k[1];
    c.stride = get_field<int>(j, "stride", path);
    c.padding = get_field<int>(j, "padding", path);
    c.has_bias = get_field<bool>(j, "bias", path);
    if (c.in_channels < 1 || c.out_channels < 1 || c.kernel_h < 1 || c.kernel_w < 1)
      throw DataError(detail::cat("layer ", path, " (conv2d): invalid shape"));
    const std::size_t nw = static_cast<std::size_t>(c.out_channels) * c.in_channels * c.kernel_h * c.kernel_w;
    const std::size_t nb = c.has_bias ? static_cast<std::size_t>(c.out_channels) : 0;
    expect_len(nw + nb);
    c.weight = blob.take(cursor, nw);
    c.bias = blob.take(cursor, nb);
    return c;
  }
  if (kind == "batchnorm") {
    BatchNorm b;
    b.channels = get_field<int>(j, "channels", path);
    b.eps = get_field<double>(j, "eps", path);
    if (b.channels < 1) throw DataError(detail::cat("layer ", path, " (batchnorm): invalid channel count"));
    const auto n = static_cast<std::size_t>(b.channels);
    expect_len(4 * n);
    b.gamma = blob.take(cursor, n);
    b.beta = blob.take(cursor, n);
    b.running_mean = blob.take(cursor, n);
    b.running_var = blob.take(cursor, n);
    return b;
  }
  if (kind == "relu") {
    expect_len(0);
    return ReLU{};
  }
  if (kind == "maxpool") {
    expect_len(0);
    return MaxPool{get_field<int>(j, "kernel", path), get_field<int>(j, "stride", path),
                   get_field<int>(j, "padding", path)};
  }
  if (kind == "global_avg_pool") {
    expect_len(0);
    return GlobalAveragePool{};
  }
  if (kind == "residual") {
    if (!j.contains("main") || !j["main"].is_array())
      throw DataError(detail::cat("layer ", path, " (residual): missing 'main' branch"));
    ResidualBlock r;
    r.main = layers_from_json(j["main"], blob, path + ".main.");
    if (j.contains("projection")) r.projection = layers_from_json(j["projection"], blob, path + ".projection.");
    return r;
  }
  if (kind == "linear") {
    Linear l;
    l.in_features = get_field<int>(j, "in_features", path);
    l.out_features = get_field<int>(j, "out_features", path);
    if (l.in_features < 1 || l.out_features < 1)
      throw DataError(detail::cat("layer ", path, " (linear): invalid shape"));
    const auto nw = static_cast<std::size_t>(l.in_features) * l.out_features;
    expect_len(nw + static_cast<std::size_t>(l.out_features));
    l.weight = blob.take(cursor, nw);
    l.bias = blob.take(cursor, static_cast<std::size_t>(l.out_features));
    return l;
  }
  throw DataError(detail::cat("layer ", path, ": unknown layer kind '", kind, "'"));
}

inline std::vector<Layer> layers_from_json(const nlohmann::json& arr, const BlobReader& blob,
                                           const std::string& prefix) {
  std::vector<Layer> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(layer_from_json(arr[i], blob, prefix + std::to_string(i)));
  return out;
}

inline std::size_t count_params(const std::vector<Layer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) {
    if (const auto* c = std::get_if<Conv2d>(&l.op)) n += c->weight.size() + c->bias.size();
    else if (const auto* b = std::get_if<BatchNorm>(&l.op)) n += 4 * b->gamma.size();
    else if (const auto* r = std::get_if<ResidualBlock>(&l.op)) n += count_params(r->main) + count_params(r->projection);
    else if (const auto* li = std::get_if<Linear>(&l.op)) n += li->weight.size() + li->bias.size();
  }
  return n;
}

}  // namespace detail

inline std::size_t parameter_count(const ModelGraph& g) { return detail::count_params(g.layers); }

/// Serializes the manifest (canonical JSON text) and the little-endian f32 blob.
inline std::pair<std::string, std::string> serialize_model(const ModelGraph& g) {
  detail::BlobWriter blob;
  nlohmann::json m;
  m["format"] = "hucd-model";
  m["version"] = 1;
  m["dtype"] = "f32";
  m["endianness"] = "little";
  m["input_shape"] = {g.input.c, g.input.h, g.input.w};
  m["num_classes"] = g.num_classes;
  m["mean_color"] = g.mean_color;
  m["layers"] = detail::layers_to_json(g.layers, blob);
  m["total_params"] = blob.offset() / 4;
  return {m.dump(2) + "\n", std::move(blob.bytes())};
}

inline void save_model(const ModelGraph& g, const std::filesystem::path& manifest_path,
                       const std::filesystem::path& blob_path) {
  validate(g);
  auto [manifest, blob] = serialize_model(g);
  detail::write_file(manifest_path, manifest);
  detail::write_file(blob_path, blob);
}

inline ModelGraph parse_model(const std::string& manifest_text, const std::string& blob) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(detail::cat("model manifest: parse error: ", e.what()));
  }
  if (!m.is_object() || !m.contains("layers") || !m["layers"].is_array())
    throw DataError("model manifest: missing 'layers' array");
  if (m.value("dtype", "f32") != "f32") throw DataError("model manifest: only dtype f32 is supported");
  if (m.value("endianness", "little") != "little") throw DataError("model manifest: only little-endian blobs");
  ModelGraph g;
  const auto shape = detail::get_field<std::vector<int>>(m, "input_shape", "<manifest>");
  if (shape.size() != 3) throw DataError("model manifest: input_shape must be [C, H, W]");
  g.input = {shape[0], shape[1], shape[2]};
  g.num_classes = detail::get_field<int>(m, "num_classes", "<manifest>");
  if (m.contains("mean_color")) g.mean_color = m["mean_color"].get<std::vector<double>>();
  const detail::BlobReader reader(blob);
  g.layers = detail::layers_from_json(m["layers"], reader, "");
  const auto total = detail::get_field<std::size_t>(m, "total_params", "<manifest>");
  if (total * 4 != blob.size())
    throw DataError(detail::cat("model: blob has ", blob.size(), " bytes but manifest declares ", total,
                                " parameters (", total * 4, " bytes)"));
  if (detail::count_params(g.layers) != total)
    throw DataError("model: layer parameter counts do not sum to total_params");
  validate(g);
  return g;
}

inline ModelGraph load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path) {
  return parse_model(detail::read_file(manifest_path), detail::read_file(blob_path));
}

}  // namespace hucd
