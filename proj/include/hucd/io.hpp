#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hucd/error.hpp"
#include "hucd/model.hpp"
#include "hucd/numerics.hpp"
#include "hucd/tensor.hpp"

namespace hucd::io {

using detail::read_file;
using detail::write_file;

inline std::filesystem::path header_path(const std::filesystem::path& p) { return p.string() + ".json"; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw DataError(detail::cat("'", p.string(), "' does not exist"));
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(detail::cat("'", p.string(), "': ", e.what()));
  }
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

namespace detail {

inline std::string pack_f32(const std::vector<double>& v) {
  hucd::detail::BlobWriter w;
  w.put(v);
  return std::move(w.bytes());
}

inline std::vector<double> unpack_f32(const std::string& bytes, std::size_t count, const std::filesystem::path& p) {
  if (bytes.size() != count * 4)
    throw DataError(hucd::detail::cat("'", p.string(), "': ", bytes.size(), " bytes, header implies ", count * 4));
  std::vector<double> out(count);
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < count; ++i) out[i] = hucd::detail::load_le_f32(b + 4 * i);
  return out;
}

}  // namespace detail

/// Row-major little-endian f32 matrix with a `<path>.json` header {rows, dim}.
inline void write_matrix(const std::filesystem::path& p, const Matrix& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  write_file(p, detail::pack_f32(v));
  write_json(header_path(p), {{"rows", m.rows()}, {"dim", m.cols()}, {"dtype", "f32"}});
}

inline Matrix read_matrix(const std::filesystem::path& p) {
  const auto h = read_json(header_path(p));
  if (!h.contains("rows") || !h.contains("dim")) throw DataError(hucd::detail::cat("'", p.string(), ".json': needs rows, dim"));
  const auto rows = h["rows"].get<Eigen::Index>(), dim = h["dim"].get<Eigen::Index>();
  const auto v = detail::unpack_f32(read_file(p), static_cast<std::size_t>(rows * dim), p);
  Matrix m(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = v[static_cast<std::size_t>(i * dim + j)];
  return m;
}

/// Image tensor as raw f32 (C×H×W) with a `<path>.json` header {shape: [C, H, W]}.
inline void write_image(const std::filesystem::path& p, const Tensor& img) {
  if (img.n() != 1) throw ArgumentError("write_image: expects a single image");
  write_file(p, detail::pack_f32(img.data()));
  write_json(header_path(p), {{"shape", {img.c(), img.h(), img.w()}}, {"dtype", "f32"}});
}

inline Tensor read_image(const std::filesystem::path& p) {
  const auto h = read_json(header_path(p));
  if (!h.contains("shape") || !h["shape"].is_array() || h["shape"].size() != 3)
    throw DataError(hucd::detail::cat("'", p.string(), ".json': shape must be [C, H, W]"));
  const auto s = h["shape"].get<std::vector<int>>();
  if (s[0] < 1 || s[1] < 1 || s[2] < 1) throw DataError(hucd::detail::cat("'", p.string(), ".json': invalid shape"));
  Tensor t(1, s[0], s[1], s[2]);
  t.data() = detail::unpack_f32(read_file(p), t.size(), p);
  return t;
}

/// Shortest round-trip text for doubles ("%.17g"), stable across runs.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw ContractViolation("CsvWriter: wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\"\n") != std::string::npos)
        throw ArgumentError(hucd::detail::cat("CSV cell '", cells[i], "' contains a delimiter"));
      out_ << (i ? "," : "") << cells[i];
    }
    out_ << "\n";
  }
  std::string str() const { return out_.str(); }
  void save(const std::filesystem::path& p) const { write_file(p, str()); }

 private:
  std::size_t cols_;
  std::ostringstream out_;
};

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError(hucd::detail::cat("CSV has no column '", name, "'"));
  }
};

inline Csv read_csv(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw DataError(hucd::detail::cat("'", p.string(), "' does not exist"));
  std::istringstream in(read_file(p));
  Csv csv;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw DataError(hucd::detail::cat("'", p.string(), "': empty CSV"));
  csv.header = split(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != csv.header.size())
      throw DataError(hucd::detail::cat("'", p.string(), "' line ", n, ": expected ", csv.header.size(), " cells"));
    csv.rows.push_back(std::move(cells));
  }
  return csv;
}

}  // namespace hucd::io
