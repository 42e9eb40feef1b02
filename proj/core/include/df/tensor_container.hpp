#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "df/kv_cache.hpp"
#include "df/numerics.hpp"

namespace df {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType { f32, f64 };

std::string_view to_string(DType t) noexcept;
std::size_t dtype_size(DType t) noexcept;

struct TensorInfo {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::size_t> shape;
  std::size_t byte_offset = 0;  // relative to the start of the payload
  std::size_t byte_size() const noexcept;
};

/// Named dense tensors in one binary file.
///
/// Layout (all integers little-endian):
///   bytes 0..3    magic "DFTC"
///   bytes 4..7    uint32 format version (1)
///   bytes 8..15   uint64 header length H
///   next H bytes  UTF-8 JSON array of {"name","dtype","shape","byte_offset"}
///   remainder     payload; each tensor row-major little-endian IEEE-754
///                 at its byte_offset, tensors packed in insertion order
class TensorContainer {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void add(std::string name, const Matrix& m, DType dtype = DType::f64);
  void add(std::string name, const MatrixF& m);
  /// Arbitrary-rank tensor from values in row-major order.
  void add(std::string name, std::vector<std::size_t> shape, std::span<const double> values,
           DType dtype = DType::f64);

  const std::vector<TensorInfo>& tensors() const noexcept { return infos_; }
  bool contains(std::string_view name) const noexcept;
  const TensorInfo& info(std::string_view name) const;

  /// Values widened to double. Rank-1 tensors come back as 1 x n.
  Matrix matrix(std::string_view name) const;
  std::vector<double> values(std::string_view name) const;

  std::vector<std::uint8_t> serialize() const;
  static TensorContainer parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

 private:
  std::vector<TensorInfo> infos_;
  std::vector<std::uint8_t> payload_;
};

/// Adds "<prefix>/frame_<id>/keys" and ".../values" for every cached block.
void add_cache_snapshot(TensorContainer& out, std::string_view prefix, const HeadKVCache& cache);

/// Writes `bytes` to `path` via a sibling temp file and rename. Throws
/// IoError on failure.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace df
