#include "df/tensor_container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

#include <json.hpp>

namespace df {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'T', 'C'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(bytes[at + b]) << (8 * b);
  return v;
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

DType dtype_from(std::string_view s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw FormatError("tensor container: unknown dtype '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(DType t) noexcept { return t == DType::f32 ? "f32" : "f64"; }

std::size_t dtype_size(DType t) noexcept { return t == DType::f32 ? 4 : 8; }

std::size_t TensorInfo::byte_size() const noexcept {
  return element_count(shape) * dtype_size(dtype);
}

void TensorContainer::add(std::string name, std::vector<std::size_t> shape,
                          std::span<const double> values, DType dtype) {
  if (contains(name)) throw FormatError("tensor container: duplicate tensor '" + name + "'");
  if (element_count(shape) != values.size()) {
    throw ShapeError("tensor container: shape does not match value count for '" + name + "'");
  }
  TensorInfo info{std::move(name), dtype, std::move(shape), payload_.size()};
  payload_.reserve(payload_.size() + info.byte_size());
  for (double v : values) {
    if (dtype == DType::f64) {
      put_le(payload_, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le(payload_, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  infos_.push_back(std::move(info));
}

void TensorContainer::add(std::string name, const Matrix& m, DType dtype) {
  add(std::move(name), {m.rows(), m.cols()}, m.data(), dtype);
}

void TensorContainer::add(std::string name, const MatrixF& m) {
  std::vector<double> wide(m.data().begin(), m.data().end());
  add(std::move(name), {m.rows(), m.cols()}, wide, DType::f32);
}

bool TensorContainer::contains(std::string_view name) const noexcept {
  return std::any_of(infos_.begin(), infos_.end(), [&](const auto& i) { return i.name == name; });
}

const TensorInfo& TensorContainer::info(std::string_view name) const {
  for (const auto& i : infos_)
    if (i.name == name) return i;
  throw FormatError("tensor container: no tensor '" + std::string(name) + "'");
}

std::vector<double> TensorContainer::values(std::string_view name) const {
  const auto& i = info(name);
  const std::size_t n = element_count(i.shape);
  std::vector<double> out(n);
  std::span<const std::uint8_t> bytes(payload_);
  for (std::size_t e = 0; e < n; ++e) {
    if (i.dtype == DType::f64) {
      out[e] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, i.byte_offset + 8 * e));
    } else {
      out[e] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, i.byte_offset + 4 * e));
    }
  }
  return out;
}

Matrix TensorContainer::matrix(std::string_view name) const {
  const auto& i = info(name);
  if (i.shape.size() > 2) throw ShapeError("tensor '" + i.name + "' has rank > 2");
  const std::size_t rows = i.shape.size() == 2 ? i.shape[0] : 1;
  const std::size_t cols = i.shape.empty() ? 1 : i.shape.back();
  return Matrix(rows, cols, values(name));
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  nlohmann::json header = nlohmann::json::array();
  for (const auto& i : infos_) {
    header.push_back({{"name", i.name},
                      {"dtype", std::string(to_string(i.dtype))},
                      {"shape", i.shape},
                      {"byte_offset", i.byte_offset}});
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload_.begin(), payload_.end());
  return out;
}

TensorContainer TensorContainer::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError("tensor container: bad magic");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kVersion) {
    throw FormatError("tensor container: unsupported version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw FormatError("tensor container: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tensor container: header is not JSON: ") + e.what());
  }
  if (!header.is_array()) throw FormatError("tensor container: header must be an array");

  TensorContainer c;
  c.payload_.assign(bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len), bytes.end());
  std::size_t expected_end = 0;
  try {
    for (const auto& entry : header) {
      TensorInfo i;
      i.name = entry.at("name").get<std::string>();
      i.dtype = dtype_from(entry.at("dtype").get<std::string>());
      i.shape = entry.at("shape").get<std::vector<std::size_t>>();
      i.byte_offset = entry.at("byte_offset").get<std::size_t>();
      if (i.byte_offset != expected_end) {
        throw FormatError("tensor container: tensor '" + i.name + "' overlaps or leaves a gap");
      }
      expected_end += i.byte_size();
      c.infos_.push_back(std::move(i));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tensor container: malformed header entry: ") + e.what());
  }
  if (expected_end != c.payload_.size()) {
    throw FormatError("tensor container: payload is " + std::to_string(c.payload_.size()) +
                      " bytes, header describes " + std::to_string(expected_end));
  }
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  return parse(read_file_bytes(path));
}

void add_cache_snapshot(TensorContainer& out, std::string_view prefix, const HeadKVCache& cache) {
  for (const auto& b : cache.blocks()) {
    const std::string base = std::string(prefix) + "/frame_" + std::to_string(b.frame_id);
    out.add(base + "/keys", b.keys);
    out.add(base + "/values", b.values);
  }
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace df
