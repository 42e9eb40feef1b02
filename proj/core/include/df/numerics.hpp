#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace df {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a softmax row has no unmasked entry.
class DegenerateRowError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense row-major matrix. Storage precision is T; every reduction in this
/// module accumulates in double.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows);
  static BasicMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  /// Appends the rows of `other` below this matrix. An empty matrix adopts
  /// the column count of the first block appended to it.
  void append_rows(const BasicMatrix& other);

  /// Copy of rows [first, first + count).
  BasicMatrix slice_rows(std::size_t first, std::size_t count) const;

  bool all_finite() const noexcept;

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

/// Per-key visibility; true keeps the key, false masks it to -inf.
using KeyMask = std::vector<bool>;

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m);

/// Numerically stable row softmax. -inf entries are masked and map to 0.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m);

/// Max absolute entrywise difference; shapes must agree.
template <typename T>
double max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

struct AttentionOptions {
  /// Logit scale; unset means 1/sqrt(head_dim).
  std::optional<double> scale;
  std::optional<KeyMask> mask;
  bool want_map = false;
};

template <typename T>
struct BasicAttentionOutput {
  BasicMatrix<T> output;
  std::optional<BasicMatrix<T>> map;
};

using AttentionOutput = BasicAttentionOutput<double>;

/// softmax(scale * q k^T, masked) v. Rows are processed independently with
/// a fixed left-to-right reduction order, so results are bit-reproducible.
template <typename T>
BasicAttentionOutput<T> attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                                  const BasicMatrix<T>& v, const AttentionOptions& opts = {});

/// Closed-form key-token MAC count of one attention call: the multiply-adds
/// of the q k^T product, queries * keys * head_dim.
constexpr std::size_t key_token_macs(std::size_t queries, std::size_t keys,
                                     std::size_t head_dim) noexcept {
  return queries * keys * head_dim;
}

/// Process-wide count of q.k multiply-adds actually executed by `attention`
/// (masked keys are skipped and not counted).
std::uint64_t executed_qk_macs() noexcept;
void reset_executed_qk_macs() noexcept;

}  // namespace df
