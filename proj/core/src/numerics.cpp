#include "df/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

namespace df {

namespace {

std::atomic<std::uint64_t> g_qk_macs{0};

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
void require_finite(const BasicMatrix<T>& m, const char* what) {
  if (!m.all_finite()) throw NonFiniteError(std::string(what) + ": non-finite result");
}

}  // namespace

template <typename T>
BasicMatrix<T>::BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(rows_, cols_));
  }
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<T> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return BasicMatrix(r, c, std::move(data));
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::identity(std::size_t n) {
  BasicMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
  return m;
}

template <typename T>
void BasicMatrix<T>::append_rows(const BasicMatrix& other) {
  if (other.rows_ == 0) return;
  if (rows_ == 0) cols_ = other.cols_;
  if (other.cols_ != cols_) {
    throw ShapeError("append_rows: column mismatch " + std::to_string(cols_) + " vs " +
                     std::to_string(other.cols_));
  }
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw ShapeError("slice_rows out of range");
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
  return BasicMatrix(count, cols_,
                     std::vector<T>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

template <typename T>
bool BasicMatrix<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  BasicMatrix<T> out(n, m);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    // k ascending for every output entry.
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < m; ++j) acc[j] += aik * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < m; ++j) out(i, j) = static_cast<T>(acc[j]);
  }
  require_finite(out, "matmul");
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

namespace {

// In-place softmax of one row of doubles. -inf entries are masked.
void softmax_inplace(std::span<double> row, std::size_t row_index) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : row) mx = std::max(mx, x);
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw DegenerateRowError("softmax: row " + std::to_string(row_index) + " is fully masked");
  }
  double sum = 0.0;
  for (double& x : row) {
    x = (x == -std::numeric_limits<double>::infinity()) ? 0.0 : std::exp(x - mx);
    sum += x;
  }
  const double inv = 1.0 / sum;
  for (double& x : row) x *= inv;
}

}  // namespace

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.rows(), m.cols());
  std::vector<double> buf(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (std::isnan(in[j]) || in[j] == std::numeric_limits<T>::infinity()) {
        throw NonFiniteError("softmax: entry must be finite or -inf");
      }
      buf[j] = in[j];
    }
    softmax_inplace(buf, i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = static_cast<T>(buf[j]);
  }
  return out;
}

template <typename T>
double max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
  double worst = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i])));
  }
  return worst;
}

template <typename T>
BasicAttentionOutput<T> attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                                  const BasicMatrix<T>& v, const AttentionOptions& opts) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query dim " + std::to_string(q.cols()) + " != key dim " +
                     std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: " + std::to_string(k.rows()) + " keys but " +
                     std::to_string(v.rows()) + " values");
  }
  if (opts.mask && opts.mask->size() != k.rows()) {
    throw ShapeError("attention: mask length " + std::to_string(opts.mask->size()) +
                     " != key count " + std::to_string(k.rows()));
  }
  const double scale =
      opts.scale.value_or(q.cols() == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!(scale > 0.0)) throw std::invalid_argument("attention: scale must be positive");

  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols(), dv = v.cols();
  BasicAttentionOutput<T> result{BasicMatrix<T>(nq, dv), std::nullopt};
  if (opts.want_map) result.map.emplace(nq, nk);

  std::vector<double> logits(nk);
  std::vector<double> acc(dv);
  constexpr double kMasked = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nq; ++i) {
    const auto qi = q.row(i);
    std::uint64_t row_macs = 0;
    for (std::size_t j = 0; j < nk; ++j) {
      if (opts.mask && !(*opts.mask)[j]) {
        logits[j] = kMasked;
        continue;
      }
      row_macs += d;
      const auto kj = k.row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += static_cast<double>(qi[t]) * kj[t];
      logits[j] = scale * dot;
    }
    g_qk_macs.fetch_add(row_macs, std::memory_order_relaxed);
    softmax_inplace(logits, i);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < nk; ++j) {
      const double p = logits[j];
      if (p == 0.0) continue;
      const auto vj = v.row(j);
      for (std::size_t t = 0; t < dv; ++t) acc[t] += p * vj[t];
    }
    auto out = result.output.row(i);
    for (std::size_t t = 0; t < dv; ++t) out[t] = static_cast<T>(acc[t]);
    if (result.map) {
      auto mrow = result.map->row(i);
      for (std::size_t j = 0; j < nk; ++j) mrow[j] = static_cast<T>(logits[j]);
    }
  }
  require_finite(result.output, "attention");
  return result;
}

std::uint64_t executed_qk_macs() noexcept {
  return g_qk_macs.load(std::memory_order_relaxed);
}

void reset_executed_qk_macs() noexcept { g_qk_macs.store(0, std::memory_order_relaxed); }

template class BasicMatrix<float>;
template class BasicMatrix<double>;
template BasicMatrix<float> matmul(const BasicMatrix<float>&, const BasicMatrix<float>&);
template BasicMatrix<double> matmul(const BasicMatrix<double>&, const BasicMatrix<double>&);
template BasicMatrix<float> transpose(const BasicMatrix<float>&);
template BasicMatrix<double> transpose(const BasicMatrix<double>&);
template BasicMatrix<float> softmax_rows(const BasicMatrix<float>&);
template BasicMatrix<double> softmax_rows(const BasicMatrix<double>&);
template double max_abs_diff(const BasicMatrix<float>&, const BasicMatrix<float>&);
template double max_abs_diff(const BasicMatrix<double>&, const BasicMatrix<double>&);
template BasicAttentionOutput<float> attention(const BasicMatrix<float>&, const BasicMatrix<float>&,
                                               const BasicMatrix<float>&, const AttentionOptions&);
template BasicAttentionOutput<double> attention(const BasicMatrix<double>&,
                                                const BasicMatrix<double>&,
                                                const BasicMatrix<double>&,
                                                const AttentionOptions&);

}  // namespace df
