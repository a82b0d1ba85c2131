#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace gsj {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Matrix transposed() const;
  Matrix operator*(const Matrix& rhs) const;
  Matrix& operator*=(double a);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Rank-3 array of shape (batch, sequence, channel), channel innermost.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t batch, std::size_t seq, std::size_t channels, double fill = 0.0);
  Tensor3(std::size_t batch, std::size_t seq, std::size_t channels,
          std::vector<double> data);

  std::size_t batch() const { return batch_; }
  std::size_t seq() const { return seq_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t b, std::size_t t, std::size_t c) {
    return data_[(b * seq_ + t) * channels_ + c];
  }
  double operator()(std::size_t b, std::size_t t, std::size_t c) const {
    return data_[(b * seq_ + t) * channels_ + c];
  }

  /// The length-C vector at (b, t).
  std::span<double> row(std::size_t b, std::size_t t) {
    return {data_.data() + (b * seq_ + t) * channels_, channels_};
  }
  std::span<const double> row(std::size_t b, std::size_t t) const {
    return {data_.data() + (b * seq_ + t) * channels_, channels_};
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool same_shape(const Tensor3& o) const {
    return batch_ == o.batch_ && seq_ == o.seq_ && channels_ == o.channels_;
  }

  Tensor3& operator+=(const Tensor3& o);
  Tensor3& operator-=(const Tensor3& o);
  Tensor3& operator*=(double a);

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t batch_ = 0;
  std::size_t seq_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

Tensor3 operator+(Tensor3 a, const Tensor3& b);
Tensor3 operator-(Tensor3 a, const Tensor3& b);

/// Reverses the sequence axis.
Tensor3 reverse_sequence(const Tensor3& x);

double max_abs(std::span<const double> v);
double max_abs_diff(const Tensor3& a, const Tensor3& b);
bool all_finite(std::span<const double> v);

/// Compensated (Neumaier) sum; result does not depend on how callers split work.
double stable_sum(std::span<const double> v);

/// Mean over the batch axis, shape (T, C).
Matrix batch_mean(const Tensor3& x);

/// Rows [row_begin, row_end) of m.
Matrix row_slice(const Matrix& m, std::size_t row_begin, std::size_t row_end);

struct SpectralNormResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline constexpr int kPowerIterations = 200;
inline constexpr double kPowerTolerance = 1e-10;

/// Largest singular value by power iteration on m^T m from an all-ones start.
/// The Gram matrix is squared after each of the first few steps, which raises
/// the convergence ratio (sigma_2 / sigma_1)^2 to a growing power.
SpectralNormResult spectral_norm_detailed(const Matrix& m, int iters = kPowerIterations,
                                          double tol = kPowerTolerance);
double spectral_norm(const Matrix& m, int iters = kPowerIterations,
                     double tol = kPowerTolerance);

double frobenius_norm(const Matrix& m);
/// Induced 1-norm: maximum absolute column sum.
double one_norm(const Matrix& m);

enum class NormKind { Spectral, Frobenius, One };

double matrix_norm(const Matrix& m, NormKind kind);
std::string_view to_string(NormKind kind);
NormKind parse_norm_kind(std::string_view name);

/// (B, 1, N) -> (B, N / channels, channels). Pure reshape.
Tensor3 patchify(const Tensor3& flat, std::size_t channels);
/// Same, but checks the requested (seq, channels) tiling against N.
Tensor3 patchify(const Tensor3& flat, std::size_t seq, std::size_t channels);
/// (B, T, C) -> (B, 1, T * C).
Tensor3 unpatchify(const Tensor3& x);

}  // namespace gsj
