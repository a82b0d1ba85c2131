#include "gsj/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "gsj/errors.hpp"

namespace gsj {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix payload has " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(rows * cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) {
    throw DimensionError("matrix product: inner dimensions " + std::to_string(cols_) +
                         " and " + std::to_string(rhs.rows_) + " differ");
  }
  Matrix out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      if (a == 0.0) continue;
      auto brow = rhs.row(k);
      for (std::size_t j = 0; j < rhs.cols_; ++j) orow[j] += a * brow[j];
    }
  }
  return out;
}

Matrix& Matrix::operator*=(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Tensor3::Tensor3(std::size_t batch, std::size_t seq, std::size_t channels, double fill)
    : batch_(batch), seq_(seq), channels_(channels), data_(batch * seq * channels, fill) {}

Tensor3::Tensor3(std::size_t batch, std::size_t seq, std::size_t channels,
                 std::vector<double> data)
    : batch_(batch), seq_(seq), channels_(channels), data_(std::move(data)) {
  if (data_.size() != batch * seq * channels) {
    throw DimensionError("tensor payload has " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(batch * seq * channels));
  }
}

namespace {

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* op) {
  if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": tensor shapes differ");
}

}  // namespace

Tensor3& Tensor3::operator+=(const Tensor3& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double a) {
  for (double& v : data_) v *= a;
  return *this;
}

Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }

Tensor3 reverse_sequence(const Tensor3& x) {
  Tensor3 out(x.batch(), x.seq(), x.channels());
  const std::size_t T = x.seq();
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t t = 0; t < T; ++t) std::ranges::copy(x.row(b, t), out.row(b, T - 1 - t).begin());
  return out;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) {
    if (std::isnan(x)) return x;
    m = std::max(m, std::abs(x));
  }
  return m;
}

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = std::abs(da[i] - db[i]);
    if (std::isnan(d)) return d;
    m = std::max(m, d);
  }
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::ranges::all_of(v, [](double x) { return std::isfinite(x); });
}

double stable_sum(std::span<const double> v) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : v) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

Matrix batch_mean(const Tensor3& x) {
  if (x.batch() == 0) throw DimensionError("batch_mean: empty batch");
  Matrix out(x.seq(), x.channels());
  std::vector<double> column(x.batch());
  const double inv = 1.0 / static_cast<double>(x.batch());
  for (std::size_t t = 0; t < x.seq(); ++t) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      for (std::size_t b = 0; b < x.batch(); ++b) column[b] = x(b, t, c);
      out(t, c) = stable_sum(column) * inv;
    }
  }
  return out;
}

Matrix row_slice(const Matrix& m, std::size_t row_begin, std::size_t row_end) {
  if (row_begin > row_end || row_end > m.rows()) throw DimensionError("row_slice: bad range");
  Matrix out(row_end - row_begin, m.cols());
  for (std::size_t r = row_begin; r < row_end; ++r)
    std::ranges::copy(m.row(r), out.row(r - row_begin).begin());
  return out;
}

namespace {

double norm2(std::span<const double> v) {
  double scale = max_abs(v);
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] / scale) * (v[i] / scale);
  return scale * std::sqrt(stable_sum(sq));
}

void mat_vec(const Matrix& m, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
}

Matrix scaled_square(const Matrix& a) {
  Matrix sq = a * a;
  const double s = max_abs(sq.data());
  if (s > 0.0 && std::isfinite(s)) sq *= 1.0 / s;
  return sq;
}

// Squarings of the Gram matrix allowed per run; each doubles the exponent.
constexpr int kMaxSquarings = 8;

// Power iteration on A = (m^T m)^(2^j), squaring A after every step up to
// kMaxSquarings times. sigma is always ||m v|| for the current unit v.
// Returns false if the iterate collapsed to zero (start orthogonal to the
// dominant subspace).
bool power_iterate(const Matrix& m, const Matrix& gram, std::vector<double> v, int iters,
                   double tol, SpectralNormResult& res) {
  std::vector<double> mv(m.rows()), av(v.size());
  Matrix a = gram;
  double prev = -1.0;
  double n = norm2(v);
  if (n == 0.0) return false;
  for (double& x : v) x /= n;
  for (int k = 1; k <= iters; ++k) {
    mat_vec(a, v, av);
    n = norm2(av);
    if (n == 0.0) return false;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] / n;
    mat_vec(m, v, mv);
    const double sigma = norm2(mv);
    res.value = sigma;
    res.iterations = k;
    if (prev >= 0.0 && std::abs(sigma - prev) <= tol * sigma) {
      res.converged = true;
      return true;
    }
    prev = sigma;
    if (k <= kMaxSquarings) a = scaled_square(a);
  }
  res.converged = false;
  return true;
}

}  // namespace

SpectralNormResult spectral_norm_detailed(const Matrix& m, int iters, double tol) {
  if (m.empty()) throw DimensionError("spectral_norm: empty matrix");
  if (iters < 1) throw std::invalid_argument("spectral_norm: iters must be >= 1");
  SpectralNormResult res;
  if (max_abs(m.data()) == 0.0) {
    res.converged = true;
    res.iterations = 1;
    return res;
  }
  Matrix gram = m.transposed() * m;
  gram *= 1.0 / max_abs(gram.data());
  if (power_iterate(m, gram, std::vector<double>(m.cols(), 1.0), iters, tol, res)) return res;
  // All-ones start lies in the null space; fall back to a fixed pseudo-random start.
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(m.cols());
  for (double& x : v) x = dist(rng);
  if (power_iterate(m, gram, std::move(v), iters, tol, res)) return res;
  return SpectralNormResult{0.0, true, 1};
}

double spectral_norm(const Matrix& m, int iters, double tol) {
  return spectral_norm_detailed(m, iters, tol).value;
}

double frobenius_norm(const Matrix& m) {
  if (m.empty()) throw DimensionError("frobenius_norm: empty matrix");
  return norm2(m.data());
}

double one_norm(const Matrix& m) {
  if (m.empty()) throw DimensionError("one_norm: empty matrix");
  double best = 0.0;
  std::vector<double> column(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) column[r] = std::abs(m(r, c));
    best = std::max(best, stable_sum(column));
  }
  return best;
}

double matrix_norm(const Matrix& m, NormKind kind) {
  switch (kind) {
    case NormKind::Spectral: return spectral_norm(m);
    case NormKind::Frobenius: return frobenius_norm(m);
    case NormKind::One: return one_norm(m);
  }
  return 0.0;
}

std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::Spectral: return "spectral";
    case NormKind::Frobenius: return "frobenius";
    case NormKind::One: return "one";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view name) {
  if (name == "spectral") return NormKind::Spectral;
  if (name == "frobenius") return NormKind::Frobenius;
  if (name == "one") return NormKind::One;
  throw ParseError("unknown norm '" + std::string(name) + "'");
}

Tensor3 patchify(const Tensor3& flat, std::size_t channels) {
  if (flat.seq() != 1) throw DimensionError("patchify: expected a (B, 1, N) tensor");
  if (channels == 0 || flat.channels() % channels != 0) {
    throw DimensionError("patchify: " + std::to_string(flat.channels()) +
                         " entries do not split into patches of " + std::to_string(channels));
  }
  return patchify(flat, flat.channels() / channels, channels);
}

Tensor3 patchify(const Tensor3& flat, std::size_t seq, std::size_t channels) {
  if (flat.seq() != 1) throw DimensionError("patchify: expected a (B, 1, N) tensor");
  if (seq == 0 || channels == 0 || seq * channels != flat.channels()) {
    throw DimensionError("patchify: " + std::to_string(seq) + "x" + std::to_string(channels) +
                         " does not tile " + std::to_string(flat.channels()) + " entries");
  }
  return Tensor3(flat.batch(), seq, channels, {flat.data().begin(), flat.data().end()});
}

Tensor3 unpatchify(const Tensor3& x) {
  return Tensor3(x.batch(), 1, x.seq() * x.channels(), {x.data().begin(), x.data().end()});
}

}  // namespace gsj
