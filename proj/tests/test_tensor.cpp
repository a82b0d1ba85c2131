#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gsj/errors.hpp"
#include "gsj/tensor.hpp"
#include "oracles.hpp"

using namespace gsj;

TEST_CASE("matrix product and transpose") {
  const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix b = a.transposed();
  CHECK(b.rows() == 3);
  CHECK(b(2, 1) == 6);
  const Matrix p = a * b;
  CHECK(p(0, 0) == 14);
  CHECK(p(0, 1) == 32);
  CHECK(p(1, 1) == 77);
  CHECK(Matrix::identity(3) * b == b);
}

TEST_CASE("reverse_sequence twice is the identity") {
  const Tensor3 x = standard_normal(1, 3, 7, 2);
  const Tensor3 r = reverse_sequence(x);
  CHECK(r(1, 0, 1) == x(1, 6, 1));
  CHECK(reverse_sequence(r) == x);
}

TEST_CASE("stable_sum agrees with an extended precision sum") {
  std::vector<double> v;
  for (int i = 0; i < 10000; ++i) v.push_back((i % 2 ? 1.0 : -1.0) * (1e8 + 0.1 * i) + 1e-3);
  const double ref = static_cast<double>(oracle::naive_sum(v));
  CHECK(std::abs(stable_sum(v) - ref) <= 1e-9 * std::abs(ref));
  CHECK(stable_sum(std::vector<double>{1e16, 1.0, -1e16}) == 1.0);
}

TEST_CASE("batch_mean averages over the batch axis") {
  Tensor3 x(2, 2, 1, {1.0, 2.0, 3.0, 6.0});
  const Matrix m = batch_mean(x);
  CHECK(m(0, 0) == 2.0);
  CHECK(m(1, 0) == 4.0);
}

TEST_CASE("spectral norm matches a Jacobi SVD") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t r = 3 + seed * 5, c = 2 + seed * 6;
    const Matrix m = oracle::random_matrix(seed, r, c);
    const double ref = oracle::svd_max(m);
    CHECK(std::abs(spectral_norm(m) - ref) <= 1e-9 * std::max(1.0, ref));
  }
}

TEST_CASE("spectral norm edge cases") {
  CHECK(spectral_norm(Matrix(4, 4)) == 0.0);
  CHECK(spectral_norm(Matrix::identity(5)) == doctest::Approx(1.0).epsilon(1e-14));
  // Rank one: outer product u v^T has norm |u||v|.
  Matrix m(3, 2, {1, 2, 2, 4, -2, -4});
  CHECK(spectral_norm(m) == doctest::Approx(3.0 * std::sqrt(5.0)).epsilon(1e-12));
  // All-ones start is orthogonal to the top singular vector here.
  Matrix orth(2, 2, {1, -1, -1, 1});
  CHECK(spectral_norm(orth) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("frobenius and induced one-norm") {
  Matrix m(2, 2, {3, -4, 0, 0});
  CHECK(frobenius_norm(m) == 5.0);
  CHECK(one_norm(m) == 4.0);
  CHECK(matrix_norm(m, NormKind::One) == 4.0);
  CHECK(parse_norm_kind("frobenius") == NormKind::Frobenius);
  CHECK_THROWS_AS(parse_norm_kind("max"), ParseError);
}

TEST_CASE("patchify is a pure reshape") {
  const Tensor3 flat = standard_normal(3, 2, 1, 12);
  const Tensor3 p = patchify(flat, 3);
  CHECK(p.seq() == 4);
  CHECK(p(1, 2, 1) == flat(1, 0, 7));
  CHECK(unpatchify(p) == flat);
  CHECK_THROWS_AS(patchify(flat, 5), DimensionError);
  CHECK_THROWS_AS(patchify(flat, 5, 3), DimensionError);
}

TEST_CASE("row_slice and shape checks") {
  const Matrix m(4, 2, {0, 1, 2, 3, 4, 5, 6, 7});
  const Matrix s = row_slice(m, 1, 3);
  CHECK(s.rows() == 2);
  CHECK(s(0, 0) == 2);
  CHECK(s(1, 1) == 5);
  CHECK_THROWS_AS(Tensor3(1, 2, 2) + Tensor3(1, 2, 3), DimensionError);
}
