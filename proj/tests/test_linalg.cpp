#include <doctest.h>

#include <cmath>
#include <limits>

#include "ntks/linalg.hpp"
#include "ntks/parallel.hpp"

#ifdef NTKS_HAVE_EIGEN
#include <Eigen/Dense>
#endif

using namespace ntks;

namespace {

SymMatrix random_sym(Rng& rng, std::size_t n) {
  return SymMatrix(gaussian_matrix(rng, n, n, 1.0));
}

SymMatrix random_psd(Rng& rng, std::size_t n) {
  const Matrix b = gaussian_matrix(rng, n, n + 2, 1.0);
  return SymMatrix(matmul_nt(b, b));
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double r = 0.0;
  for (std::size_t q = 0; q < a.data().size(); ++q) r = std::max(r, std::abs(a.data()[q] - b.data()[q]));
  return r;
}

}  // namespace

TEST_CASE("identity and diagonal spectra") {
  auto d = sym_eigendecompose(SymMatrix(Matrix::identity(3)));
  for (double l : d.eigenvalues) CHECK(l == doctest::Approx(1.0));

  Matrix m(3, 3);
  m(0, 0) = 3;
  m(1, 1) = 1;
  m(2, 2) = 2;
  d = sym_eigendecompose(SymMatrix(m));
  CHECK(d.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(d.eigenvalues[1] == doctest::Approx(2.0));
  CHECK(d.eigenvalues[2] == doctest::Approx(1.0));
}

TEST_CASE("reconstruction and orthogonality on random symmetric matrices") {
  Rng rng(11);
  for (std::size_t n : {1u, 2u, 8u, 33u}) {
    const SymMatrix a = random_sym(rng, n);
    const auto d = sym_eigendecompose(a);
    const Matrix vtv = matmul(d.eigenvectors.transpose(), d.eigenvectors);
    CHECK(max_abs_diff(vtv, Matrix::identity(n)) <= 1e-9);
    const double scale = std::max(1.0, max_abs(a.matrix().data()));
    CHECK(max_abs_diff(reconstruct(d), a.matrix()) <= 1e-9 * scale);
    for (std::size_t k = 1; k < n; ++k) CHECK(d.eigenvalues[k - 1] >= d.eigenvalues[k]);

    double sum = 0, sq = 0;
    for (double l : d.eigenvalues) {
      sum += l;
      sq += l * l;
    }
    CHECK(std::abs(sum - trace(a)) <= 1e-9 * std::max(1.0, std::abs(trace(a))) * n);
    const double f = frobenius_norm(a.matrix());
    CHECK(std::abs(sq - f * f) <= 1e-9 * f * f);
  }
}

TEST_CASE("PSD input has no significantly negative eigenvalue") {
  Rng rng(5);
  const SymMatrix a = random_psd(rng, 20);
  const auto d = sym_eigendecompose(a);
  CHECK(d.eigenvalues.back() >= -1e-9 * max_abs(a.matrix().data()));
}

#ifdef NTKS_HAVE_EIGEN
TEST_CASE("eigenvalues agree with Eigen's self-adjoint solver") {
  Rng rng(99);
  for (std::size_t n : {3u, 10u, 40u}) {
    const SymMatrix a = random_sym(rng, n);
    Eigen::MatrixXd e(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) e(i, j) = a(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e);
    const auto d = sym_eigendecompose(a);
    for (std::size_t k = 0; k < n; ++k)
      CHECK(d.eigenvalues[k] == doctest::Approx(es.eigenvalues()(n - 1 - k)).epsilon(1e-10).scale(1.0));
  }
}
#endif

TEST_CASE("non-finite input is rejected") {
  Matrix m(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sym_eigendecompose(SymMatrix(m)), Error);
  try {
    sym_eigendecompose(SymMatrix(m));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
}

TEST_CASE("operator norm") {
  Matrix m(2, 2);
  m(0, 0) = -3;
  m(1, 1) = 2;
  CHECK(operator_norm(SymMatrix(m)) == doctest::Approx(3.0));
  CHECK(operator_norm(SymMatrix(Matrix::identity(5))) == doctest::Approx(1.0));

  Rng rng(3);
  const SymMatrix p = random_psd(rng, 6);
  CHECK(std::abs(operator_norm(p) - sym_eigendecompose(p).eigenvalues.front()) <= 1e-10);
}

TEST_CASE("gaussian sampling moments") {
  Rng rng(1234);
  const Matrix g = gaussian_matrix(rng, 1000, 1000, 1.0);
  double mean = 0;
  for (double v : g.data()) mean += v;
  mean /= g.data().size();
  CHECK(std::abs(mean) < 5e-3);

  const Vector h = gaussian_vector(rng, 1000000, 2.0);
  double m1 = 0, m2 = 0;
  for (double v : h) {
    m1 += v;
    m2 += v * v;
  }
  m1 /= h.size();
  const double var = m2 / h.size() - m1 * m1;
  CHECK(std::abs(var - 4.0) < 0.02 * 4.0);

  CHECK_THROWS_AS(gaussian_matrix(rng, 2, 2, 0.0), Error);
  CHECK_THROWS_AS(gaussian_vector(rng, 2, -1.0), Error);
}

TEST_CASE("rng determinism and splitting") {
  Rng a(42), b(42);
  CHECK(gaussian_matrix(a, 7, 5, 1.0).data() == gaussian_matrix(b, 7, 5, 1.0).data());
  Rng base(42);
  Rng c1 = base.split(1), c1b = base.split(1), c2 = base.split(2);
  const auto x = c1.next_u64();
  CHECK(x == c1b.next_u64());
  CHECK(x != c2.next_u64());

  // below() stays in range and hits every value
  Rng r(8);
  std::vector<int> hits(5, 0);
  for (int t = 0; t < 5000; ++t) ++hits[r.below(5)];
  for (int h : hits) CHECK(h > 800);
}

TEST_CASE("matrix products against naive loops") {
  Rng rng(21);
  for (auto [p, q, s] : {std::tuple{1u, 1u, 1u}, {3u, 5u, 7u}, {9u, 4u, 17u}, {16u, 33u, 8u}}) {
    const Matrix a = gaussian_matrix(rng, p, q, 1.0);
    const Matrix b = gaussian_matrix(rng, q, s, 1.0);
    Matrix ref(p, s);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < s; ++j)
        for (std::size_t k = 0; k < q; ++k) ref(i, j) += a(i, k) * b(k, j);
    CHECK(max_abs_diff(matmul(a, b), ref) <= 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, b.transpose()), ref) <= 1e-12);
    CHECK(max_abs_diff(matmul_tn(a.transpose(), b), ref) <= 1e-12);

    const Vector x = gaussian_vector(rng, q, 1.0);
    const Vector y = matvec(a, x);
    for (std::size_t i = 0; i < p; ++i) {
      double acc = 0;
      for (std::size_t k = 0; k < q; ++k) acc += a(i, k) * x[k];
      CHECK(y[i] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), Error);
}

TEST_CASE("SymMatrix symmetrizes on construction") {
  Matrix m(2, 2);
  m(0, 1) = 1.0;
  m(1, 0) = 3.0;
  const SymMatrix s(m);
  CHECK(s(0, 1) == 2.0);
  CHECK(s(1, 0) == 2.0);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> seen(1000, 0);
  parallel_for(seen.size(), [&](std::size_t i) { seen[i] += 1; });
  for (int v : seen) CHECK(v == 1);
  CHECK_THROWS(parallel_for(10, [](std::size_t i) {
    if (i == 3) throw Error(ErrorKind::InvalidInput, "boom");
  }));
}
