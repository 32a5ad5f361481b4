#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ntks/error.hpp"

namespace ntks {

using Vector = std::vector<double>;

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  static Matrix identity(std::size_t n);
  Matrix transpose() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Square matrix that is symmetric by construction: the input is replaced by
// (A + A^T) / 2.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n) : m_(n, n) {}
  explicit SymMatrix(Matrix a);

  std::size_t size() const { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  // Writes both (i, j) and (j, i).
  void set(std::size_t i, std::size_t j, double v) {
    m_(i, j) = v;
    m_(j, i) = v;
  }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

struct SpectralDecomposition {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // column k pairs with eigenvalues[k]
};

// xoshiro256** seeded through splitmix64; normals by Box-Muller.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();
  std::size_t below(std::size_t n);  // uniform integer in [0, n)
  // Independent child stream; same (seed, stream) always gives the same child.
  Rng split(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double std);
Vector gaussian_vector(Rng& rng, std::size_t n, double std);

SpectralDecomposition sym_eigendecompose(const SymMatrix& a);
double operator_norm(const SymMatrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);  // squared Euclidean norm
double norm(std::span<const double> a);
double frobenius_norm(const Matrix& a);
double max_abs(std::span<const double> a);
double trace(const SymMatrix& a);
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec(const SymMatrix& a, std::span<const double> x);
Vector matvec_transpose(const Matrix& a, std::span<const double> x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
// V diag(lambda) V^T from a decomposition.
Matrix reconstruct(const SpectralDecomposition& d);

}  // namespace ntks
