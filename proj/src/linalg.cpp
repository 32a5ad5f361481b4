#include "ntks/linalg.hpp"

#include "ntks/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ntks {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::DegenerateEnergy: return "DegenerateEnergy";
    case ErrorKind::DegenerateKernel: return "DegenerateKernel";
    case ErrorKind::InvalidStepSize: return "InvalidStepSize";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnsupportedShape: return "UnsupportedShape";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

SymMatrix::SymMatrix(Matrix a) : m_(std::move(a)) {
  if (m_.rows() != m_.cols()) throw Error(ErrorKind::InvalidInput, "SymMatrix needs a square matrix");
  const std::size_t n = m_.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (m_(i, j) + m_(j, i));
      m_(i, j) = v;
      m_(j, i) = v;
    }
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * M_PI * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidInput, "Rng::below(0)");
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = next_u64();
  while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

Rng Rng::split(std::uint64_t stream) const {
  std::uint64_t x = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return Rng(splitmix64(x));
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double std) {
  if (!(std > 0.0) || !std::isfinite(std)) throw Error(ErrorKind::InvalidInput, "gaussian_matrix: std must be > 0");
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = std * rng.normal();
  return m;
}

Vector gaussian_vector(Rng& rng, std::size_t n, double std) {
  if (!(std > 0.0) || !std::isfinite(std)) throw Error(ErrorKind::InvalidInput, "gaussian_vector: std must be > 0");
  Vector v(n);
  for (auto& x : v) x = std * rng.normal();
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double norm2(std::span<const double> a) { return dot(a, a); }
double norm(std::span<const double> a) { return std::sqrt(norm2(a)); }
double frobenius_norm(const Matrix& a) { return norm(a.data()); }

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double trace(const SymMatrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) t += a(i, i);
  return t;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) throw Error(ErrorKind::InvalidInput, "matvec: size mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec(const SymMatrix& a, std::span<const double> x) { return matvec(a.matrix(), x); }

Vector matvec_transpose(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows()) throw Error(ErrorKind::InvalidInput, "matvec_transpose: size mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += xi * r[j];
  }
  return y;
}

namespace {

// c[i0:i0+BI, j0:j0+BJ] = a[i0:, :] * b[:, j0:]. Accumulation runs over k in
// order for every entry, so blocking does not change the result.
template <std::size_t BI, std::size_t BJ>
void gemm_block(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i0, std::size_t j0) {
  const std::size_t q = a.cols(), s = b.cols();
  double acc[BI][BJ] = {};
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t k = 0; k < q; ++k) {
    const double* bk = bd + k * s + j0;
    for (std::size_t ii = 0; ii < BI; ++ii) {
      const double av = ad[(i0 + ii) * q + k];
      for (std::size_t jj = 0; jj < BJ; ++jj) acc[ii][jj] += av * bk[jj];
    }
  }
  for (std::size_t ii = 0; ii < BI; ++ii)
    for (std::size_t jj = 0; jj < BJ; ++jj) c(i0 + ii, j0 + jj) = acc[ii][jj];
}

void gemm_edge(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i0, std::size_t i1, std::size_t j0,
               std::size_t j1) {
  for (std::size_t i = i0; i < i1; ++i)
    for (std::size_t j = j0; j < j1; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::InvalidInput, "matmul: size mismatch");
  constexpr std::size_t BI = 4, BJ = 4;
  const std::size_t p = a.rows(), s = b.cols();
  Matrix c(p, s);
  const std::size_t iblocks = (p + BI - 1) / BI;
  parallel_for(iblocks, [&](std::size_t blk) {
    const std::size_t i0 = blk * BI, i1 = std::min(p, i0 + BI);
    const std::size_t jfull = s - s % BJ;
    if (i1 - i0 == BI) {
      for (std::size_t j0 = 0; j0 < jfull; j0 += BJ) gemm_block<BI, BJ>(a, b, c, i0, j0);
    } else {
      gemm_edge(a, b, c, i0, i1, 0, jfull);
    }
    gemm_edge(a, b, c, i0, i1, jfull, s);
  });
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::InvalidInput, "matmul_nt: size mismatch");
  return matmul(a, b.transpose());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::InvalidInput, "matmul_tn: size mismatch");
  return matmul(a.transpose(), b);
}

Matrix reconstruct(const SpectralDecomposition& d) {
  const std::size_t n = d.eigenvalues.size();
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = d.eigenvalues[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = lam * d.eigenvectors(i, k);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vi * d.eigenvectors(j, k);
    }
  }
  return out;
}

// Cyclic Jacobi. Rows p and q of the working copy are rotated in place and
// mirrored into the columns, so every inner loop runs over contiguous memory.
// Eigenvectors are accumulated as rows of vt and transposed at the end.
SpectralDecomposition sym_eigendecompose(const SymMatrix& input) {
  const std::size_t n = input.size();
  for (double v : input.matrix().data())
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "sym_eigendecompose: non-finite entry");

  Matrix a = input.matrix();
  Matrix vt = Matrix::identity(n);
  const double fro = frobenius_norm(a);
  const double tol = 1e-12 * fro;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < 100 && fro > 0.0; ++sweep) {
    if (off_norm() <= tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        // Skip rotations whose effect is below the diagonal's resolution.
        if (std::abs(apq) < 1e-300 ||
            (sweep > 3 && std::abs(apq) * 1e18 < std::abs(app) && std::abs(apq) * 1e18 < std::abs(aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        auto rp = a.row(p);
        auto rq = a.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = rp[k], akq = rq[k];
          rp[k] = c * akp - s * akq;
          rq[k] = s * akp + c * akq;
        }
        rp[p] = app - t * apq;
        rq[q] = aqq + t * apq;
        rp[q] = 0.0;
        rq[p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          a(k, p) = rp[k];
          a(k, q) = rq[k];
        }

        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vp[k], y = vq[k];
          vp[k] = c * x - s * y;
          vq[k] = s * x + c * y;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SpectralDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    auto v = vt.row(order[k]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = v[i];
  }
  return out;
}

double operator_norm(const SymMatrix& a) {
  if (a.size() == 0) return 0.0;
  const auto d = sym_eigendecompose(a);
  return std::max(std::abs(d.eigenvalues.front()), std::abs(d.eigenvalues.back()));
}

}  // namespace ntks
