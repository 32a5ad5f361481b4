#include "ntks/encoding.hpp"

#include <cmath>

namespace ntks {

namespace {

void check_encoder_args(std::size_t d, double bandwidth) {
  if (d < 2 || d % 2 != 0) throw Error(ErrorKind::InvalidInput, "rff: d must be even and >= 2");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw Error(ErrorKind::InvalidInput, "rff: bandwidth must be > 0");
}

// Welford accumulator.
struct Running {
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  McEstimate result() const {
    McEstimate e;
    e.mean = mean;
    e.draws = n;
    e.std_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return e;
  }
};

}  // namespace

RffEncoder make_rff_encoder(Rng& rng, std::size_t input_dim, std::size_t d, double bandwidth) {
  check_encoder_args(d, bandwidth);
  if (input_dim == 0) throw Error(ErrorKind::InvalidInput, "rff: input_dim must be >= 1");
  RffEncoder e;
  e.frequencies = gaussian_matrix(rng, d / 2, input_dim, bandwidth);
  e.bandwidth = bandwidth;
  e.dim = d;
  return e;
}

Vector RffEncoder::encode(std::span<const double> x) const {
  if (x.size() != frequencies.cols()) throw Error(ErrorKind::InvalidInput, "rff: input dimension mismatch");
  const double scale = std::sqrt(2.0 / static_cast<double>(dim));
  Vector out(dim);
  for (std::size_t k = 0; k < frequencies.rows(); ++k) {
    const double ph = 2.0 * M_PI * dot(frequencies.row(k), x);
    out[2 * k] = scale * std::cos(ph);
    out[2 * k + 1] = scale * std::sin(ph);
  }
  return out;
}

SymMatrix gram(const Matrix& rows) {
  const std::size_t n = rows.rows();
  SymMatrix g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) g.set(i, j, dot(rows.row(i), rows.row(j)));
  return g;
}

EncodedDataset build_dataset(const std::vector<Point2>& points, const Vector& targets, const RffEncoder* enc) {
  if (points.size() != targets.size()) throw Error(ErrorKind::InvalidInput, "build_dataset: size mismatch");
  EncodedDataset ds;
  ds.points = points;
  ds.targets = targets;
  ds.encoded = enc != nullptr;
  const std::size_t d = enc ? enc->dim : 2;
  ds.inputs = Matrix(points.size(), d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (enc) {
      const Vector e = enc->encode(points[i]);
      std::copy(e.begin(), e.end(), ds.inputs.row(i).begin());
    } else {
      ds.inputs(i, 0) = points[i][0];
      ds.inputs(i, 1) = points[i][1];
    }
  }
  ds.rho = gram(ds.inputs);
  return ds;
}

double raw_tau_x(std::span<const double> xi, std::span<const double> xj) {
  if (xi.size() != xj.size()) throw Error(ErrorKind::InvalidInput, "tau_x: dimension mismatch");
  const double ni = norm2(xi), nj = norm2(xj);
  if (ni == 0.0 || nj == 0.0) throw Error(ErrorKind::DegenerateInput, "tau_x: zero-norm input");
  const double r = dot(xi, xj);
  return r * r / (ni * nj);
}

double encoded_tau_x(const RffEncoder& enc, std::span<const double> xi, std::span<const double> xj) {
  const Vector a = enc.encode(xi), b = enc.encode(xj);
  return raw_tau_x(a, b);
}

double kappa(double bandwidth, double delta_norm) {
  return std::exp(-2.0 * M_PI * M_PI * bandwidth * bandwidth * delta_norm * delta_norm);
}

double second_moment(std::size_t d, double bandwidth, double delta_norm) {
  check_encoder_args(d, bandwidth);
  const double dd = static_cast<double>(d);
  const double q = M_PI * M_PI * bandwidth * bandwidth * delta_norm * delta_norm;
  return (1.0 + std::exp(-8.0 * q)) / dd + (1.0 - 2.0 / dd) * std::exp(-4.0 * q);
}

double avg_offdiag_tau(const Grid2D& grid, std::size_t d, double bandwidth) {
  const auto& p = grid.points;
  const std::size_t n = p.size();
  if (n < 2) throw Error(ErrorKind::InvalidInput, "avg_offdiag_tau: need >= 2 points");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      s += second_moment(d, bandwidth, std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]));
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double raw_avg_offdiag_tau(const Grid2D& grid) {
  std::vector<Point2> pts;
  for (const auto& q : grid.points)
    if (q[0] != 0.0 || q[1] != 0.0) pts.push_back(q);
  const std::size_t n = pts.size();
  if (n < 2) throw Error(ErrorKind::InvalidInput, "raw_avg_offdiag_tau: need >= 2 non-origin points");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += raw_tau_x(pts[i], pts[j]);
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

McEstimate mc_kappa(Rng& rng, double bandwidth, double delta_norm, std::size_t draws) {
  Running acc;
  for (std::size_t t = 0; t < draws; ++t) {
    // Isotropy: only the component of b along delta matters.
    const double b = bandwidth * rng.normal();
    acc.add(std::cos(2.0 * M_PI * b * delta_norm));
  }
  return acc.result();
}

McEstimate mc_second_moment(Rng& rng, std::size_t d, double bandwidth, double delta_norm, std::size_t draws) {
  check_encoder_args(d, bandwidth);
  Running acc;
  const std::size_t half = d / 2;
  for (std::size_t t = 0; t < draws; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < half; ++k) s += std::cos(2.0 * M_PI * bandwidth * rng.normal() * delta_norm);
    const double r = s / static_cast<double>(half);
    acc.add(r * r);
  }
  return acc.result();
}

McEstimate mc_avg_offdiag_tau(Rng& rng, const Grid2D& grid, std::size_t d, double bandwidth, std::size_t draws) {
  const std::size_t n = grid.points.size();
  if (n < 2) throw Error(ErrorKind::InvalidInput, "mc_avg_offdiag_tau: need >= 2 points");
  Running acc;
  for (std::size_t t = 0; t < draws; ++t) {
    const RffEncoder enc = make_rff_encoder(rng, 2, d, bandwidth);
    const EncodedDataset ds = build_dataset(grid.points, Vector(n, 0.0), &enc);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += ds.rho(i, j) * ds.rho(i, j);
    acc.add(2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1)));
  }
  return acc.result();
}

}  // namespace ntks
