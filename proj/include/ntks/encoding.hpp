#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ntks/linalg.hpp"
#include "ntks/signals.hpp"

namespace ntks {

// Random Fourier features gamma(x) = sqrt(2/d) [cos 2 pi b_k.x, sin 2 pi b_k.x]_k
// with rows b_k ~ N(0, bandwidth^2 I). Cos/sin pairs are interleaved per row,
// so ||gamma(x)|| = 1 for every x.
struct RffEncoder {
  Matrix frequencies;  // (d/2) x input_dim
  double bandwidth = 10.0;
  std::size_t dim = 256;

  Vector encode(std::span<const double> x) const;
};

RffEncoder make_rff_encoder(Rng& rng, std::size_t input_dim = 2, std::size_t d = 256, double bandwidth = 10.0);

// Network inputs for a set of samples, encoded or raw.
struct EncodedDataset {
  std::vector<Point2> points;
  Matrix inputs;  // n x d, row i is x~_i
  Vector targets;
  SymMatrix rho;  // x~_i . x~_j
  bool encoded = false;

  std::size_t size() const { return inputs.rows(); }
  std::size_t dim() const { return inputs.cols(); }
};

// enc == nullptr keeps raw coordinates.
EncodedDataset build_dataset(const std::vector<Point2>& points, const Vector& targets, const RffEncoder* enc);
SymMatrix gram(const Matrix& rows);

// rho_ij^2 / (rho_ii rho_jj); zero norm raises DegenerateInput.
double raw_tau_x(std::span<const double> xi, std::span<const double> xj);
double encoded_tau_x(const RffEncoder& enc, std::span<const double> xi, std::span<const double> xj);

// Closed forms over the draw of the frequency matrix.
double kappa(double bandwidth, double delta_norm);
double second_moment(std::size_t d, double bandwidth, double delta_norm);
// Mean of the expected encoded tau_x over ordered off-diagonal grid pairs.
double avg_offdiag_tau(const Grid2D& grid, std::size_t d, double bandwidth);
// Same average on raw coordinates; the origin is excluded because its norm is 0.
double raw_avg_offdiag_tau(const Grid2D& grid);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t draws = 0;
};

McEstimate mc_kappa(Rng& rng, double bandwidth, double delta_norm, std::size_t draws);
McEstimate mc_second_moment(Rng& rng, std::size_t d, double bandwidth, double delta_norm, std::size_t draws);
McEstimate mc_avg_offdiag_tau(Rng& rng, const Grid2D& grid, std::size_t d, double bandwidth, std::size_t draws);

}  // namespace ntks
