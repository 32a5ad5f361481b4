#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ntks/linalg.hpp"

namespace ntks {

using Point2 = std::array<double, 2>;

// side x side lattice on [0,1]^2, row-major with y as the outer index.
struct Grid2D {
  std::size_t side = 0;
  std::vector<Point2> points;
};

struct TargetSignal {
  std::size_t side = 0;
  Vector values;  // one per grid point, in [0, 1]
};

enum class TargetKind { freq_mix, step, ramp };

Grid2D make_grid(std::size_t side);

// freq_mix: four plane waves at 1, 4, 16 and 32 cycles per unit with random
// directions and phases, averaged and mapped to [0, 1].
// step: 1 where x >= 0.5. ramp: (x + y) / 2.
TargetSignal synth_target(const Grid2D& grid, TargetKind kind, Rng& rng);

// P2 or P5, maxval <= 65535, square images only. Values scaled to [0, 1].
TargetSignal load_pgm(const std::string& path);
TargetSignal parse_pgm(const std::string& bytes);
// 8-bit P5; values are clamped to [0, 1] first.
void write_pgm(const std::string& path, const TargetSignal& img);
std::string encode_pgm(const TargetSignal& img);

double mse(const Vector& pred, const Vector& truth);
// Peak value 1. Identical inputs give +infinity.
double psnr(const Vector& pred, const Vector& truth);

}  // namespace ntks
