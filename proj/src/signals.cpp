#include "ntks/signals.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ntks {

Grid2D make_grid(std::size_t side) {
  if (side == 0) throw Error(ErrorKind::InvalidInput, "make_grid: side must be >= 1");
  Grid2D g;
  g.side = side;
  g.points.reserve(side * side);
  const double step = side > 1 ? 1.0 / static_cast<double>(side - 1) : 0.0;
  for (std::size_t iy = 0; iy < side; ++iy)
    for (std::size_t ix = 0; ix < side; ++ix)
      g.points.push_back({static_cast<double>(ix) * step, static_cast<double>(iy) * step});
  return g;
}

TargetSignal synth_target(const Grid2D& grid, TargetKind kind, Rng& rng) {
  TargetSignal t;
  t.side = grid.side;
  t.values.resize(grid.points.size());
  switch (kind) {
    case TargetKind::ramp:
      for (std::size_t i = 0; i < grid.points.size(); ++i)
        t.values[i] = 0.5 * (grid.points[i][0] + grid.points[i][1]);
      break;
    case TargetKind::step:
      for (std::size_t i = 0; i < grid.points.size(); ++i) t.values[i] = grid.points[i][0] >= 0.5 ? 1.0 : 0.0;
      break;
    case TargetKind::freq_mix: {
      constexpr double freqs[4] = {1.0, 4.0, 16.0, 32.0};
      double dir[4][2], phase[4];
      for (int k = 0; k < 4; ++k) {
        const double th = 2.0 * M_PI * rng.uniform();
        dir[k][0] = std::cos(th);
        dir[k][1] = std::sin(th);
        phase[k] = 2.0 * M_PI * rng.uniform();
      }
      for (std::size_t i = 0; i < grid.points.size(); ++i) {
        const auto& p = grid.points[i];
        double s = 0.0;
        for (int k = 0; k < 4; ++k)
          s += std::sin(2.0 * M_PI * freqs[k] * (dir[k][0] * p[0] + dir[k][1] * p[1]) + phase[k]);
        t.values[i] = std::clamp(0.5 + s / 8.0, 0.0, 1.0);
      }
      break;
    }
    default:
      throw Error(ErrorKind::InvalidInput, "synth_target: unknown target kind");
  }
  return t;
}

namespace {

class PgmReader {
 public:
  explicit PgmReader(const std::string& b) : b_(b) {}

  void skip_ws_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* what) {
    skip_ws_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(static_cast<unsigned char>(b_[pos_])))
      throw Error(ErrorKind::ParseError, std::string("pgm: expected ") + what);
    unsigned long v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(b_[pos_] - '0');
      if (v > 100000000UL) throw Error(ErrorKind::ParseError, std::string("pgm: ") + what + " too large");
      ++pos_;
    }
    return v;
  }

  std::size_t pos_ = 0;
  const std::string& b_;
};

}  // namespace

TargetSignal parse_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5'))
    throw Error(ErrorKind::ParseError, "pgm: bad magic (want P2 or P5)");
  const bool binary = bytes[1] == '5';
  PgmReader r(bytes);
  r.pos_ = 2;
  const unsigned long w = r.number("width");
  const unsigned long h = r.number("height");
  const unsigned long maxval = r.number("maxval");
  if (w == 0 || h == 0) throw Error(ErrorKind::ParseError, "pgm: zero dimension");
  if (maxval == 0 || maxval > 65535) throw Error(ErrorKind::ParseError, "pgm: maxval out of range");
  if (w != h) throw Error(ErrorKind::UnsupportedShape, "pgm: image must be square");

  TargetSignal t;
  t.side = w;
  t.values.resize(w * h);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (binary) {
    if (r.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos_])))
      throw Error(ErrorKind::ParseError, "pgm: missing separator before raster");
    std::size_t p = r.pos_ + 1;
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (bytes.size() < p + w * h * bpp) throw Error(ErrorKind::ParseError, "pgm: truncated raster");
    for (std::size_t i = 0; i < w * h; ++i) {
      unsigned long v = static_cast<unsigned char>(bytes[p]);
      if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[p + 1]);
      p += bpp;
      if (v > maxval) throw Error(ErrorKind::ParseError, "pgm: sample exceeds maxval");
      t.values[i] = static_cast<double>(v) * scale;
    }
  } else {
    for (std::size_t i = 0; i < w * h; ++i) {
      const unsigned long v = r.number("sample");
      if (v > maxval) throw Error(ErrorKind::ParseError, "pgm: sample exceeds maxval");
      t.values[i] = static_cast<double>(v) * scale;
    }
  }
  return t;
}

TargetSignal load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pgm(ss.str());
}

std::string encode_pgm(const TargetSignal& img) {
  if (img.values.size() != img.side * img.side) throw Error(ErrorKind::InvalidInput, "encode_pgm: size mismatch");
  std::string out = "P5\n" + std::to_string(img.side) + " " + std::to_string(img.side) + "\n255\n";
  for (double v : img.values) {
    const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

void write_pgm(const std::string& path, const TargetSignal& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  const std::string bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double mse(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size()) throw Error(ErrorKind::InvalidInput, "mse: length mismatch");
  if (pred.empty()) throw Error(ErrorKind::InvalidInput, "mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double psnr(const Vector& pred, const Vector& truth) {
  const double e = mse(pred, truth);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

}  // namespace ntks
