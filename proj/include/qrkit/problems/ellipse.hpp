#pragma once

// Ellipse fitting with one latent angle per point.
//
// Parameters x = (t_1, ..., t_N, cx, cy, a, b, phi). Residual pair i is
//   p_i - (c + Rot(phi) (a cos t_i, b sin t_i)),
// so the Jacobian is [block diagonal of N 2x1 blocks | dense 2N x 5].

#include <qrkit/lm/problem.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace qrkit {

struct EllipseParams {
  double cx = 0, cy = 0, a = 1, b = 1, phi = 0;
};

inline constexpr Index kEllipseGlobals = 5;

template <RealScalar Scalar>
class EllipseProblem final : public LeastSquaresProblem<Scalar> {
 public:
  /// `points` holds x_0, y_0, x_1, y_1, ...
  explicit EllipseProblem(std::vector<Scalar> points) : points_(std::move(points)) {
    if (points_.size() % 2 != 0) throw DimensionError("ellipse: odd number of point coordinates");
    if (points_.empty()) throw DimensionError("ellipse: no points");
  }

  Index num_points() const noexcept { return static_cast<Index>(points_.size() / 2); }
  Index num_params() const override { return num_points() + kEllipseGlobals; }
  Index num_residuals() const override { return 2 * num_points(); }
  const std::vector<Scalar>& points() const noexcept { return points_; }

  std::vector<Scalar> residuals(std::span<const Scalar> x) const override {
    const auto g = globals(x);
    const Index n = num_points();
    std::vector<Scalar> f(static_cast<std::size_t>(2 * n));
    for (Index i = 0; i < n; ++i) {
      const Scalar t = x[static_cast<std::size_t>(i)];
      const Scalar u = g.a * std::cos(t), v = g.b * std::sin(t);
      const auto k = static_cast<std::size_t>(2 * i);
      f[k] = points_[k] - (g.cx + g.c * u - g.s * v);
      f[k + 1] = points_[k + 1] - (g.cy + g.s * u + g.c * v);
    }
    return f;
  }

  Jacobian<Scalar> jacobian(std::span<const Scalar> x) const override {
    const auto g = globals(x);
    const Index n = num_points();
    std::vector<DenseMatrix<Scalar>> blocks(static_cast<std::size_t>(n), DenseMatrix<Scalar>(2, 1));
    DenseMatrix<Scalar> right(2 * n, kEllipseGlobals);
    for (Index i = 0; i < n; ++i) {
      const Scalar t = x[static_cast<std::size_t>(i)];
      const Scalar ct = std::cos(t), st = std::sin(t);
      const Scalar u = g.a * ct, v = g.b * st;
      const Scalar du = -g.a * st, dv = g.b * ct;
      auto& blk = blocks[static_cast<std::size_t>(i)];
      blk(0, 0) = -(g.c * du - g.s * dv);
      blk(1, 0) = -(g.s * du + g.c * dv);
      const Index r = 2 * i;
      right(r, 0) = Scalar(-1);
      right(r + 1, 1) = Scalar(-1);
      right(r, 2) = -g.c * ct;
      right(r + 1, 2) = -g.s * ct;
      right(r, 3) = g.s * st;
      right(r + 1, 3) = -g.c * st;
      right(r, 4) = g.s * u + g.c * v;
      right(r + 1, 4) = -(g.c * u - g.s * v);
    }
    return BlockAngularMatrix<Scalar>{BlockDiagonalMatrix<Scalar>(std::move(blocks)), std::move(right)};
  }

 private:
  struct Globals {
    Scalar cx, cy, a, b, c, s;
  };

  Globals globals(std::span<const Scalar> x) const {
    if (static_cast<Index>(x.size()) != num_params()) {
      throw DimensionError("ellipse: x has " + std::to_string(x.size()) + " entries, expected " +
                           std::to_string(num_params()));
    }
    const Index n = num_points();
    const auto at = [&](Index k) { return x[static_cast<std::size_t>(n + k)]; };
    if (!(at(2) > Scalar(0))) throw DomainError("ellipse: semi-axis a must be positive", n + 2);
    if (!(at(3) > Scalar(0))) throw DomainError("ellipse: semi-axis b must be positive", n + 3);
    return {at(0), at(1), at(2), at(3), std::cos(at(4)), std::sin(at(4))};
  }

  std::vector<Scalar> points_;
};

/// Packs per-point angles and global parameters into the problem's x.
template <RealScalar Scalar>
std::vector<Scalar> pack_ellipse_params(std::span<const double> angles, const EllipseParams& p) {
  std::vector<Scalar> x;
  x.reserve(angles.size() + kEllipseGlobals);
  for (double t : angles) x.push_back(static_cast<Scalar>(t));
  for (double g : {p.cx, p.cy, p.a, p.b, p.phi}) x.push_back(static_cast<Scalar>(g));
  return x;
}

template <RealScalar Scalar>
EllipseParams unpack_ellipse_globals(std::span<const Scalar> x) {
  if (x.size() < static_cast<std::size_t>(kEllipseGlobals)) throw DimensionError("ellipse: parameter vector too short");
  const auto g = x.subspan(x.size() - kEllipseGlobals);
  return {static_cast<double>(g[0]), static_cast<double>(g[1]), static_cast<double>(g[2]),
          static_cast<double>(g[3]), static_cast<double>(g[4])};
}

/// Synthetic data set. Points and parameters are kept in double and cast
/// to the working precision when a problem is built.
struct EllipseDataset {
  std::vector<double> points;  // x_0, y_0, x_1, y_1, ...
  std::vector<double> true_angles;
  EllipseParams truth;
  EllipseParams initial_globals;
  double noise_sigma = 0;
  std::uint64_t seed = 0;

  Index num_points() const noexcept { return static_cast<Index>(points.size() / 2); }
  std::vector<double> initial_angles() const;

  template <RealScalar Scalar>
  EllipseProblem<Scalar> problem() const {
    return EllipseProblem<Scalar>(std::vector<Scalar>(points.begin(), points.end()));
  }
  template <RealScalar Scalar>
  std::vector<Scalar> initial_x() const {
    return pack_ellipse_params<Scalar>(initial_angles(), initial_globals);
  }
  template <RealScalar Scalar>
  std::vector<Scalar> true_x() const {
    return pack_ellipse_params<Scalar>(true_angles, truth);
  }
};

inline constexpr EllipseParams kDefaultEllipse{0.5, -0.3, 2.0, 1.0, 0.3};

/// Global parameters offset from the truth by 10% of the axes (center),
/// 10% in scale (axes) and 0.1 rad (rotation).
inline EllipseParams perturb_ellipse(const EllipseParams& t) {
  return {t.cx + 0.1 * t.a, t.cy - 0.1 * t.b, 1.1 * t.a, 0.9 * t.b, t.phi + 0.1};
}

/// Angle of each point on the initial ellipse: the point is centered on the
/// data mean, rotated by -phi and scaled by the axes before atan2.
inline std::vector<double> initial_ellipse_angles(std::span<const double> points, const EllipseParams& g) {
  const std::size_t n = points.size() / 2;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += points[2 * i];
    my += points[2 * i + 1];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  const double c = std::cos(g.phi), s = std::sin(g.phi);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = points[2 * i] - mx, dy = points[2 * i + 1] - my;
    t[i] = std::atan2((-s * dx + c * dy) / g.b, (c * dx + s * dy) / g.a);
  }
  return t;
}

inline std::vector<double> EllipseDataset::initial_angles() const {
  return initial_ellipse_angles(points, initial_globals);
}

inline EllipseDataset generate_ellipse_data(Index n, const EllipseParams& truth, double noise_sigma, std::uint64_t seed) {
  if (n < 1) throw DimensionError("generate_ellipse_data: need at least one point");
  EllipseDataset ds;
  ds.truth = truth;
  ds.noise_sigma = noise_sigma;
  ds.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double c = std::cos(truth.phi), s = std::sin(truth.phi);
  ds.points.resize(static_cast<std::size_t>(2 * n));
  ds.true_angles.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double t = angle(rng);
    const double u = truth.a * std::cos(t), v = truth.b * std::sin(t);
    const double ex = noise(rng), ey = noise(rng);
    const auto k = static_cast<std::size_t>(2 * i);
    ds.true_angles[static_cast<std::size_t>(i)] = t;
    ds.points[k] = truth.cx + c * u - s * v + noise_sigma * ex;
    ds.points[k + 1] = truth.cy + s * u + c * v + noise_sigma * ey;
  }
  ds.initial_globals = perturb_ellipse(truth);
  return ds;
}

// ---- CSV points ------------------------------------------------------------

inline void write_ellipse_points_csv(std::ostream& os, std::span<const double> points) {
  os << "x,y\n";
  char buf[64];
  for (std::size_t i = 0; i + 1 < points.size(); i += 2) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", points[i], points[i + 1]);
    os << buf;
  }
}

/// Reads the `x,y` CSV written above. The header line is optional.
inline std::vector<double> read_ellipse_points_csv(std::istream& is) {
  std::vector<double> pts;
  std::string line;
  std::size_t line_no = 0;
  const auto parse = [&](std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("x,y", 0) == 0) continue;
    const auto comma = line.find(',');
    double x = 0, y = 0;
    if (comma == std::string::npos || !parse(std::string_view(line).substr(0, comma), x) ||
        !parse(std::string_view(line).substr(comma + 1), y)) {
      throw ParseError("ellipse csv: expected 'x,y'", line_no);
    }
    pts.push_back(x);
    pts.push_back(y);
  }
  if (pts.empty()) throw ParseError("ellipse csv: no points", line_no);
  return pts;
}

}  // namespace qrkit
