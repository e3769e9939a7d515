#pragma once

// Bundle adjustment in the BAL camera model.
//
// Each camera has 9 parameters (axis-angle rotation w, translation t, focal f,
// radial k1, k2). An observation of point X by a camera predicts
//   P = Rot(w) X + t,  p = -(P_x, P_y) / P_z,  r = 1 + k1 |p|^2 + k2 |p|^4,
// and its residual is f r p - (u, v).
//
// The problem orders observations by point index (stable) and parameters as
// [all points | all cameras]. The Jacobian is then block angular: one
// 2k x 3 block per point seen k times, next to a dense camera part.

#include <qrkit/core/parallel.hpp>
#include <qrkit/core/permutation.hpp>
#include <qrkit/lm/problem.hpp>
#include <qrkit/problems/dual.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace qrkit {

inline constexpr Index kCameraParams = 9;
inline constexpr Index kPointParams = 3;

struct BAObservation {
  Index camera = 0;
  Index point = 0;
  double u = 0, v = 0;

  friend bool operator==(const BAObservation&, const BAObservation&) = default;
};

/// A BAL data set: observations in file order plus the stored parameters.
struct BADataset {
  Index num_cameras = 0;
  Index num_points = 0;
  std::vector<BAObservation> observations;
  std::vector<double> cameras;  // 9 per camera
  std::vector<double> points;   // 3 per point

  Index num_observations() const noexcept { return static_cast<Index>(observations.size()); }
  Index num_residuals() const noexcept { return 2 * num_observations(); }
  Index num_params() const noexcept { return kPointParams * num_points + kCameraParams * num_cameras; }

  /// Throws StructureError on inconsistent sizes or out-of-range indices.
  void validate() const {
    if (num_cameras < 0 || num_points < 0) throw StructureError("bundle adjustment: negative counts");
    if (static_cast<Index>(cameras.size()) != kCameraParams * num_cameras) {
      throw StructureError("bundle adjustment: expected " + std::to_string(kCameraParams * num_cameras) +
                           " camera scalars, have " + std::to_string(cameras.size()));
    }
    if (static_cast<Index>(points.size()) != kPointParams * num_points) {
      throw StructureError("bundle adjustment: expected " + std::to_string(kPointParams * num_points) +
                           " point scalars, have " + std::to_string(points.size()));
    }
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const auto& o = observations[i];
      if (o.camera < 0 || o.camera >= num_cameras || o.point < 0 || o.point >= num_points) {
        throw StructureError("bundle adjustment: observation " + std::to_string(i) + " has indices out of range");
      }
    }
  }

  friend bool operator==(const BADataset&, const BADataset&) = default;
};

/// Layout of the block-angular BA Jacobian.
struct BAJacobianStructure {
  /// Observation order after the stable sort by point: order[k] is the file
  /// index of the k-th observation.
  std::vector<Index> order;
  /// Residual-row permutation: file row r lands on row row_permutation[r].
  Permutation row_permutation;
  /// Rows of each point block (2 per observation of that point).
  std::vector<Index> point_block_rows;
  Index rows = 0;
  Index point_cols = 0;
  Index camera_cols = 0;
};

inline BAJacobianStructure ba_jacobian_structure(const BADataset& data) {
  BAJacobianStructure s;
  const Index nobs = data.num_observations();
  s.order.resize(static_cast<std::size_t>(nobs));
  std::iota(s.order.begin(), s.order.end(), Index{0});
  std::stable_sort(s.order.begin(), s.order.end(), [&](Index a, Index b) {
    return data.observations[static_cast<std::size_t>(a)].point < data.observations[static_cast<std::size_t>(b)].point;
  });
  std::vector<Index> rows(static_cast<std::size_t>(2 * nobs));
  for (Index k = 0; k < nobs; ++k) {
    rows[static_cast<std::size_t>(2 * k)] = 2 * s.order[static_cast<std::size_t>(k)];
    rows[static_cast<std::size_t>(2 * k + 1)] = 2 * s.order[static_cast<std::size_t>(k)] + 1;
  }
  s.row_permutation = Permutation::from_order(rows);
  s.point_block_rows.assign(static_cast<std::size_t>(data.num_points), 0);
  for (const auto& o : data.observations) s.point_block_rows[static_cast<std::size_t>(o.point)] += 2;
  s.rows = 2 * nobs;
  s.point_cols = kPointParams * data.num_points;
  s.camera_cols = kCameraParams * data.num_cameras;
  return s;
}

/// Rotates x by the axis-angle vector w (Rodrigues). Below an angle of 1e-8
/// the first-order form x + w cross x is used, which keeps derivatives finite
/// at the identity.
template <class T>
std::array<T, 3> rotate_axis_angle(const std::array<T, 3>& w, const std::array<T, 3>& x) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  const std::array<T, 3> wx{w[1] * x[2] - w[2] * x[1], w[2] * x[0] - w[0] * x[2], w[0] * x[1] - w[1] * x[0]};
  if (value_of(theta2) < 1e-16) return {x[0] + wx[0], x[1] + wx[1], x[2] + wx[2]};
  const T theta = sqrt(theta2);
  const T c = cos(theta), s = sin(theta);
  const T inv = T(1) / theta;
  const T kdotx = (w[0] * x[0] + w[1] * x[1] + w[2] * x[2]) * inv;
  const T one_minus_c = T(1) - c;
  std::array<T, 3> out;
  for (int i = 0; i < 3; ++i) out[i] = x[i] * c + wx[i] * inv * s + w[i] * inv * kdotx * one_minus_c;
  return out;
}

/// Residual of one observation. `cam` holds 9 values, `pt` 3. Returns false
/// if the point lies in the camera plane (P_z == 0).
template <class T>
bool project_bal(const T* cam, const T* pt, double u, double v, T* residual) {
  const std::array<T, 3> p = rotate_axis_angle<T>({cam[0], cam[1], cam[2]}, {pt[0], pt[1], pt[2]});
  const T px = p[0] + cam[3], py = p[1] + cam[4], pz = p[2] + cam[5];
  if (value_of(pz) == 0) return false;
  const T x = -px / pz, y = -py / pz;
  const T n2 = x * x + y * y;
  const T r = T(1) + n2 * (cam[7] + cam[8] * n2);
  const T fr = cam[6] * r;
  residual[0] = fr * x - T(u);
  residual[1] = fr * y - T(v);
  return true;
}

/// Parameter vector [points | cameras] in working precision.
template <RealScalar Scalar>
std::vector<Scalar> ba_params(const BADataset& data) {
  std::vector<Scalar> x;
  x.reserve(static_cast<std::size_t>(data.num_params()));
  for (double p : data.points) x.push_back(static_cast<Scalar>(p));
  for (double c : data.cameras) x.push_back(static_cast<Scalar>(c));
  return x;
}

/// Writes a parameter vector back into a data set's cameras and points.
template <RealScalar Scalar>
void ba_unpack_params(std::span<const Scalar> x, BADataset& data) {
  if (static_cast<Index>(x.size()) != data.num_params()) throw DimensionError("bundle adjustment: parameter size mismatch");
  const auto np = static_cast<std::size_t>(kPointParams * data.num_points);
  for (std::size_t i = 0; i < np; ++i) data.points[i] = static_cast<double>(x[i]);
  for (std::size_t i = np; i < x.size(); ++i) data.cameras[i - np] = static_cast<double>(x[i]);
}

template <RealScalar Scalar>
class BundleAdjustmentProblem final : public LeastSquaresProblem<Scalar> {
 public:
  explicit BundleAdjustmentProblem(const BADataset& data)
      : num_cameras_(data.num_cameras), num_points_(data.num_points) {
    data.validate();
    structure_ = ba_jacobian_structure(data);
    obs_.reserve(data.observations.size());
    for (Index k : structure_.order) obs_.push_back(data.observations[static_cast<std::size_t>(k)]);
    // Row of each sorted observation inside its point block.
    row_in_block_.resize(obs_.size());
    std::vector<Index> fill(static_cast<std::size_t>(num_points_), 0);
    for (std::size_t k = 0; k < obs_.size(); ++k) {
      auto& f = fill[static_cast<std::size_t>(obs_[k].point)];
      row_in_block_[k] = f;
      f += 2;
    }
  }

  Index num_params() const override { return structure_.point_cols + structure_.camera_cols; }
  Index num_residuals() const override { return structure_.rows; }
  Index num_cameras() const noexcept { return num_cameras_; }
  Index num_points() const noexcept { return num_points_; }
  const BAJacobianStructure& structure() const noexcept { return structure_; }
  /// Observations in residual order (sorted by point).
  const std::vector<BAObservation>& observations() const noexcept { return obs_; }

  std::vector<Scalar> residuals(std::span<const Scalar> x) const override {
    check_size(x);
    std::vector<Scalar> f(static_cast<std::size_t>(num_residuals()));
    parallel_for(static_cast<Index>(obs_.size()), [&](Index k) {
      const auto& o = obs_[static_cast<std::size_t>(k)];
      if (!project_bal<Scalar>(camera_ptr(x, o.camera), point_ptr(x, o.point), o.u, o.v, &f[static_cast<std::size_t>(2 * k)])) {
        throw DomainError("bundle adjustment: point lies in the camera plane", original_index(k));
      }
    });
    return f;
  }

  Jacobian<Scalar> jacobian(std::span<const Scalar> x) const override {
    check_size(x);
    using D = Dual<Scalar, 12>;
    std::vector<DenseMatrix<Scalar>> blocks;
    blocks.reserve(static_cast<std::size_t>(num_points_));
    for (Index rows : structure_.point_block_rows) blocks.emplace_back(rows, kPointParams);
    DenseMatrix<Scalar> right(num_residuals(), structure_.camera_cols);
    parallel_for(static_cast<Index>(obs_.size()), [&](Index k) {
      const auto& o = obs_[static_cast<std::size_t>(k)];
      const Scalar* cp = camera_ptr(x, o.camera);
      const Scalar* pp = point_ptr(x, o.point);
      std::array<D, 3> pt;
      std::array<D, 9> cam;
      for (std::size_t i = 0; i < 3; ++i) pt[i] = D::variable(pp[i], i);
      for (std::size_t i = 0; i < 9; ++i) cam[i] = D::variable(cp[i], 3 + i);
      std::array<D, 2> r;
      if (!project_bal<D>(cam.data(), pt.data(), o.u, o.v, r.data())) {
        throw DomainError("bundle adjustment: point lies in the camera plane", original_index(k));
      }
      auto& blk = blocks[static_cast<std::size_t>(o.point)];
      const Index br = row_in_block_[static_cast<std::size_t>(k)];
      const Index cc = kCameraParams * o.camera;
      for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 3; ++j) blk(br + i, j) = r[static_cast<std::size_t>(i)].d[static_cast<std::size_t>(j)];
        for (Index j = 0; j < 9; ++j) right(2 * k + i, cc + j) = r[static_cast<std::size_t>(i)].d[static_cast<std::size_t>(3 + j)];
      }
    }, 256);
    return BlockAngularMatrix<Scalar>{BlockDiagonalMatrix<Scalar>(std::move(blocks)), std::move(right)};
  }

 private:
  void check_size(std::span<const Scalar> x) const {
    if (static_cast<Index>(x.size()) != num_params()) {
      throw DimensionError("bundle adjustment: x has " + std::to_string(x.size()) + " entries, expected " +
                           std::to_string(num_params()));
    }
  }
  const Scalar* point_ptr(std::span<const Scalar> x, Index p) const {
    return x.data() + kPointParams * p;
  }
  const Scalar* camera_ptr(std::span<const Scalar> x, Index c) const {
    return x.data() + structure_.point_cols + kCameraParams * c;
  }
  Index original_index(Index k) const { return structure_.order[static_cast<std::size_t>(k)]; }

  Index num_cameras_;
  Index num_points_;
  BAJacobianStructure structure_;
  std::vector<BAObservation> obs_;
  std::vector<Index> row_in_block_;
};

// ---- BAL text format ---------------------------------------------------------

namespace detail {

/// Whitespace tokenizer that remembers the line each token came from.
class LineTokenizer {
 public:
  explicit LineTokenizer(std::istream& is) : is_(is) {}

  /// Next token, or an empty view at end of input.
  std::string_view next() {
    while (true) {
      while (pos_ < line_.size() && is_space(line_[pos_])) ++pos_;
      if (pos_ < line_.size()) {
        const std::size_t start = pos_;
        while (pos_ < line_.size() && !is_space(line_[pos_])) ++pos_;
        token_line_ = line_no_;
        return std::string_view(line_).substr(start, pos_ - start);
      }
      if (!std::getline(is_, line_)) {
        token_line_ = line_no_;
        return {};
      }
      ++line_no_;
      pos_ = 0;
    }
  }

  std::size_t line() const noexcept { return token_line_; }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

  std::istream& is_;
  std::string line_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
  std::size_t token_line_ = 0;
};

template <class T>
T parse_token(LineTokenizer& tok, const char* what) {
  const std::string_view s = tok.next();
  if (s.empty()) throw ParseError(std::string("unexpected end of input, expected ") + what, tok.line());
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("malformed " + std::string(what) + " '" + std::string(s) + "'", tok.line());
  }
  return value;
}

}  // namespace detail

/// Parses BAL text: a `cameras points observations` header, one
/// `camera point u v` line per observation, then the camera scalars (9 each)
/// and the point scalars (3 each). Any whitespace layout is accepted.
inline BADataset bal_parse(std::istream& is) {
  detail::LineTokenizer tok(is);
  BADataset d;
  const auto nc = detail::parse_token<long long>(tok, "camera count");
  const auto np = detail::parse_token<long long>(tok, "point count");
  const auto no = detail::parse_token<long long>(tok, "observation count");
  if (nc < 0 || np < 0 || no < 0) throw ParseError("negative count in header", tok.line());
  d.num_cameras = static_cast<Index>(nc);
  d.num_points = static_cast<Index>(np);
  d.observations.resize(static_cast<std::size_t>(no));
  for (auto& o : d.observations) {
    o.camera = static_cast<Index>(detail::parse_token<long long>(tok, "camera index"));
    if (o.camera < 0 || o.camera >= d.num_cameras) {
      throw ParseError("camera index " + std::to_string(o.camera) + " out of range", tok.line());
    }
    o.point = static_cast<Index>(detail::parse_token<long long>(tok, "point index"));
    if (o.point < 0 || o.point >= d.num_points) {
      throw ParseError("point index " + std::to_string(o.point) + " out of range", tok.line());
    }
    o.u = detail::parse_token<double>(tok, "observation coordinate");
    o.v = detail::parse_token<double>(tok, "observation coordinate");
  }
  d.cameras.resize(static_cast<std::size_t>(kCameraParams * d.num_cameras));
  for (auto& c : d.cameras) c = detail::parse_token<double>(tok, "camera parameter");
  d.points.resize(static_cast<std::size_t>(kPointParams * d.num_points));
  for (auto& p : d.points) p = detail::parse_token<double>(tok, "point coordinate");
  if (const auto extra = tok.next(); !extra.empty()) {
    throw ParseError("trailing data '" + std::string(extra) + "' after the declared counts", tok.line());
  }
  return d;
}

inline void bal_write(std::ostream& os, const BADataset& d) {
  char buf[96];
  os << d.num_cameras << ' ' << d.num_points << ' ' << d.num_observations() << '\n';
  for (const auto& o : d.observations) {
    std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g\n", static_cast<long long>(o.camera),
                  static_cast<long long>(o.point), o.u, o.v);
    os << buf;
  }
  const auto scalar = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    os << buf;
  };
  for (double c : d.cameras) scalar(c);
  for (double p : d.points) scalar(p);
}

// ---- synthetic scenes --------------------------------------------------------

struct BASceneOptions {
  Index num_cameras = 4;
  Index num_points = 50;
  /// Probability that a camera sees a point; every point gets at least
  /// `min_views` observations regardless.
  double visibility = 0.7;
  Index min_views = 2;
  double pixel_noise = 0.5;
  /// Standard deviations of the initial-guess perturbation.
  double point_perturbation = 0.05;
  double rotation_perturbation = 0.01;
  double translation_perturbation = 0.05;
  std::uint64_t seed = 1;
};

struct BAScene {
  BADataset data;  // observations plus the perturbed initial parameters
  std::vector<double> true_cameras;
  std::vector<double> true_points;
};

/// Points in the unit cube around the origin, cameras about 10 units away on
/// +z looking back down -z, with focal length 500 and mild radial distortion.
inline BAScene generate_ba_scene(const BASceneOptions& opt) {
  if (opt.num_cameras < 1 || opt.num_points < 1) throw DimensionError("generate_ba_scene: need cameras and points");
  if (opt.min_views > opt.num_cameras) throw DimensionError("generate_ba_scene: min_views exceeds camera count");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  BAScene s;
  auto& d = s.data;
  d.num_cameras = opt.num_cameras;
  d.num_points = opt.num_points;
  for (Index c = 0; c < opt.num_cameras; ++c) {
    const double cam[9] = {0.1 * unit(rng), 0.1 * unit(rng), 0.1 * unit(rng), 2.0 * unit(rng), 2.0 * unit(rng),
                           -10.0 + unit(rng), 500.0 + 50.0 * unit(rng), 1e-3 * unit(rng), 1e-5 * unit(rng)};
    s.true_cameras.insert(s.true_cameras.end(), cam, cam + 9);
  }
  for (Index p = 0; p < 3 * opt.num_points; ++p) s.true_points.push_back(unit(rng));

  std::vector<Index> cams(static_cast<std::size_t>(opt.num_cameras));
  for (Index p = 0; p < opt.num_points; ++p) {
    std::iota(cams.begin(), cams.end(), Index{0});
    std::shuffle(cams.begin(), cams.end(), rng);
    std::vector<Index> seen;
    for (Index k = 0; k < opt.num_cameras; ++k) {
      if (k < opt.min_views || coin(rng) < opt.visibility) seen.push_back(cams[static_cast<std::size_t>(k)]);
    }
    std::sort(seen.begin(), seen.end());
    for (Index c : seen) {
      double r[2] = {0, 0};
      if (!project_bal<double>(&s.true_cameras[static_cast<std::size_t>(9 * c)],
                               &s.true_points[static_cast<std::size_t>(3 * p)], 0.0, 0.0, r)) {
        continue;
      }
      d.observations.push_back({c, p, r[0] + opt.pixel_noise * gauss(rng), r[1] + opt.pixel_noise * gauss(rng)});
    }
  }
  // BAL files list observations camera by camera.
  std::stable_sort(d.observations.begin(), d.observations.end(),
                   [](const BAObservation& a, const BAObservation& b) { return a.camera < b.camera; });

  d.cameras = s.true_cameras;
  for (Index c = 0; c < opt.num_cameras; ++c) {
    double* cam = &d.cameras[static_cast<std::size_t>(9 * c)];
    for (int i = 0; i < 3; ++i) cam[i] += opt.rotation_perturbation * gauss(rng);
    for (int i = 3; i < 6; ++i) cam[i] += opt.translation_perturbation * gauss(rng);
  }
  d.points = s.true_points;
  for (auto& v : d.points) v += opt.point_perturbation * gauss(rng);
  return s;
}

}  // namespace qrkit
