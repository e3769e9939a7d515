#pragma once

// File access for the benchmark harness: gzip-aware text loading, dataset
// lookup and the JSON documents the CLI reads and writes. Needs zlib and
// nlohmann/json; the core library does not.

#include <qrkit/problems/bundle_adjustment.hpp>
#include <qrkit/problems/ellipse.hpp>

#include <json.hpp>
#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qrkit::bench {

namespace fs = std::filesystem;

/// Missing or unreadable input. The CLI maps it (and ParseError) to exit code 3.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Whole file as text. gzip-compressed files are inflated transparently;
/// zlib passes plain files through unchanged.
inline std::string read_text_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("file not found: " + path.string());
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw InputError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw InputError("read error in " + path.string());
  return out;
}

/// Resolves a dataset argument. Existing paths win; otherwise the name is
/// looked up in $QRKIT_DATA_DIR, with and without a .gz suffix.
inline std::optional<fs::path> resolve_data_path(const std::string& name) {
  if (fs::is_regular_file(name)) return fs::path(name);
  const char* dir = std::getenv("QRKIT_DATA_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  for (const std::string& candidate : {name, name + ".gz"}) {
    const fs::path p = fs::path(dir) / candidate;
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

/// BAL file names of the two reference scenes, keyed by short name.
inline std::optional<std::string> bal_alias(const std::string& name) {
  if (name == "trafalgar") return "problem-21-11315-pre.txt";
  if (name == "dubrovnik") return "problem-16-22106-pre.txt";
  return std::nullopt;
}

inline fs::path find_dataset(const std::string& name) {
  if (auto p = resolve_data_path(name)) return *p;
  if (auto alias = bal_alias(name)) {
    if (auto p = resolve_data_path(*alias)) return *p;
    throw InputError("dataset '" + name + "' (" + *alias + ") not found; set QRKIT_DATA_DIR");
  }
  throw InputError("file not found: " + name);
}

inline BADataset load_bal(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  return bal_parse(in);
}

// ---- ellipse datasets ------------------------------------------------------

inline nlohmann::json to_json(const EllipseParams& p) {
  return {{"cx", p.cx}, {"cy", p.cy}, {"a", p.a}, {"b", p.b}, {"phi", p.phi}};
}

inline EllipseParams ellipse_params_from_json(const nlohmann::json& j) {
  EllipseParams p;
  p.cx = j.at("cx").get<double>();
  p.cy = j.at("cy").get<double>();
  p.a = j.at("a").get<double>();
  p.b = j.at("b").get<double>();
  p.phi = j.at("phi").get<double>();
  return p;
}

/// The sidecar sits next to the points file with a .json extension.
inline fs::path ellipse_sidecar_path(const fs::path& points_csv) {
  fs::path p = points_csv;
  if (p.extension() == ".gz") p.replace_extension();
  return p.replace_extension(".json");
}

inline void save_ellipse_dataset(const EllipseDataset& ds, const fs::path& points_csv) {
  {
    std::ofstream os(points_csv);
    if (!os) throw InputError("cannot write " + points_csv.string());
    write_ellipse_points_csv(os, ds.points);
  }
  const nlohmann::json side{{"num_points", ds.num_points()},
                            {"seed", ds.seed},
                            {"noise_sigma", ds.noise_sigma},
                            {"truth", to_json(ds.truth)},
                            {"initial", to_json(ds.initial_globals)}};
  std::ofstream js(ellipse_sidecar_path(points_csv));
  if (!js) throw InputError("cannot write sidecar for " + points_csv.string());
  js << side.dump(2) << '\n';
}

/// Initial globals from second moments: for angles spread evenly around an
/// ellipse the covariance has eigenvalues a^2/2 and b^2/2.
inline EllipseParams ellipse_moment_guess(std::span<const double> points) {
  const std::size_t n = points.size() / 2;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += points[2 * i];
    my += points[2 * i + 1];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = points[2 * i] - mx, dy = points[2 * i + 1] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= static_cast<double>(n);
  syy /= static_cast<double>(n);
  sxy /= static_cast<double>(n);
  const double mean = 0.5 * (sxx + syy);
  const double half_gap = std::hypot(0.5 * (sxx - syy), sxy);
  const double floor = 1e-12 + 1e-6 * mean;
  return {mx, my, std::sqrt(2 * std::max(mean + half_gap, floor)), std::sqrt(2 * std::max(mean - half_gap, floor)),
          0.5 * std::atan2(2 * sxy, sxx - syy)};
}

/// Points plus sidecar. Without a sidecar the initial globals come from
/// ellipse_moment_guess and truth is left at the guess.
inline EllipseDataset load_ellipse_dataset(const fs::path& points_csv) {
  EllipseDataset ds;
  {
    std::istringstream in(read_text_file(points_csv));
    ds.points = read_ellipse_points_csv(in);
  }
  const fs::path side = ellipse_sidecar_path(points_csv);
  if (fs::is_regular_file(side)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(side));
      ds.truth = ellipse_params_from_json(j.at("truth"));
      ds.initial_globals = j.contains("initial") ? ellipse_params_from_json(j.at("initial")) : perturb_ellipse(ds.truth);
      ds.seed = j.value("seed", std::uint64_t{0});
      ds.noise_sigma = j.value("noise_sigma", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("bad sidecar " + side.string() + ": " + e.what());
    }
    if (!(ds.initial_globals.a > 0 && ds.initial_globals.b > 0)) {
      throw InputError("bad sidecar " + side.string() + ": initial semi-axes must be positive");
    }
  } else {
    ds.initial_globals = ellipse_moment_guess(ds.points);
    ds.truth = ds.initial_globals;
  }
  return ds;
}

}  // namespace qrkit::bench
