#include <qrkit/bench/runners.hpp>

#include <gtest/gtest.h>
#include <zlib.h>

#include <cstdlib>
#include <fstream>
#include <set>

using namespace qrkit;
using namespace qrkit::bench;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("qrkit_bench_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_gz(const fs::path& p, const std::string& text) {
  gzFile f = gzopen(p.string().c_str(), "wb");
  ASSERT_NE(f, nullptr);
  gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
  gzclose(f);
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t count_fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

}  // namespace

TEST(BenchIO, ReadsPlainAndGzip) {
  TempDir dir;
  const std::string text = "1 1 1\n0 0 1 2\n";
  write_file(dir.path / "plain.txt", text);
  write_gz(dir.path / "packed.txt.gz", text);
  EXPECT_EQ(read_text_file(dir.path / "plain.txt"), text);
  EXPECT_EQ(read_text_file(dir.path / "packed.txt.gz"), text);
  EXPECT_THROW(read_text_file(dir.path / "missing.txt"), InputError);
}

TEST(BenchIO, DataDirLookup) {
  TempDir dir;
  write_gz(dir.path / "problem-21-11315-pre.txt.gz", "x");
  ::setenv("QRKIT_DATA_DIR", dir.path.c_str(), 1);
  EXPECT_EQ(find_dataset("trafalgar"), dir.path / "problem-21-11315-pre.txt.gz");
  EXPECT_THROW(find_dataset("dubrovnik"), InputError);
  EXPECT_THROW(find_dataset("nothing-here.txt"), InputError);
  ::unsetenv("QRKIT_DATA_DIR");
  EXPECT_THROW(find_dataset("trafalgar"), InputError);
}

TEST(BenchIO, BalFromGzip) {
  TempDir dir;
  BASceneOptions opt;
  opt.num_points = 20;
  const auto d = generate_ba_scene(opt).data;
  std::ostringstream os;
  bal_write(os, d);
  write_gz(dir.path / "scene.txt.gz", os.str());
  EXPECT_EQ(load_bal(dir.path / "scene.txt.gz"), d);
}

TEST(BenchIO, EllipseDatasetRoundTrip) {
  TempDir dir;
  const auto ds = generate_ellipse_data(40, kDefaultEllipse, 0.05, 12);
  save_ellipse_dataset(ds, dir.path / "pts.csv");
  ASSERT_TRUE(fs::exists(dir.path / "pts.json"));
  const auto back = load_ellipse_dataset(dir.path / "pts.csv");
  EXPECT_EQ(back.points, ds.points);
  EXPECT_EQ(back.seed, 12u);
  EXPECT_EQ(back.initial_x<double>(), ds.initial_x<double>());
  EXPECT_DOUBLE_EQ(back.truth.phi, kDefaultEllipse.phi);
}

TEST(BenchIO, BadSidecarIsInputError) {
  TempDir dir;
  const auto ds = generate_ellipse_data(10, kDefaultEllipse, 0.0, 1);
  save_ellipse_dataset(ds, dir.path / "pts.csv");
  write_file(dir.path / "pts.json", "{\"truth\": 3}");
  EXPECT_THROW(load_ellipse_dataset(dir.path / "pts.csv"), InputError);
}

TEST(BenchIO, MomentGuessWithoutSidecar) {
  // Evenly spaced angles: the moment estimate is exact.
  const EllipseParams truth{1.0, -2.0, 3.0, 1.5, 0.4};
  std::vector<double> pts;
  const int n = 720;
  for (int i = 0; i < n; ++i) {
    const double t = 2 * std::numbers::pi * i / n;
    const double u = truth.a * std::cos(t), v = truth.b * std::sin(t);
    pts.push_back(truth.cx + std::cos(truth.phi) * u - std::sin(truth.phi) * v);
    pts.push_back(truth.cy + std::sin(truth.phi) * u + std::cos(truth.phi) * v);
  }
  const auto g = ellipse_moment_guess(pts);
  EXPECT_NEAR(g.cx, truth.cx, 1e-12);
  EXPECT_NEAR(g.cy, truth.cy, 1e-12);
  EXPECT_NEAR(g.a, truth.a, 1e-9);
  EXPECT_NEAR(g.b, truth.b, 1e-9);
  EXPECT_NEAR(g.phi, truth.phi, 1e-9);
}

TEST(BenchSvg, RendersSeriesAndSkipsNonPositiveOnLogAxis) {
  Chart c{"t", "x", "y", false, true, {Series{"a<b", {0, 1, 2}, {1.0, 0.0, 1e-3}}, Series{"c", {0, 1}, {10, 1}}}};
  const auto svg = render_svg({c});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 5, true);
  std::size_t polylines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++polylines;
  EXPECT_EQ(polylines, 2u);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
}

TEST(BenchSvg, EmptyChartStillValid) {
  const auto svg = render_svg({Chart{"empty", "x", "y", true, true, {}}});
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(BenchRunners, Median) {
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(BenchRunners, FactorizeMeetsReconstructionBound) {
  for (auto s : {FactorSolver::blockdiag, FactorSolver::blockbanded, FactorSolver::dense_baseline}) {
    for (auto p : {Precision::f32, Precision::f64}) {
      FactorizeOptions o;
      o.n = 120;
      o.solver = s;
      o.precision = p;
      o.repeat = 2;
      const auto rep = run_factorize(o);
      EXPECT_EQ(rep.rows, 240);
      EXPECT_EQ(rep.cols, 125);
      EXPECT_EQ(rep.times_s.size(), 2u);
      EXPECT_LE(rep.recon_err, 64 * rep.epsilon * rep.j_norm) << to_string(s) << " " << to_string(p);
      EXPECT_GT(rep.r_nnz, 0);
      EXPECT_TRUE(std::isfinite(rep.gn_energy));
    }
  }
}

TEST(BenchRunners, ReconstructionErrorDetectsWrongFactor) {
  const auto ds = generate_ellipse_data(20, kDefaultEllipse, 0.01, 1);
  const auto j = std::get<BlockAngularMatrix<double>>(ds.problem<double>().jacobian(ds.initial_x<double>()));
  HorzCatQR<BlockDiagonalQR<double>> f;
  f.compute(j.left, j.right);
  EXPECT_LE(bench::detail::reconstruction_error<double>(f, j, 7), 1e-13);
  auto wrong = j;
  wrong.right(3, 2) += 1.0;
  EXPECT_NEAR(bench::detail::reconstruction_error<double>(f, wrong, 7), 1.0, 1e-12);
}

TEST(BenchRunners, FactorizeCsvSchema) {
  FactorizeOptions o;
  o.n = 50;
  o.repeat = 3;
  o.record_time = false;
  std::ostringstream os;
  write_factorize_csv(os, run_factorize(o));
  const auto lines = split_lines(os.str());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], kFactorizeCsvHeader);
  for (const auto& l : lines) EXPECT_EQ(count_fields(l), count_fields(lines[0]));
  EXPECT_EQ(lines[1].rfind("ellipse,50,blockdiag,f64,0,0,", 0), 0u);
}

TEST(BenchRunners, FactorizeRejectsTinyProblems) {
  FactorizeOptions o;
  o.n = 4;
  EXPECT_THROW(run_factorize(o), UsageError);
}

TEST(BenchRunners, OptimizeWritesOutputs) {
  TempDir dir;
  OptimizeOptions o;
  o.n = 100;
  o.noise = 0.0;
  o.record_time = false;
  o.out = dir.path;
  const auto rep = run_optimize(o);
  EXPECT_LT(rep.trace.final_energy(), 1e-10);
  const auto summary = nlohmann::json::parse(slurp(dir.path / "summary.json"));
  for (const char* key : {"problem", "solver", "precision", "final_energy", "iterations", "accepted_steps",
                          "total_time_s", "status"}) {
    EXPECT_TRUE(summary.contains(key)) << key;
  }
  EXPECT_EQ(summary["problem"], "ellipse");
  EXPECT_EQ(summary["total_time_s"], 0.0);
  const auto csv = split_lines(slurp(dir.path / "trace.csv"));
  EXPECT_EQ(csv[0], kTraceCsvHeader);
  EXPECT_EQ(csv.size(), rep.trace.records.size() + 1);
  for (const auto& l : csv) EXPECT_EQ(count_fields(l), 7u);
  EXPECT_NE(slurp(dir.path / "convergence.svg").find("<polyline"), std::string::npos);
}

TEST(BenchRunners, OptimizeBundleAdjustmentFromFile) {
  TempDir dir;
  BASceneOptions scene;
  scene.num_cameras = 3;
  scene.num_points = 40;
  std::ostringstream os;
  bal_write(os, generate_ba_scene(scene).data);
  write_file(dir.path / "scene.txt", os.str());
  OptimizeOptions o;
  o.problem = "ba";
  o.input = (dir.path / "scene.txt").string();
  o.solver = SolverKind::more_qr;
  o.max_iters = 20;
  const auto rep = run_optimize(o);
  EXPECT_EQ(rep.num_residuals, 2 * static_cast<Index>(generate_ba_scene(scene).data.observations.size()));
  EXPECT_LT(rep.trace.final_energy(), rep.trace.initial_energy());
}

TEST(BenchRunners, OptimizeUsageErrors) {
  OptimizeOptions o;
  o.problem = "ba";
  EXPECT_THROW(run_optimize(o), UsageError);
  o.problem = "circle";
  EXPECT_THROW(run_optimize(o), UsageError);
  o.problem = "ba";
  o.input = "/definitely/not/here.txt";
  EXPECT_THROW(run_optimize(o), InputError);
}

TEST(BenchRunners, SweepRowCountAndSkips) {
  SweepOptions o;
  o.sizes = {20, 40, 80};
  o.precisions = {Precision::f32, Precision::f64};
  o.repeat = 1;
  o.dense_max_n = 40;
  const auto rows = run_sweep(o);
  ASSERT_EQ(rows.size(), 3u * 3u * 2u);
  std::set<std::tuple<Index, FactorSolver, Precision>> cells;
  for (const auto& r : rows) {
    cells.insert({r.n, r.solver, r.precision});
    EXPECT_EQ(r.skipped, r.solver == FactorSolver::dense_baseline && r.n > 40);
    if (!r.skipped) {
      EXPECT_TRUE(std::isfinite(r.final_energy));
    }
  }
  EXPECT_EQ(cells.size(), rows.size());
  std::ostringstream os;
  write_sweep_csv(os, rows);
  const auto lines = split_lines(os.str());
  EXPECT_EQ(lines[0], kSweepCsvHeader);
  EXPECT_EQ(lines.size(), rows.size() + 1);
  for (const auto& l : lines) EXPECT_EQ(count_fields(l), 7u);
}

TEST(BenchRunners, SweepIsDeterministicWithoutTiming) {
  SweepOptions o;
  o.sizes = {30, 60};
  o.repeat = 1;
  o.record_time = false;
  std::ostringstream a, b;
  write_sweep_csv(a, run_sweep(o));
  write_sweep_csv(b, run_sweep(o));
  EXPECT_EQ(a.str(), b.str());
}
