#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "fixtures.hpp"
#include "gridrobust/errors.hpp"
#include "gridrobust/geospatial.hpp"
#include "oracles.hpp"

using namespace gridrobust;

namespace {

std::vector<SpatialPoint> scattered() {
  return {{0, 0, 1.0}, {2, 0.5, 3.0}, {1, 2, -1.0}, {3, 3, 0.5}, {0.5, 3.5, 2.0}, {4, 1, 1.5}, {2.5, 2, 0.0}};
}

// Points in two square clusters carrying one draw of a zero-mean Gaussian
// process whose covariance is sill - gamma(h) for the given spherical model.
std::vector<SpatialPoint> gaussian_field(const SphericalVariogram& truth, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  std::vector<SpatialPoint> pts;
  for (double cx : {0.0, 14.0}) {
    for (int i = 0; i < 200; ++i) pts.push_back({cx + u(rng), u(rng), 0.0});
  }
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
      cov(i, j) = truth.sill - (h == 0.0 ? 0.0 : truth(h));
    }
    cov(i, i) += 1e-9;
  }
  Eigen::MatrixXd l = cov.llt().matrixL();
  std::normal_distribution<double> z;
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = z(rng);
  Eigen::VectorXd v = l * w;
  for (Eigen::Index i = 0; i < n; ++i) pts[i].value = v(i);
  return pts;
}

}  // namespace

TEST_CASE("spherical variogram shape") {
  SphericalVariogram g{0.2, 1.0, 2.0};
  CHECK(g(0.0) == 0.0);
  CHECK(g(1.0) == doctest::Approx(0.2 + 1.5 * 0.5 - 0.5 * 0.125));
  CHECK(g(2.0) == doctest::Approx(1.2));
  CHECK(g(50.0) == doctest::Approx(1.2));
  double previous = 0.0;
  for (double h = 0.01; h < 3.0; h += 0.01) {
    CHECK(g(h) >= previous);
    previous = g(h);
  }
}

TEST_CASE("kriging is exact at the data and its weights sum to one") {
  auto pts = scattered();
  OrdinaryKriging k(pts, SphericalVariogram{0.0, 1.5, 3.0});
  for (const auto& p : pts) CHECK(std::abs(k.predict(p.x, p.y).value - p.value) < 1e-8);
  for (double x = -1; x <= 5; x += 0.37) {
    for (double y = -1; y <= 4; y += 0.41) {
      auto w = k.weights(x, y);
      double sum = 0.0;
      for (double v : w) sum += v;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("three-point weights match Cramer's rule") {
  const double px[3]{0, 2, 0.5}, py[3]{0, 0, 1.5};
  std::vector<SpatialPoint> pts{{px[0], py[0], 1}, {px[1], py[1], 2}, {px[2], py[2], 3}};
  SphericalVariogram model{0.1, 2.0, 2.5};
  OrdinaryKriging k(pts, model);
  for (auto [x, y] : std::vector<std::pair<double, double>>{{0.7, 0.4}, {1.9, 1.2}, {-0.5, 2.0}}) {
    auto expected = oracle::kriging_weights_3(px, py, x, y, model);
    auto w = k.weights(x, y);
    REQUIRE(w.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(w[i] - expected[i]) < 1e-8);
  }
}

TEST_CASE("a single point gives a constant field") {
  std::vector<SpatialPoint> one{{1, 1, 7.5}};
  auto field = krige(one, SphericalVariogram{0.0, 1.0, 2.0}, RasterSpec{0, 0, 0.5, 6, 4});
  for (double v : field.value) CHECK(v == doctest::Approx(7.5));
}

TEST_CASE("a constant field fits a flat variogram and kriges to the constant") {
  auto pts = scattered();
  for (auto& p : pts) p.value = 3.25;
  auto model = fit_variogram(pts);
  CHECK(model.sill == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(model.nugget == doctest::Approx(0.0).epsilon(1e-12));
  auto field = krige(pts, model, RasterSpec::covering(pts, 0.5));
  for (double v : field.value) CHECK(v == doctest::Approx(3.25));
}

TEST_CASE("variogram fitting needs five distinct points") {
  auto pts = scattered();
  pts.resize(4);
  CHECK_THROWS_AS(fit_variogram(pts), ValidationError);
  std::vector<SpatialPoint> same(6, SpatialPoint{1, 1, 0});
  for (std::size_t i = 0; i < same.size(); ++i) same[i].value = double(i);
  CHECK_THROWS_AS(fit_variogram(same), ValidationError);
}

TEST_CASE("duplicate points are averaged and flagged") {
  auto pts = scattered();
  pts.push_back({pts[0].x, pts[0].y, 3.0});
  OrdinaryKriging k(pts, SphericalVariogram{0.0, 1.0, 3.0});
  CHECK(k.merged_duplicates());
  CHECK(k.points().size() == pts.size() - 1);
  CHECK(k.predict(0, 0).value == doctest::Approx(2.0));
}

TEST_CASE("fitted range recovers a two-cluster Gaussian process") {
  SphericalVariogram truth{0.0, 1.0, 1.5};
  auto model = fit_variogram(gaussian_field(truth, 2024));
  CHECK(std::abs(model.range - truth.range) <= 0.2 * truth.range);
  // A single draw is noisy; most draws should still land inside the band.
  std::size_t inside = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    if (std::abs(fit_variogram(gaussian_field(truth, seed)).range - truth.range) <= 0.2 * truth.range) ++inside;
  }
  CHECK(inside >= 25);
}

TEST_CASE("rasters are deterministic and cover the points") {
  auto pts = scattered();
  auto spec = RasterSpec::covering(pts, 0.5, 1.0);
  CHECK(spec.x_min <= -1.0);
  CHECK(spec.x_min + spec.cell_size * double(spec.cols) >= 5.0);
  CHECK(spec.y_min + spec.cell_size * double(spec.rows) >= 4.5);
  auto model = fit_variogram(pts);
  auto a = krige(pts, model, spec, 1), b = krige(pts, model, spec, 4);
  CHECK(a.value == b.value);
  CHECK(a.variance == b.variance);
  CHECK(a.value.size() == spec.cols * spec.rows);
  for (std::size_t i = 0; i < a.value.size(); ++i) {
    CHECK(std::isfinite(a.value[i]));
    CHECK(a.variance[i] >= -1e-12);
  }
}

TEST_CASE("raster writers") {
  std::vector<SpatialPoint> pts{{0, 0, 1}, {1, 0, 2}, {0, 1, 3}};
  RasterSpec spec{0, 0, 0.5, 3, 2};
  auto field = krige(pts, SphericalVariogram{0, 1, 2}, spec);
  std::ostringstream csv, asc;
  write_raster_csv(csv, field);
  write_esri_ascii(asc, field);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "x,y,value,variance");
  std::size_t rows = 0;
  for (std::string l; std::getline(lines, l);) ++rows;
  CHECK(rows == 6);
  const auto text = asc.str();
  CHECK(text.find("ncols 3") != std::string::npos);
  CHECK(text.find("nrows 2") != std::string::npos);
  CHECK(text.find("cellsize 0.5") != std::string::npos);
}

TEST_CASE("grid points at buses and line midpoints") {
  auto g = fixture::grid({{"a"}, {"b"}, {"c"}}, {{"a", "b"}, {"b", "c"}});
  std::vector<double> node{1, 2, 3}, edge{10, 20};
  auto np = node_points(g, node);
  CHECK(np[2].x == 2.0);
  CHECK(np[2].value == 3.0);
  auto ep = edge_midpoints(g, edge);
  CHECK(ep[0].x == 0.5);
  CHECK(ep[1].y == 1.5);
  CHECK(ep[1].value == 20.0);
}
