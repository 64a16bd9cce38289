#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridrobust/grid_model.hpp"

namespace gridrobust {

struct SpatialPoint {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

/// gamma(h) = nugget + sill * (1.5 h/a - 0.5 (h/a)^3) for 0 < h <= a,
/// nugget + sill beyond the range, and 0 at h = 0.
struct SphericalVariogram {
  double nugget = 0.0;
  double sill = 1.0;  // partial sill c
  double range = 1.0;

  double operator()(double h) const;
};

struct EmpiricalVariogram {
  std::vector<double> lag;    // mean pair distance per bin
  std::vector<double> gamma;  // half mean squared difference per bin
  std::vector<std::size_t> pairs;
};

struct VariogramOptions {
  std::size_t bins = 15;
  double cutoff_fraction = 0.5;  // of the largest pairwise distance
};

EmpiricalVariogram empirical_variogram(std::span<const SpatialPoint> points, const VariogramOptions& options = {});

/// Weighted (pair count over squared lag) least-squares fit of the spherical model to the
/// empirical semivariogram. Needs at least 5 points that are not all
/// coincident.
SphericalVariogram fit_variogram(std::span<const SpatialPoint> points, const VariogramOptions& options = {});

/// Ordinary kriging with the unbiasedness constraint. Coincident input
/// points are averaged before the system is factorised.
class OrdinaryKriging {
 public:
  OrdinaryKriging(std::span<const SpatialPoint> points, const SphericalVariogram& model);

  struct Prediction {
    double value = 0.0;
    double variance = 0.0;
  };

  Prediction predict(double x, double y) const;
  /// Weights on the (deduplicated) data points at a location.
  std::vector<double> weights(double x, double y) const;

  const std::vector<SpatialPoint>& points() const { return points_; }
  bool merged_duplicates() const { return merged_duplicates_; }

 private:
  Eigen::VectorXd solve_at(double x, double y) const;

  std::vector<SpatialPoint> points_;
  SphericalVariogram model_;
  double variance_scale_ = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  bool merged_duplicates_ = false;
};

struct RasterSpec {
  double x_min = 0.0;
  double y_min = 0.0;
  double cell_size = 1.0;
  std::size_t cols = 1;
  std::size_t rows = 1;

  /// Cell centre; row 0 is the southern-most row.
  double cell_x(std::size_t col) const { return x_min + (static_cast<double>(col) + 0.5) * cell_size; }
  double cell_y(std::size_t row) const { return y_min + (static_cast<double>(row) + 0.5) * cell_size; }

  /// Covers the bounding box of the points plus `margin` on each side.
  static RasterSpec covering(std::span<const SpatialPoint> points, double cell_size, double margin = 0.0);
};

struct RasterField {
  RasterSpec spec;
  std::vector<double> value;     // row-major, row 0 south
  std::vector<double> variance;
};

RasterField krige(std::span<const SpatialPoint> points, const SphericalVariogram& model, const RasterSpec& spec,
                  std::size_t workers = 1);

void write_raster_csv(std::ostream& out, const RasterField& field);
void write_esri_ascii(std::ostream& out, const RasterField& field);

/// Node values at bus coordinates, or edge values at line midpoints.
std::vector<SpatialPoint> node_points(const PowerGrid& grid, std::span<const double> values);
std::vector<SpatialPoint> edge_midpoints(const PowerGrid& grid, std::span<const double> values);

nlohmann::json variogram_to_json(const SphericalVariogram& model, const VariogramOptions& options);

}  // namespace gridrobust
