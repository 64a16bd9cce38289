#include "gridrobust/geospatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "csv.hpp"
#include "gridrobust/parallel.hpp"

namespace gridrobust {

double SphericalVariogram::operator()(double h) const {
  if (h <= 0.0) return 0.0;
  if (h >= range) return nugget + sill;
  const double r = h / range;
  return nugget + sill * (1.5 * r - 0.5 * r * r * r);
}

namespace {

double distance(const SpatialPoint& a, const SpatialPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double max_pair_distance(std::span<const SpatialPoint> points) {
  double d = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) d = std::max(d, distance(points[i], points[j]));
  }
  return d;
}

}  // namespace

EmpiricalVariogram empirical_variogram(std::span<const SpatialPoint> points, const VariogramOptions& options) {
  const double max_d = max_pair_distance(points);
  if (!(max_d > 0.0)) throw ValidationError("variogram: all points are coincident");
  const std::size_t bins = std::max<std::size_t>(options.bins, 1);
  double cutoff = options.cutoff_fraction * max_d;

  std::vector<double> lag_sum(bins), gamma_sum(bins);
  std::vector<std::size_t> count(bins);
  auto accumulate = [&](double cut) {
    std::fill(lag_sum.begin(), lag_sum.end(), 0.0);
    std::fill(gamma_sum.begin(), gamma_sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    const double width = cut / static_cast<double>(bins);
    std::size_t total = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (std::size_t j = i + 1; j < points.size(); ++j) {
        const double d = distance(points[i], points[j]);
        if (d == 0.0 || d > cut) continue;  // coincident pairs carry no lag
        const auto b = std::min(static_cast<std::size_t>(d / width), bins - 1);
        const double diff = points[i].value - points[j].value;
        lag_sum[b] += d;
        gamma_sum[b] += 0.5 * diff * diff;
        ++count[b];
        ++total;
      }
    }
    return total;
  };
  if (accumulate(cutoff) == 0) accumulate(cutoff = max_d);

  EmpiricalVariogram out;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    out.lag.push_back(lag_sum[b] / static_cast<double>(count[b]));
    out.gamma.push_back(gamma_sum[b] / static_cast<double>(count[b]));
    out.pairs.push_back(count[b]);
  }
  return out;
}

namespace {

// Bin weight N_j / h_j^2, which keeps the many long-lag pairs from
// swamping the short-range structure.
double bin_weight(const EmpiricalVariogram& ev, std::size_t i) {
  return static_cast<double>(ev.pairs[i]) / (ev.lag[i] * ev.lag[i]);
}

// Best nonnegative (nugget, sill) for a fixed range; returns the weighted SSE.
double fit_linear_part(const EmpiricalVariogram& ev, double range, double& nugget, double& sill) {
  const SphericalVariogram shape{0.0, 1.0, range};
  double sw = 0, ss = 0, sss = 0, sg = 0, ssg = 0;
  for (std::size_t i = 0; i < ev.lag.size(); ++i) {
    const double w = bin_weight(ev, i);
    const double s = shape(ev.lag[i]);
    sw += w;
    ss += w * s;
    sss += w * s * s;
    sg += w * ev.gamma[i];
    ssg += w * s * ev.gamma[i];
  }
  auto sse = [&](double c0, double c) {
    double e = 0.0;
    for (std::size_t i = 0; i < ev.lag.size(); ++i) {
      const double r = c0 + c * shape(ev.lag[i]) - ev.gamma[i];
      e += bin_weight(ev, i) * r * r;
    }
    return e;
  };
  const double det = sw * sss - ss * ss;
  if (std::abs(det) > 1e-12 * sw * sss) {
    const double c0 = (sg * sss - ss * ssg) / det;
    const double c = (sw * ssg - ss * sg) / det;
    if (c0 >= 0.0 && c >= 0.0) {
      nugget = c0;
      sill = c;
      return sse(c0, c);
    }
  }
  // Boundary candidates: pure sill or pure nugget.
  const double c_only = sss > 0.0 ? std::max(0.0, ssg / sss) : 0.0;
  const double c0_only = std::max(0.0, sg / sw);
  const double e1 = sse(0.0, c_only), e2 = sse(c0_only, 0.0);
  if (e1 <= e2) {
    nugget = 0.0;
    sill = c_only;
    return e1;
  }
  nugget = c0_only;
  sill = 0.0;
  return e2;
}

}  // namespace

SphericalVariogram fit_variogram(std::span<const SpatialPoint> points, const VariogramOptions& options) {
  if (points.size() < 5) throw ValidationError("variogram fit needs at least 5 points");
  const auto ev = empirical_variogram(points, options);
  const double max_lag = *std::max_element(ev.lag.begin(), ev.lag.end());
  const double lo = max_lag / 50.0, hi = 2.0 * max_lag;

  SphericalVariogram best{0.0, 0.0, hi};
  double best_sse = std::numeric_limits<double>::infinity();
  const int steps = 200;
  double best_log = 0.0;
  for (int s = 0; s <= steps; ++s) {
    const double log_a = std::log(lo) + (std::log(hi) - std::log(lo)) * s / steps;
    double c0 = 0, c = 0;
    const double e = fit_linear_part(ev, std::exp(log_a), c0, c);
    if (e < best_sse) {
      best_sse = e;
      best = {c0, c, std::exp(log_a)};
      best_log = log_a;
    }
  }
  // Golden-section refinement of the range around the best grid point.
  const double step = (std::log(hi) - std::log(lo)) / steps;
  double a = best_log - step, b = best_log + step;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  auto eval = [&](double log_a) {
    double c0 = 0, c = 0;
    return fit_linear_part(ev, std::exp(log_a), c0, c);
  };
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = eval(x2);
    }
  }
  const double refined = 0.5 * (a + b);
  double c0 = 0, c = 0;
  if (fit_linear_part(ev, std::exp(refined), c0, c) < best_sse) best = {c0, c, std::exp(refined)};
  return best;
}

OrdinaryKriging::OrdinaryKriging(std::span<const SpatialPoint> points, const SphericalVariogram& model)
    : model_(model) {
  if (points.empty()) throw ValidationError("kriging needs at least one data point");
  if (!(model.range > 0.0) || model.nugget < 0.0 || model.sill < 0.0) {
    throw ValidationError("variogram needs range > 0 and nonnegative nugget/sill");
  }
  // Average coincident points.
  std::map<std::pair<double, double>, std::pair<double, std::size_t>> merged;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.value)) {
      throw ValidationError("kriging: non-finite data point");
    }
    auto& slot = merged[{p.x, p.y}];
    slot.first += p.value;
    slot.second += 1;
  }
  merged_duplicates_ = merged.size() != points.size();
  if (merged_duplicates_) {
    for (const auto& [xy, acc] : merged) {
      points_.push_back({xy.first, xy.second, acc.first / static_cast<double>(acc.second)});
    }
  } else {
    points_.assign(points.begin(), points.end());
  }

  // Weights do not depend on the variogram's scale; a flat model gets a unit
  // sill and zero variance.
  if (!(model_.nugget + model_.sill > 0.0)) {
    model_ = {0.0, 1.0, model.range};
    variance_scale_ = 0.0;
  }
  const auto n = static_cast<Eigen::Index>(points_.size());
  Eigen::MatrixXd system(n + 1, n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      system(i, j) = model_(distance(points_[static_cast<std::size_t>(i)], points_[static_cast<std::size_t>(j)]));
    }
    system(i, n) = 1.0;
    system(n, i) = 1.0;
  }
  system(n, n) = 0.0;
  lu_.compute(system);
}

Eigen::VectorXd OrdinaryKriging::solve_at(double x, double y) const {
  const auto n = static_cast<Eigen::Index>(points_.size());
  Eigen::VectorXd rhs(n + 1);
  const SpatialPoint target{x, y, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) rhs[i] = model_(distance(points_[static_cast<std::size_t>(i)], target));
  rhs[n] = 1.0;
  return lu_.solve(rhs);
}

OrdinaryKriging::Prediction OrdinaryKriging::predict(double x, double y) const {
  const auto sol = solve_at(x, y);
  const auto n = static_cast<Eigen::Index>(points_.size());
  const SpatialPoint target{x, y, 0.0};
  Prediction out;
  double variance = sol[n];
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = points_[static_cast<std::size_t>(i)];
    out.value += sol[i] * p.value;
    variance += sol[i] * model_(distance(p, target));
  }
  out.variance = std::max(0.0, variance) * variance_scale_;
  return out;
}

std::vector<double> OrdinaryKriging::weights(double x, double y) const {
  const auto sol = solve_at(x, y);
  return {sol.data(), sol.data() + points_.size()};
}

RasterSpec RasterSpec::covering(std::span<const SpatialPoint> points, double cell_size, double margin) {
  if (points.empty() || !(cell_size > 0.0)) throw ValidationError("raster needs points and a positive cell size");
  double x0 = points[0].x, x1 = x0, y0 = points[0].y, y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  RasterSpec spec;
  spec.x_min = x0 - margin;
  spec.y_min = y0 - margin;
  spec.cell_size = cell_size;
  spec.cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((x1 - x0 + 2 * margin) / cell_size)));
  spec.rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((y1 - y0 + 2 * margin) / cell_size)));
  return spec;
}

RasterField krige(std::span<const SpatialPoint> points, const SphericalVariogram& model, const RasterSpec& spec,
                  std::size_t workers) {
  if (!(spec.cell_size > 0.0) || spec.cols == 0 || spec.rows == 0) throw ValidationError("invalid raster spec");
  const OrdinaryKriging kriging(points, model);
  RasterField field;
  field.spec = spec;
  field.value.resize(spec.rows * spec.cols);
  field.variance.resize(spec.rows * spec.cols);
  parallel_for(spec.rows, workers, [&](std::size_t r) {
    for (std::size_t c = 0; c < spec.cols; ++c) {
      const auto pred = kriging.predict(spec.cell_x(c), spec.cell_y(r));
      field.value[r * spec.cols + c] = pred.value;
      field.variance[r * spec.cols + c] = pred.variance;
    }
  });
  return field;
}

void write_raster_csv(std::ostream& out, const RasterField& field) {
  out << "x,y,value,variance\n";
  const auto& s = field.spec;
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      out << csv::format_double(s.cell_x(c)) << ',' << csv::format_double(s.cell_y(r)) << ','
          << csv::format_double(field.value[r * s.cols + c]) << ','
          << csv::format_double(field.variance[r * s.cols + c]) << '\n';
    }
  }
}

void write_esri_ascii(std::ostream& out, const RasterField& field) {
  const auto& s = field.spec;
  out << "ncols " << s.cols << '\n'
      << "nrows " << s.rows << '\n'
      << "xllcorner " << csv::format_double(s.x_min) << '\n'
      << "yllcorner " << csv::format_double(s.y_min) << '\n'
      << "cellsize " << csv::format_double(s.cell_size) << '\n'
      << "NODATA_value -9999\n";
  for (std::size_t r = s.rows; r-- > 0;) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      if (c) out << ' ';
      out << csv::format_double(field.value[r * s.cols + c]);
    }
    out << '\n';
  }
}

std::vector<SpatialPoint> node_points(const PowerGrid& grid, std::span<const double> values) {
  if (values.size() != grid.bus_count()) throw ValidationError("node values do not match bus count");
  std::vector<SpatialPoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({grid.buses()[i].x, grid.buses()[i].y, values[i]});
  return out;
}

std::vector<SpatialPoint> edge_midpoints(const PowerGrid& grid, std::span<const double> values) {
  if (values.size() != grid.line_count()) throw ValidationError("edge values do not match line count");
  std::vector<SpatialPoint> out;
  for (std::size_t l = 0; l < values.size(); ++l) {
    const auto& a = grid.buses()[grid.endpoints()[l].first];
    const auto& b = grid.buses()[grid.endpoints()[l].second];
    out.push_back({0.5 * (a.x + b.x), 0.5 * (a.y + b.y), values[l]});
  }
  return out;
}

nlohmann::json variogram_to_json(const SphericalVariogram& model, const VariogramOptions& options) {
  return {{"model", "spherical"},       {"nugget", model.nugget},
          {"sill", model.sill},         {"range", model.range},
          {"bins", options.bins},       {"cutoff_fraction", options.cutoff_fraction},
          {"distance", "planar_euclidean"}};
}

}  // namespace gridrobust
