#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridrobust {

inline constexpr const char* kRegressionModel = "penalized_cubic_bspline_gcv";

struct SplineOptions {
  std::size_t knots = 20;            // placed at quantiles of x
  double log10_lambda_min = -8.0;    // relative to tr(B'B)/tr(P)
  double log10_lambda_max = 6.0;
  std::size_t lambda_steps = 57;
};

/// Univariate cubic B-spline regression with a second-divided-difference
/// penalty on the coefficients (zero for any linear function) and the
/// smoothing weight chosen by generalized cross-validation. Extrapolates
/// linearly beyond the training range.
class PenalizedSpline {
 public:
  static PenalizedSpline fit(std::span<const double> x, std::span<const double> y, const SplineOptions& options = {});

  double operator()(double x) const;
  std::vector<double> predict(std::span<const double> x) const;

  bool constant() const { return constant_; }  // degenerate x, mean predictor
  double lambda() const { return lambda_; }
  double effective_dof() const { return edf_; }
  double gcv_score() const { return gcv_; }
  const std::vector<double>& knots() const { return knots_; }

 private:
  double evaluate_inside(double x) const;

  std::vector<double> knots_;  // full clamped knot vector
  std::vector<double> coef_;
  double lo_ = 0.0, hi_ = 0.0;
  double value_lo_ = 0.0, value_hi_ = 0.0, slope_lo_ = 0.0, slope_hi_ = 0.0;
  double mean_ = 0.0;
  bool constant_ = false;
  double lambda_ = 0.0, edf_ = 0.0, gcv_ = 0.0;
};

/// Values of all cubic B-splines on a clamped knot vector at x.
std::vector<double> bspline_basis(std::span<const double> knots, double x);

/// 1 - SS_res / SS_tot. Throws ValidationError when truth is constant.
double r_squared(std::span<const double> truth, std::span<const double> predicted);

/// (100/n) sum |p - r| / ((|r| + |p|) / 2); terms with r = p = 0 count as 0
/// and are tallied in `zero_terms` when given.
double smape(std::span<const double> truth, std::span<const double> predicted, std::size_t* zero_terms = nullptr);

/// Product-moment correlation. Throws ValidationError on zero variance or n < 3.
double pearson(std::span<const double> x, std::span<const double> y);

/// Held-out index sets of one repeat: a seeded shuffle cut into `folds`
/// contiguous blocks whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::size_t folds, std::uint64_t seed);

struct FoldScore {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  double r2 = 0.0;     // NaN when the held-out truth is constant
  double smape = 0.0;
  double lambda = 0.0;
};

struct CrossValidationReport {
  std::size_t n = 0;
  std::size_t repeats = 0;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<FoldScore> scores;
  double mean_r2 = 0.0;  // over folds with a defined R^2
  double mean_smape = 0.0;
  std::size_t undefined_r2 = 0;
  std::size_t smape_zero_terms = 0;
  std::size_t constant_fits = 0;
};

/// Repeated k-fold CV of the penalized spline, scored on the held-out fold.
/// Needs at least 20 points and folds <= n.
CrossValidationReport cross_validate(std::span<const double> x, std::span<const double> y, std::size_t repeats = 10,
                                     std::size_t folds = 10, std::uint64_t seed = 0,
                                     const SplineOptions& options = {});

nlohmann::json report_to_json(const CrossValidationReport& report);

}  // namespace gridrobust
