#include "gridrobust/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "gridrobust/cascade_attack.hpp"
#include "gridrobust/errors.hpp"

namespace gridrobust {

namespace {

constexpr int kDegree = 3;

double quantile(std::vector<double> sorted_values, double prob) {
  const double pos = prob * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted_values[lo] * (1.0 - w) + sorted_values[hi] * w;
}

}  // namespace

std::vector<double> bspline_basis(std::span<const double> t, double x) {
  const std::size_t nb = t.size() - kDegree - 1;
  std::vector<double> out(nb, 0.0);
  // Knot span containing x; the right boundary belongs to the last span.
  std::size_t span = kDegree;
  if (x >= t[nb]) {
    span = nb - 1;
  } else {
    span = static_cast<std::size_t>(std::upper_bound(t.begin() + kDegree, t.begin() + static_cast<std::ptrdiff_t>(nb), x) -
                                    t.begin()) -
           1;
    span = std::max<std::size_t>(span, kDegree);
  }
  double left[kDegree + 1], right[kDegree + 1], basis[kDegree + 1];
  basis[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? basis[r] / denom : 0.0;
      basis[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    basis[j] = saved;
  }
  for (int r = 0; r <= kDegree; ++r) out[span - kDegree + r] = basis[r];
  return out;
}

PenalizedSpline PenalizedSpline::fit(std::span<const double> x, std::span<const double> y,
                                     const SplineOptions& options) {
  if (x.size() != y.size()) throw ValidationError("spline fit: x and y differ in length");
  if (x.size() < 10) throw ValidationError("spline fit needs at least 10 points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("spline fit: non-finite data");
  }
  PenalizedSpline s;
  s.mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  s.lo_ = sorted.front();
  s.hi_ = sorted.back();
  if (!(s.hi_ > s.lo_)) {
    s.constant_ = true;
    return s;
  }

  std::vector<double> interior;
  const std::size_t k = std::max<std::size_t>(options.knots, 2);
  for (std::size_t i = 0; i < k; ++i) {
    interior.push_back(quantile(sorted, static_cast<double>(i) / static_cast<double>(k - 1)));
  }
  interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
  s.knots_.assign(kDegree, interior.front());
  s.knots_.insert(s.knots_.end(), interior.begin(), interior.end());
  s.knots_.insert(s.knots_.end(), kDegree, interior.back());
  const auto nb = static_cast<Eigen::Index>(s.knots_.size() - kDegree - 1);
  const auto n = static_cast<Eigen::Index>(x.size());

  Eigen::MatrixXd basis(n, nb);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = bspline_basis(s.knots_, x[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < nb; ++j) basis(i, j) = row[static_cast<std::size_t>(j)];
  }
  const Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(y.data(), n);

  // Second divided differences over the Greville abscissae.
  std::vector<double> greville(static_cast<std::size_t>(nb));
  for (std::size_t j = 0; j < greville.size(); ++j) {
    greville[j] = (s.knots_[j + 1] + s.knots_[j + 2] + s.knots_[j + 3]) / 3.0;
  }
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(nb - 2, 0), nb);
  for (Eigen::Index j = 0; j + 2 < nb; ++j) {
    const double h0 = greville[static_cast<std::size_t>(j + 1)] - greville[static_cast<std::size_t>(j)];
    const double h1 = greville[static_cast<std::size_t>(j + 2)] - greville[static_cast<std::size_t>(j + 1)];
    diff(j, j) = 1.0 / h0;
    diff(j, j + 1) = -1.0 / h0 - 1.0 / h1;
    diff(j, j + 2) = 1.0 / h1;
  }
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  const Eigen::MatrixXd penalty = diff.transpose() * diff;
  const Eigen::VectorXd bty = basis.transpose() * target;
  const double scale = penalty.trace() > 0.0 ? gram.trace() / penalty.trace() : 1.0;
  const double ridge = 1e-10 * gram.trace() / static_cast<double>(nb);

  double best_gcv = std::numeric_limits<double>::infinity();
  const std::size_t steps = std::max<std::size_t>(options.lambda_steps, 2);
  for (std::size_t step = 0; step < steps; ++step) {
    const double log_lambda = options.log10_lambda_min + (options.log10_lambda_max - options.log10_lambda_min) *
                                                             static_cast<double>(step) /
                                                             static_cast<double>(steps - 1);
    const double lambda = std::pow(10.0, log_lambda) * scale;
    Eigen::MatrixXd system = gram + lambda * penalty;
    system.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd coef = ldlt.solve(bty);
    const double edf = ldlt.solve(gram).trace();
    const double rss = (target - basis * coef).squaredNorm();
    const double denom = static_cast<double>(n) - edf;
    if (!(denom > 1e-9)) continue;
    const double gcv = static_cast<double>(n) * rss / (denom * denom);
    if (gcv < best_gcv) {
      best_gcv = gcv;
      s.coef_.assign(coef.data(), coef.data() + coef.size());
      s.lambda_ = lambda;
      s.edf_ = edf;
      s.gcv_ = gcv;
    }
  }
  if (s.coef_.empty()) {
    s.constant_ = true;
    return s;
  }

  const auto& t = s.knots_;
  const auto& c = s.coef_;
  const std::size_t m = c.size();
  s.value_lo_ = s.evaluate_inside(s.lo_);
  s.value_hi_ = s.evaluate_inside(s.hi_);
  s.slope_lo_ = kDegree * (c[1] - c[0]) / (t[4] - t[1]);
  s.slope_hi_ = kDegree * (c[m - 1] - c[m - 2]) / (t[m + 2] - t[m - 1]);
  return s;
}

double PenalizedSpline::evaluate_inside(double x) const {
  const auto row = bspline_basis(knots_, x);
  double v = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) v += row[j] * coef_[j];
  return v;
}

double PenalizedSpline::operator()(double x) const {
  if (constant_) return mean_;
  if (x < lo_) return value_lo_ + slope_lo_ * (x - lo_);
  if (x > hi_) return value_hi_ + slope_hi_ * (x - hi_);
  return evaluate_inside(x);
}

std::vector<double> PenalizedSpline::predict(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
  return out;
}

double r_squared(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) throw ValidationError("r_squared: length mismatch");
  if (truth.size() < 2) throw ValidationError("r_squared needs at least 2 points");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
  }
  if (ss_tot == 0.0) throw ValidationError("r_squared undefined: truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

double smape(std::span<const double> truth, std::span<const double> predicted, std::size_t* zero_terms) {
  if (truth.size() != predicted.size()) throw ValidationError("smape: length mismatch");
  if (truth.empty()) throw ValidationError("smape needs at least one point");
  double sum = 0.0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double denom = (std::abs(truth[i]) + std::abs(predicted[i])) / 2.0;
    if (denom == 0.0) {
      ++zeros;
      continue;
    }
    sum += std::abs(predicted[i] - truth[i]) / denom;
  }
  if (zero_terms) *zero_terms += zeros;
  return 100.0 * sum / static_cast<double>(truth.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  if (x.size() < 3) throw ValidationError("pearson needs at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds == 0 || folds > n) throw ValidationError("fold count must lie in [1, n]");
  // Same portable shuffle as the attack sequences.
  const auto perm = make_attack_sequence(n, seed).order;
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    const auto begin = k * n / folds, end = (k + 1) * n / folds;
    out[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

CrossValidationReport cross_validate(std::span<const double> x, std::span<const double> y, std::size_t repeats,
                                     std::size_t folds, std::uint64_t seed, const SplineOptions& options) {
  if (x.size() != y.size()) throw ValidationError("cross_validate: length mismatch");
  if (x.size() < 20) throw ValidationError("cross-validation needs at least 20 points, got " + std::to_string(x.size()));
  if (folds < 2 || folds > x.size()) throw ValidationError("fold count must lie in [2, n]");
  CrossValidationReport report;
  report.n = x.size();
  report.repeats = repeats;
  report.folds = folds;
  report.seed = seed;

  double r2_sum = 0.0, smape_sum = 0.0;
  std::size_t r2_count = 0;
  std::vector<std::uint8_t> held(x.size());
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto partition = fold_partition(x.size(), folds, derive_run_seed(seed, r));
    for (std::size_t k = 0; k < folds; ++k) {
      std::fill(held.begin(), held.end(), 0);
      for (auto i : partition[k]) held[i] = 1;
      std::vector<double> tx, ty, vx, vy;
      for (std::size_t i = 0; i < x.size(); ++i) {
        (held[i] ? vx : tx).push_back(x[i]);
        (held[i] ? vy : ty).push_back(y[i]);
      }
      const auto model = PenalizedSpline::fit(tx, ty, options);
      if (model.constant()) ++report.constant_fits;
      const auto pred = model.predict(vx);
      FoldScore score{r, k, std::numeric_limits<double>::quiet_NaN(), 0.0, model.lambda()};
      try {
        score.r2 = r_squared(vy, pred);
        r2_sum += score.r2;
        ++r2_count;
      } catch (const ValidationError&) {
        ++report.undefined_r2;
      }
      score.smape = smape(vy, pred, &report.smape_zero_terms);
      smape_sum += score.smape;
      report.scores.push_back(score);
    }
  }
  report.mean_r2 = r2_count > 0 ? r2_sum / static_cast<double>(r2_count) : std::numeric_limits<double>::quiet_NaN();
  report.mean_smape = smape_sum / static_cast<double>(report.scores.size());
  return report;
}

nlohmann::json report_to_json(const CrossValidationReport& report) {
  nlohmann::json rec;
  rec["model"] = kRegressionModel;
  rec["n"] = report.n;
  rec["repeats"] = report.repeats;
  rec["folds"] = report.folds;
  rec["seed"] = report.seed;
  rec["scored_on"] = "held_out";
  rec["mean_r2"] = std::isfinite(report.mean_r2) ? nlohmann::json(report.mean_r2) : nlohmann::json(nullptr);
  rec["mean_smape"] = report.mean_smape;
  rec["undefined_r2"] = report.undefined_r2;
  rec["smape_zero_terms"] = report.smape_zero_terms;
  rec["constant_fits"] = report.constant_fits;
  auto& scores = rec["scores"] = nlohmann::json::array();
  for (const auto& s : report.scores) {
    scores.push_back({{"repeat", s.repeat},
                      {"fold", s.fold},
                      {"r2", std::isfinite(s.r2) ? nlohmann::json(s.r2) : nlohmann::json(nullptr)},
                      {"smape", s.smape},
                      {"lambda", s.lambda}});
  }
  return rec;
}

}  // namespace gridrobust
