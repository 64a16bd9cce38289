#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gridrobust/errors.hpp"
#include "gridrobust/evaluation.hpp"

using namespace gridrobust;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * double(i) / double(n - 1);
  return v;
}

}  // namespace

TEST_CASE("the spline reproduces a line") {
  auto x = linspace(0, 3, 40);
  std::vector<double> y;
  for (double v : x) y.push_back(2.5 * v - 1.0);
  auto s = PenalizedSpline::fit(x, y);
  for (double t : linspace(0, 3, 97)) CHECK(std::abs(s(t) - (2.5 * t - 1.0)) < 1e-6);
  // Linear extrapolation continues the line.
  CHECK(std::abs(s(4.0) - 9.0) < 1e-6);
  CHECK(std::abs(s(-1.0) + 3.5) < 1e-6);
}

TEST_CASE("constant y gives a constant predictor") {
  auto x = linspace(0, 1, 25);
  std::vector<double> y(25, 4.0);
  auto s = PenalizedSpline::fit(x, y);
  for (double t : linspace(-0.5, 1.5, 11)) CHECK(s(t) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("identical x falls back to the mean") {
  std::vector<double> x(12, 0.7), y;
  for (int i = 0; i < 12; ++i) y.push_back(i);
  auto s = PenalizedSpline::fit(x, y);
  CHECK(s.constant());
  CHECK(s(0.0) == doctest::Approx(5.5));
}

TEST_CASE("a noise-free sine is recovered") {
  auto x = linspace(0, 1, 200);
  std::vector<double> y;
  for (double v : x) y.push_back(std::sin(2 * std::numbers::pi * v));
  auto s = PenalizedSpline::fit(x, y);
  double worst = 0.0;
  for (double t : linspace(0, 1, 1001)) worst = std::max(worst, std::abs(s(t) - std::sin(2 * std::numbers::pi * t)));
  CHECK(worst < 0.05);
}

TEST_CASE("B-spline basis is a partition of unity") {
  auto x = linspace(0, 1, 50);
  std::vector<double> y(x.begin(), x.end());
  auto s = PenalizedSpline::fit(x, y);
  for (double t : linspace(0, 1, 33)) {
    auto b = bspline_basis(s.knots(), t);
    double sum = 0.0;
    for (double v : b) {
      CHECK(v >= -1e-15);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fit preconditions") {
  auto x = linspace(0, 1, 9);
  CHECK_THROWS_AS(PenalizedSpline::fit(x, x), ValidationError);
  std::vector<double> a{1, 2}, b{1};
  CHECK_THROWS_AS(PenalizedSpline::fit(a, b), ValidationError);
}

TEST_CASE("R squared") {
  std::vector<double> t{1, 2, 3}, worse{1, 2, 5}, mean{2, 2, 2};
  CHECK(r_squared(t, t) == 1.0);
  CHECK(r_squared(t, mean) == 0.0);
  CHECK(r_squared(t, worse) == doctest::Approx(-1.0));
  // Shifting both series leaves both sums of squares alone.
  std::vector<double> ts{11, 12, 13}, ws{11, 12, 15};
  CHECK(r_squared(ts, ws) == doctest::Approx(-1.0));
  std::vector<double> flat{4, 4, 4};
  CHECK_THROWS_AS(r_squared(flat, t), ValidationError);
}

TEST_CASE("SMAPE") {
  std::vector<double> one{1}, three{3}, zero{0};
  CHECK(smape(one, one) == 0.0);
  CHECK(smape(one, three) == doctest::Approx(100.0));
  CHECK(smape(one, zero) == doctest::Approx(200.0));
  std::size_t zeros = 0;
  std::vector<double> r{0, 2}, p{0, 2};
  CHECK(smape(r, p, &zeros) == 0.0);
  CHECK(zeros == 1);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> a(8), b(8);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    const double s = smape(a, b);
    CHECK(s == smape(b, a));
    CHECK(s >= 0.0);
    CHECK(s <= 200.0);
  }
}

TEST_CASE("Pearson correlation") {
  std::vector<double> x{1, 2, 3}, y{1, 3, 2};
  CHECK(pearson(x, y) == doctest::Approx(0.5));
  std::vector<double> lin{3, 5, 7}, neg{-1, -2, -3};
  CHECK(pearson(x, lin) == doctest::Approx(1.0));
  CHECK(pearson(x, neg) == doctest::Approx(-1.0));

  std::vector<double> u{0.3, 1.9, -0.4, 2.2, 0.8}, v{1.1, 0.2, -0.7, 3.0, 0.4};
  auto w = v;
  for (auto& e : w) e = 7.0 * e + 2.0;
  CHECK(pearson(u, w) == doctest::Approx(pearson(u, v)).epsilon(1e-12));
  std::vector<double> c{2, 2, 2};
  CHECK_THROWS_AS(pearson(x, c), ValidationError);
  std::vector<double> two{1, 2};
  CHECK_THROWS_AS(pearson(two, two), ValidationError);
}

TEST_CASE("fold partitions cover every index exactly once") {
  for (std::size_t n : {20u, 37u, 100u}) {
    for (std::size_t folds : {2u, 5u, 10u}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto parts = fold_partition(n, folds, seed);
        REQUIRE(parts.size() == folds);
        std::vector<int> seen(n, 0);
        std::size_t lo = n, hi = 0;
        for (const auto& p : parts) {
          for (auto i : p) ++seen[i];
          lo = std::min(lo, p.size());
          hi = std::max(hi, p.size());
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
        CHECK(hi - lo <= 1);
      }
    }
  }
  auto ten = fold_partition(100, 10, 3);
  for (const auto& p : ten) CHECK(p.size() == 10);
}

TEST_CASE("cross-validation counts, determinism and a known signal") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> x(100), y(100);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = double(i) / 99.0;
    y[i] = 1.0 + 3.0 * x[i] * x[i] + noise(rng);
  }
  auto a = cross_validate(x, y, 10, 10, 42), b = cross_validate(x, y, 10, 10, 42);
  CHECK(a.scores.size() == 100);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(a.mean_r2 > 0.95);
  CHECK(a.mean_smape >= 0.0);
  CHECK(a.mean_smape <= 200.0);
  auto c = cross_validate(x, y, 10, 10, 43);
  CHECK(report_to_json(a) != report_to_json(c));
}

TEST_CASE("cross-validation preconditions") {
  auto x = linspace(0, 1, 19);
  CHECK_THROWS_AS(cross_validate(x, x), ValidationError);
  auto x20 = linspace(0, 1, 20);
  CHECK_THROWS_AS(cross_validate(x20, x20, 1, 21), ValidationError);
  CHECK_NOTHROW(cross_validate(x20, x20, 1, 10));
}
