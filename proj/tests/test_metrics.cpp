#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridrobust/cascade_attack.hpp"
#include "gridrobust/metrics.hpp"
#include "oracles.hpp"

using namespace gridrobust;

namespace {

std::vector<RobustnessSummary> group(const std::vector<double>& raw, const std::string& network = "n",
                                     Measure m = Measure::MeanStrain) {
  std::vector<RobustnessSummary> out;
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back({network, "p" + std::to_string(i), m, raw[i]});
  return out;
}

}  // namespace

TEST_CASE("aggregate is the mean absolute value") {
  std::vector<double> v{1, -1, 3}, zeros{0, 0, 0}, empty;
  CHECK(aggregate(v) == doctest::Approx(5.0 / 3.0));
  CHECK(aggregate(zeros) == 0.0);
  CHECK_THROWS_AS(aggregate(empty), ValidationError);
}

TEST_CASE("line load") {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> a{1, inf}, two{2}, twenty(7, 20.0), bad{0.9};
  CHECK(aggregate(line_load(a)) == 0.5);
  CHECK(line_load(two)[0] == 0.5);
  CHECK(aggregate(line_load(twenty)) == doctest::Approx(0.05));
  CHECK_THROWS_AS(line_load(bad), ValidationError);
}

TEST_CASE("measures on IEEE-14 match naive sums") {
  auto g = load_grid(oracle::data_path("ieee14.json"));
  auto base = initial_state(g).flows;
  auto profile = redistribute_excess(g, proportional_profile(g, base, 2), base,
                                     {Fraction::fixed(0.3), 0.5, Fraction::fixed(0.3), Direction::MostToLeast});
  auto alpha = edge_alpha(profile.capacity, base.flow);
  auto e = embed_grid(g, profile, base);
  auto m = profile_measures(alpha, e);
  double sa = 0, sl = 0, sz = 0, ss = 0, st = 0;
  for (std::size_t l = 0; l < alpha.size(); ++l) {
    sa += alpha[l];
    sl += 1.0 / alpha[l];
    ss += e.strain[l];
    st += e.tension[l];
  }
  for (double z : e.elevation) sz += z < 0 ? -z : z;
  const double L = double(alpha.size()), V = double(e.elevation.size());
  CHECK(m[0] == doctest::Approx(sa / L).epsilon(1e-12));
  CHECK(m[1] == doctest::Approx(sl / L).epsilon(1e-12));
  CHECK(m[2] == doctest::Approx(sz / V).epsilon(1e-12));
  CHECK(m[3] == doctest::Approx(ss / L).epsilon(1e-12));
  CHECK(m[4] == doctest::Approx(st / L).epsilon(1e-12));
}

TEST_CASE("min-max normalization") {
  auto s = group({2, 4, 6});
  normalize_batch(s);
  CHECK(s[0].kappa == 0.0);
  CHECK(s[1].kappa == 0.5);
  CHECK(s[2].kappa == 1.0);
  CHECK_FALSE(s[0].degenerate);

  auto d = group({3, 3});
  normalize_batch(d);
  CHECK(d[0].degenerate);
  CHECK(d[1].kappa == 0.0);

  // Groups are separated by network and by measure.
  auto mixed = group({1, 2}, "a");
  auto other = group({10, 30}, "b");
  auto tension = group({5, 6}, "a", Measure::MeanTension);
  mixed.insert(mixed.end(), other.begin(), other.end());
  mixed.insert(mixed.end(), tension.begin(), tension.end());
  normalize_batch(mixed);
  for (const auto& r : mixed) CHECK((r.kappa == 0.0 || r.kappa == 1.0));
}

TEST_CASE("kappa is invariant under positive affine maps") {
  std::vector<double> raw{0.3, 1.7, 0.9, 2.2, 1.1};
  auto a = group(raw), b = group(raw);
  for (auto& r : b) r.raw = 4.5 * r.raw - 12.0;
  normalize_batch(a);
  normalize_batch(b);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(a[i].kappa == doctest::Approx(b[i].kappa).epsilon(1e-12));
}

TEST_CASE("IEEE-30 batch: kappa spans [0, 1], Jensen holds, proportional ordering") {
  auto g = load_grid(oracle::data_path("ieee30.json"));
  auto base = initial_state(g).flows;
  ProfileGridSpec spec{{1.1, 2, 10}, {Fraction::fixed(0.1), Fraction::fixed(0.3)}, {0.5, 0.99},
                       {Fraction::fixed(0.1), Fraction::fixed(0.3)}};
  spec.include_proportional = true;
  auto set = generate_profile_grid(g, base, spec);
  std::vector<RobustnessSummary> batch;
  double last_alpha = 0.0, last_load = 2.0;
  for (const auto& p : set.profiles) {
    auto alpha = edge_alpha(p.capacity, base.flow);
    auto m = profile_measures(alpha, embed_grid(g, p, base));
    CHECK(m[1] > 0.0);
    CHECK(m[1] <= 1.0);
    CHECK(m[0] >= 1.0);
    CHECK(m[1] >= 1.0 / m[0] * (1 - 1e-12));
    if (!p.redistribution) {
      CHECK(m[0] > last_alpha);
      CHECK(m[1] < last_load);
      last_alpha = m[0];
      last_load = m[1];
    }
    for (std::size_t k = 0; k < kAllMeasures.size(); ++k) batch.push_back({"ieee30", p.id, kAllMeasures[k], m[k]});
  }
  normalize_batch(batch);
  for (auto measure : kAllMeasures) {
    double lo = 2, hi = -1;
    for (const auto& r : batch) {
      if (r.measure != measure) continue;
      CHECK(r.kappa >= 0.0);
      CHECK(r.kappa <= 1.0);
      lo = std::min(lo, r.kappa);
      hi = std::max(hi, r.kappa);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
}

TEST_CASE("measure names") {
  for (auto m : kAllMeasures) CHECK(measure_from_string(to_string(m)) == m);
  CHECK(to_string(Measure::MeanAbsElevation) == "mean_abs_elevation");
  CHECK_THROWS(measure_from_string("median_strain"));
}
