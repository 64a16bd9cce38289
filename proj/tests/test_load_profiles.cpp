#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "gridrobust/cascade_attack.hpp"
#include "gridrobust/load_profiles.hpp"
#include "oracles.hpp"

using namespace gridrobust;

namespace {

// `n` disjoint generator-load pairs, each carrying one unit of flow.
PowerGrid unit_pairs(std::size_t n) {
  std::vector<fixture::BusSpec> buses;
  std::vector<fixture::LineSpec> lines;
  for (std::size_t i = 0; i < n; ++i) {
    auto g = "g" + std::to_string(i), d = "d" + std::to_string(i);
    buses.push_back({g, 1, 0});
    buses.push_back({d, 0, 1});
    lines.push_back({g, d});
  }
  return fixture::grid(buses, lines);
}

LineLimitProfile with_capacity(std::vector<double> capacity) {
  return {"hand", 2.0, std::nullopt, std::move(capacity)};
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<double> excess_of(const LineLimitProfile& p, const FlowSolution& flow) {
  std::vector<double> e(p.capacity.size());
  for (std::size_t l = 0; l < e.size(); ++l) e[l] = p.capacity[l] - std::abs(flow.flow[l]);
  return e;
}

}  // namespace

TEST_CASE("proportional profile") {
  auto g = fixture::grid({{"a", 2, 0}, {"b", 0, 2}}, {{"a", "b"}});
  auto flow = initial_state(g).flows;
  CHECK(proportional_profile(g, flow, 1.5).capacity[0] == doctest::Approx(3.0));
  CHECK(proportional_profile(g, flow, 1.0).capacity[0] == 2.0);
  CHECK(proportional_profile(g, flow, 1.5).id == "a1.5_prop");
  CHECK_THROWS_AS(proportional_profile(g, flow, 0.99), ValidationError);
}

TEST_CASE("zero-flow lines get alpha times the floor") {
  // Bus c hangs off b with no injection, so line b-c carries nothing.
  auto g = fixture::grid({{"a", 2, 0}, {"b", 0, 2}, {"c"}}, {{"a", "b"}, {"b", "c"}});
  auto flow = initial_state(g).flows;
  REQUIRE(flow.flow[1] == 0.0);
  auto p = proportional_profile(g, flow, 3.0);
  CHECK(p.capacity[1] == doctest::Approx(3.0 * kZeroFlowFloor));
  CHECK(p.capacity[1] > 0.0);
}

TEST_CASE("IEEE-14 alpha = 5 equals five times the oracle flows") {
  auto g = load_grid(oracle::data_path("ieee14.json"));
  auto state = initial_state(g);
  auto ref = oracle::dense_dc_flow(g, state.injections);
  auto p = proportional_profile(g, state.flows, 5.0);
  for (std::size_t l = 0; l < g.line_count(); ++l) {
    const double expected = 5.0 * std::max(std::abs(ref[l]), kZeroFlowFloor);
    CHECK(p.capacity[l] == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("redistribution on a five-edge toy, most to least") {
  auto g = unit_pairs(5);
  auto flow = initial_state(g).flows;
  // Excesses (10, 8, 6, 4, 2) over unit flows.
  auto base = with_capacity({11, 9, 7, 5, 3});
  Redistribution r{Fraction::fixed(0.4), 0.5, Fraction::fixed(0.4), Direction::MostToLeast};
  auto out = redistribute_excess(g, base, flow, r);
  // Donors {10, 8} give 5 + 4 = 9; recipients {4, 2} take 9 * 4/6 and 9 * 2/6.
  std::vector<double> expected{6, 5, 7, 11, 6};
  for (std::size_t l = 0; l < 5; ++l) CHECK(out.capacity[l] == doctest::Approx(expected[l]).epsilon(1e-12));
  CHECK(total(out.capacity) == doctest::Approx(total(base.capacity)).epsilon(1e-12));
  CHECK(out.id == "a2_p0.4_f0.5_q0.4_ml");
}

TEST_CASE("redistribution on a five-edge toy, least to most") {
  auto g = unit_pairs(5);
  auto flow = initial_state(g).flows;
  auto base = with_capacity({11, 9, 7, 5, 3});
  Redistribution r{Fraction::fixed(0.4), 0.5, Fraction::fixed(0.4), Direction::LeastToMost};
  auto out = redistribute_excess(g, base, flow, r);
  // Donors {2, 4} give 1 + 2 = 3; recipients {10, 8} take 3 * 10/18 and 3 * 8/18.
  std::vector<double> expected{11 + 30.0 / 18.0, 9 + 24.0 / 18.0, 7, 3, 2};
  for (std::size_t l = 0; l < 5; ++l) CHECK(out.capacity[l] == doctest::Approx(expected[l]).epsilon(1e-12));
}

TEST_CASE("f = 0 leaves the profile unchanged") {
  auto g = unit_pairs(5);
  auto flow = initial_state(g).flows;
  auto base = with_capacity({11, 9, 7, 5, 3});
  for (auto dir : {Direction::MostToLeast, Direction::LeastToMost}) {
    auto out = redistribute_excess(g, base, flow, {Fraction::fixed(0.4), 0.0, Fraction::fixed(0.4), dir});
    CHECK(out.capacity == base.capacity);
  }
}

TEST_CASE("donors and recipients never overlap") {
  auto g = unit_pairs(3);
  auto flow = initial_state(g).flows;
  auto base = with_capacity({4, 3, 2});
  // p = q = 0.5 of 3 edges rounds to 2 each; only one edge is left to receive.
  auto out = redistribute_excess(g, base, flow, {Fraction::fixed(0.5), 0.5, Fraction::fixed(0.5),
                                                 Direction::MostToLeast});
  CHECK(out.capacity[0] == doctest::Approx(2.5));
  CHECK(out.capacity[1] == doctest::Approx(2.0));
  CHECK(out.capacity[2] == doctest::Approx(4.5));
  // With every edge a donor nothing can receive.
  CHECK_THROWS_AS(redistribute_excess(g, base, flow, {Fraction::fixed(1.0), 0.5, Fraction::fixed(0.5),
                                                      Direction::MostToLeast}),
                  ProfileSkipped);
}

TEST_CASE("ties are broken by line id") {
  auto g = unit_pairs(4);
  auto flow = initial_state(g).flows;
  auto base = with_capacity({3, 3, 3, 3});
  auto out = redistribute_excess(g, base, flow, {Fraction::fixed(0.25), 0.5, Fraction::fixed(0.25),
                                                 Direction::MostToLeast});
  // Most-excess order reverses (excess, id) so the donor is the largest id and
  // the recipient the smallest.
  CHECK(out.capacity[3] == doctest::Approx(2.0));
  CHECK(out.capacity[0] == doctest::Approx(4.0));
}

TEST_CASE("fraction counts round to nearest with a minimum of one") {
  CHECK(fraction_count(0.1, 20) == 2);
  CHECK(fraction_count(0.1, 4) == 1);
  CHECK(fraction_count(0.01, 20) == 1);
  CHECK(fraction_count(0.5, 3) == 2);
  CHECK(fraction_count(1.0, 7) == 7);
  CHECK(fraction_count(0.25, 14) == 4);
}

TEST_CASE("1/V resolves against the bus count") {
  auto f = Fraction::parse("1/V");
  CHECK(f.per_node);
  CHECK(f.resolve(20) == 0.05);
  CHECK(f.label() == "1/V");
  CHECK(Fraction::parse("0.3").resolve(20) == 0.3);
  CHECK(profile_id(1.005, Redistribution{f, 0.25, Fraction::fixed(0.1), Direction::LeastToMost}) ==
        "a1.005_p1V_f0.25_q0.1_lm");
}

TEST_CASE("parameter validation") {
  auto g = unit_pairs(3);
  auto flow = initial_state(g).flows;
  auto base = with_capacity({4, 3, 2});
  CHECK_THROWS_AS(redistribute_excess(g, base, flow, {Fraction::fixed(0.0), 0.5, Fraction::fixed(0.5)}),
                  ValidationError);
  CHECK_THROWS_AS(redistribute_excess(g, base, flow, {Fraction::fixed(0.5), 1.0, Fraction::fixed(0.5)}),
                  ValidationError);
  CHECK_THROWS_AS(redistribute_excess(g, base, flow, {Fraction::fixed(0.5), 0.5, Fraction::fixed(1.5)}),
                  ValidationError);
  CHECK_THROWS_AS(generate_profile_grid(g, flow, ProfileGridSpec{{}, {}, {}, {}}), ValidationError);
}

TEST_CASE("single combination yields two profiles") {
  auto g = load_grid(oracle::data_path("ieee14.json"));
  auto flow = initial_state(g).flows;
  ProfileGridSpec spec{{2}, {Fraction::fixed(0.1)}, {0.5}, {Fraction::fixed(0.1)}};
  auto set = generate_profile_grid(g, flow, spec);
  REQUIRE(set.profiles.size() == 2);
  CHECK(set.profiles[0].id == "a2_p0.1_f0.5_q0.1_ml");
  CHECK(set.profiles[1].id == "a2_p0.1_f0.5_q0.1_lm");
  spec.include_proportional = true;
  set = generate_profile_grid(g, flow, spec);
  REQUIRE(set.profiles.size() == 3);
  CHECK(set.profiles[0].id == "a2_prop");
}

TEST_CASE("IEEE-14 default grid: count, conservation and strict headroom") {
  auto g = load_grid(oracle::data_path("ieee14.json"));
  auto flow = initial_state(g).flows;
  auto set = generate_profile_grid(g, flow, ProfileGridSpec{});
  CHECK(set.profiles.size() + set.skipped.size() == 3168);
  std::vector<std::string> ids;
  for (const auto& p : set.profiles) {
    const auto prop = proportional_profile(g, flow, p.alpha);
    CHECK(std::abs(total(p.capacity) - total(prop.capacity)) <= 1e-9 * total(prop.capacity));
    for (std::size_t l = 0; l < g.line_count(); ++l) CHECK(p.capacity[l] > std::abs(flow.flow[l]));
    ids.push_back(p.id);
  }
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("redistribution never lowers a recipient or raises a donor, and leaves the rest alone") {
  auto g = load_grid(oracle::data_path("ieee30.json"));
  auto flow = initial_state(g).flows;
  ProfileGridSpec spec{{1.2, 5}};
  auto set = generate_profile_grid(g, flow, spec);
  for (const auto& p : set.profiles) {
    const auto before = excess_of(proportional_profile(g, flow, p.alpha), flow);
    const auto after = excess_of(p, flow);
    std::size_t gained = 0, lost = 0;
    for (std::size_t l = 0; l < before.size(); ++l) {
      if (after[l] > before[l] * (1 + 1e-12)) ++gained;
      if (after[l] < before[l] * (1 - 1e-12)) ++lost;
      // Donors keep a (1 - f) share of their excess at least.
      CHECK(after[l] >= (1.0 - p.redistribution->f) * before[l] * (1 - 1e-12));
    }
    const auto& r = *p.redistribution;
    CHECK(lost <= fraction_count(r.p.resolve(g.bus_count()), g.line_count()));
    CHECK(gained <= fraction_count(r.q.resolve(g.bus_count()), g.line_count()));
  }
}

TEST_CASE("most-to-least can raise the maximum excess when a single recipient absorbs a large donation") {
  // Excesses (10, 1, 1): the donor's 9.9 lands on one recipient, which ends
  // above the old maximum. Only the weaker per-edge properties hold in general.
  auto g = unit_pairs(3);
  auto flow = initial_state(g).flows;
  auto base = with_capacity({11, 2, 2});
  auto out = redistribute_excess(g, base, flow, {Fraction::fixed(1.0 / 3.0), 0.99, Fraction::fixed(1.0 / 3.0),
                                                 Direction::MostToLeast});
  auto e = excess_of(out, flow);
  CHECK(*std::max_element(e.begin(), e.end()) > 10.0);
}

TEST_CASE("profile sets are byte-identical across generations and survive JSONL") {
  auto g = load_grid(oracle::data_path("ieee14.json"));
  auto flow = initial_state(g).flows;
  ProfileGridSpec spec{{1.1, 3}};
  spec.include_proportional = true;
  auto a = generate_profile_grid(g, flow, spec), b = generate_profile_grid(g, flow, spec);
  std::ostringstream sa, sb;
  write_profiles_jsonl(sa, a.profiles);
  write_profiles_jsonl(sb, b.profiles);
  CHECK(sa.str() == sb.str());
  std::istringstream in("{\"meta\":{\"experiment\":\"x\"}}\n" + sa.str());
  auto back = read_profiles_jsonl(in);
  REQUIRE(back.size() == a.profiles.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == a.profiles[i]);
}

TEST_CASE("edge alpha uses the zero-flow floor and never drops below one") {
  std::vector<double> cap{3, 2, 5e-6}, flow{1.5, -4, 0};
  auto a = edge_alpha(cap, flow);
  CHECK(a[0] == 2.0);
  CHECK(a[1] == 1.0);
  CHECK(a[2] == doctest::Approx(5.0));
}
