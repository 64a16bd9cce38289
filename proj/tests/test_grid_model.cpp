#include <doctest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "gridrobust/grid_model.hpp"
#include "oracles.hpp"

using namespace gridrobust;

TEST_CASE("bundled IEEE grids load with the published sizes") {
  auto g14 = load_grid(oracle::data_path("ieee14.json"));
  CHECK(g14.bus_count() == 14);
  CHECK(g14.line_count() == 20);
  auto g30 = load_grid(oracle::data_path("ieee30.json"));
  CHECK(g30.bus_count() == 30);
  CHECK(g30.line_count() == 41);
  auto g118 = load_grid(oracle::data_path("ieee118.json"));
  CHECK(g118.bus_count() == 118);
  CHECK(g118.line_count() == 179);
}

TEST_CASE("summary statistics of IEEE-14 and IEEE-30") {
  auto s14 = summary_statistics(load_grid(oracle::data_path("ieee14.json")));
  CHECK(s14.node_count == 14);
  CHECK(s14.edge_count == 20);
  CHECK(s14.mean_degree == doctest::Approx(2.86).epsilon(0.005));
  CHECK(s14.assortativity == doctest::Approx(-0.07).epsilon(0.1));
  CHECK(s14.generator_count == 2);
  CHECK(s14.load_count == 11);

  auto s30 = summary_statistics(load_grid(oracle::data_path("ieee30.json")));
  CHECK(s30.node_count == 30);
  CHECK(s30.edge_count == 41);
  CHECK(s30.mean_degree == doctest::Approx(2.73).epsilon(0.005));
}

TEST_CASE("summary statistics of a single edge") {
  auto g = fixture::grid({{"a"}, {"b"}}, {{"a", "b"}});
  auto s = summary_statistics(g);
  CHECK(s.mean_degree == 1.0);
  CHECK(s.mean_distance == 1.0);
  CHECK(s.mean_clustering == 0.0);
}

TEST_CASE("cycles have undefined assortativity, flagged and reported as zero") {
  for (int n : {3, 5, 8}) {
    std::vector<fixture::BusSpec> buses;
    std::vector<fixture::LineSpec> lines;
    for (int i = 0; i < n; ++i) {
      buses.push_back({std::to_string(i)});
      lines.push_back({std::to_string(i), std::to_string((i + 1) % n)});
    }
    auto s = summary_statistics(fixture::grid(buses, lines));
    CHECK_FALSE(s.assortativity_defined);
    CHECK(s.assortativity == 0.0);
    if (n > 3) CHECK(s.mean_clustering == 0.0);
  }
}

TEST_CASE("parallel lines are collapsed for the topological statistics") {
  auto g = fixture::grid({{"a"}, {"b"}, {"c"}}, {{"a", "b"}, {"a", "b"}, {"b", "c"}});
  auto s = summary_statistics(g);
  CHECK(s.edge_count == 2);
  CHECK(s.mean_degree == doctest::Approx(4.0 / 3.0));
  // Degrees for the flow model still count each line.
  auto d = degrees(g);
  CHECK(d == std::vector<std::size_t>{2, 3, 1});
}

TEST_CASE("betweenness on a path of three") {
  // The middle node lies on the single a-c shortest path.
  auto g = fixture::grid({{"a"}, {"b"}, {"c"}}, {{"a", "b"}, {"b", "c"}});
  auto s = summary_statistics(g);
  CHECK(s.mean_betweenness == doctest::Approx(1.0 / 3.0));
  CHECK(s.mean_distance == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("disconnected grids average distance over reachable pairs") {
  auto g = fixture::grid({{"a"}, {"b"}, {"c"}, {"d"}}, {{"a", "b"}, {"c", "d"}});
  CHECK(summary_statistics(g).mean_distance == 1.0);
}

TEST_CASE("connected components") {
  SUBCASE("IEEE-14 is connected") {
    auto comps = connected_components(load_grid(oracle::data_path("ieee14.json")));
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].size() == 14);
  }
  SUBCASE("two disjoint edges") {
    auto comps = connected_components(fixture::grid({{"a"}, {"b"}, {"c"}, {"d"}}, {{"a", "b"}, {"c", "d"}}));
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].size() == 2);
    CHECK(comps[1].size() == 2);
  }
  SUBCASE("isolated bus and a triangle") {
    auto comps = connected_components(
        fixture::grid({{"x"}, {"a"}, {"b"}, {"c"}}, {{"a", "b"}, {"b", "c"}, {"c", "a"}}));
    REQUIRE(comps.size() == 2);
    std::vector<std::size_t> sizes{comps[0].size(), comps[1].size()};
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<std::size_t>{1, 3});
  }
}

TEST_CASE("component sizes sum to the bus count on every bundled grid and random masks") {
  for (const char* file : {"ieee14.json", "ieee30.json", "ieee118.json"}) {
    auto g = load_grid(oracle::data_path(file));
    std::uint64_t state = 12345;
    for (int trial = 0; trial < 20; ++trial) {
      LineMask mask(g.line_count());
      for (auto& m : mask) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        m = (state >> 60) < 10;  // keep about 5/8 of lines
      }
      auto labels = label_components(g, mask);
      std::size_t total = 0;
      for (const auto& members : labels.members()) total += members.size();
      CHECK(total == g.bus_count());
      // Maximal: no active line joins two different components.
      for (std::size_t l = 0; l < g.line_count(); ++l) {
        if (mask[l]) CHECK(labels.label[g.endpoints()[l].first] == labels.label[g.endpoints()[l].second]);
      }
    }
  }
}

TEST_CASE("canonical JSON round trip is field-for-field") {
  for (const char* file : {"ieee14.json", "ieee30.json", "ieee118.json"}) {
    auto g = load_grid(oracle::data_path(file));
    auto dir = fixture::scratch_dir("roundtrip_json");
    save_grid(g, dir / "grid.json", GridFormat::CanonicalJson);
    CHECK(load_grid(dir / "grid.json") == g);
    CHECK(grid_from_json(grid_to_json(g)) == g);
  }
}

TEST_CASE("node-edge CSV round trip keeps buses, lines and capacities") {
  auto g = fixture::grid({{"a", 5, 0}, {"b", 0, 2.5}, {"c", 0, 2.5}},
                         {{"a", "b", 2.0, 7.5}, {"b", "c", 0.125}, {"a", "c", 3.0, 1e-3}}, "toycsv");
  auto dir = fixture::scratch_dir("roundtrip_csv") / "toycsv";
  save_grid(g, dir, GridFormat::NodeEdgeCsv);
  auto back = load_grid(dir);
  CHECK(back == g);
}

namespace {

void expect_load_error(const std::string& text, const std::string& fragment) {
  auto dir = fixture::scratch_dir("bad_json");
  std::ofstream(dir / "g.json") << text;
  try {
    load_grid(dir / "g.json");
    FAIL("expected an error mentioning " << fragment);
  } catch (const std::runtime_error& e) {
    CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
  }
}

}  // namespace

TEST_CASE("validation errors carry record context") {
  const std::string bus_a = R"({"id":"a","x":0,"y":0,"generation":1,"demand":0})";
  const std::string bus_b = R"({"id":"b","x":1,"y":0,"generation":0,"demand":1})";
  CHECK_THROWS_AS(grid_from_json(nlohmann::json::parse(R"({"name":"e","buses":[],"lines":[]})")), ValidationError);
  expect_load_error(R"({"name":"e","buses":[],"lines":[]})", "empty");
  expect_load_error(R"({"name":"e","buses":[)" + bus_a + "," + bus_b +
                        R"(],"lines":[{"id":"l1","from":"a","to":"zz","susceptance":1}]})",
                    "zz");
  expect_load_error(R"({"name":"e","buses":[)" + bus_a + "," + bus_b +
                        R"(],"lines":[{"id":"l1","from":"a","to":"b","susceptance":0}]})",
                    "l1");
  expect_load_error(R"({"name":"e","buses":[)" + bus_a + "," + bus_a + R"(],"lines":[]})", "duplicate");
  expect_load_error(R"({"name":"e","buses":[)" + bus_a + "," + bus_b +
                        R"(],"lines":[{"id":"l1","from":"a","to":"a","susceptance":1}]})",
                    "self-loop");
  expect_load_error(R"({"name":"e","buses":[)" + bus_a + "," + bus_b +
                        R"(],"lines":[{"id":"l1","from":"a","to":"b","susceptance":1,"capacity":-2}]})",
                    "capacity");
  expect_load_error(R"({"name":"e","buses":[{"id":"a","x":0,"y":0,"generation":-1,"demand":0}],"lines":[]})",
                    "generation");
  expect_load_error(R"({"name": "e", "buses": [)", "g.json");
}

TEST_CASE("CSV parse errors name the file and line") {
  auto dir = fixture::scratch_dir("bad_csv");
  std::ofstream(dir / "nodes.csv") << "id,x,y,generation,demand\na,0,0,1,0\nb,0,zero,0,1\n";
  std::ofstream(dir / "edges.csv") << "id,from,to,susceptance,capacity\nl,a,b,1,\n";
  try {
    load_grid(dir);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("nodes.csv:3") != std::string::npos);
  }
}

TEST_CASE("parallel lines need distinct ids") {
  std::vector<Bus> buses{{"a", 0, 0, 1, 0}, {"b", 1, 0, 0, 1}};
  CHECK_NOTHROW(PowerGrid("p", buses, {{"l1", "a", "b", 1, {}}, {"l2", "a", "b", 1, {}}}));
  CHECK_THROWS_AS(PowerGrid("p", buses, {{"l1", "a", "b", 1, {}}, {"l1", "a", "b", 1, {}}}), ValidationError);
}

TEST_CASE("net injection is derived from generation and demand") {
  Bus b{"x", 0, 0, 7, 3};
  CHECK(b.net_injection() == 4);
  auto g = fixture::grid({{"a", 2, 5}, {"b", 3, 0}}, {{"a", "b"}});
  std::vector<double> gen{1, 1}, dem{0, 2};
  auto h = g.with_injections(gen, dem);
  CHECK(h.buses()[1].net_injection() == -1);
  CHECK(h.lines() == g.lines());
}
