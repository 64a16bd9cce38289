#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gridrobust/grid_model.hpp"

namespace fixture {

struct BusSpec {
  std::string id;
  double generation = 0.0;
  double demand = 0.0;
};

struct LineSpec {
  std::string from;
  std::string to;
  double susceptance = 1.0;
  std::optional<double> capacity = std::nullopt;
};

/// Grid with buses on a diagonal and lines named "<from>-<to>".
inline gridrobust::PowerGrid grid(const std::vector<BusSpec>& buses, const std::vector<LineSpec>& lines,
                                  const std::string& name = "toy") {
  std::vector<gridrobust::Bus> b;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    b.push_back({buses[i].id, double(i), double(i), buses[i].generation, buses[i].demand});
  }
  std::vector<gridrobust::Line> l;
  for (const auto& s : lines) {
    auto id = s.from + "-" + s.to;
    while (std::any_of(l.begin(), l.end(), [&](const auto& x) { return x.id == id; })) id += "'";
    l.push_back({id, s.from, s.to, s.susceptance, s.capacity});
  }
  return gridrobust::PowerGrid(name, std::move(b), std::move(l));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gridrobust_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
