#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridrobust/errors.hpp"

namespace gridrobust {

struct Bus {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double generation = 0.0;  // MW
  double demand = 0.0;      // MW

  double net_injection() const { return generation - demand; }
  bool operator==(const Bus&) const = default;
};

struct Line {
  std::string id;
  std::string from;
  std::string to;
  double susceptance = 1.0;
  std::optional<double> capacity;  // MW

  bool operator==(const Line&) const = default;
};

/// Per-line on/off flags, indexed like PowerGrid::lines().
using LineMask = std::vector<std::uint8_t>;

/// Immutable bus/line topology. Construction validates every invariant and
/// throws ValidationError with the offending record on failure.
class PowerGrid {
 public:
  PowerGrid(std::string name, std::vector<Bus> buses, std::vector<Line> lines);

  const std::string& name() const { return name_; }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  std::size_t bus_count() const { return buses_.size(); }
  std::size_t line_count() const { return lines_.size(); }

  /// Bus indices of each line's (from, to) endpoints.
  const std::vector<std::pair<std::size_t, std::size_t>>& endpoints() const { return endpoints_; }

  std::size_t bus_index(std::string_view id) const;
  std::optional<std::size_t> find_bus(std::string_view id) const;
  std::optional<std::size_t> find_line(std::string_view id) const;

  /// Copy with bus generation/demand replaced; topology unchanged.
  PowerGrid with_injections(std::span<const double> generation, std::span<const double> demand) const;

  bool operator==(const PowerGrid& other) const {
    return name_ == other.name_ && buses_ == other.buses_ && lines_ == other.lines_;
  }

 private:
  std::string name_;
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<std::pair<std::size_t, std::size_t>> endpoints_;
  std::unordered_map<std::string, std::size_t> bus_lookup_;
  std::unordered_map<std::string, std::size_t> line_lookup_;
};

enum class GridFormat { CanonicalJson, NodeEdgeCsv };

/// CanonicalJson reads a single file; NodeEdgeCsv reads nodes.csv and
/// edges.csv from the given directory.
PowerGrid load_grid(const std::filesystem::path& path, GridFormat format);
/// Picks the format from the path: directories are node-edge CSV.
PowerGrid load_grid(const std::filesystem::path& path);
void save_grid(const PowerGrid& grid, const std::filesystem::path& path, GridFormat format);

PowerGrid grid_from_json(const nlohmann::json& doc);
nlohmann::json grid_to_json(const PowerGrid& grid);

/// Component label per bus over the lines enabled in `active` (all lines if
/// empty). Labels are numbered in order of each component's lowest bus index.
struct ComponentLabels {
  std::vector<std::size_t> label;
  std::size_t count = 0;

  std::vector<std::vector<std::size_t>> members() const;
};

ComponentLabels label_components(const PowerGrid& grid, const LineMask& active = {});

/// Partition of bus ids into maximal connected components.
std::vector<std::vector<std::string>> connected_components(const PowerGrid& grid);

/// Per-bus line count over the active lines (parallel lines count separately).
std::vector<std::size_t> degrees(const PowerGrid& grid, const LineMask& active = {});

struct SummaryStatistics {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;  // simple projection
  double mean_degree = 0.0;
  double assortativity = 0.0;
  bool assortativity_defined = true;
  double mean_clustering = 0.0;
  double mean_distance = 0.0;
  double mean_betweenness = 0.0;  // normalized by (n-1)(n-2)/2
  std::size_t generator_count = 0;
  std::size_t load_count = 0;
};

SummaryStatistics summary_statistics(const PowerGrid& grid);

}  // namespace gridrobust
