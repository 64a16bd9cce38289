#include "gridrobust/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>

#include "csv.hpp"

namespace gridrobust {

PowerGrid::PowerGrid(std::string name, std::vector<Bus> buses, std::vector<Line> lines)
    : name_(std::move(name)), buses_(std::move(buses)), lines_(std::move(lines)) {
  if (buses_.empty()) throw ValidationError("grid '" + name_ + "': bus list is empty");

  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const auto& bus = buses_[i];
    const auto where = "bus #" + std::to_string(i) + " ('" + bus.id + "')";
    if (bus.id.empty()) throw ValidationError(where + ": empty id");
    if (!std::isfinite(bus.x) || !std::isfinite(bus.y)) throw ValidationError(where + ": non-finite coordinate");
    if (!(bus.generation >= 0.0) || !std::isfinite(bus.generation)) {
      throw ValidationError(where + ": generation must be finite and >= 0");
    }
    if (!(bus.demand >= 0.0) || !std::isfinite(bus.demand)) {
      throw ValidationError(where + ": demand must be finite and >= 0");
    }
    if (!bus_lookup_.emplace(bus.id, i).second) throw ValidationError(where + ": duplicate bus id");
  }

  endpoints_.reserve(lines_.size());
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    const auto& line = lines_[i];
    const auto where = "line #" + std::to_string(i) + " ('" + line.id + "')";
    if (line.id.empty()) throw ValidationError(where + ": empty id");
    auto from = bus_lookup_.find(line.from);
    auto to = bus_lookup_.find(line.to);
    if (from == bus_lookup_.end()) throw ValidationError(where + ": unknown from bus '" + line.from + "'");
    if (to == bus_lookup_.end()) throw ValidationError(where + ": unknown to bus '" + line.to + "'");
    if (from->second == to->second) throw ValidationError(where + ": self-loop");
    if (!(line.susceptance > 0.0) || !std::isfinite(line.susceptance)) {
      throw ValidationError(where + ": susceptance must be finite and > 0");
    }
    if (line.capacity && (!(*line.capacity > 0.0) || !std::isfinite(*line.capacity))) {
      throw ValidationError(where + ": capacity must be finite and > 0");
    }
    if (!line_lookup_.emplace(line.id, i).second) throw ValidationError(where + ": duplicate line id");
    endpoints_.emplace_back(from->second, to->second);
  }
}

std::size_t PowerGrid::bus_index(std::string_view id) const {
  auto found = find_bus(id);
  if (!found) throw ValidationError("unknown bus id '" + std::string(id) + "'");
  return *found;
}

std::optional<std::size_t> PowerGrid::find_bus(std::string_view id) const {
  auto it = bus_lookup_.find(std::string(id));
  if (it == bus_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> PowerGrid::find_line(std::string_view id) const {
  auto it = line_lookup_.find(std::string(id));
  if (it == line_lookup_.end()) return std::nullopt;
  return it->second;
}

PowerGrid PowerGrid::with_injections(std::span<const double> generation, std::span<const double> demand) const {
  if (generation.size() != buses_.size() || demand.size() != buses_.size()) {
    throw ValidationError("injection override size does not match bus count");
  }
  auto buses = buses_;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    buses[i].generation = generation[i];
    buses[i].demand = demand[i];
  }
  return PowerGrid(name_, std::move(buses), lines_);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

double json_number(const nlohmann::json& record, const char* key, const std::string& where) {
  auto it = record.find(key);
  if (it == record.end()) throw ParseError(where + ": missing field '" + key + "'");
  if (!it->is_number()) throw ParseError(where + ": field '" + key + "' is not a number");
  return it->get<double>();
}

std::string json_string(const nlohmann::json& record, const char* key, const std::string& where) {
  auto it = record.find(key);
  if (it == record.end()) throw ParseError(where + ": missing field '" + key + "'");
  if (!it->is_string()) throw ParseError(where + ": field '" + key + "' is not a string");
  return it->get<std::string>();
}

}  // namespace

PowerGrid grid_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("grid document is not a JSON object");
  std::string name = doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>() : "";
  if (!doc.contains("buses") || !doc["buses"].is_array()) throw ParseError("grid document: 'buses' array missing");
  if (!doc.contains("lines") || !doc["lines"].is_array()) throw ParseError("grid document: 'lines' array missing");

  std::vector<Bus> buses;
  for (std::size_t i = 0; i < doc["buses"].size(); ++i) {
    const auto& rec = doc["buses"][i];
    const auto where = "buses[" + std::to_string(i) + "]";
    if (!rec.is_object()) throw ParseError(where + ": not an object");
    buses.push_back(Bus{json_string(rec, "id", where), json_number(rec, "x", where), json_number(rec, "y", where),
                        json_number(rec, "generation", where), json_number(rec, "demand", where)});
  }
  std::vector<Line> lines;
  for (std::size_t i = 0; i < doc["lines"].size(); ++i) {
    const auto& rec = doc["lines"][i];
    const auto where = "lines[" + std::to_string(i) + "]";
    if (!rec.is_object()) throw ParseError(where + ": not an object");
    Line line{json_string(rec, "id", where), json_string(rec, "from", where), json_string(rec, "to", where),
              json_number(rec, "susceptance", where), std::nullopt};
    if (rec.contains("capacity") && !rec["capacity"].is_null()) line.capacity = json_number(rec, "capacity", where);
    lines.push_back(std::move(line));
  }
  return PowerGrid(std::move(name), std::move(buses), std::move(lines));
}

nlohmann::json grid_to_json(const PowerGrid& grid) {
  nlohmann::json doc;
  doc["name"] = grid.name();
  auto& buses = doc["buses"] = nlohmann::json::array();
  for (const auto& bus : grid.buses()) {
    buses.push_back({{"id", bus.id}, {"x", bus.x}, {"y", bus.y}, {"generation", bus.generation}, {"demand", bus.demand}});
  }
  auto& lines = doc["lines"] = nlohmann::json::array();
  for (const auto& line : grid.lines()) {
    nlohmann::json rec{{"id", line.id}, {"from", line.from}, {"to", line.to}, {"susceptance", line.susceptance}};
    if (line.capacity) rec["capacity"] = *line.capacity;
    lines.push_back(std::move(rec));
  }
  return doc;
}

namespace {

PowerGrid load_csv_grid(const std::filesystem::path& dir) {
  auto nodes = csv::read_file((dir / "nodes.csv").string());
  auto edges = csv::read_file((dir / "edges.csv").string());

  std::vector<Bus> buses;
  const auto c_id = nodes.column("id"), c_x = nodes.column("x"), c_y = nodes.column("y");
  const auto c_gen = nodes.column("generation"), c_dem = nodes.column("demand");
  for (std::size_t r = 0; r < nodes.rows.size(); ++r) {
    const auto& row = nodes.rows[r];
    const auto where = nodes.where(r);
    buses.push_back(Bus{row[c_id], csv::parse_double(row[c_x], where), csv::parse_double(row[c_y], where),
                        csv::parse_double(row[c_gen], where), csv::parse_double(row[c_dem], where)});
  }
  std::vector<Line> lines;
  const auto e_id = edges.column("id"), e_from = edges.column("from"), e_to = edges.column("to");
  const auto e_b = edges.column("susceptance");
  const bool has_cap = edges.has_column("capacity");
  for (std::size_t r = 0; r < edges.rows.size(); ++r) {
    const auto& row = edges.rows[r];
    const auto where = edges.where(r);
    Line line{row[e_id], row[e_from], row[e_to], csv::parse_double(row[e_b], where), std::nullopt};
    if (has_cap && !row[edges.column("capacity")].empty()) {
      line.capacity = csv::parse_double(row[edges.column("capacity")], where);
    }
    lines.push_back(std::move(line));
  }
  return PowerGrid(dir.filename().string(), std::move(buses), std::move(lines));
}

}  // namespace

PowerGrid load_grid(const std::filesystem::path& path, GridFormat format) {
  if (format == GridFormat::NodeEdgeCsv) return load_csv_grid(path);
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return grid_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

PowerGrid load_grid(const std::filesystem::path& path) {
  return load_grid(path, std::filesystem::is_directory(path) ? GridFormat::NodeEdgeCsv : GridFormat::CanonicalJson);
}

void save_grid(const PowerGrid& grid, const std::filesystem::path& path, GridFormat format) {
  if (format == GridFormat::CanonicalJson) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path.string());
    out << grid_to_json(grid).dump(1) << '\n';
    return;
  }
  std::filesystem::create_directories(path);
  std::ofstream nodes(path / "nodes.csv");
  nodes << "id,x,y,generation,demand\n";
  for (const auto& b : grid.buses()) {
    nodes << b.id << ',' << csv::format_double(b.x) << ',' << csv::format_double(b.y) << ','
          << csv::format_double(b.generation) << ',' << csv::format_double(b.demand) << '\n';
  }
  std::ofstream edges(path / "edges.csv");
  edges << "id,from,to,susceptance,capacity\n";
  for (const auto& l : grid.lines()) {
    edges << l.id << ',' << l.from << ',' << l.to << ',' << csv::format_double(l.susceptance) << ','
          << (l.capacity ? csv::format_double(*l.capacity) : "") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Graph utilities

namespace {

bool is_active(const LineMask& active, std::size_t line) { return active.empty() || active[line] != 0; }

// Sorted, deduplicated neighbour lists of the simple undirected projection.
std::vector<std::vector<std::size_t>> simple_adjacency(const PowerGrid& grid) {
  std::vector<std::vector<std::size_t>> adj(grid.bus_count());
  for (auto [a, b] : grid.endpoints()) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& n : adj) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

}  // namespace

std::vector<std::vector<std::size_t>> ComponentLabels::members() const {
  std::vector<std::vector<std::size_t>> out(count);
  for (std::size_t i = 0; i < label.size(); ++i) out[label[i]].push_back(i);
  return out;
}

ComponentLabels label_components(const PowerGrid& grid, const LineMask& active) {
  const auto n = grid.bus_count();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const auto& ends = grid.endpoints();
  for (std::size_t l = 0; l < ends.size(); ++l) {
    if (!is_active(active, l)) continue;
    auto a = find(ends[l].first), b = find(ends[l].second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  ComponentLabels out;
  out.label.assign(n, 0);
  std::vector<std::size_t> root_label(n, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = find(i);
    if (root_label[r] == static_cast<std::size_t>(-1)) root_label[r] = out.count++;
    out.label[i] = root_label[r];
  }
  return out;
}

std::vector<std::vector<std::string>> connected_components(const PowerGrid& grid) {
  std::vector<std::vector<std::string>> out;
  for (const auto& members : label_components(grid).members()) {
    auto& ids = out.emplace_back();
    for (auto i : members) ids.push_back(grid.buses()[i].id);
  }
  return out;
}

std::vector<std::size_t> degrees(const PowerGrid& grid, const LineMask& active) {
  std::vector<std::size_t> deg(grid.bus_count(), 0);
  const auto& ends = grid.endpoints();
  for (std::size_t l = 0; l < ends.size(); ++l) {
    if (!is_active(active, l)) continue;
    ++deg[ends[l].first];
    ++deg[ends[l].second];
  }
  return deg;
}

SummaryStatistics summary_statistics(const PowerGrid& grid) {
  SummaryStatistics s;
  const auto adj = simple_adjacency(grid);
  const auto n = grid.bus_count();
  s.node_count = n;

  double degree_sum = 0.0;
  for (const auto& nb : adj) degree_sum += static_cast<double>(nb.size());
  s.edge_count = static_cast<std::size_t>(degree_sum / 2.0);
  s.mean_degree = degree_sum / static_cast<double>(n);

  // Newman degree assortativity over edges of the simple graph.
  double m = 0.0, sum_prod = 0.0, sum_half = 0.0, sum_sq_half = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : adj[i]) {
      if (j <= i) continue;
      const double di = static_cast<double>(adj[i].size()), dj = static_cast<double>(adj[j].size());
      m += 1.0;
      sum_prod += di * dj;
      sum_half += 0.5 * (di + dj);
      sum_sq_half += 0.5 * (di * di + dj * dj);
    }
  }
  if (m > 0.0) {
    const double mean_half = sum_half / m;
    const double denom = sum_sq_half / m - mean_half * mean_half;
    if (std::abs(denom) > 1e-12) {
      s.assortativity = (sum_prod / m - mean_half * mean_half) / denom;
    } else {
      s.assortativity_defined = false;
    }
  } else {
    s.assortativity_defined = false;
  }

  // Local clustering; nodes with degree < 2 contribute 0.
  double clustering = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = adj[i];
    if (nb.size() < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < nb.size(); ++a) {
      for (std::size_t b = a + 1; b < nb.size(); ++b) {
        if (std::binary_search(adj[nb[a]].begin(), adj[nb[a]].end(), nb[b])) ++links;
      }
    }
    clustering += 2.0 * static_cast<double>(links) / static_cast<double>(nb.size() * (nb.size() - 1));
  }
  s.mean_clustering = clustering / static_cast<double>(n);

  // Brandes betweenness plus all-pairs BFS distances in one sweep.
  std::vector<double> betweenness(n, 0.0);
  double distance_sum = 0.0;
  std::size_t reachable_pairs = 0;
  std::vector<std::vector<std::size_t>> preds(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<long> dist(n);
  std::vector<std::size_t> order;
  for (std::size_t src = 0; src < n; ++src) {
    for (auto& p : preds) p.clear();
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(dist.begin(), dist.end(), -1);
    order.clear();
    sigma[src] = 1.0;
    dist[src] = 0;
    std::queue<std::size_t> queue;
    queue.push(src);
    while (!queue.empty()) {
      auto v = queue.front();
      queue.pop();
      order.push_back(v);
      for (auto w : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
    for (auto v : order) {
      if (v != src) {
        distance_sum += static_cast<double>(dist[v]);
        ++reachable_pairs;
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      auto w = *it;
      for (auto v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != src) betweenness[w] += delta[w];
    }
  }
  s.mean_distance = reachable_pairs > 0 ? distance_sum / static_cast<double>(reachable_pairs) : 0.0;
  if (n > 2) {
    // Each unordered pair was counted from both ends.
    const double norm = static_cast<double>((n - 1) * (n - 2));
    double total = 0.0;
    for (auto b : betweenness) total += b / norm;
    s.mean_betweenness = total / static_cast<double>(n);
  }

  for (const auto& bus : grid.buses()) {
    if (bus.generation > 0.0) ++s.generator_count;
    if (bus.demand > 0.0) ++s.load_count;
  }
  return s;
}

}  // namespace gridrobust
