#include "gridrobust/dc_powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace gridrobust {

InjectionVector raw_injections(const PowerGrid& grid) {
  InjectionVector p(grid.bus_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = grid.buses()[i].net_injection();
  return p;
}

std::vector<double> balance_island(const PowerGrid& grid, std::span<const std::size_t> island) {
  std::vector<double> p(island.size());
  double supply = 0.0, demand = 0.0;
  for (std::size_t k = 0; k < island.size(); ++k) {
    p[k] = grid.buses()[island[k]].net_injection();
    if (p[k] > 0.0) supply += p[k];
    if (p[k] < 0.0) demand -= p[k];
  }
  if (supply <= 0.0 || demand <= 0.0) {
    std::fill(p.begin(), p.end(), 0.0);
    return p;
  }
  if (supply > demand) {
    const double scale = demand / supply;
    for (auto& v : p) {
      if (v > 0.0) v *= scale;
    }
  } else if (demand > supply) {
    const double scale = supply / demand;
    for (auto& v : p) {
      if (v < 0.0) v *= scale;
    }
  }
  return p;
}

InjectionVector balance_all(const PowerGrid& grid, const ComponentLabels& islands) {
  InjectionVector p(grid.bus_count(), 0.0);
  for (const auto& members : islands.members()) {
    auto balanced = balance_island(grid, members);
    for (std::size_t k = 0; k < members.size(); ++k) p[members[k]] = balanced[k];
  }
  return p;
}

std::size_t default_slack(const PowerGrid& grid, std::span<const std::size_t> island) {
  const auto& buses = grid.buses();
  std::size_t best = island.front();
  for (auto i : island) {
    if (buses[i].generation > buses[best].generation ||
        (buses[i].generation == buses[best].generation && buses[i].id < buses[best].id)) {
      best = i;
    }
  }
  return best;
}

FlowSolution solve_dc_flow(const PowerGrid& grid, std::span<const double> injections, const LineMask& active,
                           const SlackSelector& slack) {
  if (injections.size() != grid.bus_count()) throw SolverError("injection vector size does not match bus count");
  FlowSolution sol;
  sol.flow.assign(grid.line_count(), 0.0);
  sol.islands = label_components(grid, active);
  const auto members = sol.islands.members();
  sol.island_slack.resize(members.size());
  sol.island_residual.resize(members.size());
  sol.island_dead.assign(members.size(), 0);

  // Lines grouped by island.
  const auto& ends = grid.endpoints();
  std::vector<std::vector<std::size_t>> island_lines(members.size());
  for (std::size_t l = 0; l < ends.size(); ++l) {
    if (!active.empty() && !active[l]) continue;
    island_lines[sol.islands.label[ends[l].first]].push_back(l);
  }

  std::vector<std::size_t> local(grid.bus_count(), 0);
  for (std::size_t isl = 0; isl < members.size(); ++isl) {
    const auto& buses = members[isl];
    sol.island_slack[isl] = slack(grid, buses);
    double sum = 0.0;
    bool all_zero = true;
    for (auto b : buses) {
      sum += injections[b];
      if (injections[b] != 0.0) all_zero = false;
    }
    sol.island_residual[isl] = std::abs(sum);
    if (all_zero || buses.size() < 2) {
      sol.island_dead[isl] = all_zero ? 1 : 0;
      continue;
    }

    // Reduced nodal matrix A^T C A with the slack row/column removed.
    const auto ref = sol.island_slack[isl];
    std::size_t next = 0;
    for (auto b : buses) local[b] = (b == ref) ? static_cast<std::size_t>(-1) : next++;
    const auto dim = static_cast<Eigen::Index>(buses.size() - 1);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(island_lines[isl].size() * 4);
    for (auto l : island_lines[isl]) {
      const double c = grid.lines()[l].susceptance;
      if (!std::isfinite(c)) throw SolverError("non-finite susceptance on line '" + grid.lines()[l].id + "'");
      const auto a = local[ends[l].first], b = local[ends[l].second];
      const bool a_in = a != static_cast<std::size_t>(-1), b_in = b != static_cast<std::size_t>(-1);
      if (a_in) triplets.emplace_back(a, a, c);
      if (b_in) triplets.emplace_back(b, b, c);
      if (a_in && b_in) {
        triplets.emplace_back(a, b, -c);
        triplets.emplace_back(b, a, -c);
      }
    }
    Eigen::SparseMatrix<double> laplacian(dim, dim);
    laplacian.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::VectorXd rhs(dim);
    for (auto b : buses) {
      if (b != ref) rhs[static_cast<Eigen::Index>(local[b])] = injections[b];
    }

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(laplacian);
    if (solver.info() != Eigen::Success) {
      throw SolverError("singular nodal matrix on island " + std::to_string(isl) + " (slack bus '" +
                        grid.buses()[ref].id + "')");
    }
    const Eigen::VectorXd theta = solver.solve(rhs);

    auto angle = [&](std::size_t bus) {
      return bus == ref ? 0.0 : theta[static_cast<Eigen::Index>(local[bus])];
    };
    for (auto l : island_lines[isl]) {
      sol.flow[l] = grid.lines()[l].susceptance * (angle(ends[l].first) - angle(ends[l].second));
    }
  }
  return sol;
}

double total_power_served(std::span<const double> balanced_injections) {
  double served = 0.0;
  for (auto v : balanced_injections) {
    if (v > 0.0) served += v;
  }
  return served;
}

double kirchhoff_residual(const PowerGrid& grid, std::span<const double> injections, std::span<const double> flows) {
  std::vector<double> outflow(grid.bus_count(), 0.0);
  const auto& ends = grid.endpoints();
  for (std::size_t l = 0; l < ends.size(); ++l) {
    outflow[ends[l].first] += flows[l];
    outflow[ends[l].second] -= flows[l];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < outflow.size(); ++i) worst = std::max(worst, std::abs(outflow[i] - injections[i]));
  return worst;
}

}  // namespace gridrobust
