#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gridrobust/grid_model.hpp"

namespace gridrobust {

/// Net injection per bus (MW), indexed like PowerGrid::buses().
using InjectionVector = std::vector<double>;

inline constexpr const char* kBalanceRule = "proportional";

/// generation - demand per bus, unbalanced.
InjectionVector raw_injections(const PowerGrid& grid);

/// Balanced injections for the buses of one island, in the order given.
/// The smaller of the supply/demand sides is kept and the larger is scaled
/// down proportionally; an island missing either side is dead (all zero).
std::vector<double> balance_island(const PowerGrid& grid, std::span<const std::size_t> island);

/// balance_island applied to every component of the active topology.
InjectionVector balance_all(const PowerGrid& grid, const ComponentLabels& islands);

/// Picks the reference bus of an island (bus indices in ascending order).
using SlackSelector = std::function<std::size_t(const PowerGrid&, std::span<const std::size_t>)>;

/// Largest generation, ties broken by lexicographically smallest bus id.
std::size_t default_slack(const PowerGrid& grid, std::span<const std::size_t> island);

struct FlowSolution {
  std::vector<double> flow;  // per line, positive from -> to; 0 on inactive lines
  ComponentLabels islands;
  std::vector<std::size_t> island_slack;      // bus index per island
  std::vector<double> island_residual;        // |sum of p| per island before solving
  std::vector<std::uint8_t> island_dead;      // all-zero injections
};

/// DC flow f = C A (A^T C A)^{-1} p solved independently per island of the
/// active topology with the slack column removed. `injections` must already
/// be balanced per island.
FlowSolution solve_dc_flow(const PowerGrid& grid, std::span<const double> injections, const LineMask& active = {},
                           const SlackSelector& slack = default_slack);

/// Sum of the positive side of balanced injections.
double total_power_served(std::span<const double> balanced_injections);

/// Largest |sum of incident signed flows - p_i| over buses.
double kirchhoff_residual(const PowerGrid& grid, std::span<const double> injections, std::span<const double> flows);

}  // namespace gridrobust
