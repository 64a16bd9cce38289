#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridrobust/dc_powerflow.hpp"
#include "gridrobust/grid_model.hpp"
#include "gridrobust/load_profiles.hpp"

namespace gridrobust {

inline constexpr const char* kForceNormalization = "l2_component";

struct StiffnessParameters {
  double k_min = 100.0;
  double k_range = 1000.0;
};

/// k_range * (1 - 1/alpha) + k_min.
double stiffness_from_alpha(double alpha, double k_min = 100.0, double k_range = 1000.0);

/// F_i = 2 G_i / ||G||_2 over each connected component, then mean-centred
/// per component. Components with all-zero G get zero force.
std::vector<double> forces_from_injections(const PowerGrid& grid, std::span<const double> injections);
std::vector<double> forces_from_injections(const PowerGrid& grid);

/// Nodes that move vertically, joined by springs of horizontal length d.
struct SpringSystem {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> force;      // per node
  std::vector<double> stiffness;  // per edge
  std::vector<double> length;     // per edge, horizontal distance d

  void validate() const;
};

struct SolverConfig {
  double tolerance_fraction = 1e-6;  // residual target = fraction * sum |F| per component
  double timestep_factor = 0.01;     // dt = factor * sqrt(1 / k_max)
  double drag_factor = 2.0;          // drag = factor * sqrt(k_max)
  std::size_t max_iterations = 1'000'000;
  int max_restarts = 8;
  std::size_t divergence_window = 10'000;
  double divergence_growth = 10.0;
  // Once the relaxation has brought the residual below polish_threshold *
  // sum |F|, or stalls over a window, finish with Newton steps on the
  // static force balance.
  bool newton_polish = true;
  double polish_threshold = 1e-3;
  std::size_t max_newton_iterations = 200;
};

struct ConvergenceRecord {
  std::size_t iterations = 0;  // relaxation steps, summed over components
  std::size_t newton_iterations = 0;
  double residual = 0.0;   // sum over nodes of |net force|
  double tolerance = 0.0;  // summed over components
  double timestep = 0.0;   // last component's final dt
  double drag = 0.0;
  int restarts = 0;
  std::string force_normalization = kForceNormalization;
};

struct SetseEmbedding {
  std::vector<double> elevation;  // per node, mean zero per component
  std::vector<double> strain;     // per edge
  std::vector<double> tension;    // per edge
  ConvergenceRecord convergence;
};

/// Net vertical force on every node at the given elevations.
std::vector<double> net_forces(const SpringSystem& system, std::span<const double> elevation);

/// Damped semi-implicit Euler relaxation (unit mass) per connected
/// component, with step halving on divergence. Throws SolverError carrying
/// the best residual when no attempt converges.
SetseEmbedding solve_equilibrium(const SpringSystem& system, const SolverConfig& config = {});

/// Springs on the grid lines with unit horizontal length and stiffness from
/// each line's tolerance alpha.
SpringSystem make_spring_system(const PowerGrid& grid, std::span<const double> edge_alpha,
                                std::span<const double> forces, const StiffnessParameters& params = {});

SetseEmbedding embed_grid(const PowerGrid& grid, const LineLimitProfile& profile, const FlowSolution& base_flow,
                          const StiffnessParameters& params = {}, const SolverConfig& config = {},
                          double zero_flow_floor = kZeroFlowFloor);

nlohmann::json embedding_to_json(const PowerGrid& grid, const SetseEmbedding& embedding);
SetseEmbedding embedding_from_json(const PowerGrid& grid, const nlohmann::json& doc);

}  // namespace gridrobust
