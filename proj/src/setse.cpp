#include "gridrobust/setse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace gridrobust {

double stiffness_from_alpha(double alpha, double k_min, double k_range) {
  if (!(alpha >= 1.0)) throw ValidationError("alpha must be >= 1 for a stiffness");
  if (!(k_min > 0.0) || !(k_range >= 0.0)) throw ValidationError("k_min must be > 0 and k_range >= 0");
  return k_range * (1.0 - 1.0 / alpha) + k_min;
}

std::vector<double> forces_from_injections(const PowerGrid& grid, std::span<const double> injections) {
  if (injections.size() != grid.bus_count()) throw ValidationError("injection vector size does not match bus count");
  std::vector<double> force(grid.bus_count(), 0.0);
  for (const auto& members : label_components(grid).members()) {
    double norm_sq = 0.0;
    for (auto i : members) norm_sq += injections[i] * injections[i];
    if (norm_sq == 0.0) continue;
    const double norm = std::sqrt(norm_sq);
    double mean = 0.0;
    for (auto i : members) {
      force[i] = 2.0 * injections[i] / norm;
      mean += force[i];
    }
    mean /= static_cast<double>(members.size());
    for (auto i : members) force[i] -= mean;
  }
  return force;
}

std::vector<double> forces_from_injections(const PowerGrid& grid) {
  return forces_from_injections(grid, raw_injections(grid));
}

void SpringSystem::validate() const {
  if (force.size() != node_count) throw ValidationError("spring system: force vector size mismatch");
  if (stiffness.size() != edges.size() || length.size() != edges.size()) {
    throw ValidationError("spring system: edge attribute size mismatch");
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].first >= node_count || edges[e].second >= node_count || edges[e].first == edges[e].second) {
      throw ValidationError("spring system: bad edge endpoints at edge " + std::to_string(e));
    }
    if (!(stiffness[e] > 0.0) || !std::isfinite(stiffness[e])) {
      throw ValidationError("spring system: stiffness must be finite and > 0");
    }
    if (!(length[e] > 0.0) || !std::isfinite(length[e])) {
      throw ValidationError("spring system: length must be finite and > 0");
    }
  }
  for (auto f : force) {
    if (!std::isfinite(f)) throw ValidationError("spring system: non-finite force");
  }
}

std::vector<double> net_forces(const SpringSystem& system, std::span<const double> elevation) {
  std::vector<double> net(system.force.begin(), system.force.end());
  for (std::size_t e = 0; e < system.edges.size(); ++e) {
    const auto [i, j] = system.edges[e];
    const double dz = elevation[j] - elevation[i];
    const double d = system.length[e];
    const double length = std::sqrt(d * d + dz * dz);
    const double pull = system.stiffness[e] * (length - d) * dz / length;
    net[i] += pull;
    net[j] -= pull;
  }
  return net;
}

namespace {

// One connected component with local node numbering.
struct LocalSystem {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> force, stiffness, length;
};

struct LocalOutcome {
  std::vector<double> z;
  std::size_t iterations = 0;
  std::size_t newton_iterations = 0;
  double residual = 0.0;
  double dt = 0.0;
  double drag = 0.0;
  int restarts = 0;
};

double net_into(const LocalSystem& s, const std::vector<double>& z, std::vector<double>& net) {
  std::copy(s.force.begin(), s.force.end(), net.begin());
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    const auto [i, j] = s.edges[e];
    const double dz = z[j] - z[i];
    const double d = s.length[e];
    const double length = std::sqrt(d * d + dz * dz);
    const double pull = s.stiffness[e] * (length - d) * dz / length;
    net[i] += pull;
    net[j] -= pull;
  }
  double residual = 0.0;
  for (auto v : net) residual += std::abs(v);
  return residual;
}

double energy(const LocalSystem& s, const std::vector<double>& z) {
  double e = 0.0;
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    const auto [i, j] = s.edges[k];
    const double dz = z[j] - z[i];
    const double d = s.length[k];
    const double stretch = std::sqrt(d * d + dz * dz) - d;
    e += 0.5 * s.stiffness[k] * stretch * stretch;
  }
  for (std::size_t i = 0; i < s.n; ++i) e -= s.force[i] * z[i];
  return e;
}

// Newton iterations on the static balance from `z`. The spring energy is
// convex in the elevations, so a damped Newton step with an energy line
// search cannot wander off. Returns true once the residual reaches `tol`.
bool newton_polish(const LocalSystem& s, std::vector<double>& z, double tol, std::size_t max_iterations,
                   std::size_t& iterations) {
  const auto n = static_cast<Eigen::Index>(s.n);
  std::vector<double> net(s.n), trial(s.n), trial_net(s.n);
  double residual = net_into(s, z, net);
  double current_energy = energy(s, z);
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    if (residual <= tol) return true;
    ++iterations;
    triplets.clear();
    double max_diag = 0.0;
    std::vector<double> diag(s.n, 0.0);
    for (std::size_t e = 0; e < s.edges.size(); ++e) {
      const auto [i, j] = s.edges[e];
      const double dz = z[j] - z[i];
      const double d = s.length[e];
      const double length = std::sqrt(d * d + dz * dz);
      const double ratio = d / length;
      const double w = s.stiffness[e] * (1.0 - ratio * ratio * ratio);
      diag[i] += w;
      diag[j] += w;
      triplets.emplace_back(i, j, -w);
      triplets.emplace_back(j, i, -w);
    }
    for (auto v : diag) max_diag = std::max(max_diag, v);
    // Shift keeps the translation mode (and flat springs) invertible.
    const double shift = std::max(1e-10 * max_diag, 1e-14);
    for (std::size_t i = 0; i < s.n; ++i) triplets.emplace_back(i, i, diag[i] + shift);
    Eigen::SparseMatrix<double> hessian(n, n);
    hessian.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(hessian);
    if (solver.info() != Eigen::Success) return false;
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(net.data(), n);
    const Eigen::VectorXd step = solver.solve(rhs);
    if (!step.allFinite()) return false;
    const double slope = rhs.dot(step);  // -(gradient . step) > 0

    bool accepted = false;
    for (double t = 1.0; t > 1e-12; t *= 0.5) {
      for (std::size_t i = 0; i < s.n; ++i) trial[i] = z[i] + t * step[static_cast<Eigen::Index>(i)];
      const double trial_residual = net_into(s, trial, trial_net);
      const double trial_energy = energy(s, trial);
      if (trial_residual < residual || trial_energy <= current_energy - 1e-4 * t * slope) {
        z.swap(trial);
        net.swap(trial_net);
        residual = trial_residual;
        current_energy = trial_energy;
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  return residual <= tol;
}

LocalOutcome relax(const LocalSystem& s, double tol, double force_scale, const SolverConfig& cfg) {
  LocalOutcome out;
  out.z.assign(s.n, 0.0);
  if (force_scale == 0.0 || s.edges.empty()) return out;

  const double k_max = *std::max_element(s.stiffness.begin(), s.stiffness.end());
  const double dt0 = cfg.timestep_factor * std::sqrt(1.0 / k_max);
  out.drag = cfg.drag_factor * std::sqrt(k_max);
  const double drag = out.drag;

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> z(s.n), v(s.n), net(s.n);
  const std::size_t window = std::max<std::size_t>(cfg.divergence_window, 1);

  for (int attempt = 0; attempt <= cfg.max_restarts; ++attempt) {
    out.restarts = attempt;
    const double dt = dt0 / std::pow(2.0, attempt);
    out.dt = dt;
    std::fill(z.begin(), z.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    double window_start = net_into(s, z, net);
    bool diverged = false;
    bool polish_allowed = cfg.newton_polish;
    bool stalled = false;

    for (std::size_t it = 0; it <= cfg.max_iterations; ++it) {
      const double residual = net_into(s, z, net);
      if (!std::isfinite(residual)) {
        diverged = true;
        break;
      }
      best = std::min(best, residual);
      if (residual <= tol) {
        out.z = z;
        out.residual = residual;
        return out;
      }
      if (polish_allowed && (residual <= cfg.polish_threshold * force_scale || stalled)) {
        auto polished = z;
        if (newton_polish(s, polished, tol, cfg.max_newton_iterations, out.newton_iterations)) {
          out.z = std::move(polished);
          out.residual = net_into(s, out.z, net);
          return out;
        }
        polish_allowed = false;  // fall back to plain relaxation
        net_into(s, z, net);
      }
      if (it == cfg.max_iterations) break;
      if (it > 0 && it % window == 0) {
        if (residual > cfg.divergence_growth * window_start) {
          diverged = true;
          break;
        }
        stalled = residual > 0.5 * window_start;
        window_start = residual;
      }
      for (std::size_t i = 0; i < s.n; ++i) {
        v[i] += dt * (net[i] - drag * v[i]);
        z[i] += dt * v[i];
      }
      ++out.iterations;
    }
    if (!diverged) break;
  }
  throw SolverError("spring relaxation did not converge: best residual " + std::to_string(best) + " vs tolerance " +
                    std::to_string(tol));
}

}  // namespace

SetseEmbedding solve_equilibrium(const SpringSystem& system, const SolverConfig& config) {
  system.validate();
  const auto n = system.node_count;

  // Components of the spring graph.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [a, b] : system.edges) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::size_t> comp_of(n), local(n);
  std::vector<LocalSystem> comps;
  std::vector<std::vector<std::size_t>> comp_nodes;
  std::vector<std::size_t> root_comp(n, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = find(i);
    if (root_comp[r] == static_cast<std::size_t>(-1)) {
      root_comp[r] = comps.size();
      comps.emplace_back();
      comp_nodes.emplace_back();
    }
    comp_of[i] = root_comp[r];
    local[i] = comps[comp_of[i]].n++;
    comp_nodes[comp_of[i]].push_back(i);
    comps[comp_of[i]].force.push_back(system.force[i]);
  }
  for (std::size_t e = 0; e < system.edges.size(); ++e) {
    auto [a, b] = system.edges[e];
    auto& c = comps[comp_of[a]];
    c.edges.emplace_back(local[a], local[b]);
    c.stiffness.push_back(system.stiffness[e]);
    c.length.push_back(system.length[e]);
  }

  SetseEmbedding out;
  out.elevation.assign(n, 0.0);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    auto& comp = comps[c];
    // Forces must balance within a component.
    const double mean = std::accumulate(comp.force.begin(), comp.force.end(), 0.0) / static_cast<double>(comp.n);
    double scale = 0.0;
    for (auto& f : comp.force) {
      f -= mean;
      scale += std::abs(f);
    }
    const double tol = config.tolerance_fraction * scale;
    auto result = relax(comp, tol, scale, config);

    const double z_mean = std::accumulate(result.z.begin(), result.z.end(), 0.0) / static_cast<double>(comp.n);
    for (std::size_t k = 0; k < comp.n; ++k) out.elevation[comp_nodes[c][k]] = result.z[k] - z_mean;

    auto& rec = out.convergence;
    rec.iterations += result.iterations;
    rec.newton_iterations += result.newton_iterations;
    rec.tolerance += tol;
    rec.restarts = std::max(rec.restarts, result.restarts);
    if (result.dt > 0.0) {
      rec.timestep = result.dt;
      rec.drag = result.drag;
    }
  }

  out.strain.resize(system.edges.size());
  out.tension.resize(system.edges.size());
  for (std::size_t e = 0; e < system.edges.size(); ++e) {
    const auto [i, j] = system.edges[e];
    const double dz = out.elevation[j] - out.elevation[i];
    const double d = system.length[e];
    const double length = std::sqrt(d * d + dz * dz);
    out.strain[e] = (length - d) / d;
    out.tension[e] = system.stiffness[e] * (length - d);
  }
  double residual = 0.0;
  for (auto v : net_forces(system, out.elevation)) residual += std::abs(v);
  out.convergence.residual = residual;
  return out;
}

SpringSystem make_spring_system(const PowerGrid& grid, std::span<const double> edge_alpha,
                                std::span<const double> forces, const StiffnessParameters& params) {
  if (edge_alpha.size() != grid.line_count() || forces.size() != grid.bus_count()) {
    throw ValidationError("spring system inputs do not match grid dimensions");
  }
  SpringSystem s;
  s.node_count = grid.bus_count();
  s.edges = grid.endpoints();
  s.force.assign(forces.begin(), forces.end());
  s.length.assign(grid.line_count(), 1.0);
  s.stiffness.resize(grid.line_count());
  for (std::size_t l = 0; l < s.stiffness.size(); ++l) {
    s.stiffness[l] = stiffness_from_alpha(edge_alpha[l], params.k_min, params.k_range);
  }
  return s;
}

SetseEmbedding embed_grid(const PowerGrid& grid, const LineLimitProfile& profile, const FlowSolution& base_flow,
                          const StiffnessParameters& params, const SolverConfig& config,
                          double zero_flow_floor) {
  const auto alpha = edge_alpha(profile.capacity, base_flow.flow, zero_flow_floor);
  const auto forces = forces_from_injections(grid);
  try {
    return solve_equilibrium(make_spring_system(grid, alpha, forces, params), config);
  } catch (const SolverError& e) {
    throw SolverError("profile '" + profile.id + "': " + e.what());
  }
}

nlohmann::json embedding_to_json(const PowerGrid& grid, const SetseEmbedding& embedding) {
  nlohmann::json doc;
  auto& nodes = doc["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < grid.bus_count(); ++i) {
    nodes.push_back({{"id", grid.buses()[i].id}, {"elevation", embedding.elevation[i]}});
  }
  auto& edges = doc["edges"] = nlohmann::json::array();
  for (std::size_t l = 0; l < grid.line_count(); ++l) {
    edges.push_back({{"id", grid.lines()[l].id}, {"strain", embedding.strain[l]}, {"tension", embedding.tension[l]}});
  }
  const auto& c = embedding.convergence;
  doc["convergence"] = {{"iterations", c.iterations},   {"newton_iterations", c.newton_iterations},
                        {"residual", c.residual},       {"tolerance", c.tolerance},
                        {"timestep", c.timestep},       {"drag", c.drag},
                        {"restarts", c.restarts},       {"force_normalization", c.force_normalization}};
  return doc;
}

SetseEmbedding embedding_from_json(const PowerGrid& grid, const nlohmann::json& doc) {
  try {
    SetseEmbedding e;
    e.elevation.assign(grid.bus_count(), 0.0);
    e.strain.assign(grid.line_count(), 0.0);
    e.tension.assign(grid.line_count(), 0.0);
    for (const auto& n : doc.at("nodes")) e.elevation[grid.bus_index(n.at("id").get<std::string>())] = n.at("elevation");
    for (const auto& rec : doc.at("edges")) {
      auto l = grid.find_line(rec.at("id").get<std::string>());
      if (!l) throw ParseError("embedding references unknown line '" + rec.at("id").get<std::string>() + "'");
      e.strain[*l] = rec.at("strain");
      e.tension[*l] = rec.at("tension");
    }
    const auto& c = doc.at("convergence");
    e.convergence.iterations = c.at("iterations");
    e.convergence.newton_iterations = c.value("newton_iterations", std::size_t{0});
    e.convergence.residual = c.at("residual");
    e.convergence.tolerance = c.at("tolerance");
    e.convergence.timestep = c.value("timestep", 0.0);
    e.convergence.drag = c.value("drag", 0.0);
    e.convergence.restarts = c.value("restarts", 0);
    e.convergence.force_normalization = c.value("force_normalization", std::string(kForceNormalization));
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("embedding document: ") + ex.what());
  }
}

}  // namespace gridrobust
