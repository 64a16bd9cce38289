#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridrobust/dc_powerflow.hpp"
#include "gridrobust/grid_model.hpp"
#include "gridrobust/load_profiles.hpp"

namespace gridrobust {

inline constexpr const char* kMolloyReedPopulation = "all_nodes";

/// Relative slack on the overload test, absorbing solver round-off when a
/// line sits exactly at its limit (alpha = 1).
inline constexpr double kTripTolerance = 1e-9;

/// <k^2> - 2<k> > 0, evaluated in integer arithmetic.
bool molloy_reed_has_giant(std::span<const std::size_t> degrees);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed of run `index` in a campaign: mix64(master ^ ((index + 1) * 0x9E3779B97F4A7C15)).
std::uint64_t derive_run_seed(std::uint64_t master_seed, std::uint64_t index);


struct AttackSequence {
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;  // line indices in removal order
};

/// Fisher-Yates shuffle (from the last position down) of the stable line
/// ordering, driven by std::mt19937_64 seeded with `seed`.
AttackSequence make_attack_sequence(std::size_t line_count, std::uint64_t seed);

/// Live topology and flows while a grid is being attacked.
struct GridState {
  LineMask active;
  InjectionVector injections;  // balanced on the current islands
  FlowSolution flows;
  double served = 0.0;

  std::size_t surviving_lines() const;
};

/// Intact grid with balanced injections and solved flows.
GridState initial_state(const PowerGrid& grid);

/// Re-island, rebalance, re-solve and trip every overloaded line until no
/// line exceeds its capacity. Returns the tripped lines in trip order.
std::vector<std::size_t> propagate_cascade(const PowerGrid& grid, GridState& state, const LineLimitProfile& profile);

struct AttackRunResult {
  std::uint64_t seed = 0;
  std::size_t collapse_round = 0;
  std::vector<std::size_t> targeted;       // line attacked in each round
  std::vector<std::size_t> cascade_sizes;  // lines tripped in each round
  double power_lost_fraction = 0.0;

  bool operator==(const AttackRunResult&) const = default;
};

/// Attacks one line per round in the seeded order until the Molloy-Reed
/// criterion fails; the collapse round is the round in which it first fails.
AttackRunResult run_attack(const PowerGrid& grid, const LineLimitProfile& profile, std::uint64_t seed);

struct AttackCampaignResult {
  std::string profile_id;
  std::uint64_t master_seed = 0;
  std::vector<AttackRunResult> runs;
  double mean_collapse_round = 0.0;
  double mean_power_lost = 0.0;
  double min_power_lost = 0.0;
  double max_power_lost = 0.0;
  double mean_cascade_fraction = 0.0;  // lines tripped per round / line count
};

AttackCampaignResult run_campaign(const PowerGrid& grid, const LineLimitProfile& profile, std::size_t n_runs,
                                  std::uint64_t master_seed, std::size_t workers = 1);

nlohmann::json campaign_to_json(const AttackCampaignResult& result, bool include_runs = true);
AttackCampaignResult campaign_from_json(const nlohmann::json& record);

}  // namespace gridrobust
