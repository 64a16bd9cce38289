#include "gridrobust/cascade_attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gridrobust/parallel.hpp"

namespace gridrobust {

bool molloy_reed_has_giant(std::span<const std::size_t> degrees) {
  // n * (<k^2> - 2<k>) = sum k^2 - 2 sum k; the sign is all that matters.
  std::uint64_t sum_sq = 0, sum = 0;
  for (auto k : degrees) {
    sum_sq += static_cast<std::uint64_t>(k) * k;
    sum += k;
  }
  return sum_sq > 2 * sum;
}

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_run_seed(std::uint64_t master_seed, std::uint64_t index) {
  return mix64(master_seed ^ ((index + 1) * 0x9E3779B97F4A7C15ULL));
}

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  // Reject the low residue class so every value is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace

AttackSequence make_attack_sequence(std::size_t line_count, std::uint64_t seed) {
  AttackSequence seq;
  seq.seed = seed;
  seq.order.resize(line_count);
  std::iota(seq.order.begin(), seq.order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = line_count; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(seq.order[i - 1], seq.order[j]);
  }
  return seq;
}

std::size_t GridState::surviving_lines() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

namespace {

void resolve(const PowerGrid& grid, GridState& state) {
  const auto islands = label_components(grid, state.active);
  state.injections = balance_all(grid, islands);
  state.flows = solve_dc_flow(grid, state.injections, state.active);
  state.served = total_power_served(state.injections);
}

}  // namespace

GridState initial_state(const PowerGrid& grid) {
  GridState state;
  state.active.assign(grid.line_count(), 1);
  resolve(grid, state);
  return state;
}

std::vector<std::size_t> propagate_cascade(const PowerGrid& grid, GridState& state, const LineLimitProfile& profile) {
  std::vector<std::size_t> tripped;
  while (true) {
    resolve(grid, state);
    std::size_t before = tripped.size();
    for (std::size_t l = 0; l < state.active.size(); ++l) {
      if (state.active[l] && std::abs(state.flows.flow[l]) > profile.capacity[l] * (1.0 + kTripTolerance)) {
        tripped.push_back(l);
      }
    }
    if (tripped.size() == before) break;
    for (auto it = tripped.begin() + static_cast<std::ptrdiff_t>(before); it != tripped.end(); ++it) {
      state.active[*it] = 0;
    }
  }
  return tripped;
}

AttackRunResult run_attack(const PowerGrid& grid, const LineLimitProfile& profile, std::uint64_t seed) {
  if (profile.capacity.size() != grid.line_count()) {
    throw ValidationError("profile '" + profile.id + "' does not match grid lines");
  }
  AttackRunResult result;
  result.seed = seed;
  const auto sequence = make_attack_sequence(grid.line_count(), seed);
  auto state = initial_state(grid);
  const double initially_served = state.served;

  std::size_t cursor = 0;
  while (true) {
    while (cursor < sequence.order.size() && !state.active[sequence.order[cursor]]) ++cursor;
    if (cursor == sequence.order.size()) break;  // nothing left to attack
    const auto target = sequence.order[cursor++];
    state.active[target] = 0;
    const auto tripped = propagate_cascade(grid, state, profile);
    result.targeted.push_back(target);
    result.cascade_sizes.push_back(tripped.size());
    if (!molloy_reed_has_giant(degrees(grid, state.active))) break;
  }
  result.collapse_round = result.targeted.size();
  if (initially_served > 0.0) {
    result.power_lost_fraction = std::clamp(1.0 - state.served / initially_served, 0.0, 1.0);
  }
  return result;
}

AttackCampaignResult run_campaign(const PowerGrid& grid, const LineLimitProfile& profile, std::size_t n_runs,
                                  std::uint64_t master_seed, std::size_t workers) {
  if (n_runs == 0) throw ValidationError("campaign needs at least one run");
  AttackCampaignResult out;
  out.profile_id = profile.id;
  out.master_seed = master_seed;
  out.runs.resize(n_runs);
  parallel_for(n_runs, workers,
               [&](std::size_t i) { out.runs[i] = run_attack(grid, profile, derive_run_seed(master_seed, i)); });

  double rounds = 0.0, lost = 0.0, cascade = 0.0;
  out.min_power_lost = std::numeric_limits<double>::infinity();
  out.max_power_lost = -std::numeric_limits<double>::infinity();
  for (const auto& run : out.runs) {
    rounds += static_cast<double>(run.collapse_round);
    lost += run.power_lost_fraction;
    out.min_power_lost = std::min(out.min_power_lost, run.power_lost_fraction);
    out.max_power_lost = std::max(out.max_power_lost, run.power_lost_fraction);
    double tripped = 0.0;
    for (auto c : run.cascade_sizes) tripped += static_cast<double>(c);
    if (run.collapse_round > 0 && grid.line_count() > 0) {
      cascade += tripped / static_cast<double>(run.collapse_round) / static_cast<double>(grid.line_count());
    }
  }
  const auto n = static_cast<double>(n_runs);
  out.mean_collapse_round = rounds / n;
  out.mean_power_lost = lost / n;
  out.mean_cascade_fraction = cascade / n;
  return out;
}

nlohmann::json campaign_to_json(const AttackCampaignResult& result, bool include_runs) {
  nlohmann::json rec;
  rec["profile_id"] = result.profile_id;
  rec["master_seed"] = result.master_seed;
  rec["n_runs"] = result.runs.size();
  rec["mean_collapse_round"] = result.mean_collapse_round;
  rec["mean_power_lost"] = result.mean_power_lost;
  rec["min_power_lost"] = result.min_power_lost;
  rec["max_power_lost"] = result.max_power_lost;
  rec["mean_cascade_fraction"] = result.mean_cascade_fraction;
  if (include_runs) {
    auto& runs = rec["runs"] = nlohmann::json::array();
    for (const auto& r : result.runs) {
      runs.push_back({{"seed", r.seed},
                      {"collapse_round", r.collapse_round},
                      {"cascade_sizes", r.cascade_sizes},
                      {"power_lost_fraction", r.power_lost_fraction}});
    }
  }
  return rec;
}

AttackCampaignResult campaign_from_json(const nlohmann::json& rec) {
  try {
    AttackCampaignResult out;
    out.profile_id = rec.at("profile_id").get<std::string>();
    out.master_seed = rec.at("master_seed").get<std::uint64_t>();
    out.mean_collapse_round = rec.at("mean_collapse_round").get<double>();
    out.mean_power_lost = rec.at("mean_power_lost").get<double>();
    out.min_power_lost = rec.at("min_power_lost").get<double>();
    out.max_power_lost = rec.at("max_power_lost").get<double>();
    out.mean_cascade_fraction = rec.value("mean_cascade_fraction", 0.0);
    if (rec.contains("runs")) {
      for (const auto& r : rec["runs"]) {
        AttackRunResult run;
        run.seed = r.at("seed").get<std::uint64_t>();
        run.collapse_round = r.at("collapse_round").get<std::size_t>();
        run.cascade_sizes = r.at("cascade_sizes").get<std::vector<std::size_t>>();
        run.power_lost_fraction = r.at("power_lost_fraction").get<double>();
        out.runs.push_back(std::move(run));
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("campaign record: ") + e.what());
  }
}

}  // namespace gridrobust
