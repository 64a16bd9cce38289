#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridrobust/dc_powerflow.hpp"
#include "gridrobust/grid_model.hpp"

namespace gridrobust {

/// Capacity given to lines that carry no base flow, per unit of alpha (MW).
inline constexpr double kZeroFlowFloor = 1e-6;
inline constexpr const char* kAllocationRule = "proportional";

enum class Direction { MostToLeast, LeastToMost };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

/// An edge fraction that is either a fixed number or 1/V for the grid at hand.
struct Fraction {
  double value = 0.0;
  bool per_node = false;  // 1/V

  static Fraction fixed(double v) { return {v, false}; }
  static Fraction inverse_node_count() { return {0.0, true}; }
  static Fraction parse(const std::string& text);

  double resolve(std::size_t node_count) const {
    return per_node ? 1.0 / static_cast<double>(node_count) : value;
  }
  std::string label() const;
  bool operator==(const Fraction&) const = default;
};

struct Redistribution {
  Fraction p;  // donor fraction of edges
  double f = 0.0;
  Fraction q;  // recipient fraction of edges
  Direction direction = Direction::MostToLeast;

  bool operator==(const Redistribution&) const = default;
};

struct LineLimitProfile {
  std::string id;
  double alpha = 1.0;
  std::optional<Redistribution> redistribution;  // empty for proportional profiles
  std::vector<double> capacity;                  // MW per line

  bool operator==(const LineLimitProfile&) const = default;
};

/// Thrown when a redistribution cannot be formed on the given grid.
class ProfileSkipped : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// capacity = alpha * |flow|; lines with |flow| below `floor` get alpha * floor.
LineLimitProfile proportional_profile(const PowerGrid& grid, const FlowSolution& base_flow, double alpha,
                                      double floor = kZeroFlowFloor);

/// Moves fraction `f` of the excess capacity of the donor edges (the
/// fraction p with most excess for MostToLeast, least for LeastToMost) onto
/// the recipient edges at the other extreme, shared in proportion to their
/// current excess. Donors and recipients are disjoint.
LineLimitProfile redistribute_excess(const PowerGrid& grid, const LineLimitProfile& profile,
                                     const FlowSolution& base_flow, const Redistribution& params);

/// Per-edge tolerance capacity / max(|flow|, floor), never below 1.
std::vector<double> edge_alpha(std::span<const double> capacity, std::span<const double> flow,
                               double floor = kZeroFlowFloor);

/// Number of edges a fraction selects: rounded to nearest, at least 1.
std::size_t fraction_count(double fraction, std::size_t edge_count);

std::string profile_id(double alpha, const std::optional<Redistribution>& redistribution);

struct ProfileGridSpec {
  std::vector<double> alpha{1.005, 1.025, 1.1, 1.2, 1.5, 2, 3, 5, 7, 10, 20};
  std::vector<Fraction> p{Fraction::inverse_node_count(), Fraction::fixed(0.1), Fraction::fixed(0.2),
                          Fraction::fixed(0.3), Fraction::fixed(0.4), Fraction::fixed(0.5)};
  std::vector<double> f{0.25, 0.5, 0.75, 0.99};
  std::vector<Fraction> q{Fraction::inverse_node_count(), Fraction::fixed(0.1), Fraction::fixed(0.2),
                          Fraction::fixed(0.3), Fraction::fixed(0.4), Fraction::fixed(0.5)};
  bool include_proportional = false;
  double zero_flow_floor = kZeroFlowFloor;
};

struct SkippedProfile {
  std::string id;
  std::string reason;
};

struct ProfileSet {
  std::vector<LineLimitProfile> profiles;
  std::vector<SkippedProfile> skipped;
};

/// Every (alpha, p, f, q, direction) combination in canonical order:
/// alpha, then p, f, q, then MostToLeast before LeastToMost. Proportional
/// profiles, when requested, precede the redistributed ones of each alpha.
ProfileSet generate_profile_grid(const PowerGrid& grid, const FlowSolution& base_flow, const ProfileGridSpec& spec);

nlohmann::json profile_to_json(const LineLimitProfile& profile);
LineLimitProfile profile_from_json(const nlohmann::json& record);
void write_profiles_jsonl(std::ostream& out, std::span<const LineLimitProfile> profiles);
std::vector<LineLimitProfile> read_profiles_jsonl(std::istream& in);

}  // namespace gridrobust
