#include "gridrobust/load_profiles.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "csv.hpp"

namespace gridrobust {

std::string to_string(Direction d) { return d == Direction::MostToLeast ? "most_to_least" : "least_to_most"; }

Direction direction_from_string(const std::string& s) {
  if (s == "most_to_least") return Direction::MostToLeast;
  if (s == "least_to_most") return Direction::LeastToMost;
  throw ParseError("unknown redistribution direction '" + s + "'");
}

Fraction Fraction::parse(const std::string& text) {
  auto t = std::string(csv::trim(text));
  if (t == "1/V" || t == "1/v") return inverse_node_count();
  return fixed(csv::parse_double(t, "fraction"));
}

std::string Fraction::label() const { return per_node ? "1/V" : csv::format_double(value); }

namespace {

std::string id_token(const Fraction& fr) { return fr.per_node ? "1V" : csv::format_double(fr.value); }

std::vector<double> base_magnitudes(const FlowSolution& base_flow) {
  std::vector<double> out(base_flow.flow.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(base_flow.flow[i]);
  return out;
}

}  // namespace

std::string profile_id(double alpha, const std::optional<Redistribution>& r) {
  std::string id = "a" + csv::format_double(alpha);
  if (!r) return id + "_prop";
  id += "_p" + id_token(r->p) + "_f" + csv::format_double(r->f) + "_q" + id_token(r->q);
  id += r->direction == Direction::MostToLeast ? "_ml" : "_lm";
  return id;
}

std::vector<double> edge_alpha(std::span<const double> capacity, std::span<const double> flow, double floor) {
  if (capacity.size() != flow.size()) throw ValidationError("capacity and flow vectors differ in length");
  std::vector<double> alpha(capacity.size());
  for (std::size_t l = 0; l < alpha.size(); ++l) {
    alpha[l] = std::max(1.0, capacity[l] / std::max(std::abs(flow[l]), floor));
  }
  return alpha;
}

std::size_t fraction_count(double fraction, std::size_t edge_count) {
  auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(edge_count)));
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(edge_count, 1));
}

LineLimitProfile proportional_profile(const PowerGrid& grid, const FlowSolution& base_flow, double alpha,
                                      double floor) {
  if (!(alpha >= 1.0)) throw ValidationError("alpha must be >= 1, got " + csv::format_double(alpha));
  if (base_flow.flow.size() != grid.line_count()) throw ValidationError("base flow does not match grid lines");
  LineLimitProfile profile;
  profile.id = profile_id(alpha, std::nullopt);
  profile.alpha = alpha;
  profile.capacity.resize(grid.line_count());
  for (std::size_t l = 0; l < profile.capacity.size(); ++l) {
    const double magnitude = std::abs(base_flow.flow[l]);
    profile.capacity[l] = alpha * (magnitude < floor ? floor : magnitude);
  }
  return profile;
}

LineLimitProfile redistribute_excess(const PowerGrid& grid, const LineLimitProfile& profile,
                                     const FlowSolution& base_flow, const Redistribution& params) {
  const auto m = grid.line_count();
  if (profile.capacity.size() != m || base_flow.flow.size() != m) {
    throw ValidationError("profile '" + profile.id + "' does not match grid lines");
  }
  const double p = params.p.resolve(grid.bus_count());
  const double q = params.q.resolve(grid.bus_count());
  if (!(p > 0.0 && p <= 1.0) || !(q > 0.0 && q <= 1.0)) throw ValidationError("p and q must lie in (0, 1]");
  if (!(params.f >= 0.0 && params.f < 1.0)) throw ValidationError("f must lie in [0, 1)");

  LineLimitProfile out = profile;
  out.redistribution = params;
  out.id = profile_id(profile.alpha, params);
  if (m == 0) throw ProfileSkipped(out.id + ": grid has no lines");

  const auto magnitude = base_magnitudes(base_flow);
  std::vector<double> excess(m);
  for (std::size_t l = 0; l < m; ++l) excess[l] = profile.capacity[l] - magnitude[l];

  // Ascending by (excess, line id).
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (excess[a] != excess[b]) return excess[a] < excess[b];
    return grid.lines()[a].id < grid.lines()[b].id;
  });
  if (params.direction == Direction::MostToLeast) std::reverse(order.begin(), order.end());
  // `order` now runs from the donor extreme to the recipient extreme.

  const auto n_donors = fraction_count(p, m);
  const auto n_recipients = std::min(fraction_count(q, m), m - std::min(n_donors, m));
  if (n_recipients == 0) throw ProfileSkipped(out.id + ": no recipient edges remain outside the donor set");

  double removed = 0.0;
  for (std::size_t k = 0; k < n_donors; ++k) {
    const auto l = order[k];
    const double take = params.f * excess[l];
    out.capacity[l] -= take;
    removed += take;
  }
  std::vector<std::size_t> recipients(order.end() - static_cast<std::ptrdiff_t>(n_recipients), order.end());
  double recipient_excess = 0.0;
  for (auto l : recipients) recipient_excess += excess[l];
  for (auto l : recipients) {
    const double share = recipient_excess > 0.0 ? excess[l] / recipient_excess
                                                : 1.0 / static_cast<double>(recipients.size());
    out.capacity[l] += removed * share;
  }
  return out;
}

ProfileSet generate_profile_grid(const PowerGrid& grid, const FlowSolution& base_flow, const ProfileGridSpec& spec) {
  if (spec.alpha.empty() || spec.p.empty() || spec.f.empty() || spec.q.empty()) {
    throw ValidationError("profile parameter sets must be nonempty");
  }
  ProfileSet set;
  for (double alpha : spec.alpha) {
    const auto base = proportional_profile(grid, base_flow, alpha, spec.zero_flow_floor);
    if (spec.include_proportional) set.profiles.push_back(base);
    for (const auto& p : spec.p) {
      for (double f : spec.f) {
        for (const auto& q : spec.q) {
          for (auto dir : {Direction::MostToLeast, Direction::LeastToMost}) {
            Redistribution params{p, f, q, dir};
            try {
              set.profiles.push_back(redistribute_excess(grid, base, base_flow, params));
            } catch (const ProfileSkipped& e) {
              set.skipped.push_back({profile_id(alpha, params), e.what()});
            }
          }
        }
      }
    }
  }
  return set;
}

nlohmann::json profile_to_json(const LineLimitProfile& profile) {
  nlohmann::json rec;
  rec["id"] = profile.id;
  rec["alpha"] = profile.alpha;
  if (profile.redistribution) {
    const auto& r = *profile.redistribution;
    rec["p"] = r.p.label();
    rec["f"] = r.f;
    rec["q"] = r.q.label();
    rec["direction"] = to_string(r.direction);
    rec["alloc"] = kAllocationRule;
  } else {
    rec["p"] = nullptr;
    rec["f"] = nullptr;
    rec["q"] = nullptr;
    rec["direction"] = nullptr;
  }
  rec["capacity"] = profile.capacity;
  return rec;
}

LineLimitProfile profile_from_json(const nlohmann::json& rec) {
  try {
    LineLimitProfile profile;
    profile.id = rec.at("id").get<std::string>();
    profile.alpha = rec.at("alpha").get<double>();
    if (rec.contains("direction") && !rec["direction"].is_null()) {
      Redistribution r;
      r.p = Fraction::parse(rec.at("p").get<std::string>());
      r.f = rec.at("f").get<double>();
      r.q = Fraction::parse(rec.at("q").get<std::string>());
      r.direction = direction_from_string(rec.at("direction").get<std::string>());
      profile.redistribution = r;
    }
    profile.capacity = rec.at("capacity").get<std::vector<double>>();
    return profile;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("profile record: ") + e.what());
  }
}

void write_profiles_jsonl(std::ostream& out, std::span<const LineLimitProfile> profiles) {
  for (const auto& p : profiles) out << profile_to_json(p).dump() << '\n';
}

std::vector<LineLimitProfile> read_profiles_jsonl(std::istream& in) {
  std::vector<LineLimitProfile> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("profiles line " + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.contains("meta")) continue;
    out.push_back(profile_from_json(rec));
  }
  return out;
}

}  // namespace gridrobust
