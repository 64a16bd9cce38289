#include "gridrobust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace gridrobust {

std::string to_string(Measure m) {
  switch (m) {
    case Measure::MeanAlpha: return "mean_alpha";
    case Measure::MeanLineLoad: return "mean_line_load";
    case Measure::MeanAbsElevation: return "mean_abs_elevation";
    case Measure::MeanStrain: return "mean_strain";
    case Measure::MeanTension: return "mean_tension";
  }
  return "unknown";
}

Measure measure_from_string(const std::string& s) {
  for (auto m : kAllMeasures) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown measure '" + s + "'");
}

double aggregate(std::span<const double> values) {
  if (values.empty()) throw ValidationError("cannot aggregate an empty set of values");
  double sum = 0.0;
  for (auto v : values) sum += std::abs(v);
  return sum / static_cast<double>(values.size());
}

std::vector<double> line_load(std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] >= 1.0)) throw ValidationError("line load needs alpha >= 1");
    out[i] = 1.0 / alpha[i];
  }
  return out;
}

std::array<double, 5> profile_measures(std::span<const double> edge_alpha, const SetseEmbedding& embedding) {
  return {aggregate(edge_alpha), aggregate(line_load(edge_alpha)), aggregate(embedding.elevation),
          aggregate(embedding.strain), aggregate(embedding.tension)};
}

void normalize_batch(std::vector<RobustnessSummary>& summaries) {
  std::map<std::pair<std::string, Measure>, std::pair<double, double>> range;
  for (const auto& s : summaries) {
    auto [it, inserted] = range.try_emplace({s.network, s.measure}, s.raw, s.raw);
    if (!inserted) {
      it->second.first = std::min(it->second.first, s.raw);
      it->second.second = std::max(it->second.second, s.raw);
    }
  }
  for (auto& s : summaries) {
    const auto [lo, hi] = range.at({s.network, s.measure});
    if (hi > lo) {
      s.kappa = (s.raw - lo) / (hi - lo);
      s.degenerate = false;
    } else {
      s.kappa = 0.0;
      s.degenerate = true;
    }
  }
}

}  // namespace gridrobust
