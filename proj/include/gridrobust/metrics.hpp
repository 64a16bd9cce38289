#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gridrobust/setse.hpp"

namespace gridrobust {

enum class Measure { MeanAlpha, MeanLineLoad, MeanAbsElevation, MeanStrain, MeanTension };

inline constexpr std::array<Measure, 5> kAllMeasures{Measure::MeanAlpha, Measure::MeanLineLoad,
                                                     Measure::MeanAbsElevation, Measure::MeanStrain,
                                                     Measure::MeanTension};

std::string to_string(Measure m);
Measure measure_from_string(const std::string& s);

/// Mean of absolute values. Throws ValidationError on empty input.
double aggregate(std::span<const double> values);

/// 1 / alpha per edge.
std::vector<double> line_load(std::span<const double> alpha);

/// Raw network-level means of every measure, indexed like kAllMeasures.
std::array<double, 5> profile_measures(std::span<const double> edge_alpha, const SetseEmbedding& embedding);

struct RobustnessSummary {
  std::string network;
  std::string profile_id;
  Measure measure = Measure::MeanAlpha;
  double raw = 0.0;
  double kappa = 0.0;
  bool degenerate = false;  // group had max == min
};

/// Min-max rescale of `raw` within each (network, measure) group.
void normalize_batch(std::vector<RobustnessSummary>& summaries);

}  // namespace gridrobust
