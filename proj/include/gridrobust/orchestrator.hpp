#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridrobust/evaluation.hpp"
#include "gridrobust/geospatial.hpp"
#include "gridrobust/grid_model.hpp"
#include "gridrobust/load_profiles.hpp"
#include "gridrobust/metrics.hpp"
#include "gridrobust/setse.hpp"

namespace gridrobust {

/// Flat `key = value` settings; blank lines and `#` comments are ignored.
/// Later assignments override earlier ones.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "config");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void merge(const Config& other);

  std::string text(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<Fraction> fractions(const std::string& key, const std::vector<Fraction>& fallback) const;
  std::vector<std::string> list(const std::string& key) const;

  /// Rejects keys outside `known` so typos do not silently fall back.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
  std::string source_ = "config";
};

/// Every tunable constant of the pipeline, all overridable from a Config.
struct PipelineSettings {
  StiffnessParameters stiffness;
  SolverConfig solver;
  double zero_flow_floor = kZeroFlowFloor;
  SplineOptions spline;
  std::size_t cv_repeats = 10;
  std::size_t cv_folds = 10;
  std::uint64_t cv_seed = 1;
  VariogramOptions variogram;
};

PipelineSettings settings_from_config(const Config& config);
/// Keys understood by settings_from_config.
std::vector<std::string> settings_keys();

struct ExperimentManifest {
  std::string experiment_id;
  std::vector<std::filesystem::path> grids;
  ProfileGridSpec profiles;
  std::size_t n_runs = 100;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  bool report_proportional_only = false;
  PipelineSettings settings;
};

/// Grid paths are resolved against `base_dir`.
ExperimentManifest manifest_from_config(const Config& config, const std::filesystem::path& base_dir = {});
ExperimentManifest load_manifest(const std::filesystem::path& path);
/// Normalized key-value form; parsing it back yields the same manifest.
std::string manifest_text(const ExperimentManifest& manifest);

/// First line of every numeric artifact: experiment id plus decision flags.
std::string artifact_header(const std::string& experiment_id);
nlohmann::json artifact_meta(const std::string& experiment_id);

struct ProfileFailure {
  std::string network;
  std::string profile_id;
  std::string message;
};

struct RunOutcome {
  std::size_t profiles = 0;
  std::size_t computed = 0;
  std::size_t resumed = 0;  // already complete on disk
  std::vector<ProfileFailure> failures;
  std::filesystem::path directory;

  int exit_status() const { return failures.empty() ? 0 : 1; }
};

/// Profiles, campaigns, embeddings and metrics for every grid of the
/// manifest under out/<experiment_id>. Profiles with a record on disk are
/// not recomputed; aggregate files are rebuilt from the records in canonical
/// order, so the tree does not depend on `workers`.
RunOutcome run_experiment(const ExperimentManifest& manifest, std::size_t workers, std::ostream* log = nullptr);

struct ReportOptions {
  bool proportional_only = false;
  std::size_t repeats = 10;
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  SplineOptions spline;
};

struct ReportEntry {
  std::string network;
  std::string measure;
  std::size_t n = 0;
  std::string status;  // "ok" or "insufficient_data"
  std::optional<CrossValidationReport> cv;
};

/// Cross-validated spline of mean collapse round on kappa for every
/// (network, measure) pair of an experiment directory. Writes
/// report/evaluation.{json,csv} and report/predictions/*.csv.
std::vector<ReportEntry> run_report(const std::filesystem::path& experiment_dir, const ReportOptions& options,
                                    std::size_t workers = 1);

struct TimeSeriesPeriod {
  std::string label;
  std::vector<double> generation;  // per bus, after overrides
  std::vector<double> demand;
};

struct TimeSeriesBatch {
  std::vector<TimeSeriesPeriod> periods;
};

/// CSV with columns period, bus_id, generation, demand. Buses not listed in
/// a period keep their base values. Periods must be contiguous and, when all
/// labels are numeric, strictly increasing.
TimeSeriesBatch read_timeseries_batch(std::istream& in, const PowerGrid& grid, const std::string& source = "batch");

struct PeriodRecord {
  std::string label;
  std::string status;  // "ok", "overloaded" or "infeasible_balance"
  std::array<double, 5> measures{};
  double mean_collapse_round = 0.0;
  double mean_power_lost = 0.0;
};

struct TimeSeriesResult {
  std::vector<PeriodRecord> periods;
  // Correlation of each measure with mean collapse round; empty when
  // undefined (constant series or fewer than three usable periods).
  std::array<std::optional<double>, 5> correlation;
};

/// Needs real capacities on every line. Every period uses the same master
/// seed so attack sequences are shared across periods.
TimeSeriesResult run_timeseries(const PowerGrid& grid, const TimeSeriesBatch& batch, std::size_t n_runs,
                                std::uint64_t master_seed, const PipelineSettings& settings = {},
                                std::size_t workers = 1);

void write_timeseries(const std::filesystem::path& dir, const std::string& experiment_id,
                      const TimeSeriesResult& result);

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace gridrobust
