#include "gridrobust/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "gridrobust/cascade_attack.hpp"
#include "gridrobust/errors.hpp"
#include "gridrobust/parallel.hpp"

namespace gridrobust {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

Config Config::parse(std::istream& in, const std::string& source) {
  Config config;
  config.source_ = source;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = std::string_view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = csv::trim(view);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = std::string(csv::trim(view.substr(0, eq)));
    if (key.empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty key");
    config.values_[key] = std::string(csv::trim(view.substr(eq + 1)));
  }
  return config;
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  return parse(in, path.string());
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::text(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::number(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return csv::parse_double(it->second, source_ + ": " + key);
}

std::size_t Config::count(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(seed(key, fallback));
}

std::uint64_t Config::seed(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& s = it->second;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(source_ + ": " + key + " must be a nonnegative integer, got '" + s + "'");
  }
  return value;
}

bool Config::flag(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ParseError(source_ + ": " + key + " must be true or false, got '" + s + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) return {};
  return csv::split(it->second);
}

std::vector<double> Config::numbers(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : list(key)) out.push_back(csv::parse_double(item, source_ + ": " + key));
  return out;
}

std::vector<Fraction> Config::fractions(const std::string& key, const std::vector<Fraction>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<Fraction> out;
  for (const auto& item : list(key)) out.push_back(Fraction::parse(item));
  return out;
}

void Config::require_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ParseError(source_ + ": unknown key '" + k + "'");
    }
  }
}

std::vector<std::string> settings_keys() {
  return {"k_min",
          "k_range",
          "zero_flow_floor",
          "solver.tolerance_fraction",
          "solver.timestep_factor",
          "solver.drag_factor",
          "solver.max_iterations",
          "solver.max_restarts",
          "solver.divergence_window",
          "solver.divergence_growth",
          "solver.newton_polish",
          "solver.polish_threshold",
          "solver.max_newton_iterations",
          "spline.knots",
          "spline.log10_lambda_min",
          "spline.log10_lambda_max",
          "spline.lambda_steps",
          "cv.repeats",
          "cv.folds",
          "cv.seed",
          "variogram.bins",
          "variogram.cutoff_fraction"};
}

PipelineSettings settings_from_config(const Config& c) {
  PipelineSettings s;
  s.stiffness.k_min = c.number("k_min", s.stiffness.k_min);
  s.stiffness.k_range = c.number("k_range", s.stiffness.k_range);
  s.zero_flow_floor = c.number("zero_flow_floor", s.zero_flow_floor);
  auto& v = s.solver;
  v.tolerance_fraction = c.number("solver.tolerance_fraction", v.tolerance_fraction);
  v.timestep_factor = c.number("solver.timestep_factor", v.timestep_factor);
  v.drag_factor = c.number("solver.drag_factor", v.drag_factor);
  v.max_iterations = c.count("solver.max_iterations", v.max_iterations);
  v.max_restarts = static_cast<int>(c.count("solver.max_restarts", static_cast<std::size_t>(v.max_restarts)));
  v.divergence_window = c.count("solver.divergence_window", v.divergence_window);
  v.divergence_growth = c.number("solver.divergence_growth", v.divergence_growth);
  v.newton_polish = c.flag("solver.newton_polish", v.newton_polish);
  v.polish_threshold = c.number("solver.polish_threshold", v.polish_threshold);
  v.max_newton_iterations = c.count("solver.max_newton_iterations", v.max_newton_iterations);
  s.spline.knots = c.count("spline.knots", s.spline.knots);
  s.spline.log10_lambda_min = c.number("spline.log10_lambda_min", s.spline.log10_lambda_min);
  s.spline.log10_lambda_max = c.number("spline.log10_lambda_max", s.spline.log10_lambda_max);
  s.spline.lambda_steps = c.count("spline.lambda_steps", s.spline.lambda_steps);
  s.cv_repeats = c.count("cv.repeats", s.cv_repeats);
  s.cv_folds = c.count("cv.folds", s.cv_folds);
  s.cv_seed = c.seed("cv.seed", s.cv_seed);
  s.variogram.bins = c.count("variogram.bins", s.variogram.bins);
  s.variogram.cutoff_fraction = c.number("variogram.cutoff_fraction", s.variogram.cutoff_fraction);
  if (!(s.zero_flow_floor > 0.0)) throw ValidationError("zero_flow_floor must be > 0");
  if (!(s.stiffness.k_min > 0.0) || !(s.stiffness.k_range >= 0.0)) {
    throw ValidationError("k_min must be > 0 and k_range >= 0");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Manifest

ExperimentManifest manifest_from_config(const Config& c, const fs::path& base_dir) {
  auto known = settings_keys();
  for (const char* k : {"experiment_id", "grids", "alpha", "p", "f", "q", "include_proportional", "n_runs", "seed",
                        "out", "workers", "report.proportional_only"}) {
    known.emplace_back(k);
  }
  c.require_known(known);

  ExperimentManifest m;
  m.experiment_id = c.text("experiment_id", "");
  if (m.experiment_id.empty()) throw ValidationError("manifest: experiment_id is required");
  if (m.experiment_id.find_first_of("/\\ ") != std::string::npos) {
    throw ValidationError("manifest: experiment_id must not contain path separators or spaces");
  }
  for (const auto& g : c.list("grids")) {
    fs::path p(g);
    m.grids.push_back(p.is_absolute() || base_dir.empty() ? p : (base_dir / p).lexically_normal());
  }
  if (m.grids.empty()) throw ValidationError("manifest: grids is required");
  m.profiles.alpha = c.numbers("alpha", m.profiles.alpha);
  m.profiles.p = c.fractions("p", m.profiles.p);
  m.profiles.f = c.numbers("f", m.profiles.f);
  m.profiles.q = c.fractions("q", m.profiles.q);
  m.profiles.include_proportional = c.flag("include_proportional", m.profiles.include_proportional);
  m.n_runs = c.count("n_runs", m.n_runs);
  if (m.n_runs == 0) throw ValidationError("manifest: n_runs must be >= 1");
  m.seed = c.seed("seed", m.seed);
  m.out = c.text("out", m.out.string());
  if (m.out.is_relative() && !base_dir.empty()) m.out = (base_dir / m.out).lexically_normal();
  m.report_proportional_only = c.flag("report.proportional_only", m.report_proportional_only);
  m.settings = settings_from_config(c);
  m.profiles.zero_flow_floor = m.settings.zero_flow_floor;
  return m;
}

ExperimentManifest load_manifest(const fs::path& path) {
  return manifest_from_config(Config::load(path), path.parent_path());
}

namespace {

std::string join_numbers(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + csv::format_double(values[i]);
  return out;
}

std::string join_fractions(const std::vector<Fraction>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + values[i].label();
  return out;
}

std::string fmt(double v) { return csv::format_double(v); }

}  // namespace

std::string manifest_text(const ExperimentManifest& m) {
  std::ostringstream o;
  o << "experiment_id = " << m.experiment_id << '\n';
  o << "grids = ";
  for (std::size_t i = 0; i < m.grids.size(); ++i) o << (i ? "," : "") << m.grids[i].string();
  o << '\n';
  o << "alpha = " << join_numbers(m.profiles.alpha) << '\n';
  o << "p = " << join_fractions(m.profiles.p) << '\n';
  o << "f = " << join_numbers(m.profiles.f) << '\n';
  o << "q = " << join_fractions(m.profiles.q) << '\n';
  o << "include_proportional = " << (m.profiles.include_proportional ? "true" : "false") << '\n';
  o << "n_runs = " << m.n_runs << '\n';
  o << "seed = " << m.seed << '\n';
  o << "report.proportional_only = " << (m.report_proportional_only ? "true" : "false") << '\n';
  const auto& s = m.settings;
  o << "k_min = " << fmt(s.stiffness.k_min) << '\n';
  o << "k_range = " << fmt(s.stiffness.k_range) << '\n';
  o << "zero_flow_floor = " << fmt(s.zero_flow_floor) << '\n';
  o << "solver.tolerance_fraction = " << fmt(s.solver.tolerance_fraction) << '\n';
  o << "solver.timestep_factor = " << fmt(s.solver.timestep_factor) << '\n';
  o << "solver.drag_factor = " << fmt(s.solver.drag_factor) << '\n';
  o << "solver.max_iterations = " << s.solver.max_iterations << '\n';
  o << "solver.max_restarts = " << s.solver.max_restarts << '\n';
  o << "solver.divergence_window = " << s.solver.divergence_window << '\n';
  o << "solver.divergence_growth = " << fmt(s.solver.divergence_growth) << '\n';
  o << "solver.newton_polish = " << (s.solver.newton_polish ? "true" : "false") << '\n';
  o << "solver.polish_threshold = " << fmt(s.solver.polish_threshold) << '\n';
  o << "solver.max_newton_iterations = " << s.solver.max_newton_iterations << '\n';
  o << "spline.knots = " << s.spline.knots << '\n';
  o << "spline.log10_lambda_min = " << fmt(s.spline.log10_lambda_min) << '\n';
  o << "spline.log10_lambda_max = " << fmt(s.spline.log10_lambda_max) << '\n';
  o << "spline.lambda_steps = " << s.spline.lambda_steps << '\n';
  o << "cv.repeats = " << s.cv_repeats << '\n';
  o << "cv.folds = " << s.cv_folds << '\n';
  o << "cv.seed = " << s.cv_seed << '\n';
  o << "variogram.bins = " << s.variogram.bins << '\n';
  o << "variogram.cutoff_fraction = " << fmt(s.variogram.cutoff_fraction) << '\n';
  return o.str();
}

std::string artifact_header(const std::string& experiment_id) {
  return std::string("# experiment=") + experiment_id + " balance_rule=" + kBalanceRule +
         " alloc=" + kAllocationRule + " mr_population=" + kMolloyReedPopulation +
         " force_normalization=" + kForceNormalization;
}

json artifact_meta(const std::string& experiment_id) {
  return {{"experiment", experiment_id},
          {"balance_rule", kBalanceRule},
          {"alloc", kAllocationRule},
          {"mr_population", kMolloyReedPopulation},
          {"force_normalization", kForceNormalization}};
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Lower-case alphanumerics, '-', '_' and '.' of the grid name.
std::string network_slug(const std::string& name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.') out += static_cast<char>(std::tolower(c));
  }
  if (out.empty() || out == "." || out == "..") throw ValidationError("grid name '" + name + "' has no usable characters");
  return out;
}

fs::path record_path(const fs::path& network_dir, const std::string& profile_id) {
  return network_dir / "records" / (profile_id + ".json");
}

// A record on disk counts as complete when it parses and was produced for
// the same profile and campaign settings.
std::optional<json> load_record(const fs::path& path, const std::string& profile_id, const ExperimentManifest& m) {
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    auto rec = json::parse(read_text(path));
    if (rec.at("profile").at("id") != profile_id) return std::nullopt;
    if (rec.at("campaign").at("n_runs").get<std::size_t>() != m.n_runs) return std::nullopt;
    if (rec.at("campaign").at("master_seed").get<std::uint64_t>() != m.seed) return std::nullopt;
    return rec;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

json compute_record(const PowerGrid& grid, const GridState& base, const LineLimitProfile& profile,
                    const ExperimentManifest& m) {
  auto campaign = run_campaign(grid, profile, m.n_runs, m.seed, 1);
  const auto& s = m.settings;
  auto alpha = edge_alpha(profile.capacity, base.flows.flow, s.zero_flow_floor);
  auto embedding = embed_grid(grid, profile, base.flows, s.stiffness, s.solver, s.zero_flow_floor);
  auto measures = profile_measures(alpha, embedding);
  json rec;
  rec["meta"] = artifact_meta(m.experiment_id);
  rec["network"] = network_slug(grid.name());
  rec["profile"] = profile_to_json(profile);
  rec["campaign"] = campaign_to_json(campaign, true);
  auto& mj = rec["measures"] = json::object();
  for (std::size_t k = 0; k < kAllMeasures.size(); ++k) mj[to_string(kAllMeasures[k])] = measures[k];
  rec["embedding"] = embedding_to_json(grid, embedding);
  return rec;
}

std::string csv_field(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return csv::format_double(v.get<double>());
  return v.dump();
}

}  // namespace

RunOutcome run_experiment(const ExperimentManifest& m, std::size_t workers, std::ostream* log) {
  RunOutcome outcome;
  const fs::path root = m.out / m.experiment_id;
  outcome.directory = root;
  fs::create_directories(root);
  write_file_atomic(root / "manifest.txt", manifest_text(m));
  const auto header = artifact_header(m.experiment_id) + '\n';

  std::vector<RobustnessSummary> summaries;
  std::set<std::string> networks;
  for (const auto& grid_path : m.grids) {
    const auto grid = load_grid(grid_path);
    const auto network = network_slug(grid.name());
    if (!networks.insert(network).second) {
      throw ValidationError("manifest: two grids share the network name '" + network + "'");
    }
    const fs::path dir = root / network;
    fs::create_directories(dir / "records");
    const auto base = initial_state(grid);
    const auto set = generate_profile_grid(grid, base.flows, m.profiles);
    outcome.profiles += set.profiles.size();
    if (log) *log << network << ": " << set.profiles.size() << " profiles, " << set.skipped.size() << " skipped\n";

    {
      std::ostringstream o;
      json meta = artifact_meta(m.experiment_id);
      meta["network"] = network;
      meta["zero_flow_floor"] = m.profiles.zero_flow_floor;
      o << json{{"meta", meta}}.dump() << '\n';
      write_profiles_jsonl(o, set.profiles);
      write_file_atomic(dir / "profiles.jsonl", o.str());
    }
    {
      std::ostringstream o;
      o << header << "profile_id,reason\n";
      for (const auto& s : set.skipped) o << s.id << ',' << s.reason << '\n';
      write_file_atomic(dir / "profiles_skipped.csv", o.str());
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < set.profiles.size(); ++i) {
      if (load_record(record_path(dir, set.profiles[i].id), set.profiles[i].id, m)) {
        ++outcome.resumed;
      } else {
        pending.push_back(i);
      }
    }
    if (log && outcome.resumed) *log << network << ": resuming, " << pending.size() << " profiles to compute\n";

    std::vector<std::string> errors(pending.size());
    std::atomic<std::size_t> done{0};
    parallel_for(pending.size(), workers, [&](std::size_t k) {
      const auto& profile = set.profiles[pending[k]];
      try {
        auto rec = compute_record(grid, base, profile, m);
        write_file_atomic(record_path(dir, profile.id), rec.dump() + '\n');
      } catch (const std::exception& e) {
        errors[k] = e.what();
        if (errors[k].empty()) errors[k] = "unknown error";
      }
      auto n = ++done;
      if (log && (n % 100 == 0 || n == pending.size())) {
        static std::mutex log_mutex;
        std::lock_guard lock(log_mutex);
        *log << network << ": " << n << "/" << pending.size() << " profiles computed\n";
      }
    });
    std::vector<ProfileFailure> failures;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      if (!errors[k].empty()) {
        failures.push_back({network, set.profiles[pending[k]].id, errors[k]});
      } else {
        ++outcome.computed;
      }
    }

    // Aggregates are always rebuilt from what is on disk, in canonical order.
    std::ostringstream campaigns, summary, ledger;
    {
      json meta = artifact_meta(m.experiment_id);
      meta["network"] = network;
      campaigns << json{{"meta", meta}}.dump() << '\n';
    }
    summary << header
            << "profile_id,alpha,p,f,q,direction,n_runs,mean_collapse_round,mean_power_lost,min_power_lost,"
               "max_power_lost,mean_cascade_fraction\n";
    ledger << header;
    for (const auto& profile : set.profiles) {
      auto rec = load_record(record_path(dir, profile.id), profile.id, m);
      if (!rec) continue;
      const auto& c = rec->at("campaign");
      const auto& p = rec->at("profile");
      campaigns << c.dump() << '\n';
      summary << profile.id << ',' << csv_field(p.at("alpha")) << ',' << csv_field(p.at("p")) << ','
              << csv_field(p.at("f")) << ',' << csv_field(p.at("q")) << ',' << csv_field(p.at("direction")) << ','
              << csv_field(c.at("n_runs")) << ',' << csv_field(c.at("mean_collapse_round")) << ','
              << csv_field(c.at("mean_power_lost")) << ',' << csv_field(c.at("min_power_lost")) << ','
              << csv_field(c.at("max_power_lost")) << ',' << csv_field(c.at("mean_cascade_fraction")) << '\n';
      ledger << profile.id << '\n';
      for (auto measure : kAllMeasures) {
        summaries.push_back({network, profile.id, measure, rec->at("measures").at(to_string(measure)).get<double>()});
      }
    }
    write_file_atomic(dir / "campaigns.jsonl", campaigns.str());
    write_file_atomic(dir / "campaign_summary.csv", summary.str());
    write_file_atomic(dir / "ledger.txt", ledger.str());
    {
      std::ostringstream o;
      o << header << "network,profile_id,message\n";
      for (const auto& f : failures) {
        auto msg = f.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        o << f.network << ',' << f.profile_id << ',' << msg << '\n';
      }
      write_file_atomic(dir / "failures.csv", o.str());
    }
    outcome.failures.insert(outcome.failures.end(), failures.begin(), failures.end());
  }

  normalize_batch(summaries);
  std::ostringstream metrics;
  metrics << header << "network,profile_id,measure,raw,kappa,degenerate\n";
  for (const auto& s : summaries) {
    metrics << s.network << ',' << s.profile_id << ',' << to_string(s.measure) << ',' << fmt(s.raw) << ','
            << fmt(s.kappa) << ',' << (s.degenerate ? "true" : "false") << '\n';
  }
  write_file_atomic(root / "metrics.csv", metrics.str());
  if (log) {
    *log << "experiment " << m.experiment_id << ": " << outcome.computed << " computed, " << outcome.resumed
         << " resumed, " << outcome.failures.size() << " failed\n";
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string read_experiment_id(const fs::path& file) {
  std::ifstream in(file);
  std::string first;
  std::getline(in, first);
  const std::string key = "# experiment=";
  if (first.rfind(key, 0) != 0) return "";
  auto rest = first.substr(key.size());
  return rest.substr(0, rest.find(' '));
}

}  // namespace

std::vector<ReportEntry> run_report(const fs::path& experiment_dir, const ReportOptions& options, std::size_t workers) {
  const auto metrics_path = experiment_dir / "metrics.csv";
  if (!fs::exists(metrics_path)) throw ValidationError("report: missing " + metrics_path.string());
  const auto experiment_id = read_experiment_id(metrics_path);
  const auto metrics = csv::read_file(metrics_path.string());
  const auto c_net = metrics.column("network"), c_prof = metrics.column("profile_id"),
             c_meas = metrics.column("measure"), c_kappa = metrics.column("kappa");

  std::vector<std::string> networks;
  for (const auto& row : metrics.rows) {
    if (std::find(networks.begin(), networks.end(), row[c_net]) == networks.end()) networks.push_back(row[c_net]);
  }

  struct Group {
    std::string network;
    Measure measure;
    std::vector<std::string> ids;
    std::vector<double> x, y;
  };
  std::vector<Group> groups;
  for (const auto& network : networks) {
    const auto summary_path = experiment_dir / network / "campaign_summary.csv";
    if (!fs::exists(summary_path)) throw ValidationError("report: missing " + summary_path.string());
    const auto summary = csv::read_file(summary_path.string());
    const auto s_prof = summary.column("profile_id"), s_mean = summary.column("mean_collapse_round"),
               s_dir = summary.column("direction");
    std::map<std::string, std::pair<double, bool>> outcome;  // mean collapse round, proportional
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
      const auto& row = summary.rows[r];
      outcome[row[s_prof]] = {csv::parse_double(row[s_mean], summary.where(r)), row[s_dir].empty()};
    }
    for (auto measure : kAllMeasures) {
      Group g{network, measure, {}, {}, {}};
      for (std::size_t r = 0; r < metrics.rows.size(); ++r) {
        const auto& row = metrics.rows[r];
        if (row[c_net] != network || row[c_meas] != to_string(measure)) continue;
        auto it = outcome.find(row[c_prof]);
        if (it == outcome.end()) throw ValidationError("report: no campaign for profile '" + row[c_prof] + "'");
        if (options.proportional_only && !it->second.second) continue;
        g.ids.push_back(row[c_prof]);
        g.x.push_back(csv::parse_double(row[c_kappa], metrics.where(r)));
        g.y.push_back(it->second.first);
      }
      groups.push_back(std::move(g));
    }
  }

  const std::size_t min_points = std::max<std::size_t>(20, options.folds);
  std::vector<ReportEntry> entries(groups.size());
  std::vector<std::string> predictions(groups.size());
  parallel_for(groups.size(), workers, [&](std::size_t i) {
    const auto& g = groups[i];
    auto& e = entries[i];
    e.network = g.network;
    e.measure = to_string(g.measure);
    e.n = g.x.size();
    if (e.n < min_points) {
      e.status = "insufficient_data";
      return;
    }
    e.status = "ok";
    e.cv = cross_validate(g.x, g.y, options.repeats, options.folds, options.seed, options.spline);
    auto fit = PenalizedSpline::fit(g.x, g.y, options.spline);
    std::ostringstream o;
    o << artifact_header(experiment_id) << '\n' << "profile_id,x,y,prediction\n";
    for (std::size_t k = 0; k < g.x.size(); ++k) {
      o << g.ids[k] << ',' << fmt(g.x[k]) << ',' << fmt(g.y[k]) << ',' << fmt(fit(g.x[k])) << '\n';
    }
    predictions[i] = o.str();
  });

  const fs::path out = experiment_dir / (options.proportional_only ? "report_proportional" : "report");
  fs::create_directories(out / "predictions");
  json doc;
  doc["meta"] = artifact_meta(experiment_id);
  doc["model"] = kRegressionModel;
  doc["x"] = "kappa";
  doc["y"] = "mean_collapse_round";
  doc["options"] = {{"proportional_only", options.proportional_only},
                    {"repeats", options.repeats},
                    {"folds", options.folds},
                    {"seed", options.seed},
                    {"knots", options.spline.knots},
                    {"log10_lambda_min", options.spline.log10_lambda_min},
                    {"log10_lambda_max", options.spline.log10_lambda_max},
                    {"lambda_steps", options.spline.lambda_steps},
                    {"scoring", "held_out_fold"}};
  auto& arr = doc["entries"] = json::array();
  std::ostringstream table;
  table << artifact_header(experiment_id) << '\n'
        << "network,measure,n,status,mean_r2,mean_smape,undefined_r2,fold_scores\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    json j{{"network", e.network}, {"measure", e.measure}, {"n", e.n}, {"status", e.status}};
    table << e.network << ',' << e.measure << ',' << e.n << ',' << e.status << ',';
    if (e.cv) {
      j["cv"] = report_to_json(*e.cv);
      table << fmt(e.cv->mean_r2) << ',' << fmt(e.cv->mean_smape) << ',' << e.cv->undefined_r2 << ','
            << e.cv->scores.size() << '\n';
      write_file_atomic(out / "predictions" / (e.network + "_" + e.measure + ".csv"), predictions[i]);
    } else {
      table << ",,,0\n";
    }
    arr.push_back(std::move(j));
  }
  write_file_atomic(out / "evaluation.json", doc.dump(2) + '\n');
  write_file_atomic(out / "evaluation.csv", table.str());
  return entries;
}

// ---------------------------------------------------------------------------
// Time series

TimeSeriesBatch read_timeseries_batch(std::istream& in, const PowerGrid& grid, const std::string& source) {
  const auto table = csv::read(in, source);
  const auto c_period = table.column("period"), c_bus = table.column("bus_id"), c_gen = table.column("generation"),
             c_dem = table.column("demand");
  TimeSeriesBatch batch;
  std::set<std::string> finished;
  std::set<std::size_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto& label = row[c_period];
    if (batch.periods.empty() || batch.periods.back().label != label) {
      if (!batch.periods.empty()) finished.insert(batch.periods.back().label);
      if (finished.count(label)) throw ParseError(table.where(r) + ": period '" + label + "' is not contiguous");
      TimeSeriesPeriod p;
      p.label = label;
      for (const auto& b : grid.buses()) {
        p.generation.push_back(b.generation);
        p.demand.push_back(b.demand);
      }
      batch.periods.push_back(std::move(p));
      seen.clear();
    }
    auto bus = grid.find_bus(row[c_bus]);
    if (!bus) throw ValidationError(table.where(r) + ": unknown bus '" + row[c_bus] + "'");
    if (!seen.insert(*bus).second) {
      throw ValidationError(table.where(r) + ": bus '" + row[c_bus] + "' listed twice in period '" + label + "'");
    }
    const double g = csv::parse_double(row[c_gen], table.where(r));
    const double d = csv::parse_double(row[c_dem], table.where(r));
    if (!(g >= 0.0) || !(d >= 0.0) || !std::isfinite(g) || !std::isfinite(d)) {
      throw ValidationError(table.where(r) + ": generation and demand must be finite and >= 0");
    }
    batch.periods.back().generation[*bus] = g;
    batch.periods.back().demand[*bus] = d;
  }
  // Numeric labels must increase strictly.
  bool numeric = true;
  std::vector<double> values;
  for (const auto& p : batch.periods) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(p.label.data(), p.label.data() + p.label.size(), v);
    if (ec != std::errc() || ptr != p.label.data() + p.label.size()) {
      numeric = false;
      break;
    }
    values.push_back(v);
  }
  if (numeric) {
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (!(values[i] > values[i - 1])) {
        throw ValidationError(source + ": periods must be strictly increasing ('" + batch.periods[i - 1].label +
                              "' then '" + batch.periods[i].label + "')");
      }
    }
  }
  return batch;
}

TimeSeriesResult run_timeseries(const PowerGrid& grid, const TimeSeriesBatch& batch, std::size_t n_runs,
                                std::uint64_t master_seed, const PipelineSettings& settings, std::size_t workers) {
  std::vector<double> capacity(grid.line_count());
  for (std::size_t l = 0; l < grid.line_count(); ++l) {
    const auto& c = grid.lines()[l].capacity;
    if (!c) throw ValidationError("timeseries: line '" + grid.lines()[l].id + "' has no capacity");
    capacity[l] = *c;
  }
  if (n_runs == 0) throw ValidationError("timeseries: n_runs must be >= 1");

  TimeSeriesResult result;
  result.periods.resize(batch.periods.size());
  parallel_for(batch.periods.size(), workers, [&](std::size_t i) {
    const auto& period = batch.periods[i];
    auto& rec = result.periods[i];
    rec.label = period.label;
    const auto pg = grid.with_injections(period.generation, period.demand);
    const auto base = initial_state(pg);
    if (!(base.served > 0.0)) {
      rec.status = "infeasible_balance";
      return;
    }
    for (std::size_t l = 0; l < pg.line_count(); ++l) {
      if (std::abs(base.flows.flow[l]) > capacity[l] * (1.0 + kTripTolerance)) {
        rec.status = "overloaded";
        return;
      }
    }
    LineLimitProfile profile;
    profile.id = "period_" + period.label;
    profile.capacity = capacity;
    auto alpha = edge_alpha(capacity, base.flows.flow, settings.zero_flow_floor);
    auto embedding = embed_grid(pg, profile, base.flows, settings.stiffness, settings.solver, settings.zero_flow_floor);
    rec.measures = profile_measures(alpha, embedding);
    auto campaign = run_campaign(pg, profile, n_runs, master_seed, 1);
    rec.mean_collapse_round = campaign.mean_collapse_round;
    rec.mean_power_lost = campaign.mean_power_lost;
    rec.status = "ok";
  });

  std::vector<double> y;
  for (const auto& p : result.periods) {
    if (p.status == "ok") y.push_back(p.mean_collapse_round);
  }
  for (std::size_t k = 0; k < kAllMeasures.size(); ++k) {
    std::vector<double> x;
    for (const auto& p : result.periods) {
      if (p.status == "ok") x.push_back(p.measures[k]);
    }
    try {
      result.correlation[k] = pearson(x, y);
    } catch (const ValidationError&) {
      result.correlation[k].reset();
    }
  }
  return result;
}

void write_timeseries(const fs::path& dir, const std::string& experiment_id, const TimeSeriesResult& result) {
  const auto header = artifact_header(experiment_id) + '\n';
  std::ostringstream periods;
  periods << header << "period,status";
  for (auto m : kAllMeasures) periods << ',' << to_string(m);
  periods << ",mean_collapse_round,mean_power_lost\n";
  for (const auto& p : result.periods) {
    periods << p.label << ',' << p.status;
    if (p.status == "ok") {
      for (auto v : p.measures) periods << ',' << fmt(v);
      periods << ',' << fmt(p.mean_collapse_round) << ',' << fmt(p.mean_power_lost) << '\n';
    } else {
      periods << ",,,,,,,\n";
    }
  }
  std::ostringstream corr;
  corr << header << "measure,pearson_r,status\n";
  for (std::size_t k = 0; k < kAllMeasures.size(); ++k) {
    corr << to_string(kAllMeasures[k]) << ',';
    if (result.correlation[k]) {
      corr << fmt(*result.correlation[k]) << ",ok\n";
    } else {
      corr << ",undefined\n";
    }
  }
  write_file_atomic(dir / "timeseries.csv", periods.str());
  write_file_atomic(dir / "timeseries_correlations.csv", corr.str());
}

}  // namespace gridrobust
