// Command-line front end: one subcommand per pipeline stage plus `run` for
// a whole manifest-driven experiment.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridrobust/cascade_attack.hpp"
#include "gridrobust/errors.hpp"
#include "gridrobust/geospatial.hpp"
#include "gridrobust/grid_model.hpp"
#include "gridrobust/load_profiles.hpp"
#include "gridrobust/metrics.hpp"
#include "gridrobust/orchestrator.hpp"
#include "gridrobust/parallel.hpp"
#include "gridrobust/setse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridrobust;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  std::string out = "out";
};

Config load_config(const Globals& g) {
  if (g.config_path.empty()) return {};
  auto c = Config::load(g.config_path);
  auto known = settings_keys();
  for (const char* k : {"experiment_id", "grids", "alpha", "p", "f", "q", "include_proportional", "n_runs", "seed",
                        "out", "workers", "report.proportional_only"}) {
    known.emplace_back(k);
  }
  c.require_known(known);
  return c;
}

std::size_t worker_count(const Globals& g, const Config& c) {
  std::size_t w = g.workers ? g.workers : c.count("workers", 0);
  if (w == 0) w = std::max(1u, std::thread::hardware_concurrency());
  return w;
}

std::uint64_t master_seed(const Globals& g, const Config& c) { return g.seed ? *g.seed : c.seed("seed", 1); }

std::string experiment_id(const Config& c) { return c.text("experiment_id", "adhoc"); }

ProfileGridSpec profile_spec(const Config& c, const PipelineSettings& s) {
  ProfileGridSpec spec;
  spec.alpha = c.numbers("alpha", spec.alpha);
  spec.p = c.fractions("p", spec.p);
  spec.f = c.numbers("f", spec.f);
  spec.q = c.fractions("q", spec.q);
  spec.include_proportional = c.flag("include_proportional", spec.include_proportional);
  spec.zero_flow_floor = s.zero_flow_floor;
  return spec;
}

std::vector<LineLimitProfile> read_profiles(const std::string& path, const std::vector<std::string>& only) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  auto all = read_profiles_jsonl(in);
  if (only.empty()) return all;
  std::vector<LineLimitProfile> out;
  for (const auto& id : only) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& p) { return p.id == id; });
    if (it == all.end()) throw ValidationError("profile '" + id + "' not found in " + path);
    out.push_back(*it);
  }
  return out;
}

void check_profiles(const PowerGrid& grid, const std::vector<LineLimitProfile>& profiles) {
  for (const auto& p : profiles) {
    if (p.capacity.size() != grid.line_count()) {
      throw ValidationError("profile '" + p.id + "' has " + std::to_string(p.capacity.size()) +
                            " capacities but the grid has " + std::to_string(grid.line_count()) + " lines");
    }
  }
}

// Shortest round-trip decimal form.
std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

int cmd_ingest(const Globals&, const std::string& path, const std::string& save, const std::string& save_format) {
  auto grid = load_grid(path);
  auto s = summary_statistics(grid);
  json doc{{"name", grid.name()},
           {"nodes", s.node_count},
           {"edges", s.edge_count},
           {"mean_degree", s.mean_degree},
           {"assortativity", s.assortativity},
           {"assortativity_defined", s.assortativity_defined},
           {"mean_clustering", s.mean_clustering},
           {"mean_distance", s.mean_distance},
           {"mean_betweenness", s.mean_betweenness},
           {"generators", s.generator_count},
           {"loads", s.load_count},
           {"components", connected_components(grid).size()}};
  std::cout << doc.dump(2) << '\n';
  if (!save.empty()) {
    save_grid(grid, save, save_format == "csv" ? GridFormat::NodeEdgeCsv : GridFormat::CanonicalJson);
  }
  return 0;
}

int cmd_profiles(const Globals& g, const std::string& grid_path) {
  auto config = load_config(g);
  auto settings = settings_from_config(config);
  auto grid = load_grid(grid_path);
  auto base = initial_state(grid);
  auto set = generate_profile_grid(grid, base.flows, profile_spec(config, settings));
  fs::create_directories(g.out);
  std::ostringstream o;
  json meta = artifact_meta(experiment_id(config));
  meta["network"] = grid.name();
  o << json{{"meta", meta}}.dump() << '\n';
  write_profiles_jsonl(o, set.profiles);
  write_file_atomic(fs::path(g.out) / "profiles.jsonl", o.str());
  std::ostringstream s;
  s << artifact_header(experiment_id(config)) << "\nprofile_id,reason\n";
  for (const auto& k : set.skipped) s << k.id << ',' << k.reason << '\n';
  write_file_atomic(fs::path(g.out) / "profiles_skipped.csv", s.str());
  std::cerr << grid.name() << ": " << set.profiles.size() << " profiles, " << set.skipped.size() << " skipped\n";
  return 0;
}

int cmd_attack(const Globals& g, const std::string& grid_path, const std::string& profiles_path,
               const std::vector<std::string>& only, std::size_t runs) {
  auto config = load_config(g);
  auto grid = load_grid(grid_path);
  auto profiles = read_profiles(profiles_path, only);
  check_profiles(grid, profiles);
  const auto seed = master_seed(g, config);
  if (runs == 0) runs = config.count("n_runs", 100);
  std::vector<AttackCampaignResult> results(profiles.size());
  parallel_for(profiles.size(), worker_count(g, config),
               [&](std::size_t i) { results[i] = run_campaign(grid, profiles[i], runs, seed, 1); });
  const auto id = experiment_id(config);
  std::ostringstream jsonl, summary;
  jsonl << json{{"meta", artifact_meta(id)}}.dump() << '\n';
  summary << artifact_header(id)
          << "\nprofile_id,n_runs,mean_collapse_round,mean_power_lost,min_power_lost,max_power_lost,"
             "mean_cascade_fraction\n";
  for (const auto& r : results) {
    jsonl << campaign_to_json(r, true).dump() << '\n';
    summary << r.profile_id << ',' << r.runs.size() << ',' << fmt(r.mean_collapse_round) << ','
            << fmt(r.mean_power_lost) << ',' << fmt(r.min_power_lost) << ',' << fmt(r.max_power_lost) << ','
            << fmt(r.mean_cascade_fraction) << '\n';
  }
  fs::create_directories(g.out);
  write_file_atomic(fs::path(g.out) / "campaigns.jsonl", jsonl.str());
  write_file_atomic(fs::path(g.out) / "campaign_summary.csv", summary.str());
  return 0;
}

std::vector<SetseEmbedding> embed_all(const Globals& g, const Config& config, const PowerGrid& grid,
                                      const std::vector<LineLimitProfile>& profiles, const GridState& base) {
  auto settings = settings_from_config(config);
  std::vector<SetseEmbedding> out(profiles.size());
  parallel_for(profiles.size(), worker_count(g, config), [&](std::size_t i) {
    out[i] = embed_grid(grid, profiles[i], base.flows, settings.stiffness, settings.solver, settings.zero_flow_floor);
  });
  return out;
}

int cmd_embed(const Globals& g, const std::string& grid_path, const std::string& profiles_path,
              const std::vector<std::string>& only) {
  auto config = load_config(g);
  auto grid = load_grid(grid_path);
  auto profiles = read_profiles(profiles_path, only);
  check_profiles(grid, profiles);
  auto base = initial_state(grid);
  auto embeddings = embed_all(g, config, grid, profiles, base);
  const auto id = experiment_id(config);
  std::ostringstream jsonl, nodes, edges;
  jsonl << json{{"meta", artifact_meta(id)}}.dump() << '\n';
  nodes << artifact_header(id) << "\nprofile_id,bus_id,x,y,elevation\n";
  edges << artifact_header(id) << "\nprofile_id,line_id,strain,tension\n";
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    auto doc = embedding_to_json(grid, embeddings[i]);
    doc["profile_id"] = profiles[i].id;
    jsonl << doc.dump() << '\n';
    for (std::size_t b = 0; b < grid.bus_count(); ++b) {
      const auto& bus = grid.buses()[b];
      nodes << profiles[i].id << ',' << bus.id << ',' << fmt(bus.x) << ',' << fmt(bus.y) << ','
            << fmt(embeddings[i].elevation[b]) << '\n';
    }
    for (std::size_t l = 0; l < grid.line_count(); ++l) {
      edges << profiles[i].id << ',' << grid.lines()[l].id << ',' << fmt(embeddings[i].strain[l]) << ','
            << fmt(embeddings[i].tension[l]) << '\n';
    }
  }
  fs::create_directories(g.out);
  write_file_atomic(fs::path(g.out) / "embeddings.jsonl", jsonl.str());
  write_file_atomic(fs::path(g.out) / "embedding_nodes.csv", nodes.str());
  write_file_atomic(fs::path(g.out) / "embedding_edges.csv", edges.str());
  return 0;
}

int cmd_metrics(const Globals& g, const std::string& grid_path, const std::string& profiles_path) {
  auto config = load_config(g);
  auto settings = settings_from_config(config);
  auto grid = load_grid(grid_path);
  auto profiles = read_profiles(profiles_path, {});
  check_profiles(grid, profiles);
  auto base = initial_state(grid);
  auto embeddings = embed_all(g, config, grid, profiles, base);
  std::vector<RobustnessSummary> summaries;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    auto alpha = edge_alpha(profiles[i].capacity, base.flows.flow, settings.zero_flow_floor);
    auto m = profile_measures(alpha, embeddings[i]);
    for (std::size_t k = 0; k < kAllMeasures.size(); ++k) {
      summaries.push_back({grid.name(), profiles[i].id, kAllMeasures[k], m[k]});
    }
  }
  normalize_batch(summaries);
  std::ostringstream o;
  o << artifact_header(experiment_id(config)) << "\nnetwork,profile_id,measure,raw,kappa,degenerate\n";
  for (const auto& s : summaries) {
    o << s.network << ',' << s.profile_id << ',' << to_string(s.measure) << ',' << fmt(s.raw) << ',' << fmt(s.kappa)
      << ',' << (s.degenerate ? "true" : "false") << '\n';
  }
  fs::create_directories(g.out);
  write_file_atomic(fs::path(g.out) / "metrics.csv", o.str());
  return 0;
}

int cmd_report(const Globals& g, const std::string& dir, bool proportional_only) {
  Config config = load_config(g);
  if (g.config_path.empty() && fs::exists(fs::path(dir) / "manifest.txt")) {
    config = Config::load(fs::path(dir) / "manifest.txt");
  }
  auto settings = settings_from_config(config);
  ReportOptions options;
  options.proportional_only = proportional_only || config.flag("report.proportional_only", false);
  options.repeats = settings.cv_repeats;
  options.folds = settings.cv_folds;
  options.seed = g.seed ? *g.seed : settings.cv_seed;
  options.spline = settings.spline;
  auto entries = run_report(dir, options, worker_count(g, config));
  for (const auto& e : entries) {
    std::cerr << e.network << ' ' << e.measure << ": ";
    if (e.cv) {
      std::cerr << "R2 " << e.cv->mean_r2 << ", SMAPE " << e.cv->mean_smape << '\n';
    } else {
      std::cerr << e.status << " (n=" << e.n << ")\n";
    }
  }
  return 0;
}

int cmd_timeseries(const Globals& g, const std::string& grid_path, const std::string& batch_path, std::size_t runs) {
  auto config = load_config(g);
  auto settings = settings_from_config(config);
  auto grid = load_grid(grid_path);
  std::ifstream in(batch_path);
  if (!in) throw ParseError("cannot open " + batch_path);
  auto batch = read_timeseries_batch(in, grid, batch_path);
  if (runs == 0) runs = config.count("n_runs", 100);
  auto result = run_timeseries(grid, batch, runs, master_seed(g, config), settings, worker_count(g, config));
  fs::create_directories(g.out);
  write_timeseries(g.out, experiment_id(config), result);
  std::size_t flagged = 0;
  for (const auto& p : result.periods) flagged += p.status != "ok";
  std::cerr << result.periods.size() << " periods, " << flagged << " flagged\n";
  return 0;
}

int cmd_krige(const Globals& g, const std::string& grid_path, const std::string& embedding_path,
              const std::string& profile_id, const std::string& quantity, double cell_size, double margin) {
  auto config = load_config(g);
  auto settings = settings_from_config(config);
  auto grid = load_grid(grid_path);

  // Accepts an experiment record, a single embedding document, or an
  // embeddings.jsonl file (first match on --profile, else first record).
  std::ifstream in(embedding_path);
  if (!in) throw ParseError("cannot open " + embedding_path);
  std::optional<json> doc;
  std::string line;
  std::ostringstream whole;
  whole << in.rdbuf();
  try {
    doc = json::parse(whole.str());
  } catch (const json::parse_error&) {
    std::istringstream lines(whole.str());
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      auto rec = json::parse(line);
      if (rec.contains("meta") && !rec.contains("nodes")) continue;
      if (profile_id.empty() || rec.value("profile_id", "") == profile_id) {
        doc = rec;
        break;
      }
    }
  }
  if (!doc) throw ValidationError("no embedding found in " + embedding_path);
  if (doc->contains("embedding")) doc = (*doc)["embedding"];
  auto embedding = embedding_from_json(grid, *doc);

  std::vector<SpatialPoint> points;
  if (quantity == "elevation") {
    points = node_points(grid, embedding.elevation);
  } else if (quantity == "strain") {
    points = edge_midpoints(grid, embedding.strain);
  } else if (quantity == "tension") {
    points = edge_midpoints(grid, embedding.tension);
  } else {
    throw ValidationError("unknown quantity '" + quantity + "' (elevation, strain, tension)");
  }
  auto model = fit_variogram(points, settings.variogram);
  auto spec = RasterSpec::covering(points, cell_size, margin);
  auto field = krige(points, model, spec, worker_count(g, config));
  fs::create_directories(g.out);
  const auto id = experiment_id(config);
  std::ostringstream csv_out, asc, vario;
  csv_out << artifact_header(id) << '\n';
  write_raster_csv(csv_out, field);
  write_esri_ascii(asc, field);
  auto vj = variogram_to_json(model, settings.variogram);
  vj["meta"] = artifact_meta(id);
  vj["quantity"] = quantity;
  write_file_atomic(fs::path(g.out) / ("krige_" + quantity + ".csv"), csv_out.str());
  write_file_atomic(fs::path(g.out) / ("krige_" + quantity + ".asc"), asc.str());
  write_file_atomic(fs::path(g.out) / ("variogram_" + quantity + ".json"), vj.dump(2) + '\n');
  return 0;
}

int cmd_run(const Globals& g, std::string manifest_path, const CLI::App& run_app) {
  if (manifest_path.empty()) manifest_path = g.config_path;
  if (manifest_path.empty()) throw ValidationError("run: a manifest path (or --config) is required");
  auto manifest = load_manifest(manifest_path);
  auto config = Config::load(manifest_path);
  if (g.seed) manifest.seed = *g.seed;
  if (run_app.get_parent()->count("--out")) manifest.out = g.out;
  auto outcome = run_experiment(manifest, worker_count(g, config), &std::cerr);
  if (!outcome.failures.empty()) {
    for (const auto& f : outcome.failures) std::cerr << "failed: " << f.network << ' ' << f.profile_id << ": "
                                                     << f.message << '\n';
  }
  return outcome.exit_status();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-grid robustness laboratory: DC flow, cascades, spring embedding and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Key-value config or manifest file");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--workers", g.workers, "Worker threads (0 = hardware concurrency)");
  app.add_option("--out", g.out, "Output directory");

  std::string grid_path, profiles_path, save, save_format = "json", dir, batch_path, embedding_path, profile_id,
                                                   quantity = "elevation", manifest_path;
  std::vector<std::string> only;
  std::size_t runs = 0;
  bool proportional_only = false;
  double cell_size = 2.0, margin = 0.0;

  auto* ingest = app.add_subcommand("ingest", "Validate a grid and print summary statistics")->fallthrough();
  ingest->add_option("grid", grid_path, "Grid file (.json) or node/edge CSV directory")->required();
  ingest->add_option("--save", save, "Write the validated grid");
  ingest->add_option("--save-format", save_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  auto* profiles = app.add_subcommand("profiles", "Generate the line-limit profile grid")->fallthrough();
  profiles->add_option("grid", grid_path)->required();

  auto* attack = app.add_subcommand("attack", "Run seeded attack campaigns")->fallthrough();
  attack->add_option("grid", grid_path)->required();
  attack->add_option("--profiles", profiles_path, "profiles.jsonl")->required();
  attack->add_option("--profile", only, "Restrict to these profile ids");
  attack->add_option("--runs", runs, "Runs per profile (default n_runs from config, else 100)");

  auto* embed = app.add_subcommand("embed", "Spring-embed the grid under each profile")->fallthrough();
  embed->add_option("grid", grid_path)->required();
  embed->add_option("--profiles", profiles_path, "profiles.jsonl")->required();
  embed->add_option("--profile", only, "Restrict to these profile ids");

  auto* metrics = app.add_subcommand("metrics", "Robustness measures and kappa for a profile set")->fallthrough();
  metrics->add_option("grid", grid_path)->required();
  metrics->add_option("--profiles", profiles_path, "profiles.jsonl")->required();

  auto* report = app.add_subcommand("report", "Cross-validated evaluation of an experiment directory")->fallthrough();
  report->add_option("dir", dir, "Experiment directory (out/<experiment_id>)")->required();
  report->add_flag("--proportional-only", proportional_only, "Train on proportional profiles only");

  auto* timeseries = app.add_subcommand("timeseries", "Per-period measures and attack campaigns")->fallthrough();
  timeseries->add_option("grid", grid_path)->required();
  timeseries->add_option("batch", batch_path, "CSV with period,bus_id,generation,demand")->required();
  timeseries->add_option("--runs", runs, "Runs per period (default n_runs from config, else 100)");

  auto* krige_cmd = app.add_subcommand("krige", "Krige an embedding quantity onto a raster")->fallthrough();
  krige_cmd->add_option("grid", grid_path)->required();
  krige_cmd->add_option("--embedding", embedding_path, "Record, embedding JSON or embeddings.jsonl")->required();
  krige_cmd->add_option("--profile", profile_id, "Profile id within embeddings.jsonl");
  krige_cmd->add_option("--quantity", quantity)->check(CLI::IsMember({"elevation", "strain", "tension"}));
  krige_cmd->add_option("--cell-size", cell_size)->check(CLI::PositiveNumber);
  krige_cmd->add_option("--margin", margin)->check(CLI::NonNegativeNumber);

  auto* run = app.add_subcommand("run", "Run a full experiment from a manifest")->fallthrough();
  run->add_option("manifest", manifest_path, "Manifest (key-value config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(g, grid_path, save, save_format);
    if (*profiles) return cmd_profiles(g, grid_path);
    if (*attack) return cmd_attack(g, grid_path, profiles_path, only, runs);
    if (*embed) return cmd_embed(g, grid_path, profiles_path, only);
    if (*metrics) return cmd_metrics(g, grid_path, profiles_path);
    if (*report) return cmd_report(g, dir, proportional_only);
    if (*timeseries) return cmd_timeseries(g, grid_path, batch_path, runs);
    if (*krige_cmd) return cmd_krige(g, grid_path, embedding_path, profile_id, quantity, cell_size, margin);
    if (*run) return cmd_run(g, manifest_path, *run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
