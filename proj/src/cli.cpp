#include "coxmap/cli.hpp"

#include <Eigen/Core>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "coxmap/eval.hpp"
#include "coxmap/io.hpp"
#include "coxmap/log.hpp"
#include "coxmap/parallel.hpp"

namespace coxmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ResolvedModel {
  std::vector<EffectSpec> effects;
  HyperSpec hyper;
  std::string model_name;
};

json effects_json(const std::vector<EffectSpec>& effects) {
  json arr = json::array();
  for (const auto& e : effects)
    arr.push_back(json{{"name", e.name},
                       {"kind", effect_kind_name(e.kind)},
                       {"n_levels", e.n_levels},
                       {"prior_mean", e.prior_mean},
                       {"prior_precision", e.prior_precision},
                       {"sum_to_zero", e.sum_to_zero},
                       {"precision_estimated", e.precision_estimated}});
  return arr;
}

json hyper_json(const HyperSpec& hyper) {
  if (!hyper.estimated.has_value()) return json{{"estimate", false}};
  const auto& est = *hyper.estimated;
  json prior;
  if (est.prior.kind == HyperPrior::Kind::LogNormal)
    prior = json{{"type", "lognormal"},
                 {"log_median", est.prior.log_median},
                 {"sdlog", est.prior.sd_log}};
  else
    prior = json{{"type", "table"},
                 {"log_tau", est.prior.table_log_tau},
                 {"log_density", est.prior.table_log_density}};
  return json{{"estimate", true},
              {"name", est.name},
              {"prior", prior},
              {"search_log_lo", est.search_log_lo},
              {"search_log_hi", est.search_log_hi},
              {"grid_size", est.grid_size},
              {"grid_spacing_sd", est.grid_spacing_sd}};
}

bool needs_spatial(const std::vector<EffectSpec>& effects) {
  for (const auto& e : effects)
    if (e.kind == EffectKind::CarSpatial) return true;
  return false;
}

ResolvedModel resolve_model(const RunConfig& config, const RunSettings& settings,
                            const PixelTable* pixels, int n_units) {
  ResolvedModel out;
  if (!config.preset.empty()) {
    const ModelPreset preset = preset_from_name(config.preset);
    std::vector<CovariateRole> roles = settings.roles;
    if (roles.empty()) {
      if (pixels == nullptr)
        throw Error("E_CONFIG", "preset needs covariate roles from config or a pixel table");
      roles = infer_roles(*pixels);
    }
    out.effects = preset_effects(preset, roles, n_units);
    out.model_name = preset_name(preset);
    if (settings.hyper_configured)
      out.hyper = settings.hyper;
    else if (preset == ModelPreset::Mod3)
      out.hyper = HyperSpec::default_car();
  } else if (!settings.effects.empty()) {
    out.effects = settings.effects;
    out.model_name = "custom";
    if (settings.hyper_configured) {
      out.hyper = settings.hyper;
    } else {
      for (const auto& e : out.effects)
        if (e.precision_estimated) out.hyper = HyperSpec::default_car();
    }
  } else {
    throw Error("E_CONFIG", "no model specified: pass --preset or list effects in the config");
  }
  return out;
}

std::string config_hash(const RunConfig& config, const RunSettings& settings,
                        const ResolvedModel* model) {
  json j;
  j["subcommand"] = config.subcommand;
  j["cell_area"] = settings.cell_area;
  j["seed"] = config.seed;
  j["estimator"] = config.estimator;
  if (model != nullptr) {
    j["effects"] = effects_json(model->effects);
    j["hyper"] = hyper_json(model->hyper);
    j["model"] = model->model_name;
  }
  if (config.subcommand == "simulate") {
    j["sim"] = json{{"nx", settings.sim.nx},
                    {"ny", settings.sim.ny},
                    {"tile", settings.sim.tile},
                    {"theta", settings.sim_theta},
                    {"fixed_values", settings.sim.fixed_values}};
  }
  return fnv1a_hex(j.dump());
}

void prepare_outputs(const std::string& out_dir, const std::vector<std::string>& names,
                     bool force) {
  fs::create_directories(out_dir);
  if (force) return;
  for (const auto& name : names) {
    const fs::path path = fs::path(out_dir) / name;
    if (fs::exists(path))
      throw Error("E_EXISTS", path.string() + " exists; pass --force to overwrite");
  }
}

void check_outputs(const std::string& out_dir, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    const fs::path path = fs::path(out_dir) / name;
    if (!fs::exists(path)) throw Error("E_OUTPUT", "declared output missing: " + path.string());
  }
}

void write_manifest(const std::string& out_dir, const RunConfig& config, const std::string& hash,
                    double wall_time_s, const std::vector<std::string>& outputs) {
  json j;
  j["subcommand"] = config.subcommand;
  j["config_hash"] = hash;
  j["seed"] = config.seed;
  j["threads"] = config.threads;
  j["estimator"] = config.estimator;
  j["versions"] = json{{"coxmap", kVersion},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                     std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                     std::to_string(EIGEN_MINOR_VERSION)}};
  j["wall_time_s"] = wall_time_s;
  j["outputs"] = outputs;
  std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!out) throw Error("E_IO", "cannot write manifest.json");
  out << j.dump(1) << '\n';
}

AdjacencyGraph load_graph_or_infer(const RunConfig& config, bool required) {
  if (!config.adjacency_path.empty()) return load_adjacency_csv(config.adjacency_path);
  if (required)
    throw Error("E_CONFIG", "this model needs --adjacency (spatial effect or cross-validation)");
  return AdjacencyGraph();
}

int unit_count(const AdjacencyGraph& graph, const PixelTable& pixels) {
  if (graph.n_units() > 0) return graph.n_units();
  int max_unit = -1;
  for (int u : pixels.unit_id) max_unit = std::max(max_unit, u);
  return max_unit + 1;
}

std::pair<double, double> insample_rocs(const PredictionSurface& surface,
                                        const std::vector<int>& pixel_labels,
                                        const std::vector<int>& unit_labels,
                                        RocResult& pixel_roc, RocResult& unit_roc) {
  double pixel_auc = std::numeric_limits<double>::quiet_NaN();
  double unit_auc = std::numeric_limits<double>::quiet_NaN();
  try {
    pixel_roc = roc_auc(surface.pixel_lambda, pixel_labels);
    pixel_auc = pixel_roc.auc;
  } catch (const Error&) {
    log_warn("in-sample pixel labels are single-class; pixel ROC skipped");
  }
  try {
    unit_roc = roc_auc(surface.unit_lambda, unit_labels);
    unit_auc = unit_roc.auc;
  } catch (const Error&) {
    log_warn("in-sample unit labels are single-class; unit ROC skipped");
  }
  return {pixel_auc, unit_auc};
}

std::vector<std::string> effect_output_names(const std::vector<EffectSpec>& effects) {
  std::vector<std::string> names;
  for (const auto& e : effects)
    if (e.kind == EffectKind::Categorical || e.kind == EffectKind::Rw1 ||
        e.kind == EffectKind::Rw1Cyclic)
      names.push_back("random_effect_" + e.name + ".csv");
  return names;
}

void run_fit(const RunConfig& config, const RunSettings& settings) {
  PixelTable pixels = load_pixels(config.pixels_path);
  pixels.cell_area = settings.cell_area;
  log_info("loaded " + std::to_string(pixels.n_pixels()) + " pixels with " +
           std::to_string(pixels.covariate_names.size()) + " covariates");

  AdjacencyGraph graph = load_graph_or_infer(config, false);
  ResolvedModel resolved = resolve_model(config, settings, &pixels, unit_count(graph, pixels));
  if (needs_spatial(resolved.effects) && graph.n_units() == 0)
    throw Error("E_CONFIG", "spatial effect requires --adjacency");

  std::vector<std::string> outputs = {"fit.json",          "hyperparameter.csv",
                                      "fixed_effects.csv", "spatial_effect.csv",
                                      "intensity_pixels.csv", "intensity_units.csv",
                                      "roc.csv",           "auc_summary.csv",
                                      "manifest.json"};
  for (auto& name : effect_output_names(resolved.effects)) outputs.push_back(name);
  prepare_outputs(config.out_dir, outputs, config.force);

  const std::string hash = config_hash(config, settings, &resolved);
  const auto t0 = std::chrono::steady_clock::now();

  ModelStructure model = assemble_model(pixels, graph, resolved.effects, resolved.hyper);
  FitOptions options;
  options.threads = config.threads;
  FitResult fitted = fit(model, resolved.hyper, options);

  SavedFit saved = make_saved_fit(fitted, model, pixels, config.seed, hash);
  save_fit_json((fs::path(config.out_dir) / "fit.json").string(), saved);
  write_hyperparameter_csv((fs::path(config.out_dir) / "hyperparameter.csv").string(),
                           fitted.grid);
  write_effect_csvs(config.out_dir, saved);

  const IntensityEstimator estimator = estimator_from_name(config.estimator);
  const int n_units = unit_count(graph, pixels);
  PredictionSurface surface = make_surface(fitted.pixel_mean, fitted.pixel_var, model.cell_area,
                                           pixels.unit_id, n_units, estimator);
  write_intensity_csvs(config.out_dir, pixels.pixel_id, surface);

  // in-sample ROC at both levels; a degenerate level is skipped with a warning
  std::vector<int> pixel_labels(pixels.n_pixels());
  for (std::size_t i = 0; i < pixels.n_pixels(); ++i)
    pixel_labels[i] = pixels.count[i] > 0 ? 1 : 0;
  std::vector<int> unit_labels(n_units, 0);
  for (std::size_t i = 0; i < pixels.n_pixels(); ++i)
    if (pixels.count[i] > 0) unit_labels[pixels.unit_id[i]] = 1;
  RocResult pixel_roc, unit_roc;
  auto [pixel_auc, unit_auc] =
      insample_rocs(surface, pixel_labels, unit_labels, pixel_roc, unit_roc);
  write_roc_csv((fs::path(config.out_dir) / "roc.csv").string(),
                {{"pixel", "insample", &pixel_roc}, {"unit", "insample", &unit_roc}});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  write_auc_summary_csv((fs::path(config.out_dir) / "auc_summary.csv").string(),
                        {{resolved.model_name, "pixel", pixel_auc, nan, nan},
                         {resolved.model_name, "unit", unit_auc, nan, nan}});

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(config.out_dir, config, hash, wall, outputs);
  check_outputs(config.out_dir, outputs);
}

void run_predict(const RunConfig& config, const RunSettings& settings) {
  const std::vector<std::string> outputs = {"intensity_pixels.csv", "intensity_units.csv",
                                            "manifest.json"};
  prepare_outputs(config.out_dir, outputs, config.force);
  const auto t0 = std::chrono::steady_clock::now();

  SavedFit saved = load_fit_json(config.fit_path);
  const auto n = saved.linpred_mean.size();
  Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(saved.linpred_mean.data(), n);
  Eigen::VectorXd variance = Eigen::Map<const Eigen::VectorXd>(saved.linpred_var.data(), n);
  int n_units = saved.n_units;
  for (int u : saved.unit_id) n_units = std::max(n_units, u + 1);
  const IntensityEstimator estimator = estimator_from_name(config.estimator);
  PredictionSurface surface =
      make_surface(mean, variance, saved.cell_area, saved.unit_id, n_units, estimator);
  write_intensity_csvs(config.out_dir, saved.pixel_id, surface);

  const std::string hash = config_hash(config, settings, nullptr);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(config.out_dir, config, hash, wall, outputs);
  check_outputs(config.out_dir, outputs);
}

void run_cv(const RunConfig& config, const RunSettings& settings) {
  PixelTable pixels = load_pixels(config.pixels_path);
  pixels.cell_area = settings.cell_area;
  AdjacencyGraph graph = load_graph_or_infer(config, true);
  ResolvedModel resolved = resolve_model(config, settings, &pixels, graph.n_units());

  const std::vector<std::string> outputs = {"roc.csv", "auc_summary.csv", "manifest.json"};
  prepare_outputs(config.out_dir, outputs, config.force);
  const std::string hash = config_hash(config, settings, &resolved);
  const auto t0 = std::chrono::steady_clock::now();

  FitOptions options;
  options.threads = config.threads;
  const IntensityEstimator estimator = estimator_from_name(config.estimator);

  // in-sample reference fit
  ModelStructure model = assemble_model(pixels, graph, resolved.effects, resolved.hyper);
  FitResult fitted = fit(model, resolved.hyper, options);
  PredictionSurface surface = make_surface(fitted.pixel_mean, fitted.pixel_var, model.cell_area,
                                           pixels.unit_id, graph.n_units(), estimator);
  std::vector<int> pixel_labels(pixels.n_pixels());
  for (std::size_t i = 0; i < pixels.n_pixels(); ++i)
    pixel_labels[i] = pixels.count[i] > 0 ? 1 : 0;
  std::vector<int> unit_labels(graph.n_units(), 0);
  for (std::size_t i = 0; i < pixels.n_pixels(); ++i)
    if (pixels.count[i] > 0) unit_labels[pixels.unit_id[i]] = 1;
  RocResult insample_pixel, insample_unit;
  auto [insample_pixel_auc, insample_unit_auc] =
      insample_rocs(surface, pixel_labels, unit_labels, insample_pixel, insample_unit);

  CvPlan plan = make_cv_plan(graph.n_units(), config.seed);
  CvResult cv = cross_validate(pixels, graph, resolved.effects, resolved.hyper, plan, options,
                               estimator);

  std::vector<RocRow> rows = {{"pixel", "insample", &insample_pixel},
                              {"unit", "insample", &insample_unit}};
  for (const auto& fold : cv.folds) {
    rows.push_back({"pixel", std::to_string(fold.fold), &fold.pixel_roc});
    rows.push_back({"unit", std::to_string(fold.fold), &fold.unit_roc});
  }
  rows.push_back({"pixel", "pooled", &cv.pooled_pixel});
  rows.push_back({"unit", "pooled", &cv.pooled_unit});
  write_roc_csv((fs::path(config.out_dir) / "roc.csv").string(), rows);
  write_auc_summary_csv(
      (fs::path(config.out_dir) / "auc_summary.csv").string(),
      {{resolved.model_name, "pixel", insample_pixel_auc, cv.pooled_pixel.auc,
        cv.fold_mean_pixel_auc},
       {resolved.model_name, "unit", insample_unit_auc, cv.pooled_unit.auc,
        cv.fold_mean_unit_auc}});

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(config.out_dir, config, hash, wall, outputs);
  check_outputs(config.out_dir, outputs);
}

void run_simulate(const RunConfig& config, const RunSettings& settings) {
  SimGridSpec spec = settings.sim;
  spec.cell_area = settings.cell_area;
  AdjacencyGraph graph = AdjacencyGraph::tile_grid(spec.tiles_x(), spec.tiles_y());

  std::vector<CovariateRole> roles = settings.roles;
  if (roles.empty())
    roles = {{"z1", CovariateRole::Kind::Continuous, 0, true},
             {"z2", CovariateRole::Kind::Continuous, 0, false},
             {"z3", CovariateRole::Kind::Continuous, 0, false}};
  RunSettings sim_settings = settings;
  sim_settings.roles = roles;
  RunConfig sim_config = config;
  if (sim_config.preset.empty() && settings.effects.empty()) sim_config.preset = "mod3";
  ResolvedModel resolved = resolve_model(sim_config, sim_settings, nullptr, graph.n_units());

  const std::vector<std::string> outputs = {"pixels.csv", "adjacency.csv", "truth.json",
                                            "manifest.json"};
  prepare_outputs(config.out_dir, outputs, config.force);
  const std::string hash = config_hash(sim_config, settings, &resolved);
  const auto t0 = std::chrono::steady_clock::now();

  auto [pixels, truth] = simulate_dataset(spec, graph, resolved.effects, settings.sim_theta,
                                          config.seed);
  save_pixels((fs::path(config.out_dir) / "pixels.csv").string(), pixels);
  save_adjacency_csv((fs::path(config.out_dir) / "adjacency.csv").string(), graph);
  write_truth_json((fs::path(config.out_dir) / "truth.json").string(), truth);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(config.out_dir, config, hash, wall, outputs);
  check_outputs(config.out_dir, outputs);
}

}  // namespace

void run(const RunConfig& config_in) {
  RunConfig config = config_in;
  if (config.out_dir.empty()) throw Error("E_CONFIG", "--out is required");
  if (config.threads <= 0) config.threads = default_thread_count();

  RunSettings settings =
      config.config_path.empty() ? default_settings() : load_config(config.config_path);
  if (config.has_seed)
    settings.seed = config.seed;
  else
    config.seed = settings.seed;

  if (config.subcommand == "fit") {
    if (config.pixels_path.empty()) throw Error("E_CONFIG", "fit requires --pixels");
    run_fit(config, settings);
  } else if (config.subcommand == "predict") {
    if (config.fit_path.empty()) throw Error("E_CONFIG", "predict requires --fit");
    run_predict(config, settings);
  } else if (config.subcommand == "cv") {
    if (config.pixels_path.empty()) throw Error("E_CONFIG", "cv requires --pixels");
    run_cv(config, settings);
  } else if (config.subcommand == "simulate") {
    run_simulate(config, settings);
  } else {
    throw Error("E_CONFIG", "unknown subcommand: " + config.subcommand);
  }
}

}  // namespace coxmap
