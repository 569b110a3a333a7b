#include "coxmap/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "coxmap/rng.hpp"

namespace coxmap {

using nlohmann::json;

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Pixel CSV.
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error("E_PIXELS_PARSE", "non-numeric value in column " + column + " at row " +
                                      std::to_string(row));
  return v;
}

long long parse_ll(const std::string& s, std::size_t row, const std::string& column) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error("E_PIXELS_PARSE", "non-integer value in column " + column + " at row " +
                                      std::to_string(row));
  return v;
}

}  // namespace

PixelTable load_pixels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("E_IO", "cannot open pixel file " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("E_PIXELS_PARSE", "empty pixel file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  const std::vector<std::string> required = {"pixel_id", "x", "y", "count", "unit_id"};
  if (header.size() < required.size())
    throw Error("E_PIXELS_PARSE", path + ": missing required columns");
  for (std::size_t c = 0; c < required.size(); ++c)
    if (header[c] != required[c])
      throw Error("E_PIXELS_PARSE",
                  path + ": expected column " + required[c] + ", found " + header[c]);

  PixelTable out;
  out.covariate_names.assign(header.begin() + required.size(), header.end());
  out.covariates.resize(out.covariate_names.size());

  std::unordered_set<long long> seen_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error("E_PIXELS_PARSE",
                  path + ": wrong field count at row " + std::to_string(row));
    const long long id = parse_ll(fields[0], row, "pixel_id");
    if (!seen_ids.insert(id).second)
      throw Error("E_PIXELS_PARSE", "duplicate pixel_id " + std::to_string(id) + " at row " +
                                        std::to_string(row));
    out.pixel_id.push_back(id);
    out.x.push_back(parse_double(fields[1], row, "x"));
    out.y.push_back(parse_double(fields[2], row, "y"));
    const long long count = parse_ll(fields[3], row, "count");
    if (count < 0)
      throw Error("E_PIXELS_PARSE", "negative count at row " + std::to_string(row));
    out.count.push_back(static_cast<int>(count));
    const long long unit = parse_ll(fields[4], row, "unit_id");
    if (unit < 0)
      throw Error("E_PIXELS_PARSE", "negative unit_id at row " + std::to_string(row));
    out.unit_id.push_back(static_cast<int>(unit));
    for (std::size_t c = 0; c < out.covariate_names.size(); ++c)
      out.covariates[c].push_back(
          parse_double(fields[required.size() + c], row, out.covariate_names[c]));
  }
  return out;
}

void save_pixels(const std::string& path, const PixelTable& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("E_IO", "cannot write pixel file " + path);
  out << "pixel_id,x,y,count,unit_id";
  for (const auto& name : pixels.covariate_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < pixels.n_pixels(); ++i) {
    out << pixels.pixel_id[i] << ',' << format_number(pixels.x[i]) << ','
        << format_number(pixels.y[i]) << ',' << pixels.count[i] << ',' << pixels.unit_id[i];
    for (const auto& column : pixels.covariates) out << ',' << format_number(column[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration JSON.
// ---------------------------------------------------------------------------

namespace {

EffectSpec effect_from_json(const json& j) {
  EffectSpec e;
  e.name = j.at("name").get<std::string>();
  e.kind = effect_kind_from_name(j.at("kind").get<std::string>());
  e.n_levels = j.value("n_levels", 0);
  e.prior_mean = j.value("prior_mean", 0.0);
  e.prior_precision = j.value("prior_precision", 0.0);
  e.sum_to_zero = j.value("sum_to_zero", false);
  e.precision_estimated = j.value("precision_estimated", false);
  return e;
}

HyperSpec hyper_from_json(const json& j) {
  HyperSpec h;
  if (!j.value("estimate", true)) return h;
  EstimatedHyper est;
  est.name = j.value("name", std::string("tau"));
  if (j.contains("prior")) {
    const json& p = j.at("prior");
    const std::string type = p.value("type", std::string("lognormal"));
    if (type == "lognormal") {
      est.prior.kind = HyperPrior::Kind::LogNormal;
      est.prior.log_median = std::log(p.value("median", 10.0));
      est.prior.sd_log = p.value("sdlog", 1.5);
    } else if (type == "table") {
      est.prior.kind = HyperPrior::Kind::Table;
      est.prior.table_log_tau = p.at("log_tau").get<std::vector<double>>();
      est.prior.table_log_density = p.at("log_density").get<std::vector<double>>();
    } else {
      throw Error("E_CONFIG", "unknown hyperprior type: " + type);
    }
  }
  est.search_log_lo = j.value("search_log_lo", -6.0);
  est.search_log_hi = j.value("search_log_hi", 10.0);
  est.grid_size = j.value("grid_size", 15);
  est.grid_spacing_sd = j.value("grid_spacing_sd", 0.25);
  h.estimated = est;
  return h;
}

}  // namespace

RunSettings default_settings() { return RunSettings{}; }

RunSettings load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("E_IO", "cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("E_CONFIG", path + ": " + e.what());
  }
  RunSettings s;
  s.cell_area = j.value("cell_area", 225.0);
  if (j.contains("seed")) {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.has_seed = true;
  }
  if (j.contains("covariates")) {
    for (const auto& c : j.at("covariates")) {
      CovariateRole role;
      role.name = c.at("name").get<std::string>();
      const std::string kind = c.value("kind", std::string("continuous"));
      if (kind == "continuous")
        role.kind = CovariateRole::Kind::Continuous;
      else if (kind == "categorical")
        role.kind = CovariateRole::Kind::Categorical;
      else if (kind == "cyclic")
        role.kind = CovariateRole::Kind::Cyclic;
      else
        throw Error("E_CONFIG", "unknown covariate kind: " + kind);
      role.n_levels = c.value("n_levels", role.kind == CovariateRole::Kind::Cyclic ? 16 : 0);
      role.nonlinear = c.value("nonlinear", false);
      s.roles.push_back(role);
    }
  }
  if (j.contains("effects"))
    for (const auto& e : j.at("effects")) s.effects.push_back(effect_from_json(e));
  if (j.contains("hyper")) {
    s.hyper = hyper_from_json(j.at("hyper"));
    s.hyper_configured = true;
  }
  if (j.contains("simulate")) {
    const json& sim = j.at("simulate");
    s.sim.nx = sim.value("nx", 60);
    s.sim.ny = sim.value("ny", 60);
    s.sim.tile = sim.value("tile", 10);
    s.sim.cell_area = s.cell_area;
    s.sim_theta = sim.value("theta", 2.7);
    if (sim.contains("fixed_values"))
      for (const auto& [name, value] : sim.at("fixed_values").items())
        s.sim.fixed_values[name] = value.get<double>();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Saved fit.
// ---------------------------------------------------------------------------

SavedFit make_saved_fit(const FitResult& fit, const ModelStructure& model,
                        const PixelTable& pixels, std::uint64_t seed,
                        const std::string& config_hash) {
  SavedFit out;
  out.version = "0.1.0";
  out.config_hash = config_hash;
  out.seed = seed;
  out.cell_area = model.cell_area;
  out.latent_dim = model.latent_dim;
  out.n_units = model.graph.n_units();
  for (const auto& blk : model.blocks) {
    SavedFit::BlockInfo info;
    info.name = blk.spec.name;
    info.kind = blk.spec.kind;
    info.offset = blk.offset;
    info.length = blk.length;
    info.standardize_mean = blk.standardize_mean;
    info.standardize_sd = blk.standardize_sd;
    info.bin_edges = blk.bin_edges;
    out.blocks.push_back(std::move(info));
    if (blk.spec.kind == EffectKind::CarSpatial) out.n_units = blk.length;
  }
  out.grid = fit.grid;
  out.component_mean.assign(fit.component_mean.data(),
                            fit.component_mean.data() + fit.component_mean.size());
  out.component_sd.assign(fit.component_sd.data(),
                          fit.component_sd.data() + fit.component_sd.size());
  out.pixel_id = pixels.pixel_id;
  out.unit_id = pixels.unit_id;
  out.count = pixels.count;
  out.linpred_mean.assign(fit.pixel_mean.data(), fit.pixel_mean.data() + fit.pixel_mean.size());
  out.linpred_var.assign(fit.pixel_var.data(), fit.pixel_var.data() + fit.pixel_var.size());
  return out;
}

void save_fit_json(const std::string& path, const SavedFit& fit) {
  json j;
  j["version"] = fit.version;
  j["config_hash"] = fit.config_hash;
  j["seed"] = fit.seed;
  j["cell_area"] = fit.cell_area;
  j["latent_dim"] = fit.latent_dim;
  j["n_units"] = fit.n_units;
  json blocks = json::array();
  for (const auto& b : fit.blocks)
    blocks.push_back(json{{"name", b.name},
                          {"kind", effect_kind_name(b.kind)},
                          {"offset", b.offset},
                          {"length", b.length},
                          {"standardize_mean", b.standardize_mean},
                          {"standardize_sd", b.standardize_sd},
                          {"bin_edges", b.bin_edges}});
  j["blocks"] = std::move(blocks);
  json grid = json::array();
  for (const auto& g : fit.grid)
    grid.push_back(json{{"theta", g.theta},
                        {"log_posterior", g.log_posterior},
                        {"weight", g.weight}});
  j["grid"] = std::move(grid);
  j["components"] = json{{"mean", fit.component_mean}, {"sd", fit.component_sd}};
  j["pixels"] = json{{"id", fit.pixel_id},
                     {"unit_id", fit.unit_id},
                     {"count", fit.count},
                     {"linpred_mean", fit.linpred_mean},
                     {"linpred_var", fit.linpred_var}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("E_IO", "cannot write fit file " + path);
  out << j.dump(1) << '\n';
}

SavedFit load_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("E_IO", "cannot open fit file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("E_CONFIG", path + ": " + e.what());
  }
  SavedFit fit;
  fit.version = j.value("version", std::string());
  fit.config_hash = j.value("config_hash", std::string());
  fit.seed = j.value("seed", std::uint64_t{0});
  fit.cell_area = j.at("cell_area").get<double>();
  fit.latent_dim = j.at("latent_dim").get<int>();
  fit.n_units = j.at("n_units").get<int>();
  for (const auto& b : j.at("blocks")) {
    SavedFit::BlockInfo info;
    info.name = b.at("name").get<std::string>();
    info.kind = effect_kind_from_name(b.at("kind").get<std::string>());
    info.offset = b.at("offset").get<int>();
    info.length = b.at("length").get<int>();
    info.standardize_mean = b.value("standardize_mean", 0.0);
    info.standardize_sd = b.value("standardize_sd", 1.0);
    info.bin_edges = b.value("bin_edges", std::vector<double>{});
    fit.blocks.push_back(std::move(info));
  }
  for (const auto& g : j.at("grid"))
    fit.grid.push_back({g.at("theta").get<double>(), g.at("log_posterior").get<double>(),
                        g.at("weight").get<double>()});
  fit.component_mean = j.at("components").at("mean").get<std::vector<double>>();
  fit.component_sd = j.at("components").at("sd").get<std::vector<double>>();
  fit.pixel_id = j.at("pixels").at("id").get<std::vector<long long>>();
  fit.unit_id = j.at("pixels").at("unit_id").get<std::vector<int>>();
  fit.count = j.at("pixels").at("count").get<std::vector<int>>();
  fit.linpred_mean = j.at("pixels").at("linpred_mean").get<std::vector<double>>();
  fit.linpred_var = j.at("pixels").at("linpred_var").get<std::vector<double>>();
  return fit;
}

// ---------------------------------------------------------------------------
// Tabular outputs.
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("E_IO", "cannot write " + path);
  return out;
}

constexpr double kZ975 = 1.959963984540054;

}  // namespace

void write_hyperparameter_csv(const std::string& path, const std::vector<GridPoint>& grid) {
  auto out = open_output(path);
  out << "theta,log_posterior,weight\n";
  for (const auto& g : grid)
    out << format_number(g.theta) << ',' << format_number(g.log_posterior) << ','
        << format_number(g.weight) << '\n';
}

void write_effect_csvs(const std::string& out_dir, const SavedFit& fit) {
  auto fixed = open_output(out_dir + "/fixed_effects.csv");
  fixed << "name,mean,sd,q025,q975\n";
  auto spatial = open_output(out_dir + "/spatial_effect.csv");
  spatial << "unit_id,mean,sd,q025,q975\n";
  for (const auto& blk : fit.blocks) {
    if (blk.kind == EffectKind::Intercept || blk.kind == EffectKind::Linear) {
      const double m = fit.component_mean[blk.offset];
      const double s = fit.component_sd[blk.offset];
      fixed << blk.name << ',' << format_number(m) << ',' << format_number(s) << ','
            << format_number(m - kZ975 * s) << ',' << format_number(m + kZ975 * s) << '\n';
    } else if (blk.kind == EffectKind::CarSpatial) {
      for (int l = 0; l < blk.length; ++l) {
        const double m = fit.component_mean[blk.offset + l];
        const double s = fit.component_sd[blk.offset + l];
        spatial << l << ',' << format_number(m) << ',' << format_number(s) << ','
                << format_number(m - kZ975 * s) << ',' << format_number(m + kZ975 * s) << '\n';
      }
    } else {
      auto rand = open_output(out_dir + "/random_effect_" + blk.name + ".csv");
      rand << "level,mean,sd,q025,q975\n";
      for (int l = 0; l < blk.length; ++l) {
        const double m = fit.component_mean[blk.offset + l];
        const double s = fit.component_sd[blk.offset + l];
        rand << l << ',' << format_number(m) << ',' << format_number(s) << ','
             << format_number(m - kZ975 * s) << ',' << format_number(m + kZ975 * s) << '\n';
      }
    }
  }
}

void write_intensity_csvs(const std::string& out_dir, const std::vector<long long>& pixel_id,
                          const PredictionSurface& surface) {
  auto px = open_output(out_dir + "/intensity_pixels.csv");
  px << "pixel_id,lambda,p,k0,k1,k2,k3\n";
  for (std::size_t i = 0; i < surface.pixel_lambda.size(); ++i) {
    px << pixel_id[i] << ',' << format_number(surface.pixel_lambda[i]) << ','
       << format_number(surface.pixel_p[i]);
    for (int k = 0; k <= 3; ++k)
      px << ',' << format_number(count_probability(surface.pixel_lambda[i], k));
    px << '\n';
  }
  auto units = open_output(out_dir + "/intensity_units.csv");
  units << "unit_id,lambda,p\n";
  for (std::size_t u = 0; u < surface.unit_lambda.size(); ++u)
    units << u << ',' << format_number(surface.unit_lambda[u]) << ','
          << format_number(surface.unit_p[u]) << '\n';
}

void write_roc_csv(const std::string& path, const std::vector<RocRow>& rows) {
  auto out = open_output(path);
  out << "level,fold,fpr,tpr\n";
  for (const auto& row : rows) {
    if (row.roc == nullptr || row.roc->fpr.empty()) continue;
    for (std::size_t i = 0; i < row.roc->fpr.size(); ++i)
      out << row.level << ',' << row.fold << ',' << format_number(row.roc->fpr[i]) << ','
          << format_number(row.roc->tpr[i]) << '\n';
  }
}

void write_auc_summary_csv(const std::string& path, const std::vector<AucSummaryRow>& rows) {
  auto out = open_output(path);
  out << "model,level,in_sample_auc,cv_auc,cv_auc_fold_mean\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.level << ',';
    out << (std::isfinite(r.in_sample_auc) ? format_number(r.in_sample_auc) : "") << ',';
    out << (std::isfinite(r.cv_auc) ? format_number(r.cv_auc) : "") << ',';
    out << (std::isfinite(r.cv_auc_fold_mean) ? format_number(r.cv_auc_fold_mean) : "") << '\n';
  }
}

void write_truth_json(const std::string& path, const SimTruth& truth) {
  json j;
  j["seed"] = truth.seed;
  j["theta"] = truth.theta;
  json blocks;
  for (const auto& [name, values] : truth.blocks) blocks[name] = values;
  j["blocks"] = std::move(blocks);
  j["intensity"] = truth.intensity;
  j["counts"] = truth.counts;
  auto out = open_output(path);
  out << j.dump(1) << '\n';
}

}  // namespace coxmap
