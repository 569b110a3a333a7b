#include "coxmap/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "coxmap/gmrf.hpp"
#include "coxmap/log.hpp"

namespace coxmap {

int PixelTable::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < covariate_names.size(); ++j)
    if (covariate_names[j] == name) return static_cast<int>(j);
  return -1;
}

PixelTable PixelTable::subset(const std::vector<std::size_t>& rows) const {
  PixelTable out;
  out.covariate_names = covariate_names;
  out.cell_area = cell_area;
  out.pixel_id.reserve(rows.size());
  out.covariates.resize(covariates.size());
  for (auto& col : out.covariates) col.reserve(rows.size());
  for (std::size_t i : rows) {
    out.pixel_id.push_back(pixel_id[i]);
    out.x.push_back(x[i]);
    out.y.push_back(y[i]);
    out.count.push_back(count[i]);
    out.unit_id.push_back(unit_id[i]);
    for (std::size_t j = 0; j < covariates.size(); ++j)
      out.covariates[j].push_back(covariates[j][i]);
  }
  return out;
}

void PixelTable::validate() const {
  const std::size_t n = pixel_id.size();
  if (x.size() != n || y.size() != n || count.size() != n || unit_id.size() != n)
    throw Error("E_PIXELS", "pixel table columns have inconsistent lengths");
  if (covariates.size() != covariate_names.size())
    throw Error("E_PIXELS", "covariate name/column mismatch");
  for (const auto& col : covariates)
    if (col.size() != n) throw Error("E_PIXELS", "covariate column length mismatch");
  if (!(cell_area > 0.0)) throw Error("E_PIXELS", "cell_area must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] < 0) throw Error("E_PIXELS", "negative count at row " + std::to_string(i + 1));
    if (unit_id[i] < 0) throw Error("E_PIXELS", "negative unit_id at row " + std::to_string(i + 1));
  }
}

const char* effect_kind_name(EffectKind kind) {
  switch (kind) {
    case EffectKind::Intercept: return "intercept";
    case EffectKind::Linear: return "linear";
    case EffectKind::Categorical: return "categorical";
    case EffectKind::Rw1: return "rw1";
    case EffectKind::Rw1Cyclic: return "rw1_cyclic";
    case EffectKind::CarSpatial: return "car_spatial";
  }
  return "?";
}

EffectKind effect_kind_from_name(const std::string& name) {
  if (name == "intercept") return EffectKind::Intercept;
  if (name == "linear") return EffectKind::Linear;
  if (name == "categorical") return EffectKind::Categorical;
  if (name == "rw1") return EffectKind::Rw1;
  if (name == "rw1_cyclic") return EffectKind::Rw1Cyclic;
  if (name == "car_spatial") return EffectKind::CarSpatial;
  throw Error("E_CONFIG", "unknown effect kind: " + name);
}

double HyperPrior::log_density(double tau) const {
  if (!(tau > 0.0)) return -std::numeric_limits<double>::infinity();
  const double lt = std::log(tau);
  if (kind == Kind::LogNormal) {
    const double z = (lt - log_median) / sd_log;
    return -0.5 * z * z - std::log(sd_log) - 0.918938533204672742 /* log sqrt(2 pi) */ - lt;
  }
  // tabulated curve over log(tau), linear interpolation, edge slopes extended
  const auto& xs = table_log_tau;
  const auto& ys = table_log_density;
  if (xs.size() < 2 || xs.size() != ys.size())
    throw Error("E_CONFIG", "tabulated hyperprior needs >= 2 (log_tau, log_density) pairs");
  std::size_t hi = 1;
  while (hi + 1 < xs.size() && xs[hi] < lt) ++hi;
  const double t = (lt - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
  return ys[hi - 1] + t * (ys[hi] - ys[hi - 1]);
}

HyperSpec HyperSpec::default_car() {
  HyperSpec h;
  h.estimated = EstimatedHyper{};
  return h;
}

Standardized standardize(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw Error("E_MODEL", "standardize requires at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw Error("E_MODEL", "zero variance covariate");
  Standardized out;
  out.mean = mean;
  out.sd = sd;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = (values[i] - mean) / sd;
  return out;
}

Binned bin_covariate(const std::vector<double>& values, int n_bins) {
  if (n_bins < 2) throw Error("E_MODEL", "binning requires n_bins >= 2");
  if (values.empty()) throw Error("E_MODEL", "binning requires values");
  auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it, mx = *mx_it;
  if (!(mx > mn)) throw Error("E_MODEL", "degenerate covariate range for binning");
  Binned out;
  out.edges.resize(n_bins + 1);
  for (int b = 0; b <= n_bins; ++b)
    out.edges[b] = mn + (mx - mn) * static_cast<double>(b) / static_cast<double>(n_bins);
  out.edges[n_bins] = mx;
  out.bins.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out.bins[i] = bin_of_value(values[i], out.edges);
  return out;
}

int bin_of_value(double v, const std::vector<double>& edges) {
  const int n_bins = static_cast<int>(edges.size()) - 1;
  const double mn = edges.front(), mx = edges.back();
  int b = static_cast<int>(std::floor(static_cast<double>(n_bins) * (v - mn) / (mx - mn)));
  return std::clamp(b, 0, n_bins - 1);
}

SparseSymmetric ModelStructure::prior_precision(double theta) const {
  if (!has_estimated_block()) return prior_fixed;
  return SparseSymmetric::add(prior_fixed, 1.0, prior_scaled, theta);
}

const EffectBlock* ModelStructure::block_by_name(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.spec.name == name) return &b;
  return nullptr;
}

Eigen::VectorXd ModelStructure::linear_predictor(const Eigen::VectorXd& eta) const {
  Eigen::VectorXd xlin(n_pixels);
  const int k = entries_per_pixel;
  for (std::size_t i = 0; i < n_pixels; ++i) {
    double acc = 0.0;
    const std::size_t base = i * k;
    for (int t = 0; t < k; ++t) acc += inc_weight[base + t] * eta[inc_index[base + t]];
    xlin[static_cast<Eigen::Index>(i)] = acc;
  }
  return xlin;
}

std::vector<int> ModelStructure::bind_table(const PixelTable& table) const {
  std::vector<int> columns(blocks.size(), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& spec = blocks[b].spec;
    if (spec.kind == EffectKind::Intercept || spec.kind == EffectKind::CarSpatial) continue;
    columns[b] = table.covariate_index(spec.name);
    if (columns[b] < 0)
      throw Error("E_MODEL", "covariate not found in pixel table: " + spec.name);
  }
  return columns;
}

std::vector<std::pair<int, double>> ModelStructure::incidence_row(
    const std::vector<double>& covariate_values, int unit) const {
  if (covariate_values.size() != blocks.size())
    throw Error("E_MODEL", "incidence_row expects one covariate value per block");
  std::vector<std::pair<int, double>> row;
  row.reserve(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const double v = covariate_values[b];
    switch (blk.spec.kind) {
      case EffectKind::Intercept:
        row.emplace_back(blk.offset, 1.0);
        break;
      case EffectKind::Linear:
        row.emplace_back(blk.offset, (v - blk.standardize_mean) / blk.standardize_sd);
        break;
      case EffectKind::Categorical: {
        const long level = std::lround(v);
        if (level < 0 || level >= blk.length)
          throw Error("E_MODEL", "categorical level out of range for " + blk.spec.name);
        row.emplace_back(blk.offset + static_cast<int>(level), 1.0);
        break;
      }
      case EffectKind::Rw1:
      case EffectKind::Rw1Cyclic: {
        const double z = (v - blk.standardize_mean) / blk.standardize_sd;
        row.emplace_back(blk.offset + bin_of_value(z, blk.bin_edges), 1.0);
        break;
      }
      case EffectKind::CarSpatial: {
        if (unit < 0 || unit >= blk.length)
          throw Error("E_MODEL", "pixel references unknown unit " + std::to_string(unit));
        row.emplace_back(blk.offset + unit, 1.0);
        break;
      }
    }
  }
  return row;
}

namespace {

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

ModelStructure assemble_model(const PixelTable& pixels, const AdjacencyGraph& graph,
                              const std::vector<EffectSpec>& effects, const HyperSpec& hyper) {
  pixels.validate();
  const std::size_t n = pixels.n_pixels();

  int n_intercepts = 0;
  for (const auto& e : effects)
    if (e.kind == EffectKind::Intercept) ++n_intercepts;
  if (n_intercepts != 1) throw Error("E_MODEL", "exactly one intercept effect is required");

  ModelStructure m;
  m.cell_area = pixels.cell_area;
  m.n_pixels = n;
  m.counts = pixels.count;

  std::vector<SparseEntry> fixed_entries, scaled_entries;
  int offset = 0;

  for (const auto& spec : effects) {
    EffectBlock blk;
    blk.spec = spec;
    blk.offset = offset;

    SparseSymmetric block_precision;
    switch (spec.kind) {
      case EffectKind::Intercept: {
        blk.length = 1;
        blk.prior_rank = 1;
        if (!(spec.prior_precision > 0.0))
          throw Error("E_MODEL", "intercept requires a positive prior precision");
        block_precision =
            SparseSymmetric::from_triplets(1, {{0, 0, spec.prior_precision}});
        break;
      }
      case EffectKind::Linear: {
        if (pixels.covariate_index(spec.name) < 0)
          throw Error("E_MODEL", "unknown covariate in effect list: " + spec.name);
        auto st = standardize(pixels.covariates[pixels.covariate_index(spec.name)]);
        blk.standardize_mean = st.mean;
        blk.standardize_sd = st.sd;
        blk.length = 1;
        blk.prior_rank = 1;
        if (!(spec.prior_precision > 0.0))
          throw Error("E_MODEL", "linear effect requires a positive prior precision");
        block_precision =
            SparseSymmetric::from_triplets(1, {{0, 0, spec.prior_precision}});
        break;
      }
      case EffectKind::Categorical: {
        const int col = pixels.covariate_index(spec.name);
        if (col < 0) throw Error("E_MODEL", "unknown covariate in effect list: " + spec.name);
        if (spec.n_levels < 2)
          throw Error("E_MODEL", "categorical effect needs n_levels >= 2: " + spec.name);
        blk.length = spec.n_levels;
        blk.prior_rank = spec.n_levels;
        std::vector<SparseEntry> diag;
        for (int l = 0; l < spec.n_levels; ++l) diag.push_back({l, l, spec.prior_precision});
        block_precision = SparseSymmetric::from_triplets(spec.n_levels, std::move(diag));
        break;
      }
      case EffectKind::Rw1:
      case EffectKind::Rw1Cyclic: {
        const int col = pixels.covariate_index(spec.name);
        if (col < 0) throw Error("E_MODEL", "unknown covariate in effect list: " + spec.name);
        const bool cyclic = spec.kind == EffectKind::Rw1Cyclic;
        if (!cyclic && to_lower(spec.name).find("asp") != std::string::npos)
          log_warn("aspect-like covariate " + spec.name +
                   " declared as a non-cyclic random walk; honoring the declaration");
        auto st = standardize(pixels.covariates[col]);
        blk.standardize_mean = st.mean;
        blk.standardize_sd = st.sd;
        auto binned = bin_covariate(st.values, spec.n_levels);
        blk.bin_edges = binned.edges;
        blk.length = spec.n_levels;
        blk.prior_rank = spec.n_levels - 1;
        const double tau = spec.precision_estimated ? 1.0 : spec.prior_precision;
        // the jitter keeps Q* numerically positive definite along the flat
        // inter-block directions that the constraints pin; constrained
        // results are invariant to it
        block_precision =
            build_rw1_precision(spec.n_levels, tau, cyclic).with_jitter(kIntrinsicJitter * tau);
        break;
      }
      case EffectKind::CarSpatial: {
        if (graph.n_units() <= 0)
          throw Error("E_MODEL", "spatial effect requires an adjacency graph");
        for (std::size_t i = 0; i < n; ++i)
          if (pixels.unit_id[i] >= graph.n_units())
            throw Error("E_MODEL",
                        "pixel references unknown unit " + std::to_string(pixels.unit_id[i]));
        blk.length = graph.n_units();
        blk.prior_rank = graph.n_units() - graph.n_components();
        const double tau = spec.precision_estimated ? 1.0 : spec.prior_precision;
        block_precision =
            build_car_precision(graph, tau).with_jitter(kIntrinsicJitter * tau);
        m.graph = graph;
        break;
      }
    }

    auto& sink = spec.precision_estimated ? scaled_entries : fixed_entries;
    for (const auto& e : block_precision.entries())
      sink.push_back({e.row + offset, e.col + offset, e.value});
    if (spec.precision_estimated) {
      if (m.scaled_block >= 0)
        throw Error("E_MODEL", "at most one block may have an estimated precision");
      m.scaled_block = static_cast<int>(m.blocks.size());
      m.scaled_prior_rank = blk.prior_rank;
    }

    offset += blk.length;
    m.blocks.push_back(std::move(blk));
  }
  m.latent_dim = offset;

  // prior mean
  m.prior_mean = Eigen::VectorXd::Zero(m.latent_dim);
  for (const auto& blk : m.blocks)
    for (int i = 0; i < blk.length; ++i) m.prior_mean[blk.offset + i] = blk.spec.prior_mean;

  // constraints (built here so latent_dim is known)
  std::vector<Eigen::VectorXd> rows;
  for (const auto& blk : m.blocks) {
    if (!blk.spec.sum_to_zero || blk.length <= 1) continue;
    if (blk.spec.kind == EffectKind::CarSpatial && graph.n_components() > 1) {
      log_warn("disconnected adjacency graph: one sum-to-zero constraint per component (" +
               std::to_string(graph.n_components()) + " components)");
      auto labels = graph.component_labels();
      for (int comp = 0; comp < graph.n_components(); ++comp) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(m.latent_dim);
        for (int u = 0; u < graph.n_units(); ++u)
          if (labels[u] == comp) r[blk.offset + u] = 1.0;
        rows.push_back(std::move(r));
      }
    } else {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(m.latent_dim);
      for (int i = 0; i < blk.length; ++i) r[blk.offset + i] = 1.0;
      rows.push_back(std::move(r));
    }
  }
  if (!rows.empty()) {
    m.constraints.rows.resize(static_cast<Eigen::Index>(rows.size()), m.latent_dim);
    for (std::size_t r = 0; r < rows.size(); ++r) m.constraints.rows.row(r) = rows[r];
    m.constraints.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  }

  m.prior_fixed = SparseSymmetric::from_triplets(m.latent_dim, std::move(fixed_entries));
  if (m.scaled_block >= 0)
    m.prior_scaled = SparseSymmetric::from_triplets(m.latent_dim, std::move(scaled_entries));

  if (m.has_estimated_block() && hyper.estimated.has_value() == false)
    log_info("model has a theta-scaled block but no estimated hyperparameter; "
             "the block precision defaults to its fixed value at fit time");

  // incidence map
  m.entries_per_pixel = static_cast<int>(m.blocks.size());
  m.inc_index.resize(n * m.entries_per_pixel);
  m.inc_weight.resize(n * m.entries_per_pixel);
  auto columns = m.bind_table(pixels);
  std::vector<double> values(m.blocks.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < m.blocks.size(); ++b)
      values[b] = columns[b] >= 0 ? pixels.covariates[columns[b]][i] : 0.0;
    auto row = m.incidence_row(values, pixels.unit_id[i]);
    for (std::size_t t = 0; t < row.size(); ++t) {
      m.inc_index[i * m.entries_per_pixel + t] = row[t].first;
      m.inc_weight[i * m.entries_per_pixel + t] = row[t].second;
    }
  }
  return m;
}

ModelPreset preset_from_name(const std::string& name) {
  const std::string s = to_lower(name);
  if (s == "mod1") return ModelPreset::Mod1;
  if (s == "mod2") return ModelPreset::Mod2;
  if (s == "mod2b") return ModelPreset::Mod2b;
  if (s == "mod3") return ModelPreset::Mod3;
  throw Error("E_CONFIG", "unknown model preset: " + name);
}

const char* preset_name(ModelPreset preset) {
  switch (preset) {
    case ModelPreset::Mod1: return "mod1";
    case ModelPreset::Mod2: return "mod2";
    case ModelPreset::Mod2b: return "mod2b";
    case ModelPreset::Mod3: return "mod3";
  }
  return "?";
}

std::vector<EffectSpec> preset_effects(ModelPreset preset, const std::vector<CovariateRole>& roles,
                                       int n_units) {
  std::vector<EffectSpec> effects;
  effects.push_back({"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false});
  for (const auto& role : roles) {
    switch (role.kind) {
      case CovariateRole::Kind::Continuous: {
        effects.push_back({role.name, EffectKind::Linear, 0, 0.0, 2.0, false, false});
        const bool nonlinear = preset == ModelPreset::Mod2 ||
                               ((preset == ModelPreset::Mod2b || preset == ModelPreset::Mod3) &&
                                role.nonlinear);
        if (nonlinear)
          effects.push_back({role.name, EffectKind::Rw1, 20, 0.0, 25.0, true, false});
        break;
      }
      case CovariateRole::Kind::Cyclic: {
        const int levels = role.n_levels > 0 ? role.n_levels : 16;
        effects.push_back({role.name, EffectKind::Rw1Cyclic, levels, 0.0, 25.0, true, false});
        break;
      }
      case CovariateRole::Kind::Categorical: {
        effects.push_back(
            {role.name, EffectKind::Categorical, role.n_levels, 0.0, 100.0, true, false});
        break;
      }
    }
  }
  if (preset == ModelPreset::Mod3) {
    if (n_units <= 0) throw Error("E_CONFIG", "mod3 requires an adjacency graph");
    effects.push_back({"su_spatial", EffectKind::CarSpatial, n_units, 0.0, 1.0, true, true});
  }
  return effects;
}

std::vector<CovariateRole> infer_roles(const PixelTable& pixels) {
  std::vector<CovariateRole> roles;
  for (const auto& name : pixels.covariate_names) {
    CovariateRole role;
    role.name = name;
    const std::string low = to_lower(name);
    if (low == "asp" || low.find("aspect") != std::string::npos) {
      role.kind = CovariateRole::Kind::Cyclic;
      role.n_levels = 16;
      role.nonlinear = true;
    } else {
      role.kind = CovariateRole::Kind::Continuous;
      role.nonlinear = low == "elev" || low.find("elevation") != std::string::npos ||
                       low == "slo" || low.find("slope") != std::string::npos ||
                       low.find("dist2f") != std::string::npos ||
                       low.find("fault") != std::string::npos;
    }
    roles.push_back(role);
  }
  return roles;
}

}  // namespace coxmap
