#include "coxmap/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "coxmap/gmrf.hpp"
#include "coxmap/log.hpp"
#include "coxmap/rng.hpp"

namespace coxmap {

namespace {

// substream ids for the counter generator
enum : std::uint64_t {
  kStreamCovariates = 1,
  kStreamFixed = 2,
  kStreamRw = 3,
  kStreamField = 4,
  kStreamCounts = 5,
};

void subtract_component_means(std::vector<double>& values, const std::vector<int>& labels,
                              int n_components) {
  std::vector<double> sum(n_components, 0.0);
  std::vector<int> count(n_components, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[labels[i]] += values[i];
    count[labels[i]] += 1;
  }
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] -= sum[labels[i]] / static_cast<double>(count[labels[i]]);
}

}  // namespace

std::pair<PixelTable, SimTruth> simulate_dataset(const SimGridSpec& spec,
                                                 const AdjacencyGraph& graph,
                                                 const std::vector<EffectSpec>& effects,
                                                 double theta, std::uint64_t seed) {
  if (spec.nx <= 0 || spec.ny <= 0 || spec.tile <= 0 || spec.nx % spec.tile != 0 ||
      spec.ny % spec.tile != 0)
    throw Error("E_SIM", "pixel lattice must split evenly into tiles");
  if (graph.n_units() != spec.n_units())
    throw Error("E_SIM", "adjacency graph does not match the tile layout");
  if (graph.n_components() > 1)
    log_warn("disconnected simulation graph; per-component constraints applied");

  const std::size_t n = static_cast<std::size_t>(spec.nx) * spec.ny;
  CounterRng root(seed);

  PixelTable pixels;
  pixels.cell_area = spec.cell_area;
  pixels.pixel_id.resize(n);
  pixels.x.resize(n);
  pixels.y.resize(n);
  pixels.count.assign(n, 0);
  pixels.unit_id.resize(n);
  for (int py = 0; py < spec.ny; ++py) {
    for (int px = 0; px < spec.nx; ++px) {
      const std::size_t i = static_cast<std::size_t>(py) * spec.nx + px;
      pixels.pixel_id[i] = static_cast<long long>(i);
      pixels.x[i] = px;
      pixels.y[i] = py;
      pixels.unit_id[i] = (py / spec.tile) * spec.tiles_x() + (px / spec.tile);
    }
  }

  // covariate columns, one per distinct name: continuous iid N(0,1),
  // categorical uniform over levels
  std::uint64_t cov_id = 0;
  for (const auto& e : effects) {
    if (e.kind == EffectKind::Intercept || e.kind == EffectKind::CarSpatial) continue;
    if (pixels.covariate_index(e.name) >= 0) continue;
    CounterRng rng = root.stream(kStreamCovariates).stream(cov_id++);
    std::vector<double> column(n);
    if (e.kind == EffectKind::Categorical) {
      for (std::size_t i = 0; i < n; ++i)
        column[i] = static_cast<double>(rng.next_u64() % static_cast<std::uint64_t>(e.n_levels));
    } else {
      for (std::size_t i = 0; i < n; ++i) column[i] = rng.normal();
    }
    pixels.covariate_names.push_back(e.name);
    pixels.covariates.push_back(std::move(column));
  }

  HyperSpec hyper;  // prior layout only; not used for estimation here
  ModelStructure model = assemble_model(pixels, graph, effects, hyper);

  SimTruth truth;
  truth.theta = theta;
  truth.seed = seed;
  truth.eta = Eigen::VectorXd::Zero(model.latent_dim);

  std::uint64_t block_id = 0;
  for (const auto& blk : model.blocks) {
    CounterRng rng = root.stream(kStreamFixed + (block_id << 8)).stream(block_id);
    ++block_id;
    std::vector<double> values(blk.length, 0.0);
    const double tau = blk.spec.precision_estimated ? theta : blk.spec.prior_precision;
    switch (blk.spec.kind) {
      case EffectKind::Intercept:
      case EffectKind::Linear: {
        auto it = spec.fixed_values.find(blk.spec.name);
        values[0] = it != spec.fixed_values.end()
                        ? it->second
                        : blk.spec.prior_mean + rng.normal() / std::sqrt(tau);
        break;
      }
      case EffectKind::Categorical: {
        for (int l = 0; l < blk.length; ++l) values[l] = rng.normal() / std::sqrt(tau);
        if (blk.spec.sum_to_zero) {
          std::vector<int> labels(blk.length, 0);
          subtract_component_means(values, labels, 1);
        }
        break;
      }
      case EffectKind::Rw1: {
        double level = 0.0;
        for (int l = 1; l < blk.length; ++l) {
          level += rng.normal() / std::sqrt(tau);
          values[l] = level;
        }
        std::vector<int> labels(blk.length, 0);
        subtract_component_means(values, labels, 1);
        break;
      }
      case EffectKind::Rw1Cyclic: {
        SparseSymmetric q = build_rw1_precision(blk.length, tau, true);
        SparseCholesky chol = factorize(q.with_jitter(kIntrinsicJitter * tau));
        Eigen::VectorXd z(blk.length);
        for (int l = 0; l < blk.length; ++l) z[l] = rng.normal();
        Eigen::VectorXd draw = chol.sample(z);
        for (int l = 0; l < blk.length; ++l) values[l] = draw[l];
        std::vector<int> labels(blk.length, 0);
        subtract_component_means(values, labels, 1);
        break;
      }
      case EffectKind::CarSpatial: {
        SparseSymmetric q = build_car_precision(graph, tau);
        SparseCholesky chol = factorize(q.with_jitter(kIntrinsicJitter * tau));
        Eigen::VectorXd z(blk.length);
        for (int l = 0; l < blk.length; ++l) z[l] = rng.normal();
        Eigen::VectorXd draw = chol.sample(z);
        for (int l = 0; l < blk.length; ++l) values[l] = draw[l];
        subtract_component_means(values, graph.component_labels(), graph.n_components());
        break;
      }
    }
    for (int l = 0; l < blk.length; ++l) truth.eta[blk.offset + l] = values[l];
    truth.blocks[blk.spec.name + std::string(":") + effect_kind_name(blk.spec.kind)] = values;
  }

  const Eigen::VectorXd xlin = model.linear_predictor(truth.eta);
  truth.intensity.resize(n);
  CounterRng count_rng = root.stream(kStreamCounts);
  for (std::size_t i = 0; i < n; ++i) {
    const double lambda = spec.cell_area * std::exp(xlin[static_cast<Eigen::Index>(i)]);
    if (!(lambda < 1e7))
      throw Error("E_SIM", "simulated intensity overflow at pixel " + std::to_string(i));
    truth.intensity[i] = lambda;
    pixels.count[i] = static_cast<int>(count_rng.stream(i).poisson(lambda));
  }
  truth.counts = pixels.count;
  return {std::move(pixels), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Quadrature oracle.
// ---------------------------------------------------------------------------

namespace {

// unnormalized log posterior evaluated directly from the model pieces
double oracle_log_density(const ModelStructure& m, double theta, const Eigen::VectorXd& eta) {
  double ll = 0.0;
  const int k = m.entries_per_pixel;
  for (std::size_t i = 0; i < m.n_pixels; ++i) {
    double x = 0.0;
    for (int t = 0; t < k; ++t) x += m.inc_weight[i * k + t] * eta[m.inc_index[i * k + t]];
    ll += m.counts[i] * x - m.cell_area * std::exp(std::min(x, 60.0));
  }
  const Eigen::VectorXd centered = eta - m.prior_mean;
  double quad = 0.0;
  for (const auto& e : m.prior_fixed.entries())
    quad += (e.row == e.col ? 1.0 : 2.0) * e.value * centered[e.row] * centered[e.col];
  for (const auto& e : m.prior_scaled.entries())
    quad += theta * (e.row == e.col ? 1.0 : 2.0) * e.value * centered[e.row] * centered[e.col];
  return ll - 0.5 * quad;
}

double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                            double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

struct ScanResult {
  double mode = 0.0;
  double sd = 1.0;
  double peak = 0.0;
};

ScanResult scan_1d(const std::function<double(double)>& lp, double center, double span) {
  const int n_scan = 4001;
  ScanResult out;
  out.peak = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_scan; ++i) {
    const double x = center - span + 2.0 * span * i / (n_scan - 1);
    const double v = lp(x);
    if (v > out.peak) {
      out.peak = v;
      out.mode = x;
    }
  }
  const double h = 2.0 * span / (n_scan - 1) * 4.0;
  const double curv = (2.0 * lp(out.mode) - lp(out.mode + h) - lp(out.mode - h)) / (h * h);
  out.sd = curv > 1e-12 ? 1.0 / std::sqrt(curv) : span / 10.0;
  return out;
}

}  // namespace

QuadratureResult quadrature_oracle(const ModelStructure& model, double theta) {
  const int dim = model.latent_dim;
  if (dim < 1 || dim > 2)
    throw Error("E_SIM", "quadrature oracle supports latent dimension 1 or 2");
  constexpr double kRelTol = 1e-8;

  QuadratureResult out;
  out.mean.resize(dim);
  out.sd.resize(dim);

  if (dim == 1) {
    auto lp = [&](double x) {
      Eigen::VectorXd eta(1);
      eta[0] = x;
      return oracle_log_density(model, theta, eta);
    };
    const ScanResult scan = scan_1d(lp, model.prior_mean[0], 25.0);
    const double lo = scan.mode - 10.0 * scan.sd, hi = scan.mode + 10.0 * scan.sd;
    auto f0 = [&](double x) { return std::exp(lp(x) - scan.peak); };
    auto f1 = [&](double x) { return (x - scan.mode) * f0(x); };
    auto f2 = [&](double x) { return (x - scan.mode) * (x - scan.mode) * f0(x); };
    const double scale = scan.sd;  // rough magnitude of the normalizer integral
    const double z = adaptive_simpson(f0, lo, hi, kRelTol * scale);
    if (!(z > 0.0)) throw Error("E_SIM", "non-integrable posterior in quadrature oracle");
    const double m1 = adaptive_simpson(f1, lo, hi, kRelTol * scale) / z;
    const double m2 = adaptive_simpson(f2, lo, hi, kRelTol * scale) / z;
    out.mean[0] = scan.mode + m1;
    out.sd[0] = std::sqrt(std::max(0.0, m2 - m1 * m1));
    out.log_normalizer = std::log(z) + scan.peak;
    return out;
  }

  // dim == 2: profile scan per coordinate, then nested adaptive Simpson
  auto lp2 = [&](double x, double y) {
    Eigen::VectorXd eta(2);
    eta[0] = x;
    eta[1] = y;
    return oracle_log_density(model, theta, eta);
  };
  ScanResult sx, sy;
  {
    auto profile_x = [&](double x) {
      auto inner = [&](double y) { return lp2(x, y); };
      return scan_1d(inner, model.prior_mean[1], 25.0).peak;
    };
    // coarse joint scan: locate the mode on a grid, refine with 1-d scans
    double best = -std::numeric_limits<double>::infinity(), bx = 0.0, by = 0.0;
    const int g = 161;
    for (int i = 0; i < g; ++i) {
      const double x = model.prior_mean[0] - 20.0 + 40.0 * i / (g - 1);
      for (int j = 0; j < g; ++j) {
        const double y = model.prior_mean[1] - 20.0 + 40.0 * j / (g - 1);
        const double v = lp2(x, y);
        if (v > best) {
          best = v;
          bx = x;
          by = y;
        }
      }
    }
    (void)profile_x;
    auto lx = [&](double x) { return lp2(x, by); };
    auto ly = [&](double y) { return lp2(bx, y); };
    sx = scan_1d(lx, bx, 5.0);
    sy = scan_1d(ly, by, 5.0);
  }
  const double peak = lp2(sx.mode, sy.mode);
  const double xlo = sx.mode - 10.0 * sx.sd, xhi = sx.mode + 10.0 * sx.sd;
  const double ylo = sy.mode - 10.0 * sy.sd, yhi = sy.mode + 10.0 * sy.sd;
  const double inner_tol = kRelTol * sy.sd * 1e-3;

  auto integrate_inner = [&](double x, const std::function<double(double, double)>& weight) {
    auto f = [&](double y) { return weight(x, y) * std::exp(lp2(x, y) - peak); };
    return adaptive_simpson(f, ylo, yhi, inner_tol);
  };
  auto outer = [&](const std::function<double(double, double)>& weight) {
    auto f = [&](double x) { return integrate_inner(x, weight); };
    return adaptive_simpson(f, xlo, xhi, kRelTol * sx.sd * sy.sd * 1e-2);
  };

  const double z = outer([](double, double) { return 1.0; });
  if (!(z > 0.0)) throw Error("E_SIM", "non-integrable posterior in quadrature oracle");
  const double ex = outer([&](double x, double) { return x - sx.mode; }) / z;
  const double ey = outer([&](double, double y) { return y - sy.mode; }) / z;
  const double exx = outer([&](double x, double) { return (x - sx.mode) * (x - sx.mode); }) / z;
  const double eyy = outer([&](double, double y) { return (y - sy.mode) * (y - sy.mode); }) / z;
  out.mean[0] = sx.mode + ex;
  out.mean[1] = sy.mode + ey;
  out.sd[0] = std::sqrt(std::max(0.0, exx - ex * ex));
  out.sd[1] = std::sqrt(std::max(0.0, eyy - ey * ey));
  out.log_normalizer = std::log(z) + peak;
  return out;
}

}  // namespace coxmap
