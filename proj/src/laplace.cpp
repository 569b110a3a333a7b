#include "coxmap/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "coxmap/log.hpp"
#include "coxmap/parallel.hpp"
#include "coxmap/rng.hpp"

namespace coxmap {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

bool PoissonLikelihood::eval(std::size_t i, double x, double& value, double& grad,
                             double& curv) const {
  if (x > kLinearPredictorCap) return false;
  const double mu = cell_area_ * std::exp(x);
  const double n = static_cast<double>(counts_[i]);
  value = n * x - mu;
  grad = n - mu;
  curv = mu;
  return true;
}

bool GaussianLikelihood::eval(std::size_t i, double x, double& value, double& grad,
                              double& curv) const {
  const double r = y_[i] - x;
  value = -0.5 * precision_ * r * r;
  grad = precision_ * r;
  curv = precision_;
  return true;
}

// ---------------------------------------------------------------------------
// Evaluation engine: caches the curvature sparsity pattern (theta-independent)
// and its symbolic factorization across Newton iterations and grid points.
// ---------------------------------------------------------------------------

namespace {

class LaplaceEngine {
 public:
  LaplaceEngine(const ModelStructure& model, const PixelLikelihood& lik)
      : m_(model), lik_(lik) {
    if (lik.size() != m_.n_pixels)
      throw Error("E_LAPLACE", "likelihood size does not match the pixel count");
    build_pattern();
    chol_.analyze(pattern_);
  }

  const ModelStructure& model() const { return m_; }
  SparseCholesky& factor() { return chol_; }

  // joint log posterior value; -inf when the likelihood diverges
  double value(const Eigen::VectorXd& eta, double theta) {
    double v = 0.0;
    if (!likelihood_terms(eta, &v, nullptr)) return kNegInf;
    return v - 0.5 * prior_quadratic(eta, theta);
  }

  bool value_gradient(const Eigen::VectorXd& eta, double theta, double& v, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(m_.latent_dim);
    double lv = 0.0;
    if (!likelihood_terms(eta, &lv, &g)) return false;
    // g -= Q_prior(theta) (eta - mu)
    const Eigen::VectorXd centered = eta - m_.prior_mean;
    apply_prior(centered, theta, g);
    v = lv - 0.5 * prior_quadratic(eta, theta);
    return true;
  }

  // fills the curvature values over the cached pattern and factorizes
  void factorize_curvature(const Eigen::VectorXd& eta, double theta) {
    fill_curvature_values(eta, theta);
    chol_.factorize_values(slot_values_.data(), slot_values_.size());
  }

  SparseSymmetric curvature_matrix(const Eigen::VectorXd& eta, double theta) {
    fill_curvature_values(eta, theta);
    std::vector<SparseEntry> entries;
    entries.reserve(slot_values_.size());
    for (std::size_t s = 0; s < slot_values_.size(); ++s)
      entries.push_back({slot_row_[s], slot_col_[s], slot_values_[s]});
    return SparseSymmetric::from_triplets(m_.latent_dim, std::move(entries));
  }

 private:
  const ModelStructure& m_;
  const PixelLikelihood& lik_;
  SparseSymmetric pattern_;
  std::vector<int> slot_row_, slot_col_;
  std::vector<int> col_start_;  // slot range per column
  std::vector<int> fixed_slot_, scaled_slot_;
  std::vector<std::uint32_t> pair_slot_;  // cached per-pixel pair slots (optional)
  bool pairs_cached_ = false;
  std::vector<double> slot_values_;
  SparseCholesky chol_;
  std::vector<double> x_work_, lgrad_work_, lcurv_work_;

  void build_pattern() {
    const int dim = m_.latent_dim;
    const int k = m_.entries_per_pixel;
    std::unordered_set<std::uint64_t> keys;
    keys.reserve(m_.n_pixels * static_cast<std::size_t>(k) + 64);
    auto key_of = [dim](int r, int c) {
      return static_cast<std::uint64_t>(c) * static_cast<std::uint64_t>(dim) +
             static_cast<std::uint64_t>(r);
    };
    for (const auto& e : m_.prior_fixed.entries()) keys.insert(key_of(e.row, e.col));
    for (const auto& e : m_.prior_scaled.entries()) keys.insert(key_of(e.row, e.col));
    for (std::size_t i = 0; i < m_.n_pixels; ++i) {
      const int* idx = &m_.inc_index[i * k];
      for (int s = 0; s < k; ++s)
        for (int t = s; t < k; ++t) keys.insert(key_of(idx[s], idx[t]));
    }
    for (int d = 0; d < dim; ++d) keys.insert(key_of(d, d));

    std::vector<std::uint64_t> sorted(keys.begin(), keys.end());
    std::sort(sorted.begin(), sorted.end());
    slot_row_.resize(sorted.size());
    slot_col_.resize(sorted.size());
    std::vector<SparseEntry> pattern_entries(sorted.size());
    for (std::size_t s = 0; s < sorted.size(); ++s) {
      const int c = static_cast<int>(sorted[s] / dim);
      const int r = static_cast<int>(sorted[s] % dim);
      slot_row_[s] = r;
      slot_col_[s] = c;
      pattern_entries[s] = {r, c, 1.0};
    }
    pattern_ = SparseSymmetric::from_triplets(dim, std::move(pattern_entries));
    slot_values_.assign(sorted.size(), 0.0);

    col_start_.assign(dim + 1, 0);
    for (std::size_t s = 0; s < sorted.size(); ++s) col_start_[slot_col_[s] + 1] += 1;
    for (int c = 0; c < dim; ++c) col_start_[c + 1] += col_start_[c];

    fixed_slot_.resize(m_.prior_fixed.entries().size());
    for (std::size_t e = 0; e < fixed_slot_.size(); ++e)
      fixed_slot_[e] =
          slot_of(m_.prior_fixed.entries()[e].row, m_.prior_fixed.entries()[e].col);
    scaled_slot_.resize(m_.prior_scaled.entries().size());
    for (std::size_t e = 0; e < scaled_slot_.size(); ++e)
      scaled_slot_[e] =
          slot_of(m_.prior_scaled.entries()[e].row, m_.prior_scaled.entries()[e].col);

    const std::size_t n_pairs = m_.n_pixels * static_cast<std::size_t>(k * (k + 1) / 2);
    if (n_pairs <= (std::size_t{1} << 24)) {
      pair_slot_.reserve(n_pairs);
      for (std::size_t i = 0; i < m_.n_pixels; ++i) {
        const int* idx = &m_.inc_index[i * k];
        for (int s = 0; s < k; ++s)
          for (int t = s; t < k; ++t)
            pair_slot_.push_back(static_cast<std::uint32_t>(slot_of(idx[s], idx[t])));
      }
      pairs_cached_ = true;
    }
    x_work_.resize(m_.n_pixels);
    lgrad_work_.resize(m_.n_pixels);
    lcurv_work_.resize(m_.n_pixels);
  }

  int slot_of(int r, int c) const {
    if (r > c) std::swap(r, c);
    const int lo = col_start_[c], hi = col_start_[c + 1];
    const int* first = slot_row_.data() + lo;
    const int* last = slot_row_.data() + hi;
    const int* it = std::lower_bound(first, last, r);
    return static_cast<int>(it - slot_row_.data());
  }

  // sums likelihood values; optionally accumulates A^T grad into g
  bool likelihood_terms(const Eigen::VectorXd& eta, double* value, Eigen::VectorXd* g) {
    const int k = m_.entries_per_pixel;
    double total = 0.0;
    for (std::size_t i = 0; i < m_.n_pixels; ++i) {
      const std::size_t base = i * k;
      double x = 0.0;
      for (int t = 0; t < k; ++t) x += m_.inc_weight[base + t] * eta[m_.inc_index[base + t]];
      double lv, lg, lc;
      if (!lik_.eval(i, x, lv, lg, lc)) return false;
      total += lv;
      if (g != nullptr)
        for (int t = 0; t < k; ++t) (*g)[m_.inc_index[base + t]] += m_.inc_weight[base + t] * lg;
    }
    if (value != nullptr) *value = total;
    return true;
  }

  double prior_quadratic(const Eigen::VectorXd& eta, double theta) const {
    const Eigen::VectorXd centered = eta - m_.prior_mean;
    double q = 0.0;
    for (const auto& e : m_.prior_fixed.entries())
      q += (e.row == e.col ? 1.0 : 2.0) * e.value * centered[e.row] * centered[e.col];
    for (const auto& e : m_.prior_scaled.entries())
      q += theta * (e.row == e.col ? 1.0 : 2.0) * e.value * centered[e.row] * centered[e.col];
    return q;
  }

  // g -= Q_prior(theta) * centered
  void apply_prior(const Eigen::VectorXd& centered, double theta, Eigen::VectorXd& g) const {
    for (const auto& e : m_.prior_fixed.entries()) {
      g[e.row] -= e.value * centered[e.col];
      if (e.row != e.col) g[e.col] -= e.value * centered[e.row];
    }
    for (const auto& e : m_.prior_scaled.entries()) {
      g[e.row] -= theta * e.value * centered[e.col];
      if (e.row != e.col) g[e.col] -= theta * e.value * centered[e.row];
    }
  }

  void fill_curvature_values(const Eigen::VectorXd& eta, double theta) {
    std::fill(slot_values_.begin(), slot_values_.end(), 0.0);
    for (std::size_t e = 0; e < fixed_slot_.size(); ++e)
      slot_values_[fixed_slot_[e]] += m_.prior_fixed.entries()[e].value;
    for (std::size_t e = 0; e < scaled_slot_.size(); ++e)
      slot_values_[scaled_slot_[e]] += theta * m_.prior_scaled.entries()[e].value;
    const int k = m_.entries_per_pixel;
    std::size_t pair_pos = 0;
    for (std::size_t i = 0; i < m_.n_pixels; ++i) {
      const std::size_t base = i * k;
      const int* idx = &m_.inc_index[base];
      const double* w = &m_.inc_weight[base];
      double x = 0.0;
      for (int t = 0; t < k; ++t) x += w[t] * eta[idx[t]];
      double lv, lg, lc;
      if (!lik_.eval(i, x, lv, lg, lc))
        throw Error("E_LAPLACE", "diverging linear predictor");
      for (int s = 0; s < k; ++s) {
        const double ws = lc * w[s];
        for (int t = s; t < k; ++t) {
          const int slot = pairs_cached_ ? static_cast<int>(pair_slot_[pair_pos++])
                                         : slot_of(idx[s], idx[t]);
          slot_values_[slot] += ws * w[t];
        }
      }
    }
  }
};

// projected gradient infinity-norm within the constrained subspace
double projected_grad_norm(const Eigen::VectorXd& g, const LinearConstraint& c) {
  if (c.empty()) return g.lpNorm<Eigen::Infinity>();
  const Eigen::MatrixXd aat = c.rows * c.rows.transpose();
  const Eigen::VectorXd proj = g - c.rows.transpose() * aat.ldlt().solve(c.rows * g);
  return proj.lpNorm<Eigen::Infinity>();
}

ModeResult find_mode_impl(LaplaceEngine& engine, double theta, const Eigen::VectorXd* init,
                          std::vector<double>* accepted_values) {
  const ModelStructure& m = engine.model();
  Eigen::VectorXd eta = init != nullptr ? *init : m.prior_mean;
  if (eta.size() != m.latent_dim) throw Error("E_LAPLACE", "init vector has wrong dimension");

  // start on the constraint manifold; sum-to-zero rows hold at the prior mean,
  // a general init is projected orthogonally
  if (!m.constraints.empty()) {
    const Eigen::VectorXd residual = m.constraints.rows * eta - m.constraints.rhs;
    if (residual.lpNorm<Eigen::Infinity>() > 1e-12) {
      const Eigen::MatrixXd aat = m.constraints.rows * m.constraints.rows.transpose();
      eta -= m.constraints.rows.transpose() * aat.ldlt().solve(residual);
    }
  }

  double v;
  Eigen::VectorXd g;
  if (!engine.value_gradient(eta, theta, v, g))
    throw Error("E_LAPLACE", "diverging linear predictor at the initial point");
  if (accepted_values != nullptr) accepted_values->push_back(v);

  constexpr int kMaxIter = 50;
  constexpr double kValueTol = 1e-8;
  constexpr double kGradTol = 1e-6;
  int iters = 0;
  bool converged = projected_grad_norm(g, m.constraints) < kGradTol;
  std::vector<double> trace{v};

  while (!converged && iters < kMaxIter) {
    ++iters;
    engine.factorize_curvature(eta, theta);
    Eigen::VectorXd target = eta + engine.factor().solve(g);
    if (!m.constraints.empty()) {
      ConstraintSolve cs(engine.factor(), m.constraints);
      target = cs.correct_mean(target);
    }
    const Eigen::VectorXd dir = target - eta;
    const double dir_norm = dir.lpNorm<Eigen::Infinity>();
    if (dir_norm <= 1e-13 * std::max(1.0, eta.lpNorm<Eigen::Infinity>())) {
      converged = true;
      break;
    }
    // improvement the local quadratic model predicts for the full step; once
    // it drops below the floating-point floor of |v| the mode is resolved
    const double predicted = 0.5 * std::fabs(g.dot(dir));
    const double value_floor = std::max(kValueTol, std::fabs(v) * 1e-13);
    if (predicted <= value_floor) {
      converged = true;
      break;
    }

    double step = 1.0;
    double v_new = kNegInf;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      v_new = engine.value(eta + step * dir, theta);
      if (v_new > v) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no ascent left along the Newton direction: accept convergence if the
      // constrained gradient is already small, otherwise fail loudly
      if (projected_grad_norm(g, m.constraints) < 1e-4) {
        converged = true;
        break;
      }
      std::ostringstream msg;
      msg << "Newton line search failed at iteration " << iters << " (value " << v << ")";
      throw Error("E_LAPLACE", msg.str());
    }

    eta += step * dir;
    const double dv = v_new - v;
    v = v_new;
    if (!engine.value_gradient(eta, theta, v, g))
      throw Error("E_LAPLACE", "diverging linear predictor");
    if (accepted_values != nullptr) accepted_values->push_back(v);
    trace.push_back(v);
    if (std::fabs(dv) < std::max(kValueTol, std::fabs(v) * 1e-13) ||
        projected_grad_norm(g, m.constraints) < kGradTol)
      converged = true;
  }

  if (!converged) {
    std::ostringstream msg;
    msg << "mode finding did not converge after " << kMaxIter << " iterations; value trace:";
    for (std::size_t i = trace.size() > 8 ? trace.size() - 8 : 0; i < trace.size(); ++i)
      msg << " " << trace[i];
    throw Error("E_LAPLACE", msg.str());
  }

  ModeResult out;
  out.theta = theta;
  out.mode = eta;
  out.curvature = engine.curvature_matrix(eta, theta);
  engine.factorize_curvature(eta, theta);
  out.factor = std::make_shared<SparseCholesky>(engine.factor());
  out.log_joint_at_mode = v;
  out.n_newton_iters = iters;
  return out;
}

double log_hyper_posterior_impl(LaplaceEngine& engine, const HyperSpec& hyper, double theta,
                                const Eigen::VectorXd* init, ModeResult* mode_out,
                                std::shared_ptr<ConstraintSolve>* cons_out) {
  const ModelStructure& m = engine.model();
  ModeResult mode = find_mode_impl(engine, theta, init, nullptr);
  double lp = mode.log_joint_at_mode - 0.5 * mode.factor->log_determinant();
  std::shared_ptr<ConstraintSolve> cons;
  if (!m.constraints.empty()) {
    // normalization of the Gaussian approximation conditioned on A eta = e;
    // the combination with -0.5 logdet Q* is invariant to curvature added
    // along the constrained directions (e.g. the intrinsic-block jitter)
    cons = std::make_shared<ConstraintSolve>(*mode.factor, m.constraints);
    lp -= cons->half_log_det();
  }
  if (m.has_estimated_block())
    lp += 0.5 * static_cast<double>(m.scaled_prior_rank) * std::log(theta);
  if (hyper.estimated.has_value()) lp += hyper.estimated->prior.log_density(theta);
  if (mode_out != nullptr) *mode_out = std::move(mode);
  if (cons_out != nullptr) *cons_out = std::move(cons);
  return lp;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations.
// ---------------------------------------------------------------------------

JointEval joint_log_posterior(const ModelStructure& model, const Eigen::VectorXd& eta,
                              double theta) {
  PoissonLikelihood lik(model.counts, model.cell_area);
  LaplaceEngine engine(model, lik);
  JointEval out;
  out.gradient.resize(model.latent_dim);
  if (!engine.value_gradient(eta, theta, out.value, out.gradient))
    throw Error("E_LAPLACE", "diverging linear predictor");
  out.curvature = engine.curvature_matrix(eta, theta);
  return out;
}

ModeResult find_mode(const ModelStructure& model, double theta, const Eigen::VectorXd* init) {
  PoissonLikelihood lik(model.counts, model.cell_area);
  LaplaceEngine engine(model, lik);
  return find_mode_impl(engine, theta, init, nullptr);
}

ModeResult find_mode_with(const ModelStructure& model, const PixelLikelihood& likelihood,
                          double theta, const Eigen::VectorXd* init,
                          std::vector<double>* accepted_values) {
  LaplaceEngine engine(model, likelihood);
  return find_mode_impl(engine, theta, init, accepted_values);
}

double log_hyper_posterior(const ModelStructure& model, const HyperSpec& hyper, double theta) {
  PoissonLikelihood lik(model.counts, model.cell_area);
  LaplaceEngine engine(model, lik);
  return log_hyper_posterior_impl(engine, hyper, theta, nullptr, nullptr, nullptr);
}

double log_hyper_posterior_with(const ModelStructure& model, const PixelLikelihood& likelihood,
                                const HyperSpec& hyper, double theta) {
  LaplaceEngine engine(model, likelihood);
  return log_hyper_posterior_impl(engine, hyper, theta, nullptr, nullptr, nullptr);
}

namespace {

struct GridPointState {
  double theta = 1.0;
  double log_posterior = 0.0;
  double weight = 0.0;
  ModeResult mode;
  std::shared_ptr<ConstraintSolve> cons;
};

// golden-section maximization of f over [lo, hi] in log-theta
double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                          double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

FitResult fit_impl(const ModelStructure& model, const PixelLikelihood& likelihood,
                   const HyperSpec& hyper, const FitOptions& options) {
  LaplaceEngine engine(model, likelihood);
  std::vector<GridPointState> grid;

  if (!hyper.estimated.has_value()) {
    GridPointState point;
    point.theta = 1.0;
    if (model.has_estimated_block()) {
      const double fallback = model.blocks[model.scaled_block].spec.prior_precision;
      point.theta = fallback > 0.0 ? fallback : 1.0;
    }
    point.log_posterior =
        log_hyper_posterior_impl(engine, hyper, point.theta, nullptr, &point.mode, &point.cons);
    point.weight = 1.0;
    grid.push_back(std::move(point));
  } else {
    const EstimatedHyper& est = *hyper.estimated;
    Eigen::VectorXd warm = model.prior_mean;
    auto objective = [&](double log_theta) {
      ModeResult mode;
      const double lp =
          log_hyper_posterior_impl(engine, hyper, std::exp(log_theta), &warm, &mode, nullptr);
      warm = mode.mode;
      return lp;
    };
    const double center =
        golden_section_max(objective, est.search_log_lo, est.search_log_hi, 1e-3);

    // curvature of the log posterior in log-theta for the grid spacing
    const double h = 0.1;
    const double g0 = objective(center);
    const double gp = objective(center + h);
    const double gm = objective(center - h);
    double curv = (2.0 * g0 - gp - gm) / (h * h);
    double sd = curv > 1e-8 ? 1.0 / std::sqrt(curv) : 1.0;
    sd = std::clamp(sd, 0.05, (est.search_log_hi - est.search_log_lo) / 4.0);

    const int n_grid = std::max(1, est.grid_size);
    grid.resize(n_grid);
    const double half = (n_grid - 1) / 2.0;
    for (int j = 0; j < n_grid; ++j)
      grid[j].theta = std::exp(center + (j - half) * est.grid_spacing_sd * sd);

    // center-out evaluation order so each point warm-starts from a neighbor
    std::vector<int> order;
    const int mid = n_grid / 2;
    order.push_back(mid);
    for (int step = 1; step <= n_grid; ++step) {
      if (mid + step < n_grid) order.push_back(mid + step);
      if (mid - step >= 0) order.push_back(mid - step);
    }
    Eigen::VectorXd warm_up = warm, warm_down = warm;
    for (int j : order) {
      Eigen::VectorXd* start = j >= mid ? &warm_up : &warm_down;
      try {
        grid[j].log_posterior = log_hyper_posterior_impl(engine, hyper, grid[j].theta, start,
                                                         &grid[j].mode, &grid[j].cons);
        *start = grid[j].mode.mode;
      } catch (const Error& e) {
        log_warn("mode finding failed at theta=" + std::to_string(grid[j].theta) + ": " +
                 e.what() + "; grid point dropped");
        grid[j].log_posterior = kNegInf;
      }
    }
    std::erase_if(grid, [](const GridPointState& p) { return !std::isfinite(p.log_posterior); });
    if (grid.empty())
      throw Error("E_LAPLACE", "mode finding failed at every hyperparameter grid point");

    double max_lp = kNegInf;
    for (const auto& p : grid) max_lp = std::max(max_lp, p.log_posterior);
    double total = 0.0;
    for (auto& p : grid) {
      p.weight = std::exp(p.log_posterior - max_lp);
      total += p.weight;
    }
    for (auto& p : grid) p.weight /= total;
    if (grid.front().weight > 0.2 || grid.back().weight > 0.2)
      log_warn("more than 20% of the posterior weight sits on a grid endpoint; "
               "the hyperparameter grid is too narrow");
  }

  // constraint solves for grid points that did not get one yet
  for (auto& p : grid)
    if (!model.constraints.empty() && p.cons == nullptr)
      p.cons = std::make_shared<ConstraintSolve>(*p.mode.factor, model.constraints);

  // per-grid-point Gaussian marginals; embarrassingly parallel
  const int n_grid = static_cast<int>(grid.size());
  const int dim = model.latent_dim;
  const auto n_pixels = static_cast<Eigen::Index>(model.n_pixels);
  std::vector<Eigen::VectorXd> comp_var(n_grid), pix_mean(n_grid), pix_var(n_grid);

  parallel_for(n_grid, options.threads, [&](int j) {
    const GridPointState& p = grid[j];
    const auto pinv = p.mode.factor->partial_inverse();
    Eigen::VectorXd cv(dim);
    for (int i = 0; i < dim; ++i) {
      double var = pinv.diagonal(i);
      if (p.cons) var -= p.cons->variance_reduction(i);
      cv[i] = var;
    }
    comp_var[j] = std::move(cv);

    Eigen::VectorXd pm(n_pixels), pv(n_pixels);
    const int k = model.entries_per_pixel;
    std::vector<std::pair<int, double>> functional(k);
    for (Eigen::Index i = 0; i < n_pixels; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * k;
      double mean = 0.0, var = 0.0;
      for (int s = 0; s < k; ++s) {
        const int is = model.inc_index[base + s];
        const double ws = model.inc_weight[base + s];
        mean += ws * p.mode.mode[is];
        functional[s] = {is, ws};
        for (int t = 0; t < k; ++t) {
          const int it = model.inc_index[base + t];
          var += ws * model.inc_weight[base + t] * pinv(is, it);
        }
      }
      if (p.cons) var -= p.cons->variance_reduction(functional);
      pm[i] = mean;
      pv[i] = var;
    }
    pix_mean[j] = std::move(pm);
    pix_var[j] = std::move(pv);
  });

  FitResult out;
  out.model = &model;
  out.grid.reserve(n_grid);
  for (const auto& p : grid) out.grid.push_back({p.theta, p.log_posterior, p.weight});

  out.component_mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd comp_second = Eigen::VectorXd::Zero(dim);
  out.pixel_mean = Eigen::VectorXd::Zero(n_pixels);
  Eigen::VectorXd pix_second = Eigen::VectorXd::Zero(n_pixels);
  for (int j = 0; j < n_grid; ++j) {
    const double w = grid[j].weight;
    out.component_mean += w * grid[j].mode.mode;
    comp_second += w * (comp_var[j] + grid[j].mode.mode.cwiseProduct(grid[j].mode.mode));
    out.pixel_mean += w * pix_mean[j];
    pix_second += w * (pix_var[j] + pix_mean[j].cwiseProduct(pix_mean[j]));
  }
  out.component_sd =
      (comp_second - out.component_mean.cwiseProduct(out.component_mean)).cwiseMax(0.0).cwiseSqrt();
  out.pixel_var = (pix_second - out.pixel_mean.cwiseProduct(out.pixel_mean)).cwiseMax(0.0);

  for (int i = 0; i < dim; ++i)
    if (!(out.component_sd[i] > 0.0))
      throw Error("E_LAPLACE", "non-positive marginal sd for latent component " +
                                   std::to_string(i));

  if (options.keep_grid_state) {
    out.states.reserve(n_grid);
    for (auto& p : grid) {
      FitResult::GridState st;
      st.theta = p.theta;
      st.weight = p.weight;
      st.mode = p.mode.mode;
      st.factor = p.mode.factor;
      st.constraint = p.cons;
      out.states.push_back(std::move(st));
    }
  }
  return out;
}

}  // namespace

FitResult fit(const ModelStructure& model, const HyperSpec& hyper, const FitOptions& options) {
  PoissonLikelihood lik(model.counts, model.cell_area);
  return fit_impl(model, lik, hyper, options);
}

FitResult fit_with(const ModelStructure& model, const PixelLikelihood& likelihood,
                   const HyperSpec& hyper, const FitOptions& options) {
  return fit_impl(model, likelihood, hyper, options);
}

void linear_predictor_moments(const FitResult& fit,
                              const std::vector<std::vector<std::pair<int, double>>>& rows,
                              Eigen::VectorXd& mean, Eigen::VectorXd& variance) {
  if (fit.states.empty())
    throw Error("E_LAPLACE", "linear_predictor_moments requires a fit with retained grid state");
  const auto n = static_cast<Eigen::Index>(rows.size());
  mean = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(n);
  const int dim = static_cast<int>(fit.states.front().mode.size());
  for (const auto& st : fit.states) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(dim);
      double m = 0.0;
      for (const auto& [idx, w] : rows[i]) {
        a[idx] += w;
        m += w * st.mode[idx];
      }
      double v = a.dot(st.factor->solve(a));
      if (st.constraint) v -= st.constraint->variance_reduction(rows[i]);
      mean[i] += st.weight * m;
      second[i] += st.weight * (v + m * m);
    }
  }
  variance = (second - mean.cwiseProduct(mean)).cwiseMax(0.0);
}

double hyper_mean(const FitResult& fit) {
  double m = 0.0;
  for (const auto& p : fit.grid) m += p.weight * p.theta;
  return m;
}

std::pair<double, double> hyper_interval(const FitResult& fit, double level) {
  if (fit.grid.size() == 1) return {fit.grid[0].theta, fit.grid[0].theta};
  double mean_log = 0.0, second = 0.0;
  for (const auto& p : fit.grid) {
    const double lt = std::log(p.theta);
    mean_log += p.weight * lt;
    second += p.weight * lt * lt;
  }
  const double sd_log = std::sqrt(std::max(0.0, second - mean_log * mean_log));
  const double z = normal_quantile(0.5 + level / 2.0);
  return {std::exp(mean_log - z * sd_log), std::exp(mean_log + z * sd_log)};
}

}  // namespace coxmap
