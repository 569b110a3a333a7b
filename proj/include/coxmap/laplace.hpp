#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "coxmap/model.hpp"
#include "coxmap/sparse.hpp"

namespace coxmap {

/// Per-pixel log-likelihood contribution as a function of the linear
/// predictor X_i. eval returns false when the term diverges (overflow guard).
class PixelLikelihood {
 public:
  virtual ~PixelLikelihood() = default;
  virtual std::size_t size() const = 0;
  /// value, d/dX and the negated second derivative (curvature, >= 0)
  virtual bool eval(std::size_t i, double x, double& value, double& grad,
                    double& curv) const = 0;
};

/// Poisson counts with cell-area offset: n_i X_i - C exp(X_i), log(n_i!) dropped.
/// X_i above 30 is treated as diverging before exponentiation.
class PoissonLikelihood final : public PixelLikelihood {
 public:
  PoissonLikelihood(std::vector<int> counts, double cell_area)
      : counts_(std::move(counts)), cell_area_(cell_area) {}
  std::size_t size() const override { return counts_.size(); }
  bool eval(std::size_t i, double x, double& value, double& grad, double& curv) const override;

  static constexpr double kLinearPredictorCap = 30.0;

 private:
  std::vector<int> counts_;
  double cell_area_;
};

/// Gaussian identity-link surrogate, -0.5 * prec * (y_i - X_i)^2.
class GaussianLikelihood final : public PixelLikelihood {
 public:
  GaussianLikelihood(std::vector<double> y, double precision)
      : y_(std::move(y)), precision_(precision) {}
  std::size_t size() const override { return y_.size(); }
  bool eval(std::size_t i, double x, double& value, double& grad, double& curv) const override;

 private:
  std::vector<double> y_;
  double precision_;
};

struct JointEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  SparseSymmetric curvature;  // Q*(eta) = Q_prior(theta) + A^T diag(curv) A
};

/// Joint log posterior (up to an eta-independent constant), its gradient and
/// Gauss-Newton curvature, which is the exact Hessian for the Poisson model.
JointEval joint_log_posterior(const ModelStructure& model, const Eigen::VectorXd& eta,
                              double theta);

struct ModeResult {
  double theta = 1.0;
  Eigen::VectorXd mode;  // constraint-corrected
  SparseSymmetric curvature;
  std::shared_ptr<SparseCholesky> factor;  // factor of the curvature
  double log_joint_at_mode = 0.0;
  int n_newton_iters = 0;
};

/// Newton iteration with step-halving line search; the Gaussian-approximation
/// mean is constraint-corrected (conditioning by kriging) after every solve.
ModeResult find_mode(const ModelStructure& model, double theta,
                     const Eigen::VectorXd* init = nullptr);
ModeResult find_mode_with(const ModelStructure& model, const PixelLikelihood& likelihood,
                          double theta, const Eigen::VectorXd* init = nullptr,
                          std::vector<double>* accepted_values = nullptr);

/// Laplace approximation of the log hyperparameter posterior at theta
/// (constant convention fixed within one model/likelihood).
double log_hyper_posterior(const ModelStructure& model, const HyperSpec& hyper, double theta);
double log_hyper_posterior_with(const ModelStructure& model, const PixelLikelihood& likelihood,
                                const HyperSpec& hyper, double theta);

struct GridPoint {
  double theta = 1.0;
  double log_posterior = 0.0;
  double weight = 1.0;
};

struct FitResult {
  std::vector<GridPoint> grid;
  Eigen::VectorXd component_mean, component_sd;
  Eigen::VectorXd pixel_mean, pixel_var;  // posterior moments of X_i
  const ModelStructure* model = nullptr;

  /// Retained per-grid-point state, present when FitOptions::keep_grid_state:
  /// enables exact linear-predictor moments for out-of-sample pixels.
  struct GridState {
    double theta = 1.0;
    double weight = 1.0;
    Eigen::VectorXd mode;
    std::shared_ptr<SparseCholesky> factor;
    std::shared_ptr<ConstraintSolve> constraint;
  };
  std::vector<GridState> states;
};

struct FitOptions {
  int threads = 1;
  bool keep_grid_state = false;
};

/// Full Laplace fit: 1-D hyperparameter grid located by golden-section search
/// (15 points, 0.25 posterior-sd spacing), Gaussian-mixture marginals for all
/// latent components and pixel linear predictors. Marginal variances come from
/// partial inversion of each grid point's sparse factor.
FitResult fit(const ModelStructure& model, const HyperSpec& hyper, const FitOptions& options = {});
FitResult fit_with(const ModelStructure& model, const PixelLikelihood& likelihood,
                   const HyperSpec& hyper, const FitOptions& options = {});

/// Mixture moments of the linear predictor for out-of-sample incidence rows;
/// requires a fit with retained grid state.
void linear_predictor_moments(const FitResult& fit,
                              const std::vector<std::vector<std::pair<int, double>>>& rows,
                              Eigen::VectorXd& mean, Eigen::VectorXd& variance);

/// Posterior mean of theta under the grid weights.
double hyper_mean(const FitResult& fit);
/// Equal-tailed interval from Gaussian quantiles of the mixture in log(theta).
std::pair<double, double> hyper_interval(const FitResult& fit, double level = 0.95);

}  // namespace coxmap
