#include "coxmap/predict.hpp"

#include <cmath>

#include "coxmap/error.hpp"

namespace coxmap {

IntensityEstimator estimator_from_name(const std::string& name) {
  if (name == "plug-in-mean" || name == "plugin") return IntensityEstimator::PlugInMean;
  if (name == "lognormal-corrected" || name == "lognormal")
    return IntensityEstimator::LognormalCorrected;
  throw Error("E_CONFIG", "unknown intensity estimator: " + name);
}

const char* estimator_name(IntensityEstimator estimator) {
  return estimator == IntensityEstimator::PlugInMean ? "plug-in-mean" : "lognormal-corrected";
}

Eigen::VectorXd pixel_intensity(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                                double cell_area, IntensityEstimator estimator) {
  Eigen::VectorXd lambda(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double exponent =
        estimator == IntensityEstimator::LognormalCorrected ? mean[i] + 0.5 * variance[i] : mean[i];
    if (exponent > 700.0) throw Error("E_PREDICT", "intensity overflow at pixel index " +
                                                        std::to_string(i));
    lambda[i] = cell_area * std::exp(exponent);
  }
  return lambda;
}

Eigen::VectorXd pixel_intensity(const FitResult& fit, IntensityEstimator estimator) {
  if (fit.model == nullptr) throw Error("E_PREDICT", "fit has no model reference");
  return pixel_intensity(fit.pixel_mean, fit.pixel_var, fit.model->cell_area, estimator);
}

double count_probability(double lambda, int k) {
  if (k < 0) throw Error("E_PREDICT", "count must be non-negative");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw Error("E_PREDICT", "intensity must be finite and non-negative");
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(k) * std::log(lambda) - lambda -
                  std::lgamma(static_cast<double>(k) + 1.0));
}

double exceedance_probability(double lambda, int k) {
  double cdf = 0.0;
  for (int j = 0; j <= k; ++j) cdf += count_probability(lambda, j);
  return std::max(0.0, 1.0 - cdf);
}

double event_probability(double lambda) {
  if (!(lambda >= 0.0)) throw Error("E_PREDICT", "intensity must be non-negative");
  return -std::expm1(-lambda);
}

UnitAggregate aggregate(const std::vector<double>& pixel_lambda,
                        const std::vector<int>& unit_of_pixel, int n_units) {
  if (pixel_lambda.size() != unit_of_pixel.size())
    throw Error("E_PREDICT", "pixel/unit map size mismatch");
  UnitAggregate out;
  out.lambda.assign(n_units, 0.0);
  for (std::size_t i = 0; i < pixel_lambda.size(); ++i) {
    const int u = unit_of_pixel[i];
    if (u < 0 || u >= n_units)
      throw Error("E_PREDICT", "pixel " + std::to_string(i) + " is not mapped to a unit");
    out.lambda[u] += pixel_lambda[i];
  }
  out.p.resize(n_units);
  for (int u = 0; u < n_units; ++u) out.p[u] = event_probability(out.lambda[u]);
  return out;
}

PredictionSurface make_surface(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                               double cell_area, const std::vector<int>& unit_of_pixel,
                               int n_units, IntensityEstimator estimator) {
  PredictionSurface out;
  out.estimator = estimator;
  const Eigen::VectorXd lambda = pixel_intensity(mean, variance, cell_area, estimator);
  out.pixel_lambda.assign(lambda.data(), lambda.data() + lambda.size());
  out.pixel_p.resize(out.pixel_lambda.size());
  for (std::size_t i = 0; i < out.pixel_lambda.size(); ++i)
    out.pixel_p[i] = event_probability(out.pixel_lambda[i]);
  auto agg = aggregate(out.pixel_lambda, unit_of_pixel, n_units);
  out.unit_lambda = std::move(agg.lambda);
  out.unit_p = std::move(agg.p);
  return out;
}

}  // namespace coxmap
