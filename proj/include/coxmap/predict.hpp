#pragma once

#include <Eigen/Core>
#include <vector>

#include "coxmap/laplace.hpp"

namespace coxmap {

enum class IntensityEstimator { PlugInMean, LognormalCorrected };

IntensityEstimator estimator_from_name(const std::string& name);
const char* estimator_name(IntensityEstimator estimator);

/// Per-pixel expected counts from the fitted linear-predictor moments:
/// plug-in C exp(mu_i), lognormal-corrected C exp(mu_i + sigma_i^2 / 2).
Eigen::VectorXd pixel_intensity(const FitResult& fit, IntensityEstimator estimator);
Eigen::VectorXd pixel_intensity(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                                double cell_area, IntensityEstimator estimator);

/// pr{N = k} under Poisson(lambda), evaluated in log space.
double count_probability(double lambda, int k);
/// pr{N > k} = 1 - sum_{j <= k} pr{N = j}.
double exceedance_probability(double lambda, int k);
/// pr{N >= 1} = 1 - exp(-lambda).
double event_probability(double lambda);

struct UnitAggregate {
  std::vector<double> lambda;  // sum of member-pixel intensities
  std::vector<double> p;       // 1 - exp(-lambda)
};

/// Aggregates pixel intensities over an areal partition.
UnitAggregate aggregate(const std::vector<double>& pixel_lambda,
                        const std::vector<int>& unit_of_pixel, int n_units);

struct PredictionSurface {
  IntensityEstimator estimator = IntensityEstimator::LognormalCorrected;
  std::vector<double> pixel_lambda, pixel_p;
  std::vector<double> unit_lambda, unit_p;
};

PredictionSurface make_surface(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                               double cell_area, const std::vector<int>& unit_of_pixel,
                               int n_units, IntensityEstimator estimator);

}  // namespace coxmap
