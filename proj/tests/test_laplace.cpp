#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coxmap/laplace.hpp"
#include "coxmap/rng.hpp"
#include "coxmap/sim.hpp"
#include "oracles.hpp"

using namespace coxmap;

namespace {

ModelStructure intercept_only(const std::vector<int>& counts, double cell_area,
                              double prior_mean = -2.0, double prior_precision = 1.0,
                              bool estimated = false) {
  auto table = oracles::make_table(counts, std::vector<int>(counts.size(), 0), {}, {},
                                   cell_area);
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, prior_mean, prior_precision, false, estimated}};
  return assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
}

// small mod2b-style layout: intercept, 2 linear, rw1, cyclic rw1, categorical
ModelStructure mod2b_toy(CounterRng& rng, std::size_t n_pixels, std::vector<int>* counts_out) {
  std::vector<std::vector<double>> cols(4);
  std::vector<int> counts(n_pixels);
  for (std::size_t i = 0; i < n_pixels; ++i) {
    cols[0].push_back(rng.normal());
    cols[1].push_back(rng.normal() * 2.0 + 0.5);
    cols[2].push_back(rng.uniform() * 360.0);
    cols[3].push_back(static_cast<double>(rng.next_u64() % 3));
    counts[i] = static_cast<int>(rng.poisson(1.2));
  }
  auto table = oracles::make_table(counts, std::vector<int>(n_pixels, 0),
                                   {"z1", "z2", "aspect", "litho"}, cols, 1.0);
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false},
      {"z1", EffectKind::Linear, 0, 0.0, 2.0, false, false},
      {"z2", EffectKind::Linear, 0, 0.0, 2.0, false, false},
      {"z1", EffectKind::Rw1, 6, 0.0, 25.0, true, false},
      {"aspect", EffectKind::Rw1Cyclic, 5, 0.0, 25.0, true, false},
      {"litho", EffectKind::Categorical, 3, 0.0, 100.0, true, false},
  };
  if (counts_out != nullptr) *counts_out = counts;
  return assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
}

}  // namespace

TEST_CASE("joint value and gradient at the prior mean, one empty pixel") {
  auto model = intercept_only({0}, 1.0);
  Eigen::VectorXd eta(1);
  eta << -2.0;
  auto eval = joint_log_posterior(model, eta, 1.0);
  CHECK(eval.value == doctest::Approx(-std::exp(-2.0)).epsilon(1e-14));
  CHECK(eval.gradient[0] == doctest::Approx(-std::exp(-2.0)).epsilon(1e-14));
}

TEST_CASE("curvature diagonal of the intercept-only model") {
  auto model = intercept_only({1, 0, 2, 1}, 2.5);
  Eigen::VectorXd eta(1);
  eta << -0.7;
  auto eval = joint_log_posterior(model, eta, 1.0);
  const double expected = 4.0 * 2.5 * std::exp(-0.7) + 1.0;
  CHECK(eval.curvature.to_dense()(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences on mod2b toys") {
  CounterRng rng(101);
  for (int rep = 0; rep < 3; ++rep) {
    auto model = mod2b_toy(rng, 40, nullptr);
    Eigen::VectorXd eta(model.latent_dim);
    for (int i = 0; i < model.latent_dim; ++i) eta[i] = 0.3 * rng.normal();
    auto eval = joint_log_posterior(model, eta, 1.0);
    const double h = 1e-5;
    for (int i = 0; i < model.latent_dim; ++i) {
      Eigen::VectorXd up = eta, down = eta;
      up[i] += h;
      down[i] -= h;
      const double fd = (joint_log_posterior(model, up, 1.0).value -
                         joint_log_posterior(model, down, 1.0).value) /
                        (2.0 * h);
      CHECK(std::fabs(eval.gradient[i] - fd) <= 1e-6 * std::max(1.0, std::fabs(fd)));
    }
  }
}

TEST_CASE("diverging linear predictor is reported") {
  auto model = intercept_only({1}, 1.0);
  Eigen::VectorXd eta(1);
  eta << 35.0;
  CHECK_THROWS_WITH_AS(joint_log_posterior(model, eta, 1.0), doctest::Contains("diverging"),
                       Error);
}

TEST_CASE("find_mode solves the scalar stationarity equation") {
  auto model = intercept_only({1}, 1.0);
  auto mode = find_mode(model, 1.0);
  // stationarity of 1*b - e^b - (b+2)^2/2: 1 - e^b - b - 2 = 0, i.e. e^b + b + 1 = 0
  const double root = oracles::bisect([](double b) { return std::exp(b) + b + 1.0; }, -2.0, 0.0);
  CHECK(root == doctest::Approx(-1.2785).epsilon(1e-3));
  CHECK(mode.mode[0] == doctest::Approx(root).epsilon(1e-8));
  CHECK(mode.n_newton_iters <= 10);
}

TEST_CASE("empty likelihood keeps the constrained prior mean exactly") {
  auto table = oracles::make_table({}, {}, {"litho"}, {{}}, 1.0);
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false},
      {"litho", EffectKind::Categorical, 3, 0.0, 100.0, true, false}};
  auto model = assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
  auto mode = find_mode(model, 1.0);
  CHECK(mode.mode[0] == -2.0);
  CHECK(mode.mode[1] == 0.0);
  CHECK(mode.mode[2] == 0.0);
  CHECK(mode.mode[3] == 0.0);
  CHECK(mode.n_newton_iters == 0);
}

TEST_CASE("GLM degeneration: flat priors reproduce the IRLS maximum likelihood") {
  CounterRng rng(103);
  const std::size_t n = 300;
  std::vector<std::vector<double>> cols(2);
  std::vector<int> counts(n);
  Eigen::MatrixXd design(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    cols[0].push_back(z1);
    cols[1].push_back(z2);
    const double x = -0.5 + 0.8 * z1 - 0.4 * z2;
    counts[i] = static_cast<int>(rng.stream(i).poisson(std::exp(x)));
  }
  auto table = oracles::make_table(counts, std::vector<int>(n, 0), {"z1", "z2"}, cols, 1.0);
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, 0.0, 1e-6, false, false},
      {"z1", EffectKind::Linear, 0, 0.0, 1e-6, false, false},
      {"z2", EffectKind::Linear, 0, 0.0, 1e-6, false, false}};
  auto model = assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
  auto mode = find_mode(model, 1.0);

  // the model standardizes covariates; hand the oracle the same design
  const auto* b1 = model.block_by_name("z1");
  const auto* b2 = model.block_by_name("z2");
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = (cols[0][i] - b1->standardize_mean) / b1->standardize_sd;
    design(i, 2) = (cols[1][i] - b2->standardize_mean) / b2->standardize_sd;
  }
  const Eigen::VectorXd mle = oracles::irls_poisson(design, counts, 0.0);
  for (int j = 0; j < 3; ++j)
    CHECK(mode.mode[j] == doctest::Approx(mle[j]).epsilon(1e-4));
}

TEST_CASE("mode optimality along random constrained directions") {
  CounterRng rng(107);
  auto model = mod2b_toy(rng, 60, nullptr);
  auto mode = find_mode(model, 1.0);
  const double v0 = joint_log_posterior(model, mode.mode, 1.0).value;
  const Eigen::MatrixXd& a = model.constraints.rows;
  const Eigen::MatrixXd aat = a * a.transpose();
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd dir(model.latent_dim);
    for (int i = 0; i < model.latent_dim; ++i) dir[i] = rng.normal();
    dir -= a.transpose() * aat.ldlt().solve(a * dir);  // stay on the constraint manifold
    dir.normalize();
    CHECK(joint_log_posterior(model, mode.mode + 1e-3 * dir, 1.0).value < v0);
    CHECK(joint_log_posterior(model, mode.mode - 1e-3 * dir, 1.0).value < v0);
  }
}

TEST_CASE("Newton iterations are monotone in the accepted values") {
  CounterRng rng(109);
  std::vector<int> counts;
  auto model = mod2b_toy(rng, 80, &counts);
  PoissonLikelihood lik(counts, model.cell_area);
  std::vector<double> accepted;
  find_mode_with(model, lik, 1.0, nullptr, &accepted);
  REQUIRE(accepted.size() >= 2);
  for (std::size_t i = 1; i < accepted.size(); ++i) CHECK(accepted[i] >= accepted[i - 1]);
}

TEST_CASE("Gaussian surrogate: one Newton step and exact closed-form marginal") {
  CounterRng rng(113);
  const std::size_t n = 25;
  std::vector<int> zero_counts(n, 0);
  auto model = intercept_only(zero_counts, 1.0, -2.0, 1.0);
  std::vector<double> y(n);
  double y_sum = 0.0;
  for (auto& v : y) {
    v = 0.4 + rng.normal();
    y_sum += v;
  }
  const double prec = 2.3;
  GaussianLikelihood lik(y, prec);

  auto mode = find_mode_with(model, lik, 1.0);
  const double q_star = 1.0 + prec * n;
  const double m_star = (1.0 * (-2.0) + prec * y_sum) / q_star;
  CHECK(mode.n_newton_iters == 1);
  CHECK(mode.mode[0] == doctest::Approx(m_star).epsilon(1e-10));

  const double lhp = log_hyper_posterior_with(model, lik, HyperSpec::none(), 1.0);
  double value_at_mode = -0.5 * (m_star + 2.0) * (m_star + 2.0);
  for (std::size_t i = 0; i < n; ++i)
    value_at_mode += -0.5 * prec * (y[i] - m_star) * (y[i] - m_star);
  CHECK(lhp == doctest::Approx(value_at_mode - 0.5 * std::log(q_star)).epsilon(1e-8));
}

TEST_CASE("log_hyper_posterior without a theta block tracks the hyperprior") {
  auto model = intercept_only({1, 2, 0, 1}, 1.0);
  HyperSpec hyper = HyperSpec::default_car();
  const double base = log_hyper_posterior(model, hyper, 1.0);
  for (double theta : {0.3, 2.0, 11.0}) {
    const double diff = log_hyper_posterior(model, hyper, theta) - base;
    const double prior_diff = hyper.estimated->prior.log_density(theta) -
                              hyper.estimated->prior.log_density(1.0);
    CHECK(diff == doctest::Approx(prior_diff).epsilon(1e-10));
  }
}

TEST_CASE("log_hyper_posterior finite over a wide grid") {
  CounterRng rng(127);
  std::vector<int> counts(30);
  for (auto& c : counts) c = static_cast<int>(rng.poisson(1.0));
  auto model = intercept_only(counts, 1.0, -2.0, 1.0, true);  // theta scales the intercept
  HyperSpec hyper = HyperSpec::default_car();
  for (double lt : {-2.0, -0.5, 1.0, 2.5, 4.0}) {
    const double lp = log_hyper_posterior(model, hyper, std::exp(lt));
    CHECK(std::isfinite(lp));
  }
}

TEST_CASE("hyperparameter marginal differences match 1-D quadrature") {
  CounterRng rng(131);
  std::vector<int> counts(60);
  for (std::size_t i = 0; i < counts.size(); ++i)
    counts[i] = static_cast<int>(rng.stream(i).poisson(1.4));
  auto model = intercept_only(counts, 1.0, -1.0, 1.0, true);
  HyperSpec hyper = HyperSpec::default_car();

  auto exact_lp = [&](double theta) {
    auto quad = quadrature_oracle(model, theta);
    return hyper.estimated->prior.log_density(theta) + 0.5 * std::log(theta) +
           quad.log_normalizer;
  };
  const double t1 = 0.5, t2 = 8.0;
  const double laplace_diff =
      log_hyper_posterior(model, hyper, t1) - log_hyper_posterior(model, hyper, t2);
  const double exact_diff = exact_lp(t1) - exact_lp(t2);
  CHECK(std::fabs(laplace_diff - exact_diff) <= 0.02 * std::fabs(exact_diff));
}

TEST_CASE("fit without an estimated hyperparameter degenerates to one grid point") {
  CounterRng rng(137);
  std::vector<int> counts;
  auto model = mod2b_toy(rng, 50, &counts);
  auto result = fit(model, HyperSpec::none());
  CHECK(result.grid.size() == 1);
  CHECK(result.grid[0].weight == 1.0);

  // with one grid point the mixture sd equals the Gaussian-approximation sd
  auto mode = find_mode(model, result.grid[0].theta);
  auto pinv = mode.factor->partial_inverse();
  ConstraintSolve cons(*mode.factor, model.constraints);
  for (int i = 0; i < model.latent_dim; ++i) {
    const double gaussian_sd = std::sqrt(pinv.diagonal(i) - cons.variance_reduction(i));
    CHECK(result.component_sd[i] == doctest::Approx(gaussian_sd).epsilon(1e-12));
  }
}

TEST_CASE("grid weights are normalized and the posterior integrates sensibly") {
  CounterRng rng(139);
  std::vector<int> counts(40);
  for (auto& c : counts) c = static_cast<int>(rng.poisson(2.0));
  auto model = intercept_only(counts, 1.0, -1.0, 1.0, true);
  auto result = fit(model, HyperSpec::default_car());
  CHECK(result.grid.size() == 15);
  double total = 0.0;
  for (const auto& g : result.grid) {
    CHECK(g.weight >= 0.0);
    total += g.weight;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hyper_mean(result) > 0.0);
  auto interval = hyper_interval(result, 0.95);
  CHECK(interval.first < interval.second);
}

TEST_CASE("laplace posterior matches the quadrature oracle (intercept-only)") {
  CounterRng rng(149);
  const std::size_t n = 200;
  std::vector<int> counts(n);
  for (std::size_t i = 0; i < n; ++i) counts[i] = static_cast<int>(rng.stream(i).poisson(2.0));
  auto model = intercept_only(counts, 1.0, 0.0, 1.0);
  auto result = fit(model, HyperSpec::none());
  auto quad = quadrature_oracle(model, 1.0);
  CHECK(std::fabs(result.component_mean[0] - quad.mean[0]) < 0.01);
  CHECK(std::fabs(result.component_sd[0] - quad.sd[0]) <= 0.05 * quad.sd[0]);
}

TEST_CASE("pixel moments from retained grid state match the in-sample path") {
  CounterRng rng(151);
  std::vector<int> counts;
  auto model = mod2b_toy(rng, 50, &counts);
  FitOptions options;
  options.keep_grid_state = true;
  auto result = fit(model, HyperSpec::none(), options);

  std::vector<std::vector<std::pair<int, double>>> rows;
  for (std::size_t i = 0; i < model.n_pixels; ++i) {
    std::vector<std::pair<int, double>> row;
    for (int t = 0; t < model.entries_per_pixel; ++t)
      row.emplace_back(model.inc_index[i * model.entries_per_pixel + t],
                       model.inc_weight[i * model.entries_per_pixel + t]);
    rows.push_back(std::move(row));
  }
  Eigen::VectorXd mean, variance;
  linear_predictor_moments(result, rows, mean, variance);
  for (std::size_t i = 0; i < model.n_pixels; ++i) {
    CHECK(mean[i] == doctest::Approx(result.pixel_mean[i]).epsilon(1e-9));
    CHECK(variance[i] == doctest::Approx(result.pixel_var[i]).epsilon(1e-7));
  }
}

TEST_CASE("pixel variances agree with a dense oracle on a mod3-style model") {
  auto graph = AdjacencyGraph::tile_grid(3, 3);
  CounterRng rng(163);
  const std::size_t n = 180;
  std::vector<std::vector<double>> cols(1);
  std::vector<int> units(n), counts(n);
  for (std::size_t i = 0; i < n; ++i) {
    cols[0].push_back(rng.normal());
    units[i] = static_cast<int>(i % 9);
    counts[i] = static_cast<int>(rng.poisson(1.0));
  }
  auto table = oracles::make_table(counts, units, {"z1"}, cols, 10.0);
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false},
      {"z1", EffectKind::Linear, 0, 0.0, 2.0, false, false},
      {"z1", EffectKind::Rw1, 8, 0.0, 25.0, true, false},
      {"su_spatial", EffectKind::CarSpatial, 9, 0.0, 1.5, true, false}};
  auto model = assemble_model(table, graph, effects, HyperSpec::none());
  auto result = fit(model, HyperSpec::none());
  auto mode = find_mode(model, 1.0);

  // dense conditional covariance under the constraints
  const Eigen::MatrixXd qd = mode.curvature.to_dense();
  const Eigen::MatrixXd sigma = qd.inverse();
  const Eigen::MatrixXd& a = model.constraints.rows;
  const Eigen::MatrixXd sat = sigma * a.transpose();
  const Eigen::MatrixXd correction = sat * (a * sat).ldlt().solve(sat.transpose());
  const Eigen::MatrixXd sigma_c = sigma - correction;

  for (int i = 0; i < model.latent_dim; ++i)
    CHECK(result.component_sd[i] ==
          doctest::Approx(std::sqrt(sigma_c(i, i))).epsilon(1e-7));
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd ai = Eigen::VectorXd::Zero(model.latent_dim);
    for (int t = 0; t < model.entries_per_pixel; ++t)
      ai[model.inc_index[i * model.entries_per_pixel + t]] +=
          model.inc_weight[i * model.entries_per_pixel + t];
    const double dense_var = ai.dot(sigma_c * ai);
    CHECK(result.pixel_var[i] == doctest::Approx(dense_var).epsilon(1e-7));
  }
}
