#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coxmap/model.hpp"
#include "coxmap/rng.hpp"
#include "oracles.hpp"

using namespace coxmap;

TEST_CASE("standardize basics") {
  auto st = standardize({1.0, 2.0, 3.0});
  CHECK(st.mean == doctest::Approx(2.0));
  CHECK(st.sd == doctest::Approx(1.0));
  CHECK(st.values[0] == doctest::Approx(-1.0));
  CHECK(st.values[1] == doctest::Approx(0.0));
  CHECK(st.values[2] == doctest::Approx(1.0));
}

TEST_CASE("standardize is idempotent on standardized input") {
  CounterRng rng(3);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.normal() * 3.0 + 1.0;
  auto st = standardize(v);
  auto again = standardize(st.values);
  CHECK(std::fabs(again.mean) < 1e-12);
  CHECK(again.sd == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(again.values[i] == doctest::Approx(st.values[i]).epsilon(1e-12));
}

TEST_CASE("standardized output has mean 0 and sd 1; constants round-trip") {
  CounterRng rng(5);
  std::vector<double> v(200);
  for (auto& x : v) x = rng.normal() * 7.0 - 4.0;
  auto st = standardize(v);
  double mean = 0.0;
  for (double x : st.values) mean += x;
  mean /= st.values.size();
  double ss = 0.0;
  for (double x : st.values) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (st.values.size() - 1));
  CHECK(std::fabs(mean) < 1e-10);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-10));
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(st.values[i] * st.sd + st.mean == doctest::Approx(v[i]).epsilon(1e-10));
}

TEST_CASE("constant covariate is rejected") {
  CHECK_THROWS_WITH_AS(standardize({2.0, 2.0, 2.0}), doctest::Contains("zero variance"), Error);
}

TEST_CASE("bin_covariate basics") {
  std::vector<double> values = {0.0, 0.3, 0.99, 1.0};
  auto binned = bin_covariate(values, 4);
  CHECK(binned.bins[0] == 0);
  CHECK(binned.bins[1] == 1);
  CHECK(binned.bins[2] == 3);
  CHECK(binned.bins[3] == 3);  // maximum maps to the last bin
  CHECK(binned.edges.front() == doctest::Approx(0.0));
  CHECK(binned.edges.back() == doctest::Approx(1.0));
}

TEST_CASE("bin membership re-check over a random sample") {
  CounterRng rng(7);
  std::vector<double> values(500);
  for (auto& v : values) v = rng.uniform() * 10.0 - 5.0;
  auto binned = bin_covariate(values, 20);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int b = binned.bins[i];
    CHECK(values[i] >= binned.edges[b] - 1e-12);
    CHECK(values[i] <= binned.edges[b + 1] + 1e-12);
  }
}

TEST_CASE("degenerate binning range is rejected") {
  CHECK_THROWS_AS(bin_covariate({1.0, 1.0}, 4), Error);
  CHECK_THROWS_AS(bin_covariate({1.0, 2.0}, 1), Error);
}

TEST_CASE("intercept-only assembly") {
  auto table = oracles::make_table(std::vector<int>(10, 0), std::vector<int>(10, 0), {}, {});
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false}};
  auto model = assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
  CHECK(model.latent_dim == 1);
  CHECK(model.prior_mean[0] == doctest::Approx(-2.0));
  CHECK(model.prior_fixed.to_dense()(0, 0) == doctest::Approx(1.0));
  CHECK(model.constraints.empty());
  CHECK(model.entries_per_pixel == 1);
}

TEST_CASE("mod1 layout arithmetic") {
  // 3 continuous + 1 cyclic (16 classes) + 1 categorical (5 levels)
  std::vector<CovariateRole> roles = {
      {"z1", CovariateRole::Kind::Continuous, 0, false},
      {"z2", CovariateRole::Kind::Continuous, 0, false},
      {"z3", CovariateRole::Kind::Continuous, 0, false},
      {"aspect", CovariateRole::Kind::Cyclic, 16, true},
      {"litho", CovariateRole::Kind::Categorical, 5, false},
  };
  auto effects = preset_effects(ModelPreset::Mod1, roles, 0);
  CounterRng rng(9);
  std::vector<std::vector<double>> cols(5);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 60; ++i) cols[j].push_back(rng.normal());
  for (int i = 0; i < 60; ++i) cols[4].push_back(static_cast<double>(i % 5));
  auto table = oracles::make_table(std::vector<int>(60, 0), std::vector<int>(60, 0),
                                   {"z1", "z2", "z3", "aspect", "litho"}, cols);
  auto model = assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
  CHECK(model.latent_dim == 1 + 3 + 16 + 5);
  CHECK(model.inc_index.size() == 60u * model.entries_per_pixel);
  CHECK(model.entries_per_pixel == 1 + 3 + 1 + 1);
}

TEST_CASE("mod3 constraint bookkeeping on a toy graph") {
  auto graph = AdjacencyGraph::tile_grid(2, 2);
  std::vector<CovariateRole> roles = {
      {"z1", CovariateRole::Kind::Continuous, 0, true},
      {"litho", CovariateRole::Kind::Categorical, 3, false},
  };
  auto effects = preset_effects(ModelPreset::Mod3, roles, graph.n_units());
  CounterRng rng(13);
  std::vector<std::vector<double>> cols(2);
  for (int i = 0; i < 80; ++i) {
    cols[0].push_back(rng.normal());
    cols[1].push_back(static_cast<double>(i % 3));
  }
  std::vector<int> units(80);
  for (int i = 0; i < 80; ++i) units[i] = i % 4;
  auto table =
      oracles::make_table(std::vector<int>(80, 0), units, {"z1", "litho"}, cols);
  auto model = assemble_model(table, graph, effects, HyperSpec::default_car());
  // one sum-to-zero row each: categorical, non-cyclic RW1 (z1), CAR
  CHECK(model.constraints.count() == 3);
  CHECK(model.has_estimated_block());
  CHECK(model.scaled_prior_rank == 3);  // 4 units, connected
  // every constrained latent index appears in exactly one constraint row
  for (int r = 0; r < model.constraints.count(); ++r)
    CHECK(model.constraints.rows.row(r).sum() > 0.0);
}

TEST_CASE("four presets are constructible from the same table") {
  auto graph = AdjacencyGraph::tile_grid(2, 2);
  std::vector<CovariateRole> roles = {
      {"z1", CovariateRole::Kind::Continuous, 0, true},
      {"z2", CovariateRole::Kind::Continuous, 0, false},
      {"aspect", CovariateRole::Kind::Cyclic, 8, true},
  };
  CounterRng rng(15);
  std::vector<std::vector<double>> cols(3);
  std::vector<int> units(120);
  for (int i = 0; i < 120; ++i) {
    cols[0].push_back(rng.normal());
    cols[1].push_back(rng.normal());
    cols[2].push_back(rng.uniform() * 360.0);
    units[i] = i % 4;
  }
  auto table = oracles::make_table(std::vector<int>(120, 1), units,
                                   {"z1", "z2", "aspect"}, cols);
  for (auto preset : {ModelPreset::Mod1, ModelPreset::Mod2, ModelPreset::Mod2b,
                      ModelPreset::Mod3}) {
    auto effects = preset_effects(preset, roles, graph.n_units());
    auto model = assemble_model(table, graph, effects,
                                preset == ModelPreset::Mod3 ? HyperSpec::default_car()
                                                            : HyperSpec::none());
    CHECK(model.latent_dim > 0);
    const bool has_car = preset == ModelPreset::Mod3;
    CHECK(model.has_estimated_block() == has_car);
  }
  // layouts differ only through the effect lists
  auto mod1 = assemble_model(table, graph, preset_effects(ModelPreset::Mod1, roles, 4),
                             HyperSpec::none());
  auto mod2 = assemble_model(table, graph, preset_effects(ModelPreset::Mod2, roles, 4),
                             HyperSpec::none());
  CHECK(mod2.latent_dim == mod1.latent_dim + 2 * 20);  // two extra RW1 blocks
}

TEST_CASE("linear predictor reconstruction against direct evaluation") {
  auto graph = AdjacencyGraph::tile_grid(2, 2);
  std::vector<CovariateRole> roles = {
      {"z1", CovariateRole::Kind::Continuous, 0, true},
      {"z2", CovariateRole::Kind::Continuous, 0, false},
  };
  auto effects = preset_effects(ModelPreset::Mod3, roles, graph.n_units());
  CounterRng rng(19);
  std::vector<std::vector<double>> cols(2);
  std::vector<int> units(100);
  for (int i = 0; i < 100; ++i) {
    cols[0].push_back(rng.normal() * 2.0 + 1.0);
    cols[1].push_back(rng.normal());
    units[i] = i % 4;
  }
  auto table = oracles::make_table(std::vector<int>(100, 0), units, {"z1", "z2"}, cols);
  auto model = assemble_model(table, graph, effects, HyperSpec::default_car());

  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd eta(model.latent_dim);
    for (int i = 0; i < model.latent_dim; ++i) eta[i] = rng.normal();
    const Eigen::VectorXd through_map = model.linear_predictor(eta);
    // direct evaluation of the additive form per pixel
    for (int i = 0; i < 100; ++i) {
      double direct = 0.0;
      for (const auto& blk : model.blocks) {
        switch (blk.spec.kind) {
          case EffectKind::Intercept:
            direct += eta[blk.offset];
            break;
          case EffectKind::Linear: {
            const int col = table.covariate_index(blk.spec.name);
            direct += eta[blk.offset] *
                      (table.covariates[col][i] - blk.standardize_mean) / blk.standardize_sd;
            break;
          }
          case EffectKind::Rw1:
          case EffectKind::Rw1Cyclic: {
            const int col = table.covariate_index(blk.spec.name);
            const double z =
                (table.covariates[col][i] - blk.standardize_mean) / blk.standardize_sd;
            direct += eta[blk.offset + bin_of_value(z, blk.bin_edges)];
            break;
          }
          case EffectKind::Categorical: {
            const int col = table.covariate_index(blk.spec.name);
            direct += eta[blk.offset + static_cast<int>(table.covariates[col][i])];
            break;
          }
          case EffectKind::CarSpatial:
            direct += eta[blk.offset + units[i]];
            break;
        }
      }
      CHECK(through_map[i] == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("prediction-time clamping and unknown units") {
  std::vector<CovariateRole> roles = {{"z1", CovariateRole::Kind::Continuous, 0, true}};
  auto effects = preset_effects(ModelPreset::Mod2b, roles, 0);
  CounterRng rng(21);
  std::vector<std::vector<double>> cols(1);
  for (int i = 0; i < 50; ++i) cols[0].push_back(rng.normal());
  auto table = oracles::make_table(std::vector<int>(50, 0), std::vector<int>(50, 0), {"z1"},
                                   cols);
  auto model = assemble_model(table, AdjacencyGraph(), effects, HyperSpec::none());
  const auto* rw = model.block_by_name("z1");
  REQUIRE(rw != nullptr);

  // a value far outside the training range clamps to an end bin
  // (one raw value per block: intercept, linear z1, rw1 z1)
  auto row_low = model.incidence_row({0.0, -1e6, -1e6}, 0);
  auto row_high = model.incidence_row({0.0, 1e6, 1e6}, 0);
  int rw_block = -1;
  for (std::size_t b = 0; b < model.blocks.size(); ++b)
    if (model.blocks[b].spec.kind == EffectKind::Rw1) rw_block = static_cast<int>(b);
  REQUIRE(rw_block >= 0);
  const auto& blk = model.blocks[rw_block];
  CHECK(row_low[rw_block].first == blk.offset);
  CHECK(row_high[rw_block].first == blk.offset + blk.length - 1);
}

TEST_CASE("pixel referencing unknown unit is rejected") {
  auto graph = AdjacencyGraph::tile_grid(2, 1);
  std::vector<EffectSpec> effects = {
      {"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false},
      {"su_spatial", EffectKind::CarSpatial, 2, 0.0, 1.0, true, true}};
  std::vector<int> units = {0, 1, 5};  // 5 is out of range
  auto table = oracles::make_table({0, 0, 0}, units, {}, {});
  CHECK_THROWS_WITH_AS(assemble_model(table, graph, effects, HyperSpec::default_car()),
                       doctest::Contains("unknown unit"), Error);
}

TEST_CASE("exactly one intercept is enforced") {
  auto table = oracles::make_table({0, 0}, {0, 0}, {}, {});
  std::vector<EffectSpec> none = {};
  CHECK_THROWS_AS(assemble_model(table, AdjacencyGraph(), none, HyperSpec::none()), Error);
  std::vector<EffectSpec> two = {
      {"intercept", EffectKind::Intercept, 0, -2.0, 1.0, false, false},
      {"intercept2", EffectKind::Intercept, 0, 0.0, 1.0, false, false}};
  CHECK_THROWS_AS(assemble_model(table, AdjacencyGraph(), two, HyperSpec::none()), Error);
}

TEST_CASE("hyperprior densities") {
  HyperPrior lognormal;  // median 10, sd_log 1.5
  const double at_median = lognormal.log_density(10.0);
  CHECK(at_median == doctest::Approx(-std::log(1.5) - 0.918938533204672742 -
                                     std::log(10.0)));
  // tabulated curve interpolates linearly in log tau
  HyperPrior table;
  table.kind = HyperPrior::Kind::Table;
  table.table_log_tau = {0.0, 2.0};
  table.table_log_density = {-1.0, -3.0};
  CHECK(table.log_density(std::exp(1.0)) == doctest::Approx(-2.0).epsilon(1e-12));
}
