#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coxmap/cli.hpp"
#include "coxmap/io.hpp"
#include "coxmap/rng.hpp"

using namespace coxmap;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::path("cli_test_work") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string sim_config_json() {
  return R"({
    "cell_area": 225.0,
    "seed": 7,
    "simulate": {"nx": 20, "ny": 20, "tile": 5, "theta": 1.0,
                 "fixed_values": {"intercept": -7.0}}
  })";
}

RunConfig base_config(const std::string& subcommand, const fs::path& out) {
  RunConfig c;
  c.subcommand = subcommand;
  c.out_dir = out.string();
  c.threads = 2;
  c.seed = 7;
  c.has_seed = true;
  return c;
}

}  // namespace

TEST_CASE("load_pixels parses a well-formed file") {
  auto dir = fresh_dir("load_ok");
  write_file(dir / "p.csv",
             "pixel_id,x,y,count,unit_id,z1\n"
             "0,0,0,1,0,0.5\n"
             "1,1,0,0,0,-0.25\n"
             "2,0,1,2,1,0.125\n");
  auto t = load_pixels((dir / "p.csv").string());
  CHECK(t.n_pixels() == 3);
  CHECK(t.covariate_names == std::vector<std::string>{"z1"});
  CHECK(t.count[2] == 2);
  CHECK(t.unit_id[2] == 1);
  CHECK(t.covariates[0][1] == -0.25);
}

TEST_CASE("load_pixels error paths carry row context") {
  auto dir = fresh_dir("load_bad");
  write_file(dir / "dup.csv", "pixel_id,x,y,count,unit_id\n5,0,0,1,0\n5,1,0,0,0\n");
  CHECK_THROWS_WITH_AS(load_pixels((dir / "dup.csv").string()),
                       doctest::Contains("duplicate pixel_id 5"), Error);

  write_file(dir / "neg.csv", "pixel_id,x,y,count,unit_id\n0,0,0,-1,0\n");
  CHECK_THROWS_WITH_AS(load_pixels((dir / "neg.csv").string()),
                       doctest::Contains("row 2"), Error);

  write_file(dir / "head.csv", "pixel_id,x,y,unit_id\n");
  CHECK_THROWS_AS(load_pixels((dir / "head.csv").string()), Error);

  write_file(dir / "text.csv", "pixel_id,x,y,count,unit_id\n0,0,zero,1,0\n");
  CHECK_THROWS_AS(load_pixels((dir / "text.csv").string()), Error);
}

TEST_CASE("450k rows load fast and round-trip bit-identically") {
  auto dir = fresh_dir("big");
  const std::size_t n = 450000;
  {
    std::ofstream out(dir / "big.csv", std::ios::binary);
    out << "pixel_id,x,y,count,unit_id,z1,z2,z3\n";
    CounterRng rng(1);
    char buf[160];
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%d,%d,%.10g,%.10g,%.10g\n", i, i % 670,
                    i / 670, static_cast<int>(rng.next_u64() % 3), static_cast<int>(i % 3848),
                    rng.normal(), rng.normal(), rng.uniform());
      out << buf;
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto table = load_pixels((dir / "big.csv").string());
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(table.n_pixels() == n);
  CHECK(elapsed < 10.0);

  save_pixels((dir / "b.csv").string(), table);
  auto reloaded = load_pixels((dir / "b.csv").string());
  save_pixels((dir / "c.csv").string(), reloaded);
  CHECK(slurp(dir / "b.csv") == slurp(dir / "c.csv"));
  fs::remove_all(dir);
}

TEST_CASE("simulate then fit mod1 produces every declared file") {
  auto sim_dir = fresh_dir("sim1");
  write_file(sim_dir / "config.json", sim_config_json());
  RunConfig sim = base_config("simulate", sim_dir / "out");
  sim.config_path = (sim_dir / "config.json").string();
  run(sim);
  for (const char* name : {"pixels.csv", "adjacency.csv", "truth.json", "manifest.json"})
    CHECK(fs::exists(sim_dir / "out" / name));

  RunConfig fit_cfg = base_config("fit", sim_dir / "fit_out");
  fit_cfg.pixels_path = (sim_dir / "out" / "pixels.csv").string();
  fit_cfg.adjacency_path = (sim_dir / "out" / "adjacency.csv").string();
  fit_cfg.preset = "mod1";
  run(fit_cfg);
  for (const char* name :
       {"fit.json", "hyperparameter.csv", "fixed_effects.csv", "spatial_effect.csv",
        "intensity_pixels.csv", "intensity_units.csv", "roc.csv", "auc_summary.csv",
        "manifest.json"})
    CHECK(fs::exists(sim_dir / "fit_out" / name));

  // mod1 fixed_effects: intercept + 3 linear rows
  std::istringstream fixed(slurp(sim_dir / "fit_out" / "fixed_effects.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(fixed, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("mod3 fit emits one spatial row per unit and predict replays surfaces") {
  auto dir = fresh_dir("mod3");
  write_file(dir / "config.json", sim_config_json());
  RunConfig sim = base_config("simulate", dir / "out");
  sim.config_path = (dir / "config.json").string();
  run(sim);

  RunConfig fit_cfg = base_config("fit", dir / "fit_out");
  fit_cfg.pixels_path = (dir / "out" / "pixels.csv").string();
  fit_cfg.adjacency_path = (dir / "out" / "adjacency.csv").string();
  fit_cfg.preset = "mod3";
  run(fit_cfg);

  std::istringstream spatial(slurp(dir / "fit_out" / "spatial_effect.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(spatial, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 16);

  // hyperparameter grid has 15 points for the estimated precision
  std::istringstream hyper(slurp(dir / "fit_out" / "hyperparameter.csv"));
  rows = -1;
  while (std::getline(hyper, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 15);

  RunConfig predict_cfg = base_config("predict", dir / "pred_out");
  predict_cfg.fit_path = (dir / "fit_out" / "fit.json").string();
  run(predict_cfg);
  CHECK(slurp(dir / "pred_out" / "intensity_pixels.csv") ==
        slurp(dir / "fit_out" / "intensity_pixels.csv"));
  CHECK(slurp(dir / "pred_out" / "intensity_units.csv") ==
        slurp(dir / "fit_out" / "intensity_units.csv"));
}

TEST_CASE("mod2 fit writes one random-effect file per RW1 block") {
  auto dir = fresh_dir("mod2");
  write_file(dir / "config.json", sim_config_json());
  RunConfig sim = base_config("simulate", dir / "out");
  sim.config_path = (dir / "config.json").string();
  run(sim);

  RunConfig fit_cfg = base_config("fit", dir / "fit_out");
  fit_cfg.pixels_path = (dir / "out" / "pixels.csv").string();
  fit_cfg.adjacency_path = (dir / "out" / "adjacency.csv").string();
  fit_cfg.preset = "mod2";
  run(fit_cfg);
  for (const char* name :
       {"random_effect_z1.csv", "random_effect_z2.csv", "random_effect_z3.csv"}) {
    REQUIRE(fs::exists(dir / "fit_out" / name));
    std::istringstream in(slurp(dir / "fit_out" / name));
    std::string line;
    int rows = -1;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 20);  // one row per bin
  }
}

TEST_CASE("same config and seed give byte-identical outputs") {
  auto dir = fresh_dir("determinism");
  write_file(dir / "config.json", sim_config_json());
  RunConfig sim = base_config("simulate", dir / "out");
  sim.config_path = (dir / "config.json").string();
  run(sim);

  for (const char* which : {"a", "b"}) {
    RunConfig fit_cfg = base_config("fit", dir / which);
    fit_cfg.pixels_path = (dir / "out" / "pixels.csv").string();
    fit_cfg.adjacency_path = (dir / "out" / "adjacency.csv").string();
    fit_cfg.preset = "mod3";
    run(fit_cfg);
  }
  for (const char* name : {"fixed_effects.csv", "spatial_effect.csv", "hyperparameter.csv",
                           "intensity_pixels.csv", "intensity_units.csv", "roc.csv"})
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
}

TEST_CASE("existing outputs require --force") {
  auto dir = fresh_dir("force");
  write_file(dir / "config.json", sim_config_json());
  RunConfig sim = base_config("simulate", dir / "out");
  sim.config_path = (dir / "config.json").string();
  run(sim);
  CHECK_THROWS_WITH_AS(run(sim), doctest::Contains("--force"), Error);
  sim.force = true;
  run(sim);  // no throw
}

TEST_CASE("config hash tracks semantic fields only") {
  auto dir = fresh_dir("hash");
  write_file(dir / "config.json", sim_config_json());
  RunConfig sim = base_config("simulate", dir / "out");
  sim.config_path = (dir / "config.json").string();
  run(sim);

  auto manifest_hash = [&](const fs::path& p) {
    const std::string text = slurp(p / "manifest.json");
    const auto key = text.find("config_hash");
    REQUIRE(key != std::string::npos);
    const auto start = text.find(':', key) + 3;
    return text.substr(start, 16);
  };

  RunConfig a = base_config("fit", dir / "a");
  a.pixels_path = (dir / "out" / "pixels.csv").string();
  a.adjacency_path = (dir / "out" / "adjacency.csv").string();
  a.preset = "mod1";
  run(a);

  RunConfig b = a;  // different threads, same semantics
  b.out_dir = (dir / "b").string();
  b.threads = 1;
  run(b);
  CHECK(manifest_hash(dir / "a") == manifest_hash(dir / "b"));

  RunConfig c = a;  // different seed changes the hash
  c.out_dir = (dir / "c").string();
  c.seed = 8;
  run(c);
  CHECK(manifest_hash(dir / "a") != manifest_hash(dir / "c"));

  RunConfig d = a;  // different preset changes the hash
  d.out_dir = (dir / "d").string();
  d.preset = "mod2";
  run(d);
  CHECK(manifest_hash(dir / "a") != manifest_hash(dir / "d"));
}

TEST_CASE("config JSON with explicit effects and tabulated hyperprior") {
  auto dir = fresh_dir("config");
  write_file(dir / "config.json", R"({
    "cell_area": 100.0,
    "seed": 3,
    "effects": [
      {"name": "intercept", "kind": "intercept", "prior_mean": -2.0, "prior_precision": 1.0},
      {"name": "z1", "kind": "linear", "prior_precision": 2.0}
    ],
    "hyper": {"estimate": false}
  })");
  auto settings = load_config((dir / "config.json").string());
  CHECK(settings.cell_area == 100.0);
  CHECK(settings.seed == 3);
  CHECK(settings.effects.size() == 2);
  CHECK(settings.effects[0].kind == EffectKind::Intercept);
  CHECK(settings.hyper_configured);
  CHECK(!settings.hyper.estimated.has_value());

  write_file(dir / "table.json", R"({
    "hyper": {"estimate": true,
              "prior": {"type": "table", "log_tau": [-2, 0, 2], "log_density": [-4, -1, -4]}}
  })");
  auto table_settings = load_config((dir / "table.json").string());
  REQUIRE(table_settings.hyper.estimated.has_value());
  CHECK(table_settings.hyper.estimated->prior.log_density(1.0) == doctest::Approx(-1.0));
}

TEST_CASE("saved fit JSON round-trips") {
  auto dir = fresh_dir("savedfit");
  SavedFit fit;
  fit.version = kVersion;
  fit.config_hash = "abc";
  fit.seed = 12;
  fit.cell_area = 225.0;
  fit.latent_dim = 2;
  fit.n_units = 1;
  fit.blocks.push_back({"intercept", EffectKind::Intercept, 0, 1, 0.0, 1.0, {}});
  fit.blocks.push_back({"z1", EffectKind::Linear, 1, 1, 0.5, 2.0, {}});
  fit.grid.push_back({1.0, -10.0, 1.0});
  fit.component_mean = {-2.0, 0.3};
  fit.component_sd = {0.1, 0.2};
  fit.pixel_id = {0, 1};
  fit.unit_id = {0, 0};
  fit.count = {1, 0};
  fit.linpred_mean = {-2.0, -2.1};
  fit.linpred_var = {0.01, 0.02};
  save_fit_json((dir / "fit.json").string(), fit);
  auto loaded = load_fit_json((dir / "fit.json").string());
  CHECK(loaded.blocks.size() == 2);
  CHECK(loaded.blocks[1].standardize_mean == 0.5);
  CHECK(loaded.component_mean == fit.component_mean);
  CHECK(loaded.linpred_var == fit.linpred_var);
  CHECK(loaded.grid.size() == 1);
}
