#include "bosa/harness/report.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <doctest.h>

#include <filesystem>

using namespace bosa;
using namespace bosa::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string &name)
{
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nlohmann::json tiny_json(const fs::path &dir)
{
  nlohmann::json j = nlohmann::json::parse(R"({
    "schema_version": 1,
    "name": "tiny",
    "env": {"family": "point-mass-2d"},
    "target": {"size": 3000, "seed": 1},
    "source": {"size": 2000, "seed": 2, "mass_scale": 0.5},
    "data": {"target_fraction": 0.2, "subsample_seed": 3},
    "density": {
      "behavior": {"hidden_dim": 16, "iterations": 150, "batch_size": 64},
      "transition": {"hidden_dim": 16, "iterations": 150, "batch_size": 64},
      "ensemble_size": 2
    },
    "agent": {"hidden_dim": 16, "batch_size": 32, "likelihood_samples": 2, "steps": 30, "log_every": 10,
              "checkpoint_every": 20},
    "variants": ["full", "no-filter"],
    "seeds": [0, 1],
    "settings": ["cross", "target-10"],
    "eval": {"episodes": 2, "probe_states": 100}
  })");
  j["output_dir"] = (dir / "out").string();
  return j;
}

std::string report_bytes(const fs::path &out)
{
  std::string all;
  for (const char *f : {"report.csv", "deltas.csv", "ablation.csv", "scatter.svg", "summary.json"}) {
    all += nn::read_file(out / "report" / f);
  }
  return all;
}

} // namespace

TEST_SUITE("harness")
{
  TEST_CASE("config parsing and validation")
  {
    const fs::path dir = fresh_dir("bosa_test_config");
    const ExperimentConfig c = ExperimentConfig::from_json(tiny_json(dir));
    CHECK(c.target.size == 3000);
    CHECK(c.source.mass_scale == 0.5);
    CHECK(c.variants.size() == 2);
    CHECK(c.settings[1] == Setting::target_subset);
    CHECK(c.resolved_cache_dir() == dir / "out" / "cache");
    CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());

    auto broken = [&](const char *key, nlohmann::json value) {
      nlohmann::json j = tiny_json(dir);
      j[key] = value;
      return j;
    };
    CHECK_THROWS(ExperimentConfig::from_json(broken("schema_version", 2)));
    CHECK_THROWS(ExperimentConfig::from_json(broken("unknown_section", 1)));
    CHECK_THROWS(ExperimentConfig::from_json(broken("seeds", nlohmann::json::array())));
    CHECK_THROWS(ExperimentConfig::from_json(broken("data", {{"target_fraction", 0.0}})));
    CHECK_THROWS(ExperimentConfig::from_json(broken("variants", {"mystery"})));
    CHECK_THROWS(ExperimentConfig::from_json(broken("data", {{"source_mode", "none"}})));

    const fs::path file = dir / "c.json";
    nn::write_file(file, "// comment\n" + tiny_json(dir).dump());
    CHECK(load_config(file).name == "tiny");
    nn::write_file(file, "{ not json");
    CHECK_THROWS_AS(load_config(file), std::invalid_argument);
  }

  TEST_CASE("zero variants: only dataset and density artifacts")
  {
    const fs::path dir = fresh_dir("bosa_test_novariants");
    nlohmann::json j = tiny_json(dir);
    j["variants"] = nlohmann::json::array();
    const ExperimentReport r = run_pipeline(ExperimentConfig::from_json(j));
    CHECK(r.runs.empty());
    CHECK(r.ok());
    CHECK(r.artifacts.contains("target"));
    CHECK(r.artifacts["settings"]["cross"].contains("behavior_key"));
    CHECK(r.artifacts["settings"]["cross"].contains("ensemble_key"));
    CHECK(fs::exists(dir / "out" / "config.resolved.json"));
    CHECK(fs::exists(dir / "out" / "report" / "report.csv"));
  }

  TEST_CASE("end to end: caching, byte-identical reruns, stage isolation and resume")
  {
    const fs::path dir = fresh_dir("bosa_test_pipeline");
    const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_json(dir));
    const ExperimentReport first = run_pipeline(cfg);
    REQUIRE(first.ok());
    CHECK(first.runs.size() == 8);
    CHECK(first.cache_misses > 0);
    for (const auto &run : first.runs) {
      CHECK(std::isfinite(run.eval.normalized_score));
      CHECK(run.final_lambda >= 0.0);
      CHECK(fs::exists(dir / "out" / "runs" / run.id / "diagnostics.csv"));
    }
    const std::string bytes = report_bytes(dir / "out");

    const ExperimentReport second = run_pipeline(cfg);
    CHECK(second.cache_misses == 0);
    for (const auto &run : second.runs) { CHECK(run.cached); }
    CHECK(report_bytes(dir / "out") == bytes);

    // Deleting an intermediate artifact regenerates it bit-identically.
    for (const auto &e : fs::directory_iterator(dir / "out" / "cache" / "density")) { fs::remove_all(e.path()); }
    fs::remove_all(dir / "out" / "runs" / "cross" / "full" / "seed-1");
    const ExperimentReport third = run_pipeline(cfg);
    CHECK(third.cache_misses > 0);
    CHECK(report_bytes(dir / "out") == bytes);

    // An interrupted run continues from its checkpoint to the same result.
    const fs::path run_dir = dir / "out" / "runs" / "target-10" / "no-filter" / "seed-0";
    const std::string result = nn::read_file(run_dir / "result.json");
    fs::remove(run_dir / "result.json");
    REQUIRE(fs::exists(run_dir / "checkpoint" / "progress.bin"));
    PipelineOptions opts;
    opts.resume = true;
    run_pipeline(cfg, opts);
    CHECK(nn::read_file(run_dir / "result.json") == result);
    CHECK(report_bytes(dir / "out") == bytes);

    // The report can be rebuilt from the run directory alone.
    const ExperimentReport loaded = load_runs(dir / "out" / "runs");
    CHECK(loaded.runs.size() == 8);
    write_report(loaded, dir / "rebuilt");
    CHECK(nn::read_file(dir / "rebuilt" / "report.csv") == nn::read_file(dir / "out" / "report" / "report.csv"));
  }

  TEST_CASE("changing a hyperparameter reuses data and density artifacts")
  {
    const fs::path dir = fresh_dir("bosa_test_sweep");
    nlohmann::json j = tiny_json(dir);
    j["variants"] = {"full"};
    j["seeds"] = {0};
    j["settings"] = {"cross"};
    j["sweep"] = {{"transition_threshold", {0.01, 0.2}}};
    const ExperimentReport r = run_pipeline(ExperimentConfig::from_json(j));
    REQUIRE(r.runs.size() == 2);
    CHECK(r.runs[0].sweep == "tt=0.01");
    CHECK(r.runs[1].sweep == "tt=0.2");
    CHECK(r.runs[0].filter_pass_source >= r.runs[1].filter_pass_source);

    j["agent"]["conservation_weight"] = 0.01;
    const ExperimentReport again = run_pipeline(ExperimentConfig::from_json(j));
    CHECK(again.cache_hits >= 5); // datasets, subsample, behavior model, ensemble, scores
    CHECK(again.cache_misses == 2);
  }

  TEST_CASE("stage failures name the stage")
  {
    const fs::path dir = fresh_dir("bosa_test_failure");
    nlohmann::json j = tiny_json(dir);
    j["target"]["path"] = (dir / "missing.bds").string();
    try {
      run_pipeline(ExperimentConfig::from_json(j));
      FAIL("no throw");
    } catch (const StageError &e) {
      CHECK(e.stage() == "generate-target");
      CHECK(std::string(e.what()).find("generate-target") != std::string::npos);
    }
  }

  TEST_CASE("ablation tables")
  {
    ExperimentReport r;
    auto add = [&](const char *variant, double score) {
      RunRecord run;
      run.setting = "cross";
      run.variant = variant;
      run.eval.normalized_score = score;
      r.runs.push_back(run);
    };
    add("full", 80.0);
    add("full", 60.0);
    add("no-filter", 35.0);
    const auto rows = ablation_table(r);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].variant == "full");
    CHECK(rows[0].percent_change == 0.0);
    CHECK(rows[1].percent_change == doctest::Approx(-50.0));

    const fs::path dir = fresh_dir("bosa_test_ablation");
    nlohmann::json j = tiny_json(dir);
    j["variants"] = {"no-filter"};
    CHECK_THROWS_AS(run_ablation_suite(ExperimentConfig::from_json(j)), std::invalid_argument);
  }

  TEST_CASE("transfer delta rows use the best target-100 score")
  {
    ExperimentReport r;
    r.name = "task";
    auto add = [&](const char *setting, const char *variant, double score) {
      RunRecord run;
      run.setting = setting;
      run.variant = variant;
      run.eval.normalized_score = score;
      r.runs.push_back(run);
    };
    add("target-100", "full", 100.0);
    add("target-100", "no-filter", 120.0);
    add("target-10", "full", 60.0);
    add("cross", "full", 90.0);
    const auto rows = delta_rows(r);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].best_100 == 120.0);
    CHECK(rows[0].best_variant == "no-filter");
    CHECK(rows[0].delta.x == doctest::Approx(-0.5));
    CHECK(rows[0].delta.y == doctest::Approx(-0.25));
    CHECK(scatter_svg(rows).find("<circle") != std::string::npos);
  }
}
