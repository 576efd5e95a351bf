#include "bosa/augment/augment.hpp"
#include "bosa/harness/report.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace bosa;

namespace {

/// "mass=0.5,joint_noise=0.1" -> env parameters.
void parse_shift(const std::string &text, double &mass, double &joint_noise)
{
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) { throw std::invalid_argument("--shift: expected key=value, got '" + item + "'"); }
    const std::string key = item.substr(0, eq);
    const double value = std::stod(item.substr(eq + 1));
    if (key == "mass") {
      mass = value;
    } else if (key == "joint_noise" || key == "noise") {
      joint_noise = value;
    } else {
      throw std::invalid_argument("--shift: unknown key '" + key + "'");
    }
  }
}

density::DensityConfig density_config(const std::string &file)
{
  if (file.empty()) { return {}; }
  return density::DensityConfig::from_json(nlohmann::json::parse(nn::read_file(file), nullptr, true, true));
}

void print_summary(const harness::ExperimentReport &report)
{
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto &r : report.runs) {
    groups[{r.setting, r.sweep.empty() ? r.variant : r.variant + "@" + r.sweep}].push_back(r.eval.normalized_score);
  }
  for (const auto &[where, scores] : groups) {
    const auto s = metrics::summarize(scores);
    std::printf("%-12s %-32s %8.2f +- %6.2f  (%lld seeds)\n", where.first.c_str(), where.second.c_str(), s.mean,
                s.std, static_cast<long long>(s.count));
  }
  for (const auto &f : report.assertion_failures) { std::printf("ASSERTION FAILED: %s\n", f.c_str()); }
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Support-constrained offline RL with cross-domain data"};
  app.require_subcommand(1);

  // gen-data
  std::string env_name = "point-mass-2d", shift, tier = "medium", role = "target", out;
  Index n = 100000;
  std::uint64_t seed = 7;
  double behavior_noise = 0.3;
  auto *gen = app.add_subcommand("gen-data", "Collect an offline dataset with a scripted behavior policy");
  gen->add_option("--env", env_name, "Environment family")->capture_default_str();
  gen->add_option("--shift", shift, "Dynamics parameters, e.g. mass=0.5,joint_noise=0.1");
  gen->add_option("--tier", tier, "random|medium|expert|medium-replay|medium-expert")->capture_default_str();
  gen->add_option("--behavior-noise", behavior_noise, "Gaussian action noise of the behavior")->capture_default_str();
  gen->add_option("--role", role, "Domain tag of the transitions (target|source)")->capture_default_str();
  gen->add_option("--n", n, "Number of transitions")->capture_default_str();
  gen->add_option("--seed", seed, "Seed")->capture_default_str();
  gen->add_option("--out", out, "Output file")->required();

  // train-density
  std::string density_role, data_path, density_file;
  int k = 5, jobs = 1;
  auto *td = app.add_subcommand("train-density", "Fit a behavior model or a transition ensemble");
  td->add_option("--role", density_role, "behavior|transition")->required();
  td->add_option("--data", data_path, "Dataset file")->required();
  td->add_option("--k", k, "Ensemble size (transition role)")->capture_default_str();
  td->add_option("--config", density_file, "JSON file with density settings");
  td->add_option("--seed", seed, "Seed")->capture_default_str();
  td->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  td->add_option("--out", out, "Output directory")->required();

  // train
  std::string config_file, variant = "full", setting;
  auto *tr = app.add_subcommand("train", "Train one variant on one seed from an experiment config");
  tr->add_option("--config", config_file, "Experiment config")->required();
  tr->add_option("--variant", variant, "Learner variant")->capture_default_str();
  tr->add_option("--setting", setting, "cross|target-10|target-100 (default: the config's first)");
  tr->add_option("--seed", seed, "Agent seed")->capture_default_str();
  tr->add_option("--out", out, "Output directory")->required();

  // augment
  std::string mode;
  double amplitude = 0.1;
  Index budget = 500;
  auto *au = app.add_subcommand("augment", "Synthesize source data from a target dataset");
  au->add_option("--mode", mode, "model|noise")->required();
  au->add_option("--data", data_path, "Target dataset file")->required();
  au->add_option("--n", n, "Transitions to generate")->capture_default_str();
  au->add_option("--amplitude", amplitude, "Half-width of the uniform next-state noise")->capture_default_str();
  au->add_option("--model-budget", budget, "Training iterations of the pseudo-model")->capture_default_str();
  au->add_option("--config", density_file, "JSON file with pseudo-model density settings");
  au->add_option("--seed", seed, "Seed")->capture_default_str();
  au->add_option("--out", out, "Output file")->required();

  // report
  std::string runs_dir;
  auto *rp = app.add_subcommand("report", "Rebuild report files from finished runs");
  rp->add_option("--runs", runs_dir, "Directory with result.json files")->required();
  rp->add_option("--out", out, "Output directory")->required();

  // run
  bool resume = false;
  auto *rn = app.add_subcommand("run", "Run a whole experiment config");
  rn->add_option("--config", config_file, "Experiment config")->required();
  rn->add_flag("--resume", resume, "Continue interrupted agent runs from their checkpoints");
  rn->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  rn->add_option("--out", out, "Override the config's output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      double mass = 1.0, joint_noise = 0.0;
      if (!shift.empty()) { parse_shift(shift, mass, joint_noise); }
      const envs::EnvSpec env = envs::make_env(envs::parse_family(env_name), mass, joint_noise);
      const envs::BehaviorSpec behavior{envs::parse_tier(tier), behavior_noise};
      const data::OfflineDataset d = data::collect(env, behavior, n, seed, data::parse_tag(role));
      data::write_dataset(out, d);
      std::printf("%lld transitions, %zu episodes, hash %s\n", static_cast<long long>(d.size()), d.episodes().size(),
                  data::content_hash(d).c_str());
    } else if (td->parsed()) {
      const data::OfflineDataset d = data::read_dataset(data_path);
      const density::DensityConfig cfg = density_config(density_file);
      if (density::parse_role(density_role) == density::Role::behavior) {
        Rng rng(seed);
        density::save_density(out, "behavior", density::fit_behavior(d, cfg, rng));
      } else {
        density::save_ensemble(out, density::fit_transition_ensemble(d, cfg, k, seed, jobs));
      }
      std::printf("saved %s model to %s\n", density_role.c_str(), out.c_str());
    } else if (tr->parsed()) {
      harness::ExperimentConfig cfg = harness::load_config(config_file);
      cfg.variants = {agent::parse_variant(variant)};
      cfg.seeds = {seed};
      if (!setting.empty()) {
        cfg.settings = {harness::parse_setting(setting)};
      } else {
        cfg.settings.resize(1);
      }
      if (cfg.cache_dir.empty()) { cfg.cache_dir = cfg.resolved_cache_dir(); }
      cfg.output_dir = out;
      harness::PipelineOptions opts;
      opts.log = &std::cout;
      const auto report = harness::run_pipeline(cfg, opts);
      print_summary(report);
      return report.ok() ? 0 : 2;
    } else if (au->parsed()) {
      const data::OfflineDataset d = data::read_dataset(data_path);
      Rng rng(seed);
      data::OfflineDataset g;
      if (mode == "noise") {
        g = augment::noise_augment(d, augment::NoiseSpec{amplitude}, n, rng);
      } else if (mode == "model") {
        Rng fit = rng.split(1);
        Rng gen_rng = rng.split(2);
        const auto model = augment::fit_pseudo_model(d, density_config(density_file), budget, fit);
        g = augment::model_augment(d, model, n, gen_rng);
      } else {
        throw std::invalid_argument("--mode must be model or noise");
      }
      data::write_dataset(out, g);
      std::printf("%lld generated transitions, hash %s\n", static_cast<long long>(g.size()),
                  data::content_hash(g).c_str());
    } else if (rp->parsed()) {
      const auto report = harness::load_runs(runs_dir);
      harness::write_report(report, out);
      print_summary(report);
    } else if (rn->parsed()) {
      harness::ExperimentConfig cfg = harness::load_config(config_file);
      if (!out.empty()) { cfg.output_dir = out; }
      harness::PipelineOptions opts;
      opts.resume = resume;
      opts.jobs = jobs;
      opts.log = &std::cout;
      const auto report = harness::run_pipeline(cfg, opts);
      print_summary(report);
      return report.ok() ? 0 : 2;
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
