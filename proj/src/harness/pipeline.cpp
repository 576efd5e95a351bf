#include "bosa/harness/pipeline.hpp"
#include "bosa/agent/train.hpp"
#include "bosa/augment/augment.hpp"
#include "bosa/harness/report.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>

namespace bosa::harness {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string> &parts, const char *sep)
{
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) { out += (i ? sep : "") + parts[i]; }
  return out;
}

std::string cache_key(const std::vector<std::string> &parts)
{
  Fnv1a h;
  h.update(code_version);
  for (const auto &p : parts) {
    h.update("\x1f");
    h.update(p);
  }
  return h.hex();
}

class Log
{
public:
  explicit Log(std::ostream *out) : out_(out) {}
  void operator()(const std::string &line)
  {
    if (out_ == nullptr) { return; }
    std::lock_guard lock(mutex_);
    *out_ << line << '\n' << std::flush;
  }

private:
  std::ostream *out_;
  std::mutex mutex_;
};

template <typename F> auto run_stage(const std::string &name, const std::vector<std::string> &inputs, F &&body)
{
  try {
    return body();
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw StageError(name, inputs, e.what());
  }
}

struct Counters
{
  std::mutex mutex;
  Index hits = 0;
  Index misses = 0;
  void hit()
  {
    std::lock_guard lock(mutex);
    ++hits;
  }
  void miss()
  {
    std::lock_guard lock(mutex);
    ++misses;
  }
};

data::OfflineDataset cached_dataset(const fs::path &file, const std::function<data::OfflineDataset()> &make,
                                    Counters &counters)
{
  if (fs::exists(file)) {
    counters.hit();
    return data::read_dataset(file);
  }
  counters.miss();
  data::OfflineDataset d = make();
  fs::create_directories(file.parent_path());
  data::write_dataset(file, d);
  return d;
}

void write_scores(const fs::path &file, const Vector &scores)
{
  std::string out = nlohmann::json{{"format", "bosa-scores"}, {"count", scores.size()}}.dump();
  out.push_back('\n');
  for (Index i = 0; i < scores.size(); ++i) { append_f64(out, scores[i]); }
  fs::create_directories(file.parent_path());
  nn::write_file(file, out);
}

Vector read_scores(const fs::path &file)
{
  const std::string bytes = nn::read_file(file);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) { throw std::runtime_error("scores file: missing header"); }
  const auto header = nlohmann::json::parse(bytes.substr(0, nl));
  const auto n = header.at("count").get<Index>();
  const std::string_view payload = std::string_view(bytes).substr(nl + 1);
  if (payload.size() != static_cast<std::size_t>(n) * 8) { throw std::runtime_error("scores file: size mismatch"); }
  Vector out(n);
  for (Index i = 0; i < n; ++i) { out[i] = read_f64(payload, static_cast<std::size_t>(i) * 8); }
  return out;
}

data::OfflineDataset domain_dataset(const ExperimentConfig &cfg, const DomainStanza &stanza, const envs::EnvSpec &env,
                                    data::DomainTag role, Counters &counters)
{
  if (!stanza.path.empty()) {
    counters.hit();
    data::OfflineDataset d = data::read_dataset(stanza.path);
    if (d.env.family != cfg.family) { throw std::invalid_argument(stanza.path + ": dataset belongs to another family"); }
    std::fill(d.tags.begin(), d.tags.end(), role);
    return d;
  }
  const envs::BehaviorSpec behavior{stanza.tier, stanza.behavior_noise};
  const std::string key =
    cache_key({"dataset", envs::to_json(env).dump(), envs::to_json(behavior).dump(), std::to_string(stanza.size),
               std::to_string(stanza.seed), data::to_string(role)});
  return cached_dataset(cfg.resolved_cache_dir() / "datasets" / (key + ".bds"),
                        [&] { return data::collect(env, behavior, stanza.size, stanza.seed, role); }, counters);
}

/// Everything an agent run of one setting needs.
struct SettingArtifacts
{
  Setting setting;
  data::OfflineDataset mix;
  std::string mix_hash;
  std::string target_hash;
  std::optional<density::DensityModel> behavior;
  std::string behavior_key;
  Vector scores;
  std::string scores_key;
};

struct RunSpec
{
  std::size_t setting = 0;
  agent::BosaConfig config;
  std::string sweep;
  std::uint64_t seed = 0;
};

std::string run_id(const std::string &setting, const RunSpec &spec)
{
  std::string v = agent::to_string(spec.config.variant);
  if (!spec.sweep.empty()) { v += "@" + spec.sweep; }
  return setting + "/" + v + "/seed-" + std::to_string(spec.seed);
}

std::string format_threshold(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

} // namespace

StageError::StageError(std::string stage, std::vector<std::string> input_hashes, const std::string &cause)
  : std::runtime_error("stage '" + stage + "' failed (inputs: " + join(input_hashes, ", ") + "): " + cause),
    stage_(std::move(stage)), inputs_(std::move(input_hashes))
{
}

nlohmann::json RunRecord::to_json() const
{
  return {{"id", id},
          {"setting", setting},
          {"variant", variant},
          {"sweep", sweep},
          {"seed", seed},
          {"key", key},
          {"eval", eval.to_json()},
          {"final_lambda", final_lambda},
          {"lambda_peak", lambda_peak},
          {"tail_slackness", tail_slackness},
          {"tail_lambda_mean", tail_lambda_mean},
          {"support_fraction", support_fraction},
          {"q_source", q_source},
          {"q_target", q_target},
          {"filter_pass_source", filter_pass_source},
          {"filter_pass_target", filter_pass_target},
          {"starvation_events", starvation_events}};
}

RunRecord RunRecord::from_json(const nlohmann::json &j)
{
  RunRecord r;
  r.id = j.at("id").get<std::string>();
  r.setting = j.at("setting").get<std::string>();
  r.variant = j.at("variant").get<std::string>();
  r.sweep = j.value("sweep", "");
  r.seed = j.at("seed").get<std::uint64_t>();
  r.key = j.at("key").get<std::string>();
  r.eval = metrics::EvalResult::from_json(j.at("eval"));
  r.final_lambda = j.value("final_lambda", 0.0);
  r.lambda_peak = j.value("lambda_peak", 0.0);
  r.tail_slackness = j.value("tail_slackness", 0.0);
  r.tail_lambda_mean = j.value("tail_lambda_mean", 0.0);
  r.support_fraction = j.value("support_fraction", -1.0);
  r.q_source = j.value("q_source", 0.0);
  r.q_target = j.value("q_target", 0.0);
  r.filter_pass_source = j.value("filter_pass_source", 1.0);
  r.filter_pass_target = j.value("filter_pass_target", 1.0);
  r.starvation_events = j.value("starvation_events", Index{0});
  return r;
}

ExperimentReport run_pipeline(const ExperimentConfig &cfg, const PipelineOptions &options)
{
  cfg.validate();
  Log log(options.log);
  Counters counters;
  const int jobs = std::max(options.jobs, 1);
  const fs::path cache = cfg.resolved_cache_dir();
  fs::create_directories(cfg.output_dir);

  ExperimentReport report;
  report.name = cfg.name;
  report.config = cfg.to_json();
  nn::write_file(cfg.output_dir / "config.resolved.json", report.config.dump(2) + "\n");

  // Datasets.
  const envs::EnvSpec target_env = cfg.target_env();
  const data::OfflineDataset target_raw = run_stage("generate-target", {}, [&] {
    return domain_dataset(cfg, cfg.target, target_env, data::DomainTag::target, counters);
  });
  const std::string target_raw_hash = data::content_hash(target_raw);
  log("[data] target: " + std::to_string(target_raw.size()) + " transitions, hash " + target_raw_hash);

  const data::OfflineDataset target_sub = run_stage("subsample", {target_raw_hash}, [&] {
    if (cfg.target_fraction >= 1.0) { return target_raw; }
    const std::string key =
      cache_key({"subsample", target_raw_hash, format_threshold(cfg.target_fraction), std::to_string(cfg.subsample_seed)});
    return cached_dataset(cache / "datasets" / (key + ".bds"),
                          [&] { return data::subsample(target_raw, cfg.target_fraction, cfg.subsample_seed); },
                          counters);
  });
  const std::string target_sub_hash = data::content_hash(target_sub);
  log("[data] target subset: " + std::to_string(target_sub.size()) + " transitions, hash " + target_sub_hash);

  const bool wants_cross = std::find(cfg.settings.begin(), cfg.settings.end(), Setting::cross) != cfg.settings.end();
  data::OfflineDataset source;
  nlohmann::json source_info = nlohmann::json::object();
  if (wants_cross) {
    source = run_stage("generate-source", {target_sub_hash}, [&] {
      switch (cfg.source_mode) {
      case SourceMode::collected:
        return domain_dataset(cfg, cfg.source, cfg.source_env(), data::DomainTag::source, counters);
      case SourceMode::noise: {
        augment::NoiseSpec spec{cfg.augment.amplitude};
        if (cfg.augment.amplitude_scale > 0.0) {
          spec.amplitude = cfg.augment.amplitude_scale * data::natural_next_state_scale(target_sub);
        }
        source_info["amplitude"] = spec.amplitude;
        const std::string key =
          cache_key({"noise", target_sub_hash, cfg.augment.to_json().dump(), format_threshold(spec.amplitude)});
        return cached_dataset(cache / "datasets" / (key + ".bds"), [&] {
          Rng rng(cfg.augment.seed);
          return augment::noise_augment(target_sub, spec, cfg.augment.n, rng);
        }, counters);
      }
      case SourceMode::model: {
        const std::string key =
          cache_key({"model-aug", target_sub_hash, cfg.augment.to_json().dump(), cfg.transition_density.to_json().dump()});
        return cached_dataset(cache / "datasets" / (key + ".bds"), [&] {
          Rng rng(cfg.augment.seed);
          Rng fit = rng.split(1);
          Rng gen = rng.split(2);
          const augment::PseudoModel model =
            augment::fit_pseudo_model(target_sub, cfg.transition_density, cfg.augment.model_budget, fit);
          return augment::model_augment(target_sub, model, cfg.augment.n, gen);
        }, counters);
      }
      case SourceMode::none: break;
      }
      throw std::logic_error("no source mode");
    });
    source_info["hash"] = data::content_hash(source);
    source_info["count"] = source.size();
    source_info["mode"] = to_string(cfg.source_mode);
    log("[data] source (" + to_string(cfg.source_mode) + "): " + std::to_string(source.size()) + " transitions");
  }
  report.artifacts["target"] = {{"hash", target_raw_hash}, {"count", target_raw.size()}};
  report.artifacts["target_subset"] = {{"hash", target_sub_hash}, {"count", target_sub.size()}};
  report.artifacts["source"] = source_info;

  // With no variants the density stage still runs so its artifacts land in the report.
  bool need_behavior = cfg.variants.empty(), need_filter = cfg.variants.empty();
  for (auto v : cfg.variants) {
    agent::BosaConfig c = cfg.agent;
    c.variant = v;
    need_behavior = need_behavior || c.uses_policy_constraint();
    need_filter = need_filter || c.uses_transition_filter();
  }

  // Density models per setting.
  std::vector<SettingArtifacts> settings;
  for (Setting s : cfg.settings) {
    SettingArtifacts a;
    a.setting = s;
    const data::OfflineDataset &d_target = s == Setting::target_full ? target_raw : target_sub;
    a.target_hash = s == Setting::target_full ? target_raw_hash : target_sub_hash;
    a.mix = s == Setting::cross ? data::mix(target_sub, source) : d_target;
    a.mix_hash = data::content_hash(a.mix);
    nlohmann::json info = {{"mix_hash", a.mix_hash}, {"target_hash", a.target_hash}, {"mix_count", a.mix.size()}};

    if (need_behavior) {
      a.behavior_key = cache_key({"behavior", a.mix_hash, cfg.behavior_density.to_json().dump(),
                                  std::to_string(cfg.density_seed)});
      const fs::path dir = cache / "density" / ("behavior-" + a.behavior_key);
      a.behavior = run_stage("fit-behavior", {a.mix_hash}, [&] {
        if (fs::exists(dir / "behavior.json")) {
          counters.hit();
          return density::load_density(dir, "behavior");
        }
        counters.miss();
        log("[density] fitting behavior model on " + to_string(s) + " mix (" + std::to_string(a.mix.size()) + ")");
        Rng rng(cfg.density_seed);
        density::DensityModel m = density::fit_behavior(a.mix, cfg.behavior_density, rng);
        density::save_density(dir, "behavior", m);
        return m;
      });
      if (a.behavior->data_hash != a.mix_hash) {
        report.assertion_failures.push_back(to_string(s) + ": behavior model was not fit on D_mix");
      }
      info["behavior_key"] = a.behavior_key;
    }

    if (need_filter) {
      const std::string ens_key =
        cache_key({"transition", a.target_hash, cfg.transition_density.to_json().dump(),
                   std::to_string(cfg.ensemble_size), std::to_string(cfg.density_seed)});
      const fs::path dir = cache / "density" / ("transition-" + ens_key);
      const density::DensityEnsemble ens = run_stage("fit-transition", {a.target_hash}, [&] {
        if (fs::exists(dir / "ensemble.json")) {
          counters.hit();
          return density::load_ensemble(dir);
        }
        counters.miss();
        log("[density] fitting " + std::to_string(cfg.ensemble_size) + " transition models on " +
            std::to_string(d_target.size()) + " target transitions");
        density::DensityEnsemble e =
          density::fit_transition_ensemble(d_target, cfg.transition_density, cfg.ensemble_size, cfg.density_seed, jobs);
        density::save_ensemble(dir, e);
        return e;
      });
      for (const auto &m : ens.members) {
        if (m.data_hash != a.target_hash) {
          report.assertion_failures.push_back(to_string(s) + ": transition model was not fit on D_target");
        }
      }
      a.scores_key = cache_key({"scores", ens_key, a.mix_hash, std::to_string(cfg.transition_density.inference_samples)});
      const fs::path file = cache / "scores" / (a.scores_key + ".bin");
      a.scores = run_stage("score-mix", {ens_key, a.mix_hash}, [&] {
        if (fs::exists(file)) {
          counters.hit();
          return read_scores(file);
        }
        counters.miss();
        log("[density] scoring " + std::to_string(a.mix.size()) + " transitions");
        Vector sc = density::score_dataset(ens, a.mix, Rng(cfg.density_seed).split(99),
                                           cfg.transition_density.inference_samples, jobs);
        write_scores(file, sc);
        return sc;
      });
      agent::BosaConfig probe = cfg.agent;
      probe.variant = agent::Variant::full;
      const agent::SupportFilter f = agent::make_filter(a.mix, probe, a.scores);
      info["ensemble_key"] = ens_key;
      info["filter_pass_target"] = f.pass_rate(a.mix, data::DomainTag::target);
      info["filter_pass_source"] = f.pass_rate(a.mix, data::DomainTag::source);
      info["filter_pass_generated"] = f.pass_rate(a.mix, data::DomainTag::generated);
    }
    report.artifacts["settings"][to_string(s)] = info;
    settings.push_back(std::move(a));
  }

  // Expand runs.
  std::vector<RunSpec> runs;
  const std::vector<double> tt = cfg.transition_sweep.empty() ? std::vector<double>{-1.0} : cfg.transition_sweep;
  const std::vector<double> pt = cfg.policy_sweep.empty() ? std::vector<double>{-1.0} : cfg.policy_sweep;
  for (std::size_t si = 0; si < settings.size(); ++si) {
    for (auto v : cfg.variants) {
      for (double t1 : tt) {
        for (double t2 : pt) {
          for (auto seed : cfg.seeds) {
            RunSpec r{si, cfg.agent, "", seed};
            r.config.variant = v;
            std::vector<std::string> label;
            if (t1 > 0.0) {
              r.config.transition_threshold = density::SupportThreshold::from_likelihood(t1);
              label.push_back("tt=" + format_threshold(t1));
            }
            if (t2 > 0.0) {
              r.config.policy_threshold = density::SupportThreshold::from_likelihood(t2);
              label.push_back("pt=" + format_threshold(t2));
            }
            r.sweep = join(label, ",");
            runs.push_back(r);
          }
        }
      }
    }
  }

  std::mutex report_mutex;
  report.runs.resize(runs.size());
  parallel_for(static_cast<Index>(runs.size()), jobs, [&](Index ri) {
    const RunSpec &spec = runs[static_cast<std::size_t>(ri)];
    const SettingArtifacts &art = settings[spec.setting];
    const agent::BosaConfig &ac_cfg = spec.config;
    const std::string setting_name = to_string(art.setting);
    const std::string id = run_id(setting_name, spec);
    const bool uses_behavior = ac_cfg.uses_policy_constraint();
    const bool uses_filter = ac_cfg.uses_transition_filter();
    const std::string key =
      cache_key({"run", ac_cfg.to_json().dump(), std::to_string(cfg.steps), art.mix_hash,
                 uses_behavior ? art.behavior_key : "", uses_filter ? art.scores_key : "", std::to_string(spec.seed),
                 envs::to_json(target_env).dump(), std::to_string(cfg.eval_episodes), std::to_string(cfg.eval_seed),
                 std::to_string(cfg.probe_states)});
    const fs::path dir = cfg.output_dir / "runs" / id;
    const fs::path result_file = dir / "result.json";

    RunRecord rec = run_stage("agent " + id, {art.mix_hash, key}, [&] {
      if (fs::exists(result_file)) {
        RunRecord cached = RunRecord::from_json(nlohmann::json::parse(nn::read_file(result_file)));
        if (cached.key == key) {
          counters.hit();
          cached.cached = true;
          return cached;
        }
      }
      counters.miss();
      fs::create_directories(dir);
      const agent::SupportFilter filter = agent::make_filter(art.mix, ac_cfg, art.scores);
      agent::TrainInputs in{&art.mix, uses_behavior ? &*art.behavior : nullptr, &filter};

      agent::TrainOptions opts;
      opts.steps = cfg.steps;
      opts.log_every = cfg.log_every;
      opts.checkpoint_every = cfg.checkpoint_every;
      const fs::path ckpt = dir / "checkpoint";
      bool resumed = false;
      if (options.resume && fs::exists(ckpt / "progress.bin") && fs::exists(ckpt / "key.txt") &&
          nn::read_file(ckpt / "key.txt") == key) {
        opts.resume_from = agent::load_progress(ckpt);
        resumed = true;
        log("[agent] " + id + ": resuming at step " + std::to_string(opts.resume_from->state.step));
      } else {
        log("[agent] " + id + ": training " + std::to_string(cfg.steps) + " steps");
      }
      std::ofstream csv(dir / "diagnostics.csv", resumed ? std::ios::app : std::ios::trunc);
      if (!resumed) { csv << agent::StepDiagnostics::csv_header() << '\n'; }
      opts.on_log = [&](const agent::StepDiagnostics &d) { csv << d.csv_row() << '\n'; };
      opts.on_checkpoint = [&](const agent::TrainResult &progress) {
        csv.flush();
        agent::save_progress(ckpt, progress);
        nn::write_file(ckpt / "key.txt", key);
      };
      const agent::TrainResult res = agent::train(ac_cfg, in, opts, spec.seed);
      csv.close();

      RunRecord r;
      r.id = id;
      r.setting = setting_name;
      r.variant = agent::to_string(ac_cfg.variant);
      r.sweep = spec.sweep;
      r.seed = spec.seed;
      r.key = key;
      r.eval = metrics::evaluate(res.state, target_env, cfg.eval_episodes, Rng(cfg.eval_seed).split(spec.seed));
      r.eval.seed = spec.seed;
      r.eval.variant = r.variant + (spec.sweep.empty() ? "" : "@" + spec.sweep);
      r.eval.dataset = setting_name;
      r.final_lambda = res.state.lambda;
      r.lambda_peak = res.state.lambda_peak;
      if (!res.lambda_trace.empty()) {
        const std::size_t n = res.lambda_trace.size();
        const std::size_t begin = n - std::max<std::size_t>(1, n / 10);
        CompensatedSum slack, lam;
        for (std::size_t i = begin; i < n; ++i) {
          slack.add(res.lambda_trace[i] * std::abs(res.gap_trace[i]));
          lam.add(res.lambda_trace[i]);
        }
        r.tail_slackness = slack.value() / static_cast<double>(n - begin);
        r.tail_lambda_mean = lam.value() / static_cast<double>(n - begin);
      }
      r.starvation_events = res.starvation_events;
      r.filter_pass_source = filter.pass_rate(art.mix, data::DomainTag::source);
      r.filter_pass_target = filter.pass_rate(art.mix, data::DomainTag::target);

      // Probes on transitions drawn from D_mix.
      Rng probe = Rng(cfg.eval_seed).split(spec.seed, 7);
      const data::Batch b = data::sample_batch(art.mix, cfg.probe_states, probe, data::StateMode::raw);
      if (uses_behavior) {
        Rng ll_rng = probe.split(1);
        const Vector ll = density::behavior_log_likelihood(*art.behavior, b.states, agent::act(res.state, b.states),
                                                           ll_rng, cfg.behavior_density.inference_samples);
        r.support_fraction =
          static_cast<double>((ll.array() > ac_cfg.policy_threshold.log_value).count()) / static_cast<double>(ll.size());
      }
      const Vector q = agent::min_twin_q(res.state, b.states, b.actions);
      CompensatedSum qs, qt;
      Index ns = 0, nt = 0;
      for (Index j = 0; j < q.size(); ++j) {
        if (data::is_source_like(b.tags[static_cast<std::size_t>(j)])) {
          qs.add(q[j]);
          ++ns;
        } else {
          qt.add(q[j]);
          ++nt;
        }
      }
      r.q_source = ns ? qs.value() / static_cast<double>(ns) : 0.0;
      r.q_target = nt ? qt.value() / static_cast<double>(nt) : 0.0;

      agent::save_actor_critic(dir / "final", res.state);
      nn::write_file(result_file, r.to_json().dump(2) + "\n");
      log("[agent] " + id + ": score " + format_threshold(r.eval.normalized_score));
      return r;
    });

    std::lock_guard lock(report_mutex);
    if (!std::isfinite(rec.eval.normalized_score)) { report.assertion_failures.push_back(id + ": non-finite score"); }
    if (rec.final_lambda < 0.0 || rec.lambda_peak < 0.0) {
      report.assertion_failures.push_back(id + ": negative Lagrange multiplier");
    }
    report.runs[static_cast<std::size_t>(ri)] = std::move(rec);
  });

  report.cache_hits = counters.hits;
  report.cache_misses = counters.misses;
  write_report(report, cfg.output_dir / "report");
  log("[report] " + std::to_string(report.runs.size()) + " runs, " + std::to_string(report.cache_hits) +
      " cache hits, " + std::to_string(report.cache_misses) + " misses");
  return report;
}

std::vector<AblationRow> ablation_table(const ExperimentReport &report)
{
  // (setting, sweep) -> variant -> scores
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> groups;
  for (const auto &r : report.runs) {
    groups[{r.setting, r.sweep}][r.variant].push_back(r.eval.normalized_score);
  }
  std::vector<AblationRow> rows;
  for (const auto &[where, variants] : groups) {
    const auto full = variants.find(agent::to_string(agent::Variant::full));
    if (full == variants.end()) { continue; }
    const double full_mean = metrics::summarize(full->second).mean;
    for (const auto &[variant, scores] : variants) {
      AblationRow row;
      row.setting = where.first + (where.second.empty() ? "" : "@" + where.second);
      row.variant = variant;
      row.full_mean = full_mean;
      row.ablated_mean = metrics::summarize(scores).mean;
      row.percent_change =
        full_mean == 0.0 ? 0.0 : 100.0 * (row.ablated_mean - full_mean) / std::abs(full_mean);
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<AblationRow> run_ablation_suite(const ExperimentConfig &config, const PipelineOptions &options)
{
  if (std::find(config.variants.begin(), config.variants.end(), agent::Variant::full) == config.variants.end()) {
    throw std::invalid_argument("ablation suite: the variant list must include full");
  }
  return ablation_table(run_pipeline(config, options));
}

} // namespace bosa::harness
