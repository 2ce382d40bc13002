#include "marlab/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "marlab/environments.hpp"

namespace marlab {

const char* kMetricsCsvHeader =
    "iter,agent,order_k,eps_i,objective,clip_fraction,mean_ratio,tv_to_base,"
    "J_empirical,J_exact";

void RunManifest::validate() const {
  config.validate();
  if (n_seeds < 1)
    throw std::invalid_argument("manifest.n_seeds: must be >= 1");
  if (output_dir.empty())
    throw std::invalid_argument("manifest.output_dir: must be set");
  if (environment.is_null())
    throw std::invalid_argument("manifest.environment: must be set");
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  if (!j.contains("environment"))
    throw std::invalid_argument("manifest.environment: missing");
  m.environment = j.at("environment");
  if (j.contains("config")) m.config = TrainerConfig::from_json(j.at("config"));
  try {
    if (j.contains("n_seeds")) m.n_seeds = j.at("n_seeds").get<int>();
    if (j.contains("output_dir"))
      m.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("oracle_enabled"))
      m.oracle_enabled = j.at("oracle_enabled").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest: malformed field: ") +
                                e.what());
  }
  // The manifest's gamma is authoritative; the environment is built with it.
  if (!m.environment.contains("gamma") && !j.contains("config"))
    throw std::invalid_argument("manifest.config: missing");
  return m;
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunManifest::to_json() const {
  return nlohmann::json{{"config", config.to_json()},
                        {"environment", environment},
                        {"n_seeds", n_seeds},
                        {"output_dir", output_dir},
                        {"oracle_enabled", oracle_enabled}};
}

nlohmann::json RunSummary::to_json() const {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& s : seeds) {
    per_seed.push_back({{"seed", s.seed},
                        {"final_j", s.final_j},
                        {"final_j_empirical", s.final_j_empirical},
                        {"initial_j", s.initial_j}});
  }
  return nlohmann::json{{"final_j_mean", final_j_mean},
                        {"final_j_std", final_j_std},
                        {"seeds", per_seed}};
}

namespace {

std::string format_row(const IterationRow& r) {
  char buf[320];
  if (std::isnan(r.j_exact)) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,\n", r.iter,
                  r.agent, r.order_k, r.eps_i, r.objective, r.clip_fraction,
                  r.mean_ratio, r.tv_to_base, r.j_empirical);
  } else {
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iter, r.agent, r.order_k, r.eps_i, r.objective,
                  r.clip_fraction, r.mean_ratio, r.tv_to_base, r.j_empirical,
                  r.j_exact);
  }
  return buf;
}

int worker_cap(int n_seeds) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("A2PO_LAB_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) cap = requested;
  }
  return std::min(cap, n_seeds);
}

}  // namespace

SeedRun run_single_seed(const RunManifest& manifest, int seed_index) {
  nlohmann::json env_spec = manifest.environment;
  env_spec["gamma"] = manifest.config.gamma;
  DecMdp mdp = build_environment(env_spec);

  TrainerConfig cfg = manifest.config;
  cfg.seed = split_seed(manifest.config.seed, static_cast<std::uint64_t>(seed_index));
  cfg.horizon = environment_horizon(manifest.environment, cfg.horizon);

  Trainer trainer(std::move(mdp), cfg);
  SeedRun run;
  run.outcome.seed = cfg.seed;
  run.outcome.initial_j = manifest.oracle_enabled
                              ? trainer.exact_return()
                              : std::numeric_limits<double>::quiet_NaN();
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    auto rows = trainer.run_iteration(iter, manifest.oracle_enabled);
    const auto t1 = std::chrono::steady_clock::now();
    run.iteration_seconds.push_back(
        std::chrono::duration<double>(t1 - t0).count());
    run.rows.insert(run.rows.end(), rows.begin(), rows.end());
  }
  // Final empirical J from a dedicated measurement rollout of the final
  // policy, so the summary is well-defined even for iterations == 0.
  {
    RolloutBatch probe =
        rollout(trainer.mdp(), trainer.policy(), cfg.horizon,
                cfg.episodes_per_iter, split_seed(cfg.seed, 0xf17a1ULL));
    run.outcome.final_j_empirical = empirical_return(probe, cfg.gamma);
  }
  run.outcome.final_j = manifest.oracle_enabled
                            ? trainer.exact_return()
                            : run.outcome.final_j_empirical;
  return run;
}

RunSummary run_experiment(const RunManifest& manifest) {
  manifest.validate();
  // Fail on an unbuildable environment before spawning workers; the exact
  // solver is dense, so oracle-enabled runs respect a hard size cap.
  {
    nlohmann::json env_spec = manifest.environment;
    env_spec["gamma"] = manifest.config.gamma;
    DecMdp mdp = build_environment(env_spec);
    mdp.validate();
    if (manifest.oracle_enabled &&
        static_cast<double>(mdp.n_states) * mdp.n_joint_actions() > 1e4)
      throw std::invalid_argument(
          "manifest.oracle_enabled: oracle size cap exceeded "
          "(n_states x joint actions > 10^4)");
  }
  std::filesystem::create_directories(manifest.output_dir);

  std::vector<SeedOutcome> outcomes(manifest.n_seeds);
  std::atomic<int> next{0};
  std::vector<std::string> errors(manifest.n_seeds);

  auto work = [&]() {
    for (;;) {
      const int s = next.fetch_add(1);
      if (s >= manifest.n_seeds) return;
      try {
        SeedRun run = run_single_seed(manifest, s);
        outcomes[s] = run.outcome;

        const std::string base =
            manifest.output_dir + "/seed_" + std::to_string(s);
        std::ofstream csv(base + ".csv");
        csv << kMetricsCsvHeader << '\n';
        for (const auto& r : run.rows) csv << format_row(r);

        std::ofstream timing(manifest.output_dir + "/timings_seed_" +
                             std::to_string(s) + ".csv");
        timing << "iter,seconds\n";
        char buf[64];
        for (std::size_t i = 0; i < run.iteration_seconds.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i,
                        run.iteration_seconds[i]);
          timing << buf;
        }
      } catch (const std::exception& e) {
        errors[s] = e.what();
      }
    }
  };

  const int n_workers = worker_cap(manifest.n_seeds);
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw std::runtime_error("seed run failed: " + err);

  RunSummary summary;
  summary.seeds = std::move(outcomes);
  double mean = 0.0;
  for (const auto& s : summary.seeds) mean += s.final_j;
  mean /= summary.seeds.size();
  double var = 0.0;
  for (const auto& s : summary.seeds)
    var += (s.final_j - mean) * (s.final_j - mean);
  summary.final_j_mean = mean;
  summary.final_j_std = std::sqrt(var / summary.seeds.size());

  std::ofstream out(manifest.output_dir + "/summary.json");
  out << summary.to_json().dump(2) << '\n';
  return summary;
}

nlohmann::json ablate(const RunManifest& manifest, const std::string& axis) {
  manifest.validate();
  std::vector<std::string> values;
  if (axis == "estimator") {
    values = {"gae", "preopc", "vtrace"};
  } else if (axis == "selection_rule") {
    values = {"cyclic",         "random",
              "greedy",         "semi_greedy",
              "reverse_greedy", "reverse_semi_greedy"};
  } else if (axis == "adaptive_clip") {
    values = {"false", "true"};
  } else if (axis == "lambda") {
    values = {"0.9", "0.93", "0.95", "0.97"};
  } else {
    throw std::invalid_argument("ablate: unknown axis '" + axis + "'");
  }

  nlohmann::json table = nlohmann::json::array();
  std::string csv = axis + ",final_j_mean,final_j_std\n";
  for (const std::string& value : values) {
    RunManifest variant = manifest;
    variant.config.set_field(axis, value);
    variant.output_dir = manifest.output_dir + "/" + axis + "_" + value;
    RunSummary summary = run_experiment(variant);
    table.push_back({{axis, value},
                     {"final_j_mean", summary.final_j_mean},
                     {"final_j_std", summary.final_j_std}});
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", summary.final_j_mean,
                  summary.final_j_std);
    csv += value + buf;
  }
  std::filesystem::create_directories(manifest.output_dir);
  std::ofstream out(manifest.output_dir + "/ablation_" + axis + ".csv");
  out << csv;
  return table;
}

}  // namespace marlab
