#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "marlab/trainer.hpp"

namespace marlab {

/// One experiment: an environment spec plus a trainer config, run for
/// n_seeds independent seeds. Deterministic: the manifest fixes every byte
/// of the metric CSVs and summary.json (wall-clock timings go to a separate
/// timings file outside that contract).
struct RunManifest {
  TrainerConfig config;
  nlohmann::json environment;  // env spec object (see environments.hpp)
  int n_seeds = 1;
  std::string output_dir;
  bool oracle_enabled = true;

  void validate() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::string& path);
  nlohmann::json to_json() const;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  double final_j = 0.0;        // exact J when the oracle is on, else empirical
  double final_j_empirical = 0.0;
  double initial_j = 0.0;
};

struct RunSummary {
  std::vector<SeedOutcome> seeds;
  double final_j_mean = 0.0;
  double final_j_std = 0.0;

  nlohmann::json to_json() const;
};

/// Per-iteration metric CSV header shared by every trainer.
extern const char* kMetricsCsvHeader;

/// Executes the manifest: one metrics CSV per seed (seed_<k>.csv), a
/// summary.json with mean/std of final J across seeds, and timings_<k>.csv
/// sidecars with wall-clock per iteration. Seeds run in parallel up to the
/// A2PO_LAB_THREADS cap. Returns the summary.
RunSummary run_experiment(const RunManifest& manifest);

/// Runs the manifest once per value of the given axis
/// (estimator | selection_rule | adaptive_clip | lambda) and writes
/// ablation_<axis>.csv with one row of final-J mean/std per value.
/// Returns the table as JSON.
nlohmann::json ablate(const RunManifest& manifest, const std::string& axis);

/// In-process run of one seed; used by run_experiment's workers and by tests
/// that want rows without touching the filesystem.
struct SeedRun {
  std::vector<IterationRow> rows;
  SeedOutcome outcome;
  std::vector<double> iteration_seconds;
};
SeedRun run_single_seed(const RunManifest& manifest, int seed_index);

}  // namespace marlab
