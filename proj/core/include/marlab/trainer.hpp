#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "marlab/advantage.hpp"
#include "marlab/decmdp.hpp"
#include "marlab/policy.hpp"
#include "marlab/rng.hpp"
#include "marlab/rollout.hpp"

namespace marlab {

enum class Algorithm { a2po, mappo, coppo, happo };
enum class SelectionRule {
  cyclic,
  random,
  greedy,
  semi_greedy,
  reverse_greedy,
  reverse_semi_greedy
};

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);
std::string to_string(SelectionRule r);
SelectionRule selection_rule_from_string(const std::string& s);

struct TrainerConfig {
  Algorithm algorithm = Algorithm::a2po;
  SelectionRule selection_rule = SelectionRule::semi_greedy;
  double base_clip = 0.2;      // epsilon
  double clip_blend = 0.5;     // c_epsilon in the adaptive schedule
  bool adaptive_clip = true;
  Estimator estimator = Estimator::preopc;
  double lambda = 0.95;
  double gamma = 0.95;
  int ppo_epochs = 8;          // P
  double lr = 0.1;             // plain gradient ascent/descent step
  int horizon = 32;
  int episodes_per_iter = 32;
  int iterations = 100;
  std::uint64_t seed = 0;

  // Behavioral flags (all off by default, see README).
  bool normalize_advantages = false;  // zero-mean unit-variance per batch
  bool fair_epochs = false;           // sequential trainers run ceil(P/n)
  bool happo_shuffle = false;         // fresh random agent order per stage
  bool greedy_one_shot = false;       // rank agents once per stage, not per pick
  bool exact_advantages = false;      // substitute oracle advantages
  double init_logit_scale = 0.0;      // N(0, scale) initial logits

  void validate() const;  // throws std::invalid_argument naming the field
  static TrainerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Applies one "key=value" override to a scalar field.
  void set_field(const std::string& key, const std::string& value);
};

/// Adaptive clipping schedule C(eps, k) = eps*c + eps*(1-c)*k/n for the k-th
/// update of a stage (1-based). C(eps, n) == eps.
double adaptive_clip(double eps, int k, int n, double c_eps);

/// Picks the next agent to update. `remaining` must be sorted ascending;
/// `k` is the 1-based order index; `adv_stats` is indexed by agent id.
/// Greedy variants break ties toward the lowest agent index. The semi-greedy
/// rules are greedy at even k and uniform at odd k.
int select_next_agent(SelectionRule rule, std::span<const int> remaining,
                      int k, std::span<const double> adv_stats, Rng& rng);

/// Per-candidate selection statistic: the batch mean over steps of
/// |E[A | s, a^i]|, where the inner mean groups the advantage samples by the
/// agent's own (state, action) marginal. The plain batch mean of |A| would
/// be identical for every candidate; the marginal grouping is what makes the
/// statistic agent-dependent.
std::vector<double> per_agent_abs_adv_stats(const RolloutBatch& batch,
                                            std::span<const double> adv,
                                            int n_agents);

/// Objective value, analytic gradient over one agent's logits, and clipping
/// diagnostics for a doubly-clipped PPO-style surrogate.
struct SurrogateEval {
  double objective = 0.0;
  std::vector<double> grad;     // d objective / d logits, [s][a] flat
  double clip_fraction = 0.0;   // samples where the outer clip gates the grad
  double mean_ratio = 0.0;      // batch mean of the full ratio l
};

/// Sequential doubly-clipped objective: per sample
///   l = ratio_agent * clip(prod_{j in preceding} ratio_j, 1 +- eps_i/2),
///   objective = mean( min(l*A, clip(l, 1 +- eps_i)*A) ).
/// The preceding-agent factor is constant in the agent's logits.
SurrogateEval clipped_surrogate(const RolloutBatch& batch,
                                std::span<const double> adv,
                                const JointPolicy& base,
                                const JointPolicy& working, int agent,
                                std::span<const int> preceding, double eps_i);

/// Simultaneous per-agent ratio objective (no preceding factor).
SurrogateEval mappo_surrogate(const RolloutBatch& batch,
                              std::span<const double> adv,
                              const JointPolicy& base,
                              const JointPolicy& working, int agent,
                              double eps);

/// Simultaneous joint-ratio objective: the other agents' ratio product is
/// clipped at 1 +- eps/2 and multiplies the agent's own ratio.
SurrogateEval coppo_surrogate(const RolloutBatch& batch,
                              std::span<const double> adv,
                              const JointPolicy& base,
                              const JointPolicy& working, int agent,
                              double eps);

/// Sequential objective with the base advantage weighted by the *unclipped*
/// preceding-agent ratio product; the clip applies to the agent's own ratio.
SurrogateEval happo_surrogate(const RolloutBatch& batch,
                              std::span<const double> adv,
                              const JointPolicy& base,
                              const JointPolicy& working, int agent,
                              std::span<const int> preceding, double eps);

struct UpdateMetrics {
  int agent = 0;
  int order_k = 0;        // 1-based position in the stage
  double eps_i = 0.0;
  double objective = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double tv_to_base = 0.0;
  std::vector<double> adv_stats;  // selection statistics seen at this pick
};

struct StageResult {
  JointPolicy policy;
  ValueTable value;
  std::vector<UpdateMetrics> updates;
};

/// One full stage of each algorithm: every agent updated exactly once from a
/// batch collected under `base`. The value table is carried through and
/// regressed toward the stage's value targets.
StageResult a2po_stage(const DecMdp& mdp, const RolloutBatch& batch,
                       const JointPolicy& base, ValueTable value,
                       const TrainerConfig& cfg, Rng& rng);
StageResult mappo_stage(const DecMdp& mdp, const RolloutBatch& batch,
                        const JointPolicy& base, ValueTable value,
                        const TrainerConfig& cfg);
StageResult coppo_stage(const DecMdp& mdp, const RolloutBatch& batch,
                        const JointPolicy& base, ValueTable value,
                        const TrainerConfig& cfg);
StageResult happo_stage(const DecMdp& mdp, const RolloutBatch& batch,
                        const JointPolicy& base, ValueTable value,
                        const TrainerConfig& cfg, Rng& rng);

/// One metrics row per agent update, matching the per-iteration CSV schema.
struct IterationRow {
  int iter = 0;
  int agent = 0;
  int order_k = 0;
  double eps_i = 0.0;
  double objective = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double tv_to_base = 0.0;
  double j_empirical = 0.0;
  double j_exact = 0.0;  // NaN when the oracle is disabled
};

/// Owns one training run: rollout, stage dispatch, metrics.
class Trainer {
 public:
  Trainer(DecMdp mdp, TrainerConfig cfg);

  std::vector<IterationRow> run_iteration(int iter, bool oracle_enabled);

  const DecMdp& mdp() const { return mdp_; }
  const JointPolicy& policy() const { return policy_; }
  const ValueTable& value() const { return value_; }
  const TrainerConfig& config() const { return cfg_; }
  double exact_return() const;
  double last_empirical_return() const { return last_empirical_return_; }

 private:
  DecMdp mdp_;
  TrainerConfig cfg_;
  JointPolicy policy_;
  ValueTable value_;
  Rng rng_;
  double last_empirical_return_ = 0.0;
};

}  // namespace marlab
