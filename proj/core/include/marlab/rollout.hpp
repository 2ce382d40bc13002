#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marlab/decmdp.hpp"
#include "marlab/policy.hpp"

namespace marlab {

/// Trajectories collected under a frozen joint policy, stored
/// structure-of-arrays. Step t of episode e lives at index
/// episode_offsets[e] + t; per-agent quantities are interleaved with stride
/// n_agents. `behavior_probs` stores pi^i(a^i_t | s_t) for the policy the
/// batch was collected under — the importance-ratio denominators.
struct RolloutBatch {
  int n_agents = 0;
  std::vector<int> episode_offsets;  // size n_episodes + 1
  std::vector<int> states;
  std::vector<int> actions;          // step-major, agent-minor
  std::vector<double> rewards;
  std::vector<double> behavior_probs;
  std::vector<std::uint8_t> done;    // 1 on the final step of each episode
  std::uint64_t behavior_policy_id = 0;

  int n_episodes() const {
    return static_cast<int>(episode_offsets.size()) - 1;
  }
  int n_steps() const { return static_cast<int>(states.size()); }
  int episode_begin(int e) const { return episode_offsets[e]; }
  int episode_end(int e) const { return episode_offsets[e + 1]; }
  int action(int t, int agent) const {
    return actions[static_cast<std::size_t>(t) * n_agents + agent];
  }
  double behavior_prob(int t, int agent) const {
    return behavior_probs[static_cast<std::size_t>(t) * n_agents + agent];
  }
};

/// Samples `n_episodes` trajectories of exactly `horizon` steps each from
/// (initial_dist, policy, transition). Episodes never stop early: absorbing
/// states self-loop, so only the final step carries the done flag. The same
/// (mdp, policy, horizon, n_episodes, seed) always yields a bit-identical
/// batch; per-episode streams are split off the seed so episode e does not
/// depend on how many came before it.
RolloutBatch rollout(const DecMdp& mdp, const JointPolicy& jp, int horizon,
                     int n_episodes, std::uint64_t seed);

/// Mean over episodes of the discounted reward sum.
double empirical_return(const RolloutBatch& batch, double gamma);

/// CSV with header episode,t,state,a_0..,reward,logp_0..,done.
std::string rollout_to_csv(const RolloutBatch& batch);

}  // namespace marlab
