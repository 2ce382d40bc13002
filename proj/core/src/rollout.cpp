#include "marlab/rollout.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace marlab {

RolloutBatch rollout(const DecMdp& mdp, const JointPolicy& jp, int horizon,
                     int n_episodes, std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  if (n_episodes < 1)
    throw std::invalid_argument("rollout: n_episodes must be >= 1");

  const int n = mdp.n_agents();
  RolloutBatch batch;
  batch.n_agents = n;
  batch.behavior_policy_id = jp.fingerprint();
  batch.episode_offsets.reserve(n_episodes + 1);
  const std::size_t total = static_cast<std::size_t>(horizon) * n_episodes;
  batch.states.reserve(total);
  batch.rewards.reserve(total);
  batch.done.reserve(total);
  batch.actions.reserve(total * n);
  batch.behavior_probs.reserve(total * n);

  std::vector<int> joint(n);
  std::vector<double> trans_row(mdp.n_states);
  for (int e = 0; e < n_episodes; ++e) {
    batch.episode_offsets.push_back(batch.n_steps());
    Rng rng(split_seed(seed, static_cast<std::uint64_t>(e)));
    int s = rng.categorical(mdp.initial_dist);
    for (int t = 0; t < horizon; ++t) {
      for (int i = 0; i < n; ++i) {
        joint[i] = rng.categorical(jp.agent(i).probs_at(s));
      }
      const int ja = mdp.encode_actions(joint);
      batch.states.push_back(s);
      for (int i = 0; i < n; ++i) {
        batch.actions.push_back(joint[i]);
        batch.behavior_probs.push_back(jp.agent(i).prob(s, joint[i]));
      }
      batch.rewards.push_back(mdp.rew(s, ja));
      batch.done.push_back(t + 1 == horizon ? 1 : 0);
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        trans_row[s2] = mdp.trans(s, ja, s2);
      s = rng.categorical(trans_row);
    }
  }
  batch.episode_offsets.push_back(batch.n_steps());
  return batch;
}

double empirical_return(const RolloutBatch& batch, double gamma) {
  if (batch.n_episodes() == 0)
    throw std::invalid_argument("empirical_return: empty batch");
  double total = 0.0;
  for (int e = 0; e < batch.n_episodes(); ++e) {
    double g = 1.0;
    double ret = 0.0;
    for (int t = batch.episode_begin(e); t < batch.episode_end(e); ++t) {
      ret += g * batch.rewards[t];
      g *= gamma;
    }
    total += ret;
  }
  return total / batch.n_episodes();
}

std::string rollout_to_csv(const RolloutBatch& batch) {
  std::string out = "episode,t,state";
  char buf[64];
  for (int i = 0; i < batch.n_agents; ++i) {
    std::snprintf(buf, sizeof(buf), ",a_%d", i);
    out += buf;
  }
  out += ",reward";
  for (int i = 0; i < batch.n_agents; ++i) {
    std::snprintf(buf, sizeof(buf), ",logp_%d", i);
    out += buf;
  }
  out += ",done\n";
  for (int e = 0; e < batch.n_episodes(); ++e) {
    for (int t = batch.episode_begin(e); t < batch.episode_end(e); ++t) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d", e, t - batch.episode_begin(e),
                    batch.states[t]);
      out += buf;
      for (int i = 0; i < batch.n_agents; ++i) {
        std::snprintf(buf, sizeof(buf), ",%d", batch.action(t, i));
        out += buf;
      }
      std::snprintf(buf, sizeof(buf), ",%.17g", batch.rewards[t]);
      out += buf;
      for (int i = 0; i < batch.n_agents; ++i) {
        std::snprintf(buf, sizeof(buf), ",%.17g",
                      std::log(batch.behavior_prob(t, i)));
        out += buf;
      }
      out += batch.done[t] ? ",1\n" : ",0\n";
    }
  }
  return out;
}

}  // namespace marlab
