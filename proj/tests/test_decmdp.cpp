#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "marlab/decmdp.hpp"
#include "marlab/environments.hpp"
#include "marlab/oracle.hpp"
#include "marlab/policy.hpp"
#include "marlab/rollout.hpp"

using namespace marlab;

namespace {

DecMdp single_state_chain(double reward, double gamma) {
  DecMdp mdp = DecMdp::make(1, {1}, gamma);
  mdp.rew(0, 0) = reward;
  mdp.trans(0, 0, 0) = 1.0;
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  return mdp;
}

JointPolicy random_policy(const DecMdp& mdp, double scale, std::uint64_t seed) {
  Rng rng(seed);
  JointPolicy jp = JointPolicy::uniform(mdp.n_states, mdp.action_counts);
  for (int i = 0; i < jp.n_agents(); ++i)
    jp.agent(i).randomize_logits(scale, rng);
  return jp;
}

}  // namespace

TEST_CASE("mixed-radix joint action encoding, agent 0 most significant") {
  DecMdp mdp = DecMdp::make(1, {3, 2, 4}, 0.9);
  CHECK(mdp.n_joint_actions() == 24);
  const int a0 = 2, a1 = 1, a2 = 3;
  const int ja = mdp.encode_actions(std::vector<int>{a0, a1, a2});
  CHECK(ja == (a0 * 2 + a1) * 4 + a2);
  std::vector<int> decoded(3);
  mdp.decode_actions(ja, decoded);
  CHECK(decoded == std::vector<int>{a0, a1, a2});
  for (int j = 0; j < 24; ++j) {
    mdp.decode_actions(j, decoded);
    CHECK(mdp.encode_actions(decoded) == j);
  }
}

TEST_CASE("joint_prob: product of uniforms") {
  JointPolicy jp = JointPolicy::uniform(3, std::vector<int>{2, 2});
  for (int s = 0; s < 3; ++s)
    for (int a0 = 0; a0 < 2; ++a0)
      for (int a1 = 0; a1 < 2; ++a1)
        CHECK(jp.joint_prob(s, std::vector<int>{a0, a1}) ==
              doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("joint_prob: softmax saturation") {
  TabularPolicy p(1, 2);
  p.set_logit(0, 0, 20.0);
  p.set_logit(0, 1, -20.0);
  JointPolicy jp(std::vector<TabularPolicy>{p});
  CHECK(jp.joint_prob(0, std::vector<int>{0}) >= 1.0 - 1e-8);
}

TEST_CASE("joint_prob matches an independent softmax product") {
  Rng rng(11);
  const int S = 4;
  std::vector<std::vector<double>> logits(2);
  JointPolicy jp = JointPolicy::uniform(S, std::vector<int>{3, 2});
  for (int i = 0; i < 2; ++i) {
    logits[i].resize(S * jp.agent(i).n_actions());
    for (double& l : logits[i]) l = rng.normal();
    jp.agent(i).set_logits(logits[i]);
  }
  // Oracle: softmax computed directly from the raw logits, no shared code.
  auto softmax_prob = [&](int agent, int s, int a) {
    const int na = jp.agent(agent).n_actions();
    double denom = 0.0;
    for (int b = 0; b < na; ++b) denom += std::exp(logits[agent][s * na + b]);
    return std::exp(logits[agent][s * na + a]) / denom;
  };
  for (int s = 0; s < S; ++s)
    for (int a0 = 0; a0 < 3; ++a0)
      for (int a1 = 0; a1 < 2; ++a1)
        CHECK(jp.joint_prob(s, std::vector<int>{a0, a1}) ==
              doctest::Approx(softmax_prob(0, s, a0) * softmax_prob(1, s, a1))
                  .epsilon(1e-12));
}

TEST_CASE("joint_prob: out-of-range index throws") {
  JointPolicy jp = JointPolicy::uniform(2, std::vector<int>{2});
  CHECK_THROWS_AS((void)jp.joint_prob(2, std::vector<int>{0}),
                  std::out_of_range);
  CHECK_THROWS_AS((void)jp.joint_prob(0, std::vector<int>{2}),
                  std::out_of_range);
}

TEST_CASE("softmax policies are normalized and strictly positive everywhere") {
  DecMdp mdp = random_decmdp(5, 2, std::vector<int>{3, 3}, 21, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 2.0, 22);
  for (int i = 0; i < jp.n_agents(); ++i) {
    for (int s = 0; s < mdp.n_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < jp.agent(i).n_actions(); ++a) {
        CHECK(jp.agent(i).prob(s, a) > 0.0);
        total += jp.agent(i).prob(s, a);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("joint probabilities sum to one over the joint action space") {
  DecMdp mdp = random_decmdp(4, 3, std::vector<int>{2, 3, 2}, 5, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 1.5, 6);
  std::vector<int> a(3);
  for (int s = 0; s < mdp.n_states; ++s) {
    double total = 0.0;
    for (int ja = 0; ja < mdp.n_joint_actions(); ++ja) {
      mdp.decode_actions(ja, a);
      total += jp.joint_prob(s, a);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("rollout: degenerate single-state chain") {
  DecMdp mdp = single_state_chain(1.0, 0.9);
  JointPolicy jp = JointPolicy::uniform(1, mdp.action_counts);
  RolloutBatch batch = rollout(mdp, jp, 3, 10, 42);
  REQUIRE(batch.n_episodes() == 10);
  for (int e = 0; e < batch.n_episodes(); ++e) {
    CHECK(batch.episode_end(e) - batch.episode_begin(e) == 3);
    for (int t = batch.episode_begin(e); t < batch.episode_end(e); ++t) {
      CHECK(batch.rewards[t] == 1.0);
      CHECK(batch.done[t] == (t == batch.episode_end(e) - 1 ? 1 : 0));
    }
  }
}

TEST_CASE("rollout: identical seeds give byte-identical batches") {
  DecMdp mdp = random_decmdp(4, 2, std::vector<int>{2, 2}, 31, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 1.0, 32);
  RolloutBatch a = rollout(mdp, jp, 16, 20, 7);
  RolloutBatch b = rollout(mdp, jp, 16, 20, 7);
  CHECK(rollout_to_csv(a) == rollout_to_csv(b));
  CHECK(a.behavior_policy_id == b.behavior_policy_id);
  RolloutBatch c = rollout(mdp, jp, 16, 20, 8);
  CHECK(rollout_to_csv(a) != rollout_to_csv(c));
}

TEST_CASE("rollout: stored behavior probabilities equal re-evaluation") {
  DecMdp mdp = random_decmdp(4, 2, std::vector<int>{3, 2}, 33, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 1.0, 34);
  RolloutBatch batch = rollout(mdp, jp, 8, 10, 3);
  for (int t = 0; t < batch.n_steps(); ++t)
    for (int i = 0; i < batch.n_agents; ++i)
      CHECK(batch.behavior_prob(t, i) ==
            doctest::Approx(
                jp.agent(i).prob(batch.states[t], batch.action(t, i)))
                .epsilon(1e-12));
}

TEST_CASE("rollout: discounted state-visit frequencies track the oracle d") {
  DecMdp mdp = random_decmdp(3, 2, std::vector<int>{2, 2}, 51, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 0.7, 52);
  const ExactEval ev = exact_eval(mdp, jp);

  const int horizon = 100;    // gamma^100 ~ 2.7e-5: negligible tail
  const int episodes = 1000;  // 1e5 steps total
  RolloutBatch batch = rollout(mdp, jp, horizon, episodes, 99);
  std::vector<double> freq(mdp.n_states, 0.0);
  double mass = 0.0;
  for (int e = 0; e < batch.n_episodes(); ++e) {
    double g = 1.0;
    for (int t = batch.episode_begin(e); t < batch.episode_end(e); ++t) {
      freq[batch.states[t]] += g;
      mass += g;
      g *= mdp.gamma;
    }
  }
  for (int s = 0; s < mdp.n_states; ++s)
    CHECK(std::abs(freq[s] / mass - ev.visitation[s]) < 0.02);
}

TEST_CASE("empirical_return: trivial cases") {
  DecMdp mdp = single_state_chain(0.0, 0.9);
  JointPolicy jp = JointPolicy::uniform(1, mdp.action_counts);
  CHECK(empirical_return(rollout(mdp, jp, 5, 4, 1), 0.9) == 0.0);

  DecMdp one = single_state_chain(1.0, 0.9);
  RolloutBatch batch = rollout(one, jp, 3, 1, 1);
  batch.rewards[1] = 0.0;  // hand pattern [1, 0, 0]
  batch.rewards[2] = 0.0;
  CHECK(empirical_return(batch, 0.9) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("empirical_return converges to the oracle J") {
  DecMdp mdp = random_decmdp(4, 2, std::vector<int>{2, 2}, 61, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 0.8, 62);
  const double j_exact = exact_eval(mdp, jp).expected_return;

  const int episodes = 10000;
  RolloutBatch batch = rollout(mdp, jp, 150, episodes, 5);
  std::vector<double> returns(episodes);
  for (int e = 0; e < episodes; ++e) {
    double g = 1.0, ret = 0.0;
    for (int t = batch.episode_begin(e); t < batch.episode_end(e); ++t) {
      ret += g * batch.rewards[t];
      g *= mdp.gamma;
    }
    returns[e] = ret;
  }
  const double mean =
      std::accumulate(returns.begin(), returns.end(), 0.0) / episodes;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double se = std::sqrt(var / episodes / episodes);
  CHECK(std::abs(mean - j_exact) < 3.0 * se + 1e-6);
}

TEST_CASE("empirical_return rejects an empty batch") {
  RolloutBatch batch;
  batch.episode_offsets = {0};
  CHECK_THROWS_AS((void)empirical_return(batch, 0.9), std::invalid_argument);
}

TEST_CASE("DecMdp JSON round-trip and validation errors") {
  DecMdp mdp = random_decmdp(3, 2, std::vector<int>{2, 2}, 71, 1.0, 0.92);
  DecMdp back = DecMdp::from_json(mdp.to_json());
  CHECK(back.n_states == mdp.n_states);
  CHECK(back.gamma == mdp.gamma);
  CHECK(back.transition == mdp.transition);
  CHECK(back.reward == mdp.reward);
  CHECK(back.initial_dist == mdp.initial_dist);

  nlohmann::json bad = mdp.to_json();
  bad["transition"][0][0][0] = 0.5;  // break row-stochasticity
  CHECK_THROWS_WITH_AS((void)DecMdp::from_json(bad),
                       doctest::Contains("transition"), std::invalid_argument);

  nlohmann::json missing = mdp.to_json();
  missing.erase("gamma");
  CHECK_THROWS_WITH_AS((void)DecMdp::from_json(missing),
                       doctest::Contains("gamma"), std::invalid_argument);

  nlohmann::json bad_init = mdp.to_json();
  bad_init["initial_dist"][0] = -0.25;
  CHECK_THROWS_WITH_AS((void)DecMdp::from_json(bad_init),
                       doctest::Contains("initial_dist"),
                       std::invalid_argument);
}

TEST_CASE("rollout CSV has the documented schema") {
  DecMdp mdp = random_decmdp(3, 2, std::vector<int>{2, 2}, 81, 1.0, 0.9);
  JointPolicy jp = random_policy(mdp, 0.5, 82);
  RolloutBatch batch = rollout(mdp, jp, 4, 2, 9);
  const std::string csv = rollout_to_csv(batch);
  CHECK(csv.rfind("episode,t,state,a_0,a_1,reward,logp_0,logp_1,done\n", 0) ==
        0);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == batch.n_steps() + 1);
}
