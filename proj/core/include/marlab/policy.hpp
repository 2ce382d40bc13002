#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "marlab/rng.hpp"

namespace marlab {

/// Softmax-over-logits action distribution for a single agent. Probabilities
/// are cached and kept in sync with the logits; softmax keeps every action
/// probability strictly positive, which the importance ratios rely on.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(int n_states, int n_actions);  // zero logits = uniform

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  double prob(int s, int a) const {
    return probs_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  double logit(int s, int a) const {
    return logits_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  std::span<const double> probs_at(int s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * n_actions_,
            static_cast<std::size_t>(n_actions_)};
  }
  std::span<const double> logits() const { return logits_; }

  void set_logits(std::span<const double> logits);
  void set_logit(int s, int a, double value);

  /// In-place gradient step: logits += step, then clamp to +/-60 so the
  /// softmax never underflows to an exact zero probability.
  void add_to_logits(std::span<const double> step);

  void randomize_logits(double scale, Rng& rng);

 private:
  void recompute_probs();

  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<double> logits_;
  std::vector<double> probs_;
};

/// Product policy over all agents: joint probability of a joint action is
/// the product of the per-agent probabilities.
class JointPolicy {
 public:
  JointPolicy() = default;
  explicit JointPolicy(std::vector<TabularPolicy> agents)
      : agents_(std::move(agents)) {}

  /// Uniform joint policy matching an environment's shape.
  static JointPolicy uniform(int n_states, std::span<const int> action_counts);

  int n_agents() const { return static_cast<int>(agents_.size()); }
  const TabularPolicy& agent(int i) const { return agents_[i]; }
  TabularPolicy& agent(int i) { return agents_[i]; }

  double joint_prob(int s, std::span<const int> actions) const;

  /// Fingerprint of the logits, used to tag rollout batches with the
  /// behavior policy that produced them.
  std::uint64_t fingerprint() const;

 private:
  std::vector<TabularPolicy> agents_;
};

}  // namespace marlab
