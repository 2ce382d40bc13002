#pragma once

#include <span>
#include <string>
#include <vector>

#include "marlab/policy.hpp"
#include "marlab/rollout.hpp"

namespace marlab {

enum class Estimator { gae, preopc, vtrace };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

/// Learned global value table over states.
struct ValueTable {
  std::vector<double> v;

  static ValueTable zeros(int n_states) { return ValueTable{std::vector<double>(n_states, 0.0)}; }
};

/// Per-step advantage estimates plus regression targets, aligned with the
/// batch's step indexing. value_target[t] - advantage[t] == V(s_t) exactly.
struct AdvantageField {
  std::vector<double> advantage;
  std::vector<double> value_target;
  Estimator estimator = Estimator::gae;
};

/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t); terminal steps bootstrap zero.
std::vector<double> td_residuals(const RolloutBatch& batch,
                                 const ValueTable& v, double gamma);

/// A_t = sum_k (gamma lambda)^k delta_{t+k} within each episode, as a single
/// backward pass over the residuals.
std::vector<double> gae_from_residuals(const RolloutBatch& batch,
                                       std::span<const double> deltas,
                                       double gamma, double lambda);

AdvantageField gae(const RolloutBatch& batch, const ValueTable& v,
                   double gamma, double lambda);

/// Off-policy corrected estimator: the GAE recursion with each residual's
/// weight truncated by the joint ratio of `intermediate` against the stored
/// behavior probabilities,
///   A_t = delta_t + gamma * lambda * min(1, rho_{t+1}) * A_{t+1}.
/// With intermediate == base every ratio is exactly 1 and the result is
/// bit-identical to gae().
AdvantageField preopc(const RolloutBatch& batch, const ValueTable& v,
                      const JointPolicy& base, const JointPolicy& intermediate,
                      double gamma, double lambda);

/// Same recursion with the ratio taken over the full target joint policy
/// (every agent), used by the simultaneous-update ablation baselines.
AdvantageField vtrace_advantage(const RolloutBatch& batch, const ValueTable& v,
                                const JointPolicy& base,
                                const JointPolicy& target, double gamma,
                                double lambda);

/// Plain gradient descent on the mean squared error between V(s_t) and the
/// stored value targets. Stable (MSE non-increasing) for lr <= 1 since the
/// per-state curvature is 2 * count_s / N <= 2.
ValueTable fit_value(ValueTable v, const RolloutBatch& batch,
                     const AdvantageField& targets, int epochs, double lr);

/// CSV with header episode,t,advantage,value_target,estimator.
std::string advantage_to_csv(const RolloutBatch& batch,
                             const AdvantageField& field);

}  // namespace marlab
