#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "marlab/decmdp.hpp"
#include "marlab/policy.hpp"

namespace marlab {

/// Exact evaluation of a joint policy on a finite DEC-MDP: values, joint
/// action values and advantages from a direct linear solve, the normalized
/// discounted state visitation distribution, and the expected return.
struct ExactEval {
  std::vector<double> v;           // V(s)
  std::vector<double> q;           // Q(s, joint_a), stride n_joint_actions
  std::vector<double> adv;         // A(s, joint_a) = Q - V
  std::vector<double> visitation;  // d(s), sums to 1
  double expected_return = 0.0;    // J = sum_s initial(s) V(s)

  double q_at(int s, int ja, int n_joint) const {
    return q[static_cast<std::size_t>(s) * n_joint + ja];
  }
  double adv_at(int s, int ja, int n_joint) const {
    return adv[static_cast<std::size_t>(s) * n_joint + ja];
  }
};

ExactEval exact_eval(const DecMdp& mdp, const JointPolicy& jp);

/// Optimal value function and expected return of the centralized problem
/// (max over joint actions), by value iteration to the given tolerance.
std::pair<std::vector<double>, double> value_iteration(const DecMdp& mdp,
                                                       double tol = 1e-12,
                                                       int max_iters = 1000000);

/// max over states of the total variation distance between two per-agent
/// action distributions.
double tv_max(const TabularPolicy& p, const TabularPolicy& q);

/// max over states of the total variation distance between two joint action
/// distributions, enumerated over the joint action space.
double joint_tv_max(const JointPolicy& p, const JointPolicy& q);

/// (1/(1-gamma)) E_{(s,a) ~ (d^new, new)}[A^old(s,a)], computed exactly.
/// Equals J(new) - J(old).
double performance_difference(const DecMdp& mdp, const JointPolicy& jp_old,
                              const JointPolicy& jp_new);

/// Signed state-transition shift induced by swapping `from` for `to`:
/// Delta(s'|s) = sum_a T(s'|s,a) (to(a|s) - from(a|s)). Rows sum to zero.
std::vector<double> transition_shift(const DecMdp& mdp,
                                     const JointPolicy& jp_from,
                                     const JointPolicy& jp_to);

/// Exact expectation of the truncated-ratio off-policy advantage recursion:
/// the corrected estimator's conditional mean given (s, a), with future
/// actions drawn from `base` and the per-step weight
/// lambda * min(1, intermediate(a|s)/base(a|s)). The per-step weight is a
/// function of (s, a) only, so the expectation solves a linear fixed point —
/// no horizon truncation. `v` is the value table the TD residuals use.
/// Returns a flat [s][joint_a] matrix.
std::vector<double> exact_corrected_advantage(const DecMdp& mdp,
                                              const JointPolicy& base,
                                              const JointPolicy& intermediate,
                                              double lambda,
                                              std::span<const double> v);

/// Sup-norm distance between the exact corrected-advantage expectation
/// (computed with V = exact V of `base`) and the exact advantage of
/// `intermediate`. This is the xi quantity in the single-agent bound.
double exact_preopc_error(const DecMdp& mdp, const JointPolicy& base,
                          const JointPolicy& intermediate, double lambda);

/// All the exact quantities and monotonic-bound values for one stage update
/// base -> target executed in `update_order`. Vectors are indexed by agent.
struct BoundReport {
  double epsilon = 0.0;                  // max_i epsilon_per_agent[i]
  double epsilon_base = 0.0;             // sup |A^base|
  std::vector<double> epsilon_per_agent; // sup |A^{prefix before agent i}|
  std::vector<double> alpha;             // TV^max(base^i, target^i)
  std::vector<double> xi;                // corrected-advantage error per agent
  std::map<std::string, double> bounds;  // naive, rpisa_ppo, mappo, coppo,
                                         // happo, a2po (+ *_loose variants)
  std::vector<double> a2po_single_agent_bounds;
  std::vector<double> a2po_single_agent_bounds_loose;
  std::vector<double> rpisa_single_agent_bounds;

  // Exact surrogate gaps the theorems bound, for direct inequality checks.
  std::vector<double> per_agent_gap;     // |J(prefix+i) - L_i|
  double joint_gap = 0.0;                // |J(target) - G|
  std::vector<double> naive_per_agent;   // App-style naive per-agent bounds

  nlohmann::json to_json() const;
};

BoundReport bound_report(const DecMdp& mdp, const JointPolicy& jp_base,
                         const JointPolicy& jp_target,
                         std::span<const int> update_order, double lambda);

/// Partially realized joint bound after the first k agents of the order have
/// committed: realized |J - L| gaps for them, theorem bounds for the rest.
/// k = 0 gives the full a-priori bound. Used for the incremental-tightening
/// check.
std::vector<double> incremental_bounds(const DecMdp& mdp,
                                       const JointPolicy& jp_base,
                                       const JointPolicy& jp_target,
                                       std::span<const int> update_order,
                                       double lambda);

}  // namespace marlab
