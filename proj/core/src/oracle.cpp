#include "marlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace marlab {

namespace {

// Joint action probabilities pi(.|s) for every joint action index, in the
// mixed-radix order of DecMdp.
void joint_probs_at(const DecMdp& mdp, const JointPolicy& jp, int s,
                    std::vector<double>& out) {
  const int n = mdp.n_agents();
  const int nja = mdp.n_joint_actions();
  out.assign(nja, 1.0);
  std::vector<int> a(n);
  for (int ja = 0; ja < nja; ++ja) {
    mdp.decode_actions(ja, a);
    double p = 1.0;
    for (int i = 0; i < n; ++i) p *= jp.agent(i).prob(s, a[i]);
    out[ja] = p;
  }
}

Eigen::VectorXd solve_values(const DecMdp& mdp, const Eigen::MatrixXd& p_pi,
                             const Eigen::VectorXd& r_pi) {
  const int S = mdp.n_states;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
  Eigen::VectorXd v = lu.solve(r_pi);
  if (!v.allFinite())
    throw std::runtime_error("exact_eval: singular value system");
  return v;
}

double bound_factor(double gamma, double tv_sum) {
  // 1/(1-g) - 1/(1-g(1-x)); x may exceed 1, the denominator stays positive.
  return 1.0 / (1.0 - gamma) - 1.0 / (1.0 - gamma * (1.0 - tv_sum));
}

}  // namespace

ExactEval exact_eval(const DecMdp& mdp, const JointPolicy& jp) {
  const int S = mdp.n_states;
  const int nja = mdp.n_joint_actions();

  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(S, S);
  Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(S);
  std::vector<double> jprobs;
  for (int s = 0; s < S; ++s) {
    joint_probs_at(mdp, jp, s, jprobs);
    for (int ja = 0; ja < nja; ++ja) {
      const double p = jprobs[ja];
      if (p == 0.0) continue;
      r_pi(s) += p * mdp.rew(s, ja);
      for (int s2 = 0; s2 < S; ++s2) p_pi(s, s2) += p * mdp.trans(s, ja, s2);
    }
  }

  ExactEval out;
  Eigen::VectorXd v = solve_values(mdp, p_pi, r_pi);
  out.v.assign(v.data(), v.data() + S);

  out.q.resize(static_cast<std::size_t>(S) * nja);
  out.adv.resize(out.q.size());
  for (int s = 0; s < S; ++s) {
    for (int ja = 0; ja < nja; ++ja) {
      double q = mdp.rew(s, ja);
      for (int s2 = 0; s2 < S; ++s2)
        q += mdp.gamma * mdp.trans(s, ja, s2) * out.v[s2];
      out.q[static_cast<std::size_t>(s) * nja + ja] = q;
      out.adv[static_cast<std::size_t>(s) * nja + ja] = q - out.v[s];
    }
  }

  Eigen::VectorXd mu(S);
  for (int s = 0; s < S; ++s) mu(s) = mdp.initial_dist[s];
  Eigen::MatrixXd sys =
      Eigen::MatrixXd::Identity(S, S) - mdp.gamma * p_pi.transpose();
  Eigen::VectorXd d = sys.partialPivLu().solve((1.0 - mdp.gamma) * mu);
  out.visitation.assign(d.data(), d.data() + S);

  out.expected_return = mu.dot(v);
  return out;
}

std::pair<std::vector<double>, double> value_iteration(const DecMdp& mdp,
                                                       double tol,
                                                       int max_iters) {
  const int S = mdp.n_states;
  const int nja = mdp.n_joint_actions();
  std::vector<double> v(S, 0.0), next(S, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    double change = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int ja = 0; ja < nja; ++ja) {
        double q = mdp.rew(s, ja);
        for (int s2 = 0; s2 < S; ++s2)
          q += mdp.gamma * mdp.trans(s, ja, s2) * v[s2];
        best = std::max(best, q);
      }
      next[s] = best;
      change = std::max(change, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (change < tol * (1.0 - mdp.gamma)) break;
  }
  double j = 0.0;
  for (int s = 0; s < S; ++s) j += mdp.initial_dist[s] * v[s];
  return {std::move(v), j};
}

double tv_max(const TabularPolicy& p, const TabularPolicy& q) {
  if (p.n_states() != q.n_states() || p.n_actions() != q.n_actions())
    throw std::invalid_argument("tv_max: shape mismatch");
  double worst = 0.0;
  for (int s = 0; s < p.n_states(); ++s) {
    double l1 = 0.0;
    for (int a = 0; a < p.n_actions(); ++a)
      l1 += std::abs(p.prob(s, a) - q.prob(s, a));
    worst = std::max(worst, 0.5 * l1);
  }
  return worst;
}

double joint_tv_max(const JointPolicy& p, const JointPolicy& q) {
  if (p.n_agents() != q.n_agents())
    throw std::invalid_argument("joint_tv_max: agent count mismatch");
  const int n = p.n_agents();
  std::vector<int> counts(n);
  for (int i = 0; i < n; ++i) {
    if (p.agent(i).n_states() != q.agent(i).n_states() ||
        p.agent(i).n_actions() != q.agent(i).n_actions())
      throw std::invalid_argument("joint_tv_max: shape mismatch");
    counts[i] = p.agent(i).n_actions();
  }
  int nja = 1;
  for (int c : counts) nja *= c;
  const int S = p.agent(0).n_states();

  double worst = 0.0;
  std::vector<int> a(n);
  for (int s = 0; s < S; ++s) {
    double l1 = 0.0;
    for (int ja = 0; ja < nja; ++ja) {
      int rest = ja;
      for (int i = n - 1; i >= 0; --i) {
        a[i] = rest % counts[i];
        rest /= counts[i];
      }
      double pp = 1.0, qq = 1.0;
      for (int i = 0; i < n; ++i) {
        pp *= p.agent(i).prob(s, a[i]);
        qq *= q.agent(i).prob(s, a[i]);
      }
      l1 += std::abs(pp - qq);
    }
    worst = std::max(worst, 0.5 * l1);
  }
  return worst;
}

double performance_difference(const DecMdp& mdp, const JointPolicy& jp_old,
                              const JointPolicy& jp_new) {
  const ExactEval old_eval = exact_eval(mdp, jp_old);
  const ExactEval new_eval = exact_eval(mdp, jp_new);
  const int nja = mdp.n_joint_actions();
  std::vector<double> jprobs;
  double acc = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    joint_probs_at(mdp, jp_new, s, jprobs);
    double inner = 0.0;
    for (int ja = 0; ja < nja; ++ja)
      inner += jprobs[ja] * old_eval.adv_at(s, ja, nja);
    acc += new_eval.visitation[s] * inner;
  }
  return acc / (1.0 - mdp.gamma);
}

std::vector<double> transition_shift(const DecMdp& mdp,
                                     const JointPolicy& jp_from,
                                     const JointPolicy& jp_to) {
  const int S = mdp.n_states;
  const int nja = mdp.n_joint_actions();
  std::vector<double> delta(static_cast<std::size_t>(S) * S, 0.0);
  std::vector<double> pf, pt;
  for (int s = 0; s < S; ++s) {
    joint_probs_at(mdp, jp_from, s, pf);
    joint_probs_at(mdp, jp_to, s, pt);
    for (int ja = 0; ja < nja; ++ja) {
      const double dp = pt[ja] - pf[ja];
      if (dp == 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2)
        delta[static_cast<std::size_t>(s) * S + s2] +=
            mdp.trans(s, ja, s2) * dp;
    }
  }
  return delta;
}

std::vector<double> exact_corrected_advantage(const DecMdp& mdp,
                                              const JointPolicy& base,
                                              const JointPolicy& intermediate,
                                              double lambda,
                                              std::span<const double> v) {
  const int S = mdp.n_states;
  const int nja = mdp.n_joint_actions();
  const int n = mdp.n_agents();

  // Expected TD residual and per-(s,a) truncated correction weight.
  std::vector<double> delta_bar(static_cast<std::size_t>(S) * nja);
  std::vector<double> weight(delta_bar.size());
  std::vector<int> a(n);
  for (int s = 0; s < S; ++s) {
    for (int ja = 0; ja < nja; ++ja) {
      double ev = 0.0;
      for (int s2 = 0; s2 < S; ++s2) ev += mdp.trans(s, ja, s2) * v[s2];
      delta_bar[static_cast<std::size_t>(s) * nja + ja] =
          mdp.rew(s, ja) + mdp.gamma * ev - v[s];
      mdp.decode_actions(ja, a);
      double ratio = 1.0;
      for (int i = 0; i < n; ++i)
        ratio *= intermediate.agent(i).prob(s, a[i]) /
                 base.agent(i).prob(s, a[i]);
      weight[static_cast<std::size_t>(s) * nja + ja] =
          lambda * std::min(1.0, ratio);
    }
  }

  // F(s) = E_base[ w * (delta_bar + gamma * F(s')) ] is linear with spectral
  // radius <= gamma * lambda < 1.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S, S);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
  std::vector<double> jprobs;
  for (int s = 0; s < S; ++s) {
    joint_probs_at(mdp, base, s, jprobs);
    for (int ja = 0; ja < nja; ++ja) {
      const double pw = jprobs[ja] * weight[static_cast<std::size_t>(s) * nja + ja];
      if (pw == 0.0) continue;
      b(s) += pw * delta_bar[static_cast<std::size_t>(s) * nja + ja];
      for (int s2 = 0; s2 < S; ++s2) m(s, s2) += pw * mdp.trans(s, ja, s2);
    }
  }
  Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(S, S) - mdp.gamma * m;
  Eigen::VectorXd f = sys.partialPivLu().solve(b);

  std::vector<double> corrected(delta_bar.size());
  for (int s = 0; s < S; ++s) {
    for (int ja = 0; ja < nja; ++ja) {
      double tail = 0.0;
      for (int s2 = 0; s2 < S; ++s2) tail += mdp.trans(s, ja, s2) * f(s2);
      corrected[static_cast<std::size_t>(s) * nja + ja] =
          delta_bar[static_cast<std::size_t>(s) * nja + ja] +
          mdp.gamma * tail;
    }
  }
  return corrected;
}

double exact_preopc_error(const DecMdp& mdp, const JointPolicy& base,
                          const JointPolicy& intermediate, double lambda) {
  // The estimator is built on the value function of the policy it targets
  // (the value regression in the training loop tracks exactly that), so the
  // idealized error uses V = exact V of `intermediate`. The TD residuals
  // then equal A^intermediate and the correction only has to repair the
  // future-action mismatch; this is also the convention under which the
  // error is provably <= gamma*lambda*max|A^inter|/(1 - gamma*lambda).
  const ExactEval inter_eval = exact_eval(mdp, intermediate);
  const std::vector<double> corrected =
      exact_corrected_advantage(mdp, base, intermediate, lambda, inter_eval.v);
  double sup = 0.0;
  for (std::size_t i = 0; i < corrected.size(); ++i)
    sup = std::max(sup, std::abs(corrected[i] - inter_eval.adv[i]));
  return sup;
}

namespace {

// Intermediate joint policy: target policies for the first k agents of the
// order, base for the rest.
JointPolicy prefix_policy(const JointPolicy& base, const JointPolicy& target,
                          std::span<const int> order, int k) {
  JointPolicy jp = base;
  for (int pos = 0; pos < k; ++pos) jp.agent(order[pos]) = target.agent(order[pos]);
  return jp;
}

// E_{(s,a) ~ (d, pi_act)}[ field(s,a) ] over a flat [s][ja] field.
double expect_under(const DecMdp& mdp, std::span<const double> d,
                    const JointPolicy& pi_act, std::span<const double> field) {
  const int nja = mdp.n_joint_actions();
  std::vector<double> jprobs;
  double acc = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    joint_probs_at(mdp, pi_act, s, jprobs);
    double inner = 0.0;
    for (int ja = 0; ja < nja; ++ja)
      inner += jprobs[ja] * field[static_cast<std::size_t>(s) * nja + ja];
    acc += d[s] * inner;
  }
  return acc;
}

double sup_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

BoundReport bound_report(const DecMdp& mdp, const JointPolicy& jp_base,
                         const JointPolicy& jp_target,
                         std::span<const int> update_order, double lambda) {
  const int n = mdp.n_agents();
  std::vector<bool> seen(n, false);
  for (int i : update_order) {
    if (i < 0 || i >= n || seen[i])
      throw std::invalid_argument("bound_report: order must be a permutation");
    seen[i] = true;
  }
  if (static_cast<int>(update_order.size()) != n)
    throw std::invalid_argument("bound_report: order must be a permutation");
  const double gamma = mdp.gamma;
  const double horizon_mass = 1.0 / (1.0 - gamma);

  const ExactEval base_eval = exact_eval(mdp, jp_base);

  BoundReport rep;
  rep.epsilon_base = sup_abs(base_eval.adv);
  rep.epsilon_per_agent.assign(n, 0.0);
  rep.alpha.assign(n, 0.0);
  rep.xi.assign(n, 0.0);
  rep.per_agent_gap.assign(n, 0.0);
  rep.a2po_single_agent_bounds.assign(n, 0.0);
  rep.a2po_single_agent_bounds_loose.assign(n, 0.0);
  rep.rpisa_single_agent_bounds.assign(n, 0.0);
  rep.naive_per_agent.assign(n, 0.0);

  for (int i = 0; i < n; ++i)
    rep.alpha[i] = tv_max(jp_base.agent(i), jp_target.agent(i));

  // Walk the stage once, collecting per-agent quantities in update order.
  std::vector<double> tv_prefix_sum(n, 0.0);  // S_i over e^i u {i}, by agent
  double running = 0.0;
  double signed_joint_gap = 0.0;
  JointPolicy prev = jp_base;
  ExactEval prev_eval = base_eval;
  for (int k = 0; k < n; ++k) {
    const int agent = update_order[k];
    running += rep.alpha[agent];
    tv_prefix_sum[agent] = running;

    rep.epsilon_per_agent[agent] = sup_abs(prev_eval.adv);
    // Corrected-advantage field for this turn, built on the exact value of
    // the current prefix policy (see exact_preopc_error for the convention).
    const std::vector<double> corrected = exact_corrected_advantage(
        mdp, jp_base, prev, lambda, prev_eval.v);
    double xi = 0.0;
    for (std::size_t idx = 0; idx < corrected.size(); ++idx)
      xi = std::max(xi, std::abs(corrected[idx] - prev_eval.adv[idx]));
    rep.xi[agent] = xi;

    JointPolicy next = prefix_policy(jp_base, jp_target, update_order, k + 1);
    ExactEval next_eval = exact_eval(mdp, next);

    const double surrogate_gain =
        horizon_mass *
        expect_under(mdp, base_eval.visitation, next, corrected);
    const double signed_gap = next_eval.expected_return -
                              prev_eval.expected_return - surrogate_gain;
    rep.per_agent_gap[agent] = std::abs(signed_gap);
    signed_joint_gap += signed_gap;

    prev = std::move(next);
    prev_eval = std::move(next_eval);
  }
  rep.joint_gap = std::abs(signed_joint_gap);

  rep.epsilon = 0.0;
  for (int i = 0; i < n; ++i)
    rep.epsilon = std::max(rep.epsilon, rep.epsilon_per_agent[i]);

  const double tv_total = running;
  double mappo = 0.0, coppo = 0.0, rpisa = 0.0, a2po = 0.0, a2po_loose = 0.0;
  double naive = 0.0, xi_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const int i = update_order[k];
    const double a = rep.alpha[i];
    const double s_i = tv_prefix_sum[i];
    const double eps_i = rep.epsilon_per_agent[i];

    mappo += 4.0 * rep.epsilon * a * horizon_mass;
    coppo += 4.0 * rep.epsilon * a * bound_factor(gamma, tv_total);
    rpisa += 4.0 * rep.epsilon * a * bound_factor(gamma, a);
    a2po += 4.0 * rep.epsilon * a * bound_factor(gamma, s_i);
    a2po_loose += 4.0 * gamma * rep.epsilon * a * s_i /
                  ((1.0 - gamma) * (1.0 - gamma));
    xi_sum += rep.xi[i];

    rep.rpisa_single_agent_bounds[i] =
        4.0 * rep.epsilon * a * bound_factor(gamma, a);
    rep.a2po_single_agent_bounds[i] =
        4.0 * eps_i * a * bound_factor(gamma, s_i) +
        rep.xi[i] * horizon_mass;
    rep.a2po_single_agent_bounds_loose[i] =
        4.0 * gamma * eps_i * a * s_i / ((1.0 - gamma) * (1.0 - gamma)) +
        rep.xi[i] * horizon_mass;

    // Preceding-agent TV mass for the naive uncontrollable term.
    const double preceding = s_i - a;
    rep.naive_per_agent[i] =
        4.0 * eps_i * a * bound_factor(gamma, s_i) +
        (4.0 * a * eps_i + 2.0 * preceding * rep.epsilon_base) * horizon_mass;
    naive += rep.naive_per_agent[i];
  }
  rep.bounds["mappo"] = mappo;
  rep.bounds["coppo"] = coppo;
  rep.bounds["happo"] = coppo;
  rep.bounds["rpisa_ppo"] = rpisa;
  rep.bounds["a2po"] = a2po + xi_sum * horizon_mass;
  rep.bounds["a2po_loose"] = a2po_loose + xi_sum * horizon_mass;
  rep.bounds["naive"] = naive;
  return rep;
}

std::vector<double> incremental_bounds(const DecMdp& mdp,
                                       const JointPolicy& jp_base,
                                       const JointPolicy& jp_target,
                                       std::span<const int> update_order,
                                       double lambda) {
  const int n = mdp.n_agents();
  const BoundReport rep =
      bound_report(mdp, jp_base, jp_target, update_order, lambda);
  const double horizon_mass = 1.0 / (1.0 - mdp.gamma);

  // Theorem terms with the stage-shared epsilon, per order position.
  std::vector<double> theorem_term(n), realized(n);
  double running = 0.0;
  for (int k = 0; k < n; ++k) {
    const int i = update_order[k];
    running += rep.alpha[i];
    theorem_term[k] =
        4.0 * rep.epsilon * rep.alpha[i] * bound_factor(mdp.gamma, running) +
        rep.xi[i] * horizon_mass;
    realized[k] = rep.per_agent_gap[i];
  }
  std::vector<double> partial(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) {
    double b = 0.0;
    for (int pos = 0; pos < k; ++pos) b += realized[pos];
    for (int pos = k; pos < n; ++pos) b += theorem_term[pos];
    partial[k] = b;
  }
  return partial;
}

nlohmann::json BoundReport::to_json() const {
  return nlohmann::json{
      {"epsilon", epsilon},
      {"epsilon_base", epsilon_base},
      {"epsilon_per_agent", epsilon_per_agent},
      {"alpha", alpha},
      {"xi", xi},
      {"bounds", bounds},
      {"a2po_single_agent_bounds", a2po_single_agent_bounds},
      {"a2po_single_agent_bounds_loose", a2po_single_agent_bounds_loose},
      {"rpisa_single_agent_bounds", rpisa_single_agent_bounds},
      {"naive_per_agent", naive_per_agent},
      {"per_agent_gap", per_agent_gap},
      {"joint_gap", joint_gap}};
}

}  // namespace marlab
