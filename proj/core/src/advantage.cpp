#include "marlab/advantage.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace marlab {

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::gae: return "gae";
    case Estimator::preopc: return "preopc";
    case Estimator::vtrace: return "vtrace";
  }
  return "gae";
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "gae") return Estimator::gae;
  if (s == "preopc") return Estimator::preopc;
  if (s == "vtrace") return Estimator::vtrace;
  throw std::invalid_argument("unknown estimator: " + s);
}

std::vector<double> td_residuals(const RolloutBatch& batch,
                                 const ValueTable& v, double gamma) {
  if (batch.n_episodes() == 0)
    throw std::invalid_argument("td_residuals: empty batch");
  std::vector<double> deltas(batch.n_steps());
  for (int e = 0; e < batch.n_episodes(); ++e) {
    const int end = batch.episode_end(e);
    for (int t = batch.episode_begin(e); t < end; ++t) {
      const double v_next =
          (batch.done[t] || t + 1 == end) ? 0.0 : v.v[batch.states[t + 1]];
      deltas[t] = batch.rewards[t] + gamma * v_next - v.v[batch.states[t]];
    }
  }
  return deltas;
}

namespace {

AdvantageField finish_field(const RolloutBatch& batch, const ValueTable& v,
                            std::vector<double> adv, Estimator tag) {
  AdvantageField field;
  field.estimator = tag;
  field.value_target.resize(adv.size());
  for (int t = 0; t < batch.n_steps(); ++t)
    field.value_target[t] = adv[t] + v.v[batch.states[t]];
  field.advantage = std::move(adv);
  return field;
}

// Backward pass of the truncated-ratio recursion. `ratio_of(t)` is the joint
// correction ratio at step t (new policy over stored behavior probabilities).
template <typename RatioFn>
std::vector<double> corrected_backward(const RolloutBatch& batch,
                                       std::span<const double> deltas,
                                       double gamma, double lambda,
                                       RatioFn ratio_of) {
  std::vector<double> adv(deltas.size());
  for (int e = 0; e < batch.n_episodes(); ++e) {
    const int begin = batch.episode_begin(e);
    double acc = 0.0;
    for (int t = batch.episode_end(e) - 1; t >= begin; --t) {
      adv[t] = deltas[t] + gamma * acc;
      if (t > begin) {
        // Weight consumed by step t-1's tail: lambda * min(1, rho_t) * A_t.
        acc = lambda * std::min(1.0, ratio_of(t)) * adv[t];
      }
    }
  }
  return adv;
}

double joint_ratio(const RolloutBatch& batch, const JointPolicy& numerator,
                   int t) {
  double r = 1.0;
  for (int i = 0; i < batch.n_agents; ++i) {
    const double denom = batch.behavior_prob(t, i);
    if (!(denom > 0.0))
      throw std::runtime_error(
          "corrupt batch: stored behavior probability is not positive");
    r *= numerator.agent(i).prob(batch.states[t], batch.action(t, i)) / denom;
  }
  return r;
}

}  // namespace

std::vector<double> gae_from_residuals(const RolloutBatch& batch,
                                       std::span<const double> deltas,
                                       double gamma, double lambda) {
  // Same backward pass as the corrected estimators with every ratio pinned
  // to 1, so the on-policy reduction of preopc is bit-identical to gae.
  return corrected_backward(batch, deltas, gamma, lambda,
                            [](int) { return 1.0; });
}

AdvantageField gae(const RolloutBatch& batch, const ValueTable& v,
                   double gamma, double lambda) {
  const auto deltas = td_residuals(batch, v, gamma);
  return finish_field(batch, v, gae_from_residuals(batch, deltas, gamma, lambda),
                      Estimator::gae);
}

AdvantageField preopc(const RolloutBatch& batch, const ValueTable& v,
                      const JointPolicy& base, const JointPolicy& intermediate,
                      double gamma, double lambda) {
  (void)base;  // ratios use the stored behavior probabilities of the batch
  const auto deltas = td_residuals(batch, v, gamma);
  auto adv = corrected_backward(
      batch, deltas, gamma, lambda,
      [&](int t) { return joint_ratio(batch, intermediate, t); });
  return finish_field(batch, v, std::move(adv), Estimator::preopc);
}

AdvantageField vtrace_advantage(const RolloutBatch& batch, const ValueTable& v,
                                const JointPolicy& base,
                                const JointPolicy& target, double gamma,
                                double lambda) {
  (void)base;
  const auto deltas = td_residuals(batch, v, gamma);
  auto adv = corrected_backward(
      batch, deltas, gamma, lambda,
      [&](int t) { return joint_ratio(batch, target, t); });
  return finish_field(batch, v, std::move(adv), Estimator::vtrace);
}

ValueTable fit_value(ValueTable v, const RolloutBatch& batch,
                     const AdvantageField& targets, int epochs, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("fit_value: lr must be > 0");
  const double n = static_cast<double>(batch.n_steps());
  std::vector<double> grad(v.v.size());
  for (int ep = 0; ep < epochs; ++ep) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int t = 0; t < batch.n_steps(); ++t) {
      const int s = batch.states[t];
      grad[s] += 2.0 * (v.v[s] - targets.value_target[t]) / n;
    }
    for (std::size_t s = 0; s < v.v.size(); ++s) v.v[s] -= lr * grad[s];
  }
  return v;
}

std::string advantage_to_csv(const RolloutBatch& batch,
                             const AdvantageField& field) {
  std::string out = "episode,t,advantage,value_target,estimator\n";
  const std::string tag = to_string(field.estimator);
  char buf[96];
  for (int e = 0; e < batch.n_episodes(); ++e) {
    for (int t = batch.episode_begin(e); t < batch.episode_end(e); ++t) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,", e,
                    t - batch.episode_begin(e), field.advantage[t],
                    field.value_target[t]);
      out += buf;
      out += tag;
      out += '\n';
    }
  }
  return out;
}

}  // namespace marlab
