#include "marlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace marlab {

TabularPolicy::TabularPolicy(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("TabularPolicy: shape must be positive");
  logits_.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  recompute_probs();
}

void TabularPolicy::recompute_probs() {
  probs_.resize(logits_.size());
  for (int s = 0; s < n_states_; ++s) {
    const std::size_t off = static_cast<std::size_t>(s) * n_actions_;
    double mx = logits_[off];
    for (int a = 1; a < n_actions_; ++a) mx = std::max(mx, logits_[off + a]);
    double total = 0.0;
    for (int a = 0; a < n_actions_; ++a) {
      probs_[off + a] = std::exp(logits_[off + a] - mx);
      total += probs_[off + a];
    }
    for (int a = 0; a < n_actions_; ++a) probs_[off + a] /= total;
  }
}

void TabularPolicy::set_logits(std::span<const double> logits) {
  if (logits.size() != logits_.size())
    throw std::invalid_argument("TabularPolicy::set_logits: size mismatch");
  std::copy(logits.begin(), logits.end(), logits_.begin());
  recompute_probs();
}

void TabularPolicy::set_logit(int s, int a, double value) {
  logits_[static_cast<std::size_t>(s) * n_actions_ + a] = value;
  recompute_probs();
}

void TabularPolicy::add_to_logits(std::span<const double> step) {
  if (step.size() != logits_.size())
    throw std::invalid_argument("TabularPolicy::add_to_logits: size mismatch");
  for (std::size_t i = 0; i < logits_.size(); ++i) {
    logits_[i] = std::clamp(logits_[i] + step[i], -60.0, 60.0);
  }
  recompute_probs();
}

void TabularPolicy::randomize_logits(double scale, Rng& rng) {
  for (double& l : logits_) l = scale * rng.normal();
  recompute_probs();
}

JointPolicy JointPolicy::uniform(int n_states,
                                 std::span<const int> action_counts) {
  std::vector<TabularPolicy> agents;
  agents.reserve(action_counts.size());
  for (int c : action_counts) agents.emplace_back(n_states, c);
  return JointPolicy(std::move(agents));
}

double JointPolicy::joint_prob(int s, std::span<const int> actions) const {
  if (actions.size() != agents_.size())
    throw std::out_of_range("JointPolicy::joint_prob: wrong action count");
  double p = 1.0;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const auto& ag = agents_[i];
    if (s < 0 || s >= ag.n_states() || actions[i] < 0 ||
        actions[i] >= ag.n_actions())
      throw std::out_of_range("JointPolicy::joint_prob: index out of range");
    p *= ag.prob(s, actions[i]);
  }
  return p;
}

std::uint64_t JointPolicy::fingerprint() const {
  // FNV-1a over the raw logit bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& ag : agents_) {
    for (double l : ag.logits()) {
      std::uint64_t bits;
      std::memcpy(&bits, &l, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace marlab
