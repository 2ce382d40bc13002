#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace marlab {

/// Finite decentralized MDP with a shared reward: every agent sees the full
/// state, acts simultaneously, and the team receives one scalar reward.
///
/// Joint actions are flattened by mixed-radix encoding with agent 0 as the
/// most significant digit; `encode_actions` / `decode_actions` are the only
/// places that know the convention.
struct DecMdp {
  int n_states = 0;
  std::vector<int> action_counts;      // one entry per agent
  std::vector<double> transition;      // [s][joint_a][s'] row-major
  std::vector<double> reward;          // [s][joint_a]
  double gamma = 0.0;                  // in [0, 1)
  std::vector<double> initial_dist;    // over states

  int n_agents() const { return static_cast<int>(action_counts.size()); }
  int n_joint_actions() const;

  double trans(int s, int ja, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_joint_actions_ + ja) *
                          n_states + s2];
  }
  double& trans(int s, int ja, int s2) {
    return transition[(static_cast<std::size_t>(s) * n_joint_actions_ + ja) *
                          n_states + s2];
  }
  double rew(int s, int ja) const {
    return reward[static_cast<std::size_t>(s) * n_joint_actions_ + ja];
  }
  double& rew(int s, int ja) {
    return reward[static_cast<std::size_t>(s) * n_joint_actions_ + ja];
  }

  int encode_actions(std::span<const int> actions) const;
  void decode_actions(int ja, std::span<int> out) const;

  /// Checks row-stochasticity, the normalized initial distribution,
  /// nonnegativity, gamma < 1 and tensor shapes. Throws std::invalid_argument
  /// naming the offending field.
  void validate() const;

  /// Allocates the tensors for the given shape (zeroed) and caches the joint
  /// action count. Call before filling `trans` / `rew` in-place.
  static DecMdp make(int n_states, std::vector<int> action_counts, double gamma);

  /// Recomputes the cached joint-action product after manual field edits.
  void refresh();

  static DecMdp from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  int n_joint_actions_ = 0;
};

DecMdp load_decmdp(const std::string& path);
void save_decmdp(const DecMdp& mdp, const std::string& path);

}  // namespace marlab
