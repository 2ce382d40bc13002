#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "marlab/decmdp.hpp"

namespace marlab {

/// Repeated shared-payoff matrix game: one state, reward equals the payoff
/// of the joint action, every action self-loops. `repeats` is the intended
/// episode length for rollouts (the MDP itself is stationary).
struct MatrixGameSpec {
  int n_agents = 2;
  std::vector<int> action_counts;
  std::vector<double> payoff;  // flat, mixed-radix joint-action order
  int repeats = 32;
  double gamma = 0.95;
};

DecMdp build_matrix_game(const MatrixGameSpec& spec);

/// Cooperative spread on a small grid: agents move {stay,N,S,E,W}, the team
/// is penalized by the summed minimum Manhattan distance from each landmark
/// to its closest agent, plus a penalty per colliding pair. States enumerate
/// all joint positions; landmarks and starts are fixed by the spec.
struct GridSpreadSpec {
  int side = 3;
  int n_agents = 2;
  int n_landmarks = 2;  // must equal n_agents
  double collision_penalty = 1.0;
  double distance_scale = 1.0;
  int horizon = 32;
  double gamma = 0.95;
};

DecMdp build_grid_spread(const GridSpreadSpec& spec);

/// Deterministic landmark cells used by build_grid_spread, exposed for tests.
std::vector<int> grid_spread_landmarks(const GridSpreadSpec& spec);

/// Random DEC-MDP: transition rows from a symmetric Dirichlet(sparsity),
/// rewards uniform in [-1, 1], initial distribution Dirichlet(1).
/// Smaller sparsity concentrates rows toward near-deterministic transitions.
DecMdp random_decmdp(int n_states, int n_agents,
                     std::span<const int> action_counts, std::uint64_t seed,
                     double sparsity, double gamma = 0.95);

/// Builds an environment from a JSON spec: either a raw DEC-MDP document or
/// an object with "type": "matrix_game" | "grid_spread" | "random" | "decmdp".
DecMdp build_environment(const nlohmann::json& spec);

/// Default rollout horizon suggested by an environment spec (repeats /
/// horizon field), or `fallback` if the spec has none.
int environment_horizon(const nlohmann::json& spec, int fallback);

}  // namespace marlab
