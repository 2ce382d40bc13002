#include "marlab/environments.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "marlab/rng.hpp"

namespace marlab {

DecMdp build_matrix_game(const MatrixGameSpec& spec) {
  if (static_cast<int>(spec.action_counts.size()) != spec.n_agents)
    throw std::invalid_argument(
        "matrix_game: action_counts must list one entry per agent");
  DecMdp mdp = DecMdp::make(1, spec.action_counts, spec.gamma);
  if (spec.payoff.size() != static_cast<std::size_t>(mdp.n_joint_actions()))
    throw std::invalid_argument(
        "matrix_game: payoff shape does not match the action counts");
  for (int ja = 0; ja < mdp.n_joint_actions(); ++ja) {
    mdp.rew(0, ja) = spec.payoff[ja];
    mdp.trans(0, ja, 0) = 1.0;
  }
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  return mdp;
}

namespace {

int manhattan(int cell_a, int cell_b, int side) {
  return std::abs(cell_a / side - cell_b / side) +
         std::abs(cell_a % side - cell_b % side);
}

// Move deltas for {stay, N, S, E, W}; off-grid moves stay in place.
int grid_move(int cell, int action, int side) {
  int r = cell / side, c = cell % side;
  switch (action) {
    case 1: r = std::max(0, r - 1); break;
    case 2: r = std::min(side - 1, r + 1); break;
    case 3: c = std::min(side - 1, c + 1); break;
    case 4: c = std::max(0, c - 1); break;
    default: break;
  }
  return r * side + c;
}

}  // namespace

std::vector<int> grid_spread_landmarks(const GridSpreadSpec& spec) {
  const int cells = spec.side * spec.side;
  std::vector<int> landmarks(spec.n_landmarks);
  if (spec.n_landmarks == 1) {
    landmarks[0] = cells - 1;
  } else {
    // Evenly spread across the cell range, endpoints included.
    for (int j = 0; j < spec.n_landmarks; ++j)
      landmarks[j] = static_cast<int>(
          (static_cast<long long>(j) * (cells - 1)) / (spec.n_landmarks - 1));
  }
  return landmarks;
}

DecMdp build_grid_spread(const GridSpreadSpec& spec) {
  if (spec.side < 1) throw std::invalid_argument("grid_spread: side must be >= 1");
  if (spec.n_landmarks != spec.n_agents)
    throw std::invalid_argument("grid_spread: n_landmarks must equal n_agents");
  const int cells = spec.side * spec.side;
  if (spec.n_landmarks > cells)
    throw std::invalid_argument("grid_spread: more landmarks than cells");
  if (spec.n_agents > cells)
    throw std::invalid_argument("grid_spread: agents cannot start at distinct cells");

  double states_d = 1.0;
  for (int i = 0; i < spec.n_agents; ++i) states_d *= cells;
  if (states_d > 1e4)
    throw std::invalid_argument(
        "grid_spread: joint-position state space exceeds the 10^4 cap");
  const int n_states = static_cast<int>(states_d);

  std::vector<int> action_counts(spec.n_agents, 5);
  DecMdp mdp = DecMdp::make(n_states, action_counts, spec.gamma);
  const std::vector<int> landmarks = grid_spread_landmarks(spec);

  std::vector<int> pos(spec.n_agents), next(spec.n_agents), act(spec.n_agents);
  for (int s = 0; s < n_states; ++s) {
    // Decode joint positions, agent 0 most significant.
    int rest = s;
    for (int i = spec.n_agents - 1; i >= 0; --i) {
      pos[i] = rest % cells;
      rest /= cells;
    }
    double reward = 0.0;
    for (int lm : landmarks) {
      int best = manhattan(pos[0], lm, spec.side);
      for (int i = 1; i < spec.n_agents; ++i)
        best = std::min(best, manhattan(pos[i], lm, spec.side));
      reward -= spec.distance_scale * best;
    }
    for (int i = 0; i < spec.n_agents; ++i)
      for (int j = i + 1; j < spec.n_agents; ++j)
        if (pos[i] == pos[j]) reward -= spec.collision_penalty;

    for (int ja = 0; ja < mdp.n_joint_actions(); ++ja) {
      mdp.decode_actions(ja, act);
      int s2 = 0;
      for (int i = 0; i < spec.n_agents; ++i) {
        next[i] = grid_move(pos[i], act[i], spec.side);
        s2 = s2 * cells + next[i];
      }
      mdp.trans(s, ja, s2) = 1.0;
      mdp.rew(s, ja) = reward;
    }
  }

  // Agents start at distinct cells 0, 1, ..., n-1.
  int start = 0;
  for (int i = 0; i < spec.n_agents; ++i) start = start * cells + i;
  mdp.initial_dist[start] = 1.0;
  mdp.validate();
  return mdp;
}

DecMdp random_decmdp(int n_states, int n_agents,
                     std::span<const int> action_counts, std::uint64_t seed,
                     double sparsity, double gamma) {
  if (static_cast<int>(action_counts.size()) != n_agents)
    throw std::invalid_argument(
        "random_decmdp: action_counts must list one entry per agent");
  if (!(sparsity > 0.0))
    throw std::invalid_argument("random_decmdp: sparsity must be > 0");
  DecMdp mdp = DecMdp::make(
      n_states, std::vector<int>(action_counts.begin(), action_counts.end()),
      gamma);
  Rng rng(split_seed(seed, 0xdecdecULL));
  std::vector<double> row(n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int ja = 0; ja < mdp.n_joint_actions(); ++ja) {
      rng.dirichlet(sparsity, row);
      for (int s2 = 0; s2 < n_states; ++s2) mdp.trans(s, ja, s2) = row[s2];
      mdp.rew(s, ja) = rng.uniform(-1.0, 1.0);
    }
  }
  rng.dirichlet(1.0, mdp.initial_dist);
  mdp.validate();
  return mdp;
}

DecMdp build_environment(const nlohmann::json& spec) {
  const std::string type =
      spec.contains("type") ? spec.at("type").get<std::string>() : "decmdp";
  try {
    if (type == "decmdp") {
      nlohmann::json raw = spec;
      raw.erase("type");
      return DecMdp::from_json(raw);
    }
    if (type == "matrix_game") {
      MatrixGameSpec g;
      g.n_agents = spec.at("n_agents").get<int>();
      g.action_counts = spec.at("action_counts").get<std::vector<int>>();
      if (spec.contains("repeats")) g.repeats = spec.at("repeats").get<int>();
      if (spec.contains("gamma")) g.gamma = spec.at("gamma").get<double>();
      // Payoff arrives as nested arrays (one level per agent); flatten in
      // mixed-radix order by recursive descent.
      g.payoff.clear();
      const auto& payoff = spec.at("payoff");
      auto flatten = [&](auto&& self, const nlohmann::json& node, int depth) -> void {
        if (depth == g.n_agents) {
          if (!node.is_number())
            throw std::invalid_argument("matrix_game: payoff entries must be numbers");
          g.payoff.push_back(node.get<double>());
          return;
        }
        if (!node.is_array() ||
            static_cast<int>(node.size()) != g.action_counts[depth])
          throw std::invalid_argument("matrix_game: payoff nesting must match action_counts");
        for (const auto& child : node) self(self, child, depth + 1);
      };
      flatten(flatten, payoff, 0);
      return build_matrix_game(g);
    }
    if (type == "grid_spread") {
      GridSpreadSpec g;
      g.side = spec.at("side").get<int>();
      g.n_agents = spec.at("n_agents").get<int>();
      g.n_landmarks = spec.contains("n_landmarks")
                          ? spec.at("n_landmarks").get<int>()
                          : g.n_agents;
      if (spec.contains("collision_penalty"))
        g.collision_penalty = spec.at("collision_penalty").get<double>();
      if (spec.contains("distance_scale"))
        g.distance_scale = spec.at("distance_scale").get<double>();
      if (spec.contains("horizon")) g.horizon = spec.at("horizon").get<int>();
      if (spec.contains("gamma")) g.gamma = spec.at("gamma").get<double>();
      return build_grid_spread(g);
    }
    if (type == "random") {
      const int n_states = spec.at("n_states").get<int>();
      const int n_agents = spec.at("n_agents").get<int>();
      const auto counts = spec.at("action_counts").get<std::vector<int>>();
      const auto seed = spec.at("seed").get<std::uint64_t>();
      const double sparsity =
          spec.contains("sparsity") ? spec.at("sparsity").get<double>() : 1.0;
      const double gamma =
          spec.contains("gamma") ? spec.at("gamma").get<double>() : 0.95;
      return random_decmdp(n_states, n_agents, counts, seed, sparsity, gamma);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("environment: malformed field: ") +
                                e.what());
  }
  throw std::invalid_argument("environment.type: unknown value '" + type + "'");
}

int environment_horizon(const nlohmann::json& spec, int fallback) {
  if (spec.contains("repeats")) return spec.at("repeats").get<int>();
  if (spec.contains("horizon") && spec.at("horizon").is_number())
    return spec.at("horizon").get<int>();
  return fallback;
}

}  // namespace marlab
