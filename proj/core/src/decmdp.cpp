#include "marlab/decmdp.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace marlab {

namespace {

constexpr double kProbTol = 1e-12;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw std::invalid_argument("DecMdp." + field + ": " + what);
}

}  // namespace

int DecMdp::n_joint_actions() const { return n_joint_actions_; }

int DecMdp::encode_actions(std::span<const int> actions) const {
  int ja = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    ja = ja * action_counts[i] + actions[i];
  }
  return ja;
}

void DecMdp::decode_actions(int ja, std::span<int> out) const {
  for (int i = n_agents() - 1; i >= 0; --i) {
    out[i] = ja % action_counts[i];
    ja /= action_counts[i];
  }
}

void DecMdp::refresh() {
  std::int64_t prod = 1;
  for (int c : action_counts) prod *= c;
  if (prod > 1'000'000) fail("action_counts", "joint action space too large");
  n_joint_actions_ = static_cast<int>(prod);
}

DecMdp DecMdp::make(int n_states, std::vector<int> action_counts, double gamma) {
  DecMdp m;
  m.n_states = n_states;
  m.action_counts = std::move(action_counts);
  m.gamma = gamma;
  m.refresh();
  const std::size_t sja =
      static_cast<std::size_t>(n_states) * m.n_joint_actions_;
  m.transition.assign(sja * n_states, 0.0);
  m.reward.assign(sja, 0.0);
  m.initial_dist.assign(n_states, 0.0);
  return m;
}

void DecMdp::validate() const {
  if (n_states < 1) fail("n_states", "must be >= 1");
  if (action_counts.empty()) fail("action_counts", "must name at least one agent");
  for (int c : action_counts)
    if (c < 1) fail("action_counts", "every agent needs >= 1 action");
  if (!(gamma >= 0.0) || !(gamma < 1.0)) fail("gamma", "must lie in [0, 1)");

  const std::size_t sja = static_cast<std::size_t>(n_states) * n_joint_actions_;
  if (transition.size() != sja * static_cast<std::size_t>(n_states))
    fail("transition", "tensor shape does not match n_states x joint actions");
  if (reward.size() != sja)
    fail("reward", "tensor shape does not match n_states x joint actions");
  if (initial_dist.size() != static_cast<std::size_t>(n_states))
    fail("initial_dist", "length does not match n_states");

  for (int s = 0; s < n_states; ++s) {
    for (int ja = 0; ja < n_joint_actions_; ++ja) {
      double row = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double p = trans(s, ja, s2);
        if (p < 0.0) fail("transition", "negative probability");
        row += p;
      }
      if (std::abs(row - 1.0) > kProbTol)
        fail("transition", "row (s=" + std::to_string(s) +
                               ", a=" + std::to_string(ja) +
                               ") sums to " + std::to_string(row));
    }
  }
  double init = 0.0;
  for (double p : initial_dist) {
    if (p < 0.0) fail("initial_dist", "negative probability");
    init += p;
  }
  if (std::abs(init - 1.0) > kProbTol)
    fail("initial_dist", "sums to " + std::to_string(init));
}

DecMdp DecMdp::from_json(const nlohmann::json& j) {
  if (!j.contains("n_states")) fail("n_states", "missing");
  if (!j.contains("action_counts")) fail("action_counts", "missing");
  if (!j.contains("transition")) fail("transition", "missing");
  if (!j.contains("reward")) fail("reward", "missing");
  if (!j.contains("gamma")) fail("gamma", "missing");
  if (!j.contains("initial_dist")) fail("initial_dist", "missing");

  DecMdp m;
  try {
    m.n_states = j.at("n_states").get<int>();
    m.action_counts = j.at("action_counts").get<std::vector<int>>();
    m.gamma = j.at("gamma").get<double>();
    m.initial_dist = j.at("initial_dist").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("DecMdp: malformed scalar field: ") +
                                e.what());
  }
  if (m.n_states < 1) fail("n_states", "must be >= 1");
  if (m.action_counts.empty()) fail("action_counts", "must name at least one agent");
  for (int c : m.action_counts)
    if (c < 1) fail("action_counts", "every agent needs >= 1 action");
  m.refresh();

  const auto& t = j.at("transition");
  const auto& r = j.at("reward");
  if (!t.is_array() || static_cast<int>(t.size()) != m.n_states)
    fail("transition", "outer dimension must equal n_states");
  if (!r.is_array() || static_cast<int>(r.size()) != m.n_states)
    fail("reward", "outer dimension must equal n_states");

  m.transition.reserve(static_cast<std::size_t>(m.n_states) *
                       m.n_joint_actions_ * m.n_states);
  m.reward.reserve(static_cast<std::size_t>(m.n_states) * m.n_joint_actions_);
  for (int s = 0; s < m.n_states; ++s) {
    if (static_cast<int>(t[s].size()) != m.n_joint_actions_)
      fail("transition", "middle dimension must equal the joint action count");
    if (static_cast<int>(r[s].size()) != m.n_joint_actions_)
      fail("reward", "inner dimension must equal the joint action count");
    for (int ja = 0; ja < m.n_joint_actions_; ++ja) {
      if (static_cast<int>(t[s][ja].size()) != m.n_states)
        fail("transition", "inner dimension must equal n_states");
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        if (!t[s][ja][s2].is_number()) fail("transition", "non-numeric entry");
        m.transition.push_back(t[s][ja][s2].get<double>());
      }
      if (!r[s][ja].is_number()) fail("reward", "non-numeric entry");
      m.reward.push_back(r[s][ja].get<double>());
    }
  }
  m.validate();
  return m;
}

nlohmann::json DecMdp::to_json() const {
  nlohmann::json t = nlohmann::json::array();
  nlohmann::json r = nlohmann::json::array();
  for (int s = 0; s < n_states; ++s) {
    nlohmann::json ts = nlohmann::json::array();
    nlohmann::json rs = nlohmann::json::array();
    for (int ja = 0; ja < n_joint_actions_; ++ja) {
      nlohmann::json row = nlohmann::json::array();
      for (int s2 = 0; s2 < n_states; ++s2) row.push_back(trans(s, ja, s2));
      ts.push_back(std::move(row));
      rs.push_back(rew(s, ja));
    }
    t.push_back(std::move(ts));
    r.push_back(std::move(rs));
  }
  return nlohmann::json{{"n_states", n_states},
                        {"action_counts", action_counts},
                        {"transition", std::move(t)},
                        {"reward", std::move(r)},
                        {"gamma", gamma},
                        {"initial_dist", initial_dist}};
}

DecMdp load_decmdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open MDP file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid JSON in " + path + ": " + e.what());
  }
  return DecMdp::from_json(j);
}

void save_decmdp(const DecMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write MDP file: " + path);
  out << mdp.to_json().dump(2) << '\n';
}

}  // namespace marlab
