#include "marlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "marlab/oracle.hpp"

namespace marlab {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::a2po: return "a2po";
    case Algorithm::mappo: return "mappo";
    case Algorithm::coppo: return "coppo";
    case Algorithm::happo: return "happo";
  }
  return "a2po";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "a2po") return Algorithm::a2po;
  if (s == "mappo") return Algorithm::mappo;
  if (s == "coppo") return Algorithm::coppo;
  if (s == "happo") return Algorithm::happo;
  throw std::invalid_argument("config.algorithm: unknown value '" + s + "'");
}

std::string to_string(SelectionRule r) {
  switch (r) {
    case SelectionRule::cyclic: return "cyclic";
    case SelectionRule::random: return "random";
    case SelectionRule::greedy: return "greedy";
    case SelectionRule::semi_greedy: return "semi_greedy";
    case SelectionRule::reverse_greedy: return "reverse_greedy";
    case SelectionRule::reverse_semi_greedy: return "reverse_semi_greedy";
  }
  return "cyclic";
}

SelectionRule selection_rule_from_string(const std::string& s) {
  if (s == "cyclic") return SelectionRule::cyclic;
  if (s == "random") return SelectionRule::random;
  if (s == "greedy") return SelectionRule::greedy;
  if (s == "semi_greedy") return SelectionRule::semi_greedy;
  if (s == "reverse_greedy") return SelectionRule::reverse_greedy;
  if (s == "reverse_semi_greedy") return SelectionRule::reverse_semi_greedy;
  throw std::invalid_argument("config.selection_rule: unknown value '" + s + "'");
}

void TrainerConfig::validate() const {
  if (!(base_clip > 0.0))
    throw std::invalid_argument("config.base_clip: must be > 0");
  if (!(clip_blend >= 0.0 && clip_blend <= 1.0))
    throw std::invalid_argument("config.clip_blend: must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("config.lambda: must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("config.gamma: must lie in [0, 1)");
  if (ppo_epochs < 1)
    throw std::invalid_argument("config.ppo_epochs: must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("config.lr: must be >= 0");
  if (horizon < 1) throw std::invalid_argument("config.horizon: must be >= 1");
  if (episodes_per_iter < 1)
    throw std::invalid_argument("config.episodes_per_iter: must be >= 1");
  if (iterations < 0)
    throw std::invalid_argument("config.iterations: must be >= 0");
  if (!(init_logit_scale >= 0.0))
    throw std::invalid_argument("config.init_logit_scale: must be >= 0");
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) {
  TrainerConfig c;
  static const char* known[] = {
      "algorithm",      "selection_rule", "base_clip",
      "clip_blend",     "adaptive_clip",  "estimator",
      "lambda",         "gamma",          "ppo_epochs",
      "lr",             "horizon",        "episodes_per_iter",
      "iterations",     "seed",           "normalize_advantages",
      "fair_epochs",    "happo_shuffle",  "greedy_one_shot",
      "exact_advantages", "init_logit_scale"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
          return it.key() == k;
        }) == std::end(known))
      throw std::invalid_argument("config." + it.key() + ": unknown field");
  }
  try {
    if (j.contains("algorithm"))
      c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    if (j.contains("selection_rule"))
      c.selection_rule =
          selection_rule_from_string(j.at("selection_rule").get<std::string>());
    if (j.contains("estimator"))
      c.estimator = estimator_from_string(j.at("estimator").get<std::string>());
    if (j.contains("base_clip")) c.base_clip = j.at("base_clip").get<double>();
    if (j.contains("clip_blend")) c.clip_blend = j.at("clip_blend").get<double>();
    if (j.contains("adaptive_clip"))
      c.adaptive_clip = j.at("adaptive_clip").get<bool>();
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("ppo_epochs")) c.ppo_epochs = j.at("ppo_epochs").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<int>();
    if (j.contains("episodes_per_iter"))
      c.episodes_per_iter = j.at("episodes_per_iter").get<int>();
    if (j.contains("iterations")) c.iterations = j.at("iterations").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("normalize_advantages"))
      c.normalize_advantages = j.at("normalize_advantages").get<bool>();
    if (j.contains("fair_epochs")) c.fair_epochs = j.at("fair_epochs").get<bool>();
    if (j.contains("happo_shuffle"))
      c.happo_shuffle = j.at("happo_shuffle").get<bool>();
    if (j.contains("greedy_one_shot"))
      c.greedy_one_shot = j.at("greedy_one_shot").get<bool>();
    if (j.contains("exact_advantages"))
      c.exact_advantages = j.at("exact_advantages").get<bool>();
    if (j.contains("init_logit_scale"))
      c.init_logit_scale = j.at("init_logit_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed field: ") +
                                e.what());
  }
  c.validate();
  return c;
}

nlohmann::json TrainerConfig::to_json() const {
  return nlohmann::json{{"algorithm", to_string(algorithm)},
                        {"selection_rule", to_string(selection_rule)},
                        {"base_clip", base_clip},
                        {"clip_blend", clip_blend},
                        {"adaptive_clip", adaptive_clip},
                        {"estimator", to_string(estimator)},
                        {"lambda", lambda},
                        {"gamma", gamma},
                        {"ppo_epochs", ppo_epochs},
                        {"lr", lr},
                        {"horizon", horizon},
                        {"episodes_per_iter", episodes_per_iter},
                        {"iterations", iterations},
                        {"seed", seed},
                        {"normalize_advantages", normalize_advantages},
                        {"fair_epochs", fair_epochs},
                        {"happo_shuffle", happo_shuffle},
                        {"greedy_one_shot", greedy_one_shot},
                        {"exact_advantages", exact_advantages},
                        {"init_logit_scale", init_logit_scale}};
}

void TrainerConfig::set_field(const std::string& key,
                              const std::string& value) {
  auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config." + key + ": expected a boolean");
  };
  try {
    if (key == "algorithm") algorithm = algorithm_from_string(value);
    else if (key == "selection_rule") selection_rule = selection_rule_from_string(value);
    else if (key == "estimator") estimator = estimator_from_string(value);
    else if (key == "base_clip") base_clip = std::stod(value);
    else if (key == "clip_blend") clip_blend = std::stod(value);
    else if (key == "adaptive_clip") adaptive_clip = as_bool();
    else if (key == "lambda") lambda = std::stod(value);
    else if (key == "gamma") gamma = std::stod(value);
    else if (key == "ppo_epochs") ppo_epochs = std::stoi(value);
    else if (key == "lr") lr = std::stod(value);
    else if (key == "horizon") horizon = std::stoi(value);
    else if (key == "episodes_per_iter") episodes_per_iter = std::stoi(value);
    else if (key == "iterations") iterations = std::stoi(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "normalize_advantages") normalize_advantages = as_bool();
    else if (key == "fair_epochs") fair_epochs = as_bool();
    else if (key == "happo_shuffle") happo_shuffle = as_bool();
    else if (key == "greedy_one_shot") greedy_one_shot = as_bool();
    else if (key == "exact_advantages") exact_advantages = as_bool();
    else if (key == "init_logit_scale") init_logit_scale = std::stod(value);
    else throw std::invalid_argument("config." + key + ": unknown field");
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("config." + key + ": cannot parse '" + value + "'");
  }
  validate();
}

double adaptive_clip(double eps, int k, int n, double c_eps) {
  if (k < 1 || k > n)
    throw std::out_of_range("adaptive_clip: k must lie in [1, n]");
  return eps * c_eps + eps * (1.0 - c_eps) * static_cast<double>(k) / n;
}

namespace {

bool rule_needs_stats(SelectionRule r) {
  return r == SelectionRule::greedy || r == SelectionRule::semi_greedy ||
         r == SelectionRule::reverse_greedy ||
         r == SelectionRule::reverse_semi_greedy;
}

int arg_best(std::span<const int> remaining, std::span<const double> stats,
             bool maximize) {
  int best = remaining[0];
  for (int agent : remaining) {
    const bool better = maximize ? stats[agent] > stats[best]
                                 : stats[agent] < stats[best];
    if (better) best = agent;  // ties keep the lowest index
  }
  return best;
}

}  // namespace

int select_next_agent(SelectionRule rule, std::span<const int> remaining,
                      int k, std::span<const double> adv_stats, Rng& rng) {
  if (remaining.empty())
    throw std::invalid_argument("select_next_agent: remaining set is empty");
  if (rule_needs_stats(rule) && adv_stats.empty())
    throw std::invalid_argument("select_next_agent: missing advantage stats");
  switch (rule) {
    case SelectionRule::cyclic:
      return remaining[0];
    case SelectionRule::random:
      return remaining[rng.uniform_int(static_cast<int>(remaining.size()))];
    case SelectionRule::greedy:
      return arg_best(remaining, adv_stats, true);
    case SelectionRule::reverse_greedy:
      return arg_best(remaining, adv_stats, false);
    case SelectionRule::semi_greedy:
      return (k % 2 == 0)
                 ? arg_best(remaining, adv_stats, true)
                 : remaining[rng.uniform_int(static_cast<int>(remaining.size()))];
    case SelectionRule::reverse_semi_greedy:
      return (k % 2 == 0)
                 ? arg_best(remaining, adv_stats, false)
                 : remaining[rng.uniform_int(static_cast<int>(remaining.size()))];
  }
  throw std::logic_error("select_next_agent: unreachable");
}

std::vector<double> per_agent_abs_adv_stats(const RolloutBatch& batch,
                                            std::span<const double> adv,
                                            int n_agents) {
  std::vector<double> stats(n_agents, 0.0);
  const double n = static_cast<double>(batch.n_steps());
  std::unordered_map<std::int64_t, std::pair<double, int>> groups;
  for (int i = 0; i < n_agents; ++i) {
    groups.clear();
    for (int t = 0; t < batch.n_steps(); ++t) {
      const std::int64_t key =
          (static_cast<std::int64_t>(batch.states[t]) << 20) |
          batch.action(t, i);
      auto& g = groups[key];
      g.first += adv[t];
      g.second += 1;
    }
    double acc = 0.0;
    for (const auto& [key, g] : groups)
      acc += g.second * std::abs(g.first / g.second);
    stats[i] = acc / n;
  }
  return stats;
}

namespace {

// min(l*A, clip(l)*A) objective over per-sample constant factors g_t and
// advantages a_t; gradient w.r.t. the chosen agent's logits only.
SurrogateEval eval_core(const RolloutBatch& batch, std::span<const double> adv,
                        std::span<const double> g, const JointPolicy& base,
                        const JointPolicy& working, int agent, double eps) {
  if (adv.size() != static_cast<std::size_t>(batch.n_steps()))
    throw std::invalid_argument("surrogate: advantage/batch size mismatch");
  const auto& wp = working.agent(agent);
  const auto& bp = base.agent(agent);
  const int n_actions = wp.n_actions();
  SurrogateEval out;
  out.grad.assign(wp.logits().size(), 0.0);
  const double n = static_cast<double>(batch.n_steps());
  const double lo = 1.0 - eps, hi = 1.0 + eps;
  int gated = 0;
  for (int t = 0; t < batch.n_steps(); ++t) {
    const int s = batch.states[t];
    const int a = batch.action(t, agent);
    const double ratio = wp.prob(s, a) / bp.prob(s, a);
    const double l = ratio * g[t];
    const double clipped = std::clamp(l, lo, hi);
    const double lhs = l * adv[t];
    const double rhs = clipped * adv[t];
    out.mean_ratio += l;
    if (lhs <= rhs) {
      out.objective += lhs;
      const double coeff = adv[t] * g[t] * ratio / n;
      const std::size_t off = static_cast<std::size_t>(s) * n_actions;
      for (int b = 0; b < n_actions; ++b) out.grad[off + b] -= coeff * wp.prob(s, b);
      out.grad[off + a] += coeff;
    } else {
      // Outer clip binding with adverse advantage sign: zero gradient.
      out.objective += rhs;
      ++gated;
    }
  }
  out.objective /= n;
  out.mean_ratio /= n;
  out.clip_fraction = gated / n;
  return out;
}

std::vector<double> ratio_product(const RolloutBatch& batch,
                                  const JointPolicy& base,
                                  const JointPolicy& working,
                                  std::span<const int> agents) {
  std::vector<double> r(batch.n_steps(), 1.0);
  for (int j : agents) {
    const auto& wp = working.agent(j);
    const auto& bp = base.agent(j);
    for (int t = 0; t < batch.n_steps(); ++t) {
      const int s = batch.states[t];
      const int a = batch.action(t, j);
      r[t] *= wp.prob(s, a) / bp.prob(s, a);
    }
  }
  return r;
}

}  // namespace

SurrogateEval clipped_surrogate(const RolloutBatch& batch,
                                std::span<const double> adv,
                                const JointPolicy& base,
                                const JointPolicy& working, int agent,
                                std::span<const int> preceding, double eps_i) {
  std::vector<double> g = ratio_product(batch, base, working, preceding);
  const double lo = 1.0 - 0.5 * eps_i, hi = 1.0 + 0.5 * eps_i;
  for (double& x : g) x = std::clamp(x, lo, hi);
  return eval_core(batch, adv, g, base, working, agent, eps_i);
}

SurrogateEval mappo_surrogate(const RolloutBatch& batch,
                              std::span<const double> adv,
                              const JointPolicy& base,
                              const JointPolicy& working, int agent,
                              double eps) {
  std::vector<double> g(batch.n_steps(), 1.0);
  return eval_core(batch, adv, g, base, working, agent, eps);
}

SurrogateEval coppo_surrogate(const RolloutBatch& batch,
                              std::span<const double> adv,
                              const JointPolicy& base,
                              const JointPolicy& working, int agent,
                              double eps) {
  std::vector<int> others;
  for (int j = 0; j < base.n_agents(); ++j)
    if (j != agent) others.push_back(j);
  std::vector<double> g = ratio_product(batch, base, working, others);
  const double lo = 1.0 - 0.5 * eps, hi = 1.0 + 0.5 * eps;
  for (double& x : g) x = std::clamp(x, lo, hi);
  return eval_core(batch, adv, g, base, working, agent, eps);
}

SurrogateEval happo_surrogate(const RolloutBatch& batch,
                              std::span<const double> adv,
                              const JointPolicy& base,
                              const JointPolicy& working, int agent,
                              std::span<const int> preceding, double eps) {
  // The preceding ratio weights the advantage (unclipped); only the agent's
  // own ratio is clipped.
  std::vector<double> weighted = ratio_product(batch, base, working, preceding);
  for (int t = 0; t < batch.n_steps(); ++t) weighted[t] *= adv[t];
  std::vector<double> g(batch.n_steps(), 1.0);
  return eval_core(batch, weighted, g, base, working, agent, eps);
}

namespace {

void apply_ascent_step(TabularPolicy& p, std::span<const double> grad,
                       double lr) {
  if (lr == 0.0) return;
  std::vector<double> step(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) step[i] = lr * grad[i];
  p.add_to_logits(step);
}

void normalize_in_place(std::vector<double>& adv) {
  const double n = static_cast<double>(adv.size());
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

AdvantageField exact_oracle_advantages(const DecMdp& mdp,
                                       const RolloutBatch& batch,
                                       const ValueTable& v,
                                       const JointPolicy& target) {
  const ExactEval ev = exact_eval(mdp, target);
  const int nja = mdp.n_joint_actions();
  AdvantageField field;
  field.estimator = Estimator::gae;
  field.advantage.resize(batch.n_steps());
  field.value_target.resize(batch.n_steps());
  std::vector<int> a(batch.n_agents);
  for (int t = 0; t < batch.n_steps(); ++t) {
    for (int i = 0; i < batch.n_agents; ++i) a[i] = batch.action(t, i);
    const int ja = mdp.encode_actions(a);
    field.advantage[t] = ev.adv_at(batch.states[t], ja, nja);
    field.value_target[t] = field.advantage[t] + v.v[batch.states[t]];
  }
  return field;
}

// Advantages for a sequential trainer's agent turn: corrected against the
// current working (prefix-updated) policy unless plain GAE was requested.
AdvantageField sequential_advantages(const DecMdp& mdp,
                                     const RolloutBatch& batch,
                                     const ValueTable& v,
                                     const JointPolicy& base,
                                     const JointPolicy& working,
                                     const TrainerConfig& cfg) {
  if (cfg.exact_advantages)
    return exact_oracle_advantages(mdp, batch, v, working);
  switch (cfg.estimator) {
    case Estimator::gae:
      return gae(batch, v, cfg.gamma, cfg.lambda);
    case Estimator::preopc:
      return preopc(batch, v, base, working, cfg.gamma, cfg.lambda);
    case Estimator::vtrace:
      return vtrace_advantage(batch, v, base, working, cfg.gamma, cfg.lambda);
  }
  throw std::logic_error("unreachable");
}

int sequential_epochs(const TrainerConfig& cfg, int n) {
  return cfg.fair_epochs ? std::max(1, (cfg.ppo_epochs + n - 1) / n)
                         : cfg.ppo_epochs;
}

ValueTable value_step(ValueTable v, const RolloutBatch& batch,
                      const AdvantageField& field, double lr) {
  if (lr <= 0.0) return v;
  return fit_value(std::move(v), batch, field, 1, lr);
}

}  // namespace

StageResult a2po_stage(const DecMdp& mdp, const RolloutBatch& batch,
                       const JointPolicy& base, ValueTable value,
                       const TrainerConfig& cfg, Rng& rng) {
  const int n = mdp.n_agents();
  StageResult res{base, std::move(value), {}};
  std::vector<int> remaining(n);
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<int> preceding;
  const int epochs = sequential_epochs(cfg, n);
  std::vector<double> one_shot_stats;

  for (int k = 1; k <= n; ++k) {
    AdvantageField field =
        sequential_advantages(mdp, batch, res.value, base, res.policy, cfg);
    std::vector<double> adv = field.advantage;
    if (cfg.normalize_advantages) normalize_in_place(adv);

    std::vector<double> stats;
    if (rule_needs_stats(cfg.selection_rule)) {
      if (cfg.greedy_one_shot) {
        if (k == 1) one_shot_stats = per_agent_abs_adv_stats(batch, adv, n);
        stats = one_shot_stats;
      } else {
        stats = per_agent_abs_adv_stats(batch, adv, n);
      }
    }
    const int agent = select_next_agent(cfg.selection_rule, remaining, k,
                                        stats, rng);
    const double eps_i = cfg.adaptive_clip
                             ? adaptive_clip(cfg.base_clip, k, n, cfg.clip_blend)
                             : cfg.base_clip;

    for (int ep = 0; ep < epochs; ++ep) {
      SurrogateEval eval = clipped_surrogate(batch, adv, base, res.policy,
                                             agent, preceding, eps_i);
      apply_ascent_step(res.policy.agent(agent), eval.grad, cfg.lr);
      res.value = value_step(std::move(res.value), batch, field, cfg.lr);
    }

    SurrogateEval final_eval = clipped_surrogate(batch, adv, base, res.policy,
                                                 agent, preceding, eps_i);
    UpdateMetrics m;
    m.agent = agent;
    m.order_k = k;
    m.eps_i = eps_i;
    m.objective = final_eval.objective;
    m.clip_fraction = final_eval.clip_fraction;
    m.mean_ratio = final_eval.mean_ratio;
    m.tv_to_base = tv_max(base.agent(agent), res.policy.agent(agent));
    m.adv_stats = std::move(stats);
    res.updates.push_back(std::move(m));

    remaining.erase(std::find(remaining.begin(), remaining.end(), agent));
    preceding.push_back(agent);
  }
  return res;
}

StageResult mappo_stage(const DecMdp& mdp, const RolloutBatch& batch,
                        const JointPolicy& base, ValueTable value,
                        const TrainerConfig& cfg) {
  const int n = mdp.n_agents();
  StageResult res{base, std::move(value), {}};

  // Value targets are fixed at stage start; with a corrected estimator the
  // policy advantages are refreshed each epoch against the drifting joint
  // policy (full-joint ratio — preopc and vtrace coincide here).
  AdvantageField field =
      cfg.exact_advantages
          ? exact_oracle_advantages(mdp, batch, res.value, base)
          : gae(batch, res.value, cfg.gamma, cfg.lambda);
  std::vector<double> adv = field.advantage;
  if (cfg.normalize_advantages) normalize_in_place(adv);

  for (int ep = 0; ep < cfg.ppo_epochs; ++ep) {
    if (ep > 0 && !cfg.exact_advantages && cfg.estimator != Estimator::gae) {
      adv = vtrace_advantage(batch, res.value, base, res.policy, cfg.gamma,
                             cfg.lambda)
                .advantage;
      if (cfg.normalize_advantages) normalize_in_place(adv);
    }
    std::vector<SurrogateEval> evals(n);
    for (int i = 0; i < n; ++i)
      evals[i] = mappo_surrogate(batch, adv, base, res.policy, i, cfg.base_clip);
    for (int i = 0; i < n; ++i)
      apply_ascent_step(res.policy.agent(i), evals[i].grad, cfg.lr);
    res.value = value_step(std::move(res.value), batch, field, cfg.lr);
  }

  for (int i = 0; i < n; ++i) {
    SurrogateEval eval =
        mappo_surrogate(batch, adv, base, res.policy, i, cfg.base_clip);
    UpdateMetrics m;
    m.agent = i;
    m.order_k = i + 1;
    m.eps_i = cfg.base_clip;
    m.objective = eval.objective;
    m.clip_fraction = eval.clip_fraction;
    m.mean_ratio = eval.mean_ratio;
    m.tv_to_base = tv_max(base.agent(i), res.policy.agent(i));
    res.updates.push_back(std::move(m));
  }
  return res;
}

StageResult coppo_stage(const DecMdp& mdp, const RolloutBatch& batch,
                        const JointPolicy& base, ValueTable value,
                        const TrainerConfig& cfg) {
  const int n = mdp.n_agents();
  StageResult res{base, std::move(value), {}};

  AdvantageField field =
      cfg.exact_advantages
          ? exact_oracle_advantages(mdp, batch, res.value, base)
          : gae(batch, res.value, cfg.gamma, cfg.lambda);
  std::vector<double> adv = field.advantage;
  if (cfg.normalize_advantages) normalize_in_place(adv);

  for (int ep = 0; ep < cfg.ppo_epochs; ++ep) {
    if (ep > 0 && !cfg.exact_advantages && cfg.estimator != Estimator::gae) {
      adv = vtrace_advantage(batch, res.value, base, res.policy, cfg.gamma,
                             cfg.lambda)
                .advantage;
      if (cfg.normalize_advantages) normalize_in_place(adv);
    }
    // Simultaneous semantics: all gradients taken at the epoch's snapshot.
    const JointPolicy snapshot = res.policy;
    std::vector<SurrogateEval> evals(n);
    for (int i = 0; i < n; ++i)
      evals[i] = coppo_surrogate(batch, adv, base, snapshot, i, cfg.base_clip);
    for (int i = 0; i < n; ++i)
      apply_ascent_step(res.policy.agent(i), evals[i].grad, cfg.lr);
    res.value = value_step(std::move(res.value), batch, field, cfg.lr);
  }

  for (int i = 0; i < n; ++i) {
    SurrogateEval eval =
        coppo_surrogate(batch, adv, base, res.policy, i, cfg.base_clip);
    UpdateMetrics m;
    m.agent = i;
    m.order_k = i + 1;
    m.eps_i = cfg.base_clip;
    m.objective = eval.objective;
    m.clip_fraction = eval.clip_fraction;
    m.mean_ratio = eval.mean_ratio;
    m.tv_to_base = tv_max(base.agent(i), res.policy.agent(i));
    res.updates.push_back(std::move(m));
  }
  return res;
}

StageResult happo_stage(const DecMdp& mdp, const RolloutBatch& batch,
                        const JointPolicy& base, ValueTable value,
                        const TrainerConfig& cfg, Rng& rng) {
  const int n = mdp.n_agents();
  StageResult res{base, std::move(value), {}};

  // Base-policy advantages, computed once for the whole stage.
  AdvantageField field =
      cfg.exact_advantages
          ? exact_oracle_advantages(mdp, batch, res.value, base)
          : gae(batch, res.value, cfg.gamma, cfg.lambda);
  std::vector<double> adv = field.advantage;
  if (cfg.normalize_advantages) normalize_in_place(adv);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.happo_shuffle) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
  }
  const int epochs = sequential_epochs(cfg, n);

  std::vector<int> preceding;
  for (int k = 1; k <= n; ++k) {
    const int agent = order[k - 1];
    for (int ep = 0; ep < epochs; ++ep) {
      SurrogateEval eval = happo_surrogate(batch, adv, base, res.policy, agent,
                                           preceding, cfg.base_clip);
      apply_ascent_step(res.policy.agent(agent), eval.grad, cfg.lr);
      res.value = value_step(std::move(res.value), batch, field, cfg.lr);
    }
    SurrogateEval final_eval = happo_surrogate(batch, adv, base, res.policy,
                                               agent, preceding, cfg.base_clip);
    UpdateMetrics m;
    m.agent = agent;
    m.order_k = k;
    m.eps_i = cfg.base_clip;
    m.objective = final_eval.objective;
    m.clip_fraction = final_eval.clip_fraction;
    m.mean_ratio = final_eval.mean_ratio;
    m.tv_to_base = tv_max(base.agent(agent), res.policy.agent(agent));
    res.updates.push_back(std::move(m));
    preceding.push_back(agent);
  }
  return res;
}

Trainer::Trainer(DecMdp mdp, TrainerConfig cfg)
    : mdp_(std::move(mdp)),
      cfg_(cfg),
      policy_(JointPolicy::uniform(mdp_.n_states, mdp_.action_counts)),
      value_(ValueTable::zeros(mdp_.n_states)),
      rng_(split_seed(cfg.seed, 0x5e1ec7u)) {
  cfg_.validate();
  mdp_.validate();
  if (cfg_.init_logit_scale > 0.0) {
    Rng init_rng(split_seed(cfg_.seed, 0x1417u));
    for (int i = 0; i < policy_.n_agents(); ++i)
      policy_.agent(i).randomize_logits(cfg_.init_logit_scale, init_rng);
  }
}

double Trainer::exact_return() const {
  return exact_eval(mdp_, policy_).expected_return;
}

std::vector<IterationRow> Trainer::run_iteration(int iter,
                                                 bool oracle_enabled) {
  const std::uint64_t rollout_seed =
      split_seed(cfg_.seed, 0x0110c7ed00ULL + static_cast<std::uint64_t>(iter));
  RolloutBatch batch = rollout(mdp_, policy_, cfg_.horizon,
                               cfg_.episodes_per_iter, rollout_seed);
  last_empirical_return_ = empirical_return(batch, cfg_.gamma);

  StageResult res;
  switch (cfg_.algorithm) {
    case Algorithm::a2po:
      res = a2po_stage(mdp_, batch, policy_, std::move(value_), cfg_, rng_);
      break;
    case Algorithm::mappo:
      res = mappo_stage(mdp_, batch, policy_, std::move(value_), cfg_);
      break;
    case Algorithm::coppo:
      res = coppo_stage(mdp_, batch, policy_, std::move(value_), cfg_);
      break;
    case Algorithm::happo:
      res = happo_stage(mdp_, batch, policy_, std::move(value_), cfg_, rng_);
      break;
  }
  policy_ = std::move(res.policy);
  value_ = std::move(res.value);

  const double j_exact =
      oracle_enabled ? exact_eval(mdp_, policy_).expected_return
                     : std::numeric_limits<double>::quiet_NaN();
  std::vector<IterationRow> rows;
  rows.reserve(res.updates.size());
  for (const UpdateMetrics& u : res.updates) {
    IterationRow r;
    r.iter = iter;
    r.agent = u.agent;
    r.order_k = u.order_k;
    r.eps_i = u.eps_i;
    r.objective = u.objective;
    r.clip_fraction = u.clip_fraction;
    r.mean_ratio = u.mean_ratio;
    r.tv_to_base = u.tv_to_base;
    r.j_empirical = last_empirical_return_;
    r.j_exact = j_exact;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace marlab
