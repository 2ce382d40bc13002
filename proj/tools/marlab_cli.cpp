// marlab command-line front end: train / ablate / verify-bounds.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "marlab/environments.hpp"
#include "marlab/harness.hpp"
#include "marlab/oracle.hpp"

namespace {

using namespace marlab;

JointPolicy random_policy(int n_states, std::span<const int> action_counts,
                          double scale, Rng& rng) {
  JointPolicy jp = JointPolicy::uniform(n_states, action_counts);
  for (int i = 0; i < jp.n_agents(); ++i)
    jp.agent(i).randomize_logits(scale, rng);
  return jp;
}

// Heterogeneous per-agent perturbation: each agent moves by a random
// fraction of `scale`, so instances cover very uneven TV profiles.
JointPolicy perturb_policy(const JointPolicy& base, double scale, Rng& rng) {
  JointPolicy jp = base;
  for (int i = 0; i < jp.n_agents(); ++i) {
    const double agent_scale = scale * rng.uniform();
    std::vector<double> step(jp.agent(i).logits().size());
    for (double& x : step) x = agent_scale * rng.normal();
    jp.agent(i).add_to_logits(step);
  }
  return jp;
}

struct CheckCounter {
  std::string name;
  int checked = 0;
  int violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();

  void record(bool ok, double slack) {
    ++checked;
    if (!ok) ++violations;
    worst_slack = std::min(worst_slack, slack);
  }
};

struct VerifyOptions {
  std::string mdp_path;
  bool random = false;
  int states = 4;
  int agents = 2;
  int actions = 2;
  int trials = 100;
  std::uint64_t seed = 1;
  double lambda = 0.8;
  double gamma = 0.95;
  double sparsity = 1.0;
  double perturb = 0.4;
  std::string report_path;
};

int run_verify_bounds(const VerifyOptions& opt) {
  DecMdp loaded;
  if (!opt.mdp_path.empty()) loaded = load_decmdp(opt.mdp_path);

  CheckCounter pdl{"performance_difference_lemma"};
  CheckCounter cor2{"tv_subadditivity"};
  CheckCounter prop2{"transition_shift_telescoping"};
  CheckCounter thm1{"single_agent_bound"};
  CheckCounter thm2{"joint_bound"};
  CheckCounter tighten{"incremental_tightening"};
  CheckCounter order_always{"bound_ordering_first_terms"};
  CheckCounter order_qualified{"bound_ordering_small_xi"};
  int stated_condition_hits = 0;

  nlohmann::json last_report;
  for (int trial = 0; trial < opt.trials; ++trial) {
    Rng rng(split_seed(opt.seed, 1000 + static_cast<std::uint64_t>(trial)));
    DecMdp mdp =
        !opt.mdp_path.empty()
            ? loaded
            : random_decmdp(opt.states, opt.agents,
                            std::vector<int>(opt.agents, opt.actions),
                            split_seed(opt.seed, trial), opt.sparsity,
                            opt.gamma);
    const int n = mdp.n_agents();
    JointPolicy base =
        random_policy(mdp.n_states, mdp.action_counts, 0.5, rng);
    JointPolicy target = perturb_policy(base, opt.perturb, rng);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);

    // Performance difference lemma.
    const double lemma = performance_difference(mdp, base, target);
    const double dj = exact_eval(mdp, target).expected_return -
                      exact_eval(mdp, base).expected_return;
    pdl.record(std::abs(lemma - dj) < 1e-9, 1e-9 - std::abs(lemma - dj));

    // TV subadditivity of the product policy.
    double tv_sum = 0.0;
    for (int i = 0; i < n; ++i) tv_sum += tv_max(base.agent(i), target.agent(i));
    const double tv_joint = joint_tv_max(base, target);
    cor2.record(tv_joint <= tv_sum + 1e-12, tv_sum + 1e-12 - tv_joint);

    // Transition-shift telescoping across single-agent replacements.
    {
      JointPolicy prefix = base;
      std::vector<double> acc(static_cast<std::size_t>(mdp.n_states) *
                                  mdp.n_states,
                              0.0);
      for (int k = 0; k < n; ++k) {
        JointPolicy next = prefix;
        next.agent(order[k]) = target.agent(order[k]);
        const auto step = transition_shift(mdp, prefix, next);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += step[i];
        prefix = next;
      }
      const auto full = transition_shift(mdp, base, target);
      double err = 0.0;
      for (std::size_t i = 0; i < acc.size(); ++i)
        err = std::max(err, std::abs(acc[i] - full[i]));
      prop2.record(err <= 1e-12, 1e-12 - err);
    }

    BoundReport rep = bound_report(mdp, base, target, order, opt.lambda);
    last_report = rep.to_json();

    for (int i = 0; i < n; ++i) {
      const double slack =
          rep.a2po_single_agent_bounds[i] + 1e-9 - rep.per_agent_gap[i];
      thm1.record(slack >= 0.0, slack);
    }
    {
      const double slack = rep.bounds.at("a2po") + 1e-9 - rep.joint_gap;
      thm2.record(slack >= 0.0, slack);
    }
    {
      const auto partial = incremental_bounds(mdp, base, target, order, opt.lambda);
      bool ok = true;
      double slack = std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k < partial.size(); ++k) {
        slack = std::min(slack, partial[k - 1] + 1e-9 - partial[k]);
        if (partial[k] > partial[k - 1] + 1e-9) ok = false;
      }
      tighten.record(ok, slack);
    }

    // Always-true orderings: the xi-free part of the sequential bound is
    // term-wise below coppo/happo, which is below mappo.
    {
      const double xi_term = [&] {
        double s = 0.0;
        for (double x : rep.xi) s += x;
        return s / (1.0 - mdp.gamma);
      }();
      const double a2po_first = rep.bounds.at("a2po") - xi_term;
      const bool ok = a2po_first <= rep.bounds.at("coppo") + 1e-9 &&
                      rep.bounds.at("coppo") <= rep.bounds.at("mappo") + 1e-9;
      order_always.record(ok, rep.bounds.at("mappo") - a2po_first);
    }

    // Full ordering including the correction-error terms. The displayed
    // per-agent xi condition requires xi = 0 for the last-updated agent and
    // so never holds; qualifying trials instead satisfy the aggregate form
    // the same comparison needs: the xi mass consumes at most half the
    // total slack between the coppo and xi-free a2po terms.
    {
      bool stated = true;
      double budget_total = 0.0;
      double xi_mass = 0.0;
      double running = 0.0;
      double tv_total = 0.0;
      for (int i = 0; i < n; ++i)
        tv_total += rep.alpha[i];
      const double g = mdp.gamma;
      const double d_all = 1.0 - g * (1.0 - tv_total);
      for (int k = 0; k < n; ++k) {
        const int i = order[k];
        running += rep.alpha[i];
        const double d_i = 1.0 - g * (1.0 - running);
        const double following = tv_total - running;
        const double stated_threshold =
            g * (1.0 - g) * following / (d_i * d_all);
        if (!(rep.xi[i] < stated_threshold)) stated = false;
        budget_total +=
            4.0 * rep.epsilon * rep.alpha[i] * g * following / (d_i * d_all);
        xi_mass += rep.xi[i] / (1.0 - g);
      }
      const bool qualifies = xi_mass <= 0.5 * budget_total;
      if (stated) ++stated_condition_hits;
      if (qualifies) {
        const bool ok = rep.bounds.at("a2po") <= rep.bounds.at("coppo") + 1e-9 &&
                        rep.bounds.at("coppo") <= rep.bounds.at("mappo") + 1e-9;
        order_qualified.record(ok, rep.bounds.at("coppo") - rep.bounds.at("a2po"));
      }
    }
  }

  int exit_code = 0;
  auto print = [&](const CheckCounter& c) {
    const bool pass = c.violations == 0;
    if (!pass) exit_code = 1;
    std::printf("%s %-34s %d/%d ok (worst slack %.3e)\n",
                pass ? "PASS" : "FAIL", c.name.c_str(), c.checked - c.violations,
                c.checked, c.worst_slack);
  };
  print(pdl);
  print(cor2);
  print(prop2);
  print(thm1);
  print(thm2);
  print(tighten);
  print(order_always);
  print(order_qualified);
  std::printf("note: stated xi-condition hits: %d/%d (the displayed form requires "
              "xi=0 for the last-updated agent; qualifying trials use the "
              "slack-budget form)\n",
              stated_condition_hits, opt.trials);
  std::printf("last instance BoundReport:\n%s\n", last_report.dump(2).c_str());

  if (!opt.report_path.empty()) {
    std::ofstream out(opt.report_path);
    out << last_report.dump(2) << '\n';
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marlab: tabular multi-agent trust-region training lab"};
  app.require_subcommand(1);

  std::string manifest_path;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "run a training manifest");
  train->add_option("--manifest", manifest_path, "manifest JSON file")
      ->required();
  train->add_option("--set", overrides, "override scalar field: key=value");

  std::string ablate_manifest, axis;
  auto* ab = app.add_subcommand("ablate", "sweep one config axis");
  ab->add_option("--manifest", ablate_manifest, "manifest JSON file")
      ->required();
  ab->add_option("--axis", axis,
                 "estimator | selection_rule | adaptive_clip | lambda")
      ->required();

  VerifyOptions vopt;
  auto* vb = app.add_subcommand(
      "verify-bounds", "check the exact monotonic-bound inequalities");
  auto* mdp_opt = vb->add_option("--mdp", vopt.mdp_path, "DEC-MDP JSON file");
  auto* rnd_opt = vb->add_flag("--random", vopt.random, "use random instances");
  mdp_opt->excludes(rnd_opt);
  vb->add_option("--states", vopt.states, "random: number of states");
  vb->add_option("--agents", vopt.agents, "random: number of agents");
  vb->add_option("--actions", vopt.actions, "random: actions per agent");
  vb->add_option("--trials", vopt.trials, "number of instances to check");
  vb->add_option("--seed", vopt.seed, "RNG seed");
  vb->add_option("--lambda", vopt.lambda, "correction lambda");
  vb->add_option("--gamma", vopt.gamma, "random: discount factor");
  vb->add_option("--sparsity", vopt.sparsity, "random: Dirichlet concentration");
  vb->add_option("--perturb", vopt.perturb, "target policy perturbation scale");
  vb->add_option("--report", vopt.report_path, "write last BoundReport JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunManifest manifest = RunManifest::load(manifest_path);
      for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw std::invalid_argument("--set expects key=value, got: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key == "n_seeds") manifest.n_seeds = std::stoi(value);
        else if (key == "output_dir") manifest.output_dir = value;
        else if (key == "oracle_enabled") manifest.oracle_enabled = (value == "true" || value == "1");
        else if (key.rfind("env.", 0) == 0) manifest.environment[key.substr(4)] = nlohmann::json::parse(value, nullptr, false).is_discarded() ? nlohmann::json(value) : nlohmann::json::parse(value);
        else manifest.config.set_field(key, value);
      }
      RunSummary summary = run_experiment(manifest);
      std::printf("final J: mean %.6f std %.6f over %zu seeds -> %s\n",
                  summary.final_j_mean, summary.final_j_std,
                  summary.seeds.size(), manifest.output_dir.c_str());
      return 0;
    }
    if (*ab) {
      RunManifest manifest = RunManifest::load(ablate_manifest);
      nlohmann::json table = ablate(manifest, axis);
      std::printf("%s\n", table.dump(2).c_str());
      return 0;
    }
    if (*vb) {
      if (vopt.mdp_path.empty() && !vopt.random)
        throw std::invalid_argument(
            "verify-bounds: pass --mdp FILE or --random");
      return run_verify_bounds(vopt);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
