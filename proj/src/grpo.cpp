#include "tagrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tagrpo {

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
  const auto g = rewards.size();
  if (g < 2) throw std::runtime_error("compute_advantages: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);  // population variance
  const double sd = std::sqrt(var);
  std::vector<double> adv(g, 0.0);
  if (sd < kDegenerateStd) return adv;  // flat rewards carry no signal
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

bool degenerate_rewards(const std::vector<double>& rewards) {
  const auto g = rewards.size();
  if (g < 2) throw std::runtime_error("degenerate_rewards: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  return std::sqrt(var) < kDegenerateStd;
}

Group make_group(std::vector<Rollout> rollouts) {
  if (rollouts.size() < 2) throw std::runtime_error("make_group: need at least 2 rollouts");
  Group group;
  group.rollouts = std::move(rollouts);
  std::vector<double> rewards;
  rewards.reserve(group.rollouts.size());
  for (const auto& r : group.rollouts) {
    if (r.trajectory.latents.empty())
      throw std::runtime_error("make_group: rollout has no latents");
    rewards.push_back(r.reward);
  }
  group.advantages = compute_advantages(rewards);
  group.degenerate = degenerate_rewards(rewards);
  return group;
}

std::vector<int> window_steps(const TimeGrid& grid, double t_min) {
  std::vector<int> steps;
  for (int k = 0; k < grid.steps(); ++k)
    if (grid.times[static_cast<std::size_t>(k)] >= t_min) steps.push_back(k);
  if (steps.empty()) throw std::runtime_error("window_steps: empty train window");
  return steps;
}

Var importance_ratio(Tape& tape, VelocityField& policy, const Rollout& rollout, int k,
                     const TimeGrid& grid, const RLConfig& cfg) {
  const auto& traj = rollout.trajectory;
  if (k < 0 || k >= grid.steps()) throw std::runtime_error("importance_ratio: bad step index");
  if (traj.log_probs.size() != static_cast<std::size_t>(grid.steps()))
    throw std::runtime_error("importance_ratio: rollout has no stored transition densities");
  const double t = grid.times[static_cast<std::size_t>(k)];
  Var lp = transition_logprob(tape, policy, traj.latents[static_cast<std::size_t>(k)],
                              traj.latents[static_cast<std::size_t>(k) + 1], traj.condition, t,
                              grid.dt(k), cfg.cfg_scale, cfg.sigma);
  return exp(add_scalar(lp, -traj.log_probs[static_cast<std::size_t>(k)]));
}

Var clipped_term(Tape& tape, Var ratio, double advantage, double eps) {
  (void)tape;
  if (!(eps > 0.0)) throw std::runtime_error("clipped_term: eps must be positive");
  Var a = scale(ratio, advantage);
  Var b = scale(clip(ratio, 1.0 - eps, 1.0 + eps), advantage);
  return minimum(a, b);
}

double kl_coefficient(double t, double dt, double sigma) {
  if (!(sigma > 0.0)) throw std::runtime_error("kl_coefficient: sigma must be positive");
  if (!(t > 0.0)) throw std::runtime_error("kl_coefficient: t must be positive");
  const double c = sigma * (1.0 - t) / (2.0 * t) + 1.0 / sigma;
  return 0.5 * std::abs(dt) * c * c;
}

namespace {

// KL term reusing an already-built policy velocity var.
Var kl_penalty_with(Tape& tape, Var v_policy, VelocityField& reference, const Vector& x_t,
                    const Condition& c, double t, double dt, const RLConfig& cfg) {
  Var v_ref = guided_velocity(tape, reference, x_t, c, t, cfg.cfg_scale);
  Var gap = mean(square(sub(v_policy, v_ref)));
  return scale(gap, kl_coefficient(t, dt, cfg.sigma.sigma(t)));
}

}  // namespace

Var kl_penalty(Tape& tape, VelocityField& policy, VelocityField& reference, const Vector& x_t,
               const Condition& c, double t, double dt, const RLConfig& cfg) {
  Var v = guided_velocity(tape, policy, x_t, c, t, cfg.cfg_scale);
  return kl_penalty_with(tape, v, reference, x_t, c, t, dt, cfg);
}

Var grpo_objective(Tape& tape, VelocityField& policy, VelocityField& reference,
                   const Group& group, const TimeGrid& grid, double kl_beta,
                   const RLConfig& cfg, ObjectiveStats* stats) {
  if (group.size() < 2) throw std::runtime_error("grpo_objective: group too small");
  const std::vector<int> window = window_steps(grid, cfg.t_min);

  Var acc = tape.constant(Matrix(Matrix::Zero(1, 1)));
  double surrogate_sum = 0.0, kl_sum = 0.0;
  int clipped = 0, count = 0;

  for (int i = 0; i < group.size(); ++i) {
    const Rollout& rollout = group.rollouts[static_cast<std::size_t>(i)];
    const auto& traj = rollout.trajectory;
    if (traj.log_probs.size() != static_cast<std::size_t>(grid.steps()))
      throw std::runtime_error("grpo_objective: rollout has no stored transition densities");
    const double adv = group.advantages[static_cast<std::size_t>(i)];
    for (int k : window) {
      const double t = grid.times[static_cast<std::size_t>(k)];
      const double dt = grid.dt(k);
      const Vector& x_from = traj.latents[static_cast<std::size_t>(k)];
      const Vector& x_to = traj.latents[static_cast<std::size_t>(k) + 1];

      TransitionVars tv =
          transition_vars(tape, policy, x_from, traj.condition, t, dt, cfg.cfg_scale, cfg.sigma);
      Var lp = gaussian_logprob_var(tape, x_to, tv.mean, tv.std);
      Var ratio = exp(add_scalar(lp, -traj.log_probs[static_cast<std::size_t>(k)]));
      Var term = clipped_term(tape, ratio, adv, cfg.clip_eps);
      if (kl_beta != 0.0) {
        Var kl = kl_penalty_with(tape, tv.velocity, reference, x_from, traj.condition, t, dt, cfg);
        term = sub(term, scale(kl, kl_beta));
        kl_sum += kl.scalar();
      }
      acc = add(acc, term);

      const double r = ratio.scalar();
      surrogate_sum += std::min(r * adv, std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv);
      if (r < 1.0 - cfg.clip_eps || r > 1.0 + cfg.clip_eps) ++clipped;
      ++count;
    }
  }

  Var objective = scale(acc, 1.0 / static_cast<double>(count));
  if (stats) {
    stats->surrogate += surrogate_sum / static_cast<double>(count);
    stats->kl += kl_sum / static_cast<double>(count);
    stats->clip_fraction += static_cast<double>(clipped) / static_cast<double>(count);
    stats->ratio_count += count;
  }
  return objective;
}

}  // namespace tagrpo
