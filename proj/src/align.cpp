#include "tagrpo/align.hpp"

#include <stdexcept>

namespace tagrpo {

std::optional<AnchorPair> select_anchors(const Group& group) {
  if (group.size() < 2) throw std::runtime_error("select_anchors: group too small");
  if (group.degenerate) return std::nullopt;
  AnchorPair a;
  a.pos = 0;
  a.neg = 0;
  for (int i = 1; i < group.size(); ++i) {
    const double r = group.rollouts[static_cast<std::size_t>(i)].reward;
    if (r > group.rollouts[static_cast<std::size_t>(a.pos)].reward) a.pos = i;
    if (r < group.rollouts[static_cast<std::size_t>(a.neg)].reward) a.neg = i;
  }
  a.adv_pos = group.advantages[static_cast<std::size_t>(a.pos)];
  a.adv_neg = group.advantages[static_cast<std::size_t>(a.neg)];
  return a;
}

namespace {

struct AlignStepDenoms {
  double lp_pos = 0.0;
  double lp_neg = 0.0;
};

// Old-snapshot log-densities of both anchor targets from member i's state,
// sharing one forward pass. Runs the same code path as the policy side so the
// sync identity holds exactly.
AlignStepDenoms old_denominators(VelocityField& old_snapshot, const Vector& x_from,
                                 const Vector& x_pos, const Vector& x_neg, const Condition& c,
                                 double t, double dt, const RLConfig& cfg) {
  Tape tape(false);
  TransitionVars tv = transition_vars(tape, old_snapshot, x_from, c, t, dt, cfg.cfg_scale,
                                      cfg.sigma);
  AlignStepDenoms d;
  d.lp_pos = gaussian_logprob_var(tape, x_pos, tv.mean, tv.std).scalar();
  d.lp_neg = gaussian_logprob_var(tape, x_neg, tv.mean, tv.std).scalar();
  return d;
}

}  // namespace

Var align_ratio(Tape& tape, VelocityField& policy, VelocityField& old_snapshot,
                const Group& group, int member, int anchor, int k, const TimeGrid& grid,
                const RLConfig& cfg) {
  if (member < 0 || member >= group.size() || anchor < 0 || anchor >= group.size())
    throw std::runtime_error("align_ratio: member index out of range");
  if (k < 0 || k >= grid.steps()) throw std::runtime_error("align_ratio: bad step index");
  const auto& traj_m = group.rollouts[static_cast<std::size_t>(member)].trajectory;
  const auto& traj_a = group.rollouts[static_cast<std::size_t>(anchor)].trajectory;
  const double t = grid.times[static_cast<std::size_t>(k)];
  const double dt = grid.dt(k);
  const Vector& x_from = traj_m.latents[static_cast<std::size_t>(k)];
  const Vector& x_to = traj_a.latents[static_cast<std::size_t>(k) + 1];

  Var lp = transition_logprob(tape, policy, x_from, x_to, traj_m.condition, t, dt,
                              cfg.cfg_scale, cfg.sigma);
  const double lp_old = transition_logprob_value(old_snapshot, x_from, x_to, traj_m.condition,
                                                 t, dt, cfg.cfg_scale, cfg.sigma);
  return exp(add_scalar(lp, -lp_old));
}

Var align_objective(Tape& tape, VelocityField& policy, VelocityField& old_snapshot,
                    const Group& group, const TimeGrid& grid, const RLConfig& cfg,
                    ObjectiveStats* stats) {
  if (group.size() < 2) throw std::runtime_error("align_objective: group too small");
  const std::optional<AnchorPair> anchors = select_anchors(group);
  if (!anchors) {
    if (stats) ++stats->align_skipped;
    return tape.constant(Matrix(Matrix::Zero(1, 1)));
  }
  const std::vector<int> window = window_steps(grid, cfg.t_min);
  const auto& traj_pos = group.rollouts[static_cast<std::size_t>(anchors->pos)].trajectory;
  const auto& traj_neg = group.rollouts[static_cast<std::size_t>(anchors->neg)].trajectory;

  Var acc = tape.constant(Matrix(Matrix::Zero(1, 1)));
  int count = 0;
  for (int i = 0; i < group.size(); ++i) {
    const auto& traj_m = group.rollouts[static_cast<std::size_t>(i)].trajectory;
    for (int k : window) {
      const double t = grid.times[static_cast<std::size_t>(k)];
      const double dt = grid.dt(k);
      const Vector& x_from = traj_m.latents[static_cast<std::size_t>(k)];
      const Vector& x_pos = traj_pos.latents[static_cast<std::size_t>(k) + 1];
      const Vector& x_neg = traj_neg.latents[static_cast<std::size_t>(k) + 1];

      const AlignStepDenoms denoms = old_denominators(old_snapshot, x_from, x_pos, x_neg,
                                                      traj_m.condition, t, dt, cfg);
      TransitionVars tv = transition_vars(tape, policy, x_from, traj_m.condition, t, dt,
                                          cfg.cfg_scale, cfg.sigma);
      Var r_pos = exp(add_scalar(gaussian_logprob_var(tape, x_pos, tv.mean, tv.std),
                                 -denoms.lp_pos));
      Var r_neg = exp(add_scalar(gaussian_logprob_var(tape, x_neg, tv.mean, tv.std),
                                 -denoms.lp_neg));
      acc = add(acc, add(clipped_term(tape, r_pos, anchors->adv_pos, cfg.clip_eps),
                         clipped_term(tape, r_neg, anchors->adv_neg, cfg.clip_eps)));
      ++count;
    }
  }
  Var objective = scale(acc, 1.0 / static_cast<double>(count));
  if (stats) stats->align += objective.scalar();
  return objective;
}

Var total_objective(Tape& tape, VelocityField& policy, VelocityField& old_snapshot,
                    VelocityField& reference, const Group& group, const TimeGrid& grid,
                    const RLConfig& cfg, ObjectiveStats* stats) {
  Var base = grpo_objective(tape, policy, reference, group, grid, cfg.kl_beta, cfg, stats);
  if (cfg.align_gamma == 0.0) return base;
  Var align = align_objective(tape, policy, old_snapshot, group, grid, cfg, stats);
  return add(base, scale(align, cfg.align_gamma));
}

}  // namespace tagrpo
