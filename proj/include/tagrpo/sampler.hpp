#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tagrpo/rng.hpp"
#include "tagrpo/tape.hpp"
#include "tagrpo/velocity_model.hpp"

namespace tagrpo {

// Decreasing time grid from 1 (noise) to 0 (data): t_0 = 1 > ... > t_T = 0.
struct TimeGrid {
  std::vector<double> times;

  static TimeGrid uniform(int steps);
  int steps() const { return static_cast<int>(times.size()) - 1; }
  double dt(int k) const { return times[static_cast<std::size_t>(k) + 1] - times[static_cast<std::size_t>(k)]; }
  void validate() const;
};

// Noise scale sigma_t = eta * sqrt(t / (1 - t)), with t clamped from above so
// the scale stays finite near t = 1. eta = 0 turns the SDE into the ODE.
struct SigmaSchedule {
  double eta = 0.7;
  double t_clamp = 0.98;
  double sigma(double t) const;
};

// A sampled denoising path. latents has steps+1 entries; log_probs and noises
// have one entry per transition (empty for deterministic ODE paths).
struct Trajectory {
  std::vector<Vector> latents;
  std::vector<double> log_probs;
  std::vector<Vector> noises;
  Condition condition;
  std::uint64_t init_noise_seed = 0;
  std::uint64_t policy_version = 0;

  const Vector& final_latent() const { return latents.back(); }
};

// Velocity evaluated at (x, t); lets tests drive the integrators with analytic
// fields and the trainer drive them with guided model forwards.
using VelocityFn = std::function<Vector(const Vector&, double)>;

VelocityFn guided_fn(VelocityField& model, const Condition& c, double cfg_scale);

// Euler integration of dx/dt = v from t=1 to t=0 over the grid.
Trajectory ode_sample(const VelocityFn& v, const TimeGrid& grid, const Vector& x1);
Trajectory ode_sample(VelocityField& model, const Condition& c, double cfg_scale,
                      const TimeGrid& grid, const Vector& x1);

// Mean and scalar stddev of the Gaussian transition kernel for one step of the
// marginal-preserving SDE. dt must be negative (time runs backwards).
struct TransitionMoments {
  Vector mean;
  double std = 0.0;
};
TransitionMoments sde_transition(const Vector& x_t, const Vector& v, double t, double dt,
                                 const SigmaSchedule& sched);

// Per-dimension-averaged Gaussian log-density of x_to under (mean, std).
double gaussian_logprob(const Vector& x_to, const Vector& mean, double std);

struct SdeStepResult {
  Vector x_next;
  double log_prob = 0.0;
  Vector noise;
};

// One stochastic step with an externally supplied standard normal draw.
SdeStepResult sde_step_with_noise(const VelocityFn& v, const Vector& x_t, double t, double dt,
                                  const SigmaSchedule& sched, const Vector& eps);
SdeStepResult sde_step(const VelocityFn& v, const Vector& x_t, double t, double dt,
                       const SigmaSchedule& sched, Rng& rng);

// Chains sde_step over the grid, recording latents, per-step log densities and
// noises. With record_density = false and eta = 0 this reproduces ode_sample
// exactly.
Trajectory sde_sample(const VelocityFn& v, const TimeGrid& grid, const Vector& x1,
                      const SigmaSchedule& sched, Rng& rng, bool record_density = true);
Trajectory sde_sample(VelocityField& model, const Condition& c, double cfg_scale,
                      const TimeGrid& grid, const Vector& x1, const SigmaSchedule& sched,
                      Rng& rng, bool record_density = true);

// Differentiable transition kernel pieces at (x_from, t): the guided velocity
// var, the mean var derived from it, and the scalar std. One forward pass
// serves every density and divergence built on this transition.
struct TransitionVars {
  Var velocity;
  Var mean;
  double std = 0.0;
};
TransitionVars transition_vars(Tape& tape, VelocityField& model, const Vector& x_from,
                               const Condition& c, double t, double dt, double cfg_scale,
                               const SigmaSchedule& sched);

// Per-dimension-averaged Gaussian log-density with a differentiable mean.
Var gaussian_logprob_var(Tape& tape, const Vector& x_to, Var mean, double std);

// Differentiable log-density of the transition x_from -> x_to under the
// current parameters of `model`, with guidance applied exactly as during
// rollout.
Var transition_logprob(Tape& tape, VelocityField& model, const Vector& x_from,
                       const Vector& x_to, const Condition& c, double t, double dt,
                       double cfg_scale, const SigmaSchedule& sched);
double transition_logprob_value(VelocityField& model, const Vector& x_from, const Vector& x_to,
                                const Condition& c, double t, double dt, double cfg_scale,
                                const SigmaSchedule& sched);

}  // namespace tagrpo
