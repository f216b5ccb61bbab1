#include "tagrpo/sampler.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tagrpo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_step_args(double t, double dt) {
  if (!(t > 0.0 && t <= 1.0)) throw std::runtime_error("sde step: t must be in (0,1]");
  if (!(dt < 0.0)) throw std::runtime_error("sde step: dt must be negative");
  if (t + dt < -1e-12) throw std::runtime_error("sde step: step passes t=0");
}

}  // namespace

TimeGrid TimeGrid::uniform(int steps) {
  if (steps < 2) throw std::runtime_error("TimeGrid: need at least 2 steps");
  TimeGrid g;
  g.times.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k)
    g.times[static_cast<std::size_t>(k)] = static_cast<double>(steps - k) / steps;
  g.times.front() = 1.0;
  g.times.back() = 0.0;
  g.validate();
  return g;
}

void TimeGrid::validate() const {
  if (times.size() < 3) throw std::runtime_error("TimeGrid: need at least 2 steps");
  if (times.front() != 1.0 || times.back() != 0.0)
    throw std::runtime_error("TimeGrid: endpoints must be exactly 1 and 0");
  for (std::size_t k = 0; k + 1 < times.size(); ++k)
    if (!(times[k] > times[k + 1]))
      throw std::runtime_error("TimeGrid: times must strictly decrease");
}

double SigmaSchedule::sigma(double t) const {
  if (!(t > 0.0)) throw std::runtime_error("SigmaSchedule: sigma undefined at t <= 0");
  if (eta == 0.0) return 0.0;
  const double tc = std::min(t, t_clamp);
  return eta * std::sqrt(tc / (1.0 - tc));
}

VelocityFn guided_fn(VelocityField& model, const Condition& c, double cfg_scale) {
  return [&model, c, cfg_scale](const Vector& x, double t) {
    return guided_velocity_value(model, x, c, t, cfg_scale);
  };
}

Trajectory ode_sample(const VelocityFn& v, const TimeGrid& grid, const Vector& x1) {
  grid.validate();
  Trajectory traj;
  traj.latents.reserve(static_cast<std::size_t>(grid.steps()) + 1);
  traj.latents.push_back(x1);
  for (int k = 0; k < grid.steps(); ++k) {
    const Vector& x = traj.latents.back();
    const double t = grid.times[static_cast<std::size_t>(k)];
    traj.latents.push_back(x + grid.dt(k) * v(x, t));
  }
  return traj;
}

Trajectory ode_sample(VelocityField& model, const Condition& c, double cfg_scale,
                      const TimeGrid& grid, const Vector& x1) {
  Trajectory traj = ode_sample(guided_fn(model, c, cfg_scale), grid, x1);
  traj.condition = c;
  traj.policy_version = model.params().version();
  return traj;
}

TransitionMoments sde_transition(const Vector& x_t, const Vector& v, double t, double dt,
                                 const SigmaSchedule& sched) {
  require_step_args(t, dt);
  TransitionMoments out;
  const double sig = sched.sigma(t);
  if (sig == 0.0) {
    out.mean = x_t + dt * v;  // matches the ODE Euler update bit-for-bit
    out.std = 0.0;
    return out;
  }
  const double k2 = sig * sig / (2.0 * t);
  out.mean = x_t + (v + k2 * (x_t + (1.0 - t) * v)) * dt;
  out.std = sig * std::sqrt(-dt);
  return out;
}

double gaussian_logprob(const Vector& x_to, const Vector& mean, double std) {
  if (!(std > 0.0)) throw std::runtime_error("gaussian_logprob: std must be positive");
  if (x_to.size() != mean.size()) throw std::runtime_error("gaussian_logprob: size mismatch");
  const double n = static_cast<double>(x_to.size());
  const double quad = (x_to - mean).squaredNorm() / n;
  return -0.5 * std::log(kTwoPi * std * std) - quad / (2.0 * std * std);
}

SdeStepResult sde_step_with_noise(const VelocityFn& v, const Vector& x_t, double t, double dt,
                                  const SigmaSchedule& sched, const Vector& eps) {
  const TransitionMoments m = sde_transition(x_t, v(x_t, t), t, dt, sched);
  if (!(m.std > 0.0))
    throw std::runtime_error("sde_step: transition density requested with zero noise scale");
  SdeStepResult r;
  r.x_next = m.mean + m.std * eps;
  r.log_prob = gaussian_logprob(r.x_next, m.mean, m.std);
  r.noise = eps;
  return r;
}

SdeStepResult sde_step(const VelocityFn& v, const Vector& x_t, double t, double dt,
                       const SigmaSchedule& sched, Rng& rng) {
  return sde_step_with_noise(v, x_t, t, dt, sched,
                             rng.normal_vector(static_cast<int>(x_t.size())));
}

Trajectory sde_sample(const VelocityFn& v, const TimeGrid& grid, const Vector& x1,
                      const SigmaSchedule& sched, Rng& rng, bool record_density) {
  grid.validate();
  if (!record_density && sched.eta == 0.0) return ode_sample(v, grid, x1);

  Trajectory traj;
  traj.latents.reserve(static_cast<std::size_t>(grid.steps()) + 1);
  traj.latents.push_back(x1);
  for (int k = 0; k < grid.steps(); ++k) {
    const Vector& x = traj.latents.back();
    const double t = grid.times[static_cast<std::size_t>(k)];
    SdeStepResult r = sde_step(v, x, t, grid.dt(k), sched, rng);
    traj.latents.push_back(std::move(r.x_next));
    if (record_density) traj.log_probs.push_back(r.log_prob);
    traj.noises.push_back(std::move(r.noise));
  }
  return traj;
}

Trajectory sde_sample(VelocityField& model, const Condition& c, double cfg_scale,
                      const TimeGrid& grid, const Vector& x1, const SigmaSchedule& sched,
                      Rng& rng, bool record_density) {
  Trajectory traj = sde_sample(guided_fn(model, c, cfg_scale), grid, x1, sched, rng,
                               record_density);
  traj.condition = c;
  traj.policy_version = model.params().version();
  return traj;
}

TransitionVars transition_vars(Tape& tape, VelocityField& model, const Vector& x_from,
                               const Condition& c, double t, double dt, double cfg_scale,
                               const SigmaSchedule& sched) {
  require_step_args(t, dt);
  const double sig = sched.sigma(t);
  if (!(sig > 0.0))
    throw std::runtime_error("transition_vars: undefined for zero noise scale");
  const double k2 = sig * sig / (2.0 * t);

  TransitionVars tv;
  tv.velocity = guided_velocity(tape, model, x_from, c, t, cfg_scale);
  // mean = x + (v + k2 * (x + (1-t) v)) * dt, mirroring sde_transition.
  Var xc = tape.constant(x_from);
  Var drift = add(tv.velocity, scale(add(xc, scale(tv.velocity, 1.0 - t)), k2));
  tv.mean = add(xc, scale(drift, dt));
  tv.std = sig * std::sqrt(-dt);
  return tv;
}

Var gaussian_logprob_var(Tape& tape, const Vector& x_to, Var mean_v, double std) {
  if (!(std > 0.0)) throw std::runtime_error("gaussian_logprob_var: std must be positive");
  Var quad = mean(square(sub(tape.constant(x_to), mean_v)));
  return add_scalar(scale(quad, -1.0 / (2.0 * std * std)),
                    -0.5 * std::log(kTwoPi * std * std));
}

Var transition_logprob(Tape& tape, VelocityField& model, const Vector& x_from,
                       const Vector& x_to, const Condition& c, double t, double dt,
                       double cfg_scale, const SigmaSchedule& sched) {
  TransitionVars tv = transition_vars(tape, model, x_from, c, t, dt, cfg_scale, sched);
  return gaussian_logprob_var(tape, x_to, tv.mean, tv.std);
}

double transition_logprob_value(VelocityField& model, const Vector& x_from, const Vector& x_to,
                                const Condition& c, double t, double dt, double cfg_scale,
                                const SigmaSchedule& sched) {
  Tape tape(false);
  return transition_logprob(tape, model, x_from, x_to, c, t, dt, cfg_scale, sched).scalar();
}

}  // namespace tagrpo
