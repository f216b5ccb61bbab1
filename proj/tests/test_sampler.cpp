#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "support/oracles.hpp"
#include "tagrpo/grad_check.hpp"
#include "tagrpo/rng.hpp"
#include "tagrpo/sampler.hpp"

using namespace tagrpo;
using testsup::Gauss1D;
using testsup::random_condition;
using testsup::randomize_params;
using testsup::tiny_arch;

TEST_CASE("uniform time grid") {
  TimeGrid grid = TimeGrid::uniform(16);
  CHECK(grid.steps() == 16);
  CHECK(grid.times.front() == 1.0);
  CHECK(grid.times.back() == 0.0);
  for (int k = 0; k < grid.steps(); ++k) CHECK(grid.dt(k) < 0.0);
  grid.validate();

  CHECK_THROWS_AS(TimeGrid::uniform(1), std::runtime_error);
  TimeGrid bad;
  bad.times = {1.0, 0.5, 0.1};
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  bad.times = {1.0, 0.6, 0.7, 0.0};
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
}

TEST_CASE("sigma schedule") {
  SigmaSchedule off{0.0, 0.98};
  CHECK(off.sigma(0.5) == 0.0);
  CHECK(off.sigma(0.999) == 0.0);

  SigmaSchedule sched{0.7, 0.98};
  CHECK(sched.sigma(0.5) == doctest::Approx(0.7).epsilon(1e-12));
  // Above the clamp the value freezes at the clamp point: 0.7*sqrt(0.98/0.02) = 4.9.
  CHECK(sched.sigma(0.99) == doctest::Approx(4.9).epsilon(1e-12));
  CHECK(sched.sigma(0.99) == sched.sigma(0.98));
  CHECK_THROWS_AS(sched.sigma(0.0), std::runtime_error);
  CHECK_THROWS_AS(sched.sigma(-0.1), std::runtime_error);
}

TEST_CASE("ode sampling with simple fields") {
  TimeGrid grid = TimeGrid::uniform(8);
  Rng rng(1);
  Vector x1 = rng.normal_vector(4);

  Trajectory still = ode_sample([](const Vector& x, double) { return Vector(0.0 * x); }, grid, x1);
  CHECK(still.latents.size() == 9);
  CHECK(still.log_probs.empty());
  for (const Vector& x : still.latents) CHECK(x == x1);

  Vector w = rng.normal_vector(4);
  Trajectory drift = ode_sample([&](const Vector&, double) { return w; }, grid, x1);
  CHECK((drift.final_latent() - (x1 - w)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fine-grid ode endpoints match the Gaussian data distribution") {
  Gauss1D g;
  TimeGrid grid = TimeGrid::uniform(512);
  VelocityFn v = g.velocity_fn();
  Rng rng(2);
  const int particles = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < particles; ++i) {
    double x0 = ode_sample(v, grid, Vector::Constant(1, rng.normal())).final_latent()[0];
    sum += x0;
    sum2 += x0 * x0;
  }
  double mean = sum / particles;
  double stdev = std::sqrt(sum2 / particles - mean * mean);
  CHECK(std::abs(mean - g.mu) <= 0.02 * g.mu);
  CHECK(std::abs(stdev - g.sigma0) <= 0.02 * g.sigma0);
}

TEST_CASE("sde transition moments") {
  SigmaSchedule sched{0.7, 0.98};
  Vector x = Vector::Constant(1, 1.0);
  Vector v = Vector::Constant(1, -1.0);
  TransitionMoments m = sde_transition(x, v, 0.5, -0.0625, sched);
  // mean = 1 + [-1 + (0.49/1)(1 + 0.5*(-1))]*(-0.0625) = 1.0471875
  CHECK(m.mean[0] == doctest::Approx(1.0471875).epsilon(1e-12));
  CHECK(m.std == doctest::Approx(0.175).epsilon(1e-12));

  CHECK_THROWS_AS(sde_transition(x, v, 0.0, -0.1, sched), std::runtime_error);
  CHECK_THROWS_AS(sde_transition(x, v, 0.5, 0.1, sched), std::runtime_error);
}

TEST_CASE("eta zero reduces the transition to the Euler step") {
  SigmaSchedule off{0.0, 0.98};
  Rng rng(3);
  Vector x = rng.normal_vector(4), v = rng.normal_vector(4);
  double t = 0.6, dt = -0.125;
  TransitionMoments m = sde_transition(x, v, t, dt, off);
  CHECK(m.std == 0.0);
  CHECK(m.mean == Vector(x + dt * v));
}

TEST_CASE("transition mean is affine in the state for fixed velocity") {
  SigmaSchedule sched{0.7, 0.98};
  Rng rng(4);
  Vector v = rng.normal_vector(3);
  Vector xa = rng.normal_vector(3), xb = rng.normal_vector(3);
  double t = 0.4, dt = -0.1;
  Vector lhs = sde_transition(Vector(xa + xb), v, t, dt, sched).mean +
               sde_transition(Vector(Vector::Zero(3)), v, t, dt, sched).mean;
  Vector rhs =
      sde_transition(xa, v, t, dt, sched).mean + sde_transition(xb, v, t, dt, sched).mean;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sde step densities and noise round-trip") {
  SigmaSchedule sched{0.7, 0.98};
  Rng rng(5);
  Vector x = rng.normal_vector(4);
  auto vfn = [&](const Vector& xin, double) { return Vector(-0.5 * xin); };
  double t = 0.75, dt = -0.0625;

  SdeStepResult mode = sde_step_with_noise(vfn, x, t, dt, sched, Vector::Zero(4));
  TransitionMoments m = sde_transition(x, vfn(x, t), t, dt, sched);
  CHECK(mode.x_next == m.mean);
  CHECK(mode.log_prob == doctest::Approx(-0.5 * std::log(2 * M_PI * m.std * m.std)).epsilon(1e-12));

  Vector eps = rng.normal_vector(4);
  SdeStepResult step = sde_step_with_noise(vfn, x, t, dt, sched, eps);
  CHECK((Vector((step.x_next - m.mean) / m.std) - eps).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(step.noise == eps);

  // Density with zero noise scale is undefined.
  SigmaSchedule off{0.0, 0.98};
  CHECK_THROWS_AS(sde_step_with_noise(vfn, x, t, dt, off, eps), std::runtime_error);
}

TEST_CASE("shifting by one std in one dimension lowers the density by 0.5/n") {
  SigmaSchedule sched{0.7, 0.98};
  Rng rng(6);
  const int n = 8;
  Vector mean = rng.normal_vector(n);
  double std = 0.3;
  Vector x = mean;
  double at_mode = gaussian_logprob(x, mean, std);
  CHECK(at_mode == doctest::Approx(-0.5 * std::log(2 * M_PI * std * std)).epsilon(1e-12));
  x[3] += std;
  CHECK(gaussian_logprob(x, mean, std) ==
        doctest::Approx(at_mode - 0.5 / n).epsilon(1e-12));
}

TEST_CASE("empirical step standard deviation matches the schedule") {
  SigmaSchedule sched{0.7, 0.98};
  Rng data_rng(7);
  Vector x = data_rng.normal_vector(2);
  auto vfn = [](const Vector& xin, double) { return Vector(-xin); };
  double t = 0.5, dt = -0.0625;
  TransitionMoments m = sde_transition(x, vfn(x, t), t, dt, sched);

  Rng rng(8);
  const int draws = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    SdeStepResult s = sde_step(vfn, x, t, dt, sched, rng);
    for (int d = 0; d < 2; ++d) {
      double dev = s.x_next[d] - m.mean[d];
      sum += dev;
      sum2 += dev * dev;
    }
  }
  double var = sum2 / (2 * draws) - (sum / (2 * draws)) * (sum / (2 * draws));
  CHECK(std::abs(std::sqrt(var) - m.std) <= 0.01 * m.std);
}

TEST_CASE("eta zero sde reproduces the ode bitwise") {
  Gauss1D g;
  TimeGrid grid = TimeGrid::uniform(16);
  VelocityFn v = g.velocity_fn();
  SigmaSchedule off{0.0, 0.98};
  Rng rng(9);
  Vector x1 = Vector::Constant(1, rng.normal());

  Trajectory ode = ode_sample(v, grid, x1);
  Rng rng2(10);
  Trajectory sde = sde_sample(v, grid, x1, off, rng2, false);
  REQUIRE(ode.latents.size() == sde.latents.size());
  for (std::size_t i = 0; i < ode.latents.size(); ++i) CHECK(ode.latents[i] == sde.latents[i]);
  CHECK(sde.log_probs.empty());
}

TEST_CASE("identical seeds give identical stochastic trajectories") {
  Gauss1D g;
  TimeGrid grid = TimeGrid::uniform(16);
  SigmaSchedule sched{0.7, 0.98};
  Vector x1 = Vector::Constant(1, 0.3);
  Rng a(11), b(11);
  Trajectory ta = sde_sample(g.velocity_fn(), grid, x1, sched, a);
  Trajectory tb = sde_sample(g.velocity_fn(), grid, x1, sched, b);
  REQUIRE(ta.latents.size() == tb.latents.size());
  for (std::size_t i = 0; i < ta.latents.size(); ++i) CHECK(ta.latents[i] == tb.latents[i]);
  CHECK(ta.log_probs == tb.log_probs);
}

TEST_CASE("sde marginals track the analytic interpolant marginals") {
  Gauss1D g;
  const int T = 64;
  TimeGrid grid = TimeGrid::uniform(T);
  SigmaSchedule sched{0.7, 0.98};
  VelocityFn v = g.velocity_fn();
  Rng rng(12);
  const int particles = 50000;

  // Grid indices where t = 0.75, 0.5, 0.25, 0.
  std::vector<int> probes = {T / 4, T / 2, 3 * T / 4, T};
  std::vector<double> sum(probes.size(), 0.0), sum2(probes.size(), 0.0);
  for (int i = 0; i < particles; ++i) {
    Trajectory traj =
        sde_sample(v, grid, Vector::Constant(1, rng.normal()), sched, rng, false);
    for (std::size_t j = 0; j < probes.size(); ++j) {
      double x = traj.latents[static_cast<std::size_t>(probes[j])][0];
      sum[j] += x;
      sum2[j] += x * x;
    }
  }
  for (std::size_t j = 0; j < probes.size(); ++j) {
    double t = grid.times[static_cast<std::size_t>(probes[j])];
    double mean = sum[j] / particles;
    double stdev = std::sqrt(sum2[j] / particles - mean * mean);
    INFO("t=", t, " mean ", mean, " vs ", g.mean_t(t), ", std ", stdev, " vs ", g.std_t(t));
    CHECK(std::abs(mean - g.mean_t(t)) <= 0.03 * std::max(std::abs(g.mean_t(t)), 1.0));
    CHECK(std::abs(stdev - g.std_t(t)) <= 0.03 * g.std_t(t));
  }
}

TEST_CASE("stored densities match recomputation under the rollout model") {
  ModelArch arch = tiny_arch();
  VelocityField model(arch, 42);
  Rng prng(13);
  randomize_params(model, prng, 0.3);
  Condition c = random_condition(arch, prng);
  TimeGrid grid = TimeGrid::uniform(8);
  SigmaSchedule sched{0.7, 0.98};
  double cfg_scale = 3.5;

  Rng rng(14);
  Vector x1 = rng.normal_vector(arch.latent_dim());
  Trajectory traj = sde_sample(model, c, cfg_scale, grid, x1, sched, rng);
  REQUIRE(traj.log_probs.size() == static_cast<std::size_t>(grid.steps()));
  CHECK(traj.policy_version == model.params().version());
  CHECK(traj.condition.style_id == c.style_id);

  for (int k = 0; k < grid.steps(); ++k) {
    double lp = transition_logprob_value(model, traj.latents[static_cast<std::size_t>(k)],
                                         traj.latents[static_cast<std::size_t>(k) + 1], c,
                                         grid.times[static_cast<std::size_t>(k)], grid.dt(k),
                                         cfg_scale, sched);
    CHECK(lp == doctest::Approx(traj.log_probs[static_cast<std::size_t>(k)]).epsilon(1e-9));
  }
}

TEST_CASE("differentiable transition matches the value path") {
  ModelArch arch = tiny_arch();
  VelocityField model(arch, 42);
  Rng rng(15);
  randomize_params(model, rng, 0.3);
  Condition c = random_condition(arch, rng);
  SigmaSchedule sched{0.7, 0.98};
  Vector x_from = rng.normal_vector(arch.latent_dim());
  Vector x_to = rng.normal_vector(arch.latent_dim());
  double t = 0.8, dt = -0.125, cfg_scale = 3.5;

  Tape tape(false);
  double graph = transition_logprob(tape, model, x_from, x_to, c, t, dt, cfg_scale, sched).scalar();
  double value = transition_logprob_value(model, x_from, x_to, c, t, dt, cfg_scale, sched);
  CHECK(graph == value);

  TransitionMoments m =
      sde_transition(x_from, guided_velocity_value(model, x_from, c, t, cfg_scale), t, dt, sched);
  CHECK(value == doctest::Approx(gaussian_logprob(x_to, m.mean, m.std)).epsilon(1e-12));
}

TEST_CASE("transition density gradient passes the finite-difference check") {
  ModelArch arch = tiny_arch();
  VelocityField model(arch, 42);
  Rng rng(16);
  randomize_params(model, rng, 0.3);
  Condition c = random_condition(arch, rng);
  SigmaSchedule sched{0.7, 0.98};
  Vector x_from = rng.normal_vector(arch.latent_dim());
  Vector x_to = rng.normal_vector(arch.latent_dim());

  auto loss = [&](ParamStore&) {
    Tape tape;
    return tape.backward(
        transition_logprob(tape, model, x_from, x_to, c, 0.8, -0.125, 3.5, sched));
  };
  GradCheckResult res = gradient_check(model.params(), loss);
  INFO("worst ", res.worst_param, " analytic ", res.analytic, " numeric ", res.numeric);
  CHECK(res.ok(1e-4));
  model.params().zero_grad();
}
