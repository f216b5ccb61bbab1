#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tagrpo/sampler.hpp"
#include "tagrpo/tape.hpp"
#include "tagrpo/velocity_model.hpp"

namespace tagrpo {

// Hyperparameters shared by the policy-gradient objectives.
struct RLConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double align_gamma = 1.0;
  double cfg_scale = 3.5;
  double t_min = 0.5;  // transitions with t_k >= t_min are trained
  SigmaSchedule sigma;
};

// Population statistics: mean 0, population (not sample) std 1. Groups whose
// reward spread is below 1e-6 are degenerate and get all-zero advantages.
std::vector<double> compute_advantages(const std::vector<double>& rewards);

constexpr double kDegenerateStd = 1e-6;

bool degenerate_rewards(const std::vector<double>& rewards);

enum class RolloutSource : std::uint8_t { kFresh, kBank };

// Bank bucket identity: which condition and which shared initial noise.
struct BankKey {
  int condition_id = 0;
  int noise_id = 0;
  friend auto operator<=>(const BankKey&, const BankKey&) = default;
};

struct Rollout {
  Trajectory trajectory;
  double reward = 0.0;
  RolloutSource source = RolloutSource::kFresh;
  std::uint64_t behavior_version = 0;  // sync generation that produced it
  std::uint64_t id = 0;                // unique per run
  BankKey key;
};

// A group of rollouts sharing condition and initial noise, with advantages
// computed over the group's rewards.
struct Group {
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
  bool degenerate = false;

  int size() const { return static_cast<int>(rollouts.size()); }
  const Condition& condition() const { return rollouts.front().trajectory.condition; }
};

Group make_group(std::vector<Rollout> rollouts);

// Indices k of grid transitions inside the train window [t_min, 1].
std::vector<int> window_steps(const TimeGrid& grid, double t_min);

// exp(logprob under the current policy - stored behavior log-density) for
// transition k of the rollout. Equals 1 right after a sync.
Var importance_ratio(Tape& tape, VelocityField& policy, const Rollout& rollout, int k,
                     const TimeGrid& grid, const RLConfig& cfg);

// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv)
Var clipped_term(Tape& tape, Var ratio, double advantage, double eps);

// Closed-form KL divergence between the policy and reference transition
// kernels at (x_t, t): (|dt|/2) * (sigma (1-t)/(2t) + 1/sigma)^2 * mean((v - v_ref)^2).
Var kl_penalty(Tape& tape, VelocityField& policy, VelocityField& reference, const Vector& x_t,
               const Condition& c, double t, double dt, const RLConfig& cfg);

double kl_coefficient(double t, double dt, double sigma);

struct ObjectiveStats {
  double surrogate = 0.0;
  double kl = 0.0;
  double align = 0.0;
  double clip_fraction = 0.0;
  int ratio_count = 0;
  int align_skipped = 0;
};

// Mean over group members and window transitions of the clipped surrogate
// minus beta times the KL penalty. Degenerate groups contribute only the KL
// term (advantages are zero, not skipped).
Var grpo_objective(Tape& tape, VelocityField& policy, VelocityField& reference,
                   const Group& group, const TimeGrid& grid, double kl_beta,
                   const RLConfig& cfg, ObjectiveStats* stats = nullptr);

}  // namespace tagrpo
