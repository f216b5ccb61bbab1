#pragma once

#include <cstdint>
#include <vector>

#include "tagrpo/flow_match.hpp"
#include "tagrpo/rng.hpp"
#include "tagrpo/types.hpp"
#include "tagrpo/velocity_model.hpp"

namespace tagrpo {

struct TaskConfig {
  int frames = 8;
  int frame_dim = 2;
  int num_styles = 4;
  double damping = 0.8;        // spectral radius of the style maps
  double process_noise = 0.05;
};

// Linear style dynamics f_{k+1} = A f_k + b. A is a damped rotation, so every
// style contracts toward its own fixed point (I - A)^{-1} b.
struct StyleDynamics {
  Matrix a;
  Vector b;
  Vector fixed_point() const;
};

StyleDynamics style_dynamics(const TaskConfig& task, int style);

// Flattened layout: frame k occupies entries [k*D, (k+1)*D).
Vector flatten_frames(const std::vector<Vector>& frames);
std::vector<Vector> unflatten_frames(const Vector& x, int frame_dim);

// Sequences rolled out from a random first frame under a random style, with
// small process noise. The condition records the first frame and style.
std::vector<TrainPair> gen_dataset(const TaskConfig& task, int count, std::uint64_t seed);

// Rewards are all maximized at 0.
double reward_smooth(const Vector& x, int frame_dim);       // -mean ||f_{k+1} - 2 f_k + f_{k-1}||^2
double reward_consistency(const Vector& x, const Condition& c, int frame_dim);  // -||f_0 - c||^2
double reward_endpoint(const Vector& x, const Condition& c, const TaskConfig& task);

struct RewardSpec {
  double smooth_weight = 1.0;
  double endpoint_weight = 1.0;
  double consistency_weight = 1.0;
};

double reward_composite(const Vector& x, const Condition& c, const TaskConfig& task,
                        const RewardSpec& spec);

// Frozen evaluation set: conditions plus per-pair initial-noise seeds. Bench
// noise seeds are odd and training-pool noise seeds even, so the two never
// collide.
struct EvalPair {
  Condition cond;
  std::uint64_t noise_seed = 0;
};

struct EvalBench {
  std::vector<EvalPair> pairs;
};

EvalBench make_eval_bench(const TaskConfig& task, int size, std::uint64_t seed);

// Initial-noise seed for training-pool entry `noise_id` (always even).
std::uint64_t pool_noise_seed(std::uint64_t run_seed, int noise_id);

}  // namespace tagrpo
