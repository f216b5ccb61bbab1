#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tagrpo/grpo.hpp"
#include "tagrpo/toytask.hpp"
#include "tagrpo/velocity_model.hpp"

namespace tagrpo {

// Every tunable in one place. Text configs are `key = value` lines with `#`
// comments; unknown keys and invalid values are collected and reported
// together. `seed` and `dataset_seed` have no defaults and must be provided
// (seed may come from the command line instead).
struct TrainerConfig {
  // model
  int hidden = 128;
  int depth = 3;
  int time_features = 16;
  int style_embed = 8;
  // task
  int frames = 8;
  int frame_dim = 2;
  int num_styles = 4;
  double damping = 0.8;
  double process_noise = 0.05;
  // dataset
  int dataset_size = 512;
  std::optional<std::uint64_t> dataset_seed;
  // pretraining
  int pretrain_steps = 2000;
  int pretrain_batch = 64;
  double pretrain_lr = 1e-3;
  double cond_dropout = 0.1;
  // policy optimization
  int group_size = 8;
  int fresh_per_step = 4;
  int groups_per_step = 4;
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double align_gamma = 1.0;
  double noise_eta = 0.7;
  double sigma_clamp = 0.98;
  double cfg_scale = 3.5;
  int sample_steps = 16;
  double t_min = 0.5;
  double rl_lr = 1e-4;
  int rl_steps = 300;
  int sync_interval = 1;
  int pair_pool = 256;
  // memory bank
  int bank_capacity = 32;
  int bank_staleness = 4;  // -1 disables staleness eviction
  // evaluation
  int bench_size = 64;
  int eval_interval = 25;
  // rewards
  double reward_smooth_weight = 1.0;
  double reward_endpoint_weight = 1.0;
  double reward_consistency_weight = 1.0;
  // run
  std::optional<std::uint64_t> seed;

  ModelArch arch() const;
  TaskConfig task() const;
  RLConfig rl() const;
  RewardSpec rewards() const;
};

// Parses the file and applies each assignment. Throws with every offending
// key listed when anything is unknown or malformed.
TrainerConfig load_config(const std::filesystem::path& path);

// Applies `key = value` assignments on top of an existing config.
void apply_assignments(TrainerConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv);

// Range/consistency validation; throws listing every offending key.
// `require_seeds` additionally demands seed and dataset_seed be set.
void validate_config(const TrainerConfig& cfg, bool require_seeds = true);

// Full key -> value snapshot in schema order; parsing this back yields an
// identical config.
std::vector<std::pair<std::string, std::string>> config_echo(const TrainerConfig& cfg);

TrainerConfig config_from_echo(const std::vector<std::pair<std::string, std::string>>& kv);

const std::vector<std::string>& config_key_names();

}  // namespace tagrpo
