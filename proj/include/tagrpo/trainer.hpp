#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tagrpo/align.hpp"
#include "tagrpo/config.hpp"
#include "tagrpo/memory_bank.hpp"
#include "tagrpo/serialize.hpp"

namespace tagrpo {

struct PretrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::filesystem::path manifest;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

PretrainResult run_pretrain(const TrainerConfig& cfg, const std::filesystem::path& out_dir);

enum class Algo { kGrpo, kTagrpo };

const char* algo_name(Algo a);
Algo parse_algo(const std::string& name);

struct RlOptions {
  Algo algo = Algo::kTagrpo;
  bool no_memory_bank = false;  // train from fresh rollouts only
  bool no_align = false;        // drop the alignment objective (gamma = 0)
  std::filesystem::path resume_bank;  // optional bank file to continue from
};

// One row per training step. wall_time_ms is elapsed real time and is the
// only column that varies between identically-seeded runs.
struct TrainLogRow {
  int step = 0;
  double mean_group_reward = 0.0;  // mean reward of this step's fresh rollouts
  double eval_reward = 0.0;        // latest bench evaluation
  double surrogate = 0.0;
  double align_value = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  int bank_fill = 0;
  int degenerate_groups = 0;
  double wall_time_ms = 0.0;
};

extern const char* const kTrainLogHeader;

std::string format_trainlog_row(const TrainLogRow& row);

struct RlResult {
  std::filesystem::path checkpoint;
  std::filesystem::path trainlog;
  std::filesystem::path manifest;
  std::filesystem::path bench_file;
  std::filesystem::path bank_file;  // empty when the bank is disabled
  double final_eval = 0.0;
  double final_mean_reward = 0.0;
  std::vector<TrainLogRow> rows;
};

// Group-relative policy optimization on top of a pretrained checkpoint.
// algo = grpo forces the memory bank and alignment off; the two flags carve
// the same pieces off the full method one at a time.
RlResult run_rl(const TrainerConfig& cfg, const RlOptions& options,
                const std::filesystem::path& pretrain_checkpoint,
                const std::filesystem::path& out_dir);

struct EvalReport {
  std::vector<double> rewards;
  double mean = 0.0;
  double mean_smooth = 0.0;
  double mean_endpoint = 0.0;
  double mean_consistency = 0.0;
};

// Deterministic bench evaluation: ODE sampling from each pair's frozen
// initial noise, scored with the composite reward.
EvalReport run_eval(const TrainerConfig& cfg, VelocityField& model, const EvalBench& bench);
EvalReport run_eval_checkpoint(const TrainerConfig& cfg,
                               const std::filesystem::path& checkpoint, const EvalBench& bench);

// Merges training logs into one CSV and renders reward curves as an SVG.
void export_curves(const std::vector<std::filesystem::path>& logs,
                   const std::filesystem::path& out_svg, const std::filesystem::path& out_csv);

}  // namespace tagrpo
