#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tagrpo/memory_bank.hpp"
#include "tagrpo/param_store.hpp"
#include "tagrpo/sampler.hpp"
#include "tagrpo/toytask.hpp"

namespace tagrpo {

// Binary formats are little-endian raw doubles; round-trips are bit-exact.

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

void write_trajectory(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory(std::istream& is);
void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory load_trajectory(const std::filesystem::path& path);

// Bank containers carry the sync generation they were saved at, so a resumed
// run can continue the generation counter and evict stale entries on load.
struct BankSnapshot {
  MemoryBank bank;
  std::uint64_t sync_generation = 0;
  std::uint64_t next_rollout_id = 0;
};

void save_bank(const std::filesystem::path& path, const MemoryBank& bank,
               std::uint64_t sync_generation, std::uint64_t next_rollout_id);
BankSnapshot load_bank(const std::filesystem::path& path);

// Bench files are human-readable text, one pair per line:
//   style_id noise_seed first_frame...
// Doubles print with enough digits to round-trip exactly.
void save_bench(const std::filesystem::path& path, const EvalBench& bench);
EvalBench load_bench(const std::filesystem::path& path);

// Writes content to path atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace tagrpo
