#pragma once

#include <deque>
#include <map>

#include "tagrpo/grpo.hpp"
#include "tagrpo/rng.hpp"

namespace tagrpo {

// Per-(condition, initial-noise) FIFO queues of past rollouts. Entries are
// reused to pad training groups, and evicted either by capacity (oldest
// first) or by staleness against the current sync generation.
class MemoryBank {
 public:
  // staleness_limit < 0 disables staleness eviction.
  MemoryBank(int capacity_per_key, int staleness_limit);

  // Appends to the key's queue, dropping the oldest entry when full.
  // The rollout must be stamped with the same key.
  void push(const BankKey& key, Rollout rollout);

  // Removes every entry whose behavior generation is older than
  // current_generation - staleness_limit. Returns the number evicted.
  int evict_stale(std::uint64_t current_generation);

  // Pads the fresh rollouts up to target_size with bank entries for the key:
  // first the queue's max-reward entry, then its min-reward entry, then
  // uniform picks without replacement. Returns a group with advantages and
  // degeneracy computed over the assembled members.
  Group assemble_group(const BankKey& key, std::vector<Rollout> fresh, int target_size,
                       Rng& rng) const;

  int size() const;                       // total stored rollouts
  int key_count() const { return static_cast<int>(queues_.size()); }
  int queue_size(const BankKey& key) const;
  const std::deque<Rollout>* queue(const BankKey& key) const;
  const std::map<BankKey, std::deque<Rollout>>& queues() const { return queues_; }

  int capacity_per_key() const { return capacity_; }
  int staleness_limit() const { return staleness_; }

  void clear() { queues_.clear(); }

 private:
  std::map<BankKey, std::deque<Rollout>> queues_;
  int capacity_;
  int staleness_;
};

}  // namespace tagrpo
