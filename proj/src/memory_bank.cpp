#include "tagrpo/memory_bank.hpp"

#include <algorithm>
#include <stdexcept>

namespace tagrpo {

MemoryBank::MemoryBank(int capacity_per_key, int staleness_limit)
    : capacity_(capacity_per_key), staleness_(staleness_limit) {
  if (capacity_ < 1) throw std::runtime_error("MemoryBank: capacity must be >= 1");
}

void MemoryBank::push(const BankKey& key, Rollout rollout) {
  if (rollout.key != key)
    throw std::runtime_error("MemoryBank: rollout key does not match queue key");
  auto& q = queues_[key];
  q.push_back(std::move(rollout));
  while (static_cast<int>(q.size()) > capacity_) q.pop_front();
}

int MemoryBank::evict_stale(std::uint64_t current_generation) {
  if (staleness_ < 0) return 0;
  const std::uint64_t limit = static_cast<std::uint64_t>(staleness_);
  const std::uint64_t threshold = current_generation >= limit ? current_generation - limit : 0;
  int evicted = 0;
  for (auto it = queues_.begin(); it != queues_.end();) {
    auto& q = it->second;
    for (auto qi = q.begin(); qi != q.end();) {
      if (qi->behavior_version < threshold) {
        qi = q.erase(qi);
        ++evicted;
      } else {
        ++qi;
      }
    }
    it = q.empty() ? queues_.erase(it) : std::next(it);
  }
  return evicted;
}

Group MemoryBank::assemble_group(const BankKey& key, std::vector<Rollout> fresh, int target_size,
                                 Rng& rng) const {
  for (const auto& r : fresh)
    if (r.key != key)
      throw std::runtime_error("MemoryBank: fresh rollout key does not match group key");

  std::vector<Rollout> members = std::move(fresh);
  const auto it = queues_.find(key);
  if (it != queues_.end() && static_cast<int>(members.size()) < target_size) {
    const auto& q = it->second;
    std::vector<int> remaining(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) remaining[i] = static_cast<int>(i);

    auto take = [&](std::size_t pos) {
      members.push_back(q[static_cast<std::size_t>(remaining[pos])]);
      members.back().source = RolloutSource::kBank;
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
    };

    // Highest reward first, then lowest, then uniform without replacement.
    // Ties resolve to the oldest entry.
    if (!remaining.empty() && static_cast<int>(members.size()) < target_size) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < remaining.size(); ++i)
        if (q[static_cast<std::size_t>(remaining[i])].reward >
            q[static_cast<std::size_t>(remaining[best])].reward)
          best = i;
      take(best);
    }
    if (!remaining.empty() && static_cast<int>(members.size()) < target_size) {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < remaining.size(); ++i)
        if (q[static_cast<std::size_t>(remaining[i])].reward <
            q[static_cast<std::size_t>(remaining[worst])].reward)
          worst = i;
      take(worst);
    }
    while (!remaining.empty() && static_cast<int>(members.size()) < target_size)
      take(static_cast<std::size_t>(rng.integer(remaining.size())));
  }

  if (static_cast<int>(members.size()) < 2)
    throw std::runtime_error("MemoryBank: fewer than 2 rollouts available for the group");
  return make_group(std::move(members));
}

int MemoryBank::size() const {
  int n = 0;
  for (const auto& [key, q] : queues_) n += static_cast<int>(q.size());
  return n;
}

int MemoryBank::queue_size(const BankKey& key) const {
  const auto it = queues_.find(key);
  return it == queues_.end() ? 0 : static_cast<int>(it->second.size());
}

const std::deque<Rollout>* MemoryBank::queue(const BankKey& key) const {
  const auto it = queues_.find(key);
  return it == queues_.end() ? nullptr : &it->second;
}

}  // namespace tagrpo
