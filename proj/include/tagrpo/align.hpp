#pragma once

#include <optional>

#include "tagrpo/grpo.hpp"

namespace tagrpo {

// Best and worst group members by reward; ties resolve to the lowest index.
// Degenerate groups (reward spread below the advantage threshold) have no
// usable anchors.
struct AnchorPair {
  int pos = -1;
  int neg = -1;
  double adv_pos = 0.0;
  double adv_neg = 0.0;
};

std::optional<AnchorPair> select_anchors(const Group& group);

// exp(logprob under theta of the anchor's transition target, started from
// member i's state, minus the same logprob under the old-policy snapshot).
// Unlike the importance ratio, the denominator is recomputed under the given
// snapshot rather than read from stored rollout densities, so bank members
// sampled under older parameters still compare against the current snapshot.
Var align_ratio(Tape& tape, VelocityField& policy, VelocityField& old_snapshot,
                const Group& group, int member, int anchor, int k, const TimeGrid& grid,
                const RLConfig& cfg);

// Mean over members and window transitions of
//   clip-term(r_pos, adv_pos) + clip-term(r_neg, adv_neg).
// Degenerate groups contribute 0 and are counted in stats->align_skipped.
Var align_objective(Tape& tape, VelocityField& policy, VelocityField& old_snapshot,
                    const Group& group, const TimeGrid& grid, const RLConfig& cfg,
                    ObjectiveStats* stats = nullptr);

// grpo_objective + gamma * align_objective. gamma = 0 skips the alignment
// graph entirely, so the result is bit-identical to the plain objective.
Var total_objective(Tape& tape, VelocityField& policy, VelocityField& old_snapshot,
                    VelocityField& reference, const Group& group, const TimeGrid& grid,
                    const RLConfig& cfg, ObjectiveStats* stats = nullptr);

}  // namespace tagrpo
