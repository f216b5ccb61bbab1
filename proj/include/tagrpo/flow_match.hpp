#pragma once

#include <vector>

#include "tagrpo/rng.hpp"
#include "tagrpo/tape.hpp"
#include "tagrpo/velocity_model.hpp"

namespace tagrpo {

// One dataset example: a clean flattened sequence and its condition.
struct TrainPair {
  Vector x0;
  Condition cond;
};

// One flow-matching training item: endpoint pair, condition, interpolation time.
struct FmItem {
  Vector x0;
  Vector x1;
  Condition cond;
  double t = 0.0;
};

// Straight-path interpolant (1-t) x0 + t x1. t=0 gives data, t=1 gives noise.
Vector interpolate(const Vector& x0, const Vector& x1, double t);

// Assembles a batch: uniform item index, t ~ U[0,1], x1 ~ N(0,I), and
// condition dropout to the null branch with the given probability.
std::vector<FmItem> make_fm_batch(const std::vector<TrainPair>& dataset, int batch, Rng& rng,
                                  double cond_dropout);

// Mean over items and dimensions of |v(x_t, c, t) - (x1 - x0)|^2.
Var fm_loss_items(Tape& tape, VelocityField& model, const std::vector<FmItem>& items);

// Sampling wrapper over the two pieces above.
Var fm_loss(Tape& tape, VelocityField& model, const std::vector<TrainPair>& dataset, int batch,
            Rng& rng, double cond_dropout);

}  // namespace tagrpo
