#pragma once

#include <cstdint>
#include <vector>

#include "tagrpo/param_store.hpp"
#include "tagrpo/rng.hpp"
#include "tagrpo/tape.hpp"
#include "tagrpo/types.hpp"

namespace tagrpo {

struct ModelArch {
  int frames = 8;
  int frame_dim = 2;
  int hidden = 128;
  int depth = 3;           // number of affine layers; silu between
  int time_features = 16;  // sin/cos pairs, must be even
  int style_embed = 8;
  int num_styles = 4;

  int latent_dim() const { return frames * frame_dim; }
  int input_dim() const { return latent_dim() + frame_dim + style_embed + time_features; }
};

struct Condition {
  Vector first_frame;  // frame_dim entries
  int style_id = 0;
  bool null_flag = false;  // unconditional branch: zeroes the conditioning pathway
};

inline Condition null_condition(const Condition& c) {
  Condition n = c;
  n.null_flag = true;
  return n;
}

// Conditional velocity network: an MLP over
// [latent; first frame; style embedding; sinusoidal time features].
// The final layer is zero-initialized so an untrained model outputs zero.
// With null_flag set, the first-frame and style-embedding slots are exact
// zeros, so the output is independent of the condition contents.
class VelocityField {
 public:
  VelocityField(ModelArch arch, std::uint64_t init_seed);
  VelocityField(ModelArch arch, ParamStore params);  // takes ownership (loading)

  // Differentiable forward for a single input; returns an N x 1 var.
  Var forward(Tape& tape, const Vector& x, const Condition& c, double t);

  // Batched forward: X is N x B, one condition and time per column.
  Var forward_batch(Tape& tape, const Matrix& x, const std::vector<Condition>& conds,
                    const std::vector<double>& ts);

  // Plain evaluation on a throwaway no-grad tape.
  Vector forward_value(const Vector& x, const Condition& c, double t);

  // Deep copy with requires_grad cleared; used for behavior/reference snapshots.
  VelocityField clone_frozen() const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelArch& arch() const { return arch_; }

  Vector time_features(double t) const;

 private:
  void validate(const Vector& x, const Condition& c, double t) const;
  Var body(Tape& tape, Var input);

  ModelArch arch_;
  ParamStore params_;
};

// Classifier-free guidance: v_null + s * (v_cond - v_null). s == 1 returns the
// conditional branch alone and s == 0 the unconditional branch alone, with no
// arithmetic applied on top.
Var guided_velocity(Tape& tape, VelocityField& model, const Vector& x, const Condition& c,
                    double t, double cfg_scale);
Vector guided_velocity_value(VelocityField& model, const Vector& x, const Condition& c,
                             double t, double cfg_scale);

}  // namespace tagrpo
