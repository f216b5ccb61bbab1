#include "tagrpo/velocity_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tagrpo {

namespace {

std::string layer_name(int i, const char* part) {
  return "layer" + std::to_string(i) + "." + part;
}

}  // namespace

VelocityField::VelocityField(ModelArch arch, std::uint64_t init_seed) : arch_(arch) {
  if (arch.depth < 1) throw std::runtime_error("VelocityField: depth must be >= 1");
  if (arch.time_features % 2 != 0)
    throw std::runtime_error("VelocityField: time_features must be even");
  Rng rng(derive_seed(init_seed, "init"));
  int in = arch.input_dim();
  for (int l = 0; l < arch.depth; ++l) {
    const int out = (l == arch.depth - 1) ? arch.latent_dim() : arch.hidden;
    Matrix w;
    if (l == arch.depth - 1) {
      w = Matrix::Zero(out, in);  // zero start: the raw model is the identity flow
    } else {
      w = rng.normal_matrix(out, in) * std::sqrt(2.0 / static_cast<double>(in));
    }
    params_.add(layer_name(l, "weight"), std::move(w));
    params_.add(layer_name(l, "bias"), Matrix::Zero(out, 1));
    in = out;
  }
  params_.add("style_embed.weight", rng.normal_matrix(arch.style_embed, arch.num_styles) * 0.1);
}

VelocityField::VelocityField(ModelArch arch, ParamStore params)
    : arch_(arch), params_(std::move(params)) {
  for (int l = 0; l < arch.depth; ++l) {
    if (!params_.contains(layer_name(l, "weight")) || !params_.contains(layer_name(l, "bias")))
      throw std::runtime_error("VelocityField: missing parameters for layer " + std::to_string(l));
  }
  if (!params_.contains("style_embed.weight"))
    throw std::runtime_error("VelocityField: missing style_embed.weight");
}

Vector VelocityField::time_features(double t) const {
  const int pairs = arch_.time_features / 2;
  Vector f(arch_.time_features);
  for (int j = 0; j < pairs; ++j) {
    const double w = std::numbers::pi * std::ldexp(1.0, j);  // pi * 2^j
    f[2 * j] = std::sin(w * t);
    f[2 * j + 1] = std::cos(w * t);
  }
  return f;
}

void VelocityField::validate(const Vector& x, const Condition& c, double t) const {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::runtime_error("VelocityField: t=" + std::to_string(t) + " outside [0,1]");
  if (x.size() != arch_.latent_dim())
    throw std::runtime_error("VelocityField: latent size " + std::to_string(x.size()) +
                             ", expected " + std::to_string(arch_.latent_dim()));
  if (!x.allFinite()) throw std::runtime_error("VelocityField: non-finite latent");
  if (!c.null_flag) {
    if (c.first_frame.size() != arch_.frame_dim)
      throw std::runtime_error("VelocityField: condition first_frame has size " +
                               std::to_string(c.first_frame.size()));
    if (c.style_id < 0 || c.style_id >= arch_.num_styles)
      throw std::runtime_error("VelocityField: style_id " + std::to_string(c.style_id) +
                               " outside [0," + std::to_string(arch_.num_styles) + ")");
  }
}

Var VelocityField::body(Tape& tape, Var input) {
  Var h = input;
  for (int l = 0; l < arch_.depth; ++l) {
    Var w = tape.leaf(params_.at(layer_name(l, "weight")));
    Var b = tape.leaf(params_.at(layer_name(l, "bias")));
    h = add_colwise(matmul(w, h), b);
    if (l < arch_.depth - 1) h = silu(h);
  }
  return h;
}

Var VelocityField::forward(Tape& tape, const Vector& x, const Condition& c, double t) {
  validate(x, c, t);
  Var xv = tape.constant(x);
  Var ff = c.null_flag ? tape.constant(Matrix(Matrix::Zero(arch_.frame_dim, 1)))
                       : tape.constant(c.first_frame);
  Var emb = c.null_flag
                ? tape.constant(Matrix(Matrix::Zero(arch_.style_embed, 1)))
                : gather_cols(tape.leaf(params_.at("style_embed.weight")), {c.style_id});
  Var tf = tape.constant(time_features(t));
  Var input = concat_rows(concat_rows(xv, ff), concat_rows(emb, tf));
  return body(tape, input);
}

Var VelocityField::forward_batch(Tape& tape, const Matrix& x, const std::vector<Condition>& conds,
                                 const std::vector<double>& ts) {
  const auto batch = static_cast<std::size_t>(x.cols());
  if (conds.size() != batch || ts.size() != batch)
    throw std::runtime_error("VelocityField: batch size mismatch");
  if (x.rows() != arch_.latent_dim())
    throw std::runtime_error("VelocityField: latent rows mismatch");

  Matrix ff = Matrix::Zero(arch_.frame_dim, x.cols());
  Matrix tf(arch_.time_features, x.cols());
  Matrix mask = Matrix::Zero(arch_.style_embed, x.cols());
  std::vector<int> styles(batch, 0);
  for (std::size_t j = 0; j < batch; ++j) {
    validate(x.col(static_cast<Eigen::Index>(j)), conds[j], ts[j]);
    const auto jc = static_cast<Eigen::Index>(j);
    if (!conds[j].null_flag) {
      ff.col(jc) = conds[j].first_frame;
      mask.col(jc).setOnes();
      styles[j] = conds[j].style_id;
    }
    tf.col(jc) = time_features(ts[j]);
  }

  Var xv = tape.constant(x);
  Var ffv = tape.constant(std::move(ff));
  Var emb = mul(gather_cols(tape.leaf(params_.at("style_embed.weight")), styles),
                tape.constant(std::move(mask)));
  Var tfv = tape.constant(std::move(tf));
  Var input = concat_rows(concat_rows(xv, ffv), concat_rows(emb, tfv));
  return body(tape, input);
}

Vector VelocityField::forward_value(const Vector& x, const Condition& c, double t) {
  Tape tape(false);
  return as_vector(forward(tape, x, c, t).value());
}

VelocityField VelocityField::clone_frozen() const {
  return VelocityField(arch_, params_.clone(false));
}

Var guided_velocity(Tape& tape, VelocityField& model, const Vector& x, const Condition& c,
                    double t, double cfg_scale) {
  if (c.null_flag || cfg_scale == 0.0) return model.forward(tape, x, null_condition(c), t);
  if (cfg_scale == 1.0) return model.forward(tape, x, c, t);
  Var vc = model.forward(tape, x, c, t);
  Var vn = model.forward(tape, x, null_condition(c), t);
  return add(vn, scale(sub(vc, vn), cfg_scale));
}

Vector guided_velocity_value(VelocityField& model, const Vector& x, const Condition& c, double t,
                             double cfg_scale) {
  Tape tape(false);
  return as_vector(guided_velocity(tape, model, x, c, t, cfg_scale).value());
}

}  // namespace tagrpo
