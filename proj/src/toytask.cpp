#include "tagrpo/toytask.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tagrpo {

namespace {

void require_task(const TaskConfig& task) {
  if (task.frames < 3) throw std::runtime_error("TaskConfig: frames must be >= 3");
  if (task.frame_dim < 1) throw std::runtime_error("TaskConfig: frame_dim must be >= 1");
  if (task.num_styles < 1) throw std::runtime_error("TaskConfig: num_styles must be >= 1");
  if (!(task.damping > 0.0 && task.damping < 1.0))
    throw std::runtime_error("TaskConfig: damping must be in (0,1)");
}

void require_style(const TaskConfig& task, int style) {
  if (style < 0 || style >= task.num_styles)
    throw std::runtime_error("style_dynamics: unknown style " + std::to_string(style));
}

}  // namespace

Vector StyleDynamics::fixed_point() const {
  const Matrix eye = Matrix::Identity(a.rows(), a.cols());
  return (eye - a).partialPivLu().solve(b);
}

StyleDynamics style_dynamics(const TaskConfig& task, int style) {
  require_task(task);
  require_style(task, style);
  const int d = task.frame_dim;
  StyleDynamics s;
  // Damped gentle rotation in the leading plane; distinct angle and offset
  // direction per style keep the style attractors well separated while the
  // per-step rotation stays small enough that clean sequences are smooth.
  const double angle = 0.2 + 0.15 * static_cast<double>(style);
  Matrix q = Matrix::Identity(d, d);
  if (d >= 2) {
    q(0, 0) = std::cos(angle);
    q(0, 1) = -std::sin(angle);
    q(1, 0) = std::sin(angle);
    q(1, 1) = std::cos(angle);
  }
  s.a = task.damping * q;
  const double dir = 2.0 * std::numbers::pi * static_cast<double>(style) / task.num_styles;
  s.b = Vector::Zero(d);
  s.b[0] = std::cos(dir);
  if (d >= 2) s.b[1] = std::sin(dir);
  return s;
}

Vector flatten_frames(const std::vector<Vector>& frames) {
  if (frames.empty()) throw std::runtime_error("flatten_frames: empty sequence");
  const auto d = frames.front().size();
  Vector x(static_cast<Eigen::Index>(frames.size()) * d);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].size() != d) throw std::runtime_error("flatten_frames: ragged frames");
    x.segment(static_cast<Eigen::Index>(k) * d, d) = frames[k];
  }
  return x;
}

std::vector<Vector> unflatten_frames(const Vector& x, int frame_dim) {
  if (frame_dim < 1 || x.size() % frame_dim != 0)
    throw std::runtime_error("unflatten_frames: size not divisible by frame_dim");
  std::vector<Vector> frames;
  const auto count = x.size() / frame_dim;
  frames.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index k = 0; k < count; ++k)
    frames.push_back(x.segment(k * frame_dim, frame_dim));
  return frames;
}

std::vector<TrainPair> gen_dataset(const TaskConfig& task, int count, std::uint64_t seed) {
  require_task(task);
  if (count < 1) throw std::runtime_error("gen_dataset: count must be >= 1");
  Rng rng(derive_seed(seed, "dataset"));
  std::vector<TrainPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int style = static_cast<int>(rng.integer(static_cast<std::uint64_t>(task.num_styles)));
    const StyleDynamics dyn = style_dynamics(task, style);
    std::vector<Vector> frames;
    frames.reserve(static_cast<std::size_t>(task.frames));
    frames.push_back(rng.normal_vector(task.frame_dim));
    for (int k = 1; k < task.frames; ++k)
      frames.push_back(dyn.a * frames.back() + dyn.b +
                       task.process_noise * rng.normal_vector(task.frame_dim));
    TrainPair pair;
    pair.x0 = flatten_frames(frames);
    pair.cond.first_frame = frames.front();
    pair.cond.style_id = style;
    out.push_back(std::move(pair));
  }
  return out;
}

double reward_smooth(const Vector& x, int frame_dim) {
  const std::vector<Vector> f = unflatten_frames(x, frame_dim);
  if (f.size() < 3) throw std::runtime_error("reward_smooth: need at least 3 frames");
  double acc = 0.0;
  for (std::size_t k = 1; k + 1 < f.size(); ++k)
    acc += (f[k + 1] - 2.0 * f[k] + f[k - 1]).squaredNorm();
  return -acc / static_cast<double>(f.size() - 2);
}

double reward_consistency(const Vector& x, const Condition& c, int frame_dim) {
  const std::vector<Vector> f = unflatten_frames(x, frame_dim);
  if (c.first_frame.size() != frame_dim)
    throw std::runtime_error("reward_consistency: condition frame size mismatch");
  return -(f.front() - c.first_frame).squaredNorm();
}

double reward_endpoint(const Vector& x, const Condition& c, const TaskConfig& task) {
  const std::vector<Vector> f = unflatten_frames(x, task.frame_dim);
  const Vector target = style_dynamics(task, c.style_id).fixed_point();
  return -(f.back() - target).squaredNorm();
}

double reward_composite(const Vector& x, const Condition& c, const TaskConfig& task,
                        const RewardSpec& spec) {
  if (spec.smooth_weight < 0.0 || spec.endpoint_weight < 0.0 || spec.consistency_weight < 0.0)
    throw std::runtime_error("reward_composite: weights must be >= 0");
  if (spec.smooth_weight == 0.0 && spec.endpoint_weight == 0.0 && spec.consistency_weight == 0.0)
    throw std::runtime_error("reward_composite: at least one weight must be positive");
  double r = 0.0;
  if (spec.smooth_weight != 0.0) r += spec.smooth_weight * reward_smooth(x, task.frame_dim);
  if (spec.endpoint_weight != 0.0) r += spec.endpoint_weight * reward_endpoint(x, c, task);
  if (spec.consistency_weight != 0.0)
    r += spec.consistency_weight * reward_consistency(x, c, task.frame_dim);
  return r;
}

EvalBench make_eval_bench(const TaskConfig& task, int size, std::uint64_t seed) {
  require_task(task);
  if (size < 1) throw std::runtime_error("make_eval_bench: size must be >= 1");
  Rng rng(derive_seed(seed, "bench"));
  EvalBench bench;
  bench.pairs.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    EvalPair p;
    p.cond.style_id = static_cast<int>(rng.integer(static_cast<std::uint64_t>(task.num_styles)));
    p.cond.first_frame = rng.normal_vector(task.frame_dim);
    p.noise_seed = derive_seed(seed, "bench_noise", i) | 1ull;  // odd
    bench.pairs.push_back(std::move(p));
  }
  return bench;
}

std::uint64_t pool_noise_seed(std::uint64_t run_seed, int noise_id) {
  return derive_seed(run_seed, "pool_noise", noise_id) & ~1ull;  // even
}

}  // namespace tagrpo
