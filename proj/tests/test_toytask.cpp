#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "tagrpo/rng.hpp"
#include "tagrpo/toytask.hpp"

using namespace tagrpo;

namespace {

TaskConfig default_task() { return TaskConfig{}; }

std::vector<Vector> frames_of(const Vector& x) { return unflatten_frames(x, 2); }

}  // namespace

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng(1);
  std::vector<Vector> frames;
  for (int k = 0; k < 5; ++k) frames.push_back(rng.normal_vector(3));
  Vector flat = flatten_frames(frames);
  CHECK(flat.size() == 15);
  std::vector<Vector> back = unflatten_frames(flat, 3);
  REQUIRE(back.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(back[static_cast<std::size_t>(k)] == frames[static_cast<std::size_t>(k)]);
  CHECK(flat[7] == frames[2][1]);  // frame k occupies [k*D, (k+1)*D)

  CHECK_THROWS_AS(unflatten_frames(flat, 4), std::runtime_error);
}

TEST_CASE("style dynamics contract toward their fixed points") {
  TaskConfig task = default_task();
  for (int s = 0; s < task.num_styles; ++s) {
    StyleDynamics dyn = style_dynamics(task, s);
    // Spectral radius equals the damping factor for a damped rotation.
    Eigen::JacobiSVD<Matrix> svd(dyn.a);
    CHECK(svd.singularValues().maxCoeff() == doctest::Approx(task.damping).epsilon(1e-9));
    Vector fp = dyn.fixed_point();
    CHECK((dyn.a * fp + dyn.b - fp).cwiseAbs().maxCoeff() <= 1e-9);
  }
  CHECK_THROWS_AS(style_dynamics(task, task.num_styles), std::runtime_error);
  CHECK_THROWS_AS(style_dynamics(task, -1), std::runtime_error);

  // Distinct styles have distinct fixed points.
  Vector f0 = style_dynamics(task, 0).fixed_point();
  Vector f1 = style_dynamics(task, 1).fixed_point();
  CHECK((f0 - f1).norm() > 0.1);
}

TEST_CASE("dataset construction") {
  TaskConfig task = default_task();
  std::vector<TrainPair> data = gen_dataset(task, 64, 7);
  REQUIRE(data.size() == 64);
  for (const TrainPair& p : data) {
    CHECK(p.x0.size() == task.frames * task.frame_dim);
    CHECK(Vector(p.x0.head(task.frame_dim)) == p.cond.first_frame);
    CHECK(p.cond.style_id >= 0);
    CHECK(p.cond.style_id < task.num_styles);
    CHECK(!p.cond.null_flag);
  }

  std::vector<TrainPair> again = gen_dataset(task, 64, 7);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(again[i].x0 == data[i].x0);
    CHECK(again[i].cond.style_id == data[i].cond.style_id);
  }
  std::vector<TrainPair> other = gen_dataset(task, 64, 8);
  CHECK(other[0].x0 != data[0].x0);
}

TEST_CASE("styles produce distinguishable sequences") {
  TaskConfig task = default_task();
  std::vector<TrainPair> data = gen_dataset(task, 2000, 9);
  // Final-frame mean per style: the dynamics pull toward style-specific
  // fixed points, so the means must separate far beyond standard error.
  std::map<int, std::pair<Vector, int>> acc;
  for (const TrainPair& p : data) {
    Vector last = p.x0.tail(task.frame_dim);
    auto& [sum, count] = acc.try_emplace(p.cond.style_id, std::make_pair(Vector::Zero(task.frame_dim), 0)).first->second;
    sum += last;
    ++count;
  }
  REQUIRE(acc.size() == static_cast<std::size_t>(task.num_styles));
  Vector m0 = acc[0].first / acc[0].second;
  Vector m1 = acc[1].first / acc[1].second;
  CHECK((m0 - m1).norm() > 0.5);
}

TEST_CASE("smoothness reward") {
  TaskConfig task = default_task();

  std::vector<Vector> constant(4, Vector::Constant(2, 1.3));
  CHECK(reward_smooth(flatten_frames(constant), 2) == 0.0);

  std::vector<Vector> linear;
  for (int k = 0; k < 5; ++k) linear.push_back(Vector::Constant(2, 0.5 * k));
  CHECK(reward_smooth(flatten_frames(linear), 2) == doctest::Approx(0.0).epsilon(1e-12));

  // Alternating +-e1 over 4 frames: both interior second differences have
  // squared norm 16, so the mean is 16 and the reward -16.
  std::vector<Vector> alternating;
  for (int k = 0; k < 4; ++k) {
    Vector f = Vector::Zero(2);
    f[0] = (k % 2 == 0) ? 1.0 : -1.0;
    alternating.push_back(f);
  }
  CHECK(reward_smooth(flatten_frames(alternating), 2) == doctest::Approx(-16.0).epsilon(1e-12));

  CHECK_THROWS_AS(reward_smooth(Vector::Zero(4), 2), std::runtime_error);
}

TEST_CASE("consistency reward") {
  Condition c;
  c.first_frame = Vector::Constant(2, 0.7);
  std::vector<Vector> frames(4, Vector::Constant(2, 0.7));
  Vector x = flatten_frames(frames);
  CHECK(reward_consistency(x, c, 2) == 0.0);

  std::vector<Vector> shifted = frames;
  shifted[0][0] += 1.0;
  CHECK(reward_consistency(flatten_frames(shifted), c, 2) == doctest::Approx(-1.0).epsilon(1e-12));

  // Later frames do not matter.
  std::vector<Vector> tail_changed = frames;
  tail_changed[3] = Vector::Constant(2, 9.0);
  CHECK(reward_consistency(flatten_frames(tail_changed), c, 2) == 0.0);
}

TEST_CASE("endpoint reward") {
  TaskConfig task = default_task();
  Condition c;
  c.first_frame = Vector::Zero(2);
  c.style_id = 1;
  Vector fp = style_dynamics(task, 1).fixed_point();

  std::vector<Vector> frames(static_cast<std::size_t>(task.frames), Vector::Zero(2));
  frames.back() = fp;
  CHECK(reward_endpoint(flatten_frames(frames), c, task) == doctest::Approx(0.0).epsilon(1e-12));

  frames.back() = fp + Vector::Unit(2, 0);
  CHECK(reward_endpoint(flatten_frames(frames), c, task) == doctest::Approx(-1.0).epsilon(1e-12));

  // With long sequences the damping compounds and endpoints settle near the
  // fixed point, so the mean endpoint reward approaches its maximum.
  TaskConfig long_task = task;
  long_task.frames = 24;
  std::vector<TrainPair> data = gen_dataset(long_task, 400, 11);
  double acc = 0.0;
  for (const TrainPair& p : data) acc += reward_endpoint(p.x0, p.cond, long_task);
  double mean_long = acc / data.size();
  CHECK(std::abs(mean_long) < 0.05);

  TaskConfig short_task = task;
  short_task.frames = 3;
  std::vector<TrainPair> short_data = gen_dataset(short_task, 400, 11);
  acc = 0.0;
  for (const TrainPair& p : short_data) acc += reward_endpoint(p.x0, p.cond, short_task);
  CHECK(std::abs(acc / short_data.size()) > std::abs(mean_long));
}

TEST_CASE("composite reward") {
  TaskConfig task = default_task();
  Rng rng(13);
  std::vector<TrainPair> data = gen_dataset(task, 8, 13);
  const TrainPair& p = data[0];

  RewardSpec smooth_only{1.0, 0.0, 0.0};
  CHECK(reward_composite(p.x0, p.cond, task, smooth_only) ==
        reward_smooth(p.x0, task.frame_dim));

  // Constant at the fixed point with matching condition maximizes everything.
  Condition c;
  c.style_id = 2;
  Vector fp = style_dynamics(task, 2).fixed_point();
  c.first_frame = fp;
  std::vector<Vector> frames(static_cast<std::size_t>(task.frames), fp);
  RewardSpec all{1.0, 1.0, 1.0};
  CHECK(reward_composite(flatten_frames(frames), c, task, all) == doctest::Approx(0.0).epsilon(1e-12));

  RewardSpec doubled{2.0, 2.0, 2.0};
  CHECK(reward_composite(p.x0, p.cond, task, doubled) ==
        doctest::Approx(2.0 * reward_composite(p.x0, p.cond, task, all)).epsilon(1e-12));

  CHECK_THROWS_AS(reward_composite(p.x0, p.cond, task, RewardSpec{-1.0, 1.0, 1.0}),
                  std::runtime_error);
  CHECK_THROWS_AS(reward_composite(p.x0, p.cond, task, RewardSpec{0.0, 0.0, 0.0}),
                  std::runtime_error);

  // Every component is bounded above by zero.
  for (const TrainPair& q : data) {
    CHECK(reward_smooth(q.x0, task.frame_dim) <= 0.0);
    CHECK(reward_consistency(q.x0, q.cond, task.frame_dim) <= 0.0);
    CHECK(reward_endpoint(q.x0, q.cond, task) <= 0.0);
  }
}

TEST_CASE("rewards separate data from noise") {
  TaskConfig task = default_task();
  RewardSpec spec;
  std::vector<TrainPair> data = gen_dataset(task, 400, 17);
  Rng rng(18);

  std::vector<double> data_scores, noise_scores;
  for (const TrainPair& p : data) {
    data_scores.push_back(reward_composite(p.x0, p.cond, task, spec));
    Vector junk = rng.normal_vector(task.frames * task.frame_dim);
    noise_scores.push_back(reward_composite(junk, p.cond, task, spec));
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::make_pair(m, std::sqrt(var / v.size()));
  };
  auto [dm, ds] = stats(data_scores);
  auto [nm, ns] = stats(noise_scores);
  INFO("data ", dm, "+-", ds, ", noise ", nm, "+-", ns);
  // Data must sit far above the noise population: five data-score stds of
  // margin, and well clear of the (much wider) noise-score spread too.
  CHECK(dm > nm);
  CHECK(dm - nm > 5.0 * ds);
  CHECK(dm - nm > 2.0 * ns);
}

TEST_CASE("eval bench is frozen and disjoint from the training pool") {
  TaskConfig task = default_task();
  EvalBench bench = make_eval_bench(task, 32, 21);
  REQUIRE(bench.pairs.size() == 32);
  EvalBench again = make_eval_bench(task, 32, 21);
  for (std::size_t i = 0; i < bench.pairs.size(); ++i) {
    CHECK(bench.pairs[i].cond.first_frame == again.pairs[i].cond.first_frame);
    CHECK(bench.pairs[i].noise_seed == again.pairs[i].noise_seed);
    CHECK(bench.pairs[i].noise_seed % 2 == 1);  // bench seeds are odd
  }
  EvalBench other = make_eval_bench(task, 32, 22);
  CHECK(other.pairs[0].noise_seed != bench.pairs[0].noise_seed);

  for (int i = 0; i < 64; ++i) CHECK(pool_noise_seed(21, i) % 2 == 0);  // pool seeds even
}
