#include "tagrpo/flow_match.hpp"

#include <stdexcept>

namespace tagrpo {

Vector interpolate(const Vector& x0, const Vector& x1, double t) {
  if (x0.size() != x1.size()) throw std::runtime_error("interpolate: size mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::runtime_error("interpolate: t outside [0,1]");
  return (1.0 - t) * x0 + t * x1;
}

std::vector<FmItem> make_fm_batch(const std::vector<TrainPair>& dataset, int batch, Rng& rng,
                                  double cond_dropout) {
  if (dataset.empty()) throw std::runtime_error("make_fm_batch: empty dataset");
  if (batch < 1) throw std::runtime_error("make_fm_batch: batch must be >= 1");
  std::vector<FmItem> items;
  items.reserve(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const auto& pair = dataset[rng.integer(dataset.size())];
    FmItem it;
    it.x0 = pair.x0;
    it.x1 = rng.normal_vector(static_cast<int>(pair.x0.size()));
    it.cond = pair.cond;
    it.t = rng.uniform();
    if (rng.uniform() < cond_dropout) it.cond.null_flag = true;
    items.push_back(std::move(it));
  }
  return items;
}

Var fm_loss_items(Tape& tape, VelocityField& model, const std::vector<FmItem>& items) {
  if (items.empty()) throw std::runtime_error("fm_loss_items: empty batch");
  const int n = model.arch().latent_dim();
  Matrix xt(n, static_cast<Eigen::Index>(items.size()));
  Matrix target(n, static_cast<Eigen::Index>(items.size()));
  std::vector<Condition> conds;
  std::vector<double> ts;
  conds.reserve(items.size());
  ts.reserve(items.size());
  for (std::size_t j = 0; j < items.size(); ++j) {
    const FmItem& it = items[j];
    const auto jc = static_cast<Eigen::Index>(j);
    xt.col(jc) = interpolate(it.x0, it.x1, it.t);
    target.col(jc) = it.x1 - it.x0;
    conds.push_back(it.cond);
    ts.push_back(it.t);
  }
  Var v = model.forward_batch(tape, xt, conds, ts);
  return mean(square(sub(v, tape.constant(std::move(target)))));
}

Var fm_loss(Tape& tape, VelocityField& model, const std::vector<TrainPair>& dataset, int batch,
            Rng& rng, double cond_dropout) {
  return fm_loss_items(tape, model, make_fm_batch(dataset, batch, rng, cond_dropout));
}

}  // namespace tagrpo
