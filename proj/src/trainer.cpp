#include "tagrpo/trainer.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tagrpo/adam.hpp"

namespace tagrpo {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

nlohmann::ordered_json echo_json(const TrainerConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : config_echo(cfg)) j[k] = v;
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
}

}  // namespace

const char* const kTrainLogHeader =
    "step,mean_group_reward,eval_reward,surrogate,align_value,kl,clip_fraction,"
    "bank_fill,degenerate_groups,wall_time_ms";

std::string format_trainlog_row(const TrainLogRow& r) {
  std::ostringstream os;
  os << r.step << ',' << fmt(r.mean_group_reward) << ',' << fmt(r.eval_reward) << ','
     << fmt(r.surrogate) << ',' << fmt(r.align_value) << ',' << fmt(r.kl) << ','
     << fmt(r.clip_fraction) << ',' << r.bank_fill << ',' << r.degenerate_groups << ','
     << fmt(r.wall_time_ms);
  return os.str();
}

const char* algo_name(Algo a) { return a == Algo::kGrpo ? "grpo" : "tagrpo"; }

Algo parse_algo(const std::string& name) {
  if (name == "grpo") return Algo::kGrpo;
  if (name == "tagrpo") return Algo::kTagrpo;
  throw std::runtime_error("unknown algo '" + name + "' (expected grpo or tagrpo)");
}

PretrainResult run_pretrain(const TrainerConfig& cfg, const std::filesystem::path& out_dir) {
  validate_config(cfg);
  ensure_dir(out_dir);
  const auto start = Clock::now();

  const std::vector<TrainPair> dataset =
      gen_dataset(cfg.task(), cfg.dataset_size, *cfg.dataset_seed);
  VelocityField model(cfg.arch(), derive_seed(*cfg.seed, "model_init"));
  Adam adam(cfg.pretrain_lr);
  Rng rng(derive_seed(*cfg.seed, "pretrain"));

  PretrainResult res;
  std::ostringstream loss_csv;
  loss_csv << "step,loss\n";
  for (int s = 0; s < cfg.pretrain_steps; ++s) {
    Tape tape;
    Var loss = fm_loss(tape, model, dataset, cfg.pretrain_batch, rng, cfg.cond_dropout);
    const double value = tape.backward(loss);
    adam.step(model.params());
    model.params().zero_grad();
    if (s == 0) res.initial_loss = value;
    res.final_loss = value;
    loss_csv << s << ',' << fmt(value) << '\n';
  }

  res.checkpoint = out_dir / "checkpoint.bin";
  res.loss_csv = out_dir / "loss.csv";
  res.manifest = out_dir / "manifest.json";
  save_checkpoint(res.checkpoint, model.params());
  write_file_atomic(res.loss_csv, loss_csv.str());

  nlohmann::ordered_json manifest;
  manifest["kind"] = "pretrain";
  manifest["config"] = echo_json(cfg);
  manifest["outputs"] = {{"checkpoint", res.checkpoint.string()},
                         {"loss_csv", res.loss_csv.string()}};
  manifest["initial_loss"] = fmt(res.initial_loss);
  manifest["final_loss"] = fmt(res.final_loss);
  manifest["wall_time_ms"] = elapsed_ms(start);
  write_json(res.manifest, manifest);
  return res;
}

namespace {

struct PoolPair {
  BankKey key;
  Condition cond;
  std::uint64_t noise_seed = 0;
};

std::vector<PoolPair> build_pool(const TrainerConfig& cfg, const std::vector<TrainPair>& dataset) {
  std::vector<PoolPair> pool;
  pool.reserve(static_cast<std::size_t>(cfg.pair_pool));
  for (int i = 0; i < cfg.pair_pool; ++i) {
    PoolPair p;
    p.key.condition_id = i % cfg.dataset_size;
    p.key.noise_id = i;
    p.cond = dataset[static_cast<std::size_t>(p.key.condition_id)].cond;
    p.noise_seed = pool_noise_seed(*cfg.dataset_seed, i);
    pool.push_back(std::move(p));
  }
  return pool;
}

}  // namespace

EvalReport run_eval(const TrainerConfig& cfg, VelocityField& model, const EvalBench& bench) {
  if (bench.pairs.empty()) throw std::runtime_error("run_eval: empty bench");
  const TimeGrid grid = TimeGrid::uniform(cfg.sample_steps);
  const TaskConfig task = cfg.task();
  const RewardSpec spec = cfg.rewards();
  const int n = cfg.arch().latent_dim();

  EvalReport report;
  report.rewards.reserve(bench.pairs.size());
  for (const auto& pair : bench.pairs) {
    Rng noise(pair.noise_seed);
    const Vector x1 = noise.normal_vector(n);
    const Trajectory traj = ode_sample(model, pair.cond, cfg.cfg_scale, grid, x1);
    const Vector& x0 = traj.final_latent();
    report.rewards.push_back(reward_composite(x0, pair.cond, task, spec));
    report.mean_smooth += reward_smooth(x0, task.frame_dim);
    report.mean_endpoint += reward_endpoint(x0, pair.cond, task);
    report.mean_consistency += reward_consistency(x0, pair.cond, task.frame_dim);
  }
  const double count = static_cast<double>(report.rewards.size());
  for (double r : report.rewards) report.mean += r;
  report.mean /= count;
  report.mean_smooth /= count;
  report.mean_endpoint /= count;
  report.mean_consistency /= count;
  return report;
}

EvalReport run_eval_checkpoint(const TrainerConfig& cfg, const std::filesystem::path& checkpoint,
                               const EvalBench& bench) {
  VelocityField model(cfg.arch(), load_checkpoint(checkpoint));
  return run_eval(cfg, model, bench);
}

RlResult run_rl(const TrainerConfig& cfg, const RlOptions& options,
                const std::filesystem::path& pretrain_checkpoint,
                const std::filesystem::path& out_dir) {
  validate_config(cfg);
  ensure_dir(out_dir);
  const auto start = Clock::now();

  // Plain grpo is the full method with both components carved off.
  const bool use_bank = options.algo == Algo::kTagrpo && !options.no_memory_bank;
  const bool use_align = options.algo == Algo::kTagrpo && !options.no_align;

  RLConfig rlc = cfg.rl();
  if (!use_align) rlc.align_gamma = 0.0;

  VelocityField model(cfg.arch(), load_checkpoint(pretrain_checkpoint));
  const std::vector<TrainPair> dataset =
      gen_dataset(cfg.task(), cfg.dataset_size, *cfg.dataset_seed);
  const std::vector<PoolPair> pool = build_pool(cfg, dataset);
  EvalBench bench = make_eval_bench(cfg.task(), cfg.bench_size, derive_seed(*cfg.seed, "bench"));

  const TimeGrid grid = TimeGrid::uniform(cfg.sample_steps);
  window_steps(grid, rlc.t_min);  // fail fast on an empty train window
  const TaskConfig task = cfg.task();
  const RewardSpec reward_spec = cfg.rewards();
  const int n = cfg.arch().latent_dim();

  MemoryBank bank(cfg.bank_capacity, cfg.bank_staleness);
  std::uint64_t sync_generation = 0;
  std::uint64_t next_rollout_id = 0;
  if (use_bank && !options.resume_bank.empty()) {
    BankSnapshot snap = load_bank(options.resume_bank);
    if (snap.bank.capacity_per_key() != cfg.bank_capacity ||
        snap.bank.staleness_limit() != cfg.bank_staleness)
      throw std::runtime_error("run_rl: resumed bank has different capacity or staleness");
    bank = std::move(snap.bank);
    sync_generation = snap.sync_generation;
    next_rollout_id = snap.next_rollout_id;
    bank.evict_stale(sync_generation);
  }

  VelocityField policy_old = model.clone_frozen();
  VelocityField policy_ref = model.clone_frozen();
  Adam adam(cfg.rl_lr);

  RlResult res;
  res.rows.reserve(static_cast<std::size_t>(cfg.rl_steps));
  double last_eval = 0.0;

  auto dump_abort_state = [&](int step, const std::string& why) {
    const auto dump = out_dir / "abort_state";
    ensure_dir(dump);
    save_checkpoint(dump / "checkpoint.bin", model.params());
    if (use_bank) save_bank(dump / "bank.bin", bank, sync_generation, next_rollout_id);
    std::ostringstream log;
    log << kTrainLogHeader << '\n';
    for (const auto& r : res.rows) log << format_trainlog_row(r) << '\n';
    write_file_atomic(dump / "trainlog_partial.csv", log.str());
    write_file_atomic(dump / "reason.txt",
                      "step " + std::to_string(step) + ": " + why + "\n");
  };

  for (int s = 0; s < cfg.rl_steps; ++s) {
    try {
      std::vector<Group> groups;
      std::vector<std::pair<BankKey, std::vector<Rollout>>> fresh_by_group;
      double fresh_reward_sum = 0.0;
      int fresh_count = 0;

      for (int g = 0; g < cfg.groups_per_step; ++g) {
        // Sliding window over the pool: each pair is revisited on consecutive
        // steps, so its banked rollouts are still inside the staleness horizon
        // when the key comes around again.
        const PoolPair& pp = pool[static_cast<std::size_t>((s + g) % cfg.pair_pool)];
        Rng noise_rng(pp.noise_seed);
        const Vector x1 = noise_rng.normal_vector(n);

        std::vector<Rollout> fresh;
        fresh.reserve(static_cast<std::size_t>(cfg.fresh_per_step));
        for (int m = 0; m < cfg.fresh_per_step; ++m) {
          Rng rng(derive_seed(*cfg.seed, "rollout", s, g, m));
          Rollout r;
          r.trajectory =
              sde_sample(policy_old, pp.cond, rlc.cfg_scale, grid, x1, rlc.sigma, rng);
          r.trajectory.init_noise_seed = pp.noise_seed;
          r.reward = reward_composite(r.trajectory.final_latent(), pp.cond, task, reward_spec);
          r.behavior_version = sync_generation;
          r.id = next_rollout_id++;
          r.key = pp.key;
          fresh_reward_sum += r.reward;
          ++fresh_count;
          fresh.push_back(std::move(r));
        }

        if (use_bank) {
          Rng bank_rng(derive_seed(*cfg.seed, "bank", s, g));
          groups.push_back(bank.assemble_group(pp.key, fresh, cfg.group_size, bank_rng));
        } else {
          groups.push_back(make_group(fresh));
        }
        fresh_by_group.emplace_back(pp.key, std::move(fresh));
      }

      Tape tape;
      ObjectiveStats stats;
      int degenerate = 0;
      Var acc = tape.constant(Matrix(Matrix::Zero(1, 1)));
      for (const Group& group : groups) {
        if (group.degenerate) ++degenerate;
        acc = add(acc, total_objective(tape, model, policy_old, policy_ref, group, grid, rlc,
                                       &stats));
      }
      Var objective = scale(acc, 1.0 / static_cast<double>(groups.size()));
      tape.backward(neg(objective));
      adam.step(model.params());
      model.params().zero_grad();

      if (use_bank) {
        for (auto& [key, fresh] : fresh_by_group)
          for (auto& r : fresh) bank.push(key, std::move(r));
      }
      if ((s + 1) % cfg.sync_interval == 0) {
        policy_old = model.clone_frozen();
        ++sync_generation;
        if (use_bank) bank.evict_stale(sync_generation);
      }
      if (s == 0 || (s + 1) % cfg.eval_interval == 0 || s == cfg.rl_steps - 1)
        last_eval = run_eval(cfg, model, bench).mean;

      const double gcount = static_cast<double>(groups.size());
      TrainLogRow row;
      row.step = s;
      row.mean_group_reward = fresh_reward_sum / static_cast<double>(fresh_count);
      row.eval_reward = last_eval;
      row.surrogate = stats.surrogate / gcount;
      row.align_value = stats.align / gcount;
      row.kl = stats.kl / gcount;
      row.clip_fraction = stats.clip_fraction / gcount;
      row.bank_fill = use_bank ? bank.size() : 0;
      row.degenerate_groups = degenerate;
      row.wall_time_ms = elapsed_ms(start);
      res.rows.push_back(row);
    } catch (const std::exception& e) {
      dump_abort_state(s, e.what());
      throw std::runtime_error("run_rl aborted at step " + std::to_string(s) + ": " + e.what());
    }
  }

  res.checkpoint = out_dir / "checkpoint.bin";
  res.trainlog = out_dir / "trainlog.csv";
  res.manifest = out_dir / "manifest.json";
  res.bench_file = out_dir / "bench.txt";
  save_checkpoint(res.checkpoint, model.params());
  save_bench(res.bench_file, bench);
  if (use_bank) {
    res.bank_file = out_dir / "bank.bin";
    save_bank(res.bank_file, bank, sync_generation, next_rollout_id);
  }

  std::ostringstream log;
  log << kTrainLogHeader << '\n';
  for (const auto& r : res.rows) log << format_trainlog_row(r) << '\n';
  write_file_atomic(res.trainlog, log.str());

  res.final_eval = last_eval;
  res.final_mean_reward = res.rows.empty() ? 0.0 : res.rows.back().mean_group_reward;

  nlohmann::ordered_json manifest;
  manifest["kind"] = "train";
  manifest["algo"] = algo_name(options.algo);
  manifest["no_memory_bank"] = options.no_memory_bank;
  manifest["no_align"] = options.no_align;
  manifest["pretrain_checkpoint"] = pretrain_checkpoint.string();
  manifest["config"] = echo_json(cfg);
  manifest["outputs"] = {{"checkpoint", res.checkpoint.string()},
                         {"trainlog", res.trainlog.string()},
                         {"bench", res.bench_file.string()},
                         {"bank", res.bank_file.string()}};
  manifest["final_eval"] = fmt(res.final_eval);
  manifest["final_mean_reward"] = fmt(res.final_mean_reward);
  manifest["sync_generation"] = sync_generation;
  manifest["wall_time_ms"] = elapsed_ms(start);
  write_json(res.manifest, manifest);
  return res;
}

void export_curves(const std::vector<std::filesystem::path>& logs,
                   const std::filesystem::path& out_svg, const std::filesystem::path& out_csv) {
  if (logs.empty()) throw std::runtime_error("export_curves: no logs given");

  struct Series {
    std::string label;
    std::vector<double> steps, evals, rewards;
  };
  std::vector<Series> series;

  for (const auto& path : logs) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("export_curves: cannot open " + path.string());
    std::string header;
    if (!std::getline(is, header) || header != kTrainLogHeader)
      throw std::runtime_error("export_curves: unexpected log schema in " + path.string());
    Series ser;
    ser.label = path.stem().string() == "trainlog" ? path.parent_path().filename().string()
                                                   : path.stem().string();
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string cell;
      std::vector<double> cells;
      while (std::getline(ls, cell, ',')) cells.push_back(std::stod(cell));
      if (cells.size() != 10)
        throw std::runtime_error("export_curves: malformed row in " + path.string());
      ser.steps.push_back(cells[0]);
      ser.rewards.push_back(cells[1]);
      ser.evals.push_back(cells[2]);
    }
    if (ser.steps.empty())
      throw std::runtime_error("export_curves: no rows in " + path.string());
    series.push_back(std::move(ser));
  }

  std::ostringstream csv;
  csv << "run,step,mean_group_reward,eval_reward\n";
  char buf[64];
  for (const auto& ser : series)
    for (std::size_t i = 0; i < ser.steps.size(); ++i) {
      csv << ser.label << ',' << static_cast<long long>(ser.steps[i]) << ',';
      std::snprintf(buf, sizeof buf, "%.17g", ser.rewards[i]);
      csv << buf << ',';
      std::snprintf(buf, sizeof buf, "%.17g", ser.evals[i]);
      csv << buf << '\n';
    }
  write_file_atomic(out_csv, csv.str());

  // Reward curves as a self-contained SVG.
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& ser : series)
    for (std::size_t i = 0; i < ser.steps.size(); ++i) {
      xmin = std::min(xmin, ser.steps[i]);
      xmax = std::max(xmax, ser.steps[i]);
      ymin = std::min(ymin, ser.evals[i]);
      ymax = std::max(ymax, ser.evals[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;

  const double w = 900, h = 520, ml = 70, mr = 170, mt = 30, mb = 50;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"12\">";
    std::snprintf(buf, sizeof buf, "%.3g", yv);
    svg << buf << "</text>\n";
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"12\">";
    std::snprintf(buf, sizeof buf, "%.0f", xv);
    svg << buf << "</text>\n";
  }
  svg << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">training step</text>\n"
      << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (mt + h - mb) / 2 << ")\">bench reward</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& ser = series[si];
    const char* color = colors[si % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < ser.steps.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(ser.steps[i]), sy(ser.evals[i]));
      svg << buf;
    }
    svg << "\"/>\n";
    const double ly = mt + 18.0 * static_cast<double>(si) + 10;
    svg << "<line x1=\"" << w - mr + 12 << "\" y1=\"" << ly << "\" x2=\"" << w - mr + 36
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << w - mr + 42 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
        << ser.label << "</text>\n";
  }
  svg << "</svg>\n";
  write_file_atomic(out_svg, svg.str());
}

}  // namespace tagrpo
