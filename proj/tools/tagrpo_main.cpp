#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tagrpo/trainer.hpp"

namespace {

using tagrpo::TrainerConfig;

TrainerConfig assemble_config(const std::string& config_path,
                              const std::vector<std::string>& sets, bool seed_given,
                              std::uint64_t seed) {
  TrainerConfig cfg = tagrpo::load_config(config_path);
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + s + "'");
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  tagrpo::apply_assignments(cfg, kv);
  if (seed_given) cfg.seed = seed;
  tagrpo::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale lab for flow-matching policy optimization on a toy sequence task"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, algo = "tagrpo", bench_path, resume_bank;
  std::string out_svg = "curves.svg", out_csv = "curves.csv", eval_out;
  std::vector<std::string> sets, log_paths;
  std::uint64_t seed = 0;
  bool no_memory_bank = false, no_align = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines)")->required();
    cmd->add_option("--seed", seed, "run seed (overrides the config's seed key)");
    cmd->add_option("--set", sets, "extra key=value overrides")->take_all();
  };

  CLI::App* pre = app.add_subcommand("pretrain", "flow-matching pretraining");
  add_common(pre);
  pre->add_option("--out-dir", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "policy optimization from a checkpoint");
  add_common(train);
  train->add_option("--out-dir", out_dir, "output directory")->required();
  train->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
  train->add_option("--algo", algo, "grpo or tagrpo (default tagrpo)");
  train->add_flag("--no-memory-bank", no_memory_bank, "train on fresh rollouts only");
  train->add_flag("--no-align", no_align, "drop the alignment objective");
  train->add_option("--resume-bank", resume_bank, "bank file from a previous run");

  CLI::App* ev = app.add_subcommand("eval", "bench evaluation of a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  ev->add_option("--bench", bench_path, "bench file (default: derived from the seed)");
  ev->add_option("--out", eval_out, "write per-pair rewards CSV here");

  CLI::App* ex = app.add_subcommand("export", "merge train logs and render reward curves");
  ex->add_option("--out-svg", out_svg, "output SVG path");
  ex->add_option("--out-csv", out_csv, "output merged CSV path");
  ex->add_option("logs", log_paths, "trainlog.csv files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      const TrainerConfig cfg =
          assemble_config(config_path, sets, pre->count("--seed") > 0, seed);
      const auto res = tagrpo::run_pretrain(cfg, out_dir);
      std::printf("pretrain done: loss %.6f -> %.6f\ncheckpoint: %s\n", res.initial_loss,
                  res.final_loss, res.checkpoint.string().c_str());
    } else if (train->parsed()) {
      const TrainerConfig cfg =
          assemble_config(config_path, sets, train->count("--seed") > 0, seed);
      tagrpo::RlOptions options;
      options.algo = tagrpo::parse_algo(algo);
      options.no_memory_bank = no_memory_bank;
      options.no_align = no_align;
      if (!resume_bank.empty()) options.resume_bank = resume_bank;
      const auto res = tagrpo::run_rl(cfg, options, checkpoint, out_dir);
      std::printf("train done (%s): final bench reward %.6f, final fresh reward %.6f\n",
                  algo.c_str(), res.final_eval, res.final_mean_reward);
      std::printf("trainlog: %s\n", res.trainlog.string().c_str());
    } else if (ev->parsed()) {
      const TrainerConfig cfg =
          assemble_config(config_path, sets, ev->count("--seed") > 0, seed);
      tagrpo::EvalBench bench =
          bench_path.empty()
              ? tagrpo::make_eval_bench(cfg.task(), cfg.bench_size,
                                        tagrpo::derive_seed(*cfg.seed, "bench"))
              : tagrpo::load_bench(bench_path);
      const auto report = tagrpo::run_eval_checkpoint(cfg, checkpoint, bench);
      std::printf("pairs: %zu\nmean reward: %.6f\n  smooth: %.6f\n  endpoint: %.6f\n"
                  "  consistency: %.6f\n",
                  report.rewards.size(), report.mean, report.mean_smooth, report.mean_endpoint,
                  report.mean_consistency);
      if (!eval_out.empty()) {
        std::string csv = "pair,reward\n";
        char buf[64];
        for (std::size_t i = 0; i < report.rewards.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, report.rewards[i]);
          csv += buf;
        }
        tagrpo::write_file_atomic(eval_out, csv);
        std::printf("per-pair rewards: %s\n", eval_out.c_str());
      }
    } else if (ex->parsed()) {
      std::vector<std::filesystem::path> logs(log_paths.begin(), log_paths.end());
      tagrpo::export_curves(logs, out_svg, out_csv);
      std::printf("curves: %s\nmerged: %s\n", out_svg.c_str(), out_csv.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
