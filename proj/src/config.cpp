#include "tagrpo/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace tagrpo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Entry {
  std::string name;
  std::function<void(TrainerConfig&, const std::string&)> set;
  std::function<std::string(const TrainerConfig&)> get;
};

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  const int out = std::stoi(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return out;
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::size_t pos = 0;
  const unsigned long long out = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return static_cast<std::uint64_t>(out);
}

const std::vector<Entry>& schema() {
  auto int_entry = [](std::string name, int TrainerConfig::* field) {
    return Entry{name, [field](TrainerConfig& c, const std::string& v) { c.*field = parse_int(v); },
                 [field](const TrainerConfig& c) { return std::to_string(c.*field); }};
  };
  auto dbl_entry = [](std::string name, double TrainerConfig::* field) {
    return Entry{name, [field](TrainerConfig& c, const std::string& v) { c.*field = parse_double(v); },
                 [field](const TrainerConfig& c) { return fmt_double(c.*field); }};
  };
  auto seed_entry = [](std::string name, std::optional<std::uint64_t> TrainerConfig::* field) {
    return Entry{name,
                 [field](TrainerConfig& c, const std::string& v) {
                   if (v == "unset")
                     c.*field = std::nullopt;
                   else
                     c.*field = parse_u64(v);
                 },
                 [field](const TrainerConfig& c) {
                   return (c.*field).has_value() ? std::to_string(*(c.*field))
                                                 : std::string("unset");
                 }};
  };
  static const std::vector<Entry> entries = {
      int_entry("hidden", &TrainerConfig::hidden),
      int_entry("depth", &TrainerConfig::depth),
      int_entry("time_features", &TrainerConfig::time_features),
      int_entry("style_embed", &TrainerConfig::style_embed),
      int_entry("frames", &TrainerConfig::frames),
      int_entry("frame_dim", &TrainerConfig::frame_dim),
      int_entry("num_styles", &TrainerConfig::num_styles),
      dbl_entry("damping", &TrainerConfig::damping),
      dbl_entry("process_noise", &TrainerConfig::process_noise),
      int_entry("dataset_size", &TrainerConfig::dataset_size),
      seed_entry("dataset_seed", &TrainerConfig::dataset_seed),
      int_entry("pretrain_steps", &TrainerConfig::pretrain_steps),
      int_entry("pretrain_batch", &TrainerConfig::pretrain_batch),
      dbl_entry("pretrain_lr", &TrainerConfig::pretrain_lr),
      dbl_entry("cond_dropout", &TrainerConfig::cond_dropout),
      int_entry("group_size", &TrainerConfig::group_size),
      int_entry("fresh_per_step", &TrainerConfig::fresh_per_step),
      int_entry("groups_per_step", &TrainerConfig::groups_per_step),
      dbl_entry("clip_eps", &TrainerConfig::clip_eps),
      dbl_entry("kl_beta", &TrainerConfig::kl_beta),
      dbl_entry("align_gamma", &TrainerConfig::align_gamma),
      dbl_entry("noise_eta", &TrainerConfig::noise_eta),
      dbl_entry("sigma_clamp", &TrainerConfig::sigma_clamp),
      dbl_entry("cfg_scale", &TrainerConfig::cfg_scale),
      int_entry("sample_steps", &TrainerConfig::sample_steps),
      dbl_entry("t_min", &TrainerConfig::t_min),
      dbl_entry("rl_lr", &TrainerConfig::rl_lr),
      int_entry("rl_steps", &TrainerConfig::rl_steps),
      int_entry("sync_interval", &TrainerConfig::sync_interval),
      int_entry("pair_pool", &TrainerConfig::pair_pool),
      int_entry("bank_capacity", &TrainerConfig::bank_capacity),
      int_entry("bank_staleness", &TrainerConfig::bank_staleness),
      int_entry("bench_size", &TrainerConfig::bench_size),
      int_entry("eval_interval", &TrainerConfig::eval_interval),
      dbl_entry("reward_smooth_weight", &TrainerConfig::reward_smooth_weight),
      dbl_entry("reward_endpoint_weight", &TrainerConfig::reward_endpoint_weight),
      dbl_entry("reward_consistency_weight", &TrainerConfig::reward_consistency_weight),
      seed_entry("seed", &TrainerConfig::seed),
  };
  return entries;
}

const Entry* find_entry(const std::string& name) {
  for (const auto& e : schema())
    if (e.name == name) return &e;
  return nullptr;
}

[[noreturn]] void raise_keys(const std::string& what, const std::vector<std::string>& keys) {
  std::ostringstream os;
  os << what << ":";
  for (const auto& k : keys) os << " " << k;
  throw std::runtime_error(os.str());
}

}  // namespace

ModelArch TrainerConfig::arch() const {
  ModelArch a;
  a.frames = frames;
  a.frame_dim = frame_dim;
  a.hidden = hidden;
  a.depth = depth;
  a.time_features = time_features;
  a.style_embed = style_embed;
  a.num_styles = num_styles;
  return a;
}

TaskConfig TrainerConfig::task() const {
  TaskConfig t;
  t.frames = frames;
  t.frame_dim = frame_dim;
  t.num_styles = num_styles;
  t.damping = damping;
  t.process_noise = process_noise;
  return t;
}

RLConfig TrainerConfig::rl() const {
  RLConfig r;
  r.group_size = group_size;
  r.clip_eps = clip_eps;
  r.kl_beta = kl_beta;
  r.align_gamma = align_gamma;
  r.cfg_scale = cfg_scale;
  r.t_min = t_min;
  r.sigma.eta = noise_eta;
  r.sigma.t_clamp = sigma_clamp;
  return r;
}

RewardSpec TrainerConfig::rewards() const {
  RewardSpec s;
  s.smooth_weight = reward_smooth_weight;
  s.endpoint_weight = reward_endpoint_weight;
  s.consistency_weight = reward_consistency_weight;
  return s;
}

void apply_assignments(TrainerConfig& cfg,
                       const std::vector<std::pair<std::string, std::string>>& kv) {
  std::vector<std::string> unknown, invalid;
  for (const auto& [key, value] : kv) {
    const Entry* e = find_entry(key);
    if (!e) {
      unknown.push_back(key);
      continue;
    }
    try {
      e->set(cfg, value);
    } catch (const std::exception&) {
      invalid.push_back(key + "=" + value);
    }
  }
  if (!unknown.empty()) raise_keys("config error, unknown keys", unknown);
  if (!invalid.empty()) raise_keys("config error, unparseable values", invalid);
}

TrainerConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_config: cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<std::string> malformed;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      malformed.push_back("line " + std::to_string(lineno));
      continue;
    }
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!malformed.empty()) raise_keys("config error, lines without '='", malformed);
  TrainerConfig cfg;
  apply_assignments(cfg, kv);
  return cfg;
}

void validate_config(const TrainerConfig& c, bool require_seeds) {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const char* key) {
    if (!ok) bad.push_back(key);
  };
  check(c.hidden >= 1, "hidden");
  check(c.depth >= 1, "depth");
  check(c.time_features >= 2 && c.time_features % 2 == 0, "time_features");
  check(c.style_embed >= 1, "style_embed");
  check(c.frames >= 3, "frames");
  check(c.frame_dim >= 1, "frame_dim");
  check(c.num_styles >= 1, "num_styles");
  check(c.damping > 0.0 && c.damping < 1.0, "damping");
  check(c.process_noise >= 0.0, "process_noise");
  check(c.dataset_size >= 1, "dataset_size");
  check(c.pretrain_steps >= 1, "pretrain_steps");
  check(c.pretrain_batch >= 1, "pretrain_batch");
  check(c.pretrain_lr >= 0.0, "pretrain_lr");
  check(c.cond_dropout >= 0.0 && c.cond_dropout <= 1.0, "cond_dropout");
  check(c.group_size >= 2, "group_size");
  check(c.fresh_per_step >= 1 && c.fresh_per_step <= c.group_size, "fresh_per_step");
  check(c.groups_per_step >= 1, "groups_per_step");
  check(c.clip_eps > 0.0 && c.clip_eps < 1.0, "clip_eps");
  check(c.kl_beta >= 0.0, "kl_beta");
  check(c.align_gamma >= 0.0, "align_gamma");
  check(c.noise_eta > 0.0, "noise_eta");
  check(c.sigma_clamp > 0.0 && c.sigma_clamp < 1.0, "sigma_clamp");
  check(c.cfg_scale >= 0.0, "cfg_scale");
  check(c.sample_steps >= 2, "sample_steps");
  // the train window [t_min, 1] must contain at least one grid transition
  check(c.t_min >= 0.0 && c.t_min <= 1.0, "t_min");
  check(c.rl_lr >= 0.0, "rl_lr");
  check(c.rl_steps >= 1, "rl_steps");
  check(c.sync_interval >= 1, "sync_interval");
  check(c.pair_pool >= 1, "pair_pool");
  check(c.bank_capacity >= 1, "bank_capacity");
  check(c.bank_staleness >= -1, "bank_staleness");
  check(c.bench_size >= 1, "bench_size");
  check(c.eval_interval >= 1, "eval_interval");
  check(c.reward_smooth_weight >= 0.0, "reward_smooth_weight");
  check(c.reward_endpoint_weight >= 0.0, "reward_endpoint_weight");
  check(c.reward_consistency_weight >= 0.0, "reward_consistency_weight");
  check(c.reward_smooth_weight > 0.0 || c.reward_endpoint_weight > 0.0 ||
            c.reward_consistency_weight > 0.0,
        "reward weights all zero");
  if (require_seeds) {
    check(c.seed.has_value(), "seed (missing)");
    check(c.dataset_seed.has_value(), "dataset_seed (missing)");
  }
  if (!bad.empty()) raise_keys("config error, invalid keys", bad);
}

std::vector<std::pair<std::string, std::string>> config_echo(const TrainerConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : schema()) out.emplace_back(e.name, e.get(cfg));
  return out;
}

TrainerConfig config_from_echo(const std::vector<std::pair<std::string, std::string>>& kv) {
  TrainerConfig cfg;
  apply_assignments(cfg, kv);
  return cfg;
}

const std::vector<std::string>& config_key_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : schema()) out.push_back(e.name);
    return out;
  }();
  return names;
}

}  // namespace tagrpo
