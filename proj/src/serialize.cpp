#include "tagrpo/serialize.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tagrpo {

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr char kBankMagic[8] = {'T', 'G', 'B', 'N', 'K', '0', '0', '1'};

void put_raw(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_raw(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("serialize: truncated input");
}

void put_u64(std::ostream& os, std::uint64_t v) { put_raw(os, &v, sizeof v); }
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v;
  get_raw(is, &v, sizeof v);
  return v;
}

void put_i32(std::ostream& os, std::int32_t v) { put_raw(os, &v, sizeof v); }
std::int32_t get_i32(std::istream& is) {
  std::int32_t v;
  get_raw(is, &v, sizeof v);
  return v;
}

void put_u8(std::ostream& os, std::uint8_t v) { put_raw(os, &v, sizeof v); }
std::uint8_t get_u8(std::istream& is) {
  std::uint8_t v;
  get_raw(is, &v, sizeof v);
  return v;
}

void put_double(std::ostream& os, double v) { put_raw(os, &v, sizeof v); }
double get_double(std::istream& is) {
  double v;
  get_raw(is, &v, sizeof v);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  put_raw(os, s.data(), s.size());
}

std::string get_string(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1u << 20)) throw std::runtime_error("serialize: unreasonable string length");
  std::string s(n, '\0');
  get_raw(is, s.data(), n);
  return s;
}

void put_matrix(std::ostream& os, const Matrix& m) {
  put_u64(os, static_cast<std::uint64_t>(m.rows()));
  put_u64(os, static_cast<std::uint64_t>(m.cols()));
  put_raw(os, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

Matrix get_matrix(std::istream& is) {
  const std::uint64_t rows = get_u64(is);
  const std::uint64_t cols = get_u64(is);
  if (rows * cols > (1u << 26)) throw std::runtime_error("serialize: unreasonable matrix size");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  get_raw(is, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return m;
}

void put_vector(std::ostream& os, const Vector& v) {
  put_u64(os, static_cast<std::uint64_t>(v.size()));
  put_raw(os, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

Vector get_vector(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > (1u << 26)) throw std::runtime_error("serialize: unreasonable vector size");
  Vector v(static_cast<Eigen::Index>(n));
  get_raw(is, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("serialize: cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("serialize: cannot open for reading: " + path.string());
  return is;
}

void put_condition(std::ostream& os, const Condition& c) {
  put_vector(os, c.first_frame);
  put_i32(os, c.style_id);
  put_u8(os, c.null_flag ? 1 : 0);
}

Condition get_condition(std::istream& is) {
  Condition c;
  c.first_frame = get_vector(is);
  c.style_id = get_i32(is);
  c.null_flag = get_u8(is) != 0;
  return c;
}

void put_rollout(std::ostream& os, const Rollout& r) {
  write_trajectory(os, r.trajectory);
  put_double(os, r.reward);
  put_u8(os, r.source == RolloutSource::kBank ? 1 : 0);
  put_u64(os, r.behavior_version);
  put_u64(os, r.id);
  put_i32(os, r.key.condition_id);
  put_i32(os, r.key.noise_id);
}

Rollout get_rollout(std::istream& is) {
  Rollout r;
  r.trajectory = read_trajectory(is);
  r.reward = get_double(is);
  r.source = get_u8(is) != 0 ? RolloutSource::kBank : RolloutSource::kFresh;
  r.behavior_version = get_u64(is);
  r.id = get_u64(is);
  r.key.condition_id = get_i32(is);
  r.key.noise_id = get_i32(is);
  return r;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  std::ostringstream buf(std::ios::binary);
  buf.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(buf, params.version());
  put_u64(buf, params.size());
  for (const auto& name : params.names()) {
    const Tensor& t = params.at(name);
    put_string(buf, name);
    put_u8(buf, t.requires_grad ? 1 : 0);
    put_matrix(buf, t.value);
  }
  write_file_atomic(path, buf.str());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  char magic[8];
  get_raw(is, magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  ParamStore params;
  const std::uint64_t version = get_u64(is);
  const std::uint64_t count = get_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(is);
    const bool requires_g = get_u8(is) != 0;
    params.add(name, get_matrix(is), requires_g);
  }
  params.set_version(version);
  return params;
}

void write_trajectory(std::ostream& os, const Trajectory& traj) {
  put_u64(os, traj.latents.size());
  for (const auto& x : traj.latents) put_vector(os, x);
  put_u64(os, traj.log_probs.size());
  for (double lp : traj.log_probs) put_double(os, lp);
  put_u64(os, traj.noises.size());
  for (const auto& n : traj.noises) put_vector(os, n);
  put_condition(os, traj.condition);
  put_u64(os, traj.init_noise_seed);
  put_u64(os, traj.policy_version);
}

Trajectory read_trajectory(std::istream& is) {
  Trajectory traj;
  const std::uint64_t nl = get_u64(is);
  traj.latents.reserve(nl);
  for (std::uint64_t i = 0; i < nl; ++i) traj.latents.push_back(get_vector(is));
  const std::uint64_t np = get_u64(is);
  traj.log_probs.reserve(np);
  for (std::uint64_t i = 0; i < np; ++i) traj.log_probs.push_back(get_double(is));
  const std::uint64_t nn = get_u64(is);
  traj.noises.reserve(nn);
  for (std::uint64_t i = 0; i < nn; ++i) traj.noises.push_back(get_vector(is));
  traj.condition = get_condition(is);
  traj.init_noise_seed = get_u64(is);
  traj.policy_version = get_u64(is);
  return traj;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  std::ostringstream buf(std::ios::binary);
  write_trajectory(buf, traj);
  write_file_atomic(path, buf.str());
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_trajectory(is);
}

void save_bank(const std::filesystem::path& path, const MemoryBank& bank,
               std::uint64_t sync_generation, std::uint64_t next_rollout_id) {
  std::ostringstream buf(std::ios::binary);
  buf.write(kBankMagic, sizeof kBankMagic);
  put_i32(buf, bank.capacity_per_key());
  put_i32(buf, bank.staleness_limit());
  put_u64(buf, sync_generation);
  put_u64(buf, next_rollout_id);
  put_u64(buf, static_cast<std::uint64_t>(bank.key_count()));
  for (const auto& [key, queue] : bank.queues()) {
    put_i32(buf, key.condition_id);
    put_i32(buf, key.noise_id);
    put_u64(buf, queue.size());
    for (const auto& r : queue) put_rollout(buf, r);
  }
  write_file_atomic(path, buf.str());
}

BankSnapshot load_bank(const std::filesystem::path& path) {
  auto is = open_in(path);
  char magic[8];
  get_raw(is, magic, sizeof magic);
  if (std::memcmp(magic, kBankMagic, sizeof magic) != 0)
    throw std::runtime_error("load_bank: bad magic in " + path.string());
  const int capacity = get_i32(is);
  const int staleness = get_i32(is);
  BankSnapshot snap{MemoryBank(capacity, staleness), 0, 0};
  snap.sync_generation = get_u64(is);
  snap.next_rollout_id = get_u64(is);
  const std::uint64_t keys = get_u64(is);
  for (std::uint64_t i = 0; i < keys; ++i) {
    BankKey key;
    key.condition_id = get_i32(is);
    key.noise_id = get_i32(is);
    const std::uint64_t count = get_u64(is);
    for (std::uint64_t j = 0; j < count; ++j) snap.bank.push(key, get_rollout(is));
  }
  return snap;
}

void save_bench(const std::filesystem::path& path, const EvalBench& bench) {
  std::ostringstream buf;
  buf << "# style_id noise_seed first_frame...\n";
  char num[64];
  for (const auto& p : bench.pairs) {
    buf << p.cond.style_id << ' ' << p.noise_seed;
    for (Eigen::Index i = 0; i < p.cond.first_frame.size(); ++i) {
      std::snprintf(num, sizeof num, " %.17g", p.cond.first_frame[i]);
      buf << num;
    }
    buf << '\n';
  }
  write_file_atomic(path, buf.str());
}

EvalBench load_bench(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_bench: cannot open " + path.string());
  EvalBench bench;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    EvalPair p;
    if (!(ls >> p.cond.style_id >> p.noise_seed))
      throw std::runtime_error("load_bench: malformed line: " + line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty()) throw std::runtime_error("load_bench: missing first frame: " + line);
    p.cond.first_frame = Vector(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i)
      p.cond.first_frame[static_cast<Eigen::Index>(i)] = vals[i];
    bench.pairs.push_back(std::move(p));
  }
  if (bench.pairs.empty()) throw std::runtime_error("load_bench: empty bench in " + path.string());
  return bench;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_file_atomic: cannot open " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("write_file_atomic: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tagrpo
