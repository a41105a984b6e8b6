#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "metado/dynabench.hpp"
#include "metado/errors.hpp"
#include "metado/policy.hpp"
#include "metado/ppo.hpp"
#include "metado/rng.hpp"

#ifndef METADO_BUILD_ID
#define METADO_BUILD_ID "unknown"
#endif

namespace metado::harness {

// ---------------------------------------------------------------------------
// Checkpoint I/O ("MDO1" layout: magic, then per tensor in declaration order
// a u32 name length, name, u32 rank, u32 dims, float32 payload row-major).

struct CheckpointMagicError : FormatError {
  CheckpointMagicError() : FormatError("bad magic: not an MDO1 checkpoint") {}
};

struct CheckpointTruncatedError : FormatError {
  explicit CheckpointTruncatedError(const std::string& what)
      : FormatError("truncated tensor: " + what) {}
};

struct CheckpointShapeError : FormatError {
  explicit CheckpointShapeError(const std::string& what)
      : FormatError("dimension mismatch: " + what) {}
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

inline bool get_f32(std::istream& is, float& f) {
  std::uint32_t v;
  if (!get_u32(is, v)) return false;
  std::memcpy(&f, &v, 4);
  return true;
}

struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline std::vector<TensorRecord> read_records(std::istream& is) {
  std::vector<TensorRecord> recs;
  for (;;) {
    std::uint32_t name_len;
    if (!get_u32(is, name_len)) break;
    TensorRecord rec;
    rec.name.resize(name_len);
    if (!is.read(rec.name.data(), name_len))
      throw CheckpointTruncatedError("name cut short");
    std::uint32_t rank;
    if (!get_u32(is, rank)) throw CheckpointTruncatedError(rec.name);
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      std::uint32_t dim;
      if (!get_u32(is, dim)) throw CheckpointTruncatedError(rec.name);
      rec.dims.push_back(dim);
      count *= dim;
    }
    rec.data.resize(count);
    for (std::size_t i = 0; i < count; ++i)
      if (!get_f32(is, rec.data[i])) throw CheckpointTruncatedError(rec.name);
    recs.push_back(std::move(rec));
  }
  return recs;
}

}  // namespace detail

inline void save_checkpoint(const policy::PolicyParams& p,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFileError(path);
  os.write("MDO1", 4);
  policy::for_each_tensor(const_cast<policy::PolicyParams&>(p),
                          [&](const char* name, auto& t) {
    using T = std::decay_t<decltype(t)>;
    std::string n(name);
    detail::put_u32(os, static_cast<std::uint32_t>(n.size()));
    os.write(n.data(), static_cast<std::streamsize>(n.size()));
    if constexpr (T::ColsAtCompileTime == 1) {
      detail::put_u32(os, 1);
      detail::put_u32(os, static_cast<std::uint32_t>(t.size()));
      for (Eigen::Index i = 0; i < t.size(); ++i)
        detail::put_f32(os, static_cast<float>(t(i)));
    } else {
      detail::put_u32(os, 2);
      detail::put_u32(os, static_cast<std::uint32_t>(t.rows()));
      detail::put_u32(os, static_cast<std::uint32_t>(t.cols()));
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c)
          detail::put_f32(os, static_cast<float>(t(r, c)));
    }
  });
  if (!os) throw FormatError("write failed: " + path);
}

inline policy::PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError(path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MDO1", 4) != 0)
    throw CheckpointMagicError();
  std::vector<detail::TensorRecord> recs = detail::read_records(is);

  auto find = [&](const std::string& name) -> const detail::TensorRecord* {
    for (const auto& r : recs)
      if (r.name == name) return &r;
    return nullptr;
  };
  const detail::TensorRecord* pe = find("pe_proj.weight");
  const detail::TensorRecord* ff = find("encoder.ff1.weight");
  const detail::TensorRecord* mu = find("mu_head.weight");
  const detail::TensorRecord* ch = find("critic.hidden.weight");
  if (!pe || !ff || !mu || !ch)
    throw CheckpointTruncatedError("defining tensors absent");
  if (pe->dims.size() != 2 || ff->dims.size() != 2 || mu->dims.size() != 2 ||
      ch->dims.size() != 2)
    throw CheckpointShapeError("defining tensors must be rank 2");

  policy::PolicyConfig cfg;
  cfg.d_model = static_cast<int>(pe->dims[0]);
  cfg.state_dim = static_cast<int>(pe->dims[1]);
  cfg.d_ff = static_cast<int>(ff->dims[0]);
  cfg.action_dim = static_cast<int>(mu->dims[0]);
  cfg.critic_hidden = static_cast<int>(ch->dims[0]);
  // The head count leaves no trace in tensor shapes; the architecture pins 4.
  cfg.n_heads = 4;

  Rng scratch(0);
  policy::PolicyParams p = policy::init_params(cfg, scratch);
  std::size_t idx = 0;
  policy::for_each_tensor(p, [&](const char* name, auto& t) {
    using T = std::decay_t<decltype(t)>;
    if (idx >= recs.size())
      throw CheckpointTruncatedError(std::string("missing ") + name);
    const detail::TensorRecord& rec = recs[idx++];
    if (rec.name != name)
      throw FormatError("unexpected tensor order: got " + rec.name +
                        ", want " + name);
    if constexpr (T::ColsAtCompileTime == 1) {
      if (rec.dims.size() != 1 ||
          rec.dims[0] != static_cast<std::uint32_t>(t.size()))
        throw CheckpointShapeError(rec.name);
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t(i) = static_cast<double>(rec.data[static_cast<std::size_t>(i)]);
    } else {
      if (rec.dims.size() != 2 ||
          rec.dims[0] != static_cast<std::uint32_t>(t.rows()) ||
          rec.dims[1] != static_cast<std::uint32_t>(t.cols()))
        throw CheckpointShapeError(rec.name);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = rec.data[k++];
    }
  });
  if (idx != recs.size()) throw FormatError("trailing tensors in checkpoint");
  return p;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  std::uint64_t seed = 1;
  int dim = 10;
  long fe_max = 25000;
  int n_train = 64;
  int n_test = 32;
  int n_swarm = 50;
  int runs = 10;
  int episodes = 10;

  int meta_epochs = 20;
  int n_rollout = 10;
  int k_epochs = 3;
  int batch = 8;
  double lr = 1e-5;
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double follow_factor = nbnc::kDefaultFollowFactor;

  Eigen::Vector3d lower{0.0, 0.0, 0.0};
  Eigen::Vector3d upper{1.0, 4.1, 4.1};

  bool no_subpop = false;
  bool no_archive_feature = false;
  bool action_c_only = false;
  bool action_w_only = false;
  bool binary_reward = false;
  bool linear_reward = false;

  std::string out_dir = "out";

  void validate() const {
    if (action_c_only && action_w_only)
      throw FormatError("at most one action-space flag");
    if (binary_reward && linear_reward)
      throw FormatError("at most one reward flag");
    for (int i = 0; i < 3; ++i)
      if (!(lower(i) < upper(i)))
        throw FormatError("hyper bounds require lower < upper");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return nlohmann::json{
      {"seed", c.seed},
      {"dim", c.dim},
      {"fe_max", c.fe_max},
      {"n_train", c.n_train},
      {"n_test", c.n_test},
      {"n_swarm", c.n_swarm},
      {"runs", c.runs},
      {"episodes", c.episodes},
      {"meta_epochs", c.meta_epochs},
      {"n_rollout", c.n_rollout},
      {"k_epochs", c.k_epochs},
      {"batch", c.batch},
      {"lr", c.lr},
      {"gamma", c.gamma},
      {"lam", c.lam},
      {"clip_eps", c.clip_eps},
      {"entropy_coef", c.entropy_coef},
      {"value_coef", c.value_coef},
      {"follow_factor", c.follow_factor},
      {"lower", {c.lower(0), c.lower(1), c.lower(2)}},
      {"upper", {c.upper(0), c.upper(1), c.upper(2)}},
      {"no_subpop", c.no_subpop},
      {"no_archive_feature", c.no_archive_feature},
      {"action_c_only", c.action_c_only},
      {"action_w_only", c.action_w_only},
      {"binary_reward", c.binary_reward},
      {"linear_reward", c.linear_reward},
      {"out_dir", c.out_dir}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  std::set<std::string> known;
  nlohmann::json defaults = to_json(c);
  for (auto& [key, val] : defaults.items()) known.insert(key);
  for (auto& [key, val] : j.items())
    if (!known.count(key)) throw FormatError("unknown config key: " + key);
  try {
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("seed", c.seed);
    opt("dim", c.dim);
    opt("fe_max", c.fe_max);
    opt("n_train", c.n_train);
    opt("n_test", c.n_test);
    opt("n_swarm", c.n_swarm);
    opt("runs", c.runs);
    opt("episodes", c.episodes);
    opt("meta_epochs", c.meta_epochs);
    opt("n_rollout", c.n_rollout);
    opt("k_epochs", c.k_epochs);
    opt("batch", c.batch);
    opt("lr", c.lr);
    opt("gamma", c.gamma);
    opt("lam", c.lam);
    opt("clip_eps", c.clip_eps);
    opt("entropy_coef", c.entropy_coef);
    opt("value_coef", c.value_coef);
    opt("follow_factor", c.follow_factor);
    if (j.contains("lower"))
      for (int i = 0; i < 3; ++i) c.lower(i) = j.at("lower")[i].get<double>();
    if (j.contains("upper"))
      for (int i = 0; i < 3; ++i) c.upper(i) = j.at("upper")[i].get<double>();
    opt("no_subpop", c.no_subpop);
    opt("no_archive_feature", c.no_archive_feature);
    opt("action_c_only", c.action_c_only);
    opt("action_w_only", c.action_w_only);
    opt("binary_reward", c.binary_reward);
    opt("linear_reward", c.linear_reward);
    opt("out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError(path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad config: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Ablation wiring: each variant is a flag-driven rewiring of the same stack.

inline ppo::ControlConfig control_config(const RunConfig& c) {
  c.validate();
  ppo::ControlConfig cc;
  cc.bounds.L = c.lower;
  cc.bounds.U = c.upper;
  cc.follow_factor = c.follow_factor;
  cc.zero_subpop_features = c.no_subpop;
  cc.zero_archive_feature = c.no_archive_feature;
  cc.action_mode = c.action_c_only ? ppo::ActionMode::c_only
                   : c.action_w_only ? ppo::ActionMode::w_only
                                     : ppo::ActionMode::full;
  cc.reward_mode = c.binary_reward ? ppo::RewardMode::binary
                   : c.linear_reward ? ppo::RewardMode::linear
                                     : ppo::RewardMode::log_scale;
  return cc;
}

inline policy::PolicyConfig policy_config(const RunConfig& c) {
  policy::PolicyConfig pc;
  pc.action_dim = ppo::action_dim(control_config(c).action_mode);
  return pc;
}

inline ppo::TrainConfig train_config(const RunConfig& c) {
  ppo::TrainConfig tc;
  tc.n_rollout = c.n_rollout;
  tc.k_epochs = c.k_epochs;
  tc.lr = c.lr;
  tc.meta_epochs = c.meta_epochs;
  tc.batch = c.batch;
  tc.gamma = c.gamma;
  tc.lam = c.lam;
  tc.clip_eps = c.clip_eps;
  tc.entropy_coef = c.entropy_coef;
  tc.value_coef = c.value_coef;
  return tc;
}

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "no_subpop",     "no_archive_feature", "action_c_only",
      "action_w_only", "binary_reward",      "linear_reward"};
  return names;
}

inline std::string variant_name(const RunConfig& c) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(c.no_subpop, "no_subpop");
  add(c.no_archive_feature, "no_archive_feature");
  add(c.action_c_only, "action_c_only");
  add(c.action_w_only, "action_w_only");
  add(c.binary_reward, "binary_reward");
  add(c.linear_reward, "linear_reward");
  return out.empty() ? "full" : out;
}

inline RunConfig with_variant(RunConfig c, const std::string& variant) {
  c.no_subpop = c.no_archive_feature = c.action_c_only = c.action_w_only =
      c.binary_reward = c.linear_reward = false;
  if (variant == "full") return c;
  if (variant == "no_subpop") c.no_subpop = true;
  else if (variant == "no_archive_feature") c.no_archive_feature = true;
  else if (variant == "action_c_only") c.action_c_only = true;
  else if (variant == "action_w_only") c.action_w_only = true;
  else if (variant == "binary_reward") c.binary_reward = true;
  else if (variant == "linear_reward") c.linear_reward = true;
  else throw FormatError("unknown variant: " + variant);
  return c;
}

// ---------------------------------------------------------------------------
// Result rows and rank tables

struct ResultRow {
  std::string instance_id;
  std::string algorithm;
  int run = 0;
  std::uint64_t seed = 0;
  double e_off = 0.0;
  double e_rand = 0.0;
  double rp = 0.0;
  int rank = 0;
};

struct RankTable {
  std::vector<std::string> instances;   // lexicographic
  std::vector<std::string> algorithms;  // lexicographic
  Eigen::MatrixXd mean, stddev;         // instances x algorithms
  Eigen::MatrixXi rank;
  Eigen::VectorXd avg_rank;             // per algorithm
};

inline RankTable rank_report(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw FormatError("rank report of no rows");
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  std::set<std::string> inst_set, algo_set;
  for (const ResultRow& r : rows) {
    cells[{r.instance_id, r.algorithm}].push_back(r.rp);
    inst_set.insert(r.instance_id);
    algo_set.insert(r.algorithm);
  }
  RankTable t;
  t.instances.assign(inst_set.begin(), inst_set.end());
  t.algorithms.assign(algo_set.begin(), algo_set.end());
  const int I = static_cast<int>(t.instances.size());
  const int K = static_cast<int>(t.algorithms.size());
  t.mean.resize(I, K);
  t.stddev.resize(I, K);
  t.rank.resize(I, K);
  for (int i = 0; i < I; ++i) {
    for (int k = 0; k < K; ++k) {
      auto it = cells.find({t.instances[i], t.algorithms[k]});
      if (it == cells.end() || it->second.empty())
        throw FormatError("missing cell: " + t.instances[i] + "/" +
                          t.algorithms[k]);
      const std::vector<double>& v = it->second;
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double s2 = 0.0;
      for (double x : v) s2 += (x - m) * (x - m);
      t.mean(i, k) = m;
      t.stddev(i, k) = std::sqrt(s2 / static_cast<double>(v.size()));
    }
    for (int k = 0; k < K; ++k) {
      int r = 1;
      for (int o = 0; o < K; ++o)
        if (t.mean(i, o) < t.mean(i, k)) ++r;
      t.rank(i, k) = r;
    }
  }
  t.avg_rank = t.rank.cast<double>().colwise().mean();
  return t;
}

// Stamps the per-instance rank of each row's algorithm back onto the rows.
inline void assign_ranks(std::vector<ResultRow>& rows) {
  RankTable t = rank_report(rows);
  std::map<std::pair<std::string, std::string>, int> rk;
  for (std::size_t i = 0; i < t.instances.size(); ++i)
    for (std::size_t k = 0; k < t.algorithms.size(); ++k)
      rk[{t.instances[i], t.algorithms[k]}] =
          t.rank(static_cast<int>(i), static_cast<int>(k));
  for (ResultRow& r : rows) r.rank = rk.at({r.instance_id, r.algorithm});
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline void write_results_csv(const std::string& path,
                              const std::vector<ResultRow>& rows) {
  std::ofstream os(path);
  if (!os) throw MissingFileError(path);
  os << "instance_id,algorithm,run,seed,e_off,e_rand,rp,rank\n";
  for (const ResultRow& r : rows)
    os << r.instance_id << ',' << r.algorithm << ',' << r.run << ',' << r.seed
       << ',' << detail::fmt(r.e_off) << ',' << detail::fmt(r.e_rand) << ','
       << detail::fmt(r.rp) << ',' << r.rank << '\n';
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError(path);
  std::string line;
  if (!std::getline(is, line) ||
      detail::split_csv(line) !=
          std::vector<std::string>{"instance_id", "algorithm", "run", "seed",
                                   "e_off", "e_rand", "rp", "rank"})
    throw FormatError("bad results header: " + path);
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = detail::split_csv(line);
    if (f.size() != 8) throw FormatError("bad results row: " + line);
    try {
      ResultRow r;
      r.instance_id = f[0];
      r.algorithm = f[1];
      r.run = std::stoi(f[2]);
      r.seed = std::stoull(f[3]);
      r.e_off = std::stod(f[4]);
      r.e_rand = std::stod(f[5]);
      r.rp = std::stod(f[6]);
      r.rank = std::stoi(f[7]);
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw FormatError("bad results row: " + line);
    }
  }
  return rows;
}

inline void write_curve_csv(const std::string& path,
                            const std::vector<ppo::CurveRow>& curve) {
  std::ofstream os(path);
  if (!os) throw MissingFileError(path);
  os << "epoch,instance_id,return,e_off\n";
  for (const ppo::CurveRow& r : curve)
    os << r.epoch << ',' << r.instance_id << ',' << detail::fmt(r.ep_return)
       << ',' << detail::fmt(r.e_off) << '\n';
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<ppo::TraceRow>& trace) {
  std::ofstream os(path);
  if (!os) throw MissingFileError(path);
  os << "generation,gbest_f,species,ratio\n";
  for (const ppo::TraceRow& r : trace)
    os << r.generation << ',' << detail::fmt(r.gbest_f) << ',' << r.species
       << ',' << detail::fmt(r.ratio) << '\n';
}

inline void write_rank_csv(const std::string& path, const RankTable& t) {
  std::ofstream os(path);
  if (!os) throw MissingFileError(path);
  os << "instance_id";
  for (const std::string& a : t.algorithms)
    os << ',' << a << "_mean," << a << "_std," << a << "_rank";
  os << '\n';
  for (std::size_t i = 0; i < t.instances.size(); ++i) {
    os << t.instances[i];
    for (std::size_t k = 0; k < t.algorithms.size(); ++k) {
      int ii = static_cast<int>(i), kk = static_cast<int>(k);
      os << ',' << detail::fmt(t.mean(ii, kk)) << ','
         << detail::fmt(t.stddev(ii, kk)) << ',' << t.rank(ii, kk);
    }
    os << '\n';
  }
  os << "avg_rank";
  for (std::size_t k = 0; k < t.algorithms.size(); ++k)
    os << ",,," << detail::fmt(t.avg_rank(static_cast<int>(k)));
  os << '\n';
}

// ---------------------------------------------------------------------------
// Evaluation fan-out and manifests

inline std::vector<ResultRow> eval_algorithm(
    const std::string& algo, const policy::PolicyParams* params,
    const std::vector<dynabench::DynamicInstance>& instances,
    const ppo::ControlConfig& cc, int n_swarm, std::uint64_t seed, int runs,
    const Eigen::Vector3d& fixed = ppo::kFixedCoeffs) {
  std::vector<ResultRow> rows;
  for (const dynabench::DynamicInstance& inst : instances) {
    for (int run = 0; run < runs; ++run) {
      std::uint64_t run_seed =
          Rng::derive(seed, "run", static_cast<std::uint64_t>(run));
      ppo::EvalResult er =
          ppo::evaluate_policy(params, inst, cc, n_swarm, run_seed, fixed);
      ResultRow row;
      row.instance_id = inst.id;
      row.algorithm = algo;
      row.run = run;
      row.seed = run_seed;
      row.e_off = er.e_off;
      row.e_rand = er.e_rand;
      row.rp = er.rp;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// Fresh policy for a config; stream-derived so equal seeds give equal nets.
inline policy::PolicyParams make_policy(const RunConfig& c) {
  Rng rng = Rng::stream(c.seed, "policy-init");
  return policy::init_params(policy_config(c), rng);
}

// Random search scores itself against its own sampling baseline, so rp = 1
// by construction; rows exist to anchor rank tables.
inline std::vector<ResultRow> eval_random(
    const std::string& algo,
    const std::vector<dynabench::DynamicInstance>& instances,
    std::uint64_t seed, int runs) {
  std::vector<ResultRow> rows;
  for (const dynabench::DynamicInstance& inst : instances) {
    for (int run = 0; run < runs; ++run) {
      std::uint64_t run_seed =
          Rng::derive(seed, "run", static_cast<std::uint64_t>(run));
      double e = dynabench::random_baseline(inst, run_seed);
      ResultRow row;
      row.instance_id = inst.id;
      row.algorithm = algo;
      row.run = run;
      row.seed = run_seed;
      row.e_off = e;
      row.e_rand = e;
      row.rp = 1.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string build_id() { return METADO_BUILD_ID; }

inline void write_manifest(const std::string& path, const RunConfig& cfg,
                           const std::string& command) {
  nlohmann::json j{{"build_id", build_id()},
                   {"command", command},
                   {"seed", cfg.seed},
                   {"config", to_json(cfg)}};
  std::ofstream os(path);
  if (!os) throw MissingFileError(path);
  os << j.dump(2) << '\n';
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw MissingFileError(dir);
}

}  // namespace metado::harness
