#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "metado/dynabench.hpp"
#include "metado/mdp.hpp"
#include "metado/nbnc.hpp"
#include "metado/policy.hpp"

// Meta-training loop: per-step control of the niching PSO by the policy,
// transition collection, GAE, and clipped-surrogate updates every n steps.
namespace metado::ppo {

enum class ActionMode { full, c_only, w_only };
enum class RewardMode { log_scale, binary, linear };

inline int action_dim(ActionMode m) {
  switch (m) {
    case ActionMode::full: return 3;
    case ActionMode::c_only: return 2;
    case ActionMode::w_only: return 1;
  }
  return 3;
}

// Wiring knobs shared by training, evaluation, and the ablation variants.
struct ControlConfig {
  mdp::HyperBounds bounds;
  double follow_factor = nbnc::kDefaultFollowFactor;
  bool zero_subpop_features = false;   // blank fea3 and fea8
  bool zero_archive_feature = false;   // blank fea1
  ActionMode action_mode = ActionMode::full;
  RewardMode reward_mode = RewardMode::log_scale;
};

struct TrainConfig {
  int n_rollout = 10;
  int k_epochs = 3;
  double lr = 1e-5;
  int meta_epochs = 20;
  int batch = 8;
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
};

struct Transition {
  Eigen::MatrixXd state;
  Eigen::MatrixXd action;  // pre-clip sample; log_prob at this point is exact
  double logp = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct RunState {
  nbnc::Swarm swarm;
  nbnc::EliteArchive archive;
  double ratio = 1.0;
  Eigen::MatrixXd state;
  bool done = false;
};

inline Eigen::MatrixXd features(const RunState& rs, const Objective& obj,
                                const ControlConfig& cc) {
  Eigen::MatrixXd s =
      mdp::extract_state(rs.swarm, rs.ratio, obj.fe_used(), obj.fe_max());
  if (cc.zero_archive_feature) s.col(0).setZero();
  if (cc.zero_subpop_features) {
    s.col(2).setZero();
    s.col(7).setZero();
  }
  return s;
}

// FEs one controller step will charge: N particle moves plus the archive
// re-evaluation after this generation's entry lands.
inline long step_cost(const RunState& rs) {
  return rs.swarm.size() +
         std::min(rs.archive.size() + 1, nbnc::kArchiveCapacity);
}

inline bool budget_allows(const RunState& rs, const Objective& obj) {
  return obj.remaining() >= step_cost(rs);
}

inline RunState init_run(Objective& obj, int n, const ControlConfig& cc,
                         Rng& init_rng) {
  RunState rs;
  rs.swarm = nbnc::init_swarm(obj, n, init_rng);
  nbnc::recluster(rs.swarm, cc.follow_factor);
  rs.ratio = 1.0;
  rs.state = features(rs, obj, cc);
  rs.done = !budget_allows(rs, obj);
  return rs;
}

// Lift a policy action (3, 2, or 1 columns depending on mode) to the full
// (w, c1, c2) action in [0,1]^3; fixed coordinates are filled in here.
inline Eigen::MatrixXd expand_action(const Eigen::MatrixXd& a,
                                     const ControlConfig& cc,
                                     const RunState& rs,
                                     const Objective& obj) {
  auto to_unit = [&](int col, double value) {
    double span = cc.bounds.U(col) - cc.bounds.L(col);
    return std::clamp((value - cc.bounds.L(col)) / span, 0.0, 1.0);
  };
  switch (cc.action_mode) {
    case ActionMode::full:
      return a;
    case ActionMode::c_only: {
      double t_max =
          static_cast<double>(obj.fe_max()) / rs.swarm.size();
      double frac =
          std::min(static_cast<double>(rs.swarm.generation) / t_max, 1.0);
      Eigen::MatrixXd full(a.rows(), 3);
      full.col(0).setConstant(to_unit(0, 0.9 - 0.5 * frac));
      full.col(1) = a.col(0);
      full.col(2) = a.col(1);
      return full;
    }
    case ActionMode::w_only: {
      Eigen::MatrixXd full(a.rows(), 3);
      full.col(0) = a.col(0);
      full.col(1).setConstant(to_unit(1, 2.05));
      full.col(2).setConstant(to_unit(2, 2.05));
      return full;
    }
  }
  return a;
}

struct StepOutcome {
  double gbest_prev = 0.0;
  double gbest_cur = 0.0;
  double ratio = 1.0;
  double reward = 0.0;
};

inline double step_reward(RewardMode mode, double ratio, double gbest_prev,
                          double gbest_cur) {
  const double f_base = ratio * gbest_prev;
  switch (mode) {
    case RewardMode::log_scale:
      return mdp::reward({ratio, gbest_prev, gbest_cur, mdp::kEps});
    case RewardMode::binary:
      return gbest_cur < f_base ? 1.0 : 0.0;
    case RewardMode::linear:
      return std::max(f_base - gbest_cur, 0.0);
  }
  return 0.0;
}

// Optimizer mechanics of one controller step, shared by every mode: move the
// swarm under h, refresh the partition, bank the generation best, re-inject,
// re-evaluate the archive, score, and prepare the next state.
inline StepOutcome advance(RunState& rs, const Eigen::MatrixXd& h,
                           Objective& obj, const ControlConfig& cc, Rng& rng) {
  StepOutcome o;
  o.gbest_prev = rs.swarm.gbest_f;
  nbnc::pso_step(rs.swarm, h, obj, rng);
  nbnc::recluster(rs.swarm, cc.follow_factor);
  nbnc::archive_update(rs.archive, rs.swarm);
  nbnc::archive_reinject(rs.swarm, rs.archive);
  o.ratio = nbnc::archive_reevaluate(rs.archive, obj);
  rs.ratio = o.ratio;
  o.gbest_cur = rs.swarm.gbest_f;
  o.reward = step_reward(cc.reward_mode, o.ratio, o.gbest_prev, o.gbest_cur);
  rs.state = features(rs, obj, cc);
  rs.done = !budget_allows(rs, obj);
  return o;
}

inline Transition policy_step(const policy::PolicyParams& params, RunState& rs,
                              Objective& obj, const ControlConfig& cc,
                              Rng& rng, bool stochastic) {
  Transition tr;
  tr.state = rs.state;
  policy::ForwardResult fwd = policy::forward(params, rs.state);
  Eigen::MatrixXd a01;
  if (stochastic) {
    policy::SampleResult s = policy::sample(fwd.head, rng);
    tr.action = std::move(s.raw);
    tr.logp = s.logp;
    a01 = std::move(s.a);
  } else {
    tr.action = fwd.head.mu;
    tr.logp = policy::log_prob(fwd.head, fwd.head.mu);
    a01 = fwd.head.mu;
  }
  tr.value = fwd.value;
  Eigen::MatrixXd h = mdp::map_action(expand_action(a01, cc, rs, obj),
                                      cc.bounds);
  StepOutcome out = advance(rs, h, obj, cc, rng);
  tr.reward = out.reward;
  tr.done = rs.done;
  return tr;
}

inline StepOutcome fixed_step(RunState& rs, Objective& obj,
                              const ControlConfig& cc,
                              const Eigen::Vector3d& coeffs, Rng& rng) {
  Eigen::MatrixXd h(rs.swarm.size(), 3);
  h.rowwise() = coeffs.transpose();
  return advance(rs, h, obj, cc, rng);
}

// ---------------------------------------------------------------------------
// Advantage estimation and PPO updates

struct Advantages {
  Eigen::VectorXd adv;
  Eigen::VectorXd ret;
};

inline Advantages gae_raw(const std::vector<Transition>& buf, double gamma,
                          double lam, double bootstrap_value) {
  const int t_len = static_cast<int>(buf.size());
  Advantages out;
  out.adv.resize(t_len);
  out.ret.resize(t_len);
  double gae = 0.0;
  double next_v = bootstrap_value;
  for (int t = t_len - 1; t >= 0; --t) {
    if (buf[t].done) {
      gae = buf[t].reward - buf[t].value;
    } else {
      double delta = buf[t].reward + gamma * next_v - buf[t].value;
      gae = delta + gamma * lam * gae;
    }
    out.adv(t) = gae;
    out.ret(t) = gae + buf[t].value;
    next_v = buf[t].value;
  }
  return out;
}

inline Advantages compute_advantages(const std::vector<Transition>& buf,
                                     double gamma, double lam,
                                     double bootstrap_value) {
  Advantages out = gae_raw(buf, gamma, lam, bootstrap_value);
  const int t_len = static_cast<int>(buf.size());
  if (t_len > 1) {
    double mean = out.adv.mean();
    double sd = std::sqrt((out.adv.array() - mean).square().mean());
    out.adv = ((out.adv.array() - mean) / (sd + 1e-8)).matrix();
  }
  return out;
}

class Adam {
 public:
  explicit Adam(double lr) : _lr(lr) {}

  void step(policy::PolicyParams& params, policy::PolicyParams& grads) {
    if (_m.empty()) {
      policy::for_each_tensor(params, [&](const char*, auto& t) {
        _m.emplace_back(Eigen::ArrayXd::Zero(t.size()));
        _v.emplace_back(Eigen::ArrayXd::Zero(t.size()));
      });
    }
    ++_t;
    const double bc1 = 1.0 - std::pow(0.9, _t);
    const double bc2 = 1.0 - std::pow(0.999, _t);
    std::size_t k = 0;
    std::vector<std::pair<double*, long>> pv, gv;
    policy::for_each_tensor(params, [&](const char*, auto& t) {
      pv.emplace_back(t.data(), static_cast<long>(t.size()));
    });
    policy::for_each_tensor(grads, [&](const char*, auto& t) {
      gv.emplace_back(t.data(), static_cast<long>(t.size()));
    });
    for (k = 0; k < pv.size(); ++k) {
      Eigen::Map<Eigen::ArrayXd> p(pv[k].first, pv[k].second);
      Eigen::Map<const Eigen::ArrayXd> g(gv[k].first, gv[k].second);
      _m[k] = 0.9 * _m[k] + 0.1 * g;
      _v[k] = 0.999 * _v[k] + 0.001 * g.square();
      p -= _lr * (_m[k] / bc1) / ((_v[k] / bc2).sqrt() + 1e-8);
    }
  }

  long updates() const { return _t; }

 private:
  double _lr;
  long _t = 0;
  std::vector<Eigen::ArrayXd> _m, _v;
};

struct UpdateDiag {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 1.0;
  int epochs_run = 0;
  bool aborted = false;
};

// One episode's buffered window plus its bootstrap value; a batch update
// pools several of these (GAE never chains across segments).
struct Segment {
  const std::vector<Transition>* buf = nullptr;
  double bootstrap = 0.0;
};

// k_epochs clipped-surrogate steps over the pooled windows of a batch.
// Advantages are estimated per segment and normalized jointly, so a window
// that went badly end to end carries negative weight against its peers
// instead of being re-centered within itself.
inline UpdateDiag ppo_update_batch(policy::PolicyParams& params, Adam& opt,
                                   const std::vector<Segment>& segs,
                                   const TrainConfig& cfg) {
  std::vector<const Transition*> pool;
  std::vector<double> adv_v, ret_v;
  for (const Segment& s : segs) {
    Advantages est = gae_raw(*s.buf, cfg.gamma, cfg.lam, s.bootstrap);
    for (std::size_t t = 0; t < s.buf->size(); ++t) {
      pool.push_back(&(*s.buf)[t]);
      adv_v.push_back(est.adv(static_cast<int>(t)));
      ret_v.push_back(est.ret(static_cast<int>(t)));
    }
  }
  const int t_len = static_cast<int>(pool.size());
  if (t_len > 1) {
    Eigen::Map<Eigen::ArrayXd> a(adv_v.data(), t_len);
    double mean = a.mean();
    double sd = std::sqrt((a - mean).square().mean());
    a = (a - mean) / (sd + 1e-8);
  }
  UpdateDiag diag;
  for (int k = 0; k < cfg.k_epochs; ++k) {
    policy::PolicyParams grads = policy::zeros_like(params);
    double ploss = 0.0, vloss = 0.0, ent = 0.0, rho_sum = 0.0;
    for (int t = 0; t < t_len; ++t) {
      const Transition& tr = *pool[t];
      policy::ForwardResult fwd = policy::forward(params, tr.state);
      const double logp_new = policy::log_prob(fwd.head, tr.action);
      const double rho = std::exp(logp_new - tr.logp);
      const double a_t = adv_v[t];
      const double surr1 = rho * a_t;
      const double surr2 =
          std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a_t;
      ploss -= std::min(surr1, surr2);
      const double vdiff = fwd.value - ret_v[t];
      vloss += vdiff * vdiff;
      // The joint entropy sums over n*3 dims; the bonus must not grow with
      // swarm size or it drowns the surrogate, so the coefficient is per-dim.
      const double dims = static_cast<double>(fwd.head.mu.size());
      ent += policy::entropy(fwd.head) / dims;
      rho_sum += rho;

      const double g_logp =
          surr1 <= surr2 ? -(rho * a_t) / t_len : 0.0;
      Eigen::ArrayXXd zs = (tr.action - fwd.head.mu).array() /
                           fwd.head.sigma.array();
      Eigen::MatrixXd d_mu =
          (g_logp * zs / fwd.head.sigma.array()).matrix();
      Eigen::MatrixXd d_sigma =
          (g_logp * (zs.square() - 1.0) / fwd.head.sigma.array() -
           (cfg.entropy_coef / (t_len * dims)) / fwd.head.sigma.array())
              .matrix();
      const double d_value = cfg.value_coef * 2.0 * vdiff / t_len;
      policy::backward(params, fwd.cache, d_mu, d_sigma, d_value, grads);
    }
    const double total = ploss / t_len + cfg.value_coef * vloss / t_len -
                         cfg.entropy_coef * ent / t_len;
    if (!std::isfinite(total)) {
      diag.aborted = true;
      break;
    }
    if (k == 0) {
      diag.policy_loss = ploss / t_len;
      diag.value_loss = vloss / t_len;
      diag.entropy = ent / t_len;
      diag.mean_ratio = rho_sum / t_len;
    }
    opt.step(params, grads);
    ++diag.epochs_run;
  }
  return diag;
}

inline UpdateDiag ppo_update(policy::PolicyParams& params, Adam& opt,
                             const std::vector<Transition>& buf,
                             double bootstrap_value, const TrainConfig& cfg) {
  return ppo_update_batch(params, opt, {{&buf, bootstrap_value}}, cfg);
}

// ---------------------------------------------------------------------------
// Meta-training and evaluation

struct CurveRow {
  int epoch = 0;
  std::string instance_id;
  double ep_return = 0.0;
  double e_off = 0.0;
};

struct MetaTrainResult {
  std::vector<CurveRow> curve;
};

inline MetaTrainResult meta_train(
    policy::PolicyParams& params,
    const std::vector<dynabench::DynamicInstance>& train,
    const TrainConfig& tc, const ControlConfig& cc, int n_swarm,
    std::uint64_t seed) {
  Adam opt(tc.lr);
  MetaTrainResult res;
  for (int e = 0; e < tc.meta_epochs; ++e) {
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::stream(seed, "shuffle", static_cast<unsigned>(e));
    shuffle_rng.shuffle(order.begin(), order.end());
    // Instances run in lockstep groups of `batch`; each group shares one
    // pooled update per n_rollout sweeps, per the t mod n cadence.
    const std::size_t bsz = static_cast<std::size_t>(std::max(tc.batch, 1));
    for (std::size_t g0 = 0; g0 < order.size(); g0 += bsz) {
      const std::size_t g1 = std::min(g0 + bsz, order.size());
      struct Member {
        int idx;
        dynabench::Evaluator ev;
        Rng act_rng;
        RunState rs;
        std::vector<Transition> buf;
        double ep_ret = 0.0;
      };
      std::vector<Member> group;
      group.reserve(g1 - g0);
      for (std::size_t gi = g0; gi < g1; ++gi) {
        const int idx = order[gi];
        Member m{idx,
                 dynabench::Evaluator(
                     train[idx],
                     Rng::stream(seed, "noise", static_cast<unsigned>(e),
                                 static_cast<unsigned>(idx))),
                 Rng::stream(seed, "action", static_cast<unsigned>(e),
                             static_cast<unsigned>(idx)),
                 {},
                 {}};
        Rng init_rng = Rng::stream(seed, "init", static_cast<unsigned>(e),
                                   static_cast<unsigned>(idx));
        m.rs = init_run(m.ev, n_swarm, cc, init_rng);
        group.push_back(std::move(m));
      }
      auto all_done = [&group] {
        return std::all_of(group.begin(), group.end(),
                           [](const Member& m) { return m.rs.done; });
      };
      int sweeps = 0;
      while (!all_done()) {
        for (Member& m : group) {
          if (m.rs.done) continue;
          Transition tr = policy_step(params, m.rs, m.ev, cc, m.act_rng, true);
          m.ep_ret += tr.reward;
          m.buf.push_back(std::move(tr));
        }
        if (++sweeps == tc.n_rollout || all_done()) {
          std::vector<Segment> segs;
          segs.reserve(group.size());
          for (Member& m : group) {
            if (m.buf.empty()) continue;
            const double boot = m.buf.back().done
                                    ? 0.0
                                    : policy::forward(params, m.rs.state).value;
            segs.push_back({&m.buf, boot});
          }
          if (!segs.empty()) ppo_update_batch(params, opt, segs, tc);
          for (Member& m : group) m.buf.clear();
          sweeps = 0;
        }
      }
      for (const Member& m : group)
        res.curve.push_back({e, train[m.idx].id, m.ep_ret,
                             m.ev.ledger().offline_error()});
    }
  }
  return res;
}

struct TraceRow {
  long generation = 0;
  double gbest_f = 0.0;
  int species = 0;
  double ratio = 1.0;
};

struct EvalResult {
  double e_off = 0.0;
  double e_rand = 0.0;
  double rp = 0.0;
  std::vector<TraceRow> trace;
};

inline const Eigen::Vector3d kFixedCoeffs{0.7298, 1.49618, 1.49618};

// Greedy (a = mu) inference loop when params is given; fixed-coefficient
// baseline otherwise. No learning happens here.
inline EvalResult evaluate_policy(const policy::PolicyParams* params,
                                  const dynabench::DynamicInstance& inst,
                                  const ControlConfig& cc, int n_swarm,
                                  std::uint64_t seed,
                                  const Eigen::Vector3d& fixed = kFixedCoeffs,
                                  bool with_trace = false) {
  dynabench::Evaluator ev = dynabench::Evaluator::seeded(inst, seed);
  Rng init_rng = Rng::stream(seed, "init", inst.seed);
  Rng act_rng = Rng::stream(seed, "action", inst.seed);
  RunState rs = init_run(ev, n_swarm, cc, init_rng);
  EvalResult res;
  while (!rs.done) {
    StepOutcome out;
    if (params) {
      Transition tr = policy_step(*params, rs, ev, cc, act_rng, false);
      out.ratio = rs.ratio;
      out.gbest_cur = rs.swarm.gbest_f;
    } else {
      out = fixed_step(rs, ev, cc, fixed, act_rng);
    }
    if (with_trace)
      res.trace.push_back({rs.swarm.generation, rs.swarm.gbest_f,
                           static_cast<int>(rs.swarm.species.size()),
                           rs.ratio});
  }
  res.e_off = ev.ledger().offline_error();
  res.e_rand = dynabench::random_baseline(inst, seed);
  res.rp = dynabench::normalized_performance(res.e_off, res.e_rand);
  return res;
}

}  // namespace metado::ppo
