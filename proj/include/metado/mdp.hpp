#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "metado/nbnc.hpp"

// Optimizer-to-policy bridge: per-individual state features, action-to-
// hyper-parameter mapping, and the log-scale reward.
namespace metado::mdp {

inline constexpr double kEps = 1e-8;
inline constexpr int kStateDim = 10;

struct HyperBounds {
  Eigen::Vector3d L{0.0, 0.0, 0.0};
  Eigen::Vector3d U{1.0, 4.1, 4.1};
};

// N x 10 feature matrix, one row per particle:
//   fea1  landscape-shift intensity, log10(ratio)/8 clipped to [-1, 1]
//   fea2  fitness standardized against the population
//   fea3  fitness standardized against the particle's species
//   fea4  fraction of the evaluation budget remaining
//   fea5  pbest stagnation relative to T_max = FE_max / N
//   fea6  gbest stagnation relative to T_max
//   fea7  distance to gbest over the search-box diameter
//   fea8  distance to the species best over the diameter
//   fea9  distance to pbest over the diameter
//   fea10 cosine between (gbest - x) and (pbest - x), 0 on zero vectors
inline Eigen::MatrixXd extract_state(const nbnc::Swarm& swarm, double ratio,
                                     long fe, long fe_max) {
  const int n = swarm.size();
  Eigen::MatrixXd state(n, kStateDim);

  const double fea1 =
      std::clamp(std::log10(ratio) / 8.0, -1.0, 1.0);

  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) f(i) = swarm.particles[i].f;
  const double pop_mean = f.mean();
  const double pop_std =
      std::sqrt((f.array() - pop_mean).square().sum() / n);

  std::vector<int> species_of(n, 0);
  std::vector<double> sp_mean(swarm.species.size());
  std::vector<double> sp_std(swarm.species.size());
  for (std::size_t s = 0; s < swarm.species.size(); ++s) {
    const auto& members = swarm.species[s].members;
    double mean = 0.0;
    for (int m : members) {
      species_of[m] = static_cast<int>(s);
      mean += f(m);
    }
    mean /= members.size();
    double var = 0.0;
    for (int m : members) var += (f(m) - mean) * (f(m) - mean);
    sp_mean[s] = mean;
    sp_std[s] = std::sqrt(var / members.size());
  }

  const double t_max = static_cast<double>(fe_max) / n;
  const double diameter = swarm.box.diameter();

  for (int i = 0; i < n; ++i) {
    const nbnc::Particle& p = swarm.particles[i];
    const int s = species_of[i];
    const Eigen::VectorXd& sbest = swarm.particles[swarm.species[s].sbest].x;

    state(i, 0) = fea1;
    state(i, 1) = (f(i) - pop_mean) / (pop_std + kEps);
    state(i, 2) = (f(i) - sp_mean[s]) / (sp_std[s] + kEps);
    state(i, 3) = static_cast<double>(fe_max - fe) / fe_max;
    state(i, 4) = p.stagnation_p / t_max;
    state(i, 5) = swarm.stagnation_g / t_max;
    state(i, 6) = (p.x - swarm.gbest).norm() / diameter;
    state(i, 7) = (p.x - sbest).norm() / diameter;
    state(i, 8) = (p.x - p.pbest).norm() / diameter;

    Eigen::VectorXd to_g = swarm.gbest - p.x;
    Eigen::VectorXd to_p = p.pbest - p.x;
    double ng = to_g.norm();
    double np = to_p.norm();
    // Rounding can push the quotient an ulp past 1 for colinear vectors.
    state(i, 9) = (ng == 0.0 || np == 0.0)
                      ? 0.0
                      : std::clamp(to_g.dot(to_p) / (ng * np), -1.0, 1.0);
  }
  return state;
}

// h = diag(U - L) a + L, rowwise over an N x 3 action matrix in [0, 1].
inline Eigen::MatrixXd map_action(const Eigen::MatrixXd& a,
                                  const HyperBounds& bounds) {
  if (a.cols() != 3) throw std::invalid_argument("action matrix must be N x 3");
  if ((a.array() < 0.0).any() || (a.array() > 1.0).any())
    throw std::invalid_argument("action entries must lie in [0, 1]");
  Eigen::MatrixXd h(a.rows(), 3);
  for (int c = 0; c < 3; ++c)
    h.col(c) = (bounds.U(c) - bounds.L(c)) * a.col(c).array() + bounds.L(c);
  return h;
}

struct RewardInputs {
  double ratio = 1.0;
  double gbest_prev_f = 0.0;
  double gbest_cur_f = 0.0;
  double epsilon = kEps;
};

// Improvement beyond the drift-adjusted baseline, measured in log10 space
// and normalized by the maximum attainable log-improvement.
inline double reward(const RewardInputs& in) {
  const double eps = in.epsilon;
  const double f_base = in.ratio * in.gbest_prev_f;
  const double log_base = std::log10(std::max(std::abs(f_base), eps));
  const double log_cur = std::log10(std::max(std::abs(in.gbest_cur_f), eps));
  const double delta = log_base - log_cur;
  const double denom = log_base - std::log10(eps) + eps;
  return std::max(delta, 0.0) / denom;
}

}  // namespace metado::mdp
