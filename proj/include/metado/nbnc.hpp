#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "metado/objective.hpp"
#include "metado/rng.hpp"

// Niching PSO with nearest-better-neighbor clustering, per-individual
// hyper-parameters, and an elite archive whose re-evaluation exposes an
// environmental scaling factor.
namespace metado::nbnc {

inline constexpr double kRatioEps = 1e-8;
inline constexpr double kVelocityClampFrac = 0.2;
inline constexpr double kDefaultFollowFactor = 2.0;
inline constexpr int kArchiveCapacity = 5;

struct Particle {
  Eigen::VectorXd x;
  Eigen::VectorXd v;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd pbest;
  double pbest_f = std::numeric_limits<double>::infinity();
  int stagnation_p = 0;
};

struct Species {
  std::vector<int> members;
  int sbest = -1;
};

struct Swarm {
  std::vector<Particle> particles;
  Bounds box;
  Eigen::VectorXd gbest;
  double gbest_f = std::numeric_limits<double>::infinity();
  int stagnation_g = 0;
  std::vector<Species> species;
  long generation = 0;

  int size() const { return static_cast<int>(particles.size()); }

  int species_of(int i) const {
    for (int s = 0; s < static_cast<int>(species.size()); ++s)
      for (int m : species[s].members)
        if (m == i) return s;
    return -1;
  }
};

// Lower fitness wins; equal fitness favors the lower index.
inline bool fitter(double fa, int ia, double fb, int ib) {
  return fa < fb || (fa == fb && ia < ib);
}

using Partition = std::vector<std::vector<int>>;

inline void adopt_partition(Swarm& swarm, const Partition& parts) {
  swarm.species.clear();
  for (const auto& members : parts) {
    Species s;
    s.members = members;
    for (int m : s.members)
      if (s.sbest < 0 ||
          fitter(swarm.particles[m].f, m, swarm.particles[s.sbest].f, s.sbest))
        s.sbest = m;
    swarm.species.push_back(std::move(s));
  }
}

inline void refresh_gbest(Swarm& swarm) {
  for (int i = 0; i < swarm.size(); ++i) {
    const Particle& p = swarm.particles[i];
    if (p.pbest_f < swarm.gbest_f) {
      swarm.gbest = p.pbest;
      swarm.gbest_f = p.pbest_f;
    }
  }
}

inline Swarm init_swarm(Objective& obj, int n, Rng& rng) {
  Swarm swarm;
  swarm.box = obj.bounds();
  const int dim = swarm.box.dim();
  swarm.particles.resize(n);
  for (int i = 0; i < n; ++i) {
    Particle& p = swarm.particles[i];
    p.x.resize(dim);
    for (int d = 0; d < dim; ++d)
      p.x(d) = rng.uniform(swarm.box.lower(d), swarm.box.upper(d));
    p.v = Eigen::VectorXd::Zero(dim);
    p.f = obj.evaluate(p.x);
    p.pbest = p.x;
    p.pbest_f = p.f;
  }
  Species all;
  all.members.resize(n);
  std::iota(all.members.begin(), all.members.end(), 0);
  for (int m : all.members)
    if (all.sbest < 0 || fitter(swarm.particles[m].f, m,
                                swarm.particles[all.sbest].f, all.sbest))
      all.sbest = m;
  swarm.species.push_back(std::move(all));
  refresh_gbest(swarm);
  return swarm;
}

// Nearest-better-neighbor clustering: link each particle to its nearest
// strictly-better neighbor, cut links longer than follow_factor times the
// mean nearest-neighbor distance, take connected components.
inline Partition cluster_nbnc(const Swarm& swarm, double follow_factor) {
  const int n = swarm.size();
  if (n == 1) return {{0}};

  Eigen::MatrixXd dist(n, n);
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double d = (swarm.particles[i].x - swarm.particles[j].x).norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  double mean_nn = 0.0;
  for (int i = 0; i < n; ++i) {
    double nn = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) nn = std::min(nn, dist(i, j));
    mean_nn += nn;
  }
  mean_nn /= n;
  const double cut = follow_factor * mean_nn;

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };

  for (int i = 0; i < n; ++i) {
    int target = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (!fitter(swarm.particles[j].f, j, swarm.particles[i].f, i)) continue;
      if (dist(i, j) < best_d) {
        best_d = dist(i, j);
        target = j;
      }
    }
    if (target >= 0 && best_d <= cut) parent[find(i)] = find(target);
  }

  std::vector<std::vector<int>> groups(n);
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  Partition parts;
  for (auto& g : groups)
    if (!g.empty()) parts.push_back(std::move(g));
  return parts;
}

// Merge a species into a strictly better one whose radius covers its seed;
// repeat until no merge applies.
inline Partition merge_species(Partition parts, const Swarm& swarm) {
  auto seed_of = [&](const std::vector<int>& members) {
    int s = members[0];
    for (int m : members)
      if (fitter(swarm.particles[m].f, m, swarm.particles[s].f, s)) s = m;
    return s;
  };
  auto radius_of = [&](const std::vector<int>& members, int seed) {
    double r = 0.0;
    for (int m : members)
      r = std::max(r, (swarm.particles[m].x - swarm.particles[seed].x).norm());
    return r;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> seeds(parts.size());
    for (std::size_t s = 0; s < parts.size(); ++s) seeds[s] = seed_of(parts[s]);

    // Visit worst-seeded species first so the most dominated merge first.
    std::vector<std::size_t> order(parts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return fitter(swarm.particles[seeds[b]].f, seeds[b],
                    swarm.particles[seeds[a]].f, seeds[a]);
    });

    for (std::size_t a : order) {
      int best_b = -1;
      for (std::size_t b = 0; b < parts.size(); ++b) {
        if (b == a) continue;
        if (!(swarm.particles[seeds[b]].f < swarm.particles[seeds[a]].f))
          continue;
        double d =
            (swarm.particles[seeds[a]].x - swarm.particles[seeds[b]].x).norm();
        if (d >= radius_of(parts[b], seeds[b])) continue;
        if (best_b < 0 || fitter(swarm.particles[seeds[b]].f, seeds[b],
                                 swarm.particles[seeds[best_b]].f,
                                 seeds[best_b]))
          best_b = static_cast<int>(b);
      }
      if (best_b >= 0) {
        auto& dst = parts[best_b];
        dst.insert(dst.end(), parts[a].begin(), parts[a].end());
        std::sort(dst.begin(), dst.end());
        parts.erase(parts.begin() + static_cast<long>(a));
        changed = true;
        break;
      }
    }
  }
  return parts;
}

inline void recluster(Swarm& swarm, double follow_factor) {
  adopt_partition(swarm, merge_species(cluster_nbnc(swarm, follow_factor), swarm));
}

// One synchronous PSO generation under per-individual coefficients h
// (N rows of w, c1, c2). Species-best positions are snapshotted up front.
inline void pso_step(Swarm& swarm, const Eigen::MatrixXd& h, Objective& obj,
                     Rng& rng) {
  const int n = swarm.size();
  const int dim = swarm.box.dim();
  const Eigen::VectorXd vmax =
      kVelocityClampFrac * (swarm.box.upper - swarm.box.lower);

  std::vector<Eigen::VectorXd> sbest_pos(n);
  for (const Species& s : swarm.species)
    for (int m : s.members) sbest_pos[m] = swarm.particles[s.sbest].x;

  bool gbest_improved = false;
  for (int i = 0; i < n; ++i) {
    Particle& p = swarm.particles[i];
    const double w = h(i, 0), c1 = h(i, 1), c2 = h(i, 2);
    for (int d = 0; d < dim; ++d) {
      double r1 = rng.uniform();
      double r2 = rng.uniform();
      double v = w * p.v(d) + c1 * r1 * (p.pbest(d) - p.x(d)) +
                 c2 * r2 * (sbest_pos[i](d) - p.x(d));
      v = std::clamp(v, -vmax(d), vmax(d));
      double x = p.x(d) + v;
      if (x < swarm.box.lower(d)) {
        x = swarm.box.lower(d);
        v = 0.0;
      } else if (x > swarm.box.upper(d)) {
        x = swarm.box.upper(d);
        v = 0.0;
      }
      p.v(d) = v;
      p.x(d) = x;
    }
    p.f = obj.evaluate(p.x);
    if (p.f < p.pbest_f) {
      p.pbest = p.x;
      p.pbest_f = p.f;
      p.stagnation_p = 0;
      if (p.pbest_f < swarm.gbest_f) gbest_improved = true;
    } else {
      ++p.stagnation_p;
    }
  }
  refresh_gbest(swarm);
  swarm.stagnation_g = gbest_improved ? 0 : swarm.stagnation_g + 1;
  ++swarm.generation;
}

struct ArchiveEntry {
  Eigen::VectorXd x;
  double f_prev = 0.0;
  double f_cur = 0.0;
  long generation = 0;
};

struct EliteArchive {
  std::deque<ArchiveEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
  bool empty() const { return entries.empty(); }

  // Index of the entry with the lowest current fitness.
  int best() const {
    int b = 0;
    for (int i = 1; i < size(); ++i)
      if (entries[i].f_cur < entries[b].f_cur) b = i;
    return b;
  }
};

// Record the current generation's best particle; capacity 5, oldest out.
inline void archive_update(EliteArchive& archive, const Swarm& swarm) {
  int best = 0;
  for (int i = 1; i < swarm.size(); ++i)
    if (fitter(swarm.particles[i].f, i, swarm.particles[best].f, best))
      best = i;
  ArchiveEntry e;
  e.x = swarm.particles[best].x;
  e.f_prev = swarm.particles[best].f;
  e.f_cur = swarm.particles[best].f;
  e.generation = swarm.generation;
  archive.entries.push_back(std::move(e));
  while (archive.size() > kArchiveCapacity) archive.entries.pop_front();
}

// Re-evaluate every entry under the current environment; the mean fitness
// ratio across entries is the environmental scaling factor.
inline double archive_reevaluate(EliteArchive& archive, Objective& obj) {
  if (archive.empty()) return 1.0;
  double sum = 0.0;
  for (ArchiveEntry& e : archive.entries) {
    double f_new = obj.evaluate(e.x);
    sum += (std::max(f_new, kRatioEps) + kRatioEps) /
           (std::max(e.f_cur, kRatioEps) + kRatioEps);
    e.f_prev = e.f_cur;
    e.f_cur = f_new;
  }
  return sum / archive.size();
}

// Overwrite each species' worst member with the best archive entry when that
// entry is fitter; the member's pbest follows only if the entry also beats it.
inline void archive_reinject(Swarm& swarm, const EliteArchive& archive) {
  if (archive.empty()) return;
  const ArchiveEntry& elite = archive.entries[archive.best()];
  for (Species& s : swarm.species) {
    int worst = s.members[0];
    for (int m : s.members)
      if (!fitter(swarm.particles[m].f, m, swarm.particles[worst].f, worst))
        worst = m;
    Particle& p = swarm.particles[worst];
    if (elite.f_cur < p.f) {
      p.x = elite.x;
      p.f = elite.f_cur;
      p.v.setZero();
      if (elite.f_cur < p.pbest_f) {
        p.pbest = elite.x;
        p.pbest_f = elite.f_cur;
        p.stagnation_p = 0;
      }
      s.sbest = -1;
      for (int m : s.members)
        if (s.sbest < 0 || fitter(swarm.particles[m].f, m,
                                  swarm.particles[s.sbest].f, s.sbest))
          s.sbest = m;
    }
  }
  refresh_gbest(swarm);
}

}  // namespace metado::nbnc
