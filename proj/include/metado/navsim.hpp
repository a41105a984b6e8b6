#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metado/errors.hpp"
#include "metado/objective.hpp"
#include "metado/ppo.hpp"
#include "metado/rng.hpp"

// Moving-obstacle path planning: every control frame poses a fresh path
// optimization under a hard per-frame evaluation budget, solved by the same
// (optionally meta-controlled) niching PSO; the vehicle follows the best
// path found within the frame.
namespace metado::navsim {

enum class ObstacleMode { consistent, random };

struct Obstacle {
  Eigen::Vector2d center;
  double radius = 0.0;
  Eigen::Vector2d velocity;
  ObstacleMode mode = ObstacleMode::consistent;
};

struct Scenario {
  int case_id = 1;
  double arena = 500.0;
  Eigen::Vector2d start{30.0, 30.0};
  Eigen::Vector2d goal{470.0, 470.0};
  double goal_radius = 25.0;
  int segments = 4;
  std::vector<Obstacle> obstacles;
  int max_frames = 500;
  long fe_per_frame = 1000;
  std::uint64_t seed = 0;

  int genome_dim() const { return 2 * (segments - 1); }
};

// Cases 1-3: consistent obstacle motion with 4/6/10 segments; cases 4-6 the
// same complexity ladder with per-frame random headings.
inline Scenario make_scenario(int case_id, std::uint64_t seed) {
  if (case_id < 1 || case_id > 6)
    throw FormatError("case_id must be 1..6");
  Scenario sc;
  sc.case_id = case_id;
  sc.seed = seed;
  const int seg_table[3] = {4, 6, 10};
  sc.segments = seg_table[(case_id - 1) % 3];
  ObstacleMode mode =
      case_id <= 3 ? ObstacleMode::consistent : ObstacleMode::random;

  Rng rng = Rng::stream(seed, "scenario", static_cast<unsigned>(case_id));
  const int n_obs = 7;
  for (int i = 0; i < n_obs; ++i) {
    Obstacle ob;
    ob.mode = mode;
    ob.radius = rng.uniform(25.0, 45.0);
    for (;;) {
      ob.center = {rng.uniform(80.0, 420.0), rng.uniform(80.0, 420.0)};
      if ((ob.center - sc.start).norm() > ob.radius + 40.0 &&
          (ob.center - sc.goal).norm() > ob.radius + 40.0)
        break;
    }
    double speed = rng.uniform(4.0, 9.0);
    double heading = rng.uniform(0.0, 2.0 * M_PI);
    ob.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
    sc.obstacles.push_back(ob);
  }
  return sc;
}

inline bool segment_hits_circle(const Eigen::Vector2d& p,
                                const Eigen::Vector2d& q,
                                const Eigen::Vector2d& c, double r) {
  Eigen::Vector2d d = q - p;
  double len2 = d.squaredNorm();
  double t = len2 == 0.0 ? 0.0 : std::clamp((c - p).dot(d) / len2, 0.0, 1.0);
  return (p + t * d - c).norm() <= r;
}

// Polyline length plus a heavy penalty per segment-obstacle conflict, where
// a conflict is a hit on the obstacle's current or one-frame-predicted disc.
inline double path_fitness(const Eigen::VectorXd& genome,
                           const Eigen::Vector2d& from,
                           const Eigen::Vector2d& goal,
                           const std::vector<Obstacle>& obstacles,
                           double arena) {
  const int n_wp = static_cast<int>(genome.size()) / 2;
  const double penalty = 10.0 * arena * std::sqrt(2.0);

  std::vector<Eigen::Vector2d> pts;
  pts.reserve(n_wp + 2);
  pts.push_back(from);
  for (int i = 0; i < n_wp; ++i)
    pts.emplace_back(genome(2 * i), genome(2 * i + 1));
  pts.push_back(goal);

  double length = 0.0;
  int conflicts = 0;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    length += (pts[s + 1] - pts[s]).norm();
    for (const Obstacle& ob : obstacles) {
      bool now = segment_hits_circle(pts[s], pts[s + 1], ob.center, ob.radius);
      bool next = segment_hits_circle(pts[s], pts[s + 1],
                                      ob.center + ob.velocity, ob.radius);
      if (now || next) ++conflicts;
    }
  }
  return length + penalty * conflicts;
}

// Budgeted per-frame objective; tracks the best genome evaluated this frame.
class FrameObjective final : public Objective {
 public:
  FrameObjective(const Scenario& sc, const Eigen::Vector2d& vehicle)
      : _sc(&sc),
        _vehicle(vehicle),
        _box(Bounds::cube(sc.genome_dim(), 0.0, sc.arena)) {}

  double evaluate(const Eigen::VectorXd& x) override {
    if (_fe >= _sc->fe_per_frame) throw BudgetError();
    double f = path_fitness(x, _vehicle, _sc->goal, _sc->obstacles, _sc->arena);
    ++_fe;
    if (f < _best_f) {
      _best_f = f;
      _best_x = x;
    }
    return f;
  }

  const Bounds& bounds() const override { return _box; }
  long fe_used() const override { return _fe; }
  long fe_max() const override { return _sc->fe_per_frame; }

  double best_f() const { return _best_f; }
  const Eigen::VectorXd& best_x() const { return _best_x; }
  bool has_best() const { return _best_x.size() > 0; }

 private:
  const Scenario* _sc;
  Eigen::Vector2d _vehicle;
  Bounds _box;
  long _fe = 0;
  double _best_f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd _best_x;
};

inline Eigen::Vector2d walk_polyline(const Eigen::Vector2d& from,
                                     const Eigen::VectorXd& genome,
                                     const Eigen::Vector2d& goal,
                                     double step_len) {
  std::vector<Eigen::Vector2d> pts;
  pts.push_back(from);
  for (int i = 0; i < genome.size() / 2; ++i)
    pts.emplace_back(genome(2 * i), genome(2 * i + 1));
  pts.push_back(goal);

  Eigen::Vector2d pos = from;
  double left = step_len;
  for (std::size_t s = 0; s + 1 < pts.size() && left > 0.0; ++s) {
    Eigen::Vector2d d = pts[s + 1] - pos;
    double len = d.norm();
    if (len <= left) {
      pos = pts[s + 1];
      left -= len;
    } else {
      pos += (left / len) * d;
      left = 0.0;
    }
  }
  return pos;
}

struct EpisodeResult {
  bool success = false;
  double d_target = 0.0;
  int t_step = 0;
  bool collided = false;
  long total_fe = 0;
};

struct FrameTraceRow {
  int frame = 0;
  double x = 0.0, y = 0.0;
  double best_f = 0.0;
};

inline constexpr double kVehicleStep = 10.0;

struct EpisodeState {
  Scenario sc;
  Eigen::Vector2d vehicle;
  Rng init_rng;
  Rng obstacle_rng;
  Rng action_rng;

  EpisodeState(const Scenario& scenario, std::uint64_t seed)
      : sc(scenario),
        vehicle(scenario.start),
        init_rng(Rng::stream(seed, "init", scenario.seed)),
        obstacle_rng(Rng::stream(seed, "obstacle", scenario.seed)),
        action_rng(Rng::stream(seed, "action", scenario.seed)) {}
};

inline void advance_obstacles(Scenario& sc, Rng& rng) {
  for (Obstacle& ob : sc.obstacles) {
    if (ob.mode == ObstacleMode::random) {
      double speed = ob.velocity.norm();
      double heading = rng.uniform(0.0, 2.0 * M_PI);
      ob.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
    }
    ob.center += ob.velocity;
    for (int axis = 0; axis < 2; ++axis) {
      double lo = ob.radius;
      double hi = sc.arena - ob.radius;
      if (ob.center(axis) < lo) {
        ob.center(axis) = 2.0 * lo - ob.center(axis);
        ob.velocity(axis) = -ob.velocity(axis);
      } else if (ob.center(axis) > hi) {
        ob.center(axis) = 2.0 * hi - ob.center(axis);
        ob.velocity(axis) = -ob.velocity(axis);
      }
    }
  }
}

enum class FrameStatus { running, success, collision };

// One control frame: a fresh optimization of the frame's path problem under
// exactly fe_per_frame evaluations (leftover budget re-evaluates the frame
// best), then move the vehicle along the best path, advance obstacles, and
// check outcomes.
inline FrameStatus step_frame(EpisodeState& es,
                              const policy::PolicyParams* params,
                              const ppo::ControlConfig& cc, int n_swarm,
                              const Eigen::Vector3d& fixed = ppo::kFixedCoeffs,
                              double* out_best_f = nullptr,
                              long* out_fe = nullptr) {
  FrameObjective obj(es.sc, es.vehicle);
  ppo::RunState rs = ppo::init_run(obj, n_swarm, cc, es.init_rng);
  while (!rs.done) {
    if (params) {
      ppo::policy_step(*params, rs, obj, cc, es.action_rng, false);
    } else {
      ppo::fixed_step(rs, obj, cc, fixed, es.action_rng);
    }
  }
  Eigen::VectorXd chosen = obj.has_best() ? obj.best_x() : rs.swarm.gbest;
  while (obj.remaining() > 0) obj.evaluate(chosen);
  if (out_fe) *out_fe = obj.fe_used();

  es.vehicle = walk_polyline(es.vehicle, obj.best_x(), es.sc.goal,
                             kVehicleStep);
  advance_obstacles(es.sc, es.obstacle_rng);

  if (out_best_f) *out_best_f = obj.best_f();

  for (const Obstacle& ob : es.sc.obstacles)
    if ((es.vehicle - ob.center).norm() <= ob.radius)
      return FrameStatus::collision;
  if ((es.vehicle - es.sc.goal).norm() <= es.sc.goal_radius)
    return FrameStatus::success;
  return FrameStatus::running;
}

inline EpisodeResult run_episode(const Scenario& scenario,
                                 const policy::PolicyParams* params,
                                 const ppo::ControlConfig& cc, int n_swarm,
                                 std::uint64_t seed,
                                 std::vector<FrameTraceRow>* trace = nullptr) {
  EpisodeState es(scenario, seed);
  EpisodeResult res;
  if ((es.vehicle - scenario.goal).norm() <= scenario.goal_radius) {
    res.success = true;
    res.d_target = (es.vehicle - scenario.goal).norm();
    return res;
  }
  for (int frame = 1; frame <= scenario.max_frames; ++frame) {
    double best_f = 0.0;
    long frame_fe = 0;
    FrameStatus st = step_frame(es, params, cc, n_swarm, ppo::kFixedCoeffs,
                                &best_f, &frame_fe);
    res.total_fe += frame_fe;
    res.t_step = frame;
    if (trace) trace->push_back({frame, es.vehicle(0), es.vehicle(1), best_f});
    if (st == FrameStatus::collision) {
      res.collided = true;
      break;
    }
    if (st == FrameStatus::success) {
      res.success = true;
      break;
    }
  }
  res.d_target = (es.vehicle - scenario.goal).norm();
  return res;
}

struct Aggregate {
  double sr = 0.0;
  double mean_d_target = 0.0;
  double mean_t_step = 0.0;
};

inline Aggregate aggregate(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw FormatError("aggregate of no episodes");
  Aggregate a;
  for (const EpisodeResult& r : results) {
    a.sr += r.success ? 1.0 : 0.0;
    a.mean_d_target += r.d_target;
    a.mean_t_step += r.t_step;
  }
  a.sr /= results.size();
  a.mean_d_target /= results.size();
  a.mean_t_step /= results.size();
  return a;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const Scenario& sc) {
  nlohmann::json obs = nlohmann::json::array();
  for (const Obstacle& ob : sc.obstacles)
    obs.push_back({{"center", {ob.center(0), ob.center(1)}},
                   {"radius", ob.radius},
                   {"velocity", {ob.velocity(0), ob.velocity(1)}},
                   {"mode", ob.mode == ObstacleMode::consistent
                                ? "Consistent"
                                : "Random"}});
  return nlohmann::json{{"case_id", sc.case_id},
                        {"arena", sc.arena},
                        {"start", {sc.start(0), sc.start(1)}},
                        {"goal", {sc.goal(0), sc.goal(1)}},
                        {"goal_radius", sc.goal_radius},
                        {"segments", sc.segments},
                        {"max_frames", sc.max_frames},
                        {"fe_per_frame", sc.fe_per_frame},
                        {"seed", sc.seed},
                        {"obstacles", std::move(obs)}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario sc;
  try {
    sc.case_id = j.at("case_id").get<int>();
    sc.arena = j.at("arena").get<double>();
    sc.start = {j.at("start")[0].get<double>(), j.at("start")[1].get<double>()};
    sc.goal = {j.at("goal")[0].get<double>(), j.at("goal")[1].get<double>()};
    sc.goal_radius = j.at("goal_radius").get<double>();
    sc.segments = j.at("segments").get<int>();
    sc.max_frames = j.at("max_frames").get<int>();
    sc.fe_per_frame = j.at("fe_per_frame").get<long>();
    sc.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jo : j.at("obstacles")) {
      Obstacle ob;
      ob.center = {jo.at("center")[0].get<double>(),
                   jo.at("center")[1].get<double>()};
      ob.radius = jo.at("radius").get<double>();
      ob.velocity = {jo.at("velocity")[0].get<double>(),
                     jo.at("velocity")[1].get<double>()};
      ob.mode = jo.at("mode").get<std::string>() == "Random"
                    ? ObstacleMode::random
                    : ObstacleMode::consistent;
      sc.obstacles.push_back(ob);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad scenario json: ") + e.what());
  }
  return sc;
}

}  // namespace metado::navsim
