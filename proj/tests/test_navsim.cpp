#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "metado/errors.hpp"
#include "metado/navsim.hpp"
#include "metado/rng.hpp"

using namespace metado;
using namespace metado::navsim;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

Scenario plain_scenario(int segments, long fe_per_frame) {
  Scenario sc;
  sc.segments = segments;
  sc.fe_per_frame = fe_per_frame;
  return sc;
}

}  // namespace

TEST_CASE("generated cases follow the complexity ladder") {
  const int want_segments[6] = {4, 6, 10, 4, 6, 10};
  for (std::uint64_t seed : {1ull, 2ull}) {
    for (int c = 1; c <= 6; ++c) {
      Scenario sc = make_scenario(c, seed);
      REQUIRE(sc.case_id == c);
      REQUIRE(sc.segments == want_segments[c - 1]);
      REQUIRE(sc.genome_dim() == 2 * (sc.segments - 1));
      REQUIRE(sc.obstacles.size() == 7);
      for (const Obstacle& ob : sc.obstacles) {
        REQUIRE(ob.mode == (c <= 3 ? ObstacleMode::consistent
                                   : ObstacleMode::random));
        REQUIRE(ob.radius >= 25.0);
        REQUIRE(ob.radius <= 45.0);
        REQUIRE(ob.center.minCoeff() >= 80.0);
        REQUIRE(ob.center.maxCoeff() <= 420.0);
        REQUIRE((ob.center - sc.start).norm() > ob.radius + 40.0);
        REQUIRE((ob.center - sc.goal).norm() > ob.radius + 40.0);
        REQUIRE(ob.velocity.norm() >= 4.0);
        REQUIRE(ob.velocity.norm() <= 9.0);
      }
      REQUIRE(to_json(make_scenario(c, seed)).dump() ==
              to_json(sc).dump());
    }
  }
  REQUIRE(to_json(make_scenario(1, 1)).dump() !=
          to_json(make_scenario(1, 2)).dump());
  REQUIRE_THROWS_AS(make_scenario(0, 1), FormatError);
  REQUIRE_THROWS_AS(make_scenario(7, 1), FormatError);
}

TEST_CASE("segment-circle intersection handles interior and clamped cases") {
  Vector2d p(0, 0), q(10, 0);
  REQUIRE(segment_hits_circle(p, q, {5, 1}, 2.0));
  REQUIRE_FALSE(segment_hits_circle(p, q, {5, 3}, 2.0));
  REQUIRE(segment_hits_circle(p, q, {5, 3}, 3.0));  // tangent counts

  // Closest point clamps to an endpoint.
  REQUIRE_FALSE(segment_hits_circle({0, 0}, {1, 0}, {5, 0}, 3.9));
  REQUIRE(segment_hits_circle({0, 0}, {1, 0}, {5, 0}, 4.0));

  // Degenerate segment is a point test.
  REQUIRE(segment_hits_circle({0, 0}, {0, 0}, {0.5, 0}, 0.6));
  REQUIRE_FALSE(segment_hits_circle({0, 0}, {0, 0}, {0.5, 0}, 0.4));
}

TEST_CASE("path cost is length plus one penalty per conflicted segment") {
  const double penalty = 10.0 * 500.0 * std::sqrt(2.0);
  std::vector<Obstacle> none;

  // Two 3-4-5 legs, no obstacles.
  VectorXd wp(2);
  wp << 3.0, 4.0;
  REQUIRE(path_fitness(wp, {0, 0}, {6, 8}, none, 500.0) ==
          Catch::Approx(10.0).margin(1e-12));

  // Straight segment with a clear obstacle.
  VectorXd empty(0);
  Obstacle ob;
  ob.center = {5, 2};
  ob.radius = 1.0;
  ob.velocity = {0, 0};
  REQUIRE(path_fitness(empty, {0, 0}, {10, 0}, {ob}, 500.0) ==
          Catch::Approx(10.0).margin(1e-12));

  // Blocking the segment now costs exactly one penalty unit.
  ob.center = {5, 1};
  ob.radius = 2.0;
  REQUIRE(path_fitness(empty, {0, 0}, {10, 0}, {ob}, 500.0) ==
          Catch::Approx(10.0 + penalty).margin(1e-9));

  // Clear now but the predicted position blocks: same single penalty.
  ob.center = {5, 5};
  ob.velocity = {0, -3};
  REQUIRE(path_fitness(empty, {0, 0}, {10, 0}, {ob}, 500.0) ==
          Catch::Approx(10.0 + penalty).margin(1e-9));

  // Hit both now and predicted: still counted once for that segment.
  ob.center = {5, 0};
  ob.velocity = {0, 0};
  REQUIRE(path_fitness(empty, {0, 0}, {10, 0}, {ob}, 500.0) ==
          Catch::Approx(10.0 + penalty).margin(1e-9));

  // A waypoint inside the disc makes both legs conflict.
  VectorXd through(2);
  through << 5.0, 0.0;
  REQUIRE(path_fitness(through, {0, 0}, {10, 0}, {ob}, 500.0) ==
          Catch::Approx(10.0 + 2.0 * penalty).margin(1e-9));
}

TEST_CASE("the vehicle walks a fixed arc length along the polyline") {
  VectorXd none(0);
  Vector2d pos = walk_polyline({0, 0}, none, {100, 0}, 10.0);
  REQUIRE(pos(0) == Catch::Approx(10.0));
  REQUIRE(pos(1) == 0.0);

  VectorXd corner(2);
  corner << 6.0, 0.0;
  pos = walk_polyline({0, 0}, corner, {6, 100}, 10.0);
  REQUIRE(pos(0) == Catch::Approx(6.0));
  REQUIRE(pos(1) == Catch::Approx(4.0));

  // Path shorter than the step ends at the goal.
  VectorXd near(2);
  near << 1.0, 0.0;
  pos = walk_polyline({0, 0}, near, {2, 0}, 10.0);
  REQUIRE(pos(0) == Catch::Approx(2.0));

  // Landing exactly on a vertex.
  VectorXd vertex(2);
  vertex << 10.0, 0.0;
  pos = walk_polyline({0, 0}, vertex, {20, 0}, 10.0);
  REQUIRE(pos(0) == Catch::Approx(10.0).margin(1e-12));
}

TEST_CASE("frame objective enforces its budget and tracks the frame best") {
  Scenario sc = plain_scenario(2, 5);
  FrameObjective obj(sc, sc.start);
  REQUIRE_FALSE(obj.has_best());
  REQUIRE(obj.fe_max() == 5);
  REQUIRE(obj.bounds().dim() == sc.genome_dim());
  REQUIRE(obj.bounds().lower(0) == 0.0);
  REQUIRE(obj.bounds().upper(0) == sc.arena);

  Rng rng(3);
  double best = std::numeric_limits<double>::infinity();
  VectorXd best_x;
  for (int i = 0; i < 5; ++i) {
    VectorXd x(2);
    x << rng.uniform(0.0, 500.0), rng.uniform(0.0, 500.0);
    double f = obj.evaluate(x);
    REQUIRE(f == path_fitness(x, sc.start, sc.goal, sc.obstacles, sc.arena));
    if (f < best) {
      best = f;
      best_x = x;
    }
  }
  REQUIRE(obj.fe_used() == 5);
  REQUIRE(obj.remaining() == 0);
  REQUIRE(obj.best_f() == best);
  REQUIRE((obj.best_x().array() == best_x.array()).all());
  REQUIRE_THROWS_AS(obj.evaluate(best_x), BudgetError);
}

TEST_CASE("obstacle advancement reflects at walls and preserves random speed") {
  Scenario sc;
  Obstacle ob;
  ob.center = {100.0, 100.0};
  ob.velocity = {3.0, -4.0};
  ob.radius = 30.0;
  ob.mode = ObstacleMode::consistent;
  sc.obstacles = {ob};

  Rng rng(1);
  advance_obstacles(sc, rng);
  REQUIRE(sc.obstacles[0].center(0) == Catch::Approx(103.0));
  REQUIRE(sc.obstacles[0].center(1) == Catch::Approx(96.0));
  REQUIRE(sc.obstacles[0].velocity(0) == 3.0);

  // Push into the right wall: position mirrors, velocity flips.
  sc.obstacles[0].center = {sc.arena - 30.0 - 1.0, 200.0};
  sc.obstacles[0].velocity = {5.0, 0.0};
  advance_obstacles(sc, rng);
  REQUIRE(sc.obstacles[0].center(0) ==
          Catch::Approx(2.0 * (sc.arena - 30.0) - (sc.arena - 30.0 + 4.0)));
  REQUIRE(sc.obstacles[0].velocity(0) == -5.0);

  // Random mode keeps the speed while redrawing the heading.
  sc.obstacles[0].mode = ObstacleMode::random;
  sc.obstacles[0].center = {250.0, 250.0};
  sc.obstacles[0].velocity = {5.0, 0.0};
  Vector2d before = sc.obstacles[0].center;
  advance_obstacles(sc, rng);
  REQUIRE(sc.obstacles[0].velocity.norm() == Catch::Approx(5.0).margin(1e-12));
  REQUIRE((sc.obstacles[0].center - before).norm() ==
          Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("every frame spends its evaluation budget exactly") {
  Scenario sc = plain_scenario(2, 60);
  sc.seed = 4;
  ppo::ControlConfig cc;
  EpisodeState es(sc, 11);
  for (int frame = 0; frame < 5; ++frame) {
    Vector2d before = es.vehicle;
    long fe = 0;
    double best_f = 0.0;
    step_frame(es, nullptr, cc, 5, ppo::kFixedCoeffs, &best_f, &fe);
    REQUIRE(fe == 60);
    REQUIRE(best_f > 0.0);
    REQUIRE((es.vehicle - before).norm() <= kVehicleStep + 1e-9);
  }
}

TEST_CASE("an empty arena shrinks the goal distance every frame") {
  ppo::ControlConfig cc;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario sc = plain_scenario(4, 1000);
    sc.seed = seed;
    EpisodeState es(sc, seed);
    double dist = (es.vehicle - sc.goal).norm();
    for (int frame = 0; frame < 10; ++frame) {
      step_frame(es, nullptr, cc, 10);
      double next = (es.vehicle - sc.goal).norm();
      REQUIRE(next < dist);
      dist = next;
    }
  }
}

TEST_CASE("an empty arena episode reaches the goal by a straight march") {
  Scenario sc = plain_scenario(2, 150);
  sc.seed = 21;
  ppo::ControlConfig cc;
  std::vector<FrameTraceRow> trace;
  EpisodeResult res = run_episode(sc, nullptr, cc, 6, 7, &trace);

  REQUIRE(res.success);
  REQUIRE_FALSE(res.collided);
  REQUIRE(res.d_target <= sc.goal_radius);
  // Straight-line distance is about 622; 25 of it is forgiven by the goal
  // radius and each frame covers at most 10.
  REQUIRE(res.t_step >= 59);
  REQUIRE(res.t_step <= 140);
  REQUIRE(res.total_fe == static_cast<long>(res.t_step) * sc.fe_per_frame);
  REQUIRE(static_cast<int>(trace.size()) == res.t_step);
  for (const auto& row : trace) REQUIRE(row.best_f >= 0.0);

  EpisodeResult again = run_episode(sc, nullptr, cc, 6, 7);
  REQUIRE(again.success == res.success);
  REQUIRE(again.t_step == res.t_step);
  REQUIRE(again.d_target == res.d_target);

  Scenario at_goal = sc;
  at_goal.start = at_goal.goal;
  EpisodeResult trivial = run_episode(at_goal, nullptr, cc, 6, 7);
  REQUIRE(trivial.success);
  REQUIRE(trivial.t_step == 0);
  REQUIRE(trivial.total_fe == 0);
}

TEST_CASE("episode aggregation averages outcomes") {
  EpisodeResult win;
  win.success = true;
  win.d_target = 10.0;
  win.t_step = 50;
  EpisodeResult loss;
  loss.success = false;
  loss.d_target = 200.0;
  loss.t_step = 500;
  Aggregate a = aggregate({win, loss});
  REQUIRE(a.sr == 0.5);
  REQUIRE(a.mean_d_target == Catch::Approx(105.0));
  REQUIRE(a.mean_t_step == Catch::Approx(275.0));
  REQUIRE_THROWS_AS(aggregate({}), FormatError);
}

TEST_CASE("scenario json round trips") {
  Scenario sc = make_scenario(4, 9);
  nlohmann::json j = to_json(sc);
  REQUIRE(j.at("obstacles")[0].at("mode") == "Random");
  Scenario back = scenario_from_json(j);
  REQUIRE(to_json(back).dump() == j.dump());

  Scenario c1 = make_scenario(1, 9);
  REQUIRE(to_json(c1).at("obstacles")[0].at("mode") == "Consistent");

  nlohmann::json broken = j;
  broken.erase("goal_radius");
  REQUIRE_THROWS_AS(scenario_from_json(broken), FormatError);
}
