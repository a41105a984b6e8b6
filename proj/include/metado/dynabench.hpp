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
#include "metado/rng.hpp"

// Non-stationary benchmark: scalar minimization instances whose landscape
// switches between shifted base functions on a fixed schedule while additive
// Gaussian noise grows over the evaluation budget.
namespace metado::dynabench {

enum class Fn {
  sphere,
  ackley,
  rastrigin,
  griewank,
  rosenbrock,
  schwefel222,
  levy,
  happycat,
};

inline constexpr int kFnCount = 8;

inline const char* fn_name(Fn f) {
  switch (f) {
    case Fn::sphere: return "sphere";
    case Fn::ackley: return "ackley";
    case Fn::rastrigin: return "rastrigin";
    case Fn::griewank: return "griewank";
    case Fn::rosenbrock: return "rosenbrock";
    case Fn::schwefel222: return "schwefel222";
    case Fn::levy: return "levy";
    case Fn::happycat: return "happycat";
  }
  throw FormatError("unknown function id");
}

inline Fn fn_from_name(const std::string& name) {
  for (int i = 0; i < kFnCount; ++i) {
    Fn f = static_cast<Fn>(i);
    if (name == fn_name(f)) return f;
  }
  throw FormatError("unknown function name: " + name);
}

// All functions are evaluated raw on the shared [-5, 5] box; each has its
// minimum 0 at the origin of the shifted frame.
inline constexpr double kBoxHalfRange = 5.0;

// Every function is non-negative with minimum exactly 0 at y = 0 (internal
// offsets relocate optima as needed).
inline double raw_eval(Fn f, const Eigen::VectorXd& y) {
  const int d = static_cast<int>(y.size());
  switch (f) {
    case Fn::sphere:
      return y.squaredNorm();
    case Fn::ackley: {
      double sq = std::sqrt(y.squaredNorm() / d);
      double cs = (2.0 * M_PI * y.array()).cos().mean();
      return -20.0 * std::exp(-0.2 * sq) - std::exp(cs) + 20.0 + std::exp(1.0);
    }
    case Fn::rastrigin:
      return (y.array().square() - 10.0 * (2.0 * M_PI * y.array()).cos() + 10.0)
          .sum();
    case Fn::griewank: {
      double prod = 1.0;
      for (int i = 0; i < d; ++i) prod *= std::cos(y(i) / std::sqrt(i + 1.0));
      return y.squaredNorm() / 4000.0 - prod + 1.0;
    }
    case Fn::rosenbrock: {
      double s = 0.0;
      for (int i = 0; i + 1 < d; ++i) {
        double a = y(i) + 1.0;
        double b = y(i + 1) + 1.0;
        double t = b - a * a;
        s += 100.0 * t * t + (a - 1.0) * (a - 1.0);
      }
      return s;
    }
    case Fn::schwefel222:
      return y.array().abs().sum() + y.array().abs().prod();
    case Fn::levy: {
      auto w = [&](int i) { return 1.0 + y(i) / 4.0; };
      double s0 = std::sin(M_PI * w(0));
      double s = s0 * s0;
      for (int i = 0; i + 1 < d; ++i) {
        double wi = w(i);
        double sw = std::sin(M_PI * wi + 1.0);
        s += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * sw * sw);
      }
      double wd = w(d - 1);
      double sd = std::sin(2.0 * M_PI * wd);
      s += (wd - 1.0) * (wd - 1.0) * (1.0 + sd * sd);
      return s;
    }
    case Fn::happycat: {
      Eigen::VectorXd u = y.array() - 1.0;
      double nsq = u.squaredNorm();
      double diff = nsq - d;
      return std::pow(diff * diff, 0.125) +
             (0.5 * nsq + u.sum()) / d + 0.5;
    }
  }
  throw FormatError("unknown function id");
}

// Order-of-magnitude of raw values mid-box; anchors relative noise levels.
inline double magnitude_estimate(Fn f, int dim) {
  Eigen::VectorXd mid = Eigen::VectorXd::Constant(dim, 0.5 * kBoxHalfRange);
  return raw_eval(f, mid);
}

struct BaseFunction {
  Fn id = Fn::sphere;
  Eigen::VectorXd shift;
  // Optional convex blend with a second function (training instances only):
  // value = blend_weight * f_id + (1 - blend_weight) * f_blend, same shift.
  Fn blend_id = Fn::sphere;
  double blend_weight = 1.0;
  double optimum_value = 0.0;

  bool blended() const { return blend_weight < 1.0; }

  double value(const Eigen::VectorXd& x) const {
    Eigen::VectorXd delta = x - shift;
    double main = raw_eval(id, delta);
    if (!blended()) return main;
    double other = raw_eval(blend_id, delta);
    return blend_weight * main + (1.0 - blend_weight) * other;
  }
};

struct SwitchSchedule {
  long period_fe = 1;
  std::vector<int> order{0};  // cyclic
};

struct NoiseSchedule {
  double sigma0 = 0.0;
  double growth = 0.0;

  double sigma(long fe, long fe_max) const {
    return sigma0 * (1.0 + growth * static_cast<double>(fe) / fe_max);
  }
};

enum class Category { pure_noise, landscape_switch, hybrid };

inline const char* category_name(Category c) {
  switch (c) {
    case Category::pure_noise: return "PureNoise";
    case Category::landscape_switch: return "LandscapeSwitch";
    case Category::hybrid: return "Hybrid";
  }
  throw FormatError("unknown category");
}

inline Category category_from_name(const std::string& name) {
  for (Category c : {Category::pure_noise, Category::landscape_switch,
                     Category::hybrid}) {
    if (name == category_name(c)) return c;
  }
  throw FormatError("unknown category name: " + name);
}

struct DynamicInstance {
  std::string id;
  Category category = Category::pure_noise;
  int dim = 10;
  long fe_max = 25000;
  Bounds box;
  std::vector<BaseFunction> sub_problems;
  SwitchSchedule sw;
  NoiseSchedule noise;
  std::uint64_t seed = 0;

  int active_index(long fe) const {
    if (fe < 0 || fe >= fe_max) throw BudgetError();
    const auto& ord = sw.order;
    return ord[static_cast<std::size_t>(fe / sw.period_fe) % ord.size()];
  }

  void validate() const {
    if (sub_problems.empty()) throw FormatError(id + ": no sub-problems");
    if (category == Category::pure_noise && sub_problems.size() != 1)
      throw FormatError(id + ": PureNoise needs exactly one sub-problem");
    if (category == Category::landscape_switch &&
        (noise.sigma0 != 0.0 || sub_problems.size() < 2))
      throw FormatError(id + ": LandscapeSwitch needs sigma0=0 and >=2 subs");
    if (category == Category::hybrid &&
        (noise.sigma0 <= 0.0 || sub_problems.size() < 2))
      throw FormatError(id + ": Hybrid needs sigma0>0 and >=2 subs");
    if (sw.period_fe < 1) throw FormatError(id + ": period_fe must be >= 1");
    for (int idx : sw.order)
      if (idx < 0 || idx >= static_cast<int>(sub_problems.size()))
        throw FormatError(id + ": switch order references missing sub-problem");
    for (const auto& sp : sub_problems) {
      if (sp.shift.size() != dim) throw FormatError(id + ": shift dim mismatch");
      for (int d = 0; d < dim; ++d)
        if (sp.shift(d) < box.lower(d) || sp.shift(d) > box.upper(d))
          throw FormatError(id + ": shifted optimum outside bounds");
    }
  }
};

// Per-run accounting for the offline error: each evaluation contributes the
// best observed-minus-optimum seen so far within the current environment
// epoch, clamped at 0 from below.
class EvaluationLedger {
 public:
  void record(int active_idx, double error_observed) {
    if (_fe_used == 0 || active_idx != _active) {
      _best = std::numeric_limits<double>::infinity();
      _active = active_idx;
    }
    _best = std::min(_best, error_observed);
    _error_sum += std::max(_best, 0.0);
    ++_fe_used;
  }

  double offline_error() const {
    if (_fe_used == 0) throw FormatError("offline error of an empty ledger");
    return _error_sum / _fe_used;
  }

  long fe_used() const { return _fe_used; }
  double error_sum() const { return _error_sum; }
  double best_so_far() const { return _best; }

 private:
  long _fe_used = 0;
  double _error_sum = 0.0;
  double _best = std::numeric_limits<double>::infinity();
  int _active = -1;
};

// Budgeted, noisy view of an instance; owns the ledger and the noise stream.
class Evaluator final : public Objective {
 public:
  Evaluator(const DynamicInstance& inst, Rng noise_rng)
      : _inst(&inst), _rng(noise_rng) {}

  // Noise stream derived from (run seed, "noise", instance seed).
  static Evaluator seeded(const DynamicInstance& inst, std::uint64_t run_seed) {
    return Evaluator(inst, Rng::stream(run_seed, "noise", inst.seed));
  }

  double evaluate(const Eigen::VectorXd& x) override {
    if (_fe >= _inst->fe_max) throw BudgetError();
    int idx = _inst->active_index(_fe);
    const BaseFunction& sub = _inst->sub_problems[idx];
    double obs = sub.value(x);
    double s = _inst->noise.sigma(_fe, _inst->fe_max);
    if (s > 0.0) obs += _rng.normal(0.0, s);
    _ledger.record(idx, obs - sub.optimum_value);
    ++_fe;
    return obs;
  }

  const Bounds& bounds() const override { return _inst->box; }
  long fe_used() const override { return _fe; }
  long fe_max() const override { return _inst->fe_max; }

  const EvaluationLedger& ledger() const { return _ledger; }
  const DynamicInstance& instance() const { return *_inst; }

 private:
  const DynamicInstance* _inst;
  Rng _rng;
  EvaluationLedger _ledger;
  long _fe = 0;
};

// Offline error of a pseudo-optimizer whose best-so-far in each environment
// epoch is the best of 100 uniform points sampled when the epoch begins.
inline double random_baseline(const DynamicInstance& inst, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "baseline", inst.seed);
  const int dim = inst.dim;
  double sum = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int last_idx = -1;
  Eigen::VectorXd x(dim);
  for (long fe = 0; fe < inst.fe_max; ++fe) {
    int idx = inst.active_index(fe);
    if (idx != last_idx) {
      const BaseFunction& sub = inst.sub_problems[idx];
      double s = inst.noise.sigma(fe, inst.fe_max);
      best = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 100; ++k) {
        for (int d = 0; d < dim; ++d)
          x(d) = rng.uniform(inst.box.lower(d), inst.box.upper(d));
        double obs = sub.value(x);
        if (s > 0.0) obs += rng.normal(0.0, s);
        best = std::min(best, obs - sub.optimum_value);
      }
      last_idx = idx;
    }
    sum += std::max(best, 0.0);
  }
  return sum / inst.fe_max;
}

inline double normalized_performance(double e_off, double e_rand) {
  if (e_rand <= 0.0)
    throw FormatError("degenerate instance: random baseline error is zero");
  return e_off / e_rand;
}

// ---------------------------------------------------------------------------
// Suite generation

struct SuiteSpec {
  std::uint64_t seed = 0;
  int dim = 10;
  long fe_max = 25000;
  int n_train = 64;
  int n_test = 32;
};

struct Suite {
  SuiteSpec spec;
  std::vector<DynamicInstance> train;
  std::vector<DynamicInstance> test;
};

namespace detail {

// Largest-remainder split of n into the canonical 14/10/8 proportions.
inline std::array<int, 3> category_split(int n) {
  const double p[3] = {14.0 / 32.0, 10.0 / 32.0, 8.0 / 32.0};
  std::array<int, 3> out{};
  double frac[3];
  int used = 0;
  for (int c = 0; c < 3; ++c) {
    double q = n * p[c];
    out[c] = static_cast<int>(std::floor(q));
    frac[c] = q - out[c];
    used += out[c];
  }
  for (int left = n - used; left > 0; --left) {
    int pick = 0;
    for (int c = 1; c < 3; ++c)
      if (frac[c] > frac[pick]) pick = c;
    ++out[pick];
    frac[pick] = -1.0;
  }
  return out;
}

inline DynamicInstance generate_instance(const SuiteSpec& spec,
                                         Category category,
                                         const std::string& id, bool train,
                                         std::uint64_t index) {
  Rng rng = Rng::stream(spec.seed, "instance", index, train ? 1 : 0);
  DynamicInstance inst;
  inst.id = id;
  inst.category = category;
  inst.dim = spec.dim;
  inst.fe_max = spec.fe_max;
  inst.box = Bounds::cube(spec.dim, -5.0, 5.0);
  inst.seed = Rng::derive(spec.seed, "instance-seed", index, train ? 1 : 0);

  int k = category == Category::pure_noise
              ? 1
              : 2 + static_cast<int>(rng.below(3));
  std::vector<int> fns(kFnCount);
  for (int i = 0; i < kFnCount; ++i) fns[i] = i;
  rng.shuffle(fns.begin(), fns.end());

  for (int j = 0; j < k; ++j) {
    BaseFunction sub;
    sub.id = static_cast<Fn>(fns[j]);
    sub.shift.resize(spec.dim);
    for (int d = 0; d < spec.dim; ++d) sub.shift(d) = rng.uniform(-2.5, 2.5);
    if (train && rng.uniform() < 0.5) {
      sub.blend_id = static_cast<Fn>(fns[(j + k) % kFnCount]);
      sub.blend_weight = rng.uniform(0.2, 0.8);
    }
    inst.sub_problems.push_back(std::move(sub));
  }

  if (train) {
    const long divisors[3] = {8, 10, 12};
    inst.sw.period_fe = spec.fe_max / divisors[rng.below(3)];
  } else {
    inst.sw.period_fe = spec.fe_max / 10;
  }
  inst.sw.period_fe = std::max<long>(inst.sw.period_fe, 1);
  inst.sw.order.resize(k);
  for (int j = 0; j < k; ++j) inst.sw.order[j] = j;
  rng.shuffle(inst.sw.order.begin(), inst.sw.order.end());

  if (category != Category::landscape_switch) {
    double rel = rng.loguniform(1e-4, 1e-2);
    inst.noise.sigma0 =
        rel * magnitude_estimate(inst.sub_problems[0].id, spec.dim);
    inst.noise.growth = rng.uniform(0.5, 3.0);
  }

  inst.validate();
  return inst;
}

}  // namespace detail

inline Suite generate_suite(const SuiteSpec& spec) {
  Suite suite;
  suite.spec = spec;
  const Category cats[3] = {Category::pure_noise, Category::landscape_switch,
                            Category::hybrid};
  std::uint64_t index = 0;

  auto split_test = detail::category_split(spec.n_test);
  int test_no = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < split_test[c]; ++i) {
      std::string id = "f" + std::to_string(++test_no);
      suite.test.push_back(
          detail::generate_instance(spec, cats[c], id, false, index++));
    }

  auto split_train = detail::category_split(spec.n_train);
  int train_no = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < split_train[c]; ++i) {
      ++train_no;
      std::string id =
          (train_no < 10 ? "train0" : "train") + std::to_string(train_no);
      suite.train.push_back(
          detail::generate_instance(spec, cats[c], id, true, index++));
    }
  return suite;
}

inline Suite make_suite(std::uint64_t seed) {
  SuiteSpec spec;
  spec.seed = seed;
  return generate_suite(spec);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const DynamicInstance& inst) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& sp : inst.sub_problems) {
    nlohmann::json j{{"fn", fn_name(sp.id)},
                     {"shift", std::vector<double>(
                                   sp.shift.data(),
                                   sp.shift.data() + sp.shift.size())}};
    if (sp.blended()) {
      j["blend_fn"] = fn_name(sp.blend_id);
      j["blend_weight"] = sp.blend_weight;
    }
    subs.push_back(std::move(j));
  }
  return nlohmann::json{
      {"id", inst.id},
      {"category", category_name(inst.category)},
      {"dim", inst.dim},
      {"fe_max", inst.fe_max},
      {"seed", inst.seed},
      {"bounds",
       {{"lower", inst.box.lower(0)}, {"upper", inst.box.upper(0)}}},
      {"sub_problems", std::move(subs)},
      {"switch", {{"period_fe", inst.sw.period_fe}, {"order", inst.sw.order}}},
      {"noise",
       {{"sigma0", inst.noise.sigma0}, {"growth", inst.noise.growth}}}};
}

inline DynamicInstance instance_from_json(const nlohmann::json& j) {
  DynamicInstance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.category = category_from_name(j.at("category").get<std::string>());
    inst.dim = j.at("dim").get<int>();
    inst.fe_max = j.at("fe_max").get<long>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.box = Bounds::cube(inst.dim, j.at("bounds").at("lower").get<double>(),
                            j.at("bounds").at("upper").get<double>());
    for (const auto& js : j.at("sub_problems")) {
      BaseFunction sp;
      sp.id = fn_from_name(js.at("fn").get<std::string>());
      auto shift = js.at("shift").get<std::vector<double>>();
      sp.shift = Eigen::Map<Eigen::VectorXd>(shift.data(), shift.size());
      if (js.contains("blend_fn")) {
        sp.blend_id = fn_from_name(js.at("blend_fn").get<std::string>());
        sp.blend_weight = js.at("blend_weight").get<double>();
      }
      inst.sub_problems.push_back(std::move(sp));
    }
    inst.sw.period_fe = j.at("switch").at("period_fe").get<long>();
    inst.sw.order = j.at("switch").at("order").get<std::vector<int>>();
    inst.noise.sigma0 = j.at("noise").at("sigma0").get<double>();
    inst.noise.growth = j.at("noise").at("growth").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad instance json: ") + e.what());
  }
  inst.validate();
  return inst;
}

inline nlohmann::json to_json(const Suite& suite) {
  nlohmann::json train = nlohmann::json::array();
  nlohmann::json test = nlohmann::json::array();
  for (const auto& inst : suite.train) train.push_back(to_json(inst));
  for (const auto& inst : suite.test) test.push_back(to_json(inst));
  return nlohmann::json{{"spec",
                         {{"seed", suite.spec.seed},
                          {"dim", suite.spec.dim},
                          {"fe_max", suite.spec.fe_max},
                          {"n_train", suite.spec.n_train},
                          {"n_test", suite.spec.n_test}}},
                        {"train", std::move(train)},
                        {"test", std::move(test)}};
}

inline Suite suite_from_json(const nlohmann::json& j) {
  Suite suite;
  try {
    const auto& s = j.at("spec");
    suite.spec.seed = s.at("seed").get<std::uint64_t>();
    suite.spec.dim = s.at("dim").get<int>();
    suite.spec.fe_max = s.at("fe_max").get<long>();
    suite.spec.n_train = s.at("n_train").get<int>();
    suite.spec.n_test = s.at("n_test").get<int>();
    for (const auto& ji : j.at("train"))
      suite.train.push_back(instance_from_json(ji));
    for (const auto& ji : j.at("test"))
      suite.test.push_back(instance_from_json(ji));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad suite json: ") + e.what());
  }
  return suite;
}

inline void save_suite(const Suite& suite, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingFileError(path);
  out << to_json(suite).dump(2) << "\n";
}

inline Suite load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return suite_from_json(j);
}

}  // namespace metado::dynabench
