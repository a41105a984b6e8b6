#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metado/harness.hpp"
#include "metado/navsim.hpp"

namespace {

using namespace metado;

struct CliState {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  harness::RunConfig cfg;
  std::string command;

  void resolve() {
    if (!config_path.empty()) cfg = harness::load_config(config_path);
    if (const char* env = std::getenv("METADO_OUT")) cfg.out_dir = env;
    if (seed) cfg.seed = *seed;
    if (out) cfg.out_dir = *out;
    cfg.validate();
    harness::ensure_dir(cfg.out_dir);
  }

  std::string path(const std::string& name) const {
    return cfg.out_dir + "/" + name;
  }
};

dynabench::SuiteSpec suite_spec(const harness::RunConfig& cfg) {
  dynabench::SuiteSpec spec;
  spec.seed = cfg.seed;
  spec.dim = cfg.dim;
  spec.fe_max = cfg.fe_max;
  spec.n_train = cfg.n_train;
  spec.n_test = cfg.n_test;
  return spec;
}

dynabench::Suite obtain_suite(const CliState& st, const std::string& path) {
  if (!path.empty()) return dynabench::load_suite(path);
  return dynabench::generate_suite(suite_spec(st.cfg));
}

std::string canonical_variant(std::string v) {
  if (v == "action_c") return "action_c_only";
  if (v == "action_w") return "action_w_only";
  return v;
}

int run_gen(CliState& st, const std::string& suite_out) {
  dynabench::Suite suite = dynabench::generate_suite(suite_spec(st.cfg));
  std::string path = suite_out.empty() ? st.path("suite.json") : suite_out;
  dynabench::save_suite(suite, path);
  harness::write_manifest(st.path("manifest_gen.json"), st.cfg, st.command);
  std::cout << "wrote " << path << " (" << suite.train.size() << " train, "
            << suite.test.size() << " test)\n";
  return 0;
}

int run_train(CliState& st, const std::string& suite_path,
              const std::string& variant) {
  harness::RunConfig cfg = harness::with_variant(st.cfg, variant);
  dynabench::Suite suite = obtain_suite(st, suite_path);
  policy::PolicyParams params = harness::make_policy(cfg);
  ppo::MetaTrainResult res =
      ppo::meta_train(params, suite.train, harness::train_config(cfg),
                      harness::control_config(cfg), cfg.n_swarm, cfg.seed);
  std::string tag = variant == "full" ? "" : "_" + variant;
  harness::save_checkpoint(params, st.path("checkpoint" + tag + ".mdo1"));
  harness::write_curve_csv(st.path("curve" + tag + ".csv"), res.curve);
  harness::write_manifest(st.path("manifest_train" + tag + ".json"), cfg,
                          st.command);
  double last = res.curve.empty() ? 0.0 : res.curve.back().ep_return;
  std::cout << "trained " << variant << ": " << res.curve.size()
            << " episodes, final return " << last << "\n";
  return 0;
}

int run_eval(CliState& st, const std::string& suite_path,
             const std::string& checkpoint, const std::string& baseline,
             std::string algo, bool trace) {
  if (checkpoint.empty() == baseline.empty())
    throw FormatError("exactly one of --checkpoint / --baseline required");
  dynabench::Suite suite = obtain_suite(st, suite_path);
  ppo::ControlConfig cc = harness::control_config(st.cfg);

  std::vector<harness::ResultRow> rows;
  if (!baseline.empty()) {
    if (algo.empty()) algo = baseline;
    if (baseline == "fixed-pso") {
      rows = harness::eval_algorithm(algo, nullptr, suite.test, cc,
                                     st.cfg.n_swarm, st.cfg.seed, st.cfg.runs);
    } else if (baseline == "random") {
      rows = harness::eval_random(algo, suite.test, st.cfg.seed, st.cfg.runs);
    } else {
      throw FormatError("unknown baseline: " + baseline +
                        " (expected fixed-pso or random)");
    }
  } else {
    policy::PolicyParams params = harness::load_checkpoint(checkpoint);
    int want = ppo::action_dim(cc.action_mode);
    if (params.cfg.action_dim != want)
      throw FormatError("checkpoint action width " +
                        std::to_string(params.cfg.action_dim) +
                        " does not match configured mode (" +
                        std::to_string(want) + ")");
    if (algo.empty()) algo = "meta";
    for (const dynabench::DynamicInstance& inst : suite.test) {
      for (int run = 0; run < st.cfg.runs; ++run) {
        std::uint64_t run_seed =
            Rng::derive(st.cfg.seed, "run", static_cast<std::uint64_t>(run));
        ppo::EvalResult er =
            ppo::evaluate_policy(&params, inst, cc, st.cfg.n_swarm, run_seed,
                                 ppo::kFixedCoeffs, trace && run == 0);
        if (trace && run == 0)
          harness::write_trace_csv(
              st.path("trace_" + algo + "_" + inst.id + ".csv"), er.trace);
        harness::ResultRow row;
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
  }
  harness::assign_ranks(rows);
  std::string out = st.path("results_" + algo + ".csv");
  harness::write_results_csv(out, rows);
  harness::write_manifest(st.path("manifest_eval_" + algo + ".json"), st.cfg,
                          st.command);
  double mean_rp = 0.0;
  for (const auto& r : rows) mean_rp += r.rp;
  std::cout << "wrote " << out << " (" << rows.size() << " rows, mean rp "
            << mean_rp / rows.size() << ")\n";
  return 0;
}

int run_ablate(CliState& st, const std::string& suite_path,
               std::vector<std::string> variants) {
  if (variants.empty()) variants = harness::variant_names();
  dynabench::Suite suite = obtain_suite(st, suite_path);
  std::vector<harness::ResultRow> all_rows;
  for (std::string v : variants) {
    v = canonical_variant(v);
    harness::RunConfig cfg = harness::with_variant(st.cfg, v);
    ppo::ControlConfig cc = harness::control_config(cfg);
    policy::PolicyParams params = harness::make_policy(cfg);
    ppo::MetaTrainResult res =
        ppo::meta_train(params, suite.train, harness::train_config(cfg), cc,
                        cfg.n_swarm, cfg.seed);
    harness::save_checkpoint(params, st.path("checkpoint_" + v + ".mdo1"));
    harness::write_curve_csv(st.path("curve_" + v + ".csv"), res.curve);
    std::vector<harness::ResultRow> rows = harness::eval_algorithm(
        v, &params, suite.test, cc, cfg.n_swarm, cfg.seed, cfg.runs);
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    std::cout << "variant " << v << " done\n";
  }
  harness::assign_ranks(all_rows);
  harness::write_results_csv(st.path("results_ablate.csv"), all_rows);
  harness::write_rank_csv(st.path("rank_ablate.csv"),
                          harness::rank_report(all_rows));
  harness::write_manifest(st.path("manifest_ablate.json"), st.cfg, st.command);
  std::cout << "wrote " << st.path("results_ablate.csv") << "\n";
  return 0;
}

int run_navsim(CliState& st, const std::string& checkpoint,
               const std::string& scenario_path, bool trace) {
  ppo::ControlConfig cc = harness::control_config(st.cfg);
  std::optional<policy::PolicyParams> params;
  if (!checkpoint.empty()) {
    params = harness::load_checkpoint(checkpoint);
    int want = ppo::action_dim(cc.action_mode);
    if (params->cfg.action_dim != want)
      throw FormatError("checkpoint action width mismatch");
  }
  std::string label = params ? "meta" : "fixed-pso";

  std::vector<navsim::Scenario> scenarios;
  if (!scenario_path.empty()) {
    std::ifstream is(scenario_path);
    if (!is) throw MissingFileError(scenario_path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad scenario: ") + e.what());
    }
    scenarios.push_back(navsim::scenario_from_json(j));
  } else {
    for (int c = 1; c <= 6; ++c)
      scenarios.push_back(navsim::make_scenario(c, st.cfg.seed));
  }

  std::ofstream os(st.path("navsim_" + label + ".csv"));
  os << "case_id,episode,seed,success,collided,d_target,t_step,total_fe\n";
  std::ofstream sum(st.path("navsim_summary_" + label + ".csv"));
  sum << "case_id,sr,mean_d_target,mean_t_step\n";
  for (const navsim::Scenario& sc : scenarios) {
    std::ofstream sj(st.path("scenario_case" + std::to_string(sc.case_id) +
                             ".json"));
    sj << navsim::to_json(sc).dump(2) << "\n";
    std::vector<navsim::EpisodeResult> eps;
    for (int ep = 0; ep < st.cfg.episodes; ++ep) {
      std::uint64_t ep_seed =
          Rng::derive(st.cfg.seed, "episode",
                      static_cast<std::uint64_t>(sc.case_id),
                      static_cast<std::uint64_t>(ep));
      std::vector<navsim::FrameTraceRow> frames;
      navsim::EpisodeResult r = navsim::run_episode(
          sc, params ? &*params : nullptr, cc, st.cfg.n_swarm, ep_seed,
          trace ? &frames : nullptr);
      if (trace) {
        std::ofstream tr(st.path("navtrace_" + label + "_case" +
                                 std::to_string(sc.case_id) + "_ep" +
                                 std::to_string(ep) + ".csv"));
        tr << "frame,x,y,best_f\n";
        for (const auto& fr : frames)
          tr << fr.frame << ',' << fr.x << ',' << fr.y << ',' << fr.best_f
             << '\n';
      }
      os << sc.case_id << ',' << ep << ',' << ep_seed << ',' << r.success
         << ',' << r.collided << ',' << r.d_target << ',' << r.t_step << ','
         << r.total_fe << '\n';
      eps.push_back(r);
    }
    navsim::Aggregate a = navsim::aggregate(eps);
    sum << sc.case_id << ',' << a.sr << ',' << a.mean_d_target << ','
        << a.mean_t_step << '\n';
    std::cout << "case " << sc.case_id << " " << label << ": SR " << a.sr
              << ", D_target " << a.mean_d_target << ", T_step "
              << a.mean_t_step << "\n";
  }
  harness::write_manifest(st.path("manifest_navsim_" + label + ".json"),
                          st.cfg, st.command);
  return 0;
}

int run_report(CliState& st, const std::vector<std::string>& inputs) {
  std::vector<harness::ResultRow> rows;
  for (const std::string& p : inputs) {
    std::vector<harness::ResultRow> part = harness::read_results_csv(p);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  harness::RankTable t = harness::rank_report(rows);
  harness::write_rank_csv(st.path("rank_table.csv"), t);
  std::cout << "algorithm,avg_rank\n";
  for (std::size_t k = 0; k < t.algorithms.size(); ++k)
    std::cout << t.algorithms[k] << ','
              << t.avg_rank(static_cast<Eigen::Index>(k)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-controlled niching PSO for dynamic optimization"};
  app.require_subcommand(1);

  CliState st;
  for (int i = 0; i < argc; ++i) {
    if (i) st.command += ' ';
    st.command += argv[i];
  }

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", st.config_path, "config JSON path");
    sub->add_option("--seed", st.seed, "override config seed");
    sub->add_option("--out", st.out, "override output directory");
  };

  std::string suite_path, suite_out, checkpoint, baseline, algo, variant =
      "full";
  std::string scenario_path;
  std::vector<std::string> variants, report_inputs;
  bool trace = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a benchmark suite");
  add_common(gen);
  gen->add_option("--suite-out", suite_out, "suite file path");

  CLI::App* train = app.add_subcommand("train", "meta-train a policy");
  add_common(train);
  train->add_option("--suite", suite_path, "suite JSON (generated if absent)");
  train->add_option("--variant", variant, "ablation variant or 'full'");

  CLI::App* eval = app.add_subcommand("eval", "evaluate on test instances");
  add_common(eval);
  eval->add_option("--suite", suite_path, "suite JSON (generated if absent)");
  eval->add_option("--checkpoint", checkpoint, "MDO1 checkpoint path");
  eval->add_option("--baseline", baseline, "fixed-pso or random");
  eval->add_option("--algorithm", algo, "label for result rows");
  eval->add_flag("--trace", trace, "dump per-generation trace of run 0");

  CLI::App* ablate = app.add_subcommand("ablate", "train+eval variants");
  add_common(ablate);
  ablate->add_option("--suite", suite_path, "suite JSON (generated if absent)");
  ablate->add_option("--variant", variants,
                     "variant names (default: all six)");

  CLI::App* nav = app.add_subcommand("navsim", "moving-obstacle navigation");
  add_common(nav);
  nav->add_option("--checkpoint", checkpoint,
                  "MDO1 checkpoint (fixed-pso if absent)");
  nav->add_option("--scenario", scenario_path, "run one scenario JSON");
  nav->add_flag("--trace", trace, "dump per-frame vehicle traces");

  CLI::App* report = app.add_subcommand("report", "aggregate result CSVs");
  add_common(report);
  report->add_option("--results", report_inputs, "result CSV paths")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    st.resolve();
    if (gen->parsed()) return run_gen(st, suite_out);
    if (train->parsed())
      return run_train(st, suite_path, canonical_variant(variant));
    if (eval->parsed())
      return run_eval(st, suite_path, checkpoint, baseline, algo, trace);
    if (ablate->parsed()) return run_ablate(st, suite_path, variants);
    if (nav->parsed()) return run_navsim(st, checkpoint, scenario_path, trace);
    if (report->parsed()) return run_report(st, report_inputs);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const MissingFileError& e) {
    std::cerr << "missing file: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
}
