#include "reachmon/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "reachmon/experiment.hpp"

namespace reachmon {

namespace fs = std::filesystem;

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) throw ValidationError(std::string(what) + ": bad entry '" + item + "'");
    out.push_back(static_cast<T>(v));
  }
  return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& scenario,
                           std::ostream& err) {
  if (flag) return *flag;
  if (scenario) return *scenario;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  err << "seed: " << seed << '\n';
  return seed;
}

void write_text(const fs::path& path, const std::string& text) { io::write_file(path, text); }

Calibration calibration_for(const io::Scenario& sc, const std::optional<std::string>& cert_path, std::uint64_t seed) {
  if (!cert_path) return calibrate_scenario(sc, seed);
  Calibration cal;
  cal.est = calibrate_estimator(sc.model.model);
  cal.det = make_detector(sc.monitor.beta, static_cast<int>(sc.model.model.m()));
  cal.cert = io::load_certificate(*cert_path, sc.model);
  const std::string fp = io::estimator_fingerprint(cal.est.L, cal.est.sigma_r, cal.det.tau, cal.det.beta);
  if (fp != cal.cert->estimator_sha256) {
    throw CertificateError("certificate was computed for a different estimator or detector threshold");
  }
  return cal;
}

int run_calibrate(const std::string& model_path, double beta, const std::optional<double>& p, double delta_h,
                  const std::optional<std::uint64_t>& seed_flag, const std::string& out_path, long residual_steps,
                  std::ostream& out, std::ostream& err) {
  const io::LoadedModel lm = io::load_model(model_path);
  const LtiModel& model = lm.model;
  const std::uint64_t seed = resolve_seed(seed_flag, std::nullopt, err);
  const EstimatorConfig est = calibrate_estimator(model);
  const DetectorConfig det = make_detector(beta, static_cast<int>(model.m()));

  if (residual_steps > 0) {
    Controller idle;
    idle.gain = MatrixXd::Zero(model.l(), model.m());
    idle.reference = ReferenceSchedule(VectorXd::Zero(model.m()));
    idle.dt = model.dt();
    const SimTrace t = run_closed_loop(model, idle, est, det, AttackPlan{}, residual_steps, derive_seed(seed, 99));
    MatrixXd r(static_cast<Eigen::Index>(t.records.size()), model.m());
    for (std::size_t i = 0; i < t.records.size(); ++i) {
      r.row(static_cast<Eigen::Index>(i)) = (t.records[i].y_bar - t.records[i].y_hat).transpose();
    }
    const MatrixXd emp = empirical_residual_covariance(r);
    const double rel = (emp - est.sigma_r).norm() / est.sigma_r.norm();
    out << "residual covariance check: relative Frobenius difference " << io::format_double(rel) << " over "
        << t.records.size() << " steps\n";
  }

  CertificateOptions opts;
  opts.delta_h = delta_h;
  opts.p = p;
  opts.seed = seed;
  ReachCertificate cert = compute_certificate(model, est, det, opts);
  cert.model_sha256 = lm.sha256;
  cert.estimator_sha256 = io::estimator_fingerprint(est.L, est.sigma_r, det.tau, det.beta);
  write_text(out_path, io::save_certificate(cert));
  std::size_t feasible = 0;
  for (const GridPoint& g : cert.grid) feasible += g.feasible ? 1 : 0;
  out << "b* = " << io::format_double(cert.b_star) << ", objective = " << io::format_double(cert.objective)
      << ", w_bar = " << io::format_double(cert.w_bar) << ", feasible grid points " << feasible << "/"
      << cert.grid.size() << "\n"
      << "wrote " << out_path << '\n';
  return 0;
}

int run_simulate(const std::string& scenario_path, const std::optional<std::uint64_t>& seed_flag,
                 const std::optional<long>& horizon, const std::string& out_path, std::ostream& out,
                 std::ostream& err) {
  const io::Scenario sc = io::load_scenario(scenario_path);
  const std::uint64_t seed = resolve_seed(seed_flag, sc.seed, err);
  const LtiModel& model = sc.model.model;
  const EstimatorConfig est = calibrate_estimator(model);
  const DetectorConfig det = make_detector(sc.monitor.beta, static_cast<int>(model.m()));
  const SimTrace trace =
      run_closed_loop(model, sc.controller, est, det, sc.attack, horizon.value_or(sc.horizon), seed, sc.x0);
  std::ostringstream os;
  io::write_trace_csv(os, trace);
  write_text(out_path, os.str());
  std::size_t alarms = 0;
  for (const StepRecord& r : trace.records) alarms += r.alarm ? 1 : 0;
  out << "wrote " << out_path << " (" << trace.records.size() << " steps, " << alarms << " alarms)\n";
  return 0;
}

int run_monitor(const std::string& scenario_path, const std::string& cert_path,
                const std::optional<std::string>& trace_path, const std::optional<std::uint64_t>& seed_flag,
                const std::optional<long>& K, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const io::Scenario sc = io::load_scenario(scenario_path);
  const LtiModel& model = sc.model.model;
  const Calibration cal = calibration_for(sc, cert_path, 0);
  MonitoredRunOptions opts;
  opts.K = K.value_or(sc.monitor.K);
  opts.rate_window = sc.monitor.rate_window;
  opts.early_exit = sc.monitor.early_exit;
  opts.keep_verdicts = true;

  std::vector<MonitorVerdict> verdicts;
  std::vector<long> steps;
  if (trace_path) {
    const SimTrace trace = io::read_trace_csv(io::read_file(*trace_path));
    verdicts = monitor_trace(model, sc.controller, *cal.cert, sc.unsafe, trace, opts);
    for (const StepRecord& r : trace.records) steps.push_back(r.k);
  } else {
    const std::uint64_t seed = resolve_seed(seed_flag, sc.seed, err);
    MonitoredRun run = run_monitored(model, sc.controller, cal.est, cal.det, sc.attack, *cal.cert, sc.unsafe,
                                     sc.horizon, seed, opts, sc.x0);
    verdicts = std::move(run.verdicts);
    for (const StepRecord& r : run.trace.records) steps.push_back(r.k);
    std::ostringstream tr;
    io::write_trace_csv(tr, run.trace);
    write_text(fs::path(out_dir) / "trace.csv", tr.str());
  }

  std::ostringstream jl, csv;
  io::write_metrics_header(csv);
  std::size_t warnings = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    jl << io::verdict_to_json(steps[i], verdicts[i]).dump() << '\n';
    io::write_metrics_row(csv, steps[i], verdicts[i]);
    warnings += verdicts[i].safe ? 0 : 1;
  }
  write_text(fs::path(out_dir) / "verdicts.jsonl", jl.str());
  write_text(fs::path(out_dir) / "metrics.csv", csv.str());
  out << verdicts.size() << " checks, " << warnings << " unsafe verdicts; wrote " << out_dir << "/verdicts.jsonl and "
      << out_dir << "/metrics.csv\n";
  return 0;
}

struct EvaluateArgs {
  std::string scenario;
  std::optional<std::string> k_list;
  std::optional<std::size_t> trials;
  unsigned jobs = 1;
  std::optional<std::string> sensor_sweep;
  std::optional<long> sensor_k;
  std::optional<std::string> certificate;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

int run_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const io::Scenario sc = io::load_scenario(a.scenario);
  if (!sc.mix) throw ValidationError("evaluate: scenario needs an evaluation section");
  const std::uint64_t seed = resolve_seed(a.seed, sc.seed, err);
  const std::vector<long> k_list = a.k_list ? parse_list<long>(*a.k_list, "--k-list") : sc.k_list;
  if (k_list.empty()) throw ValidationError("evaluate: empty K list");
  const std::size_t trials = a.trials.value_or(sc.trials);
  const Calibration cal = calibration_for(sc, a.certificate, seed);

  const SweepResult res = run_validation_sweep(sc, cal, k_list, trials, seed, a.jobs);
  std::ostringstream rates, roc, rows;
  write_rates_csv(rates, res.rows, "K");
  write_roc_csv(roc, res.rows);
  write_trials_csv(rows, res, k_list);
  const fs::path dir(a.out_dir);
  write_text(dir / "rates.csv", rates.str());
  write_text(dir / "roc.csv", roc.str());
  write_text(dir / "trials.csv", rows.str());
  for (const RateRow& r : res.rows) {
    out << "K=" << r.key << " TPR=" << io::format_double(r.tpr()) << " FPR=" << io::format_double(r.fpr())
        << " (TP " << r.tp << ", FP " << r.fp << ", TN " << r.tn << ", FN " << r.fn << ", other " << r.other << ")\n";
  }

  if (a.sensor_sweep) {
    const std::vector<int> counts = parse_list<int>(*a.sensor_sweep, "--sensor-sweep");
    const long K = a.sensor_k.value_or(sc.monitor.K);
    const SweepResult sw = run_attacked_sensor_sweep(sc, cal, counts, trials, seed, K, a.jobs);
    std::ostringstream os;
    write_rates_csv(os, sw.rows, "sensors");
    write_text(dir / "sensors.csv", os.str());
    for (const RateRow& r : sw.rows) {
      out << "sensors=" << r.key << " TPR=" << io::format_double(r.tpr()) << " FPR=" << io::format_double(r.fpr())
          << '\n';
    }
  }
  out << "wrote " << (dir / "rates.csv").string() << '\n';
  return 0;
}

int run_compare(const std::string& scenario_path, std::size_t runs, const std::optional<std::string>& cert_path,
                const std::optional<std::uint64_t>& seed_flag, const std::string& out_path, std::ostream& out,
                std::ostream& err) {
  const io::Scenario sc = io::load_scenario(scenario_path);
  const std::uint64_t seed = resolve_seed(seed_flag, sc.seed, err);
  const Calibration cal = calibration_for(sc, cert_path, seed);
  std::ostringstream os;
  os << "seed,damage,detection,damage_before_detection,first_impact,tu_slope,monitor_error_early,"
        "monitor_error_late,baseline_error_early,baseline_error_late\n";
  std::size_t impact_first = 0, tu_up = 0, mon_down = 0, base_up = 0;
  for (std::size_t i = 0; i < runs; ++i) {
    const ComparisonRun c = compare_with_baseline(sc, cal, derive_seed(seed, i));
    os << c.seed << ',';
    if (c.damage) os << *c.damage;
    os << ',';
    if (c.detection) os << *c.detection;
    os << ',' << (c.damage_before_detection ? 1 : 0) << ',';
    if (c.first_impact) os << *c.first_impact;
    os << ',' << io::format_double(c.tu_slope) << ',' << io::format_double(c.monitor_error_early) << ','
       << io::format_double(c.monitor_error_late) << ',' << io::format_double(c.baseline_error_early) << ','
       << io::format_double(c.baseline_error_late) << '\n';
    const bool valid = c.damage && c.damage_before_detection;
    impact_first += valid && c.first_impact ? 1 : 0;
    tu_up += valid && c.tu_slope >= 0.0 ? 1 : 0;
    mon_down += valid && c.monitor_error_late < c.monitor_error_early ? 1 : 0;
    base_up += valid && c.baseline_error_late > c.baseline_error_early ? 1 : 0;
  }
  write_text(out_path, os.str());
  out << "impact before damage " << impact_first << "/" << runs << ", t_u nondecreasing " << tu_up << "/" << runs
      << ", monitor error shrinks " << mon_down << "/" << runs << ", baseline error grows " << base_up << "/" << runs
      << "\nwrote " << out_path << '\n';
  return 0;
}

struct BenchArgs {
  std::string scenario;
  std::string k_list = "100,200,300,400,500,600,700,800,900,1000";
  std::string constraint_list = "5,50,100,200,300,400,500";
  std::size_t checks = 1000;
  std::size_t warmup = 50;
  std::optional<std::string> certificate;
  std::optional<std::uint64_t> seed;
  std::string out = "bench.csv";
};

int run_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const io::Scenario sc = io::load_scenario(a.scenario);
  const std::uint64_t seed = resolve_seed(a.seed, sc.seed, err);
  const Calibration cal = calibration_for(sc, a.certificate, seed);
  BenchConfig cfg;
  cfg.k_list = parse_list<long>(a.k_list, "--k-list");
  cfg.constraint_counts = parse_list<std::size_t>(a.constraint_list, "--constraint-list");
  cfg.checks = a.checks;
  cfg.warmup = a.warmup;
  cfg.seed = seed;
  const std::vector<BenchRecord> recs = run_benchmark(sc.model.model, sc.controller, *cal.cert, cfg);
  std::ostringstream os;
  write_bench_csv(os, recs);
  write_text(a.out, os.str());
  for (const BenchRecord& r : recs) {
    out << "n=" << r.n << " K=" << r.K << " constraints=" << r.constraints << " mean " << io::format_double(r.mean_s)
        << " s\n";
  }
  out << "wrote " << a.out << '\n';
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Predictive safety monitoring of LTI plants under stealthy sensor attacks"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;

  auto* cal = app.add_subcommand("calibrate", "Estimator calibration and reach-set certificate");
  std::string model_path, cal_out = "certificate.json";
  double beta = 0.05, delta_h = 0.01;
  std::optional<double> p;
  long residual_steps = 0;
  cal->add_option("model", model_path, "model JSON")->required();
  cal->add_option("--beta", beta, "detector false-alarm rate");
  cal->add_option("--p", p, "noise-bound probability (default 1 - beta)");
  cal->add_option("--delta-h", delta_h, "grid step for b");
  cal->add_option("--residual-check", residual_steps, "compare the analytic residual covariance with N simulated steps");
  cal->add_option("--seed", seed);
  cal->add_option("-o,--out", cal_out, "certificate path");

  auto* sim = app.add_subcommand("simulate", "Closed-loop simulation to trace.csv");
  std::string scenario_path, sim_out = "trace.csv";
  std::optional<long> horizon;
  sim->add_option("scenario", scenario_path)->required();
  sim->add_option("--horizon", horizon);
  sim->add_option("--seed", seed);
  sim->add_option("-o,--out", sim_out);

  auto* mon = app.add_subcommand("monitor", "Safety checks over a trace or a live co-simulation");
  std::string cert_path, out_dir = ".";
  std::optional<std::string> trace_path;
  std::optional<long> mon_k;
  mon->add_option("scenario", scenario_path)->required();
  mon->add_option("certificate", cert_path)->required();
  mon->add_option("--trace", trace_path, "recorded trace.csv instead of co-simulation");
  mon->add_option("--K", mon_k, "prediction horizon (default from the scenario)");
  mon->add_option("--seed", seed);
  mon->add_option("--out-dir", out_dir);

  auto* ev = app.add_subcommand("evaluate", "Monte Carlo rates vs K (rates.csv, roc.csv)");
  EvaluateArgs ea;
  ev->add_option("scenario", ea.scenario)->required();
  ev->add_option("--k-list", ea.k_list, "comma-separated K values");
  ev->add_option("--trials", ea.trials);
  ev->add_option("--jobs", ea.jobs)->check(CLI::PositiveNumber);
  ev->add_option("--sensor-sweep", ea.sensor_sweep, "comma-separated attacked-sensor counts (sensors.csv)");
  ev->add_option("--sensor-k", ea.sensor_k, "K for the sensor sweep");
  ev->add_option("--certificate", ea.certificate);
  ev->add_option("--out-dir", ea.out_dir);
  ev->add_option("--seed", seed);

  auto* cmp = app.add_subcommand("compare", "Monitor vs time-to-unsafe baseline over seeded runs");
  std::size_t runs = 20;
  std::string cmp_out = "comparison.csv";
  std::optional<std::string> cmp_cert;
  cmp->add_option("scenario", scenario_path)->required();
  cmp->add_option("--runs", runs);
  cmp->add_option("--certificate", cmp_cert);
  cmp->add_option("--seed", seed);
  cmp->add_option("-o,--out", cmp_out);

  auto* bench = app.add_subcommand("bench", "Worst-case check latency (bench.csv)");
  BenchArgs ba;
  bench->add_option("--scenario", ba.scenario, "scenario supplying the model and controller")->required();
  bench->add_option("--k-list", ba.k_list);
  bench->add_option("--constraint-list", ba.constraint_list);
  bench->add_option("--checks", ba.checks)->check(CLI::PositiveNumber);
  bench->add_option("--warmup", ba.warmup);
  bench->add_option("--certificate", ba.certificate);
  bench->add_option("--seed", seed);
  bench->add_option("-o,--out", ba.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*cal) return run_calibrate(model_path, beta, p, delta_h, seed, cal_out, residual_steps, out, err);
    if (*sim) return run_simulate(scenario_path, seed, horizon, sim_out, out, err);
    if (*mon) return run_monitor(scenario_path, cert_path, trace_path, seed, mon_k, out_dir, out, err);
    if (*ev) {
      ea.seed = seed;
      return run_evaluate(ea, out, err);
    }
    if (*cmp) return run_compare(scenario_path, runs, cmp_cert, seed, cmp_out, out, err);
    if (*bench) {
      ba.seed = seed;
      return run_bench(ba, out, err);
    }
  } catch (const CertificateError& e) {
    err << "CertificateError: " << e.what() << '\n';
    for (const std::string& d : e.diagnostics()) err << "  " << d << '\n';
    return 1;
  } catch (const ValidationError& e) {
    err << "ValidationError: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace reachmon
