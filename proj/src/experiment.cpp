#include "reachmon/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace reachmon {

MonitoredRun run_monitored(const LtiModel& model, const Controller& ctrl, const EstimatorConfig& est,
                           const DetectorConfig& det, const AttackPlan& plan, const ReachCertificate& cert,
                           const UnsafeSetd& unsafe, long horizon, std::uint64_t seed,
                           const MonitoredRunOptions& opts, const VectorXd& x0) {
  if (horizon < 0) throw DomainError("run_monitored: horizon must be >= 0");
  ClosedLoop loop(model, ctrl, est, det, plan, seed, x0);
  const SafetyMonitor monitor(MonitorConfig{model, ctrl, cert, unsafe, opts.K, opts.early_exit});
  TrailingRate rate(model.dt(), opts.rate_window);

  MonitoredRun run;
  run.trace.seed = seed;
  run.trace.model_id = model.name();
  const auto count = static_cast<std::size_t>(horizon) + 1;
  run.trace.records.reserve(count);
  run.k_f.reserve(count);
  run.impact.reserve(count);
  run.baseline_tu.reserve(count);
  for (long k = 0; k <= horizon; ++k) {
    rate.push(loop.x_hat());
    MonitorVerdict v = monitor.check(loop.x_hat(), loop.controller_state(), loop.k(), rate.rate());
    run.k_f.push_back(v.k_f);
    run.impact.push_back(v.impact);
    run.baseline_tu.push_back(v.baseline_tu);
    if (opts.keep_verdicts) run.verdicts.push_back(std::move(v));
    run.trace.records.push_back(loop.step());
  }
  return run;
}

std::vector<MonitorVerdict> monitor_trace(const LtiModel& model, const Controller& ctrl, const ReachCertificate& cert,
                                          const UnsafeSetd& unsafe, const SimTrace& trace,
                                          const MonitoredRunOptions& opts) {
  const SafetyMonitor monitor(MonitorConfig{model, ctrl, cert, unsafe, opts.K, opts.early_exit});
  TrailingRate rate(model.dt(), opts.rate_window);
  ControllerState state = initial_controller_state(ctrl);
  std::vector<MonitorVerdict> out;
  out.reserve(trace.records.size());
  for (const StepRecord& r : trace.records) {
    if (r.x_hat.size() != model.n() || r.y_bar.size() != model.m()) {
      throw ValidationError("monitor_trace: records need xhat and ybar columns matching the model");
    }
    rate.push(r.x_hat);
    out.push_back(monitor.check(r.x_hat, state, r.k, rate.rate()));
    control_law(ctrl, state, r.y_bar, r.k);
  }
  return out;
}

std::optional<long> damage_step(const SimTrace& trace, const UnsafeSetd& unsafe) {
  for (const StepRecord& r : trace.records) {
    if (unsafe.first_containing(r.x)) return r.k;
  }
  return std::nullopt;
}

std::optional<long> detection_step(const SimTrace& trace, long from, const io::DetectionRule& rule, double beta) {
  const int critical = stats::binomial_upper_critical(rule.window, beta, rule.alpha);
  const auto& recs = trace.records;
  int count = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const long k = recs[i].k;
    if (k < from) continue;
    if (recs[i].alarm) ++count;
    const long leaving = k - rule.window;
    if (leaving >= from) {
      const std::size_t j = i - static_cast<std::size_t>(rule.window);
      if (recs[j].alarm) --count;
    }
    if (count >= critical) return k;
  }
  return std::nullopt;
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::TP: return "TP";
    case Classification::TN: return "TN";
    case Classification::FP: return "FP";
    case Classification::FN: return "FN";
    case Classification::Other: return "other";
  }
  return "?";
}

const char* to_string(OtherReason r) {
  switch (r) {
    case OtherReason::None: return "";
    case OtherReason::DetectedWithoutDamage: return "detected_no_damage";
    case OtherReason::NoDamageNoDetection: return "no_damage_no_detection";
    case OtherReason::DamageWithoutAttack: return "damage_without_attack";
  }
  return "?";
}

TrialOutcome classify_trial(const TrialRecord& t, long K) {
  if (!t.ground_truth) throw ClassificationError("classify_trial: ground-truth states are missing");
  if (K < 0) throw ClassificationError("classify_trial: K must be >= 0");
  TrialOutcome out;
  out.seed = t.seed;
  out.damage_step = t.damage;
  out.detection_step = t.detection;

  auto warns = [&](long k) {
    return k >= 0 && k < static_cast<long>(t.k_f.size()) && t.k_f[static_cast<std::size_t>(k)] &&
           *t.k_f[static_cast<std::size_t>(k)] <= K;
  };
  for (long k = 0; k < static_cast<long>(t.k_f.size()); ++k) {
    if (warns(k)) {
      out.warning_step = k;
      break;
    }
  }

  if (!t.damage) {
    out.classification = Classification::Other;
    out.other = t.detection ? OtherReason::DetectedWithoutDamage : OtherReason::NoDamageNoDetection;
    return out;
  }
  const long d = *t.damage;
  if (t.damage && static_cast<long>(t.k_f.size()) < d) {
    throw ClassificationError("classify_trial: monitor record shorter than the damage step");
  }
  bool warned = false;
  for (long k = std::max(0L, d - K); k < d; ++k) {
    if (warns(k)) {
      warned = true;
      break;
    }
  }
  const bool detected_first = t.detection && *t.detection < d;
  if (detected_first) {
    out.classification = warned ? Classification::FP : Classification::TN;
  } else if (t.attack_present) {
    out.classification = warned ? Classification::TP : Classification::FN;
  } else {
    out.classification = Classification::Other;
    out.other = OtherReason::DamageWithoutAttack;
  }
  return out;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : std::nan("");
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
        return;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double RateRow::tpr() const { return ratio(tp, tp + fn); }
double RateRow::fpr() const { return ratio(fp, fp + tn); }
double RateRow::tnr() const { return ratio(tn, fp + tn); }
double RateRow::fnr() const { return ratio(fn, tp + fn); }
stats::Interval RateRow::tpr_ci() const { return stats::wilson_interval(tp, tp + fn); }
stats::Interval RateRow::fpr_ci() const { return stats::wilson_interval(fp, fp + tn); }
stats::Interval RateRow::tnr_ci() const { return stats::wilson_interval(tn, fp + tn); }
stats::Interval RateRow::fnr_ci() const { return stats::wilson_interval(fn, tp + fn); }

RateRow tally(long key, const std::vector<TrialOutcome>& outcomes) {
  RateRow row;
  row.key = key;
  row.trials = outcomes.size();
  for (const TrialOutcome& o : outcomes) {
    switch (o.classification) {
      case Classification::TP: ++row.tp; break;
      case Classification::FP: ++row.fp; break;
      case Classification::TN: ++row.tn; break;
      case Classification::FN: ++row.fn; break;
      case Classification::Other:
        ++row.other;
        if (o.other == OtherReason::DetectedWithoutDamage) ++row.detected_no_damage;
        if (o.other == OtherReason::NoDamageNoDetection) ++row.no_damage_no_detection;
        if (o.other == OtherReason::DamageWithoutAttack) ++row.damage_without_attack;
        break;
    }
  }
  return row;
}

Calibration calibrate_scenario(const io::Scenario& sc, std::uint64_t seed) {
  const LtiModel& model = sc.model.model;
  Calibration cal;
  cal.est = calibrate_estimator(model);
  cal.det = make_detector(sc.monitor.beta, static_cast<int>(model.m()));
  CertificateOptions opts;
  opts.delta_h = sc.monitor.delta_h;
  opts.p = sc.monitor.p;
  opts.seed = seed;
  cal.cert = compute_certificate(model, cal.est, cal.det, opts);
  cal.cert->model_sha256 = sc.model.sha256;
  cal.cert->estimator_sha256 = io::estimator_fingerprint(cal.est.L, cal.est.sigma_r, cal.det.tau, cal.det.beta);
  return cal;
}

TrialSpec draw_trial(const io::Scenario& sc, std::uint64_t seed, std::size_t index, std::optional<int> sensor_count) {
  if (!sc.mix) throw ValidationError("scenario has no evaluation section");
  const io::AttackMix& mix = *sc.mix;
  TrialSpec spec;
  spec.seed = derive_seed(seed, index);
  NoiseSource rng(derive_seed(spec.seed, 7));
  spec.stealthy = rng.uniform() < mix.stealthy_fraction;
  spec.plan = spec.stealthy ? mix.stealthy : mix.aggressive;
  const long span = mix.start_range[1] - mix.start_range[0] + 1;
  spec.plan.start = mix.start_range[0] + static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(span));
  spec.plan.end = sc.horizon;

  std::vector<int> pool = mix.sensor_pool;
  if (pool.empty()) {
    for (int i = 0; i < sc.model.model.m(); ++i) pool.push_back(i);
  }
  const int count = sensor_count.value_or(mix.sensor_count);
  if (count < 0 || count > static_cast<int>(pool.size())) {
    throw ValidationError("attacked-sensor count " + std::to_string(count) + " exceeds the sensor pool");
  }
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.next_u64() % (pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  spec.plan.sensors.assign(pool.begin(), pool.begin() + count);
  std::sort(spec.plan.sensors.begin(), spec.plan.sensors.end());
  return spec;
}

UnsafeSetd constraints_for(const io::Scenario& sc, const std::vector<int>& sensors) {
  if (sensors.empty() || sc.unsafe_outputs.empty()) return sc.unsafe;
  std::vector<HalfSpaced> hs;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < sc.unsafe.size(); ++i) {
    const int out = sc.unsafe_outputs[i];
    if (out < 0 || std::find(sensors.begin(), sensors.end(), out) != sensors.end()) {
      hs.push_back(sc.unsafe[i]);
      names.push_back(sc.unsafe.names()[i]);
    }
  }
  return UnsafeSetd(std::move(hs), std::move(names));
}

TrialRecord run_trial(const io::Scenario& sc, const Calibration& cal, const TrialSpec& spec, long K_max) {
  if (!cal.cert) throw CertificateError("run_trial: no certificate");
  const UnsafeSetd unsafe = constraints_for(sc, spec.plan.sensors);
  MonitoredRunOptions opts;
  opts.K = K_max;
  opts.rate_window = sc.monitor.rate_window;
  const MonitoredRun run = run_monitored(sc.model.model, sc.controller, cal.est, cal.det, spec.plan, *cal.cert,
                                         unsafe, sc.horizon, spec.seed, opts, sc.x0);
  TrialRecord t;
  t.seed = spec.seed;
  t.attack_present = !spec.plan.sensors.empty();
  t.damage = damage_step(run.trace, unsafe);
  t.detection = detection_step(run.trace, t.attack_present ? spec.plan.start : 0, sc.detection, cal.det.beta);
  t.k_f = run.k_f;
  return t;
}

SweepResult run_validation_sweep(const io::Scenario& sc, const Calibration& cal, const std::vector<long>& k_list,
                                 std::size_t trials, std::uint64_t seed, unsigned jobs) {
  SweepResult res;
  if (k_list.empty()) return res;
  if (trials == 0) {
    std::cerr << "warning: zero trials requested; no rate rows produced\n";
    return res;
  }
  const long k_max = *std::max_element(k_list.begin(), k_list.end());
  res.specs.resize(trials);
  res.records.resize(trials);
  for (std::size_t i = 0; i < trials; ++i) res.specs[i] = draw_trial(sc, seed, i);
  parallel_for(trials, jobs, [&](std::size_t i) { res.records[i] = run_trial(sc, cal, res.specs[i], k_max); });
  for (long K : k_list) {
    std::vector<TrialOutcome> outcomes;
    for (const TrialRecord& t : res.records) outcomes.push_back(classify_trial(t, K));
    res.rows.push_back(tally(K, outcomes));
  }
  return res;
}

SweepResult run_attacked_sensor_sweep(const io::Scenario& sc, const Calibration& cal,
                                      const std::vector<int>& sensor_counts, std::size_t trials,
                                      std::uint64_t seed, long K, unsigned jobs) {
  SweepResult res;
  if (trials == 0) {
    std::cerr << "warning: zero trials requested; no rate rows produced\n";
    return res;
  }
  for (int count : sensor_counts) {
    const std::uint64_t group_seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(count));
    std::vector<TrialSpec> specs(trials);
    std::vector<TrialRecord> records(trials);
    for (std::size_t i = 0; i < trials; ++i) specs[i] = draw_trial(sc, group_seed, i, count);
    parallel_for(trials, jobs, [&](std::size_t i) { records[i] = run_trial(sc, cal, specs[i], K); });
    std::vector<TrialOutcome> outcomes;
    for (const TrialRecord& t : records) outcomes.push_back(classify_trial(t, K));
    res.rows.push_back(tally(count, outcomes));
    res.specs.insert(res.specs.end(), specs.begin(), specs.end());
    res.records.insert(res.records.end(), records.begin(), records.end());
  }
  return res;
}

ComparisonRun compare_with_baseline(const io::Scenario& sc, const Calibration& cal, std::uint64_t seed) {
  if (!cal.cert) throw CertificateError("compare_with_baseline: no certificate");
  const LtiModel& model = sc.model.model;
  MonitoredRunOptions opts;
  opts.K = sc.monitor.K;
  opts.rate_window = sc.monitor.rate_window;
  const MonitoredRun run = run_monitored(model, sc.controller, cal.est, cal.det, sc.attack, *cal.cert, sc.unsafe,
                                         sc.horizon, seed, opts, sc.x0);
  ComparisonRun out;
  out.seed = seed;
  out.damage = damage_step(run.trace, sc.unsafe);
  out.detection = detection_step(run.trace, sc.attack.start, sc.detection, cal.det.beta);
  if (!out.damage) return out;
  const long d = *out.damage;
  out.damage_before_detection = !out.detection || *out.detection > d;
  for (long k = 0; k < d; ++k) {
    if (run.impact[static_cast<std::size_t>(k)] > 0.0) {
      out.first_impact = k;
      break;
    }
  }

  const long start = std::min(sc.attack.start, d);
  const long mid = start + (d - start) / 2;
  const double dt = model.dt();
  std::vector<double> ks, tus, mon_early, mon_late, base_early, base_late;
  for (long k = start; k < d; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double truth = static_cast<double>(d - k) * dt;
    const double tc = run.k_f[i] ? static_cast<double>(*run.k_f[i]) * dt : static_cast<double>(opts.K) * dt;
    (k < mid ? mon_early : mon_late).push_back(std::abs(tc - truth));
    if (run.baseline_tu[i] && std::isfinite(*run.baseline_tu[i])) {
      ks.push_back(static_cast<double>(k));
      tus.push_back(*run.baseline_tu[i]);
      (k < mid ? base_early : base_late).push_back(std::abs(*run.baseline_tu[i] - truth));
    }
  }
  if (ks.size() >= 2) out.tu_slope = stats::linear_fit(ks, tus).slope;
  out.monitor_error_early = mean_of(mon_early);
  out.monitor_error_late = mean_of(mon_late);
  out.baseline_error_early = mean_of(base_early);
  out.baseline_error_late = mean_of(base_late);
  return out;
}

std::vector<BenchRecord> run_benchmark(const LtiModel& model, const Controller& ctrl, const ReachCertificate& cert,
                                       const BenchConfig& cfg) {
  if (cfg.checks == 0) throw DomainError("run_benchmark: checks must be >= 1");
  std::mt19937_64 engine(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = model.n();

  const MatrixXd factor = covariance_factor(cert.Pi.matrix());
  std::vector<VectorXd> states;
  for (int i = 0; i < 64; ++i) {
    VectorXd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z(j) = normal(engine);
    states.push_back(factor * z);
  }
  auto random_set = [&](std::size_t count) {
    std::vector<HalfSpaced> hs;
    for (std::size_t i = 0; i < count; ++i) {
      RowVectorXd c(n);
      for (Eigen::Index j = 0; j < n; ++j) c(j) = normal(engine);
      hs.emplace_back(c, 1e9 * c.norm());
    }
    return UnsafeSetd(std::move(hs));
  };

  const ControllerState state0 = initial_controller_state(ctrl);
  struct Config {
    long K;
    std::size_t constraints;
    std::optional<SafetyMonitor> monitor;
    std::vector<double> lat;
  };
  std::vector<Config> configs;
  for (long K : cfg.k_list) configs.push_back({K, cfg.constraints_for_k, std::nullopt, {}});
  for (std::size_t c : cfg.constraint_counts) configs.push_back({cfg.K_for_constraints, c, std::nullopt, {}});
  for (Config& c : configs) {
    c.monitor.emplace(MonitorConfig{model, ctrl, cert, random_set(c.constraints), c.K, false});
    c.lat.reserve(cfg.checks);
  }

  auto timed_check = [&](const Config& c, std::size_t i) {
    const VectorXd& x = states[i % states.size()];
    const auto t0 = std::chrono::steady_clock::now();
    const MonitorVerdict v = c.monitor->check(x, state0, static_cast<long>(i));
    const auto t1 = std::chrono::steady_clock::now();
    if (v.per_step_min_distance.size() != static_cast<std::size_t>(c.K) + 1) {
      throw Error("run_benchmark: monitor exited early");
    }
    return std::chrono::duration<double>(t1 - t0).count();
  };

  // Configurations are visited round-robin in blocks of a few checks so that
  // slow drifts of the machine spread over every configuration alike.
  for (Config& c : configs) {
    for (std::size_t i = 0; i < cfg.warmup; ++i) timed_check(c, i);
  }
  constexpr std::size_t kBlock = 10;
  for (std::size_t done = 0; done < cfg.checks; done += kBlock) {
    const std::size_t todo = std::min(kBlock, cfg.checks - done);
    for (Config& c : configs) {
      for (std::size_t i = 0; i < todo; ++i) c.lat.push_back(timed_check(c, cfg.warmup + done + i));
    }
  }

  std::vector<BenchRecord> out;
  for (Config& c : configs) {
    BenchRecord r;
    r.n = n;
    r.K = c.K;
    r.constraints = c.constraints;
    r.checks = c.lat.size();
    r.mean_s = mean_of(c.lat);
    std::sort(c.lat.begin(), c.lat.end());
    r.p50_s = c.lat[c.lat.size() / 2];
    r.p95_s = c.lat[std::min(c.lat.size() - 1, static_cast<std::size_t>(0.95 * static_cast<double>(c.lat.size())))];
    out.push_back(r);
  }
  return out;
}

void write_rates_csv(std::ostream& os, const std::vector<RateRow>& rows, const char* key_name) {
  using io::format_double;
  os << key_name
     << ",trials,tp,fp,tn,fn,other,detected_no_damage,no_damage_no_detection,damage_without_attack,"
        "tpr,tpr_lo,tpr_hi,fpr,fpr_lo,fpr_hi,tnr,tnr_lo,tnr_hi,fnr,fnr_lo,fnr_hi\n";
  for (const RateRow& r : rows) {
    os << r.key << ',' << r.trials << ',' << r.tp << ',' << r.fp << ',' << r.tn << ',' << r.fn << ',' << r.other
       << ',' << r.detected_no_damage << ',' << r.no_damage_no_detection << ',' << r.damage_without_attack;
    auto put = [&](double v, stats::Interval ci) {
      os << ',' << format_double(v) << ',' << format_double(ci.lower) << ',' << format_double(ci.upper);
    };
    put(r.tpr(), r.tpr_ci());
    put(r.fpr(), r.fpr_ci());
    put(r.tnr(), r.tnr_ci());
    put(r.fnr(), r.fnr_ci());
    os << '\n';
  }
}

void write_roc_csv(std::ostream& os, const std::vector<RateRow>& rows) {
  os << "fpr,tpr,K\n";
  for (const RateRow& r : rows) {
    os << io::format_double(r.fpr()) << ',' << io::format_double(r.tpr()) << ',' << r.key << '\n';
  }
}

void write_trials_csv(std::ostream& os, const SweepResult& res, const std::vector<long>& k_list) {
  os << "seed,stealthy,sensors,start,damage,detection";
  for (long K : k_list) os << ",class_K" << K;
  os << '\n';
  // Rows sorted by seed so the file does not depend on scheduling.
  std::vector<std::size_t> order(res.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return res.records[a].seed < res.records[b].seed; });
  for (std::size_t i : order) {
    const TrialSpec& s = res.specs[i];
    const TrialRecord& t = res.records[i];
    os << t.seed << ',' << (s.stealthy ? 1 : 0) << ',';
    for (std::size_t j = 0; j < s.plan.sensors.size(); ++j) os << (j ? ";" : "") << s.plan.sensors[j];
    os << ',' << s.plan.start << ',';
    if (t.damage) os << *t.damage;
    os << ',';
    if (t.detection) os << *t.detection;
    for (long K : k_list) os << ',' << to_string(classify_trial(t, K).classification);
    os << '\n';
  }
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "n,K,constraints,checks,mean_s,p50_s,p95_s\n";
  for (const BenchRecord& r : records) {
    os << r.n << ',' << r.K << ',' << r.constraints << ',' << r.checks << ',' << io::format_double(r.mean_s) << ','
       << io::format_double(r.p50_s) << ',' << io::format_double(r.p95_s) << '\n';
  }
}

}  // namespace reachmon
