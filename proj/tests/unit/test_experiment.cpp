#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "generators.hpp"
#include "reachmon/experiment.hpp"

using namespace reachmon;

namespace {

/// k_f per step: a warning (offset 0) exactly at the listed steps.
std::vector<std::optional<long>> warnings_at(long length, std::initializer_list<long> steps) {
  std::vector<std::optional<long>> k_f(static_cast<std::size_t>(length));
  for (long s : steps) k_f[static_cast<std::size_t>(s)] = 0L;
  return k_f;
}

TrialRecord record(bool attack, std::optional<long> damage, std::optional<long> detection,
                   std::vector<std::optional<long>> k_f) {
  TrialRecord t;
  t.attack_present = attack;
  t.damage = damage;
  t.detection = detection;
  t.k_f = std::move(k_f);
  return t;
}

SimTrace alarm_trace(long length, const std::vector<long>& alarms) {
  SimTrace t;
  for (long k = 0; k < length; ++k) {
    StepRecord r;
    r.k = k;
    r.alarm = std::find(alarms.begin(), alarms.end(), k) != alarms.end();
    t.records.push_back(r);
  }
  return t;
}

const io::Scenario& roc() {
  static const io::Scenario sc = io::load_scenario(REACHMON_SOURCE_DIR "/scenarios/synth_roc.json");
  return sc;
}

}  // namespace

TEST(Classify, TableExamples) {
  const auto tp = classify_trial(record(true, 300, std::nullopt, warnings_at(301, {100})), 500);
  EXPECT_EQ(tp.classification, Classification::TP);
  EXPECT_EQ(tp.warning_step, 100);

  // No warning ever; the detector fires at 200 and damage follows later.
  const auto tn = classify_trial(record(true, 400, 200, warnings_at(401, {})), 500);
  EXPECT_EQ(tn.classification, Classification::TN);

  const auto fp = classify_trial(record(true, 400, 150, warnings_at(401, {100})), 500);
  EXPECT_EQ(fp.classification, Classification::FP);

  const auto fn = classify_trial(record(true, 300, std::nullopt, warnings_at(301, {})), 500);
  EXPECT_EQ(fn.classification, Classification::FN);
}

TEST(Classify, WarningWindowIsHalfOpen) {
  const auto early = classify_trial(record(true, 300, std::nullopt, warnings_at(301, {199})), 100);
  EXPECT_EQ(early.classification, Classification::FN);
  const auto edge = classify_trial(record(true, 300, std::nullopt, warnings_at(301, {200})), 100);
  EXPECT_EQ(edge.classification, Classification::TP);
  const auto at_damage = classify_trial(record(true, 300, std::nullopt, warnings_at(301, {300})), 100);
  EXPECT_EQ(at_damage.classification, Classification::FN);
}

TEST(Classify, OtherCasesAndErrors) {
  EXPECT_EQ(classify_trial(record(true, std::nullopt, 50, warnings_at(100, {})), 10).other,
            OtherReason::DetectedWithoutDamage);
  EXPECT_EQ(classify_trial(record(true, std::nullopt, std::nullopt, warnings_at(100, {3})), 10).other,
            OtherReason::NoDamageNoDetection);
  EXPECT_EQ(classify_trial(record(false, 60, std::nullopt, warnings_at(100, {55})), 10).other,
            OtherReason::DamageWithoutAttack);
  TrialRecord missing = record(true, 60, std::nullopt, warnings_at(100, {}));
  missing.ground_truth = false;
  EXPECT_THROW(classify_trial(missing, 10), ClassificationError);
  EXPECT_THROW(classify_trial(record(true, 60, std::nullopt, warnings_at(100, {})), -1), ClassificationError);
}

TEST(Classify, OutcomesPartitionTrials) {
  testgen::Gen g(77);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<TrialOutcome> outcomes;
    const int n = g.integer(0, 40);
    for (int i = 0; i < n; ++i) {
      const long len = g.integer(5, 200);
      std::vector<std::optional<long>> k_f(static_cast<std::size_t>(len));
      for (auto& v : k_f) {
        if (g.uniform() < 0.1) v = g.integer(0, 50);
      }
      std::optional<long> damage, detection;
      if (g.uniform() < 0.6) damage = g.integer(0, static_cast<int>(len - 1));
      if (g.uniform() < 0.5) detection = g.integer(0, static_cast<int>(len - 1));
      outcomes.push_back(classify_trial(record(g.uniform() < 0.8, damage, detection, k_f), g.integer(0, 60)));
    }
    const RateRow r = tally(1, outcomes);
    EXPECT_EQ(r.trials, static_cast<std::size_t>(n));
    EXPECT_EQ(r.tp + r.fp + r.tn + r.fn + r.other, r.trials);
    EXPECT_EQ(r.detected_no_damage + r.no_damage_no_detection + r.damage_without_attack, r.other);
  }
}

TEST(Rates, WilsonIntervalsBracketPoint) {
  std::vector<TrialOutcome> o(10);
  for (std::size_t i = 0; i < 10; ++i) o[i].classification = i < 8 ? Classification::TP : Classification::FN;
  const RateRow r = tally(5, o);
  EXPECT_DOUBLE_EQ(r.tpr(), 0.8);
  EXPECT_NEAR(r.tpr_ci().lower, 0.4901625, 1e-6);
  EXPECT_NEAR(r.tpr_ci().upper, 0.9433178, 1e-6);
  EXPECT_DOUBLE_EQ(r.fnr(), 0.2);
}

TEST(Detection, WindowedBinomialRule) {
  const io::DetectionRule rule{50, 1e-6};
  const int h = stats::binomial_upper_critical(50, 0.05, 1e-6);
  std::vector<long> burst;
  for (long k = 100; k < 200; ++k) burst.push_back(k);
  EXPECT_EQ(detection_step(alarm_trace(300, burst), 0, rule, 0.05), 100 + h - 1);

  // Spread alarms never fill a window.
  std::vector<long> sparse;
  for (long k = 0; k < 300; k += 25) sparse.push_back(k);
  EXPECT_FALSE(detection_step(alarm_trace(300, sparse), 0, rule, 0.05).has_value());

  // Alarms before `from` do not count.
  std::vector<long> early;
  for (long k = 0; k < 60; ++k) early.push_back(k);
  EXPECT_EQ(detection_step(alarm_trace(300, early), 0, rule, 0.05), h - 1);
  const long from = 60 - (h - 1);
  EXPECT_FALSE(detection_step(alarm_trace(300, early), from, rule, 0.05).has_value());
}

TEST(Trials, DrawProperties) {
  const io::Scenario& sc = roc();
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 200; ++i) {
    const TrialSpec t = draw_trial(sc, 5, i, 2);
    seeds.insert(t.seed);
    ASSERT_EQ(t.plan.sensors.size(), 2u);
    EXPECT_LT(t.plan.sensors[0], t.plan.sensors[1]);
    EXPECT_GE(t.plan.sensors[0], 0);
    EXPECT_LT(t.plan.sensors[1], 3);
    EXPECT_GE(t.plan.start, sc.mix->start_range[0]);
    EXPECT_LE(t.plan.start, sc.mix->start_range[1]);
    const TrialSpec again = draw_trial(sc, 5, i, 2);
    EXPECT_EQ(again.seed, t.seed);
    EXPECT_EQ(again.plan.start, t.plan.start);
    EXPECT_EQ(again.plan.sensors, t.plan.sensors);
    EXPECT_EQ(again.stealthy, t.stealthy);
  }
  EXPECT_EQ(seeds.size(), 200u);
  EXPECT_THROW(draw_trial(sc, 5, 0, 4), ValidationError);
  EXPECT_TRUE(draw_trial(sc, 5, 0, 0).plan.sensors.empty());
}

TEST(Trials, ConstraintsFollowAttackedSensors) {
  const io::Scenario& sc = roc();
  EXPECT_EQ(constraints_for(sc, {}).size(), sc.unsafe.size());
  const UnsafeSetd one = constraints_for(sc, {1});
  ASSERT_GE(one.size(), 1u);
  EXPECT_LT(one.size(), sc.unsafe.size());
}

TEST(Sweep, ZeroTrialsOmitsRows) {
  const io::Scenario& sc = roc();
  const Calibration cal = calibrate_scenario(sc, 1);
  EXPECT_TRUE(run_validation_sweep(sc, cal, {50, 100}, 0, 3).rows.empty());
}

TEST(Sweep, NoAttackedSensorsMeansNoPositives) {
  const io::Scenario& sc = roc();
  const Calibration cal = calibrate_scenario(sc, 1);
  const SweepResult r = run_attacked_sensor_sweep(sc, cal, {0}, 6, 9, 50);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].tp, 0u);
  EXPECT_EQ(r.rows[0].fn, 0u);
  EXPECT_EQ(r.rows[0].trials, 6u);
}
