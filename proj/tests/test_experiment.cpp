#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "tactile/trial.hpp"

using namespace tactile;

namespace {

constexpr double kPi = 3.14159265358979323846;

CursorSample at(double t, double deg, double r = 0.95) {
  return {t, r * std::cos(deg * kPi / 180.0), r * std::sin(deg * kPi / 180.0)};
}

SessionConfig small_config() {
  SessionConfig c;
  c.targets = build_target_set(c.layout, 1);
  c.acquisition.sector_halfwidth_deg = c.targets.pitch_deg() / 2.0;
  c.repetitions = 2;
  return c;
}

// Brute force: for each sample, walk back over the run of samples that sit
// in the same sector; acquire once that run spans the hold.
std::optional<Acquisition> oracle_acquire(const std::vector<CursorSample>& trace, const TargetSet& set,
                                          const AcquisitionParams& p) {
  auto sector = [&](const CursorSample& s) -> std::optional<double> {
    if (std::hypot(s.x, s.y) < p.radius_fraction) return std::nullopt;
    const double a = std::atan2(s.y, s.x) * 180.0 / kPi;
    for (const auto& t : set) {
      double d = std::fmod(std::fabs(a - t.angle_deg), 360.0);
      d = std::min(d, 360.0 - d);
      if (d < p.sector_halfwidth_deg - 1e-9) return t.angle_deg;
    }
    return std::nullopt;
  };
  for (std::size_t j = 0; j < trace.size(); ++j) {
    const auto sj = sector(trace[j]);
    if (!sj) continue;
    std::size_t i = j;
    while (i > 0 && sector(trace[i - 1]) == sj) --i;
    if (trace[j].t_ms - trace[i].t_ms >= p.hold_ms) return Acquisition{*set.find(*sj), trace[i].t_ms};
  }
  return std::nullopt;
}

TrialRecord record(double angle, StimulusMode mode, bool correct, std::optional<double> rt,
                   TrialOutcome outcome = TrialOutcome::Acquired, Phase phase = Phase::Testing) {
  static const auto layout = build_layout(6);
  TrialRecord r;
  r.phase = phase;
  r.target = classify_target(angle, layout);
  r.requested_mode = r.rendered_mode = mode;
  r.correct = correct;
  r.acquisition_ms = rt;
  r.outcome = outcome;
  return r;
}

}  // namespace

TEST(PlanSession, CountsAndIds) {
  SessionConfig c;
  const auto plan = plan_session(c);
  ASSERT_EQ(plan.size(), 24u * 5u);
  std::map<double, int> per_target;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    EXPECT_EQ(plan[i].trial_id, static_cast<int>(i));
    EXPECT_EQ(plan[i].phase, Phase::Testing);
    EXPECT_EQ(plan[i].requested_mode, StimulusMode::Dynamic);
    ++per_target[plan[i].target.angle_deg];
  }
  ASSERT_EQ(per_target.size(), 24u);
  for (const auto& [a, n] : per_target) EXPECT_EQ(n, 5) << a;
}

TEST(PlanSession, SeededShuffle) {
  SessionConfig c;
  const auto a = plan_session(c), b = plan_session(c);
  EXPECT_EQ(a, b);
  c.randomization_seed = 2;
  EXPECT_NE(plan_session(c), a);
  // Not simply the target order.
  bool sorted = true;
  for (std::size_t i = 1; i < 24; ++i) sorted &= a[i].target.angle_deg > a[i - 1].target.angle_deg;
  EXPECT_FALSE(sorted);
}

TEST(PlanSession, TrainingBlockComesFirst) {
  SessionConfig c = small_config();
  c.training_repetitions = 1;
  const auto plan = plan_session(c);
  ASSERT_EQ(plan.size(), 12u * 3u);
  for (std::size_t i = 0; i < plan.size(); ++i)
    EXPECT_EQ(plan[i].phase, i < 12 ? Phase::Training : Phase::Testing) << i;

  c.phase = Phase::Training;
  for (const auto& t : plan_session(c)) EXPECT_EQ(t.phase, Phase::Training);
}

TEST(PlanSession, Interleaved) {
  SessionConfig c;
  c.between_mode = BetweenMode::Interleaved;
  c.repetitions = 1;
  const auto plan = plan_session(c);
  EXPECT_EQ(plan.size(), 6u + 18u * 2u);
  for (const auto& t : plan) {
    if (t.target.kind == TargetKind::OnTactor) {
      EXPECT_EQ(t.requested_mode, StimulusMode::Static);
    }
  }
}

TEST(Acquisition, Examples) {
  SessionConfig c;
  const AcquisitionParams p{};
  std::vector<CursorSample> trace;
  for (int k = 0; k < 30; ++k) trace.push_back({10.0 * k, 0.0, 0.0});
  for (int k = 30; k <= 60; ++k) trace.push_back(at(10.0 * k, 46));
  const auto a = detect_acquisition(trace, c.targets, p);
  ASSERT_TRUE(a);
  EXPECT_DOUBLE_EQ(a->target.angle_deg, 45);
  EXPECT_DOUBLE_EQ(a->acquisition_ms, 300);

  // 190 ms of hold is not enough.
  trace.resize(50);
  EXPECT_FALSE(detect_acquisition(trace, c.targets, p));

  // Inside the radius never counts.
  std::vector<CursorSample> inner;
  for (int k = 0; k < 100; ++k) inner.push_back(at(10.0 * k, 45, 0.85));
  EXPECT_FALSE(detect_acquisition(inner, c.targets, p));

  // Sliding into a neighbouring sector restarts the hold.
  std::vector<CursorSample> slide;
  for (int k = 0; k < 15; ++k) slide.push_back(at(10.0 * k, 45));
  for (int k = 15; k < 60; ++k) slide.push_back(at(10.0 * k, 61));
  const auto b = detect_acquisition(slide, c.targets, p);
  ASSERT_TRUE(b);
  EXPECT_DOUBLE_EQ(b->target.angle_deg, 60);
  EXPECT_DOUBLE_EQ(b->acquisition_ms, 150);
}

TEST(Acquisition, SectorsAroundSeam) {
  SessionConfig c;
  EXPECT_DOUBLE_EQ(sector_target(at(0, 357), c.targets, {})->angle_deg, 0);
  EXPECT_DOUBLE_EQ(sector_target(at(0, 3), c.targets, {})->angle_deg, 0);
  EXPECT_DOUBLE_EQ(sector_target(at(0, 340), c.targets, {})->angle_deg, 345);
  EXPECT_EQ(sector_target(at(0, 10, 0.5), c.targets, {}), nullptr);
}

TEST(Acquisition, MatchesBruteForceOnRandomTraces) {
  SessionConfig c;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> step(0.0, 1.5);
  std::bernoulli_distribution dip(0.02);
  int hits = 0;
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<CursorSample> trace;
    double a = std::uniform_real_distribution<double>(0, 360)(rng);
    for (int k = 0; k < 300; ++k) {
      a += step(rng);
      trace.push_back(at(10.0 * k, a, dip(rng) ? 0.85 : 0.95));
    }
    const auto got = detect_acquisition(trace, c.targets, c.acquisition);
    const auto want = oracle_acquire(trace, c.targets, c.acquisition);
    ASSERT_EQ(got.has_value(), want.has_value()) << trial;
    if (!got) continue;
    ++hits;
    EXPECT_EQ(got->target, want->target) << trial;
    EXPECT_DOUBLE_EQ(got->acquisition_ms, want->acquisition_ms) << trial;

    // Causal: the prefix ending at the firing sample gives the same answer.
    std::size_t fire = 0;
    while (trace[fire].t_ms < got->acquisition_ms + c.acquisition.hold_ms - 1e-9) ++fire;
    std::vector<CursorSample> prefix(trace.begin(), trace.begin() + static_cast<long>(fire) + 1);
    const auto early = detect_acquisition(prefix, c.targets, c.acquisition);
    ASSERT_TRUE(early);
    EXPECT_DOUBLE_EQ(early->acquisition_ms, got->acquisition_ms);
    prefix.pop_back();
    EXPECT_FALSE(detect_acquisition(prefix, c.targets, c.acquisition));
  }
  EXPECT_GT(hits, 50);
}

TEST(Metrics, Example) {
  std::vector<TrialRecord> rs;
  for (int i = 0; i < 5; ++i) rs.push_back(record(45, StimulusMode::Dynamic, i != 2, 1000.0 + 100 * (i - 2)));
  rs.push_back(record(45, StimulusMode::Dynamic, false, std::nullopt, TrialOutcome::Aborted));
  rs.push_back(record(45, StimulusMode::Dynamic, true, 50.0, TrialOutcome::Acquired, Phase::Training));
  const auto m = compute_metrics(rs);
  const auto* d = m.direction(45, StimulusMode::Dynamic);
  ASSERT_NE(d, nullptr);
  EXPECT_EQ(d->stats.attempted, 5);
  EXPECT_EQ(d->stats.correct, 4);
  EXPECT_DOUBLE_EQ(d->stats.accuracy, 0.8);
  ASSERT_TRUE(d->stats.mean_rt_ms);
  EXPECT_DOUBLE_EQ(*d->stats.mean_rt_ms, 1000.0);
  EXPECT_EQ(m.overall.attempted, 5);
  EXPECT_EQ(m.group(TargetKind::Between, StimulusMode::Dynamic)->stats, d->stats);
  EXPECT_EQ(m.group(TargetKind::OnTactor, StimulusMode::Static), nullptr);
}

TEST(Metrics, TimeoutsCountAsWrongWithoutRt) {
  std::vector<TrialRecord> rs{record(90, StimulusMode::Static, true, 400.0),
                              record(90, StimulusMode::Static, false, std::nullopt, TrialOutcome::TimedOut)};
  const auto m = compute_metrics(rs);
  EXPECT_DOUBLE_EQ(m.overall.accuracy, 0.5);
  EXPECT_EQ(m.overall.rt_count, 1);
  EXPECT_DOUBLE_EQ(*m.overall.mean_rt_ms, 400.0);
  EXPECT_TRUE(compute_metrics({}).per_direction.empty());
  EXPECT_FALSE(compute_metrics({}).overall.mean_rt_ms);
}

TEST(StateMachine, Transitions) {
  SessionStateMachine s(small_config());
  EXPECT_EQ(s.state(), SessionStateMachine::State::Idle);
  EXPECT_THROW(s.complete_trial({}), SessionStateMachine::Conflict);
  const Trial t = s.begin_trial();
  EXPECT_THROW(s.begin_trial(), SessionStateMachine::Conflict);
  EXPECT_THROW(s.finish_early(), SessionStateMachine::Conflict);
  TrialRecord wrong;
  wrong.trial_id = t.trial_id + 1;
  EXPECT_THROW(s.complete_trial(wrong), SessionStateMachine::Conflict);
  TrialRecord r;
  r.trial_id = t.trial_id;
  s.complete_trial(r);
  EXPECT_EQ(s.state(), SessionStateMachine::State::Idle);
  EXPECT_EQ(s.records().size(), 1u);
  s.finish_early();
  EXPECT_EQ(s.state(), SessionStateMachine::State::Finished);
  EXPECT_THROW(s.begin_trial(), SessionStateMachine::Conflict);
  EXPECT_EQ(std::string(to_string(s.state())), "finished");
}

TEST(StateMachine, RunsToCompletion) {
  SessionStateMachine s(small_config());
  std::size_t n = 0;
  while (s.state() != SessionStateMachine::State::Finished) {
    const Trial& t = s.begin_trial();
    TrialRecord r;
    r.trial_id = t.trial_id;
    s.complete_trial(r);
    ++n;
  }
  EXPECT_EQ(n, 24u);
  EXPECT_EQ(s.pending_trial(), nullptr);
}

TEST(StateMachine, RejectsInvalidConfig) {
  SessionConfig c;
  c.acquisition.sector_halfwidth_deg = 10;
  EXPECT_THROW(SessionStateMachine{c}, std::invalid_argument);
  c = {};
  c.repetitions = 0;
  EXPECT_THROW(SessionStateMachine{c}, std::invalid_argument);
  c = {};
  c.falloff.span_deg = 45;
  EXPECT_THROW(SessionStateMachine{c}, std::invalid_argument);
}

TEST(RunTrial, ScriptedAcquisition) {
  SessionConfig c;
  Trial t{7, Phase::Testing, *c.targets.find(45), StimulusMode::Dynamic};
  std::vector<CursorSample> trace;
  for (int k = 0; k < 130; ++k) trace.push_back({10.0 * k, 0, 0});
  for (int k = 130; k <= 150; ++k) trace.push_back(at(10.0 * k, 44));
  ScriptedResponses rs(trace);
  NullPlayer player;
  ManualClock clock(5000);
  std::optional<TrialStartInfo> started;
  TrialObserver obs{[&](const TrialStartInfo& i) { started = i; }, {}};
  const auto r = run_trial(t, c, player, rs, clock, obs);
  EXPECT_EQ(r.outcome, TrialOutcome::Acquired);
  EXPECT_TRUE(r.correct);
  EXPECT_DOUBLE_EQ(*r.acquisition_ms, 1300);
  EXPECT_DOUBLE_EQ(r.onset_ts_ms, 5000);
  EXPECT_EQ(r.rendered_mode, StimulusMode::Dynamic);
  EXPECT_EQ(player.starts(), 1);
  ASSERT_TRUE(started);
  EXPECT_FALSE(started->reveal);
}

TEST(RunTrial, TrainingRevealsTarget) {
  SessionConfig c;
  Trial t{0, Phase::Testing, *c.targets.find(90), StimulusMode::Dynamic};
  ScriptedResponses rs(std::vector<ResponseEvent>{{ResponseEvent::Kind::Abort, {}}});
  NullPlayer player;
  ManualClock clock;
  std::optional<TrialStartInfo> started;
  TrialObserver obs{[&](const TrialStartInfo& i) { started = i; }, {}};
  const auto r = training_trial(t, c, player, rs, clock, obs);
  EXPECT_EQ(r.outcome, TrialOutcome::Aborted);
  EXPECT_EQ(r.rendered_mode, StimulusMode::Static);
  ASSERT_TRUE(started && started->reveal);
  EXPECT_EQ(*started->reveal, t.target);
}

TEST(RunTrial, ConfirmLostAndTimeout) {
  SessionConfig c;
  Trial t{0, Phase::Testing, *c.targets.find(45), StimulusMode::Static};
  NullPlayer player;
  ManualClock clock;

  ScriptedResponses confirm(std::vector<ResponseEvent>{{ResponseEvent::Kind::Sample, at(100, 60)},
                                                       {ResponseEvent::Kind::Confirm, {}}});
  auto r = run_trial(t, c, player, confirm, clock);
  EXPECT_EQ(r.outcome, TrialOutcome::Acquired);
  EXPECT_FALSE(r.correct);
  EXPECT_DOUBLE_EQ(r.selected->angle_deg, 60);

  ScriptedResponses lost(std::vector<ResponseEvent>{{ResponseEvent::Kind::Lost, {}}});
  EXPECT_EQ(run_trial(t, c, player, lost, clock).outcome, TrialOutcome::StreamLost);

  ScriptedResponses late(std::vector<CursorSample>{at(10001, 45)});
  r = run_trial(t, c, player, late, clock);
  EXPECT_EQ(r.outcome, TrialOutcome::TimedOut);
  EXPECT_FALSE(r.correct);
  EXPECT_TRUE(r.cursor_trace.empty());
}

TEST(Simulate, NoiselessIsPerfectAndDynamicCostsOnePeriod) {
  SessionConfig c;
  c.between_mode = BetweenMode::Interleaved;
  c.repetitions = 2;
  const auto res = simulate_session(c, {});
  EXPECT_EQ(res.records.size(), 2u * (6 + 36));
  EXPECT_DOUBLE_EQ(res.metrics.overall.accuracy, 1.0);
  const auto* st = res.metrics.group(TargetKind::Between, StimulusMode::Static);
  const auto* dy = res.metrics.group(TargetKind::Between, StimulusMode::Dynamic);
  const auto* on = res.metrics.group(TargetKind::OnTactor, StimulusMode::Static);
  ASSERT_TRUE(st && dy && on);
  EXPECT_DOUBLE_EQ(*st->stats.mean_rt_ms, 300.0);
  EXPECT_DOUBLE_EQ(*on->stats.mean_rt_ms, 300.0);
  EXPECT_DOUBLE_EQ(*dy->stats.mean_rt_ms - *st->stats.mean_rt_ms, 1000.0);
  // Onsets move forward in virtual time.
  for (std::size_t i = 1; i < res.records.size(); ++i)
    EXPECT_GT(res.records[i].onset_ts_ms, res.records[i - 1].onset_ts_ms);
}

TEST(Simulate, TrainingTrialsExcludedFromMetrics) {
  SessionConfig c = small_config();
  c.training_repetitions = 1;
  PerceiverModel m;
  m.angular_noise_sigma_deg = 30;
  const auto res = simulate_session(c, m);
  EXPECT_EQ(res.records.size(), 36u);
  EXPECT_EQ(res.metrics.overall.attempted, 24);
  std::vector<TrialRecord> testing;
  for (const auto& r : res.records)
    if (r.phase == Phase::Testing) testing.push_back(r);
  EXPECT_EQ(compute_metrics(testing), res.metrics);
}

TEST(Simulate, Deterministic) {
  PerceiverModel m;
  m.angular_noise_sigma_deg = 10;
  SessionConfig c = small_config();
  EXPECT_EQ(simulate_session(c, m).records, simulate_session(c, m).records);
}
