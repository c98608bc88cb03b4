#pragma once

// Session planning, target acquisition, and metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tactile/amplitude.hpp"
#include "tactile/dynamics.hpp"
#include "tactile/geometry.hpp"
#include "tactile/perceiver.hpp"

namespace tactile {

enum class BetweenMode { Static, Dynamic, Interleaved };
enum class Phase { Training, Testing };
enum class FramesDownstream { Training, Always, Never };

inline const char* to_string(BetweenMode m) noexcept {
  switch (m) {
    case BetweenMode::Static: return "static";
    case BetweenMode::Dynamic: return "dynamic";
    case BetweenMode::Interleaved: return "interleaved";
  }
  return "?";
}
inline BetweenMode between_mode_from_string(const std::string& s) {
  if (s == "static") return BetweenMode::Static;
  if (s == "dynamic") return BetweenMode::Dynamic;
  if (s == "interleaved") return BetweenMode::Interleaved;
  throw std::invalid_argument("unknown between mode: " + s);
}
inline const char* to_string(Phase p) noexcept { return p == Phase::Training ? "training" : "testing"; }
inline Phase phase_from_string(const std::string& s) {
  if (s == "training") return Phase::Training;
  if (s == "testing") return Phase::Testing;
  throw std::invalid_argument("unknown phase: " + s);
}
inline const char* to_string(FramesDownstream f) noexcept {
  switch (f) {
    case FramesDownstream::Training: return "training";
    case FramesDownstream::Always: return "always";
    case FramesDownstream::Never: return "never";
  }
  return "?";
}
inline FramesDownstream frames_downstream_from_string(const std::string& s) {
  if (s == "training") return FramesDownstream::Training;
  if (s == "always") return FramesDownstream::Always;
  if (s == "never") return FramesDownstream::Never;
  throw std::invalid_argument("unknown frames_downstream: " + s);
}

struct AcquisitionParams {
  double radius_fraction = 0.9;
  double sector_halfwidth_deg = 7.5;
  double hold_ms = 200.0;

  bool operator==(const AcquisitionParams&) const = default;
};

struct SessionConfig {
  TactorLayout layout = build_layout(6);
  TargetSet targets = build_target_set(layout, 3);
  FalloffParams falloff{};
  RenderOptions render{};
  int repetitions = 5;
  int training_repetitions = 0;
  BetweenMode between_mode = BetweenMode::Dynamic;
  Phase phase = Phase::Testing;
  std::uint64_t randomization_seed = 1;
  AcquisitionParams acquisition{};
  int record_rate_hz = 100;
  double inter_trial_gap_ms = 1000.0;
  double trial_timeout_ms = 10000.0;
  FramesDownstream frames_downstream = FramesDownstream::Training;
};

inline void validate(const SessionConfig& c) {
  validate(c.layout, false);
  validate(c.falloff);
  if (std::fabs(c.falloff.span_deg - c.layout.spacing_deg) > kAngleEps)
    throw std::invalid_argument("config: falloff span must equal tactor spacing");
  if (c.targets.empty()) throw std::invalid_argument("config: empty target set");
  if (c.repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
  if (c.training_repetitions < 0) throw std::invalid_argument("config: training_repetitions < 0");
  if (c.record_rate_hz <= 0) throw std::invalid_argument("config: record rate must be > 0");
  if (!(c.trial_timeout_ms > 0)) throw std::invalid_argument("config: timeout must be > 0");
  if (!(c.acquisition.radius_fraction > 0 && c.acquisition.radius_fraction <= 1))
    throw std::invalid_argument("config: radius_fraction must be in (0, 1]");
  if (!(c.acquisition.hold_ms >= 0)) throw std::invalid_argument("config: hold_ms must be >= 0");
  if (std::fabs(c.acquisition.sector_halfwidth_deg - c.targets.pitch_deg() / 2.0) > 1e-6)
    throw std::invalid_argument("config: sector half-width must be half the target pitch");
}

struct Trial {
  int trial_id = 0;
  Phase phase = Phase::Testing;
  TargetDirection target;
  StimulusMode requested_mode = StimulusMode::Dynamic;

  bool operator==(const Trial&) const = default;
};

/// Training block (if any) then the main block, each a seeded shuffle in
/// which every (target, mode) item appears once per repetition.
inline std::vector<Trial> plan_session(const SessionConfig& config) {
  std::vector<std::pair<TargetDirection, StimulusMode>> items;
  for (const auto& t : config.targets) {
    switch (config.between_mode) {
      case BetweenMode::Static: items.emplace_back(t, StimulusMode::Static); break;
      case BetweenMode::Dynamic: items.emplace_back(t, StimulusMode::Dynamic); break;
      case BetweenMode::Interleaved:
        items.emplace_back(t, StimulusMode::Static);
        if (t.kind == TargetKind::Between) items.emplace_back(t, StimulusMode::Dynamic);
        break;
    }
  }

  std::mt19937_64 rng(config.randomization_seed);
  std::vector<Trial> plan;
  auto add_block = [&](Phase phase, int reps) {
    std::vector<Trial> block;
    for (int r = 0; r < reps; ++r)
      for (const auto& [t, m] : items) block.push_back(Trial{0, phase, t, m});
    std::shuffle(block.begin(), block.end(), rng);
    plan.insert(plan.end(), block.begin(), block.end());
  };
  if (config.phase == Phase::Testing) add_block(Phase::Training, config.training_repetitions);
  add_block(config.phase, config.repetitions);
  for (std::size_t i = 0; i < plan.size(); ++i) plan[i].trial_id = static_cast<int>(i);
  return plan;
}

/// One joystick/mouse sample. x, y are ellipse-normalized so that the
/// direction theta sits at (cos theta, sin theta) on the unit rim.
struct CursorSample {
  double t_ms = 0.0;
  double x = 0.0;
  double y = 0.0;

  double radius() const noexcept { return std::hypot(x, y); }
  double angle_deg() const noexcept {
    return wrap_360(std::atan2(y, x) * 180.0 / 3.14159265358979323846);
  }
  bool operator==(const CursorSample&) const = default;
};

struct Acquisition {
  TargetDirection target;
  double acquisition_ms = 0.0;
};

/// Target whose sector holds the sample, if the cursor is out at the rim.
inline const TargetDirection* sector_target(const CursorSample& s, const TargetSet& targets,
                                            const AcquisitionParams& params) {
  if (s.radius() < params.radius_fraction) return nullptr;
  const double theta = s.angle_deg();
  const auto& t = snap_to_target(theta, targets);
  if (circular_distance(theta, t.angle_deg) > params.sector_halfwidth_deg + kAngleEps) return nullptr;
  return &t;
}

/// Streaming acquisition detection. Fires on the sample that completes a
/// continuous hold inside one target's sector and reports the hold's start.
class AcquisitionDetector {
 public:
  AcquisitionDetector(const TargetSet& targets, AcquisitionParams params)
      : targets_(&targets), params_(params) {}

  std::optional<Acquisition> feed(const CursorSample& s) {
    if (fired_) return std::nullopt;
    const TargetDirection* t = sector_target(s, *targets_, params_);
    if (!t) {
      candidate_ = nullptr;
      return std::nullopt;
    }
    if (t != candidate_) {
      candidate_ = t;
      start_ms_ = s.t_ms;
    }
    if (s.t_ms - start_ms_ >= params_.hold_ms - 1e-9) {
      fired_ = true;
      return Acquisition{*candidate_, start_ms_};
    }
    return std::nullopt;
  }

  void reset() {
    candidate_ = nullptr;
    fired_ = false;
  }

 private:
  const TargetSet* targets_;
  AcquisitionParams params_;
  const TargetDirection* candidate_ = nullptr;
  double start_ms_ = 0.0;
  bool fired_ = false;
};

inline std::optional<Acquisition> detect_acquisition(const std::vector<CursorSample>& trace,
                                                     const TargetSet& targets,
                                                     const AcquisitionParams& params) {
  AcquisitionDetector det(targets, params);
  for (const auto& s : trace)
    if (auto a = det.feed(s)) return a;
  return std::nullopt;
}

enum class TrialOutcome { Acquired, TimedOut, Aborted, StreamLost };

inline const char* to_string(TrialOutcome o) noexcept {
  switch (o) {
    case TrialOutcome::Acquired: return "acquired";
    case TrialOutcome::TimedOut: return "timed_out";
    case TrialOutcome::Aborted: return "aborted";
    case TrialOutcome::StreamLost: return "stream_lost";
  }
  return "?";
}
inline TrialOutcome trial_outcome_from_string(const std::string& s) {
  if (s == "acquired") return TrialOutcome::Acquired;
  if (s == "timed_out") return TrialOutcome::TimedOut;
  if (s == "aborted") return TrialOutcome::Aborted;
  if (s == "stream_lost") return TrialOutcome::StreamLost;
  throw std::invalid_argument("unknown trial outcome: " + s);
}

struct TrialRecord {
  int trial_id = 0;
  Phase phase = Phase::Testing;
  TargetDirection target;
  StimulusMode requested_mode = StimulusMode::Dynamic;
  StimulusMode rendered_mode = StimulusMode::Dynamic;
  double onset_ts_ms = 0.0;
  std::vector<CursorSample> cursor_trace;
  std::optional<TargetDirection> selected;
  std::optional<double> acquisition_ms;
  bool correct = false;
  TrialOutcome outcome = TrialOutcome::TimedOut;

  bool completed() const noexcept {
    return outcome == TrialOutcome::Acquired || outcome == TrialOutcome::TimedOut;
  }
  bool operator==(const TrialRecord&) const = default;
};

struct GroupStats {
  int attempted = 0;
  int correct = 0;
  double accuracy = 0.0;
  int rt_count = 0;
  std::optional<double> mean_rt_ms;

  bool operator==(const GroupStats&) const = default;
};

struct DirectionMetrics {
  double direction_deg = 0.0;
  TargetKind kind = TargetKind::OnTactor;
  StimulusMode mode = StimulusMode::Static;
  GroupStats stats;
  bool operator==(const DirectionMetrics&) const = default;
};

struct KindModeMetrics {
  TargetKind kind = TargetKind::OnTactor;
  StimulusMode mode = StimulusMode::Static;
  GroupStats stats;
  bool operator==(const KindModeMetrics&) const = default;
};

struct SessionMetrics {
  std::vector<DirectionMetrics> per_direction;  // sorted by (direction, mode)
  std::vector<KindModeMetrics> by_kind_mode;
  GroupStats overall;

  const DirectionMetrics* direction(double deg, std::optional<StimulusMode> mode = {}) const {
    for (const auto& d : per_direction)
      if (circular_distance(d.direction_deg, deg) < 1e-6 && (!mode || d.mode == *mode)) return &d;
    return nullptr;
  }
  const KindModeMetrics* group(TargetKind kind, StimulusMode mode) const {
    for (const auto& g : by_kind_mode)
      if (g.kind == kind && g.mode == mode) return &g;
    return nullptr;
  }
  bool operator==(const SessionMetrics&) const = default;
};

namespace detail {
struct Accumulator {
  int attempted = 0, correct = 0, rt_count = 0;
  double rt_sum = 0.0;

  void add(const TrialRecord& r) {
    ++attempted;
    correct += r.correct ? 1 : 0;
    if (r.acquisition_ms) {
      ++rt_count;
      rt_sum += *r.acquisition_ms;
    }
  }
  GroupStats finish() const {
    GroupStats g;
    g.attempted = attempted;
    g.correct = correct;
    g.accuracy = attempted ? static_cast<double>(correct) / attempted : 0.0;
    g.rt_count = rt_count;
    if (rt_count) g.mean_rt_ms = rt_sum / rt_count;
    return g;
  }
};
}  // namespace detail

/// Testing-phase, completed trials only.
inline SessionMetrics compute_metrics(const std::vector<TrialRecord>& records) {
  std::map<std::pair<long long, int>, std::pair<const TrialRecord*, detail::Accumulator>> by_dir;
  std::map<std::pair<int, int>, detail::Accumulator> by_group;
  detail::Accumulator all;

  for (const auto& r : records) {
    if (r.phase != Phase::Testing || !r.completed()) continue;
    // Key directions on micro-degrees so equal angles group together.
    const auto key = std::make_pair(std::llround(r.target.angle_deg * 1e6),
                                    static_cast<int>(r.rendered_mode));
    auto& slot = by_dir[key];
    if (!slot.first) slot.first = &r;
    slot.second.add(r);
    by_group[{static_cast<int>(r.target.kind), static_cast<int>(r.rendered_mode)}].add(r);
    all.add(r);
  }

  SessionMetrics m;
  for (const auto& [key, slot] : by_dir)
    m.per_direction.push_back({slot.first->target.angle_deg, slot.first->target.kind,
                               slot.first->rendered_mode, slot.second.finish()});
  for (const auto& [key, acc] : by_group)
    m.by_kind_mode.push_back({static_cast<TargetKind>(key.first),
                              static_cast<StimulusMode>(key.second), acc.finish()});
  m.overall = all.finish();
  return m;
}

/// Trial bookkeeping for one session: at most one active trial, trials
/// handed out in plan order. Not thread-safe; owners serialize access.
class SessionStateMachine {
 public:
  enum class State { Idle, TrialActive, Finished };

  class Conflict : public std::logic_error {
   public:
    using std::logic_error::logic_error;
  };

  explicit SessionStateMachine(SessionConfig config)
      : config_(checked(std::move(config))), plan_(plan_session(config_)) {}

  const Trial& begin_trial() {
    if (state_ == State::TrialActive) throw Conflict("a trial is already active");
    if (state_ == State::Finished) throw Conflict("session is finished");
    state_ = State::TrialActive;
    return plan_[next_];
  }

  void complete_trial(TrialRecord record) {
    if (state_ != State::TrialActive) throw Conflict("no active trial");
    if (record.trial_id != plan_[next_].trial_id) throw Conflict("record does not match active trial");
    records_.push_back(std::move(record));
    ++next_;
    state_ = next_ >= plan_.size() ? State::Finished : State::Idle;
  }

  State state() const noexcept { return state_; }
  std::size_t next_index() const noexcept { return next_; }
  const std::vector<Trial>& plan() const noexcept { return plan_; }
  const SessionConfig& config() const noexcept { return config_; }
  const std::vector<TrialRecord>& records() const noexcept { return records_; }
  const Trial* pending_trial() const noexcept {
    return next_ < plan_.size() ? &plan_[next_] : nullptr;
  }
  SessionMetrics metrics() const { return compute_metrics(records_); }

  /// Stop handing out trials (after a lost stream).
  void finish_early() {
    if (state_ == State::TrialActive) throw Conflict("a trial is still active");
    state_ = State::Finished;
  }

 private:
  static SessionConfig checked(SessionConfig c) {
    validate(c);
    return c;
  }

  SessionConfig config_;
  std::vector<Trial> plan_;
  std::vector<TrialRecord> records_;
  std::size_t next_ = 0;
  State state_ = State::Idle;
};

inline const char* to_string(SessionStateMachine::State s) noexcept {
  switch (s) {
    case SessionStateMachine::State::Idle: return "idle";
    case SessionStateMachine::State::TrialActive: return "trial_active";
    case SessionStateMachine::State::Finished: return "finished";
  }
  return "?";
}

}  // namespace tactile
