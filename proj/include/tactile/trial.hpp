#pragma once

// Running trials: stimulus players, response streams, and the trial loop
// that ties them to acquisition detection. Also the in-process synthetic
// session driver used by `simulate`.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "tactile/clock.hpp"
#include "tactile/device.hpp"
#include "tactile/dynamics.hpp"
#include "tactile/experiment.hpp"
#include "tactile/perceiver.hpp"
#include "tactile/playback.hpp"

namespace tactile {

class StimulusPlayer {
 public:
  virtual ~StimulusPlayer() = default;
  virtual void start(const StimulusWaveform& w) = 0;
  virtual PlaybackReport stop() = 0;
};

/// Plays nothing; remembers what it was asked to play.
class NullPlayer final : public StimulusPlayer {
 public:
  void start(const StimulusWaveform& w) override {
    last_ = w;
    ++starts_;
  }
  PlaybackReport stop() override { return {}; }

  int starts() const noexcept { return starts_; }
  const std::optional<StimulusWaveform>& last() const noexcept { return last_; }

 private:
  std::optional<StimulusWaveform> last_;
  int starts_ = 0;
};

/// Streams waveforms to a frame sink in real time. Sequence numbers continue
/// across trials so the device sees one unbroken stream.
template <typename Clock = SteadyClock>
class DevicePlayer final : public StimulusPlayer {
 public:
  using FrameCallback = std::function<void(std::uint64_t, const AmplitudeVector&)>;

  DevicePlayer(FrameSink& sink, Clock& clock) : sink_(sink), clock_(clock) {}
  ~DevicePlayer() override { stop(); }

  void set_frame_callback(FrameCallback cb) { on_frame_ = std::move(cb); }

  void start(const StimulusWaveform& w) override {
    stop();
    PlaybackOptions opts;
    opts.first_seq = seq_;
    opts.on_frame = on_frame_;
    playback_ = stream_waveform(w, sink_, clock_, std::move(opts));
  }

  PlaybackReport stop() override {
    playback_.stop();
    const auto r = playback_.report();
    if (r.frames_sent) seq_ = r.next_seq;
    playback_ = Playback{};
    return r;
  }

 private:
  FrameSink& sink_;
  Clock& clock_;
  Playback playback_;
  FrameCallback on_frame_;
  std::uint8_t seq_ = 0;
};

struct ResponseEvent {
  enum class Kind { Sample, Confirm, Abort, Lost, Timeout };
  Kind kind = Kind::Timeout;
  CursorSample sample{};
};

class ResponseStream {
 public:
  virtual ~ResponseStream() = default;
  /// Blocks until an event arrives or the deadline passes (then Timeout).
  virtual ResponseEvent next(std::chrono::steady_clock::time_point deadline) = 0;
};

/// Replays a fixed trace, then reports Timeout.
class ScriptedResponses final : public ResponseStream {
 public:
  explicit ScriptedResponses(std::vector<ResponseEvent> events) : events_(std::move(events)) {}
  explicit ScriptedResponses(const std::vector<CursorSample>& trace) {
    for (const auto& s : trace) events_.push_back({ResponseEvent::Kind::Sample, s});
  }

  ResponseEvent next(std::chrono::steady_clock::time_point) override {
    if (pos_ >= events_.size()) return {};
    return events_[pos_++];
  }

 private:
  std::vector<ResponseEvent> events_;
  std::size_t pos_ = 0;
};

/// Ordered, thread-safe inbox. Producers push from any thread; the trial
/// loop is the single consumer.
class ResponseChannel final : public ResponseStream {
 public:
  void push(ResponseEvent e) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(e);
    }
    cv_.notify_one();
  }
  void push_sample(const CursorSample& s) { push({ResponseEvent::Kind::Sample, s}); }

  void clear() {
    std::lock_guard lock(mu_);
    queue_.clear();
  }

  ResponseEvent next(std::chrono::steady_clock::time_point deadline) override {
    std::unique_lock lock(mu_);
    if (!cv_.wait_until(lock, deadline, [&] { return !queue_.empty(); })) return {};
    auto e = queue_.front();
    queue_.pop_front();
    return e;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<ResponseEvent> queue_;
};

struct TrialStartInfo {
  int trial_id = 0;
  Phase phase = Phase::Testing;
  std::optional<TargetDirection> reveal;  // Training only
  double onset_ms = 0.0;
};

struct TrialObserver {
  std::function<void(const TrialStartInfo&)> on_start;
  std::function<void(const TrialRecord&)> on_end;
};

/// Run one trial: start the stimulus at onset, consume responses until an
/// acquisition, a confirm, an abort, a lost stream, or the timeout.
template <typename Clock>
TrialRecord run_trial(const Trial& trial, const SessionConfig& config, StimulusPlayer& player,
                      ResponseStream& responses, Clock& clock, const TrialObserver& observer = {}) {
  TrialRecord rec;
  rec.trial_id = trial.trial_id;
  rec.phase = trial.phase;
  rec.target = trial.target;
  rec.requested_mode = trial.requested_mode;
  rec.rendered_mode = rendered_mode(trial.target, trial.requested_mode);

  const auto waveform =
      render_waveform(trial.target, rec.rendered_mode, config.layout, config.falloff, config.render);

  rec.onset_ts_ms = clock.now_ms();
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double, std::milli>(config.trial_timeout_ms));
  player.start(waveform);
  if (observer.on_start) {
    TrialStartInfo info{trial.trial_id, trial.phase, std::nullopt, rec.onset_ts_ms};
    if (trial.phase == Phase::Training) info.reveal = trial.target;
    observer.on_start(info);
  }

  AcquisitionDetector detector(config.targets, config.acquisition);
  rec.outcome = TrialOutcome::TimedOut;
  for (bool done = false; !done;) {
    const auto ev = responses.next(deadline);
    switch (ev.kind) {
      case ResponseEvent::Kind::Sample: {
        if (!rec.cursor_trace.empty() && ev.sample.t_ms < rec.cursor_trace.back().t_ms) break;
        if (ev.sample.t_ms > config.trial_timeout_ms) {
          done = true;
          break;
        }
        rec.cursor_trace.push_back(ev.sample);
        if (auto a = detector.feed(ev.sample)) {
          rec.selected = a->target;
          rec.acquisition_ms = a->acquisition_ms;
          rec.outcome = TrialOutcome::Acquired;
          done = true;
        }
        break;
      }
      case ResponseEvent::Kind::Confirm:
        if (!rec.cursor_trace.empty()) {
          const auto& last = rec.cursor_trace.back();
          if (const auto* t = sector_target(last, config.targets, config.acquisition)) {
            rec.selected = *t;
            rec.acquisition_ms = last.t_ms;
            rec.outcome = TrialOutcome::Acquired;
            done = true;
          }
        }
        break;
      case ResponseEvent::Kind::Abort:
        rec.outcome = TrialOutcome::Aborted;
        done = true;
        break;
      case ResponseEvent::Kind::Lost:
        rec.outcome = TrialOutcome::StreamLost;
        done = true;
        break;
      case ResponseEvent::Kind::Timeout:
        done = true;
        break;
    }
  }
  player.stop();

  rec.correct = rec.selected.has_value() && *rec.selected == rec.target;
  if (observer.on_end) observer.on_end(rec);
  return rec;
}

/// run_trial with the true target revealed to observers.
template <typename Clock>
TrialRecord training_trial(Trial trial, const SessionConfig& config, StimulusPlayer& player,
                           ResponseStream& responses, Clock& clock, const TrialObserver& observer = {}) {
  trial.phase = Phase::Training;
  return run_trial(trial, config, player, responses, clock, observer);
}

/// Cursor trace of an ideal participant: at the centre until the response
/// time, then parked on the rim at the perceived angle for the hold.
inline std::vector<CursorSample> synthetic_cursor_trace(const Perception& p,
                                                        const SessionConfig& config) {
  const double pitch = 1000.0 / static_cast<double>(config.record_rate_hz);
  const double rim = (1.0 + config.acquisition.radius_fraction) / 2.0;
  const double rad = p.angle_deg * 3.14159265358979323846 / 180.0;
  std::vector<CursorSample> trace;
  std::optional<double> reached;
  for (std::int64_t k = 0;; ++k) {
    const double t = pitch * static_cast<double>(k);
    if (t > config.trial_timeout_ms) break;
    if (t < p.response_time_ms) {
      trace.push_back({t, 0.0, 0.0});
      continue;
    }
    if (!reached) reached = t;
    trace.push_back({t, rim * std::cos(rad), rim * std::sin(rad)});
    if (t - *reached >= config.acquisition.hold_ms) break;
  }
  return trace;
}

struct SessionResult {
  SessionConfig config;
  std::vector<TrialRecord> records;
  SessionMetrics metrics;
};

/// Whole session against the ideal perceiver, in virtual time.
inline SessionResult simulate_session(const SessionConfig& config, const PerceiverModel& model,
                                      double start_ms = 0.0) {
  SessionStateMachine session(config);
  Perceiver perceiver(model);
  ManualClock clock(start_ms);
  NullPlayer player;

  while (session.state() != SessionStateMachine::State::Finished) {
    const Trial trial = session.begin_trial();
    const auto w = render_waveform(trial.target, rendered_mode(trial.target, trial.requested_mode),
                                   config.layout, config.falloff, config.render);
    const auto perception = perceiver.perceive(w, config.layout, config.falloff);
    ScriptedResponses responses(synthetic_cursor_trace(perception, config));
    auto rec = run_trial(trial, config, player, responses, clock);
    const double duration = rec.cursor_trace.empty() ? 0.0 : rec.cursor_trace.back().t_ms;
    clock.advance(duration + config.inter_trial_gap_ms);
    session.complete_trial(std::move(rec));
  }
  return {config, session.records(), session.metrics()};
}

}  // namespace tactile
