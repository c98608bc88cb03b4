#pragma once

// Dynamic (perturbed) stimuli.
//
// A between-tactor target is rendered as a virtual source that oscillates
// between its two bracketing tactors on a trapezoidal cycle: it dwells on
// one tactor, ramps linearly in angle to the other, dwells there, and ramps
// back. Dwell on each tactor is proportional to how close the target is to
// it, so the quartile point of a 60 deg gap dwells 600 ms on the near
// tactor and 200 ms on the far one inside a 1 s period with 100 ms ramps.
// The cycle starts dwelling on the nearest tactor.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tactile/amplitude.hpp"
#include "tactile/geometry.hpp"

namespace tactile {

enum class StimulusMode { Static, Dynamic };

inline const char* to_string(StimulusMode m) noexcept {
  return m == StimulusMode::Static ? "static" : "dynamic";
}

inline StimulusMode stimulus_mode_from_string(const std::string& s) {
  if (s == "static") return StimulusMode::Static;
  if (s == "dynamic") return StimulusMode::Dynamic;
  throw std::invalid_argument("unknown stimulus mode: " + s);
}

struct DwellSchedule {
  std::int64_t period_ms = 1000;
  std::int64_t transition_ms = 100;
  double dwell_first_ms = 0.0;   // lower-angle (first) bracket tactor
  double dwell_second_ms = 0.0;
  bool start_on_first = true;    // cycle begins on the nearest tactor
};

inline DwellSchedule dwell_times(const TargetDirection& target, const FalloffParams& params = {},
                                 std::int64_t period_ms = 1000, std::int64_t transition_ms = 100) {
  if (target.kind != TargetKind::Between)
    throw std::invalid_argument("dwell_times: on-tactor targets are always static");
  if (transition_ms <= 0 || period_ms <= 2 * transition_ms)
    throw std::invalid_argument("dwell_times: period must exceed two transitions");
  const double span = params.span_deg;
  const double offset_first = target.offset_deg;
  const double offset_second = span - offset_first;
  if (!(offset_first > 0.0 && offset_second > 0.0))
    throw std::invalid_argument("dwell_times: target offset outside its bracket");

  const double total = static_cast<double>(period_ms - 2 * transition_ms);
  DwellSchedule s;
  s.period_ms = period_ms;
  s.transition_ms = transition_ms;
  s.dwell_first_ms = total * offset_second / span;
  s.dwell_second_ms = total - s.dwell_first_ms;
  // Midpoint ties go to the lower-angle tactor.
  s.start_on_first = offset_first <= offset_second;
  return s;
}

/// Position of the oscillating source at `t_ms` after onset, in [0, 360).
inline double virtual_source_angle(double t_ms, const TargetDirection& target,
                                   const DwellSchedule& schedule, const TactorLayout& layout) {
  const double a = layout.angle(target.bracket.first);
  const double b = a + layout.spacing_deg;  // unwrapped so a -> b is counterclockwise
  const double period = static_cast<double>(schedule.period_ms);
  const double ramp = static_cast<double>(schedule.transition_ms);

  double t = std::fmod(t_ms, period);
  if (t < 0.0) t += period;

  const double from = schedule.start_on_first ? a : b;
  const double to = schedule.start_on_first ? b : a;
  const double dwell_from = schedule.start_on_first ? schedule.dwell_first_ms : schedule.dwell_second_ms;
  const double dwell_to = schedule.start_on_first ? schedule.dwell_second_ms : schedule.dwell_first_ms;

  double angle;
  if (t <= dwell_from) {
    angle = from;
  } else if (t < dwell_from + ramp) {
    angle = from + (to - from) * (t - dwell_from) / ramp;
  } else if (t <= dwell_from + ramp + dwell_to) {
    angle = to;
  } else {
    const double s = t - (dwell_from + ramp + dwell_to);
    angle = to + (from - to) * s / ramp;
  }
  return wrap_360(angle);
}

struct StimulusWaveform {
  StimulusMode mode = StimulusMode::Static;
  int frame_rate_hz = 100;
  std::vector<AmplitudeVector> frames;
  /// Frames per perturbation cycle; 1 for Static.
  std::size_t period_frames = 1;

  const AmplitudeVector& frame_at(std::size_t k) const { return frames.at(k % frames.size()); }
  double frame_time_ms(std::size_t k) const {
    return 1000.0 * static_cast<double>(k) / static_cast<double>(frame_rate_hz);
  }
};

struct RenderOptions {
  int frame_rate_hz = 100;
  std::int64_t period_ms = 1000;
  std::int64_t transition_ms = 100;
  std::size_t periods = 1;
};

/// Mode that is actually rendered: on-tactor targets are always static.
inline StimulusMode rendered_mode(const TargetDirection& target, StimulusMode requested) noexcept {
  return target.kind == TargetKind::OnTactor ? StimulusMode::Static : requested;
}

inline StimulusWaveform render_waveform(const TargetDirection& target, StimulusMode mode,
                                        const TactorLayout& layout,
                                        const FalloffParams& params = {},
                                        const RenderOptions& opts = {}) {
  if (opts.frame_rate_hz <= 0) throw std::invalid_argument("render_waveform: frame rate must be > 0");
  if ((opts.period_ms * opts.frame_rate_hz) % 1000 != 0 ||
      (opts.transition_ms * opts.frame_rate_hz) % 1000 != 0)
    throw std::invalid_argument(
        "render_waveform: period and transition must be whole numbers of frames");
  if (opts.periods == 0) throw std::invalid_argument("render_waveform: periods must be >= 1");

  StimulusWaveform w;
  w.frame_rate_hz = opts.frame_rate_hz;
  w.mode = rendered_mode(target, mode);
  const auto cycle = static_cast<std::size_t>(opts.period_ms * opts.frame_rate_hz / 1000);
  const std::size_t total = cycle * opts.periods;

  if (w.mode == StimulusMode::Static) {
    w.period_frames = 1;
    w.frames.assign(total, encode_static(target, layout, params));
    return w;
  }

  const DwellSchedule schedule = dwell_times(target, params, opts.period_ms, opts.transition_ms);
  w.period_frames = cycle;
  w.frames.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double source = virtual_source_angle(w.frame_time_ms(k), target, schedule, layout);
    w.frames.push_back(encode_angle(source, layout, params));
  }
  return w;
}

}  // namespace tactile
