#pragma once

// Idealized perceiver used as a test oracle and for synthetic sessions.
// It is an inverse decoder, not a model of human perception.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tactile/amplitude.hpp"
#include "tactile/dynamics.hpp"
#include "tactile/geometry.hpp"

namespace tactile {

enum class DecoderKind { AmplitudeInverse, DwellRatio, Auto };

inline const char* to_string(DecoderKind d) noexcept {
  switch (d) {
    case DecoderKind::AmplitudeInverse: return "amplitude_inverse";
    case DecoderKind::DwellRatio: return "dwell_ratio";
    case DecoderKind::Auto: return "auto";
  }
  return "?";
}

struct PerceiverModel {
  DecoderKind decoder = DecoderKind::Auto;
  double angular_noise_sigma_deg = 0.0;
  double reaction_latency_ms = 300.0;
  std::uint64_t rng_seed = 1;
};

struct Perception {
  double angle_deg = 0.0;
  double response_time_ms = 0.0;
};

class UndecodableWaveform : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recover a between-tactor angle from dwell durations in one period of a
/// dynamic waveform. A dwell of D ms sampled at pitch p spans D/p + 1 frames
/// where only its tactor is active, so each cyclic run of n sole-active
/// frames contributes (n - 1) pitches of dwell.
inline double decode_dwell_ratio(const StimulusWaveform& w, const TactorLayout& layout,
                                 const FalloffParams& params = {}) {
  const std::size_t period = w.period_frames;
  if (w.frames.size() < period || period == 0)
    throw UndecodableWaveform("dwell decoder needs one full period");

  std::vector<std::size_t> sole(period, layout.tactor_count);  // tactor index or "none"
  std::vector<bool> used(layout.tactor_count, false);
  for (std::size_t k = 0; k < period; ++k) {
    const auto& f = w.frames[k];
    std::size_t n_active = 0, last = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] != 0.0) {
        ++n_active;
        last = i;
        used[i] = true;
      }
    }
    if (n_active == 1) sole[k] = last;
  }

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i]) active.push_back(i);
  if (active.empty()) throw UndecodableWaveform("all frames are zero");
  if (active.size() == 1) return layout.angle(active[0]);
  if (active.size() != 2 || !layout.adjacent(active[0], active[1]))
    throw UndecodableWaveform("dynamic waveform must involve two adjacent tactors");

  std::size_t first = active[0], second = active[1];
  if (layout.next(first) != second) std::swap(first, second);

  auto dwell_frames = [&](std::size_t tactor) {
    std::size_t count = 0, runs = 0;
    for (std::size_t k = 0; k < period; ++k) {
      if (sole[k] != tactor) continue;
      ++count;
      if (sole[(k + period - 1) % period] != tactor) ++runs;
    }
    if (count == period) runs = 1;
    return static_cast<double>(count - runs);
  };
  const double d_first = dwell_frames(first);
  const double d_second = dwell_frames(second);
  if (d_first + d_second <= 0.0) throw UndecodableWaveform("no dwell segments found");

  const double offset_first = params.span_deg * d_second / (d_first + d_second);
  return wrap_360(layout.angle(first) + offset_first);
}

class Perceiver {
 public:
  explicit Perceiver(PerceiverModel model)
      : model_(model), rng_(model.rng_seed) {
    if (!(model.angular_noise_sigma_deg >= 0.0) || !std::isfinite(model.angular_noise_sigma_deg))
      throw std::invalid_argument("perceiver: sigma must be finite and >= 0");
    if (!(model.reaction_latency_ms >= 0.0) || !std::isfinite(model.reaction_latency_ms))
      throw std::invalid_argument("perceiver: latency must be finite and >= 0");
  }

  const PerceiverModel& model() const noexcept { return model_; }

  /// Each call consumes exactly one normal draw, whatever sigma is, so
  /// runs at different noise levels share one noise schedule per seed.
  Perception perceive(const StimulusWaveform& w, const TactorLayout& layout,
                      const FalloffParams& params = {}) {
    if (w.frames.empty()) throw UndecodableWaveform("empty waveform");
    bool any = false;
    for (const auto& f : w.frames)
      if (nonzero_count(f) > 0) any = true;
    if (!any) throw UndecodableWaveform("all frames are zero");

    DecoderKind decoder = model_.decoder;
    if (decoder == DecoderKind::Auto)
      decoder = w.mode == StimulusMode::Dynamic ? DecoderKind::DwellRatio
                                                : DecoderKind::AmplitudeInverse;

    double angle = decoder == DecoderKind::DwellRatio ? decode_dwell_ratio(w, layout, params)
                                                      : decode_static(w.frames.front(), layout, params);

    const double z = normal_(rng_);
    angle = wrap_360(angle + model_.angular_noise_sigma_deg * z);

    double rt = model_.reaction_latency_ms;
    if (w.mode == StimulusMode::Dynamic)
      rt += 1000.0 * static_cast<double>(w.period_frames) / static_cast<double>(w.frame_rate_hz);
    return {angle, rt};
  }

 private:
  PerceiverModel model_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Nearest target by circular distance; ties go to the lower angle.
inline const TargetDirection& snap_to_target(double angle_deg, const TargetSet& set) {
  if (set.empty()) throw std::invalid_argument("snap_to_target: empty target set");
  const TargetDirection* best = &set[0];
  double best_d = circular_distance(angle_deg, best->angle_deg);
  for (const auto& t : set) {
    const double d = circular_distance(angle_deg, t.angle_deg);
    if (d < best_d - kAngleEps ||
        (std::fabs(d - best_d) <= kAngleEps && t.angle_deg < best->angle_deg)) {
      best = &t;
      best_d = d;
    }
  }
  return *best;
}

}  // namespace tactile
