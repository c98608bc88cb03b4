#pragma once

// Static amplitude encoding of a direction onto the belt, and its inverse.
//
// Each tactor's amplitude follows an exponential falloff in the angular
// distance between the target and the tactor:
//
//   y = max(1 - exp(-(span - |delta|) / T), 0),   delta = signed_offset(x, d)
//
// which is the two-branch form (x <= d / x > d) written once for a circular
// belt. With T = 15 and span = 60 a tactor driven on its own direction gets
// 1 - e^-4 and a neighbour 60 deg away gets exactly 0.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tactile/geometry.hpp"

namespace tactile {

struct FalloffParams {
  double T = 15.0;          // degrees
  double span_deg = 60.0;   // equal to the layout spacing

  static FalloffParams for_layout(const TactorLayout& layout, double T = 15.0) {
    return FalloffParams{T, layout.spacing_deg};
  }
};

inline void validate(const FalloffParams& p) {
  if (!(p.T > 0.0) || !std::isfinite(p.T)) throw std::invalid_argument("falloff: T must be > 0");
  if (!(p.span_deg > 0.0)) throw std::invalid_argument("falloff: span must be > 0");
}

using AmplitudeVector = std::vector<double>;

inline double falloff(double x, double d, const FalloffParams& params = {}) noexcept {
  const double dist = std::fabs(signed_offset(x, d));
  if (dist >= params.span_deg) return 0.0;
  const double y = 1.0 - std::exp(-(params.span_deg - dist) / params.T);
  return y > 0.0 ? y : 0.0;
}

inline std::size_t nonzero_count(const AmplitudeVector& v) noexcept {
  std::size_t n = 0;
  for (double y : v) n += y != 0.0;
  return n;
}

/// Entries in [0,1], at most two nonzero and, if two, adjacent on the belt.
inline bool satisfies_invariants(const AmplitudeVector& v, const TactorLayout& layout) noexcept {
  if (v.size() != layout.tactor_count) return false;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) return false;
    if (v[i] != 0.0) active.push_back(i);
  }
  if (active.size() > 2) return false;
  if (active.size() == 2 && !layout.adjacent(active[0], active[1])) return false;
  return true;
}

/// Amplitudes for a source at an arbitrary angle.
inline AmplitudeVector encode_angle(double angle_deg, const TactorLayout& layout,
                                    const FalloffParams& params = {}) {
  AmplitudeVector v(layout.tactor_count, 0.0);
  for (std::size_t i = 0; i < layout.tactor_count; ++i)
    v[i] = falloff(angle_deg, layout.angle(i), params);
  return v;
}

inline AmplitudeVector encode_static(const TargetDirection& target, const TactorLayout& layout,
                                     const FalloffParams& params = {}) {
  return encode_angle(target.angle_deg, layout, params);
}

/// Analytic inverse of encode_static. The stronger tactor gives the distance
/// |delta| = span + T * ln(1 - y); the weaker one only gives the side.
inline double decode_static(const AmplitudeVector& v, const TactorLayout& layout,
                            const FalloffParams& params = {}) {
  if (!satisfies_invariants(v, layout))
    throw std::invalid_argument("decode_static: vector violates amplitude invariants");
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) active.push_back(i);
  if (active.empty()) throw std::invalid_argument("decode_static: all-zero vector");
  if (active.size() == 1) return layout.angle(active[0]);

  // Order as (first, second) going counterclockwise.
  std::size_t first = active[0], second = active[1];
  if (layout.next(first) != second) std::swap(first, second);
  const bool first_is_near = v[first] >= v[second];
  const std::size_t near = first_is_near ? first : second;
  const double y = v[near] < 1.0 ? v[near] : std::nextafter(1.0, 0.0);
  double dist = params.span_deg + params.T * std::log(1.0 - y);
  if (dist < 0.0) dist = 0.0;
  if (dist > params.span_deg / 2.0) dist = params.span_deg / 2.0;
  const double angle = first_is_near ? layout.angle(first) + dist : layout.angle(second) - dist;
  return wrap_360(angle);
}

}  // namespace tactile
