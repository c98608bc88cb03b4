#pragma once

// Belt geometry: tactor placement around the torso and the set of
// displayable target directions.
//
// Angle convention: 0 deg is the navel, angles increase counterclockwise
// seen from above. The belt is a circle in angle space.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tactile {

inline constexpr double kAngleEps = 1e-9;

/// Wrap any angle into [0, 360).
inline double wrap_360(double deg) noexcept {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;  // fmod rounding on tiny negatives
  return w;
}

/// x - d wrapped to (-180, 180].
inline double signed_offset(double x, double d) noexcept {
  double delta = std::fmod(x - d, 360.0);
  if (delta <= -180.0) delta += 360.0;
  if (delta > 180.0) delta -= 360.0;
  return delta;
}

/// Unsigned circular distance in [0, 180].
inline double circular_distance(double a, double b) noexcept {
  return std::fabs(signed_offset(a, b));
}

struct TactorLayout {
  std::size_t tactor_count = 6;
  double spacing_deg = 60.0;
  double spacing_cm = 12.0;  // metadata only
  std::vector<double> tactor_angles_deg;

  double angle(std::size_t i) const { return tactor_angles_deg.at(i); }
  std::size_t next(std::size_t i) const { return (i + 1) % tactor_count; }
  std::size_t prev(std::size_t i) const { return (i + tactor_count - 1) % tactor_count; }
  bool adjacent(std::size_t a, std::size_t b) const { return next(a) == b || next(b) == a; }
};

/// Throws std::invalid_argument describing the first violated invariant.
/// `front_symmetric` additionally requires the two front tactors at +-spacing/2.
inline void validate(const TactorLayout& layout, bool front_symmetric = true) {
  const auto n = layout.tactor_count;
  if (n < 2) throw std::invalid_argument("layout: tactor_count must be >= 2");
  if (layout.tactor_angles_deg.size() != n)
    throw std::invalid_argument("layout: angle count does not match tactor_count");
  if (std::fabs(layout.spacing_deg * static_cast<double>(n) - 360.0) > kAngleEps)
    throw std::invalid_argument("layout: tactor_count * spacing_deg must equal 360");
  for (std::size_t i = 0; i < n; ++i) {
    const double a = layout.tactor_angles_deg[i];
    if (a < 0.0 || a >= 360.0) throw std::invalid_argument("layout: angle outside [0, 360)");
    if (i > 0 && a <= layout.tactor_angles_deg[i - 1])
      throw std::invalid_argument("layout: angles must be strictly increasing");
    const double gap = wrap_360(layout.tactor_angles_deg[layout.next(i)] - a);
    if (std::fabs(gap - layout.spacing_deg) > kAngleEps)
      throw std::invalid_argument("layout: tactors must be evenly spaced");
  }
  if (front_symmetric) {
    for (double a : layout.tactor_angles_deg) {
      if (circular_distance(a, 0.0) < kAngleEps)
        throw std::invalid_argument("layout: front-symmetric layout has a tactor at 0 deg");
    }
    if (std::fabs(layout.tactor_angles_deg.front() - layout.spacing_deg / 2.0) > kAngleEps)
      throw std::invalid_argument("layout: front tactors must sit at +-spacing/2");
  }
}

/// Evenly spaced belt. With `front_symmetric` the navel falls midway between
/// two tactors (30/330 deg for six tactors); otherwise tactor 0 sits at 0 deg.
inline TactorLayout build_layout(std::size_t tactor_count = 6, bool front_symmetric = true,
                                 double spacing_cm = 12.0) {
  if (tactor_count < 2) throw std::invalid_argument("build_layout: tactor_count must be >= 2");
  if (360 % tactor_count != 0)
    throw std::invalid_argument("build_layout: tactor_count must divide 360");
  TactorLayout layout;
  layout.tactor_count = tactor_count;
  layout.spacing_deg = 360.0 / static_cast<double>(tactor_count);
  layout.spacing_cm = spacing_cm;
  const double first = front_symmetric ? layout.spacing_deg / 2.0 : 0.0;
  layout.tactor_angles_deg.reserve(tactor_count);
  for (std::size_t i = 0; i < tactor_count; ++i)
    layout.tactor_angles_deg.push_back(first + layout.spacing_deg * static_cast<double>(i));
  validate(layout, front_symmetric);
  return layout;
}

enum class TargetKind { OnTactor, Between };

inline const char* to_string(TargetKind k) noexcept {
  return k == TargetKind::OnTactor ? "on_tactor" : "between";
}

inline TargetKind target_kind_from_string(const std::string& s) {
  if (s == "on_tactor") return TargetKind::OnTactor;
  if (s == "between") return TargetKind::Between;
  throw std::invalid_argument("unknown target kind: " + s);
}

struct TargetDirection {
  double angle_deg = 0.0;
  TargetKind kind = TargetKind::OnTactor;
  /// (first, second): `second` is the next tactor counterclockwise.
  std::pair<std::size_t, std::size_t> bracket{0, 1};
  /// Measured counterclockwise from the bracket's first tactor, in [0, spacing).
  double offset_deg = 0.0;

  bool operator==(const TargetDirection&) const = default;
};

/// Classify an arbitrary angle against the layout.
inline TargetDirection classify_target(double angle_deg, const TactorLayout& layout) {
  const double angle = wrap_360(angle_deg);
  TargetDirection t;
  t.angle_deg = angle;
  for (std::size_t i = 0; i < layout.tactor_count; ++i) {
    double off = wrap_360(angle - layout.angle(i));
    if (off >= layout.spacing_deg - kAngleEps) continue;
    if (off < kAngleEps || 360.0 - off < kAngleEps) off = 0.0;
    t.bracket = {i, layout.next(i)};
    t.offset_deg = off;
    t.kind = off == 0.0 ? TargetKind::OnTactor : TargetKind::Between;
    if (t.kind == TargetKind::OnTactor) t.angle_deg = layout.angle(i);
    return t;
  }
  // Only reachable when angle sits within kAngleEps below a tactor.
  for (std::size_t i = 0; i < layout.tactor_count; ++i) {
    if (circular_distance(angle, layout.angle(i)) < kAngleEps)
      return TargetDirection{layout.angle(i), TargetKind::OnTactor, {i, layout.next(i)}, 0.0};
  }
  throw std::logic_error("classify_target: angle not covered by layout");
}

struct TargetSet {
  std::vector<TargetDirection> targets;

  std::size_t size() const noexcept { return targets.size(); }
  bool empty() const noexcept { return targets.empty(); }
  const TargetDirection& operator[](std::size_t i) const { return targets[i]; }
  auto begin() const noexcept { return targets.begin(); }
  auto end() const noexcept { return targets.end(); }

  /// Target at `angle_deg` (to 1e-6 deg), or nullptr.
  const TargetDirection* find(double angle_deg) const noexcept {
    for (const auto& t : targets)
      if (circular_distance(t.angle_deg, angle_deg) < 1e-6) return &t;
    return nullptr;
  }
  /// Smallest gap between neighbouring targets; 360/N for a uniform set.
  double pitch_deg() const noexcept {
    if (targets.size() < 2) return 360.0;
    double gap = targets.front().angle_deg + 360.0 - targets.back().angle_deg;
    for (std::size_t i = 1; i < targets.size(); ++i)
      gap = std::min(gap, targets[i].angle_deg - targets[i - 1].angle_deg);
    return gap;
  }
};

/// (per_gap + 1) targets per tactor gap at uniform pitch, starting at tactor 0.
inline TargetSet build_target_set(const TactorLayout& layout, int per_gap = 3) {
  if (per_gap < 0) throw std::invalid_argument("build_target_set: per_gap must be >= 0");
  TargetSet set;
  const double pitch = layout.spacing_deg / static_cast<double>(per_gap + 1);
  for (std::size_t i = 0; i < layout.tactor_count; ++i) {
    for (int k = 0; k <= per_gap; ++k) {
      TargetDirection t;
      t.offset_deg = pitch * k;
      t.angle_deg = wrap_360(layout.angle(i) + t.offset_deg);
      t.bracket = {i, layout.next(i)};
      t.kind = k == 0 ? TargetKind::OnTactor : TargetKind::Between;
      set.targets.push_back(t);
    }
  }
  std::sort(set.targets.begin(), set.targets.end(),
            [](const auto& a, const auto& b) { return a.angle_deg < b.angle_deg; });
  return set;
}

/// Rebuild a target set from bare angles against a layout.
inline TargetSet target_set_from_angles(const std::vector<double>& angles,
                                        const TactorLayout& layout) {
  TargetSet set;
  set.targets.reserve(angles.size());
  for (double a : angles) set.targets.push_back(classify_target(a, layout));
  return set;
}

}  // namespace tactile
