#pragma once

// Plain-text belt description:
//
//   # six-tactor belt
//   tactor_count = 6
//   spacing_deg = 60
//   spacing_cm = 12
//   tactor_angles_deg = 30, 90, 150, 210, 270, 330
//   targets_deg = 0, 15, 30, ...
//
// `targets_deg` may be replaced by `per_gap = 3`.

#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tactile/geometry.hpp"

namespace tactile {

struct BeltDescription {
  TactorLayout layout;
  TargetSet targets;
};

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& value, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("layout file: bad number '" + item + "' in " + key);
    }
  }
  return out;
}
}  // namespace detail

inline BeltDescription read_belt(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("layout file line " + std::to_string(lineno) + ": expected key = value");
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }

  BeltDescription belt;
  const std::size_t count = kv.count("tactor_count") ? std::stoul(kv["tactor_count"]) : 6;
  if (kv.count("tactor_angles_deg")) {
    auto& l = belt.layout;
    l.tactor_angles_deg = detail::parse_list(kv["tactor_angles_deg"], "tactor_angles_deg");
    l.tactor_count = count;
    l.spacing_deg = kv.count("spacing_deg") ? std::stod(kv["spacing_deg"]) : 360.0 / static_cast<double>(count);
    l.spacing_cm = kv.count("spacing_cm") ? std::stod(kv["spacing_cm"]) : 12.0;
    validate(l, false);
  } else {
    belt.layout = build_layout(count, true, kv.count("spacing_cm") ? std::stod(kv["spacing_cm"]) : 12.0);
  }

  if (kv.count("targets_deg")) {
    belt.targets = target_set_from_angles(detail::parse_list(kv["targets_deg"], "targets_deg"), belt.layout);
  } else {
    belt.targets = build_target_set(belt.layout, kv.count("per_gap") ? std::stoi(kv["per_gap"]) : 3);
  }
  return belt;
}

inline BeltDescription load_belt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file " + path);
  return read_belt(in);
}

inline void write_belt(std::ostream& out, const BeltDescription& belt) {
  auto list = [&](const std::vector<double>& xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? ", " : "") << xs[i];
  };
  out << std::setprecision(17);
  out << "tactor_count = " << belt.layout.tactor_count << '\n';
  out << "spacing_deg = " << belt.layout.spacing_deg << '\n';
  out << "spacing_cm = " << belt.layout.spacing_cm << '\n';
  out << "tactor_angles_deg = ";
  list(belt.layout.tactor_angles_deg);
  out << "\ntargets_deg = ";
  std::vector<double> angles;
  for (const auto& t : belt.targets) angles.push_back(t.angle_deg);
  list(angles);
  out << '\n';
}

}  // namespace tactile
