#pragma once

// Session files (JSON Lines):
//
//   {"type":"header","schema_version":1,"config":{...}}
//   {"type":"trial", ...TrialRecord fields, cursor_trace inline...}
//   ...
//   {"type":"metrics", ...}
//
// plus a CSV export of per-direction metrics.

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "tactile/experiment.hpp"

namespace tactile {

inline constexpr int kSessionSchemaVersion = 1;

using json = nlohmann::json;

class SessionFileError : public std::runtime_error {
 public:
  SessionFileError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ---- to_json / from_json --------------------------------------------------

inline json to_json(const TargetDirection& t) {
  return {{"angle_deg", t.angle_deg},
          {"kind", to_string(t.kind)},
          {"bracket", {t.bracket.first, t.bracket.second}},
          {"offset_deg", t.offset_deg}};
}

inline TargetDirection target_from_json(const json& j) {
  TargetDirection t;
  t.angle_deg = j.at("angle_deg").get<double>();
  t.kind = target_kind_from_string(j.at("kind").get<std::string>());
  t.bracket = {j.at("bracket").at(0).get<std::size_t>(), j.at("bracket").at(1).get<std::size_t>()};
  t.offset_deg = j.at("offset_deg").get<double>();
  return t;
}

inline json to_json(const SessionConfig& c) {
  std::vector<double> angles;
  for (const auto& t : c.targets) angles.push_back(t.angle_deg);
  return {
      {"layout",
       {{"tactor_count", c.layout.tactor_count},
        {"spacing_deg", c.layout.spacing_deg},
        {"spacing_cm", c.layout.spacing_cm},
        {"tactor_angles_deg", c.layout.tactor_angles_deg}}},
      {"targets_deg", angles},
      {"falloff", {{"T", c.falloff.T}, {"span_deg", c.falloff.span_deg}}},
      {"render",
       {{"frame_rate_hz", c.render.frame_rate_hz},
        {"period_ms", c.render.period_ms},
        {"transition_ms", c.render.transition_ms}}},
      {"repetitions", c.repetitions},
      {"training_repetitions", c.training_repetitions},
      {"between_mode", to_string(c.between_mode)},
      {"phase", to_string(c.phase)},
      {"randomization_seed", c.randomization_seed},
      {"acquisition",
       {{"radius_fraction", c.acquisition.radius_fraction},
        {"sector_halfwidth_deg", c.acquisition.sector_halfwidth_deg},
        {"hold_ms", c.acquisition.hold_ms}}},
      {"record_rate_hz", c.record_rate_hz},
      {"inter_trial_gap_ms", c.inter_trial_gap_ms},
      {"trial_timeout_ms", c.trial_timeout_ms},
      {"frames_downstream", to_string(c.frames_downstream)},
  };
}

/// Missing keys keep their defaults, so partial configs are accepted.
inline SessionConfig config_from_json(const json& j) {
  SessionConfig c;
  if (j.contains("layout")) {
    const auto& l = j["layout"];
    if (l.contains("tactor_angles_deg")) {
      c.layout.tactor_angles_deg = l["tactor_angles_deg"].get<std::vector<double>>();
      c.layout.tactor_count = c.layout.tactor_angles_deg.size();
      c.layout.spacing_deg = l.value("spacing_deg", 360.0 / static_cast<double>(c.layout.tactor_count));
      c.layout.spacing_cm = l.value("spacing_cm", c.layout.spacing_cm);
    } else {
      c.layout = build_layout(l.value("tactor_count", std::size_t{6}), l.value("front_symmetric", true),
                              l.value("spacing_cm", 12.0));
    }
    validate(c.layout, false);
    c.falloff.span_deg = c.layout.spacing_deg;
    c.targets = build_target_set(c.layout, 3);
  }
  if (j.contains("per_gap")) c.targets = build_target_set(c.layout, j["per_gap"].get<int>());
  if (j.contains("targets_deg"))
    c.targets = target_set_from_angles(j["targets_deg"].get<std::vector<double>>(), c.layout);
  if (j.contains("falloff")) {
    c.falloff.T = j["falloff"].value("T", c.falloff.T);
    c.falloff.span_deg = j["falloff"].value("span_deg", c.falloff.span_deg);
  }
  if (j.contains("render")) {
    const auto& r = j["render"];
    c.render.frame_rate_hz = r.value("frame_rate_hz", c.render.frame_rate_hz);
    c.render.period_ms = r.value("period_ms", c.render.period_ms);
    c.render.transition_ms = r.value("transition_ms", c.render.transition_ms);
  }
  c.repetitions = j.value("repetitions", c.repetitions);
  c.training_repetitions = j.value("training_repetitions", c.training_repetitions);
  if (j.contains("between_mode")) c.between_mode = between_mode_from_string(j["between_mode"]);
  if (j.contains("phase")) c.phase = phase_from_string(j["phase"]);
  c.randomization_seed = j.value("randomization_seed", c.randomization_seed);
  c.acquisition.sector_halfwidth_deg = c.targets.pitch_deg() / 2.0;
  if (j.contains("acquisition")) {
    const auto& a = j["acquisition"];
    c.acquisition.radius_fraction = a.value("radius_fraction", c.acquisition.radius_fraction);
    c.acquisition.sector_halfwidth_deg = a.value("sector_halfwidth_deg", c.acquisition.sector_halfwidth_deg);
    c.acquisition.hold_ms = a.value("hold_ms", c.acquisition.hold_ms);
  }
  c.record_rate_hz = j.value("record_rate_hz", c.record_rate_hz);
  c.inter_trial_gap_ms = j.value("inter_trial_gap_ms", c.inter_trial_gap_ms);
  c.trial_timeout_ms = j.value("trial_timeout_ms", c.trial_timeout_ms);
  if (j.contains("frames_downstream"))
    c.frames_downstream = frames_downstream_from_string(j["frames_downstream"]);
  validate(c);
  return c;
}

inline json to_json(const TrialRecord& r) {
  json trace = json::array();
  for (const auto& s : r.cursor_trace) trace.push_back({s.t_ms, s.x, s.y});
  return {{"trial_id", r.trial_id},
          {"phase", to_string(r.phase)},
          {"target", to_json(r.target)},
          {"requested_mode", to_string(r.requested_mode)},
          {"rendered_mode", to_string(r.rendered_mode)},
          {"onset_ts_ms", r.onset_ts_ms},
          {"cursor_trace", std::move(trace)},
          {"selected", r.selected ? to_json(*r.selected) : json(nullptr)},
          {"acquisition_ms", r.acquisition_ms ? json(*r.acquisition_ms) : json(nullptr)},
          {"correct", r.correct},
          {"outcome", to_string(r.outcome)}};
}

inline TrialRecord trial_from_json(const json& j) {
  TrialRecord r;
  r.trial_id = j.at("trial_id").get<int>();
  r.phase = phase_from_string(j.at("phase").get<std::string>());
  r.target = target_from_json(j.at("target"));
  r.requested_mode = stimulus_mode_from_string(j.at("requested_mode").get<std::string>());
  r.rendered_mode = stimulus_mode_from_string(j.at("rendered_mode").get<std::string>());
  r.onset_ts_ms = j.at("onset_ts_ms").get<double>();
  for (const auto& s : j.at("cursor_trace"))
    r.cursor_trace.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
  if (!j.at("selected").is_null()) r.selected = target_from_json(j["selected"]);
  if (!j.at("acquisition_ms").is_null()) r.acquisition_ms = j["acquisition_ms"].get<double>();
  r.correct = j.at("correct").get<bool>();
  r.outcome = trial_outcome_from_string(j.at("outcome").get<std::string>());
  if (r.selected.has_value() != r.acquisition_ms.has_value())
    throw std::invalid_argument("acquisition_ms must be present iff selected is");
  return r;
}

inline json to_json(const GroupStats& g) {
  return {{"attempted", g.attempted},
          {"correct", g.correct},
          {"accuracy", g.accuracy},
          {"rt_count", g.rt_count},
          {"mean_rt_ms", g.mean_rt_ms ? json(*g.mean_rt_ms) : json(nullptr)}};
}

inline GroupStats group_from_json(const json& j) {
  GroupStats g;
  g.attempted = j.at("attempted").get<int>();
  g.correct = j.at("correct").get<int>();
  g.accuracy = j.at("accuracy").get<double>();
  g.rt_count = j.at("rt_count").get<int>();
  if (!j.at("mean_rt_ms").is_null()) g.mean_rt_ms = j["mean_rt_ms"].get<double>();
  return g;
}

inline json to_json(const SessionMetrics& m) {
  json dirs = json::array(), groups = json::array();
  for (const auto& d : m.per_direction)
    dirs.push_back({{"direction_deg", d.direction_deg},
                    {"kind", to_string(d.kind)},
                    {"mode", to_string(d.mode)},
                    {"stats", to_json(d.stats)}});
  for (const auto& g : m.by_kind_mode)
    groups.push_back({{"kind", to_string(g.kind)}, {"mode", to_string(g.mode)}, {"stats", to_json(g.stats)}});
  return {{"per_direction", dirs}, {"by_kind_mode", groups}, {"overall", to_json(m.overall)}};
}

inline SessionMetrics metrics_from_json(const json& j) {
  SessionMetrics m;
  for (const auto& d : j.at("per_direction"))
    m.per_direction.push_back({d.at("direction_deg").get<double>(),
                               target_kind_from_string(d.at("kind")),
                               stimulus_mode_from_string(d.at("mode")), group_from_json(d.at("stats"))});
  for (const auto& g : j.at("by_kind_mode"))
    m.by_kind_mode.push_back({target_kind_from_string(g.at("kind")), stimulus_mode_from_string(g.at("mode")),
                              group_from_json(g.at("stats"))});
  m.overall = group_from_json(j.at("overall"));
  return m;
}

// ---- files ----------------------------------------------------------------

struct SessionFile {
  SessionConfig config;
  std::vector<TrialRecord> records;
  std::optional<SessionMetrics> metrics;
};

inline void write_session(std::ostream& out, const SessionConfig& config,
                          const std::vector<TrialRecord>& records,
                          const std::optional<SessionMetrics>& metrics) {
  json header{{"type", "header"}, {"schema_version", kSessionSchemaVersion}, {"config", to_json(config)}};
  out << header.dump() << '\n';
  for (const auto& r : records) {
    json j = to_json(r);
    j["type"] = "trial";
    out << j.dump() << '\n';
  }
  if (metrics) {
    json j = to_json(*metrics);
    j["type"] = "metrics";
    out << j.dump() << '\n';
  }
}

inline void persist_session(const std::string& path, const SessionConfig& config,
                            const std::vector<TrialRecord>& records,
                            const std::optional<SessionMetrics>& metrics) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw SessionFileError("cannot write " + tmp, 0);
    write_session(out, config, records, metrics);
    if (!out) throw SessionFileError("write failed for " + tmp, 0);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw SessionFileError("cannot rename to " + path, 0);
}

inline SessionFile read_session(std::istream& in) {
  SessionFile file;
  bool have_header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header") throw SessionFileError("first record must be the header", lineno);
        const int version = j.at("schema_version").get<int>();
        if (version != kSessionSchemaVersion)
          throw SessionFileError("unsupported schema_version " + std::to_string(version), lineno);
        file.config = config_from_json(j.at("config"));
        have_header = true;
      } else if (type == "trial") {
        file.records.push_back(trial_from_json(j));
      } else if (type == "metrics") {
        file.metrics = metrics_from_json(j);
      } else {
        throw SessionFileError("unknown record type '" + type + "'", lineno);
      }
    } catch (const SessionFileError&) {
      throw;
    } catch (const std::exception& e) {
      throw SessionFileError(std::string("malformed record: ") + e.what(), lineno);
    }
  }
  if (!have_header) throw SessionFileError("missing header", lineno);
  return file;
}

inline SessionFile load_session(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SessionFileError("cannot open " + path, 0);
  return read_session(in);
}

inline void write_metrics_csv(std::ostream& out, const SessionMetrics& m) {
  out << "direction_deg,kind,mode,accuracy,mean_rt_ms\n";
  for (const auto& d : m.per_direction) {
    out << d.direction_deg << ',' << to_string(d.kind) << ',' << to_string(d.mode) << ','
        << d.stats.accuracy << ',';
    if (d.stats.mean_rt_ms) out << *d.stats.mean_rt_ms;
    out << '\n';
  }
}

}  // namespace tactile
