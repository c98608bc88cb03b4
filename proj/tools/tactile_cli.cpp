// tactile: command-line front end for the belt renderer and session engine.
//
//   tactile schedule --target 45 --mode dynamic     waveform CSV
//   tactile falloff --step 5                        amplitude table CSV
//   tactile simulate --sigma 0 --seed 1             synthetic session
//   tactile metrics session.jsonl                   recompute metrics
//   tactile serve --port 8080 --device mock:        HTTP + stream service
//   tactile device-test --device /dev/ttyACM0       stream a test pattern

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <pthread.h>

#include "CLI11.hpp"

#include "tactile/service.hpp"
#include "tactile/tactile.hpp"

namespace {

using namespace tactile;

BeltDescription belt_from(const std::string& layout_path) {
  if (layout_path.empty()) {
    BeltDescription b;
    b.layout = build_layout(6);
    b.targets = build_target_set(b.layout, 3);
    return b;
  }
  return load_belt(layout_path);
}

SessionConfig session_config_from(const BeltDescription& belt) {
  SessionConfig c;
  c.layout = belt.layout;
  c.targets = belt.targets;
  c.falloff = FalloffParams::for_layout(belt.layout);
  c.acquisition.sector_halfwidth_deg = belt.targets.pitch_deg() / 2.0;
  return c;
}

/// Writes to the named file, or stdout when the name is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& get() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void write_waveform_csv(std::ostream& out, const StimulusWaveform& w, std::size_t tactors) {
  out << "time_ms";
  for (std::size_t i = 0; i < tactors; ++i) out << ",amp_tactor_" << i;
  out << '\n' << std::setprecision(10);
  for (std::size_t k = 0; k < w.frames.size(); ++k) {
    out << w.frame_time_ms(k);
    for (double y : w.frames[k]) out << ',' << y;
    out << '\n';
  }
}

void print_metrics(std::ostream& out, const SessionMetrics& m) {
  out << std::fixed << std::setprecision(3);
  out << "direction_deg  kind       mode     n  accuracy  mean_rt_ms\n";
  for (const auto& d : m.per_direction) {
    out << std::setw(13) << std::setprecision(1) << d.direction_deg << "  " << std::left << std::setw(9)
        << to_string(d.kind) << "  " << std::setw(7) << to_string(d.mode) << std::right << std::setw(3)
        << d.stats.attempted << "  " << std::setw(8) << std::setprecision(3) << d.stats.accuracy << "  ";
    if (d.stats.mean_rt_ms)
      out << std::setw(10) << std::setprecision(1) << *d.stats.mean_rt_ms;
    else
      out << std::setw(10) << "-";
    out << '\n';
  }
  for (const auto& g : m.by_kind_mode) {
    out << "group " << to_string(g.kind) << '/' << to_string(g.mode) << ": accuracy "
        << std::setprecision(3) << g.stats.accuracy << " (" << g.stats.correct << '/' << g.stats.attempted
        << ")";
    if (g.stats.mean_rt_ms) out << ", mean_rt_ms " << std::setprecision(1) << *g.stats.mean_rt_ms;
    out << '\n';
  }
  out << "accuracy " << std::setprecision(3) << m.overall.accuracy << " (" << m.overall.correct << '/'
      << m.overall.attempted << ")\n";
  out.unsetf(std::ios::fixed);
}

int cmd_schedule(const std::string& layout_path, double target_deg, const std::string& mode,
                 std::size_t periods, int rate, const std::string& out_path) {
  const auto belt = belt_from(layout_path);
  const auto target = classify_target(target_deg, belt.layout);
  RenderOptions opts;
  opts.frame_rate_hz = rate;
  opts.periods = periods;
  const auto w = render_waveform(target, stimulus_mode_from_string(mode), belt.layout,
                                 FalloffParams::for_layout(belt.layout), opts);
  Output out(out_path);
  write_waveform_csv(out.get(), w, belt.layout.tactor_count);
  return 0;
}

int cmd_falloff(const std::string& layout_path, double step, const std::string& out_path) {
  if (!(step > 0)) throw std::invalid_argument("--step must be > 0");
  const auto belt = belt_from(layout_path);
  const auto params = FalloffParams::for_layout(belt.layout);
  Output out(out_path);
  auto& os = out.get();
  os << "angle_deg";
  for (std::size_t i = 0; i < belt.layout.tactor_count; ++i) os << ",amp_tactor_" << i;
  os << '\n' << std::setprecision(10);
  for (double a = 0.0; a < 360.0 - 1e-9; a += step) {
    os << a;
    for (double y : encode_angle(a, belt.layout, params)) os << ',' << y;
    os << '\n';
  }
  return 0;
}

struct SimulateArgs {
  std::string layout;
  int reps = 5;
  int training_reps = 0;
  double sigma = 0.0;
  std::uint64_t seed = 1;
  std::string mode = "dynamic";
  double latency = 300.0;
  std::string out;
  std::string csv;
};

int cmd_simulate(const SimulateArgs& a) {
  auto config = session_config_from(belt_from(a.layout));
  config.repetitions = a.reps;
  config.training_repetitions = a.training_reps;
  config.between_mode = between_mode_from_string(a.mode);
  config.randomization_seed = a.seed;
  validate(config);

  PerceiverModel model;
  model.angular_noise_sigma_deg = a.sigma;
  model.reaction_latency_ms = a.latency;
  model.rng_seed = a.seed;

  const auto result = simulate_session(config, model);
  if (!a.out.empty()) persist_session(a.out, result.config, result.records, result.metrics);
  if (!a.csv.empty()) {
    Output csv(a.csv);
    write_metrics_csv(csv.get(), result.metrics);
  }
  std::cout << "trials " << result.records.size() << ", mode " << a.mode << ", sigma " << a.sigma
            << ", seed " << a.seed << '\n';
  print_metrics(std::cout, result.metrics);
  return 0;
}

int cmd_metrics(const std::string& path, const std::string& csv_path) {
  const auto file = load_session(path);
  const auto m = compute_metrics(file.records);
  print_metrics(std::cout, m);
  if (!csv_path.empty()) {
    Output csv(csv_path);
    write_metrics_csv(csv.get(), m);
  }
  return 0;
}

int cmd_serve(ServiceConfig config, const std::string& layout_path) {
  config.session_defaults = session_config_from(belt_from(layout_path));

  // Handle SIGINT/SIGTERM synchronously in this thread; worker threads inherit the mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Service service(config);
  service.start();
  std::cerr << "serving HTTP on " << config.host << ':' << service.http_port() << ", stream on port "
            << service.stream_port() << ", device " << service.device().describe() << ", data "
            << config.data_dir << '\n';
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "shutting down\n";
  service.stop();
  return 0;
}

int cmd_device_test(const std::string& uri, double seconds, int rate) {
  if (!(seconds > 0)) throw std::invalid_argument("--seconds must be > 0");
  if (rate <= 0) throw std::invalid_argument("--rate must be > 0");
  auto sink = open_device(uri);

  // One revolution of a virtual source every 2 s.
  const auto layout = build_layout(6);
  StimulusWaveform w;
  w.mode = StimulusMode::Dynamic;
  w.frame_rate_hz = rate;
  w.period_frames = static_cast<std::size_t>(2 * rate);
  for (std::size_t k = 0; k < w.period_frames; ++k)
    w.frames.push_back(encode_angle(360.0 * static_cast<double>(k) / w.period_frames, layout));

  SteadyClock clock;
  PlaybackOptions opts;
  opts.max_frames = static_cast<std::uint64_t>(seconds * rate);
  auto pb = stream_waveform(w, *sink, clock, opts);
  pb.wait();
  const auto r = pb.report();

  std::cout << "device " << sink->describe() << '\n'
            << "frames_sent " << r.frames_sent << '\n'
            << "max_lateness_ms " << std::fixed << std::setprecision(3) << r.max_lateness_ms << '\n';
  if (auto* mock = dynamic_cast<MockDevice*>(sink.get())) {
    const auto log = mock->log();
    double mean = 0.0;
    if (log.size() > 1) mean = (log.back().t_ms - log.front().t_ms) / static_cast<double>(log.size() - 1);
    std::cout << "frames_received " << log.size() << '\n'
              << "seq_gaps " << mock->gaps().size() << '\n'
              << "mean_interval_ms " << mean << '\n';
  }
  if (r.device_gone) {
    std::cerr << "device gone after " << r.frames_sent << " frames\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vibrotactile belt renderer and session engine"};
  app.require_subcommand(1);
  std::string layout_path;
  app.add_option("--layout", layout_path, "Belt description file (key = value)");

  auto* schedule = app.add_subcommand("schedule", "Dump a stimulus waveform as CSV");
  double target = 0.0;
  std::string mode = "dynamic";
  std::size_t periods = 1;
  int rate = 100;
  std::string out_path;
  schedule->add_option("--target", target, "Target direction in degrees")->required();
  schedule->add_option("--mode", mode, "static | dynamic")->check(CLI::IsMember({"static", "dynamic"}));
  schedule->add_option("--periods", periods, "Perturbation periods to render");
  schedule->add_option("--rate", rate, "Frame rate in Hz");
  schedule->add_option("-o,--out", out_path, "Output file (default stdout)");

  auto* falloff_cmd = app.add_subcommand("falloff", "Dump per-tactor amplitude versus source angle");
  double step = 1.0;
  falloff_cmd->add_option("--step", step, "Angle step in degrees");
  falloff_cmd->add_option("-o,--out", out_path, "Output file (default stdout)");

  auto* simulate = app.add_subcommand("simulate", "Run a synthetic session against the ideal perceiver");
  SimulateArgs sim;
  simulate->add_option("--reps,--trials-multiplier", sim.reps, "Repetitions per target");
  simulate->add_option("--training-reps", sim.training_reps, "Training repetitions before testing");
  simulate->add_option("--sigma", sim.sigma, "Angular noise sigma in degrees");
  simulate->add_option("--seed", sim.seed, "Seed for trial order and perceiver noise");
  simulate->add_option("--mode", sim.mode, "static | dynamic | interleaved")
      ->check(CLI::IsMember({"static", "dynamic", "interleaved"}));
  simulate->add_option("--latency", sim.latency, "Perceiver reaction latency in ms");
  simulate->add_option("-o,--out", sim.out, "Write the session file (JSON Lines)");
  simulate->add_option("--csv", sim.csv, "Write per-direction metrics CSV");

  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a session file");
  std::string session_path, csv_path;
  metrics->add_option("file", session_path, "Session file")->required()->check(CLI::ExistingFile);
  metrics->add_option("--csv", csv_path, "Write per-direction metrics CSV");

  auto* serve = app.add_subcommand("serve", "Start the HTTP + stream service");
  ServiceConfig svc;
  serve->add_option("--host", svc.host, "Listen address")->envname("TACTILE_HOST");
  serve->add_option("--port", svc.port, "HTTP port")->envname("TACTILE_PORT");
  serve->add_option("--stream-port", svc.stream_port, "Stream port")->envname("TACTILE_STREAM_PORT");
  serve->add_option("--device", svc.device_uri, "Device URI (mock: or serial path)")->envname("TACTILE_DEVICE");
  serve->add_option("--data-dir", svc.data_dir, "Session file directory")->envname("TACTILE_DATA_DIR");

  auto* device_test = app.add_subcommand("device-test", "Stream a test pattern and report frame stats");
  std::string device_uri = "mock:";
  double seconds = 2.0;
  device_test->add_option("--device", device_uri, "Device URI (mock: or serial path)");
  device_test->add_option("--seconds", seconds, "Duration");
  device_test->add_option("--rate", rate, "Frame rate in Hz");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*schedule) return cmd_schedule(layout_path, target, mode, periods, rate, out_path);
    if (*falloff_cmd) return cmd_falloff(layout_path, step, out_path);
    if (*simulate) {
      sim.layout = layout_path;
      return cmd_simulate(sim);
    }
    if (*metrics) return cmd_metrics(session_path, csv_path);
    if (*serve) return cmd_serve(svc, layout_path);
    if (*device_test) return cmd_device_test(device_uri, seconds, rate);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
