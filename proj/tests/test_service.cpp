#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "tactile/service.hpp"

using namespace tactile;
using nlohmann::json;

namespace {

struct Fixture {
  std::filesystem::path dir;
  MockDevice* device = nullptr;
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> http;

  Fixture() {
    dir = std::filesystem::temp_directory_path() /
          ("tactile_service_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.stream_port = 0;
    cfg.data_dir = dir.string();
    auto dev = std::make_unique<MockDevice>();
    device = dev.get();
    service = std::make_unique<Service>(cfg, std::move(dev));
    service->start();
    http = std::make_unique<httplib::Client>("127.0.0.1", service->http_port());
    http->set_read_timeout(10, 0);
  }
  ~Fixture() {
    service->stop();
    std::filesystem::remove_all(dir);
  }

  static int& counter() {
    static int n = 0;
    return n;
  }

  std::pair<int, json> post(const std::string& path, const json& body = json::object()) {
    auto r = http->Post(path, body.dump(), "application/json");
    if (!r) return {0, {}};
    return {r->status, r->body.empty() ? json{} : json::parse(r->body, nullptr, false)};
  }
  std::pair<int, json> get(const std::string& path) {
    auto r = http->Get(path);
    if (!r) return {0, {}};
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  std::string create(const json& body) {
    auto [status, j] = post("/api/sessions", body);
    EXPECT_EQ(status, 201) << j.dump();
    return j.value("session_id", "");
  }

  json state(const std::string& id) { return get("/api/sessions/" + id).second; }

  void wait_not_active(const std::string& id) {
    for (int i = 0; i < 500 && state(id)["state"] == "trial_active"; ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  std::unique_ptr<wire::StreamClient> connect(const std::string& id, const std::string& role = "participant") {
    auto c = std::make_unique<wire::StreamClient>("127.0.0.1", service->stream_port());
    c->send({{"type", "hello"}, {"session_id", id}, {"role", role}});
    auto w = c->receive(2000);
    EXPECT_TRUE(w && (*w)["type"] == "welcome");
    return c;
  }
};

/// Wait for a message of `type`, collecting everything seen on the way.
std::optional<json> await(wire::StreamClient& c, const std::string& type, std::vector<json>* seen = nullptr,
                          int timeout_ms = 5000) {
  const auto end = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < end) {
    auto m = c.receive(100);
    if (!m) continue;
    if (seen) seen->push_back(*m);
    if ((*m)["type"] == type) return m;
  }
  return std::nullopt;
}

}  // namespace

TEST(Service, HealthAndUnknownSession) {
  Fixture f;
  EXPECT_EQ(f.get("/api/health").first, 200);
  EXPECT_EQ(f.get("/api/sessions/nope").first, 404);
  EXPECT_EQ(f.post("/api/sessions/nope/trials/next").first, 404);
  EXPECT_EQ(f.post("/api/sessions/nope/trials/abort").first, 404);
  EXPECT_EQ(f.get("/api/sessions/nope/metrics").first, 404);
}

TEST(Service, RejectsBadConfig) {
  Fixture f;
  EXPECT_EQ(f.post("/api/sessions", {{"repetitions", 0}}).first, 400);
  auto r = f.http->Post("/api/sessions", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
}

TEST(Service, CreateUsesGeometryFromBody) {
  Fixture f;
  const auto id = f.create({{"layout", {{"tactor_count", 4}}}, {"per_gap", 1}, {"repetitions", 1}});
  const auto s = f.state(id);
  EXPECT_EQ(s["state"], "idle");
  EXPECT_EQ(s["trial_count"], 8);
  EXPECT_EQ(f.service->session(id)->config().layout.tactor_count, 4u);
}

TEST(Service, TransitionsAnd409s) {
  Fixture f;
  const auto id = f.create({{"per_gap", 0}, {"repetitions", 1}});
  const std::string base = "/api/sessions/" + id;
  EXPECT_EQ(f.post(base + "/trials/abort").first, 409);
  EXPECT_EQ(f.post(base + "/trials/next").first, 200);
  EXPECT_EQ(f.state(id)["state"], "trial_active");
  EXPECT_EQ(f.post(base + "/trials/next").first, 409);
  EXPECT_EQ(f.post("/api/sessions", json::object()).first, 409);
  EXPECT_EQ(f.post(base + "/trials/abort").first, 200);
  f.wait_not_active(id);
  const auto s = f.state(id);
  EXPECT_EQ(s["state"], "idle");
  EXPECT_EQ(s["completed"], 1);
  EXPECT_EQ(f.service->session(id)->records()[0].outcome, TrialOutcome::Aborted);
  // The session file exists and parses.
  auto r = f.http->Get(base + "/file");
  ASSERT_TRUE(r);
  std::istringstream in(r->body);
  EXPECT_EQ(read_session(in).records.size(), 1u);
}

TEST(Service, RandomCallSequencesFollowStateModel) {
  Fixture f;
  const auto id = f.create({{"per_gap", 0}, {"repetitions", 1}});
  const std::string base = "/api/sessions/" + id;
  std::mt19937 rng(21);
  enum { Idle, Active, Finished } model = Idle;
  std::size_t completed = 0;
  for (int step = 0; step < 60; ++step) {
    switch (rng() % 4) {
      case 0: {
        const int st = f.post(base + "/trials/next").first;
        EXPECT_EQ(st, model == Idle ? 200 : 409) << step;
        if (model == Idle) model = Active;
        break;
      }
      case 1: {
        const int st = f.post(base + "/trials/abort").first;
        EXPECT_EQ(st, model == Active ? 200 : 409) << step;
        if (model == Active) {
          f.wait_not_active(id);
          model = ++completed == 6 ? Finished : Idle;
        }
        break;
      }
      case 2: {
        const auto s = f.state(id);
        EXPECT_EQ(s["state"], model == Idle ? "idle" : model == Active ? "trial_active" : "finished") << step;
        EXPECT_EQ(s["completed"], completed);
        break;
      }
      default:
        EXPECT_EQ(f.get(base + "/metrics").first, 200);
        break;
    }
  }
  EXPECT_EQ(f.service->session(id)->records().size(), completed);
}

TEST(Service, CursorOutsideTrialIsDiscarded) {
  Fixture f;
  const auto id = f.create({{"per_gap", 0}, {"repetitions", 1}});
  auto c = f.connect(id);
  for (int i = 0; i < 5; ++i) c->send({{"type", "cursor"}, {"t_ms", i * 10.0}, {"x", 0.0}, {"y", 0.95}});
  for (int i = 0; i < 100 && f.state(id)["discarded_samples"] != 5; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  EXPECT_EQ(f.state(id)["discarded_samples"], 5);
  EXPECT_EQ(f.state(id)["completed"], 0);
}

TEST(Service, DroppedStreamEndsTrialAsLost) {
  Fixture f;
  const auto id = f.create({{"per_gap", 0}, {"repetitions", 1}});
  auto observer = f.connect(id, "observer");
  auto c = f.connect(id);
  EXPECT_EQ(f.post("/api/sessions/" + id + "/trials/next").first, 200);
  ASSERT_TRUE(await(*c, "trial_start"));
  c->close();
  const auto end = await(*observer, "trial_end");
  ASSERT_TRUE(end);
  EXPECT_EQ((*end)["outcome"], "stream_lost");
  f.wait_not_active(id);
  EXPECT_EQ(f.state(id)["state"], "finished");
  const auto m = f.get("/api/sessions/" + id + "/metrics").second;
  EXPECT_EQ(m["overall"]["attempted"], 0);
}

TEST(Service, StreamConfirmSelectsHoveredTarget) {
  Fixture f;
  const auto id = f.create({{"per_gap", 0}, {"repetitions", 1}, {"phase", "training"}});
  auto c = f.connect(id);
  EXPECT_EQ(f.post("/api/sessions/" + id + "/trials/next").first, 200);
  const auto start = await(*c, "trial_start");
  ASSERT_TRUE(start);
  ASSERT_TRUE(start->contains("reveal"));
  const double deg = (*start)["reveal"];
  const double rad = deg * 3.14159265358979323846 / 180.0;
  c->send({{"type", "cursor"}, {"t_ms", 500.0}, {"x", 0.95 * std::cos(rad)}, {"y", 0.95 * std::sin(rad)}});
  c->send({{"type", "confirm"}});
  const auto end = await(*c, "trial_end");
  ASSERT_TRUE(end);
  EXPECT_EQ((*end)["outcome"], "acquired");
  EXPECT_EQ((*end)["correct"], true);
  EXPECT_EQ((*end)["rt_ms"], 500.0);
}

// A scripted participant: perceives the streamed frames with the same model
// as the headless simulator and answers with the same cursor trace.
TEST(Service, SyntheticClientMatchesHeadlessMetrics) {
  Fixture f;
  const json body{{"per_gap", 1},
                  {"repetitions", 1},
                  {"frames_downstream", "always"},
                  {"randomization_seed", 5}};
  const auto id = f.create(body);
  const auto host = f.service->session(id);
  const SessionConfig config = host->config();
  const std::size_t trials = host->state_json()["trial_count"];
  ASSERT_EQ(trials, 12u);

  PerceiverModel model;
  model.angular_noise_sigma_deg = 12.0;
  model.rng_seed = 8;
  Perceiver perceiver(model);

  auto c = f.connect(id);
  const auto period_frames =
      static_cast<std::size_t>(config.render.frame_rate_hz * config.render.period_ms / 1000);
  for (std::size_t n = 0; n < trials; ++n) {
    const auto [st, next] = f.post("/api/sessions/" + id + "/trials/next");
    ASSERT_EQ(st, 200);
    const int trial_id = next["trial_id"];

    StimulusWaveform w;
    w.frame_rate_hz = config.render.frame_rate_hz;
    bool started = false;
    while (w.frames.size() < period_frames || !started) {
      auto m = c->receive(3000);
      ASSERT_TRUE(m);
      if ((*m)["type"] == "trial_start") {
        EXPECT_FALSE(m->contains("reveal"));
        started = true;
      } else if ((*m)["type"] == "frame" && (*m)["trial_id"] == trial_id && w.frames.size() < period_frames) {
        EXPECT_EQ((*m)["index"], w.frames.size());
        w.frames.push_back((*m)["amplitudes"].get<AmplitudeVector>());
      }
    }
    const bool moving = std::any_of(w.frames.begin(), w.frames.end(), [&](const auto& fr) { return fr != w.frames[0]; });
    w.mode = moving ? StimulusMode::Dynamic : StimulusMode::Static;
    w.period_frames = moving ? period_frames : 1;

    const auto p = perceiver.perceive(w, config.layout, config.falloff);
    for (const auto& s : synthetic_cursor_trace(p, config))
      c->send({{"type", "cursor"}, {"t_ms", s.t_ms}, {"x", s.x}, {"y", s.y}});
    std::vector<json> seen;
    const auto end = await(*c, "trial_end", &seen);
    ASSERT_TRUE(end);
    for (const auto& m : seen) EXPECT_FALSE(m.contains("reveal"));
  }
  EXPECT_EQ(f.state(id)["state"], "finished");

  const auto served = f.get("/api/sessions/" + id + "/metrics").second;
  const auto headless = simulate_session(config, model);
  EXPECT_EQ(served, to_json(headless.metrics));
  EXPECT_LT(headless.metrics.overall.accuracy, 1.0);  // the noise is doing something
  EXPECT_TRUE(f.device->gaps().empty());
}
