#pragma once

// Session host: HTTP control API plus a per-session bidirectional message
// stream, driving one belt (mock or serial).
//
// HTTP (JSON bodies):
//   POST /api/sessions                   create; body is a (partial) session config
//   GET  /api/sessions/{id}              state
//   POST /api/sessions/{id}/trials/next  start the next trial
//   POST /api/sessions/{id}/trials/abort abort the active trial
//   GET  /api/sessions/{id}/metrics      live aggregates
//   GET  /api/sessions/{id}/file         session file (JSON Lines)
//   GET  /api/health
//
// Stream (see wire.hpp), after {"type":"hello","session_id":..,"role":"participant"|"observer"}:
//   down: welcome, trial_start, frame, trial_end, error
//   up:   cursor {t_ms,x,y}, confirm, abort
//
// Errors: 404 unknown session, 409 illegal transition, 400 bad request.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <list>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "tactile/clock.hpp"
#include "tactile/device.hpp"
#include "tactile/experiment.hpp"
#include "tactile/session_io.hpp"
#include "tactile/trial.hpp"
#include "tactile/wire.hpp"

namespace tactile {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;         // 0 picks a free port
  int stream_port = 8081;  // 0 picks a free port
  std::string device_uri = "mock:";
  std::string data_dir = "./data";
  SessionConfig session_defaults{};
};

/// Fan-out of downstream messages to stream connections, by session id.
class StreamHub {
 public:
  struct Connection {
    wire::Socket sock;
    std::mutex write_mu;
    std::string session_id;
    bool participant = true;
    std::atomic<bool> open{true};
  };

  void publish(const std::string& session_id, const nlohmann::json& msg) {
    const std::string bytes = wire::encode_message(msg);
    std::vector<std::shared_ptr<Connection>> targets;
    {
      std::lock_guard lock(mu_);
      for (const auto& c : conns_)
        if (c->open && c->session_id == session_id) targets.push_back(c);
    }
    for (const auto& c : targets) send(*c, bytes);
  }

  static void send(Connection& c, const std::string& bytes) {
    std::lock_guard lock(c.write_mu);
    if (c.open && !c.sock.send_all(bytes)) c.open = false;
  }

  void add(std::shared_ptr<Connection> c) {
    std::lock_guard lock(mu_);
    conns_.push_back(std::move(c));
  }
  void remove(const std::shared_ptr<Connection>& c) {
    std::lock_guard lock(mu_);
    conns_.remove(c);
  }
  void close_all() {
    std::lock_guard lock(mu_);
    for (auto& c : conns_) {
      c->open = false;
      c->sock.shutdown();
    }
  }

 private:
  std::mutex mu_;
  std::list<std::shared_ptr<Connection>> conns_;
};

/// One session: a state machine guarded by a mutex, with each trial run on
/// its own worker thread. Inputs reach the running trial only through the
/// ordered response channel.
class SessionHost {
 public:
  using Conflict = SessionStateMachine::Conflict;

  SessionHost(std::string id, SessionConfig config, FrameSink& device, StreamHub& hub,
              std::string data_dir)
      : id_(std::move(id)),
        sm_(std::move(config)),
        device_(device),
        hub_(hub),
        file_path_((std::filesystem::path(data_dir) / (id_ + ".jsonl")).string()),
        player_(device, steady_) {
    player_.set_frame_callback([this](std::uint64_t index, const AmplitudeVector& v) {
      const int trial_id = current_trial_id_.load();
      if (!frames_enabled_.load() || trial_id < 0) return;
      hub_.publish(id_, {{"type", "frame"}, {"trial_id", trial_id}, {"index", index}, {"amplitudes", v}});
    });
    std::lock_guard lock(mu_);
    persist_locked();
  }

  ~SessionHost() {
    channel_.push({ResponseEvent::Kind::Abort, {}});
    if (worker_.joinable()) worker_.join();
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& file_path() const noexcept { return file_path_; }

  /// Starts the next planned trial; throws Conflict when one is active or
  /// the session is finished.
  Trial start_next() {
    std::lock_guard lock(mu_);
    if (worker_.joinable() && sm_.state() != SessionStateMachine::State::TrialActive) worker_.join();
    const Trial trial = sm_.begin_trial();
    channel_.clear();
    const auto mode = sm_.config().frames_downstream;
    frames_enabled_ = mode == FramesDownstream::Always ||
                      (mode == FramesDownstream::Training && trial.phase == Phase::Training);
    current_trial_id_ = trial.trial_id;
    worker_ = std::thread([this, trial] { run(trial); });
    return trial;
  }

  void abort() {
    std::lock_guard lock(mu_);
    if (sm_.state() != SessionStateMachine::State::TrialActive) throw Conflict("no active trial");
    channel_.push({ResponseEvent::Kind::Abort, {}});
  }

  /// Samples outside a trial are dropped.
  void on_cursor(const CursorSample& s) {
    std::lock_guard lock(mu_);
    if (sm_.state() == SessionStateMachine::State::TrialActive)
      channel_.push_sample(s);
    else
      ++discarded_samples_;
  }
  void on_confirm() {
    std::lock_guard lock(mu_);
    if (sm_.state() == SessionStateMachine::State::TrialActive)
      channel_.push({ResponseEvent::Kind::Confirm, {}});
  }
  void on_stream_lost() {
    std::lock_guard lock(mu_);
    if (sm_.state() == SessionStateMachine::State::TrialActive)
      channel_.push({ResponseEvent::Kind::Lost, {}});
  }

  bool trial_active() const {
    std::lock_guard lock(mu_);
    return sm_.state() == SessionStateMachine::State::TrialActive;
  }
  bool finished() const {
    std::lock_guard lock(mu_);
    return sm_.state() == SessionStateMachine::State::Finished;
  }

  nlohmann::json state_json() const {
    std::lock_guard lock(mu_);
    nlohmann::json j{{"session_id", id_},
                     {"state", to_string(sm_.state())},
                     {"trial_index", sm_.next_index()},
                     {"trial_count", sm_.plan().size()},
                     {"completed", sm_.records().size()},
                     {"discarded_samples", discarded_samples_}};
    if (const Trial* t = sm_.pending_trial()) {
      nlohmann::json p{{"trial_id", t->trial_id}, {"phase", to_string(t->phase)}};
      if (t->phase == Phase::Training) p["reveal_deg"] = t->target.angle_deg;
      j["pending_trial"] = p;
      j["phase"] = to_string(t->phase);
    } else {
      j["pending_trial"] = nullptr;
      j["phase"] = to_string(sm_.config().phase);
    }
    return j;
  }

  SessionMetrics metrics() const {
    std::lock_guard lock(mu_);
    return sm_.metrics();
  }
  std::vector<TrialRecord> records() const {
    std::lock_guard lock(mu_);
    return sm_.records();
  }
  SessionConfig config() const {
    std::lock_guard lock(mu_);
    return sm_.config();
  }

 private:
  void run(Trial trial) {
    const SessionConfig config = [&] {
      std::lock_guard lock(mu_);
      return sm_.config();
    }();

    TrialObserver observer;
    observer.on_start = [&](const TrialStartInfo& info) {
      nlohmann::json candidates = nlohmann::json::array();
      for (const auto& t : config.targets) candidates.push_back(t.angle_deg);
      nlohmann::json msg{{"type", "trial_start"},
                         {"trial_id", info.trial_id},
                         {"phase", to_string(info.phase)},
                         {"candidates", candidates},
                         {"onset_ms", info.onset_ms}};
      if (info.reveal) msg["reveal"] = info.reveal->angle_deg;
      hub_.publish(id_, msg);
    };

    TrialRecord rec = run_trial(trial, config, player_, channel_, system_clock_, observer);
    current_trial_id_ = -1;

    nlohmann::json end{{"type", "trial_end"},
                       {"trial_id", rec.trial_id},
                       {"selected", rec.selected ? nlohmann::json(rec.selected->angle_deg) : nullptr},
                       {"correct", rec.correct},
                       {"rt_ms", rec.acquisition_ms ? nlohmann::json(*rec.acquisition_ms) : nullptr},
                       {"outcome", to_string(rec.outcome)}};
    {
      std::lock_guard lock(mu_);
      const bool lost = rec.outcome == TrialOutcome::StreamLost;
      sm_.complete_trial(std::move(rec));
      if (lost && sm_.state() != SessionStateMachine::State::Finished) sm_.finish_early();
      persist_locked();
    }
    hub_.publish(id_, end);
  }

  void persist_locked() {
    try {
      persist_session(file_path_, sm_.config(), sm_.records(), sm_.metrics());
    } catch (const std::exception&) {
      // Session keeps running; GET .../file reports the failure.
    }
  }

  std::string id_;
  mutable std::mutex mu_;
  SessionStateMachine sm_;
  FrameSink& device_;
  StreamHub& hub_;
  std::string file_path_;
  SteadyClock steady_;
  SystemClock system_clock_;
  DevicePlayer<SteadyClock> player_;
  ResponseChannel channel_;
  std::thread worker_;
  std::atomic<int> current_trial_id_{-1};
  std::atomic<bool> frames_enabled_{false};
  std::uint64_t discarded_samples_ = 0;
};

class Service {
 public:
  explicit Service(ServiceConfig config, std::unique_ptr<FrameSink> device = nullptr)
      : config_(std::move(config)),
        device_(device ? std::move(device) : open_device(config_.device_uri)) {
    std::filesystem::create_directories(config_.data_dir);
    install_routes();
  }

  ~Service() { stop(); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds both ports and starts serving in background threads.
  void start() {
    listener_ = wire::listen_tcp(config_.host, config_.stream_port);
    stream_port_ = wire::local_port(listener_);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });

    if (config_.port == 0) {
      http_port_ = http_.bind_to_any_port(config_.host);
    } else {
      http_port_ = http_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    if (http_port_ <= 0) {
      stop();
      throw std::runtime_error("cannot bind HTTP port on " + config_.host);
    }
    http_thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
  }

  /// Blocks until stop() is called from another thread or a signal handler.
  void wait() {
    if (http_thread_.joinable()) http_thread_.join();
  }

  void stop() {
    if (!running_.exchange(false)) return;
    http_.stop();
    if (http_thread_.joinable()) http_thread_.join();
    listener_.shutdown();
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close();
    hub_.close_all();
    for (auto& t : reader_threads_)
      if (t.joinable()) t.join();
    std::lock_guard lock(mu_);
    session_.reset();
  }

  int http_port() const noexcept { return http_port_; }
  int stream_port() const noexcept { return stream_port_; }
  FrameSink& device() noexcept { return *device_; }

  std::shared_ptr<SessionHost> session(const std::string& id) const {
    std::lock_guard lock(mu_);
    return session_ && session_->id() == id ? session_ : nullptr;
  }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void error(httplib::Response& res, int status, const std::string& msg) {
    reply(res, status, {{"error", msg}});
  }

  std::string new_session_id() {
    std::random_device rd;
    std::ostringstream ss;
    ss << "s" << ++session_counter_ << '-' << std::hex << std::setw(8) << std::setfill('0') << rd();
    return ss.str();
  }

  template <typename F>
  void with_session(const httplib::Request& req, httplib::Response& res, F&& f) {
    auto host = session(req.path_params.at("id"));
    if (!host) return error(res, 404, "unknown session");
    try {
      f(*host);
    } catch (const SessionStateMachine::Conflict& e) {
      error(res, 409, e.what());
    }
  }

  void install_routes() {
    http_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}});
    });

    http_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      SessionConfig config;
      try {
        nlohmann::json body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
        nlohmann::json merged = to_json(config_.session_defaults);
        if (body.contains("layout") || body.contains("per_gap") || body.contains("targets_deg")) {
          // Geometry changes: drop values derived from the default geometry.
          if (body.contains("layout")) merged.erase("layout");
          merged.erase("targets_deg");
          merged["falloff"].erase("span_deg");
          merged["acquisition"].erase("sector_halfwidth_deg");
        }
        merged.merge_patch(body);
        config = config_from_json(merged);
      } catch (const std::exception& e) {
        return error(res, 400, std::string("bad session config: ") + e.what());
      }
      std::lock_guard lock(mu_);
      if (session_ && session_->trial_active()) return error(res, 409, "a trial is active");
      try {
        session_.reset();
        session_ = std::make_shared<SessionHost>(new_session_id(), std::move(config), *device_, hub_,
                                                 config_.data_dir);
      } catch (const std::exception& e) {
        return error(res, 400, e.what());
      }
      reply(res, 201, {{"session_id", session_->id()}, {"stream_port", stream_port_}});
    });

    http_.Get("/api/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](SessionHost& h) { reply(res, 200, h.state_json()); });
    });

    http_.Post("/api/sessions/:id/trials/next", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](SessionHost& h) {
        const Trial t = h.start_next();
        reply(res, 200, {{"trial_id", t.trial_id}, {"phase", to_string(t.phase)}});
      });
    });

    http_.Post("/api/sessions/:id/trials/abort", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](SessionHost& h) {
        h.abort();
        reply(res, 200, {{"status", "aborting"}});
      });
    });

    http_.Get("/api/sessions/:id/metrics", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](SessionHost& h) { reply(res, 200, to_json(h.metrics())); });
    });

    http_.Get("/api/sessions/:id/file", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](SessionHost& h) {
        std::ifstream in(h.file_path());
        if (!in) return error(res, 500, "session file unavailable");
        std::stringstream ss;
        ss << in.rdbuf();
        res.status = 200;
        res.set_content(ss.str(), "application/x-ndjson");
      });
    });
  }

  void accept_loop() {
    while (running_) {
      pollfd p{listener_.fd(), POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) continue;
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      auto conn = std::make_shared<StreamHub::Connection>();
      conn->sock = wire::Socket(fd);
      conn->session_id.clear();
      reader_threads_.emplace_back([this, conn] { read_loop(conn); });
    }
  }

  void read_loop(std::shared_ptr<StreamHub::Connection> conn) {
    wire::MessageReader reader;
    std::array<char, 4096> buf{};
    bool subscribed = false;
    while (running_ && conn->open) {
      const long n = conn->sock.recv_some(buf.data(), buf.size(), 100);
      if (n == 0) continue;
      if (n < 0) break;
      reader.push(std::string_view(buf.data(), static_cast<std::size_t>(n)));
      try {
        while (auto msg = reader.next()) {
          const std::string type = (*msg)["type"].get<std::string>();
          if (type == "hello") {
            const std::string id = msg->value("session_id", "");
            if (!session(id)) {
              StreamHub::send(*conn, wire::encode_message({{"type", "error"}, {"error", "unknown session"}}));
              continue;
            }
            if (subscribed) continue;  // one session per connection
            conn->session_id = id;
            conn->participant = msg->value("role", "participant") != "observer";
            hub_.add(conn);
            subscribed = true;
            StreamHub::send(*conn, wire::encode_message({{"type", "welcome"}, {"session_id", id}}));
            continue;
          }
          auto host = subscribed ? session(conn->session_id) : nullptr;
          if (!host) continue;
          if (type == "cursor") {
            host->on_cursor({msg->at("t_ms").get<double>(), msg->at("x").get<double>(),
                             msg->at("y").get<double>()});
          } else if (type == "confirm") {
            host->on_confirm();
          } else if (type == "abort") {
            try {
              host->abort();
            } catch (const SessionStateMachine::Conflict&) {
            }
          }
        }
      } catch (const std::exception& e) {
        StreamHub::send(*conn, wire::encode_message({{"type", "error"}, {"error", e.what()}}));
        break;
      }
    }
    conn->open = false;
    if (subscribed) {
      hub_.remove(conn);
      if (conn->participant)
        if (auto host = session(conn->session_id)) host->on_stream_lost();
    }
  }

  ServiceConfig config_;
  std::unique_ptr<FrameSink> device_;
  httplib::Server http_;
  StreamHub hub_;
  wire::Socket listener_;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread http_thread_;
  std::vector<std::thread> reader_threads_;
  int http_port_ = -1;
  int stream_port_ = -1;
  mutable std::mutex mu_;
  std::shared_ptr<SessionHost> session_;
  int session_counter_ = 0;
};

}  // namespace tactile
