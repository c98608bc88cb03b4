#pragma once

// Fixed-rate playback of a waveform to a frame sink on its own thread.
// Ticks are scheduled on absolute deadlines (onset + k / rate) so lateness
// does not accumulate.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <thread>

#include "tactile/clock.hpp"
#include "tactile/device.hpp"
#include "tactile/dynamics.hpp"
#include "tactile/protocol.hpp"

namespace tactile {

struct PlaybackReport {
  std::uint64_t frames_sent = 0;
  double max_lateness_ms = 0.0;
  bool device_gone = false;
  std::uint8_t next_seq = 0;
};

struct PlaybackOptions {
  std::uint8_t first_seq = 0;
  /// Stop after this many frames; unset loops until stopped.
  std::optional<std::uint64_t> max_frames;
  /// Called on the playback thread after each successful write.
  std::function<void(std::uint64_t index, const AmplitudeVector&)> on_frame;
};

class Playback;

template <typename Clock>
Playback stream_waveform(StimulusWaveform w, FrameSink& sink, Clock& clock, PlaybackOptions opts = {});

/// Handle to a running playback. Destruction stops and joins.
class Playback {
 public:
  Playback() = default;
  Playback(Playback&&) = default;
  Playback& operator=(Playback&&) = default;
  ~Playback() { stop(); }

  void stop() {
    if (thread_.joinable()) {
      thread_.request_stop();
      thread_.join();
    }
  }
  void wait() {
    if (thread_.joinable()) thread_.join();
  }
  bool running() const { return state_ && !state_->finished.load(); }

  PlaybackReport report() const {
    if (!state_) return {};
    std::lock_guard lock(state_->mu);
    return state_->report;
  }

 private:
  struct State {
    mutable std::mutex mu;
    PlaybackReport report;
    std::atomic<bool> finished{false};
  };

  template <typename Clock>
  friend Playback stream_waveform(StimulusWaveform, FrameSink&, Clock&, PlaybackOptions);

  std::shared_ptr<State> state_;
  std::jthread thread_;
};

template <typename Clock>
Playback stream_waveform(StimulusWaveform w, FrameSink& sink, Clock& clock, PlaybackOptions opts) {
  Playback pb;
  pb.state_ = std::make_shared<Playback::State>();
  pb.state_->report.next_seq = opts.first_seq;
  if (w.frames.empty() || w.frame_rate_hz <= 0) {
    pb.state_->finished = true;
    return pb;
  }

  pb.thread_ = std::jthread([w = std::move(w), &sink, &clock, opts = std::move(opts),
                             state = pb.state_](std::stop_token st) {
    const double pitch_ms = 1000.0 / static_cast<double>(w.frame_rate_hz);
    const double onset = clock.now_ms();
    std::uint8_t seq = opts.first_seq;
    for (std::uint64_t k = 0; !st.stop_requested(); ++k) {
      if (opts.max_frames && k >= *opts.max_frames) break;
      const double deadline = onset + pitch_ms * static_cast<double>(k);
      clock.sleep_until_ms(deadline);
      if (st.stop_requested()) break;
      const double lateness = clock.now_ms() - deadline;

      const auto& frame = w.frame_at(static_cast<std::size_t>(k));
      const auto bytes = protocol::encode_frame(frame, seq);
      const bool ok = sink.write(bytes);
      {
        std::lock_guard lock(state->mu);
        if (!ok) {
          state->report.device_gone = true;
          break;
        }
        ++state->report.frames_sent;
        state->report.max_lateness_ms = std::max(state->report.max_lateness_ms, lateness);
        state->report.next_seq = ++seq;
      }
      if (opts.on_frame) opts.on_frame(k, frame);
    }
    state->finished = true;
  });
  return pb;
}

}  // namespace tactile
