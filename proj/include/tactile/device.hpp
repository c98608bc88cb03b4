#pragma once

// Frame sinks: the mock belt used for tests and desk runs, and a POSIX
// serial port for real hardware. Select with a device URI:
//
//   "mock:"              in-memory mock, log kept in memory
//   "mock:/path/x.jsonl" mock that also writes its log on close
//   "/dev/ttyACM0"       serial port (115200 8N1, raw)

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fcntl.h>
#include <termios.h>
#include <unistd.h>

#include "json.hpp"

#include "tactile/clock.hpp"
#include "tactile/protocol.hpp"

namespace tactile {

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  /// Returns false when the device is gone.
  virtual bool write(std::span<const std::uint8_t> bytes) = 0;
  virtual std::string describe() const = 0;
};

struct MockLogEntry {
  double t_ms = 0.0;
  std::uint8_t seq = 0;
  protocol::DutyArray duty{};
};

struct SeqGap {
  std::size_t index = 0;  // log index of the frame after the gap
  std::uint8_t expected = 0;
  std::uint8_t got = 0;
};

/// Records every decoded frame with its arrival time.
class MockDevice final : public FrameSink {
 public:
  MockDevice() = default;
  explicit MockDevice(std::string log_path) : log_path_(std::move(log_path)) {}
  ~MockDevice() override {
    if (!log_path_.empty()) {
      std::ofstream out(log_path_);
      if (out) write_log(out);
    }
  }

  bool write(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lock(mu_);
    if (fail_after_ && writes_ >= *fail_after_) return false;
    ++writes_;
    decoder_.push(bytes);
    const double now = clock_.now_ms();
    while (auto f = decoder_.next()) {
      if (!log_.empty()) {
        const auto expected = static_cast<std::uint8_t>(log_.back().seq + 1);
        if (f->seq != expected) gaps_.push_back({log_.size(), expected, f->seq});
      }
      log_.push_back({now, f->seq, f->duty});
    }
    return true;
  }

  std::string describe() const override { return log_path_.empty() ? "mock:" : "mock:" + log_path_; }

  /// Simulate an unplugged belt after `n` successful writes.
  void fail_after(std::size_t n) {
    std::lock_guard lock(mu_);
    fail_after_ = n;
  }

  std::vector<MockLogEntry> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }
  std::vector<SeqGap> gaps() const {
    std::lock_guard lock(mu_);
    return gaps_;
  }
  protocol::FrameDecoder::Stats decoder_stats() const {
    std::lock_guard lock(mu_);
    return decoder_.stats();
  }
  std::size_t frame_count() const {
    std::lock_guard lock(mu_);
    return log_.size();
  }

  /// JSON Lines, one object per frame: {"t_ms":..,"seq":..,"duty":[6]}.
  void write_log(std::ostream& out) const {
    for (const auto& e : log()) {
      nlohmann::json j;
      j["t_ms"] = e.t_ms;
      j["seq"] = e.seq;
      j["duty"] = e.duty;
      out << j.dump() << '\n';
    }
  }

 private:
  mutable std::mutex mu_;
  SteadyClock clock_;
  protocol::FrameDecoder decoder_;
  std::vector<MockLogEntry> log_;
  std::vector<SeqGap> gaps_;
  std::optional<std::size_t> fail_after_;
  std::size_t writes_ = 0;
  std::string log_path_;
};

/// Raw serial port. Opens non-blocking for the open() call only.
class SerialSink final : public FrameSink {
 public:
  explicit SerialSink(std::string path, speed_t baud = B115200) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
    if (fd_ < 0) throw std::runtime_error("serial: cannot open " + path_ + ": " + std::strerror(errno));
    termios tio{};
    if (::tcgetattr(fd_, &tio) == 0) {
      ::cfmakeraw(&tio);
      ::cfsetispeed(&tio, baud);
      ::cfsetospeed(&tio, baud);
      tio.c_cflag |= CLOCAL | CREAD;
      tio.c_cflag &= ~CSTOPB;
      ::tcsetattr(fd_, TCSANOW, &tio);
    }
    const int flags = ::fcntl(fd_, F_GETFL);
    ::fcntl(fd_, F_SETFL, flags & ~O_NONBLOCK);
  }
  ~SerialSink() override {
    if (fd_ >= 0) ::close(fd_);
  }
  SerialSink(const SerialSink&) = delete;
  SerialSink& operator=(const SerialSink&) = delete;

  bool write(std::span<const std::uint8_t> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::write(fd_, bytes.data() + done, bytes.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      done += static_cast<std::size_t>(n);
    }
    return true;
  }

  std::string describe() const override { return path_; }

 private:
  std::string path_;
  int fd_ = -1;
};

inline std::unique_ptr<FrameSink> open_device(const std::string& uri) {
  if (uri.rfind("mock:", 0) == 0) {
    const std::string path = uri.substr(5);
    return path.empty() ? std::make_unique<MockDevice>() : std::make_unique<MockDevice>(path);
  }
  if (uri.empty()) throw std::invalid_argument("device uri is empty");
  return std::make_unique<SerialSink>(uri);
}

}  // namespace tactile
