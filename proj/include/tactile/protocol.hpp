#pragma once

// Belt wire protocol.
//
// Every frame is 9 bytes:
//
//   +------+-----+---------+---------+-----+---------+----------+
//   | 0xAA | seq | duty[0] | duty[1] | ... | duty[5] | checksum |
//   +------+-----+---------+---------+-----+---------+----------+
//
// duty[i] = round_half_up(255 * amplitude[i]); checksum = seq ^ duty[0] ^ ... ^ duty[5].
// seq is a wrapping 8-bit counter incremented per frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tactile/amplitude.hpp"

namespace tactile::protocol {

inline constexpr std::uint8_t kSync = 0xAA;
inline constexpr std::size_t kChannels = 6;
inline constexpr std::size_t kFrameSize = 3 + kChannels;

using FrameBytes = std::array<std::uint8_t, kFrameSize>;
using DutyArray = std::array<std::uint8_t, kChannels>;

inline std::uint8_t quantize(double amplitude) noexcept {
  if (!(amplitude > 0.0)) return 0;
  if (amplitude >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(255.0 * amplitude + 0.5));
}

inline double dequantize(std::uint8_t duty) noexcept { return static_cast<double>(duty) / 255.0; }

inline std::uint8_t checksum(std::uint8_t seq, std::span<const std::uint8_t> duty) noexcept {
  std::uint8_t c = seq;
  for (auto d : duty) c ^= d;
  return c;
}

inline FrameBytes encode_frame(std::span<const double> amplitudes, std::uint8_t seq) {
  if (amplitudes.size() != kChannels)
    throw std::invalid_argument("encode_frame: expected 6 amplitudes");
  FrameBytes f{};
  f[0] = kSync;
  f[1] = seq;
  for (std::size_t i = 0; i < kChannels; ++i) f[2 + i] = quantize(amplitudes[i]);
  f[kFrameSize - 1] = checksum(seq, std::span(f).subspan(2, kChannels));
  return f;
}

inline FrameBytes encode_frame(const AmplitudeVector& v, std::uint8_t seq) {
  return encode_frame(std::span<const double>(v), seq);
}

struct DecodedFrame {
  std::uint8_t seq = 0;
  DutyArray duty{};

  AmplitudeVector amplitudes() const {
    AmplitudeVector v(kChannels);
    for (std::size_t i = 0; i < kChannels; ++i) v[i] = dequantize(duty[i]);
    return v;
  }
  bool operator==(const DecodedFrame&) const = default;
};

enum class DecodeStatus { Ok, Truncated, BadSync, BadChecksum };

inline const char* to_string(DecodeStatus s) noexcept {
  switch (s) {
    case DecodeStatus::Ok: return "ok";
    case DecodeStatus::Truncated: return "truncated";
    case DecodeStatus::BadSync: return "bad_sync";
    case DecodeStatus::BadChecksum: return "bad_checksum";
  }
  return "?";
}

struct DecodeResult {
  DecodeStatus status = DecodeStatus::Truncated;
  DecodedFrame frame;
  bool ok() const noexcept { return status == DecodeStatus::Ok; }
};

/// Decode one frame starting at bytes[0].
inline DecodeResult decode_frame(std::span<const std::uint8_t> bytes) noexcept {
  if (bytes.empty()) return {DecodeStatus::Truncated, {}};
  if (bytes[0] != kSync) return {DecodeStatus::BadSync, {}};
  if (bytes.size() < kFrameSize) return {DecodeStatus::Truncated, {}};
  DecodedFrame f;
  f.seq = bytes[1];
  for (std::size_t i = 0; i < kChannels; ++i) f.duty[i] = bytes[2 + i];
  if (checksum(f.seq, bytes.subspan(2, kChannels)) != bytes[kFrameSize - 1])
    return {DecodeStatus::BadChecksum, {}};
  return {DecodeStatus::Ok, f};
}

/// Incremental decoder for a byte stream. Scans for 0xAA, validates the
/// checksum, and on failure drops the sync byte and rescans.
class FrameDecoder {
 public:
  struct Stats {
    std::uint64_t frames = 0;
    std::uint64_t bad_checksum = 0;
    std::uint64_t skipped_bytes = 0;
  };

  void push(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void push(std::uint8_t byte) { buf_.push_back(byte); }

  /// Next complete valid frame, or nullopt if more bytes are needed.
  std::optional<DecodedFrame> next() {
    for (;;) {
      while (!buf_.empty() && buf_.front() != kSync) {
        buf_.pop_front();
        ++stats_.skipped_bytes;
      }
      if (buf_.size() < kFrameSize) return std::nullopt;
      FrameBytes candidate;
      std::copy_n(buf_.begin(), kFrameSize, candidate.begin());
      const auto r = decode_frame(candidate);
      if (r.ok()) {
        buf_.erase(buf_.begin(), buf_.begin() + kFrameSize);
        ++stats_.frames;
        return r.frame;
      }
      ++stats_.bad_checksum;
      ++stats_.skipped_bytes;
      buf_.pop_front();
    }
  }

  std::vector<DecodedFrame> drain() {
    std::vector<DecodedFrame> out;
    while (auto f = next()) out.push_back(*f);
    return out;
  }

  std::size_t buffered() const noexcept { return buf_.size(); }
  const Stats& stats() const noexcept { return stats_; }

 private:
  std::deque<std::uint8_t> buf_;
  Stats stats_;
};

}  // namespace tactile::protocol
