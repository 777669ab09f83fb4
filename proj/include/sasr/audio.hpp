#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sasr/common.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

/// Mono audio, samples in [-1, 1]. Multichannel sources are folded to
/// channel 0 on load.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 0;
  std::string source_ref;  // originating file or synthetic id

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct AudioSlice {
  std::string parent_ref;
  TimeInterval interval;
  std::vector<float> samples;
  int sample_rate = 0;
};

namespace detail {

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;  // little-endian hosts only, which is all we target
}

struct WavData {
  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  int format = 0;  // 1 = PCM, 3 = IEEE float
  std::vector<unsigned char> data;
};

inline WavData parse_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::file_missing, path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::truncated_file, path + ": not a RIFF/WAVE header");

  WavData wav;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    char id[5] = {0};
    std::memcpy(id, bytes.data() + pos, 4);
    std::uint32_t len = read_le<std::uint32_t>(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size()) throw Error(ErrorCode::truncated_file, path + ": chunk '" + id + "' runs past EOF");
    if (std::strcmp(id, "fmt ") == 0) {
      if (len < 16) throw Error(ErrorCode::truncated_file, path + ": fmt chunk too short");
      wav.format = read_le<std::uint16_t>(bytes.data() + pos);
      wav.channels = read_le<std::uint16_t>(bytes.data() + pos + 2);
      wav.sample_rate = static_cast<int>(read_le<std::uint32_t>(bytes.data() + pos + 4));
      wav.bits = read_le<std::uint16_t>(bytes.data() + pos + 14);
      if (wav.format == 0xFFFE && len >= 40)  // WAVE_FORMAT_EXTENSIBLE: sub-format GUID leads with the code
        wav.format = read_le<std::uint16_t>(bytes.data() + pos + 24);
      have_fmt = true;
    } else if (std::strcmp(id, "data") == 0) {
      wav.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
      have_data = true;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data)
    throw Error(ErrorCode::truncated_file, path + ": missing fmt or data chunk");
  if (wav.channels < 1 || wav.sample_rate <= 0)
    throw Error(ErrorCode::unsupported_encoding, path + ": bad channel count or rate");
  bool pcm16 = wav.format == 1 && wav.bits == 16;
  bool float32 = wav.format == 3 && wav.bits == 32;
  if (!pcm16 && !float32)
    throw Error(ErrorCode::unsupported_encoding,
                path + ": format " + std::to_string(wav.format) + "/" + std::to_string(wav.bits) +
                    "-bit (PCM16 and float32 only)");
  return wav;
}

}  // namespace detail

/// Loads a PCM16 or float32 WAV and keeps only the first channel,
/// normalized to [-1, 1].
inline AudioBuffer load_wav_mono(const std::string& path) {
  detail::WavData wav = detail::parse_wav(path);
  const int bytes_per_sample = wav.bits / 8;
  const std::size_t frame_bytes = static_cast<std::size_t>(bytes_per_sample) * wav.channels;
  const std::size_t frames = wav.data.size() / frame_bytes;

  AudioBuffer out;
  out.sample_rate = wav.sample_rate;
  out.source_ref = path;
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const unsigned char* p = wav.data.data() + f * frame_bytes;  // channel 0 leads each frame
    if (wav.format == 1) {
      out.samples[f] = static_cast<float>(detail::read_le<std::int16_t>(p)) / 32768.0f;
    } else {
      out.samples[f] = detail::read_le<float>(p);
    }
  }
  return out;
}

/// Mono PCM16 WAV as raw bytes.
inline std::string wav_bytes_mono16(std::span<const float> samples, int sample_rate) {
  std::string out;
  out.reserve(44 + samples.size() * 2);
  auto put32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
  std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.append("RIFF", 4);
  put32(36 + data_len);
  out.append("WAVE", 4);
  out.append("fmt ", 4);
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  out.append("data", 4);
  put32(data_len);
  for (float s : samples) {
    float clamped = std::clamp(s, -1.0f, 1.0f);
    auto v = static_cast<std::int16_t>(std::lrintf(clamped * 32767.0f));
    put16(static_cast<std::uint16_t>(v));
  }
  return out;
}

inline void write_wav_mono16(const std::string& path, std::span<const float> samples,
                             int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::file_missing, "cannot open for write: " + path);
  std::string bytes = wav_bytes_mono16(samples, sample_rate);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Extracts samples [floor(start*rate), floor(end*rate)). Floor on both ends
/// keeps adjacent slices gap- and overlap-free.
inline AudioSlice slice_audio(const AudioBuffer& buf, const TimeInterval& iv) {
  if (iv.end > buf.duration() + 1e-9)
    throw Error(ErrorCode::range_error, "slice [" + format_time(iv.start) + ", " +
                                            format_time(iv.end) + ") outside buffer of " +
                                            format_time(buf.duration()) + " s");
  auto first = static_cast<std::size_t>(std::floor(iv.start * buf.sample_rate));
  auto last = static_cast<std::size_t>(std::floor(iv.end * buf.sample_rate));
  last = std::min(last, buf.samples.size());
  AudioSlice out;
  out.parent_ref = buf.source_ref;
  out.interval = iv;
  out.sample_rate = buf.sample_rate;
  out.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(first),
                     buf.samples.begin() + static_cast<std::ptrdiff_t>(last));
  return out;
}

/// Energy VAD over 25 ms windows: a window is speech when its mean-square
/// energy reaches half the median window energy; speech state is held for a
/// 300 ms hangover. Returns speech intervals.
inline std::vector<TimeInterval> detect_speech_energy(const AudioBuffer& buf) {
  constexpr double kWindow = 0.025;
  constexpr double kHangover = 0.300;
  std::vector<TimeInterval> out;
  if (buf.samples.empty() || buf.sample_rate <= 0) return out;
  const std::size_t win = std::max<std::size_t>(1, static_cast<std::size_t>(kWindow * buf.sample_rate));
  const std::size_t n_win = (buf.samples.size() + win - 1) / win;
  std::vector<double> energy(n_win, 0.0);
  for (std::size_t w = 0; w < n_win; ++w) {
    std::size_t begin = w * win, end = std::min(begin + win, buf.samples.size());
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += double(buf.samples[i]) * buf.samples[i];
    energy[w] = acc / static_cast<double>(end - begin);
  }
  std::vector<double> sorted = energy;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_win / 2), sorted.end());
  const double threshold = 0.5 * sorted[n_win / 2];
  const auto hang_windows = static_cast<std::size_t>(std::ceil(kHangover / kWindow));

  std::optional<double> speech_start;
  std::size_t silent_run = 0;
  for (std::size_t w = 0; w < n_win; ++w) {
    bool active = energy[w] > threshold && energy[w] > 0.0;
    double t0 = static_cast<double>(w * win) / buf.sample_rate;
    double t1 = static_cast<double>(std::min((w + 1) * win, buf.samples.size())) / buf.sample_rate;
    if (active) {
      if (!speech_start) speech_start = t0;
      silent_run = 0;
    } else if (speech_start) {
      if (++silent_run > hang_windows) {
        double end_t = t1 - static_cast<double>(silent_run) * kWindow;
        if (end_t > *speech_start) out.emplace_back(*speech_start, end_t);
        speech_start.reset();
        silent_run = 0;
      }
    }
  }
  if (speech_start && buf.duration() > *speech_start)
    out.emplace_back(*speech_start, buf.duration());
  return out;
}

/// Tiles [0, T] into chunks: each cut lands on a VAD boundary (speech-interval
/// end) when one exists within [min_len, max_len] of the previous cut, picking
/// the latest such boundary, and falls back to a hard cut at max_len. Without
/// supplied VAD intervals the internal energy VAD provides them.
inline std::vector<TimeInterval> segment_long_form(
    const AudioBuffer& buf, const std::optional<std::vector<TimeInterval>>& vad,
    double min_len = 40.0, double max_len = 50.0) {
  if (!(min_len < max_len) || min_len < 0.0)
    throw Error(ErrorCode::config_error, "need 0 <= min_len < max_len");
  const double total = buf.duration();
  std::vector<TimeInterval> out;
  if (total <= 0.0) return out;

  std::vector<double> candidates;
  const std::vector<TimeInterval> speech = vad ? *vad : detect_speech_energy(buf);
  for (const TimeInterval& iv : speech)
    if (iv.end > 0.0 && iv.end < total) candidates.push_back(iv.end);
  std::sort(candidates.begin(), candidates.end());

  double cursor = 0.0;
  while (total - cursor > max_len) {
    double lo = cursor + min_len, hi = cursor + max_len;
    auto it = std::upper_bound(candidates.begin(), candidates.end(), hi);
    double cut = hi;  // hard cut fallback
    if (it != candidates.begin() && *(it - 1) >= lo && *(it - 1) > cursor) cut = *(it - 1);
    out.emplace_back(cursor, cut);
    cursor = cut;
  }
  out.emplace_back(cursor, total);
  return out;
}

}  // namespace sasr
