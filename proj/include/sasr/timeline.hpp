#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "sasr/common.hpp"

namespace sasr {

/// Half-open-ish time span in seconds. Invariant: 0 <= start < end.
struct TimeInterval {
  double start = 0.0;
  double end = 0.0;

  TimeInterval() = default;
  TimeInterval(double s, double e) : start(s), end(e) {
    if (s < 0.0 || !(s < e))
      throw Error(ErrorCode::range_error,
                  "bad interval [" + format_time(s) + ", " + format_time(e) + ")");
  }

  double duration() const { return end - start; }
  bool contains(double t) const { return start <= t && t < end; }
  bool operator==(const TimeInterval&) const = default;
};

inline double intersection_duration(const TimeInterval& a, const TimeInterval& b) {
  return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

/// Smallest interval covering both.
inline TimeInterval hull(const TimeInterval& a, const TimeInterval& b) {
  return {std::min(a.start, b.start), std::max(a.end, b.end)};
}

/// Session-scoped speaker index; canonical labels run 1,2,3,... by first appearance.
struct SpeakerLabel {
  int index = 0;
  auto operator<=>(const SpeakerLabel&) const = default;
};

enum class Gender { male, female, unknown };

inline const char* to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    default: return "unknown";
  }
}

inline Gender gender_from_string(const std::string& s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  if (s == "unknown") return Gender::unknown;
  throw Error(ErrorCode::format_error, "not a gender: '" + s + "'");
}

/// One speaker-attributed, timestamped utterance. Text may be empty only for
/// non-speech markers.
struct Segment {
  SpeakerLabel speaker;
  Gender gender = Gender::unknown;
  TimeInterval interval;
  std::string text;

  bool operator==(const Segment&) const = default;
};

/// Ordering contract for segment lists: start time, ties by speaker index.
inline void sort_segments(std::vector<Segment>& segments) {
  std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    return a.speaker < b.speaker;
  });
}

struct SessionAnnotation {
  std::string session_id;
  std::string audio_ref;
  double duration = 0.0;
  std::vector<Segment> segments;  // sorted by start, ties by speaker index
  std::map<SpeakerLabel, Gender> speaker_genders;
};

struct RelabelResult {
  std::vector<Segment> segments;
  std::map<SpeakerLabel, SpeakerLabel> remap;  // old label -> canonical label
};

/// Renumbers speakers by order of first appearance in list order, so the k-th
/// distinct speaker encountered becomes label k. Callers pass start-sorted
/// segments (or a cache-first concatenation, which is how label continuity
/// between cached history and current audio is obtained).
inline RelabelResult reassign_labels(const std::vector<Segment>& segments) {
  if (segments.empty()) throw Error(ErrorCode::empty_session, "no segments to relabel");
  RelabelResult out;
  out.segments.reserve(segments.size());
  int next = 1;
  for (const Segment& seg : segments) {
    auto [it, inserted] = out.remap.try_emplace(seg.speaker, SpeakerLabel{next});
    if (inserted) ++next;
    Segment copy = seg;
    copy.speaker = it->second;
    out.segments.push_back(std::move(copy));
  }
  return out;
}

enum class ViolationKind {
  out_of_range,
  same_speaker_overlap,
  missing_gender,
  gender_conflict,
  out_of_order,
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::out_of_range: return "out_of_range";
    case ViolationKind::same_speaker_overlap: return "same_speaker_overlap";
    case ViolationKind::missing_gender: return "missing_gender";
    case ViolationKind::gender_conflict: return "gender_conflict";
    case ViolationKind::out_of_order: return "out_of_order";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::size_t segment_index = 0;
  std::string detail;
};

/// Structural checks over a session. Violations are data, not errors: an empty
/// report means the annotation is well formed. Cross-speaker overlap is legal;
/// same-speaker overlap, out-of-range intervals, missing or conflicting gender
/// entries and ordering breaches are not.
inline std::vector<Violation> validate_session(const SessionAnnotation& ann) {
  std::vector<Violation> out;
  struct Reach {
    double max_end;
    std::size_t index;
  };
  std::map<SpeakerLabel, Reach> reach_of_speaker;
  for (std::size_t i = 0; i < ann.segments.size(); ++i) {
    const Segment& seg = ann.segments[i];
    if (seg.interval.start < 0.0 || seg.interval.end > ann.duration)
      out.push_back({ViolationKind::out_of_range, i,
                     "interval [" + format_time(seg.interval.start) + ", " +
                         format_time(seg.interval.end) + ") outside [0, " +
                         format_time(ann.duration) + ")"});
    if (i > 0) {
      const Segment& prev = ann.segments[i - 1];
      bool ordered = prev.interval.start < seg.interval.start ||
                     (prev.interval.start == seg.interval.start && prev.speaker <= seg.speaker);
      if (!ordered)
        out.push_back({ViolationKind::out_of_order, i, "segments not sorted by start/speaker"});
    }
    auto gender_it = ann.speaker_genders.find(seg.speaker);
    if (gender_it == ann.speaker_genders.end())
      out.push_back({ViolationKind::missing_gender, i,
                     "speaker " + std::to_string(seg.speaker.index) + " has no gender entry"});
    else if (gender_it->second != seg.gender)
      out.push_back({ViolationKind::gender_conflict, i,
                     "segment gender " + std::string(to_string(seg.gender)) +
                         " != speaker gender " + to_string(gender_it->second)});
    auto reach_it = reach_of_speaker.find(seg.speaker);
    if (reach_it != reach_of_speaker.end()) {
      double overlap = std::min(reach_it->second.max_end, seg.interval.end) - seg.interval.start;
      if (overlap > 0.0)
        out.push_back({ViolationKind::same_speaker_overlap, i,
                       "speaker " + std::to_string(seg.speaker.index) + " overlaps itself by " +
                           format_time(overlap) + " s (vs segment " +
                           std::to_string(reach_it->second.index) + ")"});
      if (seg.interval.end > reach_it->second.max_end)
        reach_it->second = {seg.interval.end, i};
    } else {
      reach_of_speaker.emplace(seg.speaker, Reach{seg.interval.end, i});
    }
  }
  return out;
}

}  // namespace sasr
