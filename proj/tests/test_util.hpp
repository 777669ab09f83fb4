#pragma once

#include <random>
#include <string>
#include <vector>

#include "sasr/synth.hpp"
#include "sasr/timeline.hpp"

namespace testutil {

inline sasr::Segment seg(int speaker, double start, double end, const std::string& text = "",
                         sasr::Gender gender = sasr::Gender::unknown) {
  sasr::Segment s;
  s.speaker = sasr::SpeakerLabel{speaker};
  s.gender = gender;
  s.interval = sasr::TimeInterval(start, end);
  s.text = text;
  return s;
}

inline sasr::SessionAnnotation session_of(std::vector<sasr::Segment> segments,
                                          const std::string& id = "test") {
  sasr::SessionAnnotation ann;
  ann.session_id = id;
  ann.segments = std::move(segments);
  sasr::sort_segments(ann.segments);
  for (const sasr::Segment& s : ann.segments) {
    ann.duration = std::max(ann.duration, s.interval.end);
    ann.speaker_genders.try_emplace(s.speaker, s.gender);
  }
  return ann;
}

inline sasr::SynthResult quick_session(std::uint64_t seed, double duration = 60.0,
                                       int min_speakers = 2, int max_speakers = 5,
                                       double overlap = 0.2, bool audio = false) {
  sasr::SynthConfig cfg;
  cfg.seed = seed;
  cfg.duration = duration;
  cfg.min_speakers = min_speakers;
  cfg.max_speakers = max_speakers;
  cfg.overlap_prob = overlap;
  cfg.render_audio = audio;
  return sasr::generate_session(cfg);
}

}  // namespace testutil
