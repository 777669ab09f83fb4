#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sasr/audio.hpp"
#include "sasr/boundary.hpp"
#include "sasr/common.hpp"
#include "sasr/protocol.hpp"
#include "sasr/text.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

namespace rngutil {

// Engine-only draws (mt19937_64 output is standardized; std distributions are
// not), so generated data is reproducible across toolchains.
inline std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline bool chance(std::mt19937_64& rng, double p) { return uniform01(rng) < p; }

// Box-Muller, truncated at +/-2 sigma.
inline double truncated_normal(std::mt19937_64& rng, double sigma) {
  double u1 = std::max(uniform01(rng), 1e-12);
  double u2 = uniform01(rng);
  double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  return std::clamp(n, -2.0, 2.0) * sigma;
}

}  // namespace rngutil

// ---------------------------------------------------------------------------
// Synthetic conversations

struct SynthConfig {
  int min_speakers = 2;
  int max_speakers = 8;
  double duration = 120.0;
  double overlap_prob = 0.2;       // chance the next turn starts before the current ends
  double backchannel_prob = 0.1;   // chance of a short utterance inside the current one
  double mean_utterance = 3.0;     // seconds
  double utterance_spread = 1.5;   // uniform half-width around the mean
  double p_male = 0.5;
  double p_female = 0.5;           // remainder is unknown
  std::uint64_t seed = 1;          // mandatory; equal seeds give identical sessions
  int sample_rate = 16000;
  bool render_audio = true;
  std::string session_id;          // default: synth-<seed>

  // Backchannels are cross-speaker overlaps; zero both probabilities for a
  // strictly non-overlapping session.
};

struct SynthResult {
  SessionAnnotation annotation;
  AudioBuffer audio;
  std::vector<Segment> backchannels;  // the subset of segments emitted as backchannels
};

namespace detail {

inline const std::vector<std::string>& token_inventory() {
  static const std::vector<std::string> tokens = [] {
    const std::string consonants = "bcdfghjklmnprstvwz";  // 18
    const std::string vowels = "aeiou";                   // 5 -> 90 syllables
    std::vector<std::string> syllables;
    for (char c : consonants)
      for (char v : vowels) syllables.push_back(std::string{c, v});
    std::vector<std::string> out;
    out.reserve(500);
    for (std::size_t i = 0; out.size() < 500; ++i) {
      std::string tok = syllables[i % syllables.size()];
      if (i >= syllables.size()) tok += syllables[(i * 7 + 3) % syllables.size()];
      if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
    }
    return out;
  }();
  return tokens;
}

inline std::string sample_text(std::mt19937_64& rng, double seconds) {
  const auto& tokens = token_inventory();
  auto count = static_cast<std::size_t>(std::max(1.0, std::round(seconds * 2.5)));
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (i) out += ' ';
    out += tokens[rngutil::draw(rng, tokens.size())];
  }
  return out;
}

}  // namespace detail

/// Markov turn-taking generator. Produces a validated annotation plus
/// placeholder audio (per-speaker sinusoid bands over silence). Same-speaker
/// utterances keep >= 1 s between starts and never self-overlap; backchannels
/// are < 1 s and lie strictly inside the utterance they react to.
inline SynthResult generate_session(const SynthConfig& cfg) {
  if (cfg.min_speakers < 1 || cfg.max_speakers < cfg.min_speakers)
    throw Error(ErrorCode::config_error, "bad speaker range");
  if (cfg.duration <= 0 || cfg.overlap_prob < 0 || cfg.overlap_prob > 1 ||
      cfg.backchannel_prob < 0 || cfg.backchannel_prob > 1)
    throw Error(ErrorCode::config_error, "bad probabilities or duration");

  std::mt19937_64 rng(cfg.seed);
  const int speaker_count =
      cfg.min_speakers + static_cast<int>(rngutil::draw(
                             rng, static_cast<std::uint64_t>(cfg.max_speakers - cfg.min_speakers + 1)));
  if (cfg.duration < speaker_count * 2.0)
    throw Error(ErrorCode::config_error,
                "duration " + format_time(cfg.duration) + " too short for " +
                    std::to_string(speaker_count) + " speakers");

  SessionAnnotation ann;
  ann.session_id = cfg.session_id.empty() ? "synth-" + std::to_string(cfg.seed) : cfg.session_id;
  ann.audio_ref = ann.session_id + ".wav";
  ann.duration = cfg.duration;
  for (int k = 1; k <= speaker_count; ++k) {
    double u = rngutil::uniform01(rng);
    Gender g = u < cfg.p_male                ? Gender::male
               : u < cfg.p_male + cfg.p_female ? Gender::female
                                               : Gender::unknown;
    ann.speaker_genders[SpeakerLabel{k}] = g;
  }

  struct Track {
    double last_end = -10.0;
    double last_start = -10.0;
  };
  std::vector<Track> track(static_cast<std::size_t>(speaker_count) + 1);
  std::set<int> unseen;
  for (int k = 1; k <= speaker_count; ++k) unseen.insert(k);

  auto pick_speaker = [&](int avoid) {
    if (!unseen.empty()) {
      auto it = unseen.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(rngutil::draw(rng, unseen.size())));
      return *it;
    }
    if (speaker_count == 1) return 1;
    int s;
    do {
      s = 1 + static_cast<int>(rngutil::draw(rng, static_cast<std::uint64_t>(speaker_count)));
    } while (s == avoid && rngutil::uniform01(rng) < 0.85);
    return s;
  };

  auto emit = [&](int spk, double start, double end) {
    start = quantize_time(start);
    end = quantize_time(end);
    Segment seg;
    seg.speaker = SpeakerLabel{spk};
    seg.gender = ann.speaker_genders[seg.speaker];
    seg.interval = TimeInterval(start, end);
    seg.text = detail::sample_text(rng, end - start);
    ann.segments.push_back(std::move(seg));
    unseen.erase(spk);
    track[static_cast<std::size_t>(spk)].last_end = end;
    track[static_cast<std::size_t>(spk)].last_start = start;
  };

  std::vector<Segment> backchannels;
  double chain_end = rngutil::uniform(rng, 0.0, 0.5);
  int last_speaker = 0;
  while (chain_end < cfg.duration - 1.5) {
    int spk = pick_speaker(last_speaker);
    // Main utterances stay >= 1 s; only backchannels dip below that.
    double dur =
        std::clamp(cfg.mean_utterance +
                       rngutil::uniform(rng, -cfg.utterance_spread, cfg.utterance_spread),
                   1.0, 12.0);
    double start;
    if (last_speaker != 0 && spk != last_speaker && rngutil::chance(rng, cfg.overlap_prob)) {
      start = chain_end - rngutil::uniform(rng, 0.1, std::min(1.2, dur * 0.6));
    } else {
      start = chain_end + rngutil::uniform(rng, 0.1, 0.7);
    }
    const Track& t = track[static_cast<std::size_t>(spk)];
    start = std::max({start, t.last_end + 0.1, t.last_start + 1.0, 0.0});
    double end = std::min(start + dur, cfg.duration - 0.05);
    if (end - start < 1.0) break;
    emit(spk, start, end);
    const double main_start = quantize_time(start), main_end = quantize_time(end);

    if (speaker_count > 1 && main_end - main_start >= 1.6 &&
        rngutil::chance(rng, cfg.backchannel_prob)) {
      int bc = 1 + static_cast<int>(rngutil::draw(rng, static_cast<std::uint64_t>(speaker_count)));
      if (bc != spk) {
        double bdur = rngutil::uniform(rng, 0.3, 0.9);
        const Track& bt = track[static_cast<std::size_t>(bc)];
        double lo = std::max({main_start + 0.2, bt.last_end + 0.1, bt.last_start + 1.0});
        double hi = main_end - bdur - 0.2;
        if (lo < hi) {
          double bstart = rngutil::uniform(rng, lo, hi);
          emit(bc, bstart, bstart + bdur);
          backchannels.push_back(ann.segments.back());
        }
      }
    }
    chain_end = main_end;
    last_speaker = spk;
  }

  if (!unseen.empty())
    throw Error(ErrorCode::config_error, "duration too short: " +
                                             std::to_string(unseen.size()) +
                                             " speaker(s) never spoke");
  sort_segments(ann.segments);

  SynthResult out;
  out.annotation = std::move(ann);
  out.backchannels = std::move(backchannels);
  out.audio.sample_rate = cfg.sample_rate;
  out.audio.source_ref = out.annotation.audio_ref;
  out.audio.samples.assign(static_cast<std::size_t>(cfg.duration * cfg.sample_rate), 0.0f);
  if (cfg.render_audio) {
    for (const Segment& seg : out.annotation.segments) {
      const double freq = 180.0 + 60.0 * seg.speaker.index;
      auto s0 = static_cast<std::size_t>(seg.interval.start * cfg.sample_rate);
      auto s1 = std::min(static_cast<std::size_t>(seg.interval.end * cfg.sample_rate),
                         out.audio.samples.size());
      for (std::size_t i = s0; i < s1; ++i) {
        double t = static_cast<double>(i) / cfg.sample_rate;
        double fade = std::min({1.0, (t - seg.interval.start) / 0.01,
                                (seg.interval.end - t) / 0.01});
        out.audio.samples[i] += static_cast<float>(
            0.22 * std::max(0.0, fade) * std::sin(2.0 * 3.14159265358979323846 * freq * t));
      }
    }
    for (float& s : out.audio.samples) s = std::clamp(s, -1.0f, 1.0f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle backend

/// Zeroed config leaves the oracle exact.
struct CorruptionConfig {
  double label_swap_prob = 0.0;
  double timestamp_jitter = 0.0;  // stddev seconds, truncated at 2 sigma
  double char_error_prob = 0.0;
  double speaker_count_error_prob = 0.0;

  bool any() const {
    return label_swap_prob > 0 || timestamp_jitter > 0 || char_error_prob > 0 ||
           speaker_count_error_prob > 0;
  }
};

/// Answers protocol turns from ground-truth annotations: the desk-scale
/// stand-in for the speech model. Reads the prompt only (cache entries,
/// history, observation window), never the audio. Label continuity with
/// cached speakers is derived by matching cache entries back to truth
/// segments; without cache entries, labels restart from first appearance in
/// the window, exactly like a context-free decoder would.
class OracleBackend : public ModelBackend {
 public:
  OracleBackend(SessionAnnotation truth, double tau = kDefaultTau,
                CorruptionConfig corruption = {}, std::uint64_t seed = 1)
      : truth_(std::move(truth)),
        observations_(build_observations(truth_.segments, tau)),
        corruption_(corruption),
        rng_(mix_seed(seed, 0x0ac1e)) {}

  std::string generate(const PromptPayload& prompt) override {
    const TimeInterval& window = prompt.observation.interval;
    if (window.start < -1e-9 || window.end > truth_.duration + 1e-6)
      throw Error(ErrorCode::oracle_range,
                  "window [" + format_time(window.start) + ", " + format_time(window.end) +
                      ") outside session of " + format_time(truth_.duration) + " s");
    const TimeInterval chunk = chunk_window(prompt);
    const std::vector<int> in_chunk = observations_in(chunk);
    const std::map<SpeakerLabel, SpeakerLabel> to_local = local_labels(prompt, in_chunk);

    if (prompt.kind == "global") return global_turn(in_chunk);
    return observe_turn(prompt, in_chunk, to_local);
  }

  bool concurrent_safe() const override { return false; }  // owns the rng

  const std::vector<Observation>& observations() const { return observations_; }

 private:
  TimeInterval chunk_window(const PromptPayload& prompt) const {
    if (prompt.kind == "global") return prompt.observation.interval;
    for (const HistoryEntry& h : prompt.history)
      if (h.kind == "global" && h.observation) return *h.observation;
    return TimeInterval(0.0, truth_.duration);
  }

  std::vector<int> observations_in(const TimeInterval& chunk) const {
    std::vector<int> out;
    for (std::size_t j = 0; j < observations_.size(); ++j) {
      double start = observations_[j].interval.start;
      if (start >= chunk.start - 1e-9 && start < chunk.end - 1e-9)
        out.push_back(static_cast<int>(j));
    }
    return out;
  }

  // Local label space of this window: cached speakers first (matched back to
  // truth by their segment intervals), then first appearance within the
  // window's observations.
  std::map<SpeakerLabel, SpeakerLabel> local_labels(const PromptPayload& prompt,
                                                    const std::vector<int>& in_chunk) const {
    std::map<SpeakerLabel, SpeakerLabel> to_local;
    int next = 1;
    for (const CacheEntry& entry : prompt.cache) {
      for (const Segment& seg : truth_.segments) {
        if (std::abs(seg.interval.start - entry.interval.start) < 1e-6 &&
            std::abs(seg.interval.end - entry.interval.end) < 1e-6 &&
            seg.text == entry.transcript) {
          if (to_local.try_emplace(seg.speaker, entry.speaker).second)
            next = std::max(next, entry.speaker.index + 1);
          break;
        }
      }
    }
    for (int j : in_chunk)
      for (const Segment& seg : observations_[static_cast<std::size_t>(j)].members)
        if (to_local.try_emplace(seg.speaker, SpeakerLabel{next}).second) ++next;
    return to_local;
  }

  std::string global_turn(const std::vector<int>& in_chunk) {
    GlobalSummary summary;
    std::set<SpeakerLabel> speakers;
    for (int j : in_chunk)
      for (const Segment& seg : observations_[static_cast<std::size_t>(j)].members)
        speakers.insert(seg.speaker);
    summary.speaker_count = static_cast<int>(speakers.size());
    for (const SpeakerLabel& s : speakers) {
      auto it = truth_.speaker_genders.find(s);
      summary.gender_counts[it != truth_.speaker_genders.end() ? it->second : Gender::unknown]++;
    }
    if (corruption_.speaker_count_error_prob > 0 &&
        rngutil::chance(rng_, corruption_.speaker_count_error_prob))
      summary.speaker_count = std::max(1, summary.speaker_count +
                                              (rngutil::chance(rng_, 0.5) ? 1 : -1));
    summary.decision = in_chunk.empty()
                           ? BoundaryDecision::make_terminate()
                           : BoundaryDecision::make_continue(
                                 observations_[static_cast<std::size_t>(in_chunk.front())].interval);
    return serialize_turn_output(TurnOutput{summary});
  }

  std::string observe_turn(const PromptPayload& prompt, const std::vector<int>& in_chunk,
                           const std::map<SpeakerLabel, SpeakerLabel>& to_local) {
    const TimeInterval& target = prompt.observation.interval;
    int matched = -1;
    for (int j : in_chunk) {
      const TimeInterval& iv = observations_[static_cast<std::size_t>(j)].interval;
      if (std::abs(iv.start - target.start) < 1e-6 && std::abs(iv.end - target.end) < 1e-6) {
        matched = j;
        break;
      }
    }

    SegmentTurn turn;
    int max_local = 0;
    for (const auto& [_, local] : to_local) max_local = std::max(max_local, local.index);
    auto emit = [&](const Segment& seg) {
      Segment out = seg;
      out.speaker = to_local.at(seg.speaker);
      corrupt(out, max_local);
      turn.segments.push_back(std::move(out));
    };

    int next_obs = -1;
    if (matched >= 0) {
      for (const Segment& seg : observations_[static_cast<std::size_t>(matched)].members)
        emit(seg);
      for (int j : in_chunk)
        if (j > matched) {
          next_obs = j;
          break;
        }
    } else {
      // Ad-hoc window (not one the oracle proposed): report segments starting
      // inside it, then continue from the first observation fully past it.
      for (int j : in_chunk)
        for (const Segment& seg : observations_[static_cast<std::size_t>(j)].members)
          if (seg.interval.start >= target.start - 1e-9 && seg.interval.start < target.end - 1e-9)
            emit(seg);
      for (int j : in_chunk)
        if (observations_[static_cast<std::size_t>(j)].interval.start >= target.end - 1e-9) {
          next_obs = j;
          break;
        }
    }
    turn.decision = next_obs >= 0
                        ? BoundaryDecision::make_continue(
                              observations_[static_cast<std::size_t>(next_obs)].interval)
                        : BoundaryDecision::make_terminate();
    return serialize_turn_output(TurnOutput{std::move(turn)});
  }

  void corrupt(Segment& seg, int max_local) {
    if (corruption_.label_swap_prob > 0 && max_local > 1 &&
        rngutil::chance(rng_, corruption_.label_swap_prob)) {
      int offset = 1 + static_cast<int>(rngutil::draw(rng_, static_cast<std::uint64_t>(max_local - 1)));
      seg.speaker = SpeakerLabel{1 + (seg.speaker.index - 1 + offset) % max_local};
    }
    if (corruption_.timestamp_jitter > 0) {
      double s = seg.interval.start + rngutil::truncated_normal(rng_, corruption_.timestamp_jitter);
      double e = seg.interval.end + rngutil::truncated_normal(rng_, corruption_.timestamp_jitter);
      s = quantize_time(std::max(0.0, s));
      e = quantize_time(std::max(s + 0.01, e));
      seg.interval = TimeInterval(s, e);
    }
    if (corruption_.char_error_prob > 0) {
      std::string mutated;
      for (std::uint32_t cp : to_codepoints(seg.text)) {
        if (cp != ' ' && rngutil::chance(rng_, corruption_.char_error_prob)) {
          std::uint32_t repl;
          do {
            repl = 'a' + static_cast<std::uint32_t>(rngutil::draw(rng_, 26));
          } while (repl == cp);
          cp = repl;
        }
        append_utf8(mutated, cp);
      }
      seg.text = std::move(mutated);
    }
  }

  SessionAnnotation truth_;
  std::vector<Observation> observations_;
  CorruptionConfig corruption_;
  std::mt19937_64 rng_;
};

}  // namespace sasr
