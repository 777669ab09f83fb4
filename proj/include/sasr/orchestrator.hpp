#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sasr/audio.hpp"
#include "sasr/boundary.hpp"
#include "sasr/cache.hpp"
#include "sasr/common.hpp"
#include "sasr/protocol.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

struct OrchestratorConfig {
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  int top_k = kDefaultTopK;
  double bin_width = kDefaultBinWidth;
  double window = 50.0;     // maximum chunk length, seconds
  double chunk_min = 40.0;  // minimum chunk length before a VAD cut is taken
  int max_turns = 64;       // per window
  double slack = 0.5;       // tolerated segment spill outside the observation
  bool use_cache = true;
  bool strict_chunks = false;  // abort long-form runs on a failed chunk
};

enum class SessionStatus { ok, protocol_violation, truncated };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::ok: return "ok";
    case SessionStatus::protocol_violation: return "protocol_violation";
    case SessionStatus::truncated: return "truncated";
  }
  return "unknown";
}

struct SessionResult {
  SessionStatus status = SessionStatus::ok;
  std::vector<Segment> transcript;
  std::vector<InteractionTurn> turns;
  std::optional<GlobalSummary> summary;
  std::string detail;  // populated on violation/truncation
};

/// Chronological consolidation of every segment-turn emission: exact
/// duplicates (speaker, interval, text) collapse, output sorted by start then
/// speaker. Re-emission happens when observation windows overlap.
inline std::vector<Segment> consolidate(const std::vector<InteractionTurn>& turns) {
  std::vector<Segment> out;
  for (const InteractionTurn& turn : turns)
    if (const auto* seg_turn = std::get_if<SegmentTurn>(&turn.parsed))
      out.insert(out.end(), seg_turn->segments.begin(), seg_turn->segments.end());
  std::sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) {
    if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
    if (a.speaker != b.speaker) return a.speaker < b.speaker;
    if (a.interval.end != b.interval.end) return a.interval.end < b.interval.end;
    return a.text < b.text;
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Segment& a, const Segment& b) {
                          return a.speaker == b.speaker && a.interval == b.interval &&
                                 a.text == b.text;
                        }),
            out.end());
  return out;
}

namespace detail {

inline ObservationRef make_observation_ref(const AudioBuffer& audio, const TimeInterval& nominal,
                                           const TimeInterval& window, bool want_bytes) {
  // Nominal interval is what the protocol reasons about; the attached audio is
  // clipped to the window and to the buffer.
  TimeInterval clipped(std::max(nominal.start, window.start),
                       std::min({nominal.end, window.end, audio.duration()}));
  ObservationRef ref;
  ref.interval = nominal;
  ref.audio_ref = audio.source_ref + "#" + format_time(clipped.start) + "-" + format_time(clipped.end);
  if (want_bytes) {
    AudioSlice slice = slice_audio(audio, clipped);
    ref.audio_b64 = base64_encode(wav_bytes_mono16(slice.samples, slice.sample_rate));
  }
  return ref;
}

inline std::string backend_call(ModelBackend& backend, const PromptPayload& prompt,
                                int turn_index) {
  try {
    return backend.generate(prompt);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::backend_error,
                "turn " + std::to_string(turn_index) + ": " + e.what());
  }
}

}  // namespace detail

/// Drives the interaction protocol over one window: a global-analysis turn,
/// then boundary-driven observation turns until the backend terminates,
/// answers, misbehaves, or max_turns hits. Cache entries are prepended to
/// every prompt of the window. All timestamps are absolute session time.
inline SessionResult run_window(const AudioBuffer& audio, const TimeInterval& window,
                                ModelBackend& backend, const OrchestratorConfig& cfg,
                                const CacheSelection& cache = {}) {
  SessionResult result;
  const bool want_bytes = backend.wants_audio_bytes();

  auto abort_with = [&](SessionStatus status, const std::string& why) {
    result.status = status;
    result.detail = why;
    result.transcript = consolidate(result.turns);
    return result;
  };

  // Turn 1: global analysis over the whole window.
  InteractionTurn turn;
  turn.turn_index = 1;
  turn.kind = "global";
  turn.observation = window;
  turn.prompt = build_prompt(detail::make_observation_ref(audio, window, window, want_bytes),
                             {}, cache, "global");
  turn.raw_response = detail::backend_call(backend, turn.prompt, 1);
  try {
    ParsedTurn parsed = parse_turn_output(turn.raw_response);
    turn.parsed = std::move(parsed.output);
    turn.issues = std::move(parsed.issues);
  } catch (const Error& e) {
    result.turns.push_back(std::move(turn));
    return abort_with(SessionStatus::protocol_violation, e.what());
  }

  std::optional<BoundaryDecision> decision;
  if (const auto* summary = std::get_if<GlobalSummary>(&turn.parsed)) {
    result.summary = *summary;
    decision = summary->decision;
    if (!decision) {
      turn.issues.push_back({0, "", "global turn proposed no boundary, using whole window"});
      decision = BoundaryDecision::make_continue(window);
    }
  } else if (std::holds_alternative<FinalAnswer>(turn.parsed)) {
    turn.issues.push_back({0, "", "final answer on the global turn"});
    decision = BoundaryDecision::make_continue(window);
  } else {
    turn.issues.push_back({0, "", "global turn produced segments"});
    decision = std::get<SegmentTurn>(turn.parsed).decision;
  }
  result.turns.push_back(std::move(turn));

  std::optional<double> last_start;
  while (decision && decision->kind == BoundaryDecision::Kind::continue_with) {
    if (static_cast<int>(result.turns.size()) >= cfg.max_turns)
      return abort_with(SessionStatus::truncated,
                        "max_turns=" + std::to_string(cfg.max_turns) + " reached");
    const TimeInterval nominal = *decision->next;
    if (last_start && nominal.start < *last_start)
      return abort_with(SessionStatus::protocol_violation,
                        "non-monotone boundary: next start " + format_time(nominal.start) +
                            " before current start " + format_time(*last_start));
    if (nominal.start >= window.end || nominal.end <= window.start)
      return abort_with(SessionStatus::protocol_violation,
                        "proposed observation [" + format_time(nominal.start) + ", " +
                            format_time(nominal.end) + ") outside window");
    last_start = nominal.start;

    InteractionTurn obs_turn;
    obs_turn.turn_index = static_cast<int>(result.turns.size()) + 1;
    obs_turn.kind = "observe";
    obs_turn.observation = nominal;
    obs_turn.prompt =
        build_prompt(detail::make_observation_ref(audio, nominal, window, want_bytes),
                     result.turns, cache, "observe");
    obs_turn.raw_response = detail::backend_call(backend, obs_turn.prompt, obs_turn.turn_index);
    try {
      ParsedTurn parsed = parse_turn_output(obs_turn.raw_response);
      obs_turn.parsed = std::move(parsed.output);
      obs_turn.issues = std::move(parsed.issues);
    } catch (const Error& e) {
      result.turns.push_back(std::move(obs_turn));
      return abort_with(SessionStatus::protocol_violation, e.what());
    }

    if (const auto* answer = std::get_if<FinalAnswer>(&obs_turn.parsed)) {
      // the answer is the model's own consolidation; an empty one defers to
      // the per-turn emissions
      std::vector<Segment> transcript = answer->transcript;
      result.turns.push_back(std::move(obs_turn));
      if (transcript.empty()) {
        result.transcript = consolidate(result.turns);
      } else {
        InteractionTurn wrapper;  // reuse consolidation for sort+dedup
        wrapper.parsed = SegmentTurn{std::move(transcript), BoundaryDecision::make_terminate()};
        result.transcript = consolidate({wrapper});
      }
      return result;
    }

    if (auto* seg_turn = std::get_if<SegmentTurn>(&obs_turn.parsed)) {
      const TimeInterval allowed(std::max(0.0, nominal.start - cfg.slack),
                                 nominal.end + cfg.slack);
      std::vector<Segment> kept;
      for (Segment& seg : seg_turn->segments) {
        if (seg.interval.start >= allowed.start && seg.interval.end <= allowed.end) {
          kept.push_back(std::move(seg));
        } else {
          obs_turn.issues.push_back({0, serialize_segment_line(seg),
                                     "segment outside observation window (+slack), dropped"});
        }
      }
      seg_turn->segments = std::move(kept);
      decision = seg_turn->decision;
    } else if (const auto* summary = std::get_if<GlobalSummary>(&obs_turn.parsed)) {
      obs_turn.issues.push_back({0, "", "summary on an observation turn"});
      decision = summary->decision ? summary->decision : BoundaryDecision::make_terminate();
    }
    result.turns.push_back(std::move(obs_turn));
  }

  result.transcript = consolidate(result.turns);
  return result;
}

/// One-shot session over audio that fits a single window.
inline SessionResult run_session(const AudioBuffer& audio, ModelBackend& backend,
                                 const OrchestratorConfig& cfg = {},
                                 const CacheSelection& cache = {}) {
  if (audio.duration() <= 0.0) throw Error(ErrorCode::range_error, "empty audio");
  return run_window(audio, TimeInterval(0.0, audio.duration()), backend, cfg, cache);
}

struct ChunkRun {
  TimeInterval chunk;
  SessionResult result;
  std::map<SpeakerLabel, SpeakerLabel> local_to_global;
};

struct LongFormResult {
  std::vector<Segment> transcript;
  std::vector<ChunkRun> chunks;
  ObservationBuffer buffer;
  bool all_ok = true;
};

/// Long-form inference: VAD-aligned chunking, per-chunk sessions with cache
/// entries selected from the cross-chunk observation buffer, and global
/// speaker labels maintained by first-appearance relabeling over
/// (cache, chunk output). With the cache disabled each chunk's speakers get
/// fresh global labels: no cross-chunk identity is assumed.
inline LongFormResult run_long_form(const AudioBuffer& audio, ModelBackend& backend,
                                    const OrchestratorConfig& cfg = {},
                                    const std::optional<std::vector<TimeInterval>>& vad =
                                        std::nullopt) {
  LongFormResult out;
  std::set<SpeakerLabel> seen;
  int next_global = 1;

  for (const TimeInterval& chunk : segment_long_form(audio, vad, cfg.chunk_min, cfg.window)) {
    ChunkRun run;
    run.chunk = chunk;

    CacheSelection selected;
    if (cfg.use_cache && !out.buffer.empty() && !seen.empty())
      selected = select_cache(out.buffer, seen, cfg.alpha, cfg.top_k);

    // Localize cache labels 1..m by first appearance in prompt order, so the
    // chunk's label space starts with the cached speakers.
    CacheSelection localized;
    std::vector<SpeakerLabel> local_to_global;
    {
      std::map<SpeakerLabel, SpeakerLabel> to_local;
      for (const auto& [global, entries] : selected) {
        SpeakerLabel local{static_cast<int>(to_local.size()) + 1};
        to_local.emplace(global, local);
        local_to_global.push_back(global);
        std::vector<CacheEntry> renamed = entries;
        for (CacheEntry& e : renamed) e.speaker = local;
        localized.emplace(local, std::move(renamed));
      }
    }

    run.result = run_window(audio, chunk, backend, cfg, localized);
    if (run.result.status != SessionStatus::ok) {
      out.all_ok = false;
      if (cfg.strict_chunks)
        throw Error(ErrorCode::protocol_violation,
                    "chunk [" + format_time(chunk.start) + ", " + format_time(chunk.end) +
                        "): " + run.result.detail);
    }

    // Map chunk-local labels back to global ones; unseen locals get fresh
    // global labels in order of first appearance.
    std::map<SpeakerLabel, SpeakerLabel> mapping;
    for (std::size_t l = 0; l < local_to_global.size(); ++l)
      mapping.emplace(SpeakerLabel{static_cast<int>(l) + 1}, local_to_global[l]);
    auto to_global = [&](SpeakerLabel local) {
      auto it = mapping.find(local);
      if (it != mapping.end()) return it->second;
      SpeakerLabel fresh{next_global++};
      mapping.emplace(local, fresh);
      return fresh;
    };
    // next_global must clear every label already in use
    for (const SpeakerLabel& g : seen) next_global = std::max(next_global, g.index + 1);

    std::vector<Segment> relabeled = run.result.transcript;
    for (Segment& seg : relabeled) seg.speaker = to_global(seg.speaker);
    for (const Segment& seg : relabeled) seen.insert(seg.speaker);
    out.transcript.insert(out.transcript.end(), relabeled.begin(), relabeled.end());

    // Decoded observations feed the cross-chunk buffer with global labels.
    for (const InteractionTurn& turn : run.result.turns) {
      const auto* seg_turn = std::get_if<SegmentTurn>(&turn.parsed);
      if (!seg_turn || !turn.observation) continue;
      BufferedObservation obs;
      obs.interval = *turn.observation;
      obs.audio_ref = audio.source_ref;
      obs.segments = seg_turn->segments;
      for (Segment& seg : obs.segments) seg.speaker = to_global(seg.speaker);
      out.buffer.items.push_back(std::move(obs));
    }

    run.local_to_global = std::move(mapping);
    out.chunks.push_back(std::move(run));
  }

  // Cross-chunk dedup and ordering, same contract as consolidate().
  InteractionTurn wrapper;
  wrapper.parsed = SegmentTurn{std::move(out.transcript), BoundaryDecision::make_terminate()};
  out.transcript = consolidate({wrapper});
  return out;
}

/// Serializes generate() calls for backends that are not concurrency-safe.
class SerializedBackend : public ModelBackend {
 public:
  explicit SerializedBackend(ModelBackend& inner) : inner_(inner) {}
  std::string generate(const PromptPayload& prompt) override {
    std::lock_guard<std::mutex> lock(mutex_);
    return inner_.generate(prompt);
  }
  bool concurrent_safe() const override { return true; }
  bool wants_audio_bytes() const override { return inner_.wants_audio_bytes(); }

 private:
  ModelBackend& inner_;
  std::mutex mutex_;
};

}  // namespace sasr
