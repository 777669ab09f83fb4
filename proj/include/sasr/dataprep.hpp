#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sasr/boundary.hpp"
#include "sasr/cache.hpp"
#include "sasr/common.hpp"
#include "sasr/protocol.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

struct DataPrepConfig {
  double tau = kDefaultTau;
  double bin_width = kDefaultBinWidth;
};

/// One serialized prompt/target pair. Audio travels by reference; boundary
/// bins accompany stage >= 2 targets whose boundary line continues.
struct TrainingExample {
  int stage = 1;
  std::string session_id;
  PromptPayload prompt;
  std::string target;
  std::optional<std::pair<long, long>> boundary_bins;
};

namespace detail {

inline ObservationRef session_ref(const SessionAnnotation& session, const TimeInterval& iv) {
  ObservationRef ref;
  ref.interval = iv;
  ref.audio_ref = session.audio_ref + "#" + format_time(iv.start) + "-" + format_time(iv.end);
  return ref;
}

inline GlobalSummary summarize(const std::vector<Segment>& segments,
                               const std::map<SpeakerLabel, Gender>& genders) {
  GlobalSummary s;
  std::map<SpeakerLabel, Gender> seen;
  for (const Segment& seg : segments) {
    auto it = genders.find(seg.speaker);
    seen.try_emplace(seg.speaker, it != genders.end() ? it->second : seg.gender);
  }
  s.speaker_count = static_cast<int>(seen.size());
  for (const auto& [_, g] : seen) s.gender_counts[g]++;
  return s;
}

/// Ground-truth interaction history for turns 1..i-1 (teacher forcing): the
/// global summary turn plus one observe turn per earlier observation. An
/// optional label map rewrites speakers (stage 3); unmapped speakers extend
/// the map by first appearance.
inline std::vector<InteractionTurn> teacher_history(
    const SessionAnnotation& session, const std::vector<Observation>& observations, int upto,
    double bin_width, std::map<SpeakerLabel, SpeakerLabel>* remap) {
  auto mapped = [&](const Segment& seg) {
    if (!remap) return seg;
    auto it = remap->find(seg.speaker);
    if (it == remap->end()) {
      int next = 1;
      for (const auto& [_, l] : *remap) next = std::max(next, l.index + 1);
      it = remap->emplace(seg.speaker, SpeakerLabel{next}).first;
    }
    Segment out = seg;
    out.speaker = it->second;
    return out;
  };

  std::vector<InteractionTurn> history;
  InteractionTurn global;
  global.turn_index = 1;
  global.kind = "global";
  global.observation = TimeInterval(0.0, session.duration);
  GlobalSummary summary = summarize(session.segments, session.speaker_genders);
  summary.decision = observations.empty()
                         ? BoundaryDecision::make_terminate()
                         : BoundaryDecision::make_continue(observations.front().interval);
  global.raw_response = serialize_turn_output(TurnOutput{summary});
  global.parsed = TurnOutput{summary};
  history.push_back(std::move(global));

  for (int j = 1; j < upto; ++j) {
    const Observation& obs = observations[static_cast<std::size_t>(j - 1)];
    SegmentTurn turn;
    for (const Segment& seg : obs.members) turn.segments.push_back(mapped(seg));
    turn.decision = next_boundary_target(observations, j, bin_width);
    InteractionTurn entry;
    entry.turn_index = j + 1;
    entry.kind = "observe";
    entry.observation = obs.interval;
    entry.raw_response = serialize_turn_output(TurnOutput{turn});
    entry.parsed = TurnOutput{std::move(turn)};
    history.push_back(std::move(entry));
  }
  return history;
}

}  // namespace detail

/// Emits the training examples one session contributes to a curriculum stage.
///
/// Stage 1: a single full-recording example whose target is the global
/// summary header followed by every segment line.
/// Stage 2: one example per observation, prompted with ground-truth history
/// and an empty cache; the target carries the observation's segment lines
/// plus its boundary line.
/// Stage 3: stage 2 with simulated historical cache entries prepended and
/// labels renumbered over (cache, then post-cut segments); observations with
/// no fully-earlier speech are skipped.
inline std::vector<TrainingExample> emit_stage_examples(const SessionAnnotation& session,
                                                        int stage, const DataPrepConfig& cfg,
                                                        std::mt19937_64& rng) {
  if (stage < 1 || stage > 3) throw Error(ErrorCode::config_error, "stage must be 1, 2 or 3");
  if (session.segments.empty()) throw Error(ErrorCode::empty_session, session.session_id);

  // From-scratch decoding is supervised with appearance-ordered labels, so
  // corpus label ids are canonicalized first.
  SessionAnnotation canonical = session;
  RelabelResult relabeled = reassign_labels(session.segments);
  canonical.segments = std::move(relabeled.segments);
  canonical.speaker_genders.clear();
  for (const auto& [old_label, new_label] : relabeled.remap) {
    auto it = session.speaker_genders.find(old_label);
    canonical.speaker_genders[new_label] =
        it != session.speaker_genders.end() ? it->second : Gender::unknown;
  }

  std::vector<TrainingExample> out;
  if (stage == 1) {
    TrainingExample ex;
    ex.stage = 1;
    ex.session_id = session.session_id;
    ex.prompt.kind = "global";
    ex.prompt.observation = detail::session_ref(canonical, TimeInterval(0.0, canonical.duration));
    ex.prompt.instruction = kInstructionFullSession;
    std::string target =
        serialize_summary_line(detail::summarize(canonical.segments, canonical.speaker_genders));
    for (const Segment& seg : canonical.segments) target += "\n" + serialize_segment_line(seg);
    ex.target = std::move(target);
    out.push_back(std::move(ex));
    return out;
  }

  const std::vector<Observation> observations = build_observations(canonical.segments, cfg.tau);
  const int n = static_cast<int>(observations.size());
  for (int i = 1; i <= n; ++i) {
    const Observation& obs = observations[static_cast<std::size_t>(i - 1)];
    TrainingExample ex;
    ex.stage = stage;
    ex.session_id = session.session_id;

    std::map<SpeakerLabel, SpeakerLabel> remap;
    std::map<SpeakerLabel, SpeakerLabel>* remap_ptr = nullptr;
    std::vector<CacheEntry> cache_entries;
    std::vector<Segment> target_segments = obs.members;
    if (stage == 3) {
      SimulatedCache sim;
      try {
        sim = simulate_training_cache(canonical, obs.interval.start, rng);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::no_history) continue;  // nothing earlier to cache
        throw;
      }
      cache_entries = std::move(sim.entries);
      remap = std::move(sim.remap);
      remap_ptr = &remap;
      for (Segment& seg : target_segments) seg.speaker = remap.at(seg.speaker);
    }

    std::vector<InteractionTurn> history =
        detail::teacher_history(canonical, observations, i, cfg.bin_width, remap_ptr);
    ex.prompt = build_prompt(detail::session_ref(canonical, obs.interval), history, {}, "observe");
    ex.prompt.cache = cache_entries;  // chronological order defines first appearance

    SegmentTurn turn;
    turn.segments = std::move(target_segments);
    turn.decision = next_boundary_target(observations, i, cfg.bin_width);
    if (turn.decision.kind == BoundaryDecision::Kind::continue_with)
      ex.boundary_bins = turn.decision.bins;
    ex.target = serialize_turn_output(TurnOutput{std::move(turn)});
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace sasr
