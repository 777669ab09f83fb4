#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sasr/common.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

constexpr double kDefaultAlpha = 0.5;
constexpr int kDefaultTopK = 3;

/// One speaker reference: label, a by-reference audio slice, and its
/// transcript. Slices always come from audio strictly before the observation
/// being decoded.
struct CacheEntry {
  SpeakerLabel speaker;
  std::string audio_ref;
  TimeInterval interval;
  std::string transcript;

  bool operator==(const CacheEntry&) const = default;
};

/// A processed observation as kept in the cross-chunk buffer: its window and
/// the segments decoded from it.
struct BufferedObservation {
  TimeInterval interval;
  std::vector<Segment> segments;
  std::string audio_ref;
};

struct ObservationBuffer {
  std::vector<BufferedObservation> items;

  bool empty() const { return items.empty(); }
  int size() const { return static_cast<int>(items.size()); }
};

/// Joint duration/recency score phi = d * (1 + alpha * i/n) for a segment of
/// duration d sitting in buffer position i of n (1-based).
inline double cache_score(double d, int i, int n, double alpha) {
  if (n < 1) throw Error(ErrorCode::degenerate_buffer, "empty observation buffer");
  if (i < 1 || i > n)
    throw Error(ErrorCode::range_error, "buffer position " + std::to_string(i) + " out of 1.." +
                                            std::to_string(n));
  return d * (1.0 + alpha * (static_cast<double>(i) / n));
}

using CacheSelection = std::map<SpeakerLabel, std::vector<CacheEntry>>;

namespace detail {

struct CacheCandidate {
  CacheEntry entry;
  double score;
  int position;  // buffer index, 1-based

  // phi descending; ties prefer the more recent observation, then the
  // earlier-starting segment.
  bool ranks_before(const CacheCandidate& other) const {
    if (score != other.score) return score > other.score;
    if (position != other.position) return position > other.position;
    return entry.interval.start < other.entry.interval.start;
  }
};

}  // namespace detail

/// Per-speaker top-k selection over the observation buffer, scored by
/// cache_score. Speakers outside `speakers` are skipped; an empty buffer
/// yields an empty map.
inline CacheSelection select_cache(const ObservationBuffer& buffer,
                                   const std::set<SpeakerLabel>& speakers, double alpha,
                                   int k) {
  if (k < 1) throw Error(ErrorCode::config_error, "cache size k must be >= 1");
  CacheSelection out;
  if (buffer.empty()) return out;
  const int n = buffer.size();
  std::map<SpeakerLabel, std::vector<detail::CacheCandidate>> candidates;
  for (int i = 1; i <= n; ++i) {
    const BufferedObservation& obs = buffer.items[static_cast<std::size_t>(i - 1)];
    for (const Segment& seg : obs.segments) {
      if (!speakers.contains(seg.speaker)) continue;
      detail::CacheCandidate cand;
      cand.entry = {seg.speaker, obs.audio_ref, seg.interval, seg.text};
      cand.score = cache_score(seg.interval.duration(), i, n, alpha);
      cand.position = i;
      candidates[seg.speaker].push_back(std::move(cand));
    }
  }
  for (auto& [speaker, list] : candidates) {
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.ranks_before(b); });
    if (static_cast<int>(list.size()) > k) list.resize(static_cast<std::size_t>(k));
    std::vector<CacheEntry>& kept = out[speaker];
    kept.reserve(list.size());
    for (auto& cand : list) kept.push_back(std::move(cand.entry));
  }
  return out;
}

struct SimulatedCache {
  std::vector<CacheEntry> entries;       // chronological, labels already reassigned
  std::vector<Segment> current;          // post-cut segments, labels reassigned
  std::map<SpeakerLabel, SpeakerLabel> remap;
};

namespace detail {

inline std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) {
  return rng() % n;  // engine output is standardized; keeps draws portable
}

}  // namespace detail

/// Training-time cache simulation: picks a uniformly random non-empty subset
/// of the speakers having segments entirely before `cut`, draws 1..5 of those
/// segments per picked speaker (fewer when fewer exist), presents them
/// chronologically as cache context, and renumbers speakers by first
/// appearance over (cache entries, then post-cut segments) so labels stay
/// continuous between history and current audio.
inline SimulatedCache simulate_training_cache(const SessionAnnotation& session, double cut,
                                              std::mt19937_64& rng) {
  std::map<SpeakerLabel, std::vector<const Segment*>> early;
  std::vector<const Segment*> late;
  for (const Segment& seg : session.segments) {
    if (seg.interval.end <= cut)
      early[seg.speaker].push_back(&seg);
    else if (seg.interval.start >= cut)
      late.push_back(&seg);
  }
  if (early.empty())
    throw Error(ErrorCode::no_history, "no segment ends before cut at " + format_time(cut));
  if (late.empty())
    throw Error(ErrorCode::range_error, "no segment starts after cut at " + format_time(cut));

  std::vector<SpeakerLabel> eligible;
  for (const auto& [speaker, _] : early) eligible.push_back(speaker);
  const auto m = eligible.size();
  if (m > 62) throw Error(ErrorCode::config_error, "too many speakers for subset sampling");
  std::uint64_t subset = 1 + detail::draw(rng, (1ULL << m) - 1);

  std::vector<const Segment*> picked;
  for (std::size_t s = 0; s < m; ++s) {
    if (!(subset & (1ULL << s))) continue;
    auto pool = early[eligible[s]];
    std::uint64_t want = 1 + detail::draw(rng, 5);
    std::uint64_t take = std::min<std::uint64_t>(want, pool.size());
    for (std::uint64_t j = 0; j < take; ++j) {  // partial Fisher-Yates, without replacement
      std::size_t pick = static_cast<std::size_t>(j + detail::draw(rng, pool.size() - j));
      std::swap(pool[j], pool[pick]);
      picked.push_back(pool[j]);
    }
  }
  std::sort(picked.begin(), picked.end(), [](const Segment* a, const Segment* b) {
    if (a->interval.start != b->interval.start) return a->interval.start < b->interval.start;
    return a->speaker < b->speaker;
  });

  // Relabel over the concatenation: cache first, then the post-cut segments.
  std::vector<Segment> concat;
  concat.reserve(picked.size() + late.size());
  for (const Segment* seg : picked) concat.push_back(*seg);
  for (const Segment* seg : late) concat.push_back(*seg);
  RelabelResult relabeled = reassign_labels(concat);

  SimulatedCache out;
  out.remap = std::move(relabeled.remap);
  for (std::size_t j = 0; j < picked.size(); ++j) {
    const Segment& seg = relabeled.segments[j];
    out.entries.push_back({seg.speaker, session.audio_ref, seg.interval, seg.text});
  }
  out.current.assign(relabeled.segments.begin() + static_cast<std::ptrdiff_t>(picked.size()),
                     relabeled.segments.end());
  return out;
}

}  // namespace sasr
