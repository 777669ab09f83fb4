#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "sasr/assignment.hpp"
#include "sasr/common.hpp"
#include "sasr/text.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

struct EditCounts {
  long long substitutions = 0;
  long long insertions = 0;
  long long deletions = 0;
  long long reference_length = 0;
  bool degenerate = false;  // empty reference scored against length 1

  long long total() const { return substitutions + insertions + deletions; }
  double rate() const {
    return static_cast<double>(total()) / static_cast<double>(std::max<long long>(1, reference_length));
  }
};

/// Unit-cost Levenshtein alignment with a component breakdown. Tie-break is
/// pinned (match/substitution, then deletion, then insertion) so counts are
/// deterministic; the total is the plain edit distance either way.
inline EditCounts edit_counts(const std::vector<std::uint32_t>& ref,
                              const std::vector<std::uint32_t>& hyp) {
  struct Cell {
    std::int32_t dist, sub, ins, del;
  };
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {static_cast<std::int32_t>(j), 0, static_cast<std::int32_t>(j), 0};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {static_cast<std::int32_t>(i), 0, 0, static_cast<std::int32_t>(i)};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      Cell diag = prev[j - 1];
      diag.dist += match ? 0 : 1;
      diag.sub += match ? 0 : 1;
      Cell del = prev[j];
      del.dist += 1;
      del.del += 1;
      Cell ins = cur[j - 1];
      ins.dist += 1;
      ins.ins += 1;
      Cell best = diag;
      if (del.dist < best.dist) best = del;
      if (ins.dist < best.dist) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  EditCounts out;
  out.substitutions = prev[m].sub;
  out.insertions = prev[m].ins;
  out.deletions = prev[m].del;
  out.reference_length = static_cast<long long>(n);
  out.degenerate = n == 0;
  return out;
}

/// Character error counts between two raw strings, after scoring
/// normalization. An empty reference is flagged degenerate and rates against
/// length 1.
inline EditCounts cer(std::string_view ref, std::string_view hyp) {
  return edit_counts(normalize_for_scoring(ref), normalize_for_scoring(hyp));
}

namespace detail {

/// Time-ordered concatenation of all segment text, speakers ignored. This is
/// the stream CER scores on; cpCER minus this isolates attribution error and
/// may legitimately go negative.
inline std::string time_ordered_text(const std::vector<Segment>& segments) {
  std::vector<Segment> sorted = segments;
  sort_segments(sorted);
  std::string out;
  for (const Segment& seg : sorted) out += seg.text;
  return out;
}

}  // namespace detail

inline EditCounts session_cer(const std::vector<Segment>& ref, const std::vector<Segment>& hyp) {
  return cer(detail::time_ordered_text(ref), detail::time_ordered_text(hyp));
}

// ---------------------------------------------------------------------------
// DER

struct DerResult {
  double der = 0.0;
  double miss = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double ref_speech_time = 0.0;  // seconds, overlap counted per speaker
  double miss_time = 0.0, false_alarm_time = 0.0, confusion_time = 0.0;
  std::map<SpeakerLabel, SpeakerLabel> mapping;  // ref -> hyp, positive-overlap pairs
};

/// Frame-based diarization error rate. Frames of `step` seconds are sampled
/// at their centers; the ref/hyp speaker mapping maximizes correctly
/// attributed time (assignment over the frame-overlap matrix); frames whose
/// center falls within `collar` of a reference segment edge are excluded.
inline DerResult der(const std::vector<Segment>& ref, const std::vector<Segment>& hyp,
                     double collar = 0.0, double step = 0.01) {
  if (step <= 0.0) throw Error(ErrorCode::config_error, "step must be positive");
  if (collar < 0.0) throw Error(ErrorCode::config_error, "collar must be >= 0");

  double total_end = 0.0;
  for (const Segment& s : ref) total_end = std::max(total_end, s.interval.end);
  for (const Segment& s : hyp) total_end = std::max(total_end, s.interval.end);
  const auto frames = static_cast<std::size_t>(std::ceil(total_end / step - 1e-9));

  std::map<SpeakerLabel, int> ref_ids, hyp_ids;
  for (const Segment& s : ref) ref_ids.try_emplace(s.speaker, static_cast<int>(ref_ids.size()));
  for (const Segment& s : hyp) hyp_ids.try_emplace(s.speaker, static_cast<int>(hyp_ids.size()));
  if (ref_ids.size() > 64 || hyp_ids.size() > 64)
    throw Error(ErrorCode::config_error, "more than 64 speakers");

  // frame index range [f0, f1) of frames whose center lies in [t0, t1)
  auto frame_range = [&](double t0, double t1) {
    auto f0 = static_cast<long long>(std::ceil(t0 / step - 0.5 - 1e-9));
    auto f1 = static_cast<long long>(std::ceil(t1 / step - 0.5 - 1e-9));
    f0 = std::max(0LL, f0);
    f1 = std::min(static_cast<long long>(frames), f1);
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(std::max(0LL, f0)),
                                               static_cast<std::size_t>(std::max(0LL, f1)));
  };

  std::vector<std::uint64_t> ref_mask(frames, 0), hyp_mask(frames, 0);
  std::vector<char> excluded(frames, 0);
  for (const Segment& s : ref) {
    auto [f0, f1] = frame_range(s.interval.start, s.interval.end);
    for (std::size_t f = f0; f < f1; ++f) ref_mask[f] |= 1ULL << ref_ids[s.speaker];
    if (collar > 0.0) {
      for (double edge : {s.interval.start, s.interval.end}) {
        auto [c0, c1] = frame_range(edge - collar, edge + collar);
        for (std::size_t f = c0; f < c1; ++f) excluded[f] = 1;
      }
    }
  }
  for (const Segment& s : hyp) {
    auto [f0, f1] = frame_range(s.interval.start, s.interval.end);
    for (std::size_t f = f0; f < f1; ++f) hyp_mask[f] |= 1ULL << hyp_ids[s.speaker];
  }

  // Overlap matrix in frames, then the attribution-maximizing mapping.
  const std::size_t nr = ref_ids.size(), nh = hyp_ids.size();
  std::vector<std::vector<long long>> overlap(nr, std::vector<long long>(nh, 0));
  for (std::size_t f = 0; f < frames; ++f) {
    if (excluded[f] || !ref_mask[f] || !hyp_mask[f]) continue;
    std::uint64_t rm = ref_mask[f];
    while (rm) {
      int r = std::countr_zero(rm);
      rm &= rm - 1;
      std::uint64_t hm = hyp_mask[f];
      while (hm) {
        int h = std::countr_zero(hm);
        hm &= hm - 1;
        ++overlap[static_cast<std::size_t>(r)][static_cast<std::size_t>(h)];
      }
    }
  }
  const std::size_t dim = std::max(nr, nh);
  std::vector<int> ref_to_hyp(nr, -1);
  if (dim > 0 && nr > 0 && nh > 0) {
    std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, 0.0));
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t h = 0; h < nh; ++h) cost[r][h] = -static_cast<double>(overlap[r][h]);
    std::vector<int> assign = solve_assignment_min(cost);
    for (std::size_t r = 0; r < nr; ++r)
      if (assign[r] < static_cast<int>(nh)) ref_to_hyp[r] = assign[r];
  }

  long long miss_f = 0, fa_f = 0, conf_f = 0, ref_f = 0;
  std::vector<int> hyp_of_ref(nr, -1);
  for (std::size_t r = 0; r < nr; ++r) hyp_of_ref[r] = ref_to_hyp[r];
  for (std::size_t f = 0; f < frames; ++f) {
    if (excluded[f]) continue;
    const int nref = std::popcount(ref_mask[f]);
    const int nhyp = std::popcount(hyp_mask[f]);
    int correct = 0;
    std::uint64_t rm = ref_mask[f];
    while (rm) {
      int r = std::countr_zero(rm);
      rm &= rm - 1;
      int h = hyp_of_ref[static_cast<std::size_t>(r)];
      if (h >= 0 && (hyp_mask[f] & (1ULL << h))) ++correct;
    }
    ref_f += nref;
    miss_f += std::max(0, nref - nhyp);
    fa_f += std::max(0, nhyp - nref);
    conf_f += std::min(nref, nhyp) - correct;
  }
  if (ref_f == 0) throw Error(ErrorCode::no_reference, "no reference speech to score");

  DerResult out;
  out.ref_speech_time = static_cast<double>(ref_f) * step;
  out.miss_time = static_cast<double>(miss_f) * step;
  out.false_alarm_time = static_cast<double>(fa_f) * step;
  out.confusion_time = static_cast<double>(conf_f) * step;
  out.miss = static_cast<double>(miss_f) / static_cast<double>(ref_f);
  out.false_alarm = static_cast<double>(fa_f) / static_cast<double>(ref_f);
  out.confusion = static_cast<double>(conf_f) / static_cast<double>(ref_f);
  out.der = out.miss + out.false_alarm + out.confusion;
  for (const auto& [label, r] : ref_ids) {
    int h = ref_to_hyp[static_cast<std::size_t>(r)];
    if (h < 0 || overlap[static_cast<std::size_t>(r)][static_cast<std::size_t>(h)] <= 0) continue;
    for (const auto& [hlabel, hid] : hyp_ids)
      if (hid == h) out.mapping.emplace(label, hlabel);
  }
  return out;
}

// ---------------------------------------------------------------------------
// cpCER

struct SpeakerAssignment {
  SpeakerLabel ref;
  std::optional<SpeakerLabel> hyp;  // empty when matched to a dummy
};

struct CpResult {
  double rate = 0.0;
  long long errors = 0;
  long long ref_chars = 0;
  std::vector<SpeakerAssignment> permutation;
  std::vector<SpeakerLabel> unmatched_hyp;
};

/// Concatenated minimum-permutation CER: per-speaker text concatenations in
/// start-time order on both sides, dummy empty speakers padding the smaller
/// side, and an exact assignment minimizing total edit errors.
inline CpResult cpcer(const SessionAnnotation& ref, const std::vector<Segment>& hyp) {
  auto streams = [](const std::vector<Segment>& segments) {
    std::vector<Segment> sorted = segments;
    sort_segments(sorted);
    std::map<SpeakerLabel, std::string> by_speaker;
    for (const Segment& seg : sorted) by_speaker[seg.speaker] += seg.text;
    std::vector<std::pair<SpeakerLabel, std::vector<std::uint32_t>>> out;
    for (const auto& [speaker, text] : by_speaker)
      out.emplace_back(speaker, normalize_for_scoring(text));
    return out;
  };
  auto ref_streams = streams(ref.segments);
  auto hyp_streams = streams(hyp);

  long long ref_chars = 0;
  for (const auto& [_, text] : ref_streams) ref_chars += static_cast<long long>(text.size());
  if (ref_streams.empty() || ref_chars == 0)
    throw Error(ErrorCode::no_reference, "reference has no scoreable text");

  const std::size_t dim = std::max(ref_streams.size(), hyp_streams.size());
  static const std::vector<std::uint32_t> kEmpty;
  std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, 0.0));
  for (std::size_t r = 0; r < dim; ++r) {
    const auto& rs = r < ref_streams.size() ? ref_streams[r].second : kEmpty;
    for (std::size_t h = 0; h < dim; ++h) {
      const auto& hs = h < hyp_streams.size() ? hyp_streams[h].second : kEmpty;
      cost[r][h] = static_cast<double>(edit_counts(rs, hs).total());
    }
  }
  std::vector<int> assign = solve_assignment_min(cost);

  CpResult out;
  out.ref_chars = ref_chars;
  std::vector<char> hyp_used(hyp_streams.size(), 0);
  for (std::size_t r = 0; r < dim; ++r) {
    out.errors += static_cast<long long>(cost[r][static_cast<std::size_t>(assign[r])]);
    if (r < ref_streams.size()) {
      SpeakerAssignment pair{ref_streams[r].first, std::nullopt};
      if (assign[r] < static_cast<int>(hyp_streams.size())) {
        pair.hyp = hyp_streams[static_cast<std::size_t>(assign[r])].first;
        hyp_used[static_cast<std::size_t>(assign[r])] = 1;
      }
      out.permutation.push_back(pair);
    }
  }
  for (std::size_t h = 0; h < hyp_streams.size(); ++h)
    if (!hyp_used[h]) out.unmatched_hyp.push_back(hyp_streams[h].first);
  out.rate = static_cast<double>(out.errors) / static_cast<double>(ref_chars);
  return out;
}

// ---------------------------------------------------------------------------
// Speaker attributes

enum class CountSource { transcript, summary };

struct AttributeScore {
  int true_count = 0;
  int predicted_count = 0;
  bool count_correct = false;  // SCA contribution for this session
  int genders_correct = 0;
  int gender_total = 0;  // = true speaker count

  double acc() const {
    return gender_total > 0 ? static_cast<double>(genders_correct) / gender_total : 0.0;
  }
};

/// Majority gender per hypothesis speaker; ties resolved by the earliest
/// segment carrying a majority gender.
inline std::map<SpeakerLabel, Gender> majority_genders(const std::vector<Segment>& segments) {
  std::vector<Segment> sorted = segments;
  sort_segments(sorted);
  std::map<SpeakerLabel, std::map<Gender, int>> counts;
  for (const Segment& seg : sorted) counts[seg.speaker][seg.gender]++;
  std::map<SpeakerLabel, Gender> out;
  for (const auto& [speaker, per_gender] : counts) {
    int best = 0;
    for (const auto& [_, c] : per_gender) best = std::max(best, c);
    for (const Segment& seg : sorted) {
      if (seg.speaker == speaker && per_gender.at(seg.gender) == best) {
        out[speaker] = seg.gender;
        break;
      }
    }
  }
  return out;
}

/// Gender accuracy (speakers aligned by the cpCER permutation; unmatched or
/// missing predictions count wrong) and speaker-count correctness, with the
/// predicted count taken from the turn-1 summary when available or from the
/// transcript's distinct labels otherwise.
inline AttributeScore attribute_metrics(const SessionAnnotation& ref,
                                        const std::vector<Segment>& hyp,
                                        std::optional<int> summary_count = std::nullopt) {
  AttributeScore out;
  std::map<SpeakerLabel, Gender> true_genders = ref.speaker_genders;
  for (const Segment& seg : ref.segments) true_genders.try_emplace(seg.speaker, seg.gender);
  out.true_count = static_cast<int>(true_genders.size());
  out.gender_total = out.true_count;

  std::map<SpeakerLabel, Gender> hyp_genders = majority_genders(hyp);
  out.predicted_count = summary_count ? *summary_count : static_cast<int>(hyp_genders.size());
  out.count_correct = out.predicted_count == out.true_count;

  CpResult cp = cpcer(ref, hyp);
  for (const SpeakerAssignment& pair : cp.permutation) {
    if (!pair.hyp) continue;
    auto hyp_it = hyp_genders.find(*pair.hyp);
    auto ref_it = true_genders.find(pair.ref);
    if (hyp_it == hyp_genders.end() || ref_it == true_genders.end()) continue;
    if (hyp_it->second == ref_it->second) ++out.genders_correct;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session report

struct MetricsReport {
  std::string session_id;
  DerResult der;
  EditCounts cer;
  CpResult cp;
  AttributeScore attributes;

  double delta_cp() const { return cp.rate - cer.rate(); }
};

struct EvalConfig {
  double collar = 0.0;
  double step = 0.01;
};

inline MetricsReport evaluate_session(const SessionAnnotation& ref,
                                      const std::vector<Segment>& hyp, const EvalConfig& cfg = {},
                                      std::optional<int> summary_count = std::nullopt) {
  MetricsReport out;
  out.session_id = ref.session_id;
  out.der = der(ref.segments, hyp, cfg.collar, cfg.step);
  out.cer = session_cer(ref.segments, hyp);
  out.cp = cpcer(ref, hyp);
  out.attributes = attribute_metrics(ref, hyp, summary_count);
  return out;
}

/// Pooled aggregation: time and character masses are summed across sessions,
/// SCA averages per session. Sessions must be supplied in deterministic order.
struct AggregateReport {
  int sessions = 0;
  double der = 0.0, miss = 0.0, false_alarm = 0.0, confusion = 0.0;
  double cer = 0.0, cpcer = 0.0, delta_cp = 0.0;
  double acc = 0.0, sca = 0.0;
};

inline AggregateReport aggregate_reports(const std::vector<MetricsReport>& reports) {
  AggregateReport out;
  out.sessions = static_cast<int>(reports.size());
  if (reports.empty()) return out;
  double ref_time = 0, miss_t = 0, fa_t = 0, conf_t = 0;
  long long cer_err = 0, cer_len = 0, cp_err = 0, cp_len = 0;
  long long genders_ok = 0, genders_all = 0;
  int counts_ok = 0;
  for (const MetricsReport& r : reports) {
    ref_time += r.der.ref_speech_time;
    miss_t += r.der.miss_time;
    fa_t += r.der.false_alarm_time;
    conf_t += r.der.confusion_time;
    cer_err += r.cer.total();
    cer_len += std::max<long long>(1, r.cer.reference_length);
    cp_err += r.cp.errors;
    cp_len += r.cp.ref_chars;
    genders_ok += r.attributes.genders_correct;
    genders_all += r.attributes.gender_total;
    counts_ok += r.attributes.count_correct ? 1 : 0;
  }
  out.miss = miss_t / ref_time;
  out.false_alarm = fa_t / ref_time;
  out.confusion = conf_t / ref_time;
  out.der = out.miss + out.false_alarm + out.confusion;
  out.cer = static_cast<double>(cer_err) / static_cast<double>(cer_len);
  out.cpcer = static_cast<double>(cp_err) / static_cast<double>(cp_len);
  out.delta_cp = out.cpcer - out.cer;
  out.acc = genders_all > 0 ? static_cast<double>(genders_ok) / static_cast<double>(genders_all) : 0.0;
  out.sca = static_cast<double>(counts_ok) / static_cast<double>(reports.size());
  return out;
}

}  // namespace sasr
