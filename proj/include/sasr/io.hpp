#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sasr/boundary.hpp"
#include "sasr/cache.hpp"
#include "sasr/common.hpp"
#include "sasr/dataprep.hpp"
#include "sasr/metrics.hpp"
#include "sasr/orchestrator.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Transcript JSONL: one object per segment, keys
//   session_id, speaker (int), gender, start, end (seconds, 2 decimals), text

inline ordered_json segment_to_json(const std::string& session_id, const Segment& seg) {
  return ordered_json{{"session_id", session_id},
                      {"speaker", seg.speaker.index},
                      {"gender", to_string(seg.gender)},
                      {"start", quantize_time(seg.interval.start)},
                      {"end", quantize_time(seg.interval.end)},
                      {"text", seg.text}};
}

inline void write_transcript_jsonl(std::ostream& out, const SessionAnnotation& ann) {
  for (const Segment& seg : ann.segments) out << segment_to_json(ann.session_id, seg).dump() << "\n";
}

inline void write_transcript_jsonl(const std::string& path,
                                   const std::vector<SessionAnnotation>& sessions) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::file_missing, "cannot open for write: " + path);
  for (const SessionAnnotation& ann : sessions) write_transcript_jsonl(out, ann);
}

/// Groups JSONL lines into sessions sorted by id. Segment order and genders
/// are normalized on ingest (times quantized to 10 ms, duration = last end
/// unless the caller knows better, per-speaker gender = first seen).
inline std::vector<SessionAnnotation> read_transcript_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::file_missing, path);
  std::map<std::string, SessionAnnotation> by_session;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Segment seg;
      seg.speaker = SpeakerLabel{j.at("speaker").get<int>()};
      seg.gender = gender_from_string(j.at("gender").get<std::string>());
      seg.interval = TimeInterval(quantize_time(j.at("start").get<double>()),
                                  quantize_time(j.at("end").get<double>()));
      seg.text = j.at("text").get<std::string>();
      std::string id = j.at("session_id").get<std::string>();
      SessionAnnotation& ann = by_session[id];
      ann.session_id = id;
      ann.duration = std::max(ann.duration, seg.interval.end);
      ann.speaker_genders.try_emplace(seg.speaker, seg.gender);
      ann.segments.push_back(std::move(seg));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::format_error,
                  path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<SessionAnnotation> out;
  for (auto& [_, ann] : by_session) {
    sort_segments(ann.segments);
    out.push_back(std::move(ann));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RTTM interchange (diarization-only: no text, unknown gender)

inline void write_rttm(std::ostream& out, const SessionAnnotation& ann) {
  for (const Segment& seg : ann.segments)
    out << "SPEAKER " << ann.session_id << " 1 " << format_time(seg.interval.start) << " "
        << format_time(seg.interval.duration()) << " <NA> <NA> spk" << seg.speaker.index
        << " <NA> <NA>\n";
}

inline std::vector<SessionAnnotation> read_rttm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::file_missing, path);
  std::map<std::string, SessionAnnotation> by_session;
  std::map<std::string, std::map<std::string, int>> name_ids;  // per session
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == ';') continue;
    std::istringstream ss(line);
    std::string type, sess, chan, name, tmp;
    double start, dur;
    if (!(ss >> type >> sess >> chan >> start >> dur >> tmp >> tmp >> name))
      throw Error(ErrorCode::format_error, path + ":" + std::to_string(line_no) + ": bad RTTM line");
    if (type != "SPEAKER") continue;
    auto& ids = name_ids[sess];
    int id;
    if (name.rfind("spk", 0) == 0 && name.size() > 3 &&
        name.find_first_not_of("0123456789", 3) == std::string::npos) {
      id = std::stoi(name.substr(3));
    } else {
      auto it = ids.try_emplace(name, static_cast<int>(ids.size()) + 1).first;
      id = it->second;
    }
    Segment seg;
    seg.speaker = SpeakerLabel{id};
    seg.gender = Gender::unknown;
    seg.interval = TimeInterval(quantize_time(start), quantize_time(start + dur));
    SessionAnnotation& ann = by_session[sess];
    ann.session_id = sess;
    ann.duration = std::max(ann.duration, seg.interval.end);
    ann.speaker_genders.try_emplace(seg.speaker, Gender::unknown);
    ann.segments.push_back(std::move(seg));
  }
  std::vector<SessionAnnotation> out;
  for (auto& [_, ann] : by_session) {
    sort_segments(ann.segments);
    out.push_back(std::move(ann));
  }
  return out;
}

// ---------------------------------------------------------------------------
// VAD boundary file: one "start end" pair per line, seconds.

inline std::vector<TimeInterval> read_vad_intervals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::file_missing, path);
  std::vector<TimeInterval> out;
  double a, b;
  while (in >> a >> b) out.emplace_back(a, b);
  return out;
}

// ---------------------------------------------------------------------------
// Observation dump (JSONL), for debugging and stage-2 data prep.

inline ordered_json observation_to_json(const std::string& session_id, const Observation& obs,
                                        const std::vector<Segment>& session_segments) {
  ordered_json member_ids = ordered_json::array();
  for (const Segment& member : obs.members) {
    for (std::size_t k = 0; k < session_segments.size(); ++k) {
      if (session_segments[k] == member) {
        member_ids.push_back(k);
        break;
      }
    }
  }
  return ordered_json{{"session_id", session_id},
                      {"index", obs.index},
                      {"start", quantize_time(obs.interval.start)},
                      {"end", quantize_time(obs.interval.end)},
                      {"member_ids", member_ids}};
}

// ---------------------------------------------------------------------------
// Cache entries serialize to the exact structure prepended to prompts.

inline ordered_json cache_entry_to_json(const CacheEntry& e) {
  return ordered_json{{"speaker", e.speaker.index},
                      {"start", quantize_time(e.interval.start)},
                      {"end", quantize_time(e.interval.end)},
                      {"transcript", e.transcript},
                      {"audio_ref", e.audio_ref}};
}

// ---------------------------------------------------------------------------
// Training examples (JSONL, audio by reference)

inline ordered_json training_example_to_json(const TrainingExample& ex) {
  ordered_json j{{"stage", ex.stage},
                 {"session_id", ex.session_id},
                 {"prompt", payload_to_json(ex.prompt)},
                 {"target", ex.target}};
  if (ex.boundary_bins) j["boundary_bins"] = {ex.boundary_bins->first, ex.boundary_bins->second};
  return j;
}

// ---------------------------------------------------------------------------
// Turn log (JSONL, audit trail). Inline audio is elided to its byte count.

inline ordered_json turn_to_json(const InteractionTurn& turn) {
  ordered_json prompt = payload_to_json(turn.prompt);
  if (prompt["observation"].contains("audio_b64"))
    prompt["observation"]["audio_b64"] =
        "<" + std::to_string(turn.prompt.observation.audio_b64.size()) + " bytes>";
  ordered_json j{{"turn", turn.turn_index}, {"kind", turn.kind}};
  if (turn.observation) {
    j["start"] = quantize_time(turn.observation->start);
    j["end"] = quantize_time(turn.observation->end);
  }
  j["prompt"] = std::move(prompt);
  j["response"] = turn.raw_response;
  if (!turn.issues.empty()) {
    ordered_json issues = ordered_json::array();
    for (const ParseIssue& issue : turn.issues)
      issues.push_back({{"line", issue.line}, {"content", issue.content}, {"reason", issue.reason}});
    j["issues"] = std::move(issues);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Metrics report JSON

inline ordered_json metrics_to_json(const MetricsReport& r) {
  ordered_json j;
  j["session_id"] = r.session_id;
  j["der"] = r.der.der;
  j["miss"] = r.der.miss;
  j["false_alarm"] = r.der.false_alarm;
  j["confusion"] = r.der.confusion;
  j["cer"] = r.cer.rate();
  j["cpcer"] = r.cp.rate;
  j["delta_cp"] = r.delta_cp();
  j["acc"] = r.attributes.acc();
  j["sca"] = r.attributes.count_correct ? 1 : 0;
  j["speaker_count_true"] = r.attributes.true_count;
  j["speaker_count_predicted"] = r.attributes.predicted_count;
  j["edit"] = {{"substitutions", r.cer.substitutions},
               {"insertions", r.cer.insertions},
               {"deletions", r.cer.deletions},
               {"reference_length", r.cer.reference_length}};
  ordered_json mapping = ordered_json::array();
  for (const SpeakerAssignment& pair : r.cp.permutation) {
    ordered_json entry{{"ref", pair.ref.index}};
    if (pair.hyp)
      entry["hyp"] = pair.hyp->index;
    else
      entry["hyp"] = nullptr;
    mapping.push_back(std::move(entry));
  }
  j["permutation"] = std::move(mapping);
  return j;
}

inline ordered_json aggregate_to_json(const AggregateReport& a) {
  return ordered_json{{"sessions", a.sessions},
                      {"der", a.der},
                      {"miss", a.miss},
                      {"false_alarm", a.false_alarm},
                      {"confusion", a.confusion},
                      {"cer", a.cer},
                      {"cpcer", a.cpcer},
                      {"delta_cp", a.delta_cp},
                      {"acc", a.acc},
                      {"sca", a.sca}};
}

}  // namespace sasr
