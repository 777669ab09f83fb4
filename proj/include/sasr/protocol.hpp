#pragma once

#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sasr/boundary.hpp"
#include "sasr/cache.hpp"
#include "sasr/common.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

// ---------------------------------------------------------------------------
// Turn-output grammar, version sasr/1. All model responses are plain text in
// this shape; the same serializer feeds training targets and the oracle
// backend so both sides of the contract stay bit-exact.
//
//   summary line   speakers: <N>; genders: male=<a>, female=<b>, unknown=<c>
//                  (zero counts omitted; "genders: none" when all are zero)
//   segment line   [<start>-<end>] spk<k> (<gender>): <text>
//   boundary line  next: [<start>-<end>]      or      next: terminate
//   final answer   <answer> ... segment lines ... </answer>
//
// Times carry two decimals. A global turn is a summary line plus an optional
// boundary line proposing the first observation; an observation turn is
// segment lines plus one boundary line; the final answer terminates the
// session. Unrecognized lines are skipped and recorded, never fatal unless
// nothing at all parses.

inline constexpr const char* kProtocolVersion = "sasr/1";

struct GlobalSummary {
  int speaker_count = 0;
  std::map<Gender, int> gender_counts;
  std::optional<BoundaryDecision> decision;

  bool operator==(const GlobalSummary&) const = default;
};

struct SegmentTurn {
  std::vector<Segment> segments;
  BoundaryDecision decision;

  bool operator==(const SegmentTurn&) const = default;
};

struct FinalAnswer {
  std::vector<Segment> transcript;

  bool operator==(const FinalAnswer&) const = default;
};

using TurnOutput = std::variant<GlobalSummary, SegmentTurn, FinalAnswer>;

struct ParseIssue {
  int line = 0;  // 1-based within the raw response
  std::string content;
  std::string reason;
};

struct ParsedTurn {
  TurnOutput output;
  std::vector<ParseIssue> issues;
};

// --- serialization ---------------------------------------------------------

inline std::string serialize_segment_line(const Segment& seg) {
  std::string out = "[" + format_time(seg.interval.start) + "-" + format_time(seg.interval.end) +
                    "] spk" + std::to_string(seg.speaker.index) + " (" + to_string(seg.gender) +
                    "): " + seg.text;
  return out;
}

inline std::string serialize_boundary_line(const BoundaryDecision& d) {
  if (d.kind == BoundaryDecision::Kind::terminate) return "next: terminate";
  return "next: [" + format_time(d.next->start) + "-" + format_time(d.next->end) + "]";
}

inline std::string serialize_summary_line(const GlobalSummary& s) {
  std::string genders;
  for (Gender g : {Gender::male, Gender::female, Gender::unknown}) {
    auto it = s.gender_counts.find(g);
    if (it == s.gender_counts.end() || it->second == 0) continue;
    if (!genders.empty()) genders += ", ";
    genders += std::string(to_string(g)) + "=" + std::to_string(it->second);
  }
  if (genders.empty()) genders = "none";
  return "speakers: " + std::to_string(s.speaker_count) + "; genders: " + genders;
}

inline std::string serialize_turn_output(const TurnOutput& output) {
  std::string out;
  if (const auto* summary = std::get_if<GlobalSummary>(&output)) {
    out = serialize_summary_line(*summary);
    if (summary->decision) out += "\n" + serialize_boundary_line(*summary->decision);
  } else if (const auto* turn = std::get_if<SegmentTurn>(&output)) {
    for (const Segment& seg : turn->segments) out += serialize_segment_line(seg) + "\n";
    out += serialize_boundary_line(turn->decision);
  } else if (const auto* answer = std::get_if<FinalAnswer>(&output)) {
    if (answer->transcript.empty()) return "<answer></answer>";
    out = "<answer>\n";
    for (const Segment& seg : answer->transcript) out += serialize_segment_line(seg) + "\n";
    out += "</answer>";
  }
  return out;
}

// --- parsing ---------------------------------------------------------------

namespace detail {

inline bool eat(std::string_view& s, std::string_view prefix) {
  if (s.substr(0, prefix.size()) != prefix) return false;
  s.remove_prefix(prefix.size());
  return true;
}

inline bool eat_double(std::string_view& s, double& out) {
  char* end = nullptr;
  std::string buf(s.substr(0, 32));
  out = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str()) return false;
  s.remove_prefix(static_cast<std::size_t>(end - buf.c_str()));
  return true;
}

inline bool eat_int(std::string_view& s, int& out) {
  double d;
  std::string_view probe = s;
  if (!eat_double(probe, d)) return false;
  out = static_cast<int>(d);
  if (static_cast<double>(out) != d) return false;
  s = probe;
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<Segment> parse_segment_line(std::string_view line) {
  Segment seg;
  double a, b;
  if (!eat(line, "[") || !eat_double(line, a) || !eat(line, "-") || !eat_double(line, b) ||
      !eat(line, "] spk"))
    return std::nullopt;
  int k;
  if (!eat_int(line, k) || !eat(line, " (")) return std::nullopt;
  std::size_t close = line.find("): ");
  if (close == std::string_view::npos) {
    // text may be empty, allow "):" at end of line
    if (line.size() >= 2 && line.substr(line.size() - 2) == "):")
      close = line.size() - 2;
    else
      return std::nullopt;
  }
  std::string gender(line.substr(0, close));
  std::string text(close + 3 <= line.size() ? line.substr(close + 3) : std::string_view{});
  if (a < 0 || !(a < b)) return std::nullopt;
  seg.interval = TimeInterval(a, b);
  if (k < 1) return std::nullopt;
  seg.speaker = SpeakerLabel{k};
  if (gender != "male" && gender != "female" && gender != "unknown") return std::nullopt;
  seg.gender = gender_from_string(gender);
  seg.text = text;
  return seg;
}

inline std::optional<BoundaryDecision> parse_boundary_line(std::string_view line) {
  if (!eat(line, "next:")) return std::nullopt;
  line = trim(line);
  if (line == "terminate") return BoundaryDecision::make_terminate();
  double a, b;
  if (!eat(line, "[") || !eat_double(line, a) || !eat(line, "-") || !eat_double(line, b) ||
      !eat(line, "]"))
    return std::nullopt;
  if (a < 0 || !(a < b)) return std::nullopt;
  return BoundaryDecision::make_continue(TimeInterval(a, b));
}

inline std::optional<GlobalSummary> parse_summary_line(std::string_view line) {
  GlobalSummary s;
  if (!eat(line, "speakers:")) return std::nullopt;
  line = trim(line);
  if (!eat_int(line, s.speaker_count)) return std::nullopt;
  if (!eat(line, ";")) return std::nullopt;
  line = trim(line);
  if (!eat(line, "genders:")) return std::nullopt;
  line = trim(line);
  if (line == "none" || line.empty()) return s;
  while (true) {
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    std::string name(trim(line.substr(0, eq)));
    line.remove_prefix(eq + 1);
    int count;
    if (!eat_int(line, count)) return std::nullopt;
    if (name != "male" && name != "female" && name != "unknown") return std::nullopt;
    s.gender_counts[gender_from_string(name)] = count;
    line = trim(line);
    if (line.empty()) break;
    if (!eat(line, ",")) return std::nullopt;
    line = trim(line);
  }
  return s;
}

}  // namespace detail

/// Parses one raw model response. Line-tolerant: junk lines are recorded as
/// issues and skipped. Throws only when nothing at all is parseable.
inline ParsedTurn parse_turn_output(const std::string& raw) {
  ParsedTurn out;

  auto split_lines = [](std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t nl = text.find('\n', pos);
      if (nl == std::string_view::npos) {
        lines.push_back(text.substr(pos));
        break;
      }
      lines.push_back(text.substr(pos, nl - pos));
      pos = nl + 1;
    }
    return lines;
  };

  std::size_t open = raw.find("<answer>");
  if (open != std::string::npos) {
    std::size_t body_begin = open + 8;
    std::size_t close = raw.find("</answer>", body_begin);
    std::string_view body;
    if (close == std::string::npos) {
      out.issues.push_back({0, "", "unterminated <answer> tag"});
      body = std::string_view(raw).substr(body_begin);
    } else {
      body = std::string_view(raw).substr(body_begin, close - body_begin);
    }
    FinalAnswer answer;
    int line_no = 0;
    for (std::string_view line : split_lines(body)) {
      ++line_no;
      line = detail::trim(line);
      if (line.empty()) continue;
      if (auto seg = detail::parse_segment_line(line))
        answer.transcript.push_back(std::move(*seg));
      else
        out.issues.push_back({line_no, std::string(line), "not a segment line"});
    }
    out.output = std::move(answer);
    return out;
  }

  std::vector<Segment> segments;
  std::optional<GlobalSummary> summary;
  std::optional<BoundaryDecision> decision;
  int line_no = 0;
  for (std::string_view line : split_lines(raw)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (auto seg = detail::parse_segment_line(line)) {
      segments.push_back(std::move(*seg));
    } else if (auto boundary = detail::parse_boundary_line(line)) {
      if (decision)
        out.issues.push_back({line_no, std::string(line), "extra boundary line ignored"});
      else
        decision = std::move(*boundary);
    } else if (auto parsed_summary = detail::parse_summary_line(line)) {
      if (summary)
        out.issues.push_back({line_no, std::string(line), "extra summary line ignored"});
      else
        summary = std::move(*parsed_summary);
    } else {
      out.issues.push_back({line_no, std::string(line), "unrecognized line"});
    }
  }

  if (!segments.empty()) {
    if (summary)
      out.issues.push_back({0, serialize_summary_line(*summary), "summary line in segment turn"});
    SegmentTurn turn;
    turn.segments = std::move(segments);
    if (decision) {
      turn.decision = std::move(*decision);
    } else {
      out.issues.push_back({0, "", "missing boundary line, assuming terminate"});
      turn.decision = BoundaryDecision::make_terminate();
    }
    out.output = std::move(turn);
    return out;
  }
  if (summary) {
    summary->decision = decision;
    out.output = std::move(*summary);
    return out;
  }
  if (decision) {
    SegmentTurn turn;  // a silent window: no segments, just a boundary
    turn.decision = std::move(*decision);
    out.output = std::move(turn);
    return out;
  }
  throw Error(ErrorCode::unparseable_turn, "no parseable content in response");
}

// ---------------------------------------------------------------------------
// Prompt payloads and the backend interface

/// The audio attached to a turn: an absolute session-time window plus either
/// a file reference or inline base64 PCM16 WAV bytes.
struct ObservationRef {
  TimeInterval interval;
  std::string audio_ref;
  std::string audio_b64;
};

struct HistoryEntry {
  int turn_index = 0;
  std::string kind;  // "global" | "observe"
  std::optional<TimeInterval> observation;
  std::string response;
};

struct PromptPayload {
  std::string version = kProtocolVersion;
  std::string kind;  // "global" | "observe"
  std::vector<CacheEntry> cache;
  std::vector<HistoryEntry> history;
  ObservationRef observation;
  std::string instruction;
};

inline constexpr const char* kInstructionGlobal =
    "Listen to the whole window and report the speaker inventory as "
    "'speakers: N; genders: ...', then propose the first observation window "
    "as 'next: [start-end]' (or 'next: terminate' if the window is empty).";

inline constexpr const char* kInstructionObserve =
    "Transcribe the observation window: one '[start-end] spkK (gender): text' "
    "line per utterance, labels numbered by first appearance after the cached "
    "speakers, then 'next: [start-end]' for the following window or "
    "'next: terminate'. Enclose a consolidated transcript in <answer> tags "
    "to finish instead.";

inline constexpr const char* kInstructionFullSession =
    "Transcribe the recording in one pass: a 'speakers: N; genders: ...' "
    "summary line first, then one '[start-end] spkK (gender): text' line per "
    "utterance in chronological order.";

struct InteractionTurn {
  int turn_index = 0;
  std::string kind;  // "global" | "observe"
  std::optional<TimeInterval> observation;
  PromptPayload prompt;
  std::string raw_response;
  TurnOutput parsed;
  std::vector<ParseIssue> issues;
};

/// Assembles the prompt for one turn: cache entries first (structured
/// context), then serialized history, the current observation, and the task
/// instruction. Deterministic: identical inputs give identical payloads.
inline PromptPayload build_prompt(const ObservationRef& obs,
                                  const std::vector<InteractionTurn>& history,
                                  const CacheSelection& cache, const std::string& kind) {
  PromptPayload payload;
  payload.kind = kind;
  for (const auto& [speaker, entries] : cache)
    payload.cache.insert(payload.cache.end(), entries.begin(), entries.end());
  for (const InteractionTurn& turn : history)
    payload.history.push_back({turn.turn_index, turn.kind, turn.observation, turn.raw_response});
  payload.observation = obs;
  payload.instruction = kind == "global" ? kInstructionGlobal : kInstructionObserve;
  return payload;
}

inline nlohmann::ordered_json payload_to_json(const PromptPayload& p) {
  nlohmann::ordered_json j;
  j["version"] = p.version;
  j["kind"] = p.kind;
  j["cache"] = nlohmann::ordered_json::array();
  for (const CacheEntry& e : p.cache) {
    j["cache"].push_back({{"speaker", e.speaker.index},
                          {"start", e.interval.start},
                          {"end", e.interval.end},
                          {"transcript", e.transcript},
                          {"audio_ref", e.audio_ref}});
  }
  j["history"] = nlohmann::ordered_json::array();
  for (const HistoryEntry& h : p.history) {
    nlohmann::ordered_json entry{{"turn", h.turn_index}, {"kind", h.kind}};
    if (h.observation) {
      entry["start"] = h.observation->start;
      entry["end"] = h.observation->end;
    }
    entry["response"] = h.response;
    j["history"].push_back(std::move(entry));
  }
  j["observation"] = {{"start", p.observation.interval.start},
                      {"end", p.observation.interval.end}};
  if (!p.observation.audio_b64.empty())
    j["observation"]["audio_b64"] = p.observation.audio_b64;
  else
    j["observation"]["audio_ref"] = p.observation.audio_ref;
  j["instruction"] = p.instruction;
  return j;
}

inline PromptPayload payload_from_json(const nlohmann::json& j) {
  PromptPayload p;
  p.version = j.value("version", kProtocolVersion);
  p.kind = j.at("kind").get<std::string>();
  if (j.contains("cache")) {
    for (const auto& e : j.at("cache")) {
      CacheEntry entry;
      entry.speaker = SpeakerLabel{e.at("speaker").get<int>()};
      entry.interval = TimeInterval(e.at("start").get<double>(), e.at("end").get<double>());
      entry.transcript = e.value("transcript", "");
      entry.audio_ref = e.value("audio_ref", "");
      p.cache.push_back(std::move(entry));
    }
  }
  if (j.contains("history")) {
    for (const auto& h : j.at("history")) {
      HistoryEntry entry;
      entry.turn_index = h.at("turn").get<int>();
      entry.kind = h.value("kind", "observe");
      if (h.contains("start"))
        entry.observation = TimeInterval(h.at("start").get<double>(), h.at("end").get<double>());
      entry.response = h.value("response", "");
      p.history.push_back(std::move(entry));
    }
  }
  const auto& obs = j.at("observation");
  p.observation.interval = TimeInterval(obs.at("start").get<double>(), obs.at("end").get<double>());
  p.observation.audio_ref = obs.value("audio_ref", "");
  p.observation.audio_b64 = obs.value("audio_b64", "");
  p.instruction = j.value("instruction", "");
  return p;
}

/// Canonical wire bytes for a payload; also the request body of the HTTP
/// backend protocol.
inline std::string payload_bytes(const PromptPayload& p) { return payload_to_json(p).dump(); }

/// A text-generation backend: the ground-truth oracle, an HTTP inference
/// service, or anything test code cooks up. Implementations that cannot take
/// concurrent generate() calls say so and the orchestrator serializes them.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual std::string generate(const PromptPayload& prompt) = 0;
  virtual bool concurrent_safe() const { return false; }
  virtual bool wants_audio_bytes() const { return false; }
};

// ---------------------------------------------------------------------------

inline std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                      (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                      static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                      (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

}  // namespace sasr
