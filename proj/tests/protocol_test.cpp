#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>

#include "sasr/protocol.hpp"
#include "test_util.hpp"

using namespace sasr;
using testutil::seg;

TEST_CASE("parse final answer") {
  ParsedTurn parsed = parse_turn_output("<answer>[0.00-2.10] spk1 (male): 大家好</answer>");
  auto* answer = std::get_if<FinalAnswer>(&parsed.output);
  REQUIRE(answer);
  REQUIRE(answer->transcript.size() == 1);
  CHECK(answer->transcript[0].speaker.index == 1);
  CHECK(answer->transcript[0].gender == Gender::male);
  CHECK(answer->transcript[0].interval == TimeInterval(0.0, 2.1));
  CHECK(answer->transcript[0].text == "大家好");
  CHECK(parsed.issues.empty());

  ParsedTurn empty = parse_turn_output("<answer></answer>");
  REQUIRE(std::get_if<FinalAnswer>(&empty.output));
  CHECK(std::get<FinalAnswer>(empty.output).transcript.empty());
}

TEST_CASE("parse global summary") {
  ParsedTurn parsed = parse_turn_output("speakers: 3; genders: male=2, female=1");
  auto* summary = std::get_if<GlobalSummary>(&parsed.output);
  REQUIRE(summary);
  CHECK(summary->speaker_count == 3);
  CHECK(summary->gender_counts.at(Gender::male) == 2);
  CHECK(summary->gender_counts.at(Gender::female) == 1);
  CHECK_FALSE(summary->decision.has_value());

  // the turn-1 shape: summary plus the first boundary proposal
  ParsedTurn with_next =
      parse_turn_output("speakers: 2; genders: female=2\nnext: [0.00-12.50]");
  auto* s2 = std::get_if<GlobalSummary>(&with_next.output);
  REQUIRE(s2);
  REQUIRE(s2->decision.has_value());
  CHECK(s2->decision->kind == BoundaryDecision::Kind::continue_with);
  CHECK(*s2->decision->next == TimeInterval(0.0, 12.5));
}

TEST_CASE("parse segment turn with termination") {
  std::string raw =
      "[0.50-2.10] spk1 (male): da jia hao\n"
      "[2.00-3.40] spk2 (female): ni hao\n"
      "next: terminate";
  ParsedTurn parsed = parse_turn_output(raw);
  auto* turn = std::get_if<SegmentTurn>(&parsed.output);
  REQUIRE(turn);
  REQUIRE(turn->segments.size() == 2);
  CHECK(turn->segments[1].text == "ni hao");
  CHECK(turn->decision.kind == BoundaryDecision::Kind::terminate);
  CHECK(parsed.issues.empty());
}

TEST_CASE("parse is line-tolerant, skip-and-record") {
  std::string raw =
      "thinking out loud...\n"
      "[0.50-2.10] spk1 (male): ok\n"
      "??\n"
      "next: [2.10-4.00]";
  ParsedTurn parsed = parse_turn_output(raw);
  auto* turn = std::get_if<SegmentTurn>(&parsed.output);
  REQUIRE(turn);
  CHECK(turn->segments.size() == 1);
  CHECK(turn->decision.kind == BoundaryDecision::Kind::continue_with);
  CHECK(parsed.issues.size() == 2);

  // malformed segment lines are recorded, not fatal
  ParsedTurn bad = parse_turn_output("[2.00-1.00] spk1 (male): inverted\nnext: terminate");
  CHECK(std::get_if<SegmentTurn>(&bad.output));
  CHECK(std::get<SegmentTurn>(bad.output).segments.empty());
  CHECK_FALSE(bad.issues.empty());

  // a segment turn without a boundary line records the repair
  ParsedTurn no_next = parse_turn_output("[0.00-1.00] spk1 (male): hi");
  REQUIRE(std::get_if<SegmentTurn>(&no_next.output));
  CHECK(std::get<SegmentTurn>(no_next.output).decision.kind ==
        BoundaryDecision::Kind::terminate);
  CHECK_FALSE(no_next.issues.empty());
}

TEST_CASE("nothing parseable is an error") {
  CHECK_THROWS_AS(parse_turn_output("complete nonsense"), Error);
  try {
    parse_turn_output("");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unparseable_turn);
  }
}

TEST_CASE("serialization idioms") {
  Segment s = seg(3, 1.2, 4.56, "hello there", Gender::female);
  CHECK(serialize_segment_line(s) == "[1.20-4.56] spk3 (female): hello there");
  CHECK(serialize_boundary_line(BoundaryDecision::make_terminate()) == "next: terminate");
  CHECK(serialize_boundary_line(BoundaryDecision::make_continue(TimeInterval(1, 2.5))) ==
        "next: [1.00-2.50]");
  GlobalSummary summary;
  summary.speaker_count = 3;
  summary.gender_counts[Gender::male] = 2;
  summary.gender_counts[Gender::female] = 1;
  CHECK(serialize_summary_line(summary) == "speakers: 3; genders: male=2, female=1");
  summary.gender_counts.clear();
  CHECK(serialize_summary_line(summary) == "speakers: 3; genders: none");
}

namespace {

std::string random_token(std::mt19937_64& rng) {
  const char* tokens[] = {"ka", "mi", "so", "ta", "ne", "lu", "wo", "re"};
  std::string out;
  for (int i = 0; i < 1 + static_cast<int>(rng() % 4); ++i) {
    if (i) out += ' ';
    out += tokens[rng() % 8];
  }
  return out;
}

Segment random_segment(std::mt19937_64& rng) {
  double start = static_cast<double>(rng() % 5000) / 100.0;
  double dur = 0.01 + static_cast<double>(rng() % 800) / 100.0;
  Gender g = static_cast<Gender>(rng() % 3);
  return testutil::seg(1 + static_cast<int>(rng() % 9), start, quantize_time(start + dur),
                       random_token(rng), g);
}

TurnOutput random_turn_output(std::mt19937_64& rng) {
  switch (rng() % 3) {
    case 0: {
      GlobalSummary s;
      s.speaker_count = static_cast<int>(rng() % 9);
      for (Gender g : {Gender::male, Gender::female, Gender::unknown})
        if (rng() % 2) s.gender_counts[g] = 1 + static_cast<int>(rng() % 4);
      if (rng() % 2) {
        double a = static_cast<double>(rng() % 1000) / 100.0;
        s.decision = BoundaryDecision::make_continue(
            TimeInterval(a, a + 0.01 + static_cast<double>(rng() % 500) / 100.0));
      }
      return s;
    }
    case 1: {
      SegmentTurn t;
      for (int i = static_cast<int>(rng() % 5); i-- > 0;) t.segments.push_back(random_segment(rng));
      if (rng() % 2) {
        double a = static_cast<double>(rng() % 1000) / 100.0;
        t.decision = BoundaryDecision::make_continue(
            TimeInterval(a, a + 0.01 + static_cast<double>(rng() % 500) / 100.0));
      } else {
        t.decision = BoundaryDecision::make_terminate();
      }
      return t;
    }
    default: {
      FinalAnswer a;
      for (int i = static_cast<int>(rng() % 5); i-- > 0;) a.transcript.push_back(random_segment(rng));
      return a;
    }
  }
}

}  // namespace

TEST_CASE("serialize/parse round trip on random turn outputs") {
  std::mt19937_64 rng(101);
  for (int round = 0; round < 1000; ++round) {
    TurnOutput original = random_turn_output(rng);
    ParsedTurn reparsed = parse_turn_output(serialize_turn_output(original));
    if (auto* turn = std::get_if<SegmentTurn>(&original)) {
      // empty segment turns parse as boundary-only turns, still segment turns
      REQUIRE(std::get_if<SegmentTurn>(&reparsed.output));
      CHECK(*std::get_if<SegmentTurn>(&reparsed.output) == *turn);
    } else if (auto* summary = std::get_if<GlobalSummary>(&original)) {
      REQUIRE(std::get_if<GlobalSummary>(&reparsed.output));
      CHECK(*std::get_if<GlobalSummary>(&reparsed.output) == *summary);
    } else {
      REQUIRE(std::get_if<FinalAnswer>(&reparsed.output));
      CHECK(*std::get_if<FinalAnswer>(&reparsed.output) ==
            *std::get_if<FinalAnswer>(&original));
    }
    CHECK(reparsed.issues.empty());
  }
}

TEST_CASE("build_prompt layout and determinism") {
  CacheSelection cache;
  cache[SpeakerLabel{1}] = {{SpeakerLabel{1}, "a.wav", TimeInterval(0, 2), "ka mi"}};
  cache[SpeakerLabel{2}] = {{SpeakerLabel{2}, "a.wav", TimeInterval(3, 4), "so"}};

  InteractionTurn turn1;
  turn1.turn_index = 1;
  turn1.kind = "global";
  turn1.observation = TimeInterval(0, 50);
  turn1.raw_response = "speakers: 2; genders: male=2\nnext: [0.00-10.00]";

  ObservationRef obs;
  obs.interval = TimeInterval(10, 20);
  obs.audio_ref = "a.wav#10.00-20.00";

  PromptPayload payload = build_prompt(obs, {turn1}, cache, "observe");
  CHECK(payload.cache.size() == 2);
  CHECK(payload.cache[0].speaker == SpeakerLabel{1});  // ascending label order
  CHECK(payload.history.size() == 1);
  CHECK(payload.instruction == kInstructionObserve);

  std::string bytes = payload_bytes(payload);
  CHECK(bytes == payload_bytes(build_prompt(obs, {turn1}, cache, "observe")));
  // cache block precedes history, which precedes the observation
  CHECK(bytes.find("\"cache\"") < bytes.find("\"history\""));
  CHECK(bytes.find("\"history\"") < bytes.find("\"observation\""));
  CHECK(bytes.find("\"observation\"") < bytes.find("\"instruction\""));

  PromptPayload reparsed = payload_from_json(nlohmann::json::parse(bytes));
  CHECK(payload_bytes(reparsed) == bytes);
}

TEST_CASE("base64 encoding") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
}
