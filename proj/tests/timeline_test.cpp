#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "sasr/timeline.hpp"
#include "test_util.hpp"

using namespace sasr;
using testutil::seg;

TEST_CASE("time quantization rounds to 10 ms, half up") {
  CHECK(quantize_time(1.0049) == Catch::Approx(1.00));
  CHECK(quantize_time(1.0051) == Catch::Approx(1.01));
  CHECK(quantize_time(0.0) == 0.0);
  // grid values are fixed points
  for (int k = 0; k < 500; ++k) {
    double t = k / 100.0;
    CHECK(quantize_time(t) == t);
  }
}

TEST_CASE("interval invariants") {
  CHECK(TimeInterval(0.0, 1.5).duration() == Catch::Approx(1.5));
  CHECK_THROWS_AS(TimeInterval(5.0, 5.0), Error);
  CHECK_THROWS_AS(TimeInterval(3.0, 2.0), Error);
  CHECK_THROWS_AS(TimeInterval(-0.1, 2.0), Error);
  CHECK(intersection_duration(TimeInterval(0, 10), TimeInterval(5, 15)) == Catch::Approx(5.0));
  CHECK(intersection_duration(TimeInterval(0, 1), TimeInterval(2, 3)) == 0.0);
  CHECK(hull(TimeInterval(0, 2), TimeInterval(1, 5)) == TimeInterval(0, 5));
}

TEST_CASE("reassign_labels renumbers by first appearance") {
  auto segs = std::vector<Segment>{seg(7, 0, 1), seg(3, 2, 3), seg(7, 4, 5), seg(9, 6, 7)};
  RelabelResult r = reassign_labels(segs);
  std::vector<int> got;
  for (const Segment& s : r.segments) got.push_back(s.speaker.index);
  CHECK(got == std::vector<int>{1, 2, 1, 3});
  CHECK(r.remap.at(SpeakerLabel{7}) == SpeakerLabel{1});
  CHECK(r.remap.at(SpeakerLabel{9}) == SpeakerLabel{3});
}

TEST_CASE("reassign_labels is a fixed point on canonical input") {
  auto segs = std::vector<Segment>{seg(1, 0, 1), seg(2, 2, 3), seg(3, 4, 5)};
  RelabelResult r = reassign_labels(segs);
  CHECK(r.segments == segs);
  for (const auto& [from, to] : r.remap) CHECK(from == to);
}

TEST_CASE("reassign_labels keeps cache/observation label continuity") {
  // cached history [5], then current audio [5, 8]
  auto concat = std::vector<Segment>{seg(5, 0, 1), seg(5, 10, 11), seg(8, 12, 13)};
  RelabelResult r = reassign_labels(concat);
  CHECK(r.segments[0].speaker.index == 1);  // cache entry
  CHECK(r.segments[1].speaker.index == 1);  // same speaker later on
  CHECK(r.segments[2].speaker.index == 2);
}

TEST_CASE("reassign_labels rejects empty input") {
  try {
    reassign_labels({});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_session);
  }
}

TEST_CASE("reassign_labels properties: idempotent, field-preserving") {
  std::mt19937_64 rng(42);
  for (int round = 0; round < 50; ++round) {
    std::vector<Segment> segs;
    double t = 0;
    for (int i = 0; i < 20; ++i) {
      int spk = 1 + static_cast<int>(rng() % 6);
      double d = 0.5 + static_cast<double>(rng() % 30) / 10.0;
      segs.push_back(seg(spk, t, t + d, "tok" + std::to_string(rng() % 9)));
      t += d + 0.1;
    }
    RelabelResult once = reassign_labels(segs);
    RelabelResult twice = reassign_labels(once.segments);
    CHECK(once.segments == twice.segments);
    REQUIRE(once.segments.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(once.segments[i].interval == segs[i].interval);
      CHECK(once.segments[i].text == segs[i].text);
      CHECK(once.segments[i].gender == segs[i].gender);
    }
  }
}

TEST_CASE("validate_session accepts a well-formed two-speaker session") {
  auto ann = testutil::session_of({seg(1, 0, 5, "a", Gender::male),
                                   seg(2, 4, 8, "b", Gender::female),
                                   seg(1, 6, 9, "c", Gender::male)});
  CHECK(validate_session(ann).empty());
}

TEST_CASE("validate_session flags out-of-range intervals") {
  auto ann = testutil::session_of({seg(1, 0, 5)});
  ann.duration = 4.0;  // segment now ends past T
  auto report = validate_session(ann);
  REQUIRE(report.size() == 1);
  CHECK(report[0].kind == ViolationKind::out_of_range);
}

TEST_CASE("validate_session flags same-speaker overlap") {
  auto ann = testutil::session_of({seg(1, 0, 5), seg(1, 4, 6)});
  auto report = validate_session(ann);
  REQUIRE(report.size() == 1);
  CHECK(report[0].kind == ViolationKind::same_speaker_overlap);
  CHECK(report[0].detail.find("1.00") != std::string::npos);  // 1 s overlap
}

TEST_CASE("validate_session catches overlap with an earlier long segment") {
  auto ann = testutil::session_of({seg(1, 0, 100), seg(2, 1, 2), seg(1, 3, 4)});
  auto report = validate_session(ann);
  REQUIRE(report.size() == 1);
  CHECK(report[0].kind == ViolationKind::same_speaker_overlap);
}

TEST_CASE("validate_session flags gender bookkeeping problems") {
  auto ann = testutil::session_of({seg(1, 0, 5, "", Gender::male), seg(2, 6, 8, "", Gender::female)});
  ann.speaker_genders.erase(SpeakerLabel{2});
  auto report = validate_session(ann);
  REQUIRE(report.size() == 1);
  CHECK(report[0].kind == ViolationKind::missing_gender);

  ann.speaker_genders[SpeakerLabel{2}] = Gender::male;  // conflicts with the segment
  report = validate_session(ann);
  REQUIRE(report.size() == 1);
  CHECK(report[0].kind == ViolationKind::gender_conflict);
}

TEST_CASE("validate_session flags ordering breaches") {
  auto ann = testutil::session_of({seg(1, 0, 5), seg(2, 6, 8)});
  std::swap(ann.segments[0], ann.segments[1]);
  auto report = validate_session(ann);
  REQUIRE_FALSE(report.empty());
  CHECK(report[0].kind == ViolationKind::out_of_order);
}
