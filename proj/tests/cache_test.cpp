#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "sasr/cache.hpp"
#include "sasr/io.hpp"
#include "test_util.hpp"

using namespace sasr;
using testutil::seg;

TEST_CASE("cache_score worked examples") {
  CHECK(cache_score(4.0, 2, 4, 0.5) == Catch::Approx(5.0));
  CHECK(cache_score(3.0, 1, 7, 0.0) == Catch::Approx(3.0));          // recency disabled
  CHECK(cache_score(2.0, 5, 5, 0.7) == Catch::Approx(2.0 * 1.7));    // most recent
  CHECK_THROWS_AS(cache_score(1.0, 1, 0, 0.5), Error);
  try {
    cache_score(1.0, 0, 3, 0.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::range_error);
  }
}

TEST_CASE("cache_score monotonicity") {
  for (int i = 1; i <= 6; ++i)
    CHECK(cache_score(2.0, i, 6, 0.5) < cache_score(2.5, i, 6, 0.5));
  for (int i = 2; i <= 6; ++i)
    CHECK(cache_score(2.0, i - 1, 6, 0.5) < cache_score(2.0, i, 6, 0.5));
}

namespace {

ObservationBuffer buffer_of(std::vector<std::vector<Segment>> observations) {
  ObservationBuffer buf;
  double t = 0;
  for (auto& segs : observations) {
    BufferedObservation obs;
    double end = t + 1;
    for (const Segment& s : segs) end = std::max(end, s.interval.end);
    obs.interval = TimeInterval(t, end);
    obs.segments = std::move(segs);
    obs.audio_ref = "buffer.wav";
    buf.items.push_back(std::move(obs));
    t = end;
  }
  return buf;
}

}  // namespace

TEST_CASE("select_cache keeps everything when candidates are scarce") {
  ObservationBuffer buf = buffer_of({{seg(1, 0, 3, "aa")}});
  auto selected = select_cache(buf, {SpeakerLabel{1}}, 0.5, 3);
  REQUIRE(selected.size() == 1);
  REQUIRE(selected.at(SpeakerLabel{1}).size() == 1);
  CHECK(selected.at(SpeakerLabel{1})[0].transcript == "aa");
  CHECK(selected.at(SpeakerLabel{1})[0].audio_ref == "buffer.wav");
}

TEST_CASE("select_cache ranks by phi") {
  // (d=2, i=1, n=2, a=1) phi=3.0 vs (d=1.8, i=2, n=2) phi=3.6 -> second wins
  ObservationBuffer buf =
      buffer_of({{seg(1, 0, 2, "first")}, {seg(1, 2.5, 4.3, "second")}});
  auto selected = select_cache(buf, {SpeakerLabel{1}}, 1.0, 1);
  REQUIRE(selected.at(SpeakerLabel{1}).size() == 1);
  CHECK(selected.at(SpeakerLabel{1})[0].transcript == "second");
}

TEST_CASE("select_cache filters by requested speakers") {
  ObservationBuffer buf = buffer_of({{seg(1, 0, 2, "a"), seg(2, 0.5, 2.5, "b")}});
  auto selected = select_cache(buf, {SpeakerLabel{1}}, 0.5, 3);
  CHECK(selected.count(SpeakerLabel{2}) == 0);
  CHECK(selected.at(SpeakerLabel{1}).size() == 1);
  CHECK(select_cache(ObservationBuffer{}, {SpeakerLabel{1}}, 0.5, 3).empty());
}

TEST_CASE("select_cache equals brute-force enumeration with the documented tie-break") {
  std::mt19937_64 rng(23);
  for (int round = 0; round < 300; ++round) {
    const int n_obs = 1 + static_cast<int>(rng() % 20);
    std::vector<std::vector<Segment>> observations(static_cast<std::size_t>(n_obs));
    double t = 0;
    for (auto& obs : observations) {
      const int segs = static_cast<int>(rng() % 4);
      for (int s = 0; s < segs; ++s) {
        // durations drawn from a tiny grid so score ties actually occur
        double start = t + static_cast<double>(rng() % 10) / 10.0;
        double dur = 0.5 * (1 + static_cast<double>(rng() % 4));
        obs.push_back(seg(1 + static_cast<int>(rng() % 4), start, start + dur,
                          "t" + std::to_string(rng() % 100)));
      }
      t += 8;
    }
    ObservationBuffer buf = buffer_of(std::move(observations));
    std::set<SpeakerLabel> speakers;
    for (int k = 1; k <= 4; ++k)
      if (rng() % 2) speakers.insert(SpeakerLabel{k});
    const double alpha = static_cast<double>(rng() % 20) / 10.0;
    const int k = 1 + static_cast<int>(rng() % 4);

    auto fast = select_cache(buf, speakers, alpha, k);

    // oracle: exhaustively enumerate candidates, full sort, take k
    struct Row {
      CacheEntry entry;
      double phi;
      int position;
    };
    std::map<SpeakerLabel, std::vector<Row>> all;
    const int n = buf.size();
    for (int i = 1; i <= n; ++i)
      for (const Segment& s : buf.items[static_cast<std::size_t>(i - 1)].segments)
        if (speakers.contains(s.speaker))
          all[s.speaker].push_back(
              {{s.speaker, buf.items[static_cast<std::size_t>(i - 1)].audio_ref, s.interval,
                s.text},
               s.interval.duration() * (1.0 + alpha * (static_cast<double>(i) / n)),
               i});
    for (auto& [speaker, rows] : all) {
      std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.phi != b.phi) return a.phi > b.phi;
        if (a.position != b.position) return a.position > b.position;
        return a.entry.interval.start < b.entry.interval.start;
      });
      std::vector<CacheEntry> expect;
      for (std::size_t j = 0; j < rows.size() && j < static_cast<std::size_t>(k); ++j)
        expect.push_back(rows[j].entry);
      REQUIRE(fast.count(speaker) == 1);
      CHECK(fast.at(speaker) == expect);
    }
    for (const auto& [speaker, entries] : fast) {
      CHECK(all.count(speaker) == 1);
      CHECK(entries.size() <= static_cast<std::size_t>(k));
    }
  }
}

TEST_CASE("simulate_training_cache clips to availability and stays deterministic") {
  auto ann = testutil::session_of({seg(1, 0, 2, "a1"), seg(1, 3, 5, "a2"), seg(2, 6, 8, "b1"),
                                   seg(1, 10, 12, "a3"), seg(2, 13, 14, "b2")});
  std::mt19937_64 rng1(9), rng2(9);
  SimulatedCache a = simulate_training_cache(ann, 9.0, rng1);
  SimulatedCache b = simulate_training_cache(ann, 9.0, rng2);

  // speaker 1 has 2 early segments, speaker 2 has 1; never more than available
  std::map<SpeakerLabel, int> per_speaker;
  for (const CacheEntry& e : a.entries) per_speaker[e.speaker]++;
  for (const auto& [speaker, count] : per_speaker) CHECK(count <= 2);
  REQUIRE_FALSE(a.entries.empty());
  // chronological entry order
  for (std::size_t i = 1; i < a.entries.size(); ++i)
    CHECK(a.entries[i - 1].interval.start <= a.entries[i].interval.start);

  // byte-identical under the same seed
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i] == b.entries[i]);
  CHECK(a.current == b.current);
}

TEST_CASE("simulate_training_cache relabels over the concatenation") {
  // speaker 4 owns all early speech; when cached it must become label 1
  // everywhere, including post-cut segments
  auto ann = testutil::session_of(
      {seg(4, 0, 2, "x"), seg(4, 3, 5, "y"), seg(4, 10, 12, "z"), seg(2, 13, 15, "w")});
  std::mt19937_64 rng(1);
  SimulatedCache sim = simulate_training_cache(ann, 9.0, rng);
  REQUIRE_FALSE(sim.entries.empty());
  for (const CacheEntry& e : sim.entries) CHECK(e.speaker.index == 1);
  REQUIRE(sim.current.size() == 2);
  CHECK(sim.current[0].speaker.index == 1);  // speaker 4 keeps the cache-induced label
  CHECK(sim.current[1].speaker.index == 2);

  // labels form a first-appearance numbering: reapplying changes nothing
  std::vector<Segment> concat;
  for (const CacheEntry& e : sim.entries) {
    Segment s;
    s.speaker = e.speaker;
    s.interval = e.interval;
    s.text = e.transcript;
    concat.push_back(s);
  }
  concat.insert(concat.end(), sim.current.begin(), sim.current.end());
  RelabelResult again = reassign_labels(concat);
  CHECK(again.segments == concat);
}

TEST_CASE("simulate_training_cache error paths") {
  auto ann = testutil::session_of({seg(1, 5, 8, "late")});
  std::mt19937_64 rng(2);
  try {
    simulate_training_cache(ann, 2.0, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_history);
  }
}
