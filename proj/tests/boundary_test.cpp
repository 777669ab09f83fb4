#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "sasr/boundary.hpp"
#include "test_util.hpp"

using namespace sasr;
using testutil::seg;

TEST_CASE("overlap_ratios worked examples") {
  auto [ra, rb] = overlap_ratios(TimeInterval(0, 10), TimeInterval(5, 15));
  CHECK(ra == Catch::Approx(0.5));
  CHECK(rb == Catch::Approx(0.5));

  auto same = overlap_ratios(TimeInterval(2, 4), TimeInterval(2, 4));
  CHECK(same.first == 1.0);
  CHECK(same.second == 1.0);

  auto disjoint = overlap_ratios(TimeInterval(0, 1), TimeInterval(2, 3));
  CHECK(disjoint.first == 0.0);
  CHECK(disjoint.second == 0.0);

  // touching intervals: zero-length intersection counts as ratio 0
  auto touching = overlap_ratios(TimeInterval(0, 1), TimeInterval(1, 2));
  CHECK(touching.first == 0.0);
  CHECK(touching.second == 0.0);
}

TEST_CASE("build_observations merges by the overlap-ratio rule") {
  CHECK(build_observations({}, 0.8).empty());

  auto single = build_observations({seg(1, 0, 10)}, 0.8);
  REQUIRE(single.size() == 1);
  CHECK(single[0].interval == TimeInterval(0, 10));
  CHECK(single[0].index == 1);

  // backchannel-like tail: ratios (0.1, 1/1.5) both under 0.8 -> separate
  auto split = build_observations({seg(1, 0, 10), seg(2, 9, 10.5)}, 0.8);
  REQUIRE(split.size() == 2);
  CHECK(split[1].interval == TimeInterval(9, 10.5));

  // contained segment: ratio vs itself is 1.0 -> merged, hull unchanged
  auto merged = build_observations({seg(1, 0, 10), seg(2, 1, 2)}, 0.8);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].interval == TimeInterval(0, 10));
  CHECK(merged[0].members.size() == 2);
}

TEST_CASE("next_boundary_target reads the following observation") {
  auto obs = build_observations({seg(1, 0, 10), seg(2, 9.5, 20)}, 0.8);
  REQUIRE(obs.size() == 2);

  BoundaryDecision first = next_boundary_target(obs, 1);
  REQUIRE(first.kind == BoundaryDecision::Kind::continue_with);
  CHECK(*first.next == TimeInterval(9.5, 20));
  REQUIRE(first.bins.has_value());
  CHECK(first.bins->first == 95);
  CHECK(first.bins->second == 200);

  CHECK(next_boundary_target(obs, 2).kind == BoundaryDecision::Kind::terminate);
  CHECK_THROWS_AS(next_boundary_target(obs, 0), Error);
  CHECK_THROWS_AS(next_boundary_target(obs, 3), Error);

  auto sole = build_observations({seg(1, 0, 1)}, 0.8);
  CHECK(next_boundary_target(sole, 1).kind == BoundaryDecision::Kind::terminate);
}

TEST_CASE("boundary bins discretize and decode at centers") {
  CHECK(discretize_boundary(0.0, 0.1) == 0);
  CHECK(undiscretize_boundary(0, 0.1) == Catch::Approx(0.05));
  CHECK(discretize_boundary(4.23, 0.1) == 42);
  double t = 7.777;
  CHECK(std::abs(undiscretize_boundary(discretize_boundary(t, 0.1), 0.1) - t) <= 0.05 + 1e-12);
  CHECK_THROWS_AS(discretize_boundary(-0.1, 0.1), Error);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    double v = static_cast<double>(rng() % 100000) / 100.0;
    long bin = discretize_boundary(v, 0.1);
    CHECK(std::abs(undiscretize_boundary(bin, 0.1) - v) <= 0.05 + 1e-9);
  }
}

namespace {

std::vector<Segment> random_segments(std::mt19937_64& rng, int count) {
  std::vector<Segment> out;
  double t = 0;
  for (int i = 0; i < count; ++i) {
    double start = t + static_cast<double>(rng() % 20) / 10.0;
    double dur = 0.5 + static_cast<double>(rng() % 60) / 10.0;
    out.push_back(testutil::seg(1 + static_cast<int>(rng() % 5), start, start + dur));
    // keep starts non-decreasing but allow heavy overlap
    t = start + (rng() % 2 ? 0.0 : dur * 0.5);
  }
  sort_segments(out);
  return out;
}

}  // namespace

TEST_CASE("build_observations invariants over random inputs") {
  std::mt19937_64 rng(17);
  for (double tau : {0.5, 0.8, 1.0}) {
    for (int round = 0; round < 60; ++round) {
      std::vector<Segment> input = random_segments(rng, 2 + static_cast<int>(rng() % 25));
      auto obs = build_observations(input, tau);
      REQUIRE_FALSE(obs.empty());

      // separation: consecutive observation intervals both under tau
      for (std::size_t i = 1; i < obs.size(); ++i) {
        auto [ra, rb] = overlap_ratios(obs[i - 1].interval, obs[i].interval);
        CHECK(ra < tau);
        CHECK(rb < tau);
      }
      // strict monotonicity of starts, contiguous 1-based indices
      for (std::size_t i = 0; i < obs.size(); ++i) {
        CHECK(obs[i].index == static_cast<int>(i) + 1);
        if (i) CHECK(obs[i].interval.start > obs[i - 1].interval.start);
      }
      // coverage: members partition the input multiset, interval covers them
      std::vector<Segment> collected;
      for (const Observation& o : obs) {
        for (const Segment& m : o.members) {
          CHECK(m.interval.start >= o.interval.start);
          CHECK(m.interval.end <= o.interval.end);
          collected.push_back(m);
        }
      }
      sort_segments(collected);
      CHECK(collected == input);
      // determinism
      auto again = build_observations(input, tau);
      REQUIRE(again.size() == obs.size());
      for (std::size_t i = 0; i < obs.size(); ++i) {
        CHECK(again[i].interval == obs[i].interval);
        CHECK(again[i].members == obs[i].members);
      }
    }
  }
}

TEST_CASE("tau edge behavior") {
  // tau = 1.0 never merges partial overlaps
  auto strict = build_observations({seg(1, 0, 10), seg(2, 5, 15)}, 1.0);
  CHECK(strict.size() == 2);
  // but still merges containment (intersection equals the smaller segment)
  auto contained = build_observations({seg(1, 0, 10), seg(2, 3, 7)}, 1.0);
  CHECK(contained.size() == 1);
  // tau -> 0+: any positive overlap merges
  auto loose = build_observations({seg(1, 0, 10), seg(2, 9.9, 30)}, 0.001);
  CHECK(loose.size() == 1);
  CHECK_THROWS_AS(build_observations({seg(1, 0, 1)}, 0.0), Error);
  CHECK_THROWS_AS(build_observations({seg(1, 0, 1)}, 1.5), Error);
}
