#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "sasr/common.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

/// A contiguous audio slice processed in one interaction turn, together with
/// the speaker segments it covers. Indices are 1-based and start times
/// strictly increase across a session.
struct Observation {
  int index = 0;
  TimeInterval interval;
  std::vector<Segment> members;
};

constexpr double kDefaultTau = 0.8;
constexpr double kDefaultBinWidth = 0.1;

/// Overlap of two intervals, expressed relative to each one's duration:
/// (d_AB / d_A, d_AB / d_B). A zero-length intersection scores 0 on both.
inline std::pair<double, double> overlap_ratios(const TimeInterval& a, const TimeInterval& b) {
  double inter = intersection_duration(a, b);
  return {inter / a.duration(), inter / b.duration()};
}

/// Boundary bins: bin = floor(t / bin_width), decoded at the bin center. The
/// epsilon keeps grid-aligned times (e.g. 9.5 / 0.1) in their mathematical
/// bin despite binary rounding.
inline long discretize_boundary(double t, double bin_width = kDefaultBinWidth) {
  if (t < 0.0) throw Error(ErrorCode::range_error, "negative boundary time");
  if (bin_width <= 0.0) throw Error(ErrorCode::config_error, "bin_width must be positive");
  return static_cast<long>(std::floor(t / bin_width + 1e-9));
}

inline double undiscretize_boundary(long bin, double bin_width = kDefaultBinWidth) {
  if (bin < 0) throw Error(ErrorCode::range_error, "negative bin index");
  return (static_cast<double>(bin) + 0.5) * bin_width;
}

/// What a turn proposes for the next observation window: either the next
/// interval (with its discretized bin pair when a bin width is known) or
/// termination.
struct BoundaryDecision {
  enum class Kind { continue_with, terminate };

  Kind kind = Kind::terminate;
  std::optional<TimeInterval> next;
  std::optional<std::pair<long, long>> bins;

  static BoundaryDecision make_terminate() { return {}; }
  static BoundaryDecision make_continue(const TimeInterval& iv,
                                        std::optional<double> bin_width = std::nullopt) {
    BoundaryDecision d;
    d.kind = Kind::continue_with;
    d.next = iv;
    if (bin_width)
      d.bins = {discretize_boundary(iv.start, *bin_width), discretize_boundary(iv.end, *bin_width)};
    return d;
  }

  bool operator==(const BoundaryDecision&) const = default;
};

/// Greedy in-order sweep that groups start-sorted segments into observations.
/// A candidate joins the current observation iff at least one of its overlap
/// ratios against the observation's union interval reaches tau; otherwise it
/// seeds the next observation. With tau in (0, 1] every contained or
/// co-starting segment merges, so observation starts strictly increase.
inline std::vector<Observation> build_observations(const std::vector<Segment>& segments,
                                                   double tau = kDefaultTau) {
  if (!(tau > 0.0) || tau > 1.0)
    throw Error(ErrorCode::config_error, "tau must lie in (0, 1]");
  std::vector<Observation> out;
  for (const Segment& seg : segments) {
    if (!out.empty()) {
      auto [ra, rb] = overlap_ratios(out.back().interval, seg.interval);
      if (ra >= tau || rb >= tau) {
        Observation& obs = out.back();
        obs.interval = hull(obs.interval, seg.interval);
        obs.members.push_back(seg);
        continue;
      }
    }
    Observation obs;
    obs.index = static_cast<int>(out.size()) + 1;
    obs.interval = seg.interval;
    obs.members.push_back(seg);
    out.push_back(std::move(obs));
  }
  return out;
}

/// Ground-truth boundary supervision for turn i (1-based): the next
/// observation's interval, or termination after the last one.
inline BoundaryDecision next_boundary_target(const std::vector<Observation>& observations, int i,
                                             double bin_width = kDefaultBinWidth) {
  if (i < 1 || i > static_cast<int>(observations.size()))
    throw Error(ErrorCode::range_error, "observation index " + std::to_string(i) + " out of 1.." +
                                            std::to_string(observations.size()));
  if (i == static_cast<int>(observations.size())) return BoundaryDecision::make_terminate();
  return BoundaryDecision::make_continue(observations[static_cast<std::size_t>(i)].interval,
                                         bin_width);
}

}  // namespace sasr
