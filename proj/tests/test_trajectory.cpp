#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "nsbm/csv.hpp"
#include "nsbm/rng.hpp"
#include "nsbm/trajectory.hpp"

namespace {

using nsbm::Frame;
using nsbm::Label;
using nsbm::NeighborSet;
using nsbm::Rng;
using nsbm::Role;
using nsbm::TrajectorySample;
using nsbm::VehicleState;

VehicleState make_vehicle(int id, double x, double y, int lane, double speed = 20.0) {
  VehicleState v;
  v.id = id;
  v.x = x;
  v.y = y;
  v.lane = lane;
  v.speed = speed;
  v.accel = 0.0;
  v.heading = 0.0;
  v.length = 4.0;
  v.width = 1.8;
  return v;
}

// Brute-force neighbor assignment: nearest |dx| per (lane offset, ahead/behind)
// bucket, ties to the smaller id. Written independently of the library loop.
std::array<std::optional<VehicleState>, 7> oracle_neighbors(const Frame& frame,
                                                            int subject_id) {
  const VehicleState* subject = nullptr;
  for (const auto& v : frame) {
    if (v.id == subject_id) subject = &v;
  }
  std::array<std::optional<VehicleState>, 7> slots;
  for (const auto& v : frame) {
    if (v.id == subject_id) continue;
    int slot = -1;
    const int dl = v.lane - subject->lane;
    if (dl == -1 && v.x > subject->x) slot = 1;       // lead_left
    if (dl == 0 && v.x > subject->x) slot = 2;        // lead_same
    if (dl == 1 && v.x > subject->x) slot = 3;        // lead_right
    if (dl == -1 && v.x < subject->x) slot = 4;       // lag_left
    if (dl == 0 && v.x < subject->x) slot = 5;        // lag_same
    if (dl == 1 && v.x < subject->x) slot = 6;        // lag_right
    if (slot < 0) continue;
    auto& cur = slots[slot];
    const double d = std::fabs(v.x - subject->x);
    if (!cur.has_value()) {
      cur = v;
      continue;
    }
    const double dc = std::fabs(cur->x - subject->x);
    if (d < dc || (d == dc && v.id < cur->id)) cur = v;
  }
  return slots;
}

TEST(IdentifyNeighbors, MatchesBruteForceOracle) {
  Rng rng(808);
  for (int trial = 0; trial < 300; ++trial) {
    Frame frame;
    const int n = 2 + static_cast<int>(rng.below(10));
    for (int i = 0; i < n; ++i) {
      // Discretized positions force occasional exact |dx| ties.
      const double x = 5.0 * static_cast<double>(rng.below(30));
      const int lane = 1 + static_cast<int>(rng.below(4));
      frame.push_back(make_vehicle(i + 1, x, 3.5 * (lane - 1), lane));
    }
    const int subject_id = 1 + static_cast<int>(rng.below(n));
    const auto expect = oracle_neighbors(frame, subject_id);
    const NeighborSet got = nsbm::identify_neighbors(frame, subject_id);
    for (int s = 1; s < 7; ++s) {
      ASSERT_EQ(got.slots[s].has_value(), expect[s].has_value())
          << "trial " << trial << " slot " << s;
      if (expect[s].has_value()) {
        EXPECT_EQ(got.slots[s]->id, expect[s]->id) << "trial " << trial << " slot " << s;
      }
    }
  }
}

TEST(IdentifyNeighbors, ThrowsWithoutSubject) {
  Frame frame{make_vehicle(1, 0.0, 0.0, 1)};
  EXPECT_THROW(nsbm::identify_neighbors(frame, 99), std::invalid_argument);
}

TEST(IdentifyNeighbors, SameXVehicleIsIgnored) {
  Frame frame{make_vehicle(1, 50.0, 0.0, 1), make_vehicle(2, 50.0, 0.0, 1)};
  const NeighborSet n = nsbm::identify_neighbors(frame, 1);
  EXPECT_EQ(n.count(), 0);
}

TEST(ComputeMrd, MinimumGapOverNeighbors) {
  const VehicleState subject = make_vehicle(1, 100.0, 3.5, 2);
  Frame frame{subject, make_vehicle(2, 120.0, 3.5, 2), make_vehicle(3, 104.0, 0.0, 1)};
  const NeighborSet n = nsbm::identify_neighbors(frame, 1);
  // Lead same-lane: bumper gap 20 - 4 = 16. Lag... vehicle 3 is lead_left?
  // lane 1 = left of lane 2, x=104 > 100 so lead_left. Boxes: dx = 4 - 4 = 0
  // overlap in x-projection; dy = 3.5 - 1.8 = 1.7.
  const double mrd = nsbm::compute_mrd(subject, n);
  EXPECT_NEAR(mrd, 1.7, 1e-12);
}

TEST(ComputeMrd, InfiniteWithoutNeighbors) {
  const VehicleState subject = make_vehicle(1, 0.0, 0.0, 1);
  const NeighborSet empty;
  EXPECT_EQ(nsbm::compute_mrd(subject, empty), nsbm::kInf);
}

TrajectorySample two_vehicle_sample(Label label, std::int64_t first_ds,
                                    std::int64_t last_ds, double gap0,
                                    double closing_per_ds) {
  TrajectorySample s;
  s.sample_id = label == Label::crash ? "c1" : "n1";
  s.label = label;
  s.subject_id = 1;
  for (std::int64_t t = first_ds; t <= last_ds; ++t) {
    const double gap = gap0 - closing_per_ds * static_cast<double>(t - first_ds);
    Frame f;
    f.push_back(make_vehicle(1, 0.0, 0.0, 1));
    f.push_back(make_vehicle(2, 4.0 + gap, 0.0, 1));  // bumper gap = gap
    s.frames[t] = f;
  }
  return s;
}

TEST(DangerSeries, CrashWindowDefaultsToPreCrash) {
  const auto s = two_vehicle_sample(Label::crash, -20, 0, 10.0, 0.5);
  const auto series = nsbm::danger_series(s, 1.0);
  ASSERT_EQ(series.size(), 11u);
  EXPECT_EQ(series.front().t_ds, -10);
  EXPECT_EQ(series.back().t_ds, 0);
  // Gap at t: 10 - 0.5 * (t + 20); at t=-10 gap = 5, z = -5.
  EXPECT_NEAR(series.front().x, -5.0, 1e-12);
  EXPECT_NEAR(series.back().x, 0.0, 1e-12);
}

TEST(DangerSeries, NonCrashWindowStartsAtFirstFrame) {
  const auto s = two_vehicle_sample(Label::non_crash, 0, 30, 12.0, 0.1);
  const auto series = nsbm::danger_series(s, 2.0);
  ASSERT_EQ(series.size(), 21u);
  EXPECT_EQ(series.front().t_ds, 0);
  EXPECT_NEAR(series.front().x, -12.0, 1e-12);
  const auto shifted = nsbm::danger_series(s, 2.0, 0.5);
  EXPECT_EQ(shifted.front().t_ds, 5);
}

TEST(DangerSeries, NoNeighborGivesMinusInfinity) {
  TrajectorySample s;
  s.sample_id = "lonely";
  s.label = Label::non_crash;
  s.subject_id = 1;
  for (std::int64_t t = 0; t <= 10; ++t) {
    s.frames[t] = Frame{make_vehicle(1, 0.0, 0.0, 1)};
  }
  const auto series = nsbm::danger_series(s, 1.0);
  for (const auto& p : series) EXPECT_EQ(p.x, -nsbm::kInf);
}

// Brute-force block maxima for the oracle comparison.
std::vector<nsbm::BlockMax> oracle_blocks(const std::vector<nsbm::DangerPoint>& series,
                                          std::size_t m) {
  std::vector<nsbm::BlockMax> out;
  for (std::size_t start = 0; start + m <= series.size(); start += m) {
    std::size_t best = start;
    for (std::size_t i = start + 1; i < start + m; ++i) {
      if (series[i].x > series[best].x) best = i;
    }
    if (series[best].x == -nsbm::kInf) continue;
    out.push_back({series[best].t_ds, series[best].x, static_cast<int>(start / m)});
  }
  return out;
}

TEST(BlockMaxima, MatchesBruteForceOracle) {
  Rng rng(515);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<nsbm::DangerPoint> series;
    const int n = 1 + static_cast<int>(rng.below(40));
    const std::int64_t t0 = static_cast<std::int64_t>(rng.below(20)) - 10;
    for (int i = 0; i < n; ++i) {
      // Quantized values force ties; occasional -inf models missing neighbors.
      double x = -0.5 * static_cast<double>(rng.below(8));
      if (rng.below(6) == 0) x = -nsbm::kInf;
      series.push_back({t0 + i, x});
    }
    for (const double w : {0.2, 0.5}) {
      const auto m = static_cast<std::size_t>(nsbm::to_ds(w));
      const auto expect = oracle_blocks(series, m);
      const auto got = nsbm::block_maxima(series, w);
      ASSERT_EQ(got.size(), expect.size()) << "trial " << trial << " w=" << w;
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].t_ds, expect[i].t_ds) << "trial " << trial;
        EXPECT_EQ(got[i].z, expect[i].z);
        EXPECT_EQ(got[i].block_index, expect[i].block_index);
      }
    }
  }
}

TEST(BlockMaxima, TiesResolveToEarliestFrame) {
  std::vector<nsbm::DangerPoint> series{{0, -1.0}, {1, -1.0}, {2, -3.0}, {3, -0.5}};
  const auto blocks = nsbm::block_maxima(series, 0.2);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].t_ds, 0);  // tie between t=0 and t=1
  EXPECT_EQ(blocks[1].t_ds, 3);
}

TEST(BlockMaxima, RejectsDegenerateBlocks) {
  std::vector<nsbm::DangerPoint> series{{0, -1.0}, {1, -2.0}};
  EXPECT_THROW(nsbm::block_maxima(series, 0.1), std::invalid_argument);
  EXPECT_THROW(nsbm::block_maxima(series, 0.25), std::invalid_argument);
}

TEST(FilterAndPool, StrictThresholdAndOrdering) {
  std::map<std::string, std::vector<nsbm::BlockMax>> per_sample;
  per_sample["b"] = {{0, -0.5, 0}, {2, -1.0, 1}, {4, -0.2, 2}};
  per_sample["a"] = {{0, -2.0, 0}};
  const auto events = nsbm::filter_and_pool(per_sample, 1.0);
  ASSERT_EQ(events.size(), 2u);  // z = -1.0 excluded: strict z > -Q
  EXPECT_EQ(events[0].sample_id, "b");
  EXPECT_EQ(events[0].t_ds, 0);
  EXPECT_EQ(events[1].t_ds, 4);
  EXPECT_THROW(nsbm::filter_and_pool(per_sample, 0.0), std::invalid_argument);
}

TEST(TrajectoryCsv, RoundTripPreservesSamples) {
  Rng rng(99);
  std::vector<TrajectorySample> samples;
  for (int k = 0; k < 3; ++k) {
    TrajectorySample s;
    s.label = k == 0 ? Label::crash : Label::non_crash;
    s.sample_id = (k == 0 ? "crash_" : "noncrash_") + std::to_string(k);
    s.subject_id = 1;
    const std::int64_t first = k == 0 ? -15 : 0;
    const std::int64_t last = k == 0 ? 0 : 20;
    for (std::int64_t t = first; t <= last; ++t) {
      Frame f;
      for (int id = 1; id <= 3; ++id) {
        VehicleState v = make_vehicle(id, rng.uniform(0.0, 300.0),
                                      rng.uniform(0.0, 7.0),
                                      1 + static_cast<int>(rng.below(3)),
                                      rng.uniform(0.0, 30.0));
        v.accel = rng.uniform(-4.0, 2.0);
        v.heading = rng.uniform(-0.2, 0.2);
        f.push_back(v);
      }
      s.frames[t] = f;
    }
    samples.push_back(std::move(s));
  }

  const std::string csv = nsbm::trajectories_to_csv(samples, "round trip check");
  const auto parsed = nsbm::trajectories_from_csv(csv);
  ASSERT_EQ(parsed.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(parsed[i].sample_id, samples[i].sample_id);
    EXPECT_EQ(parsed[i].label, samples[i].label);
    EXPECT_EQ(parsed[i].subject_id, samples[i].subject_id);
    ASSERT_EQ(parsed[i].frames.size(), samples[i].frames.size());
    for (const auto& [t, frame] : samples[i].frames) {
      const Frame& got = parsed[i].frame(t);
      ASSERT_EQ(got.size(), frame.size());
      for (std::size_t j = 0; j < frame.size(); ++j) {
        // CSV stores six decimal places.
        EXPECT_EQ(got[j].id, frame[j].id);
        EXPECT_NEAR(got[j].x, frame[j].x, 5e-7);
        EXPECT_NEAR(got[j].speed, frame[j].speed, 5e-7);
        EXPECT_NEAR(got[j].heading, frame[j].heading, 5e-7);
        EXPECT_EQ(got[j].lane, frame[j].lane);
      }
    }
  }
}

TEST(TrajectoryCsv, RejectsMalformedInput) {
  const auto valid = [] {
    return two_vehicle_sample(Label::crash, -5, 0, 10.0, 0.5);
  };
  const std::string good = nsbm::trajectories_to_csv({valid()});
  EXPECT_NO_THROW(nsbm::trajectories_from_csv(good));

  EXPECT_THROW(nsbm::trajectories_from_csv("not,a,header\n"), nsbm::data_error);
  EXPECT_THROW(nsbm::trajectories_from_csv(""), nsbm::data_error);

  {
    auto s = valid();
    s.frames.erase(-3);  // hole in the time grid
    EXPECT_THROW(nsbm::trajectories_from_csv(nsbm::trajectories_to_csv({s})),
                 nsbm::data_error);
  }
  {
    auto s = valid();
    s.frames.erase(0);  // crash sample must reach t = 0
    EXPECT_THROW(nsbm::trajectories_from_csv(nsbm::trajectories_to_csv({s})),
                 nsbm::data_error);
  }
  {
    auto s = valid();
    s.frames[-5].erase(s.frames[-5].begin());  // subject missing from a frame
    EXPECT_THROW(nsbm::trajectories_from_csv(nsbm::trajectories_to_csv({s})),
                 nsbm::data_error);
  }
  {
    auto s = valid();
    s.frames[-5][0].speed = -1.0;
    EXPECT_THROW(nsbm::trajectories_from_csv(nsbm::trajectories_to_csv({s})),
                 nsbm::data_error);
  }
}

TEST(TrajectoryCsv, AtomicWriteCreatesFile) {
  const auto dir = std::filesystem::temp_directory_path() / "nsbm_csv_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  nsbm::write_text_file(path.string(), "hello\n");
  EXPECT_EQ(nsbm::read_text_file(path.string()), "hello\n");
  nsbm::write_text_file(path.string(), "replaced\n");
  EXPECT_EQ(nsbm::read_text_file(path.string()), "replaced\n");
  std::filesystem::remove_all(dir);
}

}  // namespace
