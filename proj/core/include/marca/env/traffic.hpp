#pragma once

// Diurnal traffic generation with burst events and seeded noise.

#include <cstdint>
#include <vector>

namespace marca::env {

struct BurstEvent {
  std::size_t start_step = 0;
  std::size_t duration_steps = 0;
  double multiplier = 1.0;
};

struct TrafficProfile {
  double base_count = 120.0;  // requests per step before modulation
  double diurnal_amplitude = 0.35;
  std::vector<BurstEvent> bursts;
  double noise_scale = 0.0;  // stddev of additive noise, in requests
  double step_seconds = 60.0;
  double start_sec = 0.0;  // time-of-day of step 0
  std::uint64_t seed = 1;
};

struct TrafficPoint {
  double timestamp_sec = 0.0;  // seconds within the simulated day
  long request_count = 0;
};

// count(t) = base · (1 + amplitude·sin(2π·t/day)) · burst(t) + noise, floored at 1
std::vector<TrafficPoint> generate_traffic(const TrafficProfile& profile, std::size_t horizon);

}  // namespace marca::env
