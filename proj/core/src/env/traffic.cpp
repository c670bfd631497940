#include "marca/env/traffic.hpp"

#include <cmath>

#include "marca/common.hpp"

namespace marca::env {

std::vector<TrafficPoint> generate_traffic(const TrafficProfile& profile, std::size_t horizon) {
  require(horizon >= 1, "generate_traffic: horizon must be >= 1");
  require(profile.base_count > 0.0, "generate_traffic: base count must be positive");
  Rng rng(profile.seed);
  std::vector<TrafficPoint> out;
  out.reserve(horizon);
  for (std::size_t i = 0; i < horizon; ++i) {
    const double t = profile.start_sec + static_cast<double>(i) * profile.step_seconds;
    const double day_phase = 2.0 * 3.14159265358979323846 * t / 86400.0;
    double count = profile.base_count * (1.0 + profile.diurnal_amplitude * std::sin(day_phase));
    for (const auto& b : profile.bursts) {
      if (i >= b.start_step && i < b.start_step + b.duration_steps) count *= b.multiplier;
    }
    if (profile.noise_scale > 0.0) count += rng.normal(0.0, profile.noise_scale);
    const long n = std::max(1L, std::lround(count));
    out.push_back(TrafficPoint{std::fmod(t, 86400.0), n});
  }
  return out;
}

}  // namespace marca::env
