#pragma once

#include <cstdint>

#include "nfloc/config.hpp"

namespace nfloc::fixtures {

// Small default scenario for fast unit tests.
inline ScenarioConfig small_config(std::uint64_t seed, int anchors = 5, int elements = 8, int slots = 2,
                                   double carrier = 10e9) {
  ScenarioConfig c;
  c.seed = seed;
  c.num_anchors = anchors;
  c.num_elements = elements;
  c.num_slots = slots;
  c.carrier_frequency = carrier;
  return c;
}

inline BuiltScenario small_scenario(std::uint64_t seed, int anchors = 5, int elements = 8, int slots = 2,
                                    double carrier = 10e9) {
  return build_scenario(small_config(seed, anchors, elements, slots, carrier));
}

}  // namespace nfloc::fixtures
