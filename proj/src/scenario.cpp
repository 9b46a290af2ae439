#include "nfloc/scenario.hpp"

#include <cmath>
#include <sstream>

#include "nfloc/random.hpp"

namespace nfloc {

void ArraySpec::validate() const {
  if (num_elements < 2) throw ConfigurationError("array: need at least 2 elements");
  if (!(element_spacing > 0.0)) throw ConfigurationError("array: element spacing must be positive");
  if (reference_index < 0 || reference_index >= num_elements)
    throw ConfigurationError("array: reference index out of range");
}

void SlotPlan::validate() const {
  if (num_slots < 1) throw ConfigurationError("slots: need at least one slot");
  if (!(slot_spacing > 0.0)) throw ConfigurationError("slots: slot spacing must be positive");
}

void Scenario::validate() const {
  array.validate();
  slots.validate();
  waveform.validate();
  if (anchors.empty()) throw ConfigurationError("scenario: no anchors");
  for (const Anchor& a : anchors) {
    if (static_cast<int>(a.velocity_per_slot.size()) != slots.num_slots)
      throw ConfigurationError("scenario: anchor velocity list length must equal the number of slots");
  }
  if (std::abs(receiver.orientation.norm() - 1.0) > 1e-12)
    throw ConfigurationError("scenario: receiver orientation must be a unit vector");
  if (!(noise_psd > 0.0)) throw ConfigurationError("scenario: noise PSD must be positive");
  if (!(pathloss_exponent > 0.0)) throw ConfigurationError("scenario: path-loss exponent must be positive");
}

Vec3 element_position(const MotionState& receiver, const ArraySpec& array, const SlotPlan& plan, int u,
                      int k) {
  if (u < 0 || u >= array.num_elements || k < 0 || k >= plan.num_slots) {
    std::ostringstream os;
    os << "element_position: index (u=" << u << ", k=" << k << ") out of range";
    throw ContractViolation(os.str());
  }
  return receiver.position0 + plan.elapsed(k) * receiver.velocity + array.offset(u) * receiver.orientation;
}

GeometryTable build_geometry(std::span<const Anchor> anchors, const MotionState& receiver,
                             const ArraySpec& array, const SlotPlan& plan) {
  GeometryTable g;
  g.index = {static_cast<int>(anchors.size()), array.num_elements, plan.num_slots};
  const int nb = g.index.num_anchors, nu = g.index.num_elements, nk = g.index.num_slots;

  g.element_position.resize(static_cast<std::size_t>(nu) * nk);
  for (int k = 0; k < nk; ++k)
    for (int u = 0; u < nu; ++u)
      g.element_position[g.index.element_slot(u, k)] = element_position(receiver, array, plan, u, k);

  g.anchor_position.resize(static_cast<std::size_t>(nb) * nk);
  g.anchor_velocity.resize(g.anchor_position.size());
  for (int b = 0; b < nb; ++b) {
    const Anchor& a = anchors[static_cast<std::size_t>(b)];
    if (static_cast<int>(a.velocity_per_slot.size()) != nk)
      throw ContractViolation("build_geometry: anchor velocity list length must equal the number of slots");
    for (int k = 0; k < nk; ++k) {
      g.anchor_position[g.index.anchor_slot(b, k)] = a.position(k, plan.slot_spacing);
      g.anchor_velocity[g.index.anchor_slot(b, k)] = a.velocity_per_slot[static_cast<std::size_t>(k)];
    }
  }

  const std::size_t n = g.index.size();
  g.distance.resize(n);
  g.unit_dir.resize(n);
  g.displacement.resize(n);
  g.rel_velocity.resize(n);
  for (int b = 0; b < nb; ++b) {
    for (int k = 0; k < nk; ++k) {
      const Vec3& ap = g.anchor_position[g.index.anchor_slot(b, k)];
      const Vec3 rel_v = g.anchor_velocity[g.index.anchor_slot(b, k)] - receiver.velocity;
      for (int u = 0; u < nu; ++u) {
        const std::size_t t = g.index(b, u, k);
        const Vec3 disp = ap - g.element_position[g.index.element_slot(u, k)];
        const double d = disp.norm();
        if (!(d >= kMinDistance)) {
          std::ostringstream os;
          os << "build_geometry: anchor " << b << " coincides with element " << u << " at slot " << k
             << " (distance " << d << " m)";
          throw DegenerateGeometry(os.str());
        }
        g.displacement[t] = disp;
        g.distance[t] = d;
        g.unit_dir[t] = disp / d;
        g.rel_velocity[t] = rel_v;
      }
    }
  }
  return g;
}

bool inside_fresnel_region(double distance, double aperture, double wavelength) {
  const double lower = 0.62 * std::sqrt(std::pow(aperture, 3) / wavelength);
  const double upper = 2.0 * aperture * aperture / wavelength;
  return lower < distance && distance < upper;
}

FresnelReport fresnel_check(const ArraySpec& array, double wavelength, const GeometryTable& geometry) {
  require(wavelength > 0.0, "fresnel_check: wavelength must be positive");
  FresnelReport r;
  r.aperture = array.aperture();
  r.lower_bound = 0.62 * std::sqrt(std::pow(r.aperture, 3) / wavelength);
  r.upper_bound = 2.0 * r.aperture * r.aperture / wavelength;
  r.inside.resize(geometry.distance.size());
  std::size_t count = 0;
  for (std::size_t t = 0; t < geometry.distance.size(); ++t) {
    const double d = geometry.distance[t];
    r.inside[t] = r.lower_bound < d && d < r.upper_bound;
    count += r.inside[t] ? 1 : 0;
  }
  r.fraction_inside = r.inside.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(r.inside.size());
  return r;
}

Vec3 random_unit_vector(std::uint64_t seed, std::uint64_t stream) {
  CounterRng rng(CounterRng::derive(seed, {0x756e6974ULL, stream}));
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-9);
  return v.normalized();
}

std::vector<Anchor> sample_anchors(const AnchorPlacement& placement, int num_slots, std::uint64_t seed,
                                   const std::function<bool(const Vec3&)>& accept) {
  if (placement.count < 1) throw ConfigurationError("anchors: count must be positive");
  if (!(placement.radius > placement.min_distance))
    throw ConfigurationError("anchors: radius must exceed the minimum distance");
  const Vec3 shared_direction = random_unit_vector(seed, 0xd1ec7ULL);
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<std::size_t>(placement.count));
  for (int b = 0; b < placement.count; ++b) {
    CounterRng rng(CounterRng::derive(seed, {0x616e63ULL, static_cast<std::uint64_t>(b)}));
    Vec3 offset;
    int attempts = 0;
    do {
      if (++attempts > 100000) throw ConfigurationError("anchors: placement constraints cannot be satisfied");
      offset = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)) * placement.radius;
    } while (offset.norm() > placement.radius || offset.norm() < placement.min_distance ||
             (accept && !accept(placement.center + offset)));
    Anchor a;
    a.initial_position = placement.center + offset;
    const Vec3 base_dir = placement.velocity_mode == AnchorVelocityMode::kSameDirection
                              ? shared_direction
                              : random_unit_vector(seed, 0x10000ULL + static_cast<std::uint64_t>(b));
    for (int k = 0; k < num_slots; ++k) {
      Vec3 dir = base_dir;
      if (placement.velocity_mode == AnchorVelocityMode::kDistinct && k > 0)
        dir = random_unit_vector(seed, 0x20000ULL + static_cast<std::uint64_t>(b) * 1024 + static_cast<std::uint64_t>(k));
      a.velocity_per_slot.push_back(placement.speed * dir);
    }
    a.clock_offset = rng.normal(0.0, placement.clock_offset_sd);
    a.frequency_offset = rng.normal(0.0, placement.frequency_offset_sd);
    anchors.push_back(std::move(a));
  }
  return anchors;
}

}  // namespace nfloc
