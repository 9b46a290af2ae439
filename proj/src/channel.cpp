#include "nfloc/channel.hpp"

#include <cmath>
#include <sstream>

namespace nfloc {

double delay(const GeometryTable& geometry, std::span<const double> clock_offsets, int b, int u, int k) {
  require(b >= 0 && b < geometry.index.num_anchors, "delay: anchor index out of range");
  require(static_cast<int>(clock_offsets.size()) == geometry.index.num_anchors,
          "delay: one clock offset per anchor");
  return geometry.distance[geometry.index(b, u, k)] / kSpeedOfLight + clock_offsets[static_cast<std::size_t>(b)];
}

double doppler_shift(const GeometryTable& geometry, int b, int u, int k) {
  const std::size_t t = geometry.index(b, u, k);
  require(t < geometry.distance.size(), "doppler_shift: index out of range");
  return geometry.rel_velocity[t].dot(geometry.unit_dir[t]) / kSpeedOfLight;
}

double doppler_frequency(const Waveform& w, double shift, double freq_offset) {
  return w.carrier_frequency * (1.0 - shift) + freq_offset;
}

double friis_gain(double wavelength, double distance, double pathloss_exponent) {
  if (!(distance > kMinDistance)) {
    std::ostringstream os;
    os << "friis_gain: distance " << distance << " m is below the degenerate threshold";
    throw DegenerateGeometry(os.str());
  }
  return wavelength * std::pow(distance, -pathloss_exponent) / (4.0 * kPi);
}

ChannelParams compute_channel(const Scenario& scenario, const GeometryTable& geometry,
                              std::span<const double> clock_offsets,
                              std::span<const double> frequency_offsets) {
  const TripleIndexer& ix = geometry.index;
  require(static_cast<int>(clock_offsets.size()) == ix.num_anchors &&
              static_cast<int>(frequency_offsets.size()) == ix.num_anchors,
          "compute_channel: one offset pair per anchor");
  ChannelParams ch;
  ch.index = ix;
  ch.carrier_frequency = scenario.waveform.carrier_frequency;
  ch.wavelength = scenario.waveform.wavelength();
  ch.noise_psd = scenario.noise_psd;
  ch.pathloss_exponent = scenario.pathloss_exponent;
  ch.clock_offset.assign(clock_offsets.begin(), clock_offsets.end());
  ch.frequency_offset.assign(frequency_offsets.begin(), frequency_offsets.end());
  const std::size_t n = ix.size();
  ch.delay.resize(n);
  ch.doppler_freq.resize(n);
  ch.doppler_shift.resize(n);
  ch.gain.resize(n);
  for (int b = 0; b < ix.num_anchors; ++b) {
    for (int k = 0; k < ix.num_slots; ++k) {
      for (int u = 0; u < ix.num_elements; ++u) {
        const std::size_t t = ix(b, u, k);
        ch.delay[t] = delay(geometry, clock_offsets, b, u, k);
        ch.doppler_shift[t] = doppler_shift(geometry, b, u, k);
        ch.doppler_freq[t] = doppler_frequency(scenario.waveform, ch.doppler_shift[t],
                                               frequency_offsets[static_cast<std::size_t>(b)]);
        ch.gain[t] = friis_gain(ch.wavelength, geometry.distance[t], scenario.pathloss_exponent);
      }
    }
  }
  return ch;
}

ChannelParams compute_channel(const Scenario& scenario) {
  const GeometryTable geometry = build_geometry(scenario.anchors, scenario.receiver, scenario.array, scenario.slots);
  std::vector<double> clock, freq;
  for (const Anchor& a : scenario.anchors) {
    clock.push_back(a.clock_offset);
    freq.push_back(a.frequency_offset);
  }
  return compute_channel(scenario, geometry, clock, freq);
}

double gradient_offset(const ArraySpec& array, double wavelength, int u, OffsetConvention convention) {
  if (convention == OffsetConvention::kFirstElement) return u * wavelength / 2.0;
  return array.offset(u);
}

TripleGradient triple_gradient(const GeometryTable& geometry, std::size_t t, double elapsed, double offset,
                               double carrier_frequency, double wavelength, double pathloss_exponent) {
  const Vec3& dir = geometry.unit_dir[t];
  const Vec3& w = geometry.rel_velocity[t];
  const double d = geometry.distance[t];
  const Mat3 proj = Mat3::Identity() - dir * dir.transpose();
  const double fc_c = carrier_frequency / kSpeedOfLight;

  TripleGradient g;
  // Derivatives with respect to the element position; p, v and s enter the
  // element position with factors 1, elapsed and offset.
  const Vec3 tau_e = -dir / kSpeedOfLight;
  const Vec3 f_e = fc_c * proj * w / d;
  const Vec3 beta_e = pathloss_exponent * wavelength * std::pow(d, -pathloss_exponent - 1.0) * dir / (4.0 * kPi);

  g.tau_p = tau_e;
  g.tau_v = elapsed * tau_e;
  g.tau_s = offset * tau_e;
  g.f_p = f_e;
  g.f_v = fc_c * dir + elapsed * f_e;  // receiver velocity also enters the relative velocity
  g.f_s = offset * f_e;
  g.beta_p = beta_e;
  g.beta_v = elapsed * beta_e;
  g.beta_s = offset * beta_e;
  return g;
}

double calibrate_noise_psd(const Scenario& scenario, const GeometryTable& geometry, double energy,
                           double snr_linear) {
  require(energy > 0.0 && snr_linear > 0.0, "calibrate_noise_psd: energy and SNR must be positive");
  const int u_ref = scenario.array.reference_index;
  double mean_sq = 0.0;
  for (int b = 0; b < geometry.index.num_anchors; ++b) {
    const double g = friis_gain(scenario.waveform.wavelength(), geometry.distance[geometry.index(b, u_ref, 0)],
                                scenario.pathloss_exponent);
    mean_sq += g * g;
  }
  mean_sq /= geometry.index.num_anchors;
  return noise_psd_for_snr(energy, std::sqrt(mean_sq), snr_linear);
}

}  // namespace nfloc
