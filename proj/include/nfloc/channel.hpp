#pragma once

#include <span>
#include <vector>

#include "nfloc/scenario.hpp"
#include "nfloc/waveform.hpp"

namespace nfloc {

/// Noiseless delay, Doppler frequency and gain for every (anchor, element, slot)
/// triple, flat-indexed by `index`.
struct ChannelParams {
  TripleIndexer index;
  std::vector<double> delay;          // s
  std::vector<double> doppler_freq;   // Hz
  std::vector<double> doppler_shift;  // dimensionless
  std::vector<double> gain;           // dimensionless, real and positive
  std::vector<double> clock_offset;      // per anchor, s
  std::vector<double> frequency_offset;  // per anchor, Hz
  double carrier_frequency = 0.0;
  double wavelength = 0.0;
  double noise_psd = 1.0;
  double pathloss_exponent = 1.0;
};

double delay(const GeometryTable& geometry, std::span<const double> clock_offsets, int b, int u, int k);
double doppler_shift(const GeometryTable& geometry, int b, int u, int k);
double doppler_frequency(const Waveform& w, double shift, double freq_offset);

/// lambda * d^-alpha / (4 pi).
double friis_gain(double wavelength, double distance, double pathloss_exponent = 1.0);

/// Channel parameters for a receiver state and per-anchor offsets, with
/// anchors, array, slots and carrier taken from `scenario`.
ChannelParams compute_channel(const Scenario& scenario, const GeometryTable& geometry,
                              std::span<const double> clock_offsets,
                              std::span<const double> frequency_offsets);

/// Channel parameters at the scenario's true state and true offsets.
ChannelParams compute_channel(const Scenario& scenario);

/// Element offset along the array axis used by the derivative formulas.
enum class OffsetConvention {
  kModel,         // (u - U) * d_a, the offset the channel model evaluates
  kFirstElement,  // (u - 1) * lambda / 2 with one-based u
};

double gradient_offset(const ArraySpec& array, double wavelength, int u, OffsetConvention convention);

/// Gradients of the delay, Doppler frequency and gain of one triple with respect
/// to the reference position, receiver velocity and (unconstrained) orientation.
struct TripleGradient {
  Vec3 tau_p, tau_v, tau_s;
  Vec3 f_p, f_v, f_s;
  Vec3 beta_p, beta_v, beta_s;
};

TripleGradient triple_gradient(const GeometryTable& geometry, std::size_t t, double elapsed, double offset,
                               double carrier_frequency, double wavelength, double pathloss_exponent);

/// Mean received-energy calibration: returns N_o such that the mean over
/// anchors of |gain at the reference element, first slot|^2 * E_S / N_o equals
/// `snr_linear`.
double calibrate_noise_psd(const Scenario& scenario, const GeometryTable& geometry, double energy,
                           double snr_linear);

}  // namespace nfloc
