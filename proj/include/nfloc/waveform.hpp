#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "nfloc/common.hpp"

namespace nfloc {

enum class PulseKind { kRaisedCosine, kTabulated };

/// Transmitted baseband pulse plus the carrier it is modulated onto.
///
/// For `kRaisedCosine` the pulse is the closed-form raised cosine with rolloff
/// `rolloff` and zero-crossing time `zero_crossing_time`, scaled by `amplitude`.
/// For `kTabulated` the pulse is the sampled sequence (`sample_times`,
/// `sample_values`) and spectral quantities are derived in the time domain.
struct Waveform {
  PulseKind kind = PulseKind::kRaisedCosine;
  double rolloff = 0.25;
  double zero_crossing_time = 2.5e-9;  // s
  double carrier_frequency = 1e10;     // Hz
  double amplitude = 1.0;
  std::vector<double> sample_times;
  std::vector<double> sample_values;

  static Waveform raised_cosine(double rolloff, double bandwidth, double carrier_frequency);
  static Waveform tabulated(std::vector<double> times, std::vector<double> values,
                            double carrier_frequency);

  double bandwidth() const { return (1.0 + rolloff) / zero_crossing_time; }
  double wavelength() const { return kSpeedOfLight / carrier_frequency; }

  /// Baseband pulse s(t).
  double pulse(double t) const;

  void validate() const;
};

/// Closed-form raised-cosine spectrum S(f) (three-branch form).
double raised_cosine_spectrum(const Waveform& w, double f);

/// Raised-cosine pulse, including the removable singularities at t = 0 and
/// t = +-T_s / (2 beta).
double raised_cosine_pulse(const Waveform& w, double t);

struct QuadratureSettings {
  double rel_tol = 1e-11;
  int max_depth = 48;
  /// Time-domain integrals run over [-truncation * T_s, truncation * T_s].
  double truncation = 50.0;
  /// An integral whose relative error estimate exceeds this is rejected.
  double acceptance = 1e-3;
};

struct IntegralEstimate {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive Simpson quadrature with a Richardson error estimate.
IntegralEstimate adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                  double rel_tol, int max_depth);

struct WaveformStats {
  double energy = 0.0;                        // E_S, J
  double effective_bandwidth = 0.0;           // alpha_1, Hz
  double baseband_carrier_correlation = 0.0;  // alpha_2
  double effective_duration = 0.0;            // sigma, s
  double temporal_centroid = 0.0;             // gamma, s*J
  double derivative_correlation = 0.0;        // epsilon

  // Error estimates, same units as the corresponding value.
  double energy_error = 0.0;
  double effective_bandwidth_error = 0.0;
  double baseband_carrier_correlation_error = 0.0;
  double effective_duration_error = 0.0;
  double temporal_centroid_error = 0.0;
  double derivative_correlation_error = 0.0;

  /// Frequency-domain energy, kept for the Parseval cross-check.
  double spectral_energy = 0.0;
};

/// Spectral (alpha_1, alpha_2) and temporal (sigma, gamma, epsilon) waveform
/// parameters. Throws NumericalIntegrationError when an error estimate is above
/// `settings.acceptance` relative to the quantity's scale.
WaveformStats compute_stats(const Waveform& w, const QuadratureSettings& settings = {});

/// |gain|^2 * integral |S(f)|^2 df / N_o.
double snr(const Waveform& w, double gain, double noise_psd);
double snr_from_energy(double spectral_energy, double gain, double noise_psd);

/// Noise PSD that makes `gain` produce the requested linear SNR.
double noise_psd_for_snr(double spectral_energy, double gain, double snr_linear);

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace nfloc
