#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "nfloc/channel.hpp"
#include "nfloc/fisher.hpp"

namespace nfloc {

struct NoiseSigmas {
  double sigma_tau = 0.0;      // s
  double sigma_doppler = 0.0;  // Hz
};

/// Per-triple standard deviations 1/sqrt(F) from the delay and Doppler entries.
struct PerTripleSigmas {
  std::vector<double> tau;
  std::vector<double> doppler;
};

/// One scalar per measurement type: the median over triples of 1/sqrt(F).
NoiseSigmas noise_floor_from_crlb(const ChannelFim& channel_fim);
PerTripleSigmas per_triple_sigmas(const ChannelFim& channel_fim);

/// Noisy delay and Doppler observations. When the per-triple vectors are
/// non-empty they override the scalar sigmas.
struct MeasurementSet {
  TripleIndexer index;
  std::vector<double> delay_meas;    // s
  std::vector<double> doppler_meas;  // Hz
  double sigma_tau = 0.0;
  double sigma_doppler = 0.0;
  std::vector<double> sigma_tau_per_triple;
  std::vector<double> sigma_doppler_per_triple;
  std::uint64_t seed = 0;

  double tau_sigma(std::size_t t) const {
    return sigma_tau_per_triple.empty() ? sigma_tau : sigma_tau_per_triple[t];
  }
  double doppler_sigma(std::size_t t) const {
    return sigma_doppler_per_triple.empty() ? sigma_doppler : sigma_doppler_per_triple[t];
  }
};

/// Truth plus independent zero-mean Gaussian noise, one counter-based stream
/// per (seed, b, u, k, measurement type).
MeasurementSet sample(const ChannelParams& channel, const NoiseSigmas& sigmas, std::uint64_t seed);
MeasurementSet sample(const ChannelParams& channel, const PerTripleSigmas& sigmas, std::uint64_t seed);

/// Measurements equal to the truth, carrying `sigmas` as likelihood weights.
MeasurementSet noiseless(const ChannelParams& channel, const NoiseSigmas& sigmas);

/// CSV with columns b,u,k,delay_meas,doppler_meas (one-based indices).
void write_measurements_csv(std::ostream& out, const MeasurementSet& meas);

}  // namespace nfloc
