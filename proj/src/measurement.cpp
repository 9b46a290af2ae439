#include "nfloc/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "nfloc/csv.hpp"
#include "nfloc/random.hpp"

namespace nfloc {

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double upper = v[n / 2];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lower + upper);
}

enum Stream : std::uint64_t { kDelayStream = 1, kDopplerStream = 2 };

double draw(std::uint64_t seed, const TripleIndexer& ix, std::size_t t, std::uint64_t stream) {
  const std::size_t per_anchor = ix.per_anchor();
  const std::uint64_t b = t / per_anchor;
  const std::uint64_t k = (t % per_anchor) / static_cast<std::size_t>(ix.num_elements);
  const std::uint64_t u = t % static_cast<std::size_t>(ix.num_elements);
  CounterRng rng(CounterRng::derive(seed, {b, u, k, stream}));
  return rng.normal();
}

}  // namespace

PerTripleSigmas per_triple_sigmas(const ChannelFim& channel_fim) {
  PerTripleSigmas s;
  s.tau.reserve(channel_fim.entries.size());
  s.doppler.reserve(channel_fim.entries.size());
  for (const TripleFim& e : channel_fim.entries) {
    if (!(e.tau_tau > 0.0) || !(e.f_f > 0.0))
      throw ConfigurationError("noise floor: delay and Doppler FIM entries must be positive");
    s.tau.push_back(1.0 / std::sqrt(e.tau_tau));
    s.doppler.push_back(1.0 / std::sqrt(e.f_f));
  }
  return s;
}

NoiseSigmas noise_floor_from_crlb(const ChannelFim& channel_fim) {
  require(!channel_fim.entries.empty(), "noise_floor_from_crlb: empty FIM");
  const PerTripleSigmas s = per_triple_sigmas(channel_fim);
  return {median(s.tau), median(s.doppler)};
}

MeasurementSet sample(const ChannelParams& channel, const NoiseSigmas& sigmas, std::uint64_t seed) {
  require(sigmas.sigma_tau > 0.0 && sigmas.sigma_doppler > 0.0, "sample: sigmas must be positive");
  MeasurementSet m;
  m.index = channel.index;
  m.sigma_tau = sigmas.sigma_tau;
  m.sigma_doppler = sigmas.sigma_doppler;
  m.seed = seed;
  const std::size_t n = channel.delay.size();
  m.delay_meas.resize(n);
  m.doppler_meas.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    m.delay_meas[t] = channel.delay[t] + sigmas.sigma_tau * draw(seed, m.index, t, kDelayStream);
    m.doppler_meas[t] = channel.doppler_freq[t] + sigmas.sigma_doppler * draw(seed, m.index, t, kDopplerStream);
  }
  return m;
}

MeasurementSet sample(const ChannelParams& channel, const PerTripleSigmas& sigmas, std::uint64_t seed) {
  const std::size_t n = channel.delay.size();
  require(sigmas.tau.size() == n && sigmas.doppler.size() == n, "sample: one sigma pair per triple");
  for (std::size_t t = 0; t < n; ++t)
    require(sigmas.tau[t] > 0.0 && sigmas.doppler[t] > 0.0, "sample: sigmas must be positive");
  MeasurementSet m;
  m.index = channel.index;
  m.sigma_tau = median(sigmas.tau);
  m.sigma_doppler = median(sigmas.doppler);
  m.sigma_tau_per_triple = sigmas.tau;
  m.sigma_doppler_per_triple = sigmas.doppler;
  m.seed = seed;
  m.delay_meas.resize(n);
  m.doppler_meas.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    m.delay_meas[t] = channel.delay[t] + sigmas.tau[t] * draw(seed, m.index, t, kDelayStream);
    m.doppler_meas[t] = channel.doppler_freq[t] + sigmas.doppler[t] * draw(seed, m.index, t, kDopplerStream);
  }
  return m;
}

MeasurementSet noiseless(const ChannelParams& channel, const NoiseSigmas& sigmas) {
  require(sigmas.sigma_tau > 0.0 && sigmas.sigma_doppler > 0.0, "noiseless: sigmas must be positive");
  MeasurementSet m;
  m.index = channel.index;
  m.delay_meas = channel.delay;
  m.doppler_meas = channel.doppler_freq;
  m.sigma_tau = sigmas.sigma_tau;
  m.sigma_doppler = sigmas.sigma_doppler;
  return m;
}

void write_measurements_csv(std::ostream& out, const MeasurementSet& meas) {
  out << "# nfloc measurements v1\n";
  out << "b,u,k,delay_meas,doppler_meas\n";
  const TripleIndexer& ix = meas.index;
  for (int b = 0; b < ix.num_anchors; ++b)
    for (int k = 0; k < ix.num_slots; ++k)
      for (int u = 0; u < ix.num_elements; ++u) {
        const std::size_t t = ix(b, u, k);
        out << b + 1 << ',' << u + 1 << ',' << k + 1 << ',' << format_double(meas.delay_meas[t]) << ','
            << format_double(meas.doppler_meas[t]) << '\n';
      }
}

}  // namespace nfloc
