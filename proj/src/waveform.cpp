#include "nfloc/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace nfloc {

Waveform Waveform::raised_cosine(double rolloff, double bandwidth, double carrier_frequency) {
  Waveform w;
  w.kind = PulseKind::kRaisedCosine;
  w.rolloff = rolloff;
  w.zero_crossing_time = (1.0 + rolloff) / bandwidth;
  w.carrier_frequency = carrier_frequency;
  w.validate();
  return w;
}

Waveform Waveform::tabulated(std::vector<double> times, std::vector<double> values,
                             double carrier_frequency) {
  Waveform w;
  w.kind = PulseKind::kTabulated;
  w.sample_times = std::move(times);
  w.sample_values = std::move(values);
  w.carrier_frequency = carrier_frequency;
  w.rolloff = 0.0;
  w.zero_crossing_time = 0.0;
  w.validate();
  return w;
}

void Waveform::validate() const {
  if (!(carrier_frequency > 0.0)) throw ConfigurationError("waveform: carrier frequency must be positive");
  if (!(amplitude > 0.0)) throw ConfigurationError("waveform: amplitude must be positive");
  if (kind == PulseKind::kRaisedCosine) {
    if (!(rolloff >= 0.0 && rolloff <= 1.0)) throw ConfigurationError("waveform: rolloff must lie in [0, 1]");
    if (!(zero_crossing_time > 0.0)) throw ConfigurationError("waveform: zero-crossing time must be positive");
  } else {
    if (sample_times.size() != sample_values.size() || sample_times.size() < 3)
      throw ConfigurationError("waveform: tabulated pulse needs >= 3 matching samples");
    if (!std::is_sorted(sample_times.begin(), sample_times.end()) ||
        std::adjacent_find(sample_times.begin(), sample_times.end()) != sample_times.end())
      throw ConfigurationError("waveform: sample times must be strictly increasing");
  }
}

double raised_cosine_pulse(const Waveform& w, double t) {
  const double ts = w.zero_crossing_time;
  const double beta = w.rolloff;
  const double x = t / ts;
  const double sinc = (x == 0.0) ? 1.0 : std::sin(kPi * x) / (kPi * x);
  if (beta == 0.0) return w.amplitude * sinc;
  const double q = 2.0 * beta * x;
  const double denom = 1.0 - q * q;
  if (std::abs(denom) < 1e-9) {
    const double xe = 1.0 / (2.0 * beta);
    return w.amplitude * (kPi / 4.0) * std::sin(kPi * xe) / (kPi * xe);
  }
  return w.amplitude * sinc * std::cos(kPi * beta * x) / denom;
}

double raised_cosine_spectrum(const Waveform& w, double f) {
  const double ts = w.zero_crossing_time;
  const double beta = w.rolloff;
  const double af = std::abs(f);
  const double lo = (1.0 - beta) / (2.0 * ts);
  const double hi = (1.0 + beta) / (2.0 * ts);
  if (af <= lo) return w.amplitude * ts;
  if (af > hi) return 0.0;
  return w.amplitude * 0.5 * ts * (1.0 + std::cos(kPi * ts / beta * (af - lo)));
}

double Waveform::pulse(double t) const {
  if (kind == PulseKind::kRaisedCosine) return raised_cosine_pulse(*this, t);
  if (t < sample_times.front() || t > sample_times.back()) return 0.0;
  const auto it = std::upper_bound(sample_times.begin(), sample_times.end(), t);
  if (it == sample_times.end()) return amplitude * sample_values.back();
  const std::size_t i = static_cast<std::size_t>(it - sample_times.begin());
  const double t0 = sample_times[i - 1], t1 = sample_times[i];
  const double a = (t - t0) / (t1 - t0);
  return amplitude * ((1.0 - a) * sample_values[i - 1] + a * sample_values[i]);
}

namespace {

struct SimpsonPanel {
  double a, b, fa, fm, fb, whole;
};

void simpson_recurse(const std::function<double(double)>& f, const SimpsonPanel& p, double tol,
                     int depth, IntegralEstimate& acc) {
  const double m = 0.5 * (p.a + p.b);
  const double lm = 0.5 * (p.a + m);
  const double rm = 0.5 * (m + p.b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
  const double right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
  const double delta = left + right - p.whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    acc.value += left + right + delta / 15.0;
    acc.error += std::abs(delta) / 15.0;
    return;
  }
  simpson_recurse(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tol, depth - 1, acc);
  simpson_recurse(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth - 1, acc);
}

// Sum of |f| sampled coarsely, used to turn a relative tolerance into an
// absolute one for integrands that may integrate to zero.
double magnitude_scale(const std::function<double(double)>& f, double a, double b) {
  constexpr int n = 64;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) s += std::abs(f(a + (b - a) * i / n));
  return s * (b - a) / n;
}

IntegralEstimate integrate_pieces(const std::function<double(double)>& f,
                                  const std::vector<double>& edges, double rel_tol, int depth) {
  double scale = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) scale += magnitude_scale(f, edges[i], edges[i + 1]);
  const double tol = std::max(rel_tol * scale, std::numeric_limits<double>::min());
  IntegralEstimate total;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (edges[i + 1] <= edges[i]) continue;
    const double piece_tol = tol * (edges[i + 1] - edges[i]) / (edges.back() - edges.front());
    const double a = edges[i], b = edges[i + 1];
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    IntegralEstimate acc;
    simpson_recurse(f, {a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb)}, piece_tol, depth, acc);
    total.value += acc.value;
    total.error += acc.error;
  }
  return total;
}

void check_accuracy(const char* name, double error, double scale, double acceptance) {
  if (!(error <= acceptance * scale)) {
    std::ostringstream os;
    os << "quadrature for " << name << " did not converge: error estimate " << error
       << " exceeds " << acceptance << " x scale " << scale;
    throw NumericalIntegrationError(os.str());
  }
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y, std::size_t stride) {
  double s = 0.0;
  std::size_t i = 0;
  for (; i + stride < x.size(); i += stride) s += 0.5 * (x[i + stride] - x[i]) * (y[i] + y[i + stride]);
  return s;
}

// Trapezoid with a Richardson-style error estimate from the half-resolution grid.
IntegralEstimate trapezoid_estimate(const std::vector<double>& x, const std::vector<double>& y) {
  IntegralEstimate r;
  r.value = trapezoid(x, y, 1);
  if ((x.size() - 1) % 2 == 0) r.error = std::abs(r.value - trapezoid(x, y, 2)) / 3.0;
  return r;
}

WaveformStats raised_cosine_stats(const Waveform& w, const QuadratureSettings& q) {
  const double ts = w.zero_crossing_time;
  const double beta = w.rolloff;
  const double lo = (1.0 - beta) / (2.0 * ts);
  const double hi = (1.0 + beta) / (2.0 * ts);
  const std::vector<double> fedges{-hi, -lo, lo, hi};

  auto spec2 = [&](double f) {
    const double s = raised_cosine_spectrum(w, f);
    return s * s;
  };
  const IntegralEstimate ef = integrate_pieces(spec2, fedges, q.rel_tol, q.max_depth);
  const IntegralEstimate m1 = integrate_pieces([&](double f) { return f * spec2(f); }, fedges, q.rel_tol, q.max_depth);
  const IntegralEstimate m2 =
      integrate_pieces([&](double f) { return f * f * spec2(f); }, fedges, q.rel_tol, q.max_depth);

  // Time-domain integrals over [-L, L], split into half-period panels.
  const double span = q.truncation * ts;
  std::vector<double> tedges;
  const int panels = static_cast<int>(std::ceil(2.0 * q.truncation * 2.0));
  for (int i = 0; i <= panels; ++i) tedges.push_back(-span + 2.0 * span * i / panels);
  auto s2 = [&](double t) {
    const double s = raised_cosine_pulse(w, t);
    return s * s;
  };
  const IntegralEstimate et = integrate_pieces(s2, tedges, q.rel_tol, q.max_depth);
  const IntegralEstimate g = integrate_pieces([&](double t) { return t * s2(t); }, tedges, q.rel_tol, q.max_depth);
  const IntegralEstimate m2t =
      integrate_pieces([&](double t) { return t * t * s2(t); }, tedges, q.rel_tol, q.max_depth);

  // Envelope bound |s(t)| <= C / |t|^3 beyond the truncation point bounds the
  // discarded tails of each moment.
  double tail_energy = std::numeric_limits<double>::infinity();
  double tail_first = std::numeric_limits<double>::infinity();
  double tail_second = std::numeric_limits<double>::infinity();
  if (beta > 0.0 && span > ts / (2.0 * beta)) {
    const double g2 = 1.0 - std::pow(ts / (2.0 * beta * span), 2);
    const double c2 = std::pow(w.amplitude, 2) * std::pow(ts, 6) / (16.0 * kPi * kPi * std::pow(beta, 4) * g2 * g2);
    tail_energy = 2.0 * c2 / (5.0 * std::pow(span, 5));
    tail_first = 2.0 * c2 / (4.0 * std::pow(span, 4));
    tail_second = 2.0 * c2 / (3.0 * std::pow(span, 3));
  }

  WaveformStats st;
  st.spectral_energy = ef.value;
  st.energy = et.value;
  st.energy_error = et.error + tail_energy;
  st.effective_bandwidth = std::sqrt(m2.value / ef.value);
  st.effective_bandwidth_error = 0.5 * st.effective_bandwidth * (m2.error / m2.value + ef.error / ef.value);
  st.baseband_carrier_correlation = m1.value / (std::sqrt(m2.value) * std::sqrt(ef.value));
  st.baseband_carrier_correlation_error =
      m1.error / (std::sqrt(m2.value) * std::sqrt(ef.value)) +
      std::abs(st.baseband_carrier_correlation) * 0.5 * (m2.error / m2.value + ef.error / ef.value);
  st.effective_duration = std::sqrt(m2t.value / et.value);
  st.effective_duration_error =
      0.5 * st.effective_duration * ((m2t.error + tail_second) / m2t.value + st.energy_error / et.value);
  st.temporal_centroid = g.value;
  st.temporal_centroid_error = g.error + tail_first;
  // integral of s s' over [-L, L] is exactly the boundary term.
  const double sl = raised_cosine_pulse(w, span);
  const double sr = raised_cosine_pulse(w, -span);
  st.derivative_correlation = 0.5 * (sl * sl - sr * sr);
  // The untruncated boundary term is bounded by the envelope at the cut.
  st.derivative_correlation_error = std::isfinite(tail_energy) ? 0.5 * std::max(sl * sl, sr * sr) : tail_energy;

  const double t_scale = st.energy * ts;
  check_accuracy("energy", st.energy_error, st.energy, q.acceptance);
  check_accuracy("effective bandwidth", st.effective_bandwidth_error, st.effective_bandwidth, q.acceptance);
  check_accuracy("baseband-carrier correlation", st.baseband_carrier_correlation_error, 1.0, q.acceptance);
  check_accuracy("effective duration", st.effective_duration_error, st.effective_duration, q.acceptance);
  check_accuracy("temporal centroid", st.temporal_centroid_error, t_scale, q.acceptance);
  check_accuracy("derivative correlation", st.derivative_correlation_error,
                 w.amplitude * w.amplitude, q.acceptance);
  return st;
}

WaveformStats tabulated_stats(const Waveform& w, const QuadratureSettings& q) {
  const auto& t = w.sample_times;
  const std::size_t n = t.size();
  std::vector<double> s(n), ds(n), e(n), te(n), tte(n), dd(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = w.amplitude * w.sample_values[i];
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) ds[i] = (s[1] - s[0]) / (t[1] - t[0]);
    else if (i == n - 1) ds[i] = (s[n - 1] - s[n - 2]) / (t[n - 1] - t[n - 2]);
    else ds[i] = (s[i + 1] - s[i - 1]) / (t[i + 1] - t[i - 1]);
    e[i] = s[i] * s[i];
    te[i] = t[i] * e[i];
    tte[i] = t[i] * t[i] * e[i];
    dd[i] = ds[i] * ds[i];
  }
  const IntegralEstimate energy = trapezoid_estimate(t, e);
  const IntegralEstimate first = trapezoid_estimate(t, te);
  const IntegralEstimate second = trapezoid_estimate(t, tte);
  const IntegralEstimate slope = trapezoid_estimate(t, dd);

  WaveformStats st;
  st.energy = energy.value;
  st.energy_error = energy.error;
  // Parseval: integral f^2 |S|^2 df = integral |s'|^2 dt / (4 pi^2).
  st.spectral_energy = energy.value;
  st.effective_bandwidth = std::sqrt(slope.value / (4.0 * kPi * kPi) / energy.value);
  st.effective_bandwidth_error =
      0.5 * st.effective_bandwidth * (slope.error / slope.value + energy.error / energy.value);
  // A real pulse has an even power spectrum, so the first spectral moment vanishes.
  st.baseband_carrier_correlation = 0.0;
  st.effective_duration = std::sqrt(second.value / energy.value);
  st.effective_duration_error =
      0.5 * st.effective_duration * (second.error / second.value + energy.error / energy.value);
  st.temporal_centroid = first.value;
  st.temporal_centroid_error = first.error;
  st.derivative_correlation = 0.5 * (s.back() * s.back() - s.front() * s.front());
  check_accuracy("energy", st.energy_error, st.energy, q.acceptance);
  check_accuracy("effective bandwidth", st.effective_bandwidth_error, st.effective_bandwidth, q.acceptance);
  check_accuracy("effective duration", st.effective_duration_error, st.effective_duration, q.acceptance);
  return st;
}

}  // namespace

IntegralEstimate adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                  double rel_tol, int max_depth) {
  return integrate_pieces(f, {a, b}, rel_tol, max_depth);
}

WaveformStats compute_stats(const Waveform& w, const QuadratureSettings& settings) {
  w.validate();
  return w.kind == PulseKind::kRaisedCosine ? raised_cosine_stats(w, settings) : tabulated_stats(w, settings);
}

double snr_from_energy(double spectral_energy, double gain, double noise_psd) {
  require(noise_psd > 0.0, "snr: noise PSD must be positive");
  return gain * gain * spectral_energy / noise_psd;
}

double snr(const Waveform& w, double gain, double noise_psd) {
  require(noise_psd > 0.0, "snr: noise PSD must be positive");
  if (w.kind == PulseKind::kRaisedCosine) {
    const double ts = w.zero_crossing_time;
    const double lo = (1.0 - w.rolloff) / (2.0 * ts);
    const double hi = (1.0 + w.rolloff) / (2.0 * ts);
    const IntegralEstimate e = integrate_pieces(
        [&](double f) { return std::pow(raised_cosine_spectrum(w, f), 2); }, {-hi, -lo, lo, hi}, 1e-12, 48);
    return snr_from_energy(e.value, gain, noise_psd);
  }
  return snr_from_energy(compute_stats(w).spectral_energy, gain, noise_psd);
}

double noise_psd_for_snr(double spectral_energy, double gain, double snr_linear) {
  require(snr_linear > 0.0, "noise_psd_for_snr: SNR must be positive");
  return gain * gain * spectral_energy / snr_linear;
}

}  // namespace nfloc
