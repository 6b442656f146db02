#include "drivesense/time_sync.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "drivesense/calendar.hpp"
#include "drivesense/error.hpp"

namespace drivesense::sync {

ClockModel estimate_clock_model(std::span<const ClockAnchor> anchors) {
  std::set<double> distinct;
  for (const auto& a : anchors) distinct.insert(a.t_unit);
  if (anchors.size() < 2 || distinct.size() < 2) {
    throw Error(ErrorCode::InsufficientAnchors,
                "need at least 2 anchors with distinct unit times, got " + std::to_string(anchors.size()));
  }
  // Fit (t_unit - t_gps) = offset + drift * t_gps; avoids cancellation in (1 + drift).
  const double n = static_cast<double>(anchors.size());
  double mean_g = 0.0, mean_d = 0.0;
  for (const auto& a : anchors) {
    mean_g += a.t_gps;
    mean_d += a.t_unit - a.t_gps;
  }
  mean_g /= n;
  mean_d /= n;
  double sgg = 0.0, sgd = 0.0;
  for (const auto& a : anchors) {
    const double dg = a.t_gps - mean_g;
    sgg += dg * dg;
    sgd += dg * ((a.t_unit - a.t_gps) - mean_d);
  }
  if (!(sgg > 0.0)) throw Error(ErrorCode::DegenerateFit, "all anchors share one GPS instant");
  const double drift = sgd / sgg;
  ClockModel m;
  m.offset_s = mean_d - drift * mean_g;
  m.drift_ppm = drift * 1e6;
  m.n_anchors = anchors.size();
  if (!(std::fabs(m.drift_ppm) < kMaxDriftPpm)) {
    throw Error(ErrorCode::DegenerateFit, "fitted drift " + std::to_string(m.drift_ppm) + " ppm is implausible");
  }
  double ss = 0.0;
  for (const auto& a : anchors) {
    const double r = a.t_unit - to_unit_time(m, a.t_gps);
    ss += r * r;
  }
  m.rms_residual_s = std::sqrt(ss / n);
  return m;
}

std::vector<ClockAnchor> anchors_from_rmc(std::span<const GnssFix> fixes, std::int64_t epoch_utc) {
  std::vector<ClockAnchor> out;
  for (const auto& f : fixes) {
    if (f.sentence != SentenceKind::Rmc || !f.utc_date || !f.utc_time_of_day_s) continue;
    if (f.quality == FixQuality::NoFix) continue;
    const double t_gps = static_cast<double>(calendar::unix_of(*f.utc_date) - epoch_utc) + *f.utc_time_of_day_s;
    out.push_back({f.t, t_gps});
  }
  return out;
}

double interpolate(std::span<const double> t, std::span<const double> v, double at) {
  if (t.empty()) return 0.0;
  if (at <= t.front()) return v.front();
  if (at >= t.back()) return v.back();
  const auto it = std::upper_bound(t.begin(), t.end(), at);
  const std::size_t j = static_cast<std::size_t>(it - t.begin());
  const std::size_t i = j - 1;
  const double span = t[j] - t[i];
  if (span <= 0.0) return v[j];
  const double w = (at - t[i]) / span;
  return v[i] + w * (v[j] - v[i]);
}

NumericStream resample_uniform(const NumericStream& s, double rate_hz) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate_hz must be > 0");
  if (s.t.size() < 2) {
    throw Error(ErrorCode::TooFewSamples, "need at least 2 samples, got " + std::to_string(s.t.size()));
  }
  const double first = s.t.front();
  const double last = s.t.back();
  const auto n = static_cast<std::size_t>(std::floor((last - first) * rate_hz + 1e-9)) + 1;
  NumericStream out;
  out.t.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.t[k] = first + static_cast<double>(k) / rate_hz;
  out.channels.resize(s.channels.size());
  for (std::size_t c = 0; c < s.channels.size(); ++c) {
    out.channels[c].resize(n);
    std::size_t j = 1;
    for (std::size_t k = 0; k < n; ++k) {
      const double at = out.t[k];
      while (j + 1 < s.t.size() && s.t[j] < at) ++j;
      const double t0 = s.t[j - 1], t1 = s.t[j];
      const double w = t1 > t0 ? std::clamp((at - t0) / (t1 - t0), 0.0, 1.0) : 1.0;
      out.channels[c][k] = s.channels[c][j - 1] + w * (s.channels[c][j] - s.channels[c][j - 1]);
    }
  }
  return out;
}

ClockModel estimate_offset_by_correlation(const NumericStream& reference, const NumericStream& other,
                                          double max_lag_s, double step_s) {
  if (reference.t.size() < 2 || other.t.size() < 2 || reference.channels.empty() ||
      other.channels.empty()) {
    throw Error(ErrorCode::TooFewSamples, "correlation needs two non-trivial series");
  }
  const auto& rv = reference.channels.front();
  const auto& ov = other.channels.front();
  double best_score = -1e300;
  double best_lag = 0.0;
  const auto steps = static_cast<long>(std::floor(max_lag_s / step_s));
  for (long k = -steps; k <= steps; ++k) {
    const double lag = static_cast<double>(k) * step_s;  // t_unit = t_gps + lag
    double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < reference.t.size(); ++i) {
      const double tu = reference.t[i] + lag;
      if (tu < other.t.front() || tu > other.t.back()) continue;
      const double x = rv[i];
      const double y = interpolate(other.t, ov, tu);
      sxy += x * y; sx += x; sy += y; sxx += x * x; syy += y * y;
      ++n;
    }
    if (n < 2) continue;
    const double dn = static_cast<double>(n);
    const double cov = sxy / dn - (sx / dn) * (sy / dn);
    const double vx = sxx / dn - (sx / dn) * (sx / dn);
    const double vy = syy / dn - (sy / dn) * (sy / dn);
    if (vx <= 0.0 || vy <= 0.0) continue;
    const double score = cov / std::sqrt(vx * vy);
    if (score > best_score) {
      best_score = score;
      best_lag = lag;
    }
  }
  if (best_score <= -1e299) throw Error(ErrorCode::NoOverlap, "series never overlap within max lag");
  ClockModel m;
  m.offset_s = best_lag;
  m.n_anchors = 2;
  m.rms_residual_s = step_s / 2.0;
  return m;
}

}  // namespace drivesense::sync
