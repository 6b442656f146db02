#include "drivesense/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drivesense/error.hpp"
#include "drivesense/geo.hpp"
#include "drivesense/time_sync.hpp"
#include "text_util.hpp"

namespace drivesense::motion {

namespace {

Vec3 normalized(const Vec3& v) {
  const double n = v.norm();
  return n > 0.0 ? v * (1.0 / n) : v;
}

struct SpeedLookup {
  std::vector<double> t, v;
  explicit SpeedLookup(std::span<const SpeedSample> s) {
    t.reserve(s.size());
    v.reserve(s.size());
    for (const auto& x : s) {
      if (!t.empty() && x.t <= t.back()) continue;
      t.push_back(x.t);
      v.push_back(x.mps);
    }
  }
  bool covers(double at) const { return t.size() >= 2 && at >= t.front() && at <= t.back(); }
  double at(double x) const { return sync::interpolate(t, v, x); }
};

}  // namespace

Alignment estimate_alignment(std::span<const ImuSample> imu, std::span<const SpeedSample> speed,
                             const MountingHints& hints) {
  if (imu.size() < 2 || imu.back().t - imu.front().t < 5.0) {
    throw Error(ErrorCode::NoQuiescentPeriod, "need at least 5 s of IMU data");
  }
  const SpeedLookup lookup(speed);
  constexpr double kSettleS = 3.0;
  const double rc = 1.0 / (2.0 * std::numbers::pi * hints.lowpass_hz);

  Vec3 lp = imu.front().accel;
  Vec3 sum;
  std::size_t n_quiet = 0;
  double quiet_since = imu.front().t;
  bool quiet = false;
  for (std::size_t i = 0; i < imu.size(); ++i) {
    const auto& s = imu[i];
    if (i > 0) {
      const double dt = s.t - imu[i - 1].t;
      const double alpha = dt / (rc + dt);
      lp = lp + (s.accel - lp) * alpha;
    }
    bool q = s.gyro.norm() < hints.quiescent_gyro_rad_s;
    if (q && lookup.covers(s.t - 1.0) && lookup.covers(s.t + 1.0)) {
      const double dvdt = (lookup.at(s.t + 1.0) - lookup.at(s.t - 1.0)) / 2.0;
      q = std::fabs(dvdt) < hints.quiescent_dvdt_mps2;
    }
    if (q && !quiet) quiet_since = s.t;
    quiet = q;
    if (q && s.t - quiet_since >= kSettleS) {
      sum = sum + lp;
      ++n_quiet;
    }
  }
  if (n_quiet == 0) throw Error(ErrorCode::NoQuiescentPeriod, "no low-dynamics stretch of 3 s found");

  Alignment a;
  const Vec3 g = sum * (1.0 / static_cast<double>(n_quiet));
  a.gravity_mps2 = g.norm();
  if (!(a.gravity_mps2 > 1.0)) throw Error(ErrorCode::NoQuiescentPeriod, "gravity estimate too small");
  a.up = normalized(g);

  // Horizontal basis: device x projected, or device y when x is near vertical.
  Vec3 e1 = Vec3{1, 0, 0} - a.up * a.up.x;
  if (e1.norm() < 0.3) e1 = Vec3{0, 1, 0} - a.up * a.up.y;
  e1 = normalized(e1);
  const Vec3 e2 = a.up.cross(e1);

  // Regress the mean horizontal accel of 2 s blocks on the speed change
  // over the block; the slope vector points forward.
  double s_dd = 0.0, s_1d = 0.0, s_2d = 0.0;
  std::size_t n_excited = 0;
  if (lookup.t.size() >= 2) {
    constexpr double kBlockS = 2.0;
    std::size_t i = 0;
    while (i < imu.size()) {
      const double b0 = imu[i].t;
      double h1 = 0.0, h2 = 0.0, yaw = 0.0;
      std::size_t j = i;
      for (; j < imu.size() && imu[j].t < b0 + kBlockS; ++j) {
        h1 += imu[j].accel.dot(e1);
        h2 += imu[j].accel.dot(e2);
        yaw += imu[j].gyro.dot(a.up);
      }
      const double cnt = static_cast<double>(j - i);
      i = j;
      if (!lookup.covers(b0) || !lookup.covers(b0 + kBlockS) || cnt < 2) continue;
      if (std::fabs(yaw / cnt) > 0.1) continue;
      const double dv = (lookup.at(b0 + kBlockS) - lookup.at(b0)) / kBlockS;
      s_dd += dv * dv;
      s_1d += h1 / cnt * dv;
      s_2d += h2 / cnt * dv;
      if (std::fabs(dv) > 0.3) ++n_excited;
    }
  }
  const Vec3 slope = (e1 * s_1d + e2 * s_2d) * (s_dd > 0.0 ? 1.0 / s_dd : 0.0);
  if (n_excited >= 5 && slope.norm() > 0.3) {
    a.forward = normalized(slope);
    a.forward_from_speed = true;
  } else {
    const double yaw = deg2rad(hints.mounting_yaw_deg.value_or(0.0));
    a.forward = e1 * std::cos(yaw) - e2 * std::sin(yaw);
  }
  a.left = a.up.cross(a.forward);
  return a;
}

std::vector<VehicleFrameAccel> to_vehicle_frame(std::span<const ImuSample> imu, const Alignment& a) {
  std::vector<VehicleFrameAccel> out;
  out.reserve(imu.size());
  for (const auto& s : imu) {
    out.push_back({s.t, s.accel.dot(a.forward), s.accel.dot(a.left), s.accel.dot(a.up) - a.gravity_mps2,
                   s.gyro.dot(a.up)});
  }
  return out;
}

std::vector<VehicleFrameAccel> gravity_align(std::span<const ImuSample> imu, std::span<const SpeedSample> speed,
                                             const MountingHints& hints) {
  return to_vehicle_frame(imu, estimate_alignment(imu, speed, hints));
}

std::string_view to_string(MotionKind k) {
  switch (k) {
    case MotionKind::HarshAccel: return "harsh_accel";
    case MotionKind::HarshBrake: return "harsh_brake";
    case MotionKind::HarshCorner: return "harsh_corner";
    case MotionKind::Pothole: return "pothole";
  }
  return "pothole";
}

MotionKind motion_kind_from_string(std::string_view s) {
  for (auto k : {MotionKind::HarshAccel, MotionKind::HarshBrake, MotionKind::HarshCorner, MotionKind::Pothole}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::UnknownKind, "motion event kind '" + std::string(s) + "'");
}

namespace {

// Excursions of magnitude(x) above `thr`, closed below hysteresis * thr.
template <class Magnitude, class Signed>
std::vector<MotionEvent> excursions(std::span<const VehicleFrameAccel> a, MotionKind kind, double thr,
                                    const HarshThresholds& th, Magnitude mag, Signed value) {
  std::vector<MotionEvent> raw;
  bool open = false;
  MotionEvent cur;
  cur.kind = kind;
  for (const auto& s : a) {
    const double m = mag(s);
    if (!open) {
      if (m >= thr) {
        open = true;
        cur.t_start = s.t;
        cur.t_end = s.t;
        cur.peak = value(s);
        cur.t_peak = s.t;
      }
      continue;
    }
    if (m < th.hysteresis * thr) {
      cur.t_end = s.t;
      raw.push_back(cur);
      open = false;
      continue;
    }
    cur.t_end = s.t;
    if (m > std::fabs(cur.peak)) {
      cur.peak = value(s);
      cur.t_peak = s.t;
    }
  }
  if (open) raw.push_back(cur);

  std::vector<MotionEvent> merged;
  for (const auto& e : raw) {
    if (!merged.empty() && e.t_start - merged.back().t_end < th.merge_gap_s) {
      auto& m = merged.back();
      m.t_end = e.t_end;
      if (std::fabs(e.peak) > std::fabs(m.peak)) {
        m.peak = e.peak;
        m.t_peak = e.t_peak;
      }
    } else {
      merged.push_back(e);
    }
  }
  std::vector<MotionEvent> out;
  for (auto e : merged) {
    e.duration_s = e.t_end - e.t_start;
    if (e.duration_s > 0.0 && e.duration_s >= th.min_duration_s) out.push_back(e);
  }
  return out;
}

}  // namespace

std::vector<MotionEvent> detect_harsh_events(std::span<const VehicleFrameAccel> accel, const HarshThresholds& th) {
  std::vector<MotionEvent> out;
  auto add = [&out](std::vector<MotionEvent> v) { out.insert(out.end(), v.begin(), v.end()); };
  add(excursions(accel, MotionKind::HarshAccel, std::fabs(th.accel), th,
                 [](const VehicleFrameAccel& s) { return s.a_long; },
                 [](const VehicleFrameAccel& s) { return s.a_long; }));
  add(excursions(accel, MotionKind::HarshBrake, std::fabs(th.brake), th,
                 [](const VehicleFrameAccel& s) { return -s.a_long; },
                 [](const VehicleFrameAccel& s) { return s.a_long; }));
  add(excursions(accel, MotionKind::HarshCorner, std::fabs(th.corner), th,
                 [](const VehicleFrameAccel& s) { return std::fabs(s.a_lat); },
                 [](const VehicleFrameAccel& s) { return s.a_lat; }));
  std::stable_sort(out.begin(), out.end(),
                   [](const MotionEvent& a, const MotionEvent& b) { return a.t_start < b.t_start; });
  return out;
}

std::vector<double> highpass(std::span<const double> t, std::span<const double> x, double cutoff_hz) {
  std::vector<double> y(x.size(), 0.0);
  const double rc = 1.0 / (2.0 * std::numbers::pi * cutoff_hz);
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double dt = t[i] - t[i - 1];
    const double alpha = rc / (rc + dt);
    y[i] = alpha * (y[i - 1] + x[i] - x[i - 1]);
  }
  return y;
}

namespace {

double median_inplace(std::vector<double>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = (m + *std::max_element(v.begin(), mid)) / 2.0;
  return m;
}

}  // namespace

std::vector<MotionEvent> detect_potholes(std::span<const VehicleFrameAccel> accel, const PotholeParams& p) {
  if (!(p.window_s > 0.0)) throw std::invalid_argument("window_s must be > 0");
  if (accel.size() < 2) return {};
  std::vector<double> t(accel.size()), z(accel.size());
  for (std::size_t i = 0; i < accel.size(); ++i) {
    t[i] = accel[i].t;
    z[i] = accel[i].a_vert;
  }
  const auto y = highpass(t, z, p.highpass_hz);
  std::vector<double> dev(y);
  const double med = median_inplace(dev);
  for (std::size_t i = 0; i < y.size(); ++i) dev[i] = std::fabs(y[i] - med);
  const double mad = median_inplace(dev);
  // 1.4826 * MAD estimates the standard deviation of Gaussian texture.
  const double thr = std::max(p.z_thresh * 1.4826 * mad, p.floor_mps2);

  std::vector<MotionEvent> out;
  const double t0 = t.front();
  long prev_window = -2;
  std::size_t i = 0;
  while (i < y.size()) {
    const long w = static_cast<long>(std::floor((t[i] - t0) / p.window_s));
    double peak = 0.0, t_peak = t[i];
    std::size_t j = i;
    for (; j < y.size() && static_cast<long>(std::floor((t[j] - t0) / p.window_s)) == w; ++j) {
      if (std::fabs(y[j]) > std::fabs(peak)) {
        peak = y[j];
        t_peak = t[j];
      }
    }
    if (std::fabs(peak) > thr) {
      const double ws = t0 + static_cast<double>(w) * p.window_s;
      const double we = std::min(ws + p.window_s, t.back());
      if (!out.empty() && w == prev_window + 1) {
        auto& e = out.back();
        e.t_end = we;
        if (std::fabs(peak) > std::fabs(e.peak)) {
          e.peak = peak;
          e.t_peak = t_peak;
        }
      } else {
        out.push_back({MotionKind::Pothole, std::max(ws, t.front()), we, peak, 0.0, t_peak});
      }
      prev_window = w;
    }
    i = j;
  }
  for (auto& e : out) e.duration_s = e.t_end - e.t_start;
  std::erase_if(out, [](const MotionEvent& e) { return !(e.duration_s > 0.0); });
  return out;
}

std::vector<SpeedSample> speed_from_obd(std::span<const ObdReading> readings) {
  std::vector<SpeedSample> out;
  for (const auto& r : readings) {
    if (r.quantity == ObdQuantity::SpeedKph) out.push_back({r.t, r.value / 3.6});
  }
  return out;
}

ConsistencyReport speed_consistency(std::span<const SpeedSample> obd, std::span<const GnssFix> gnss,
                                    const ConsistencyParams& p) {
  const bool have_gga = std::any_of(gnss.begin(), gnss.end(), [](const GnssFix& f) {
    return f.sentence == SentenceKind::Gga && f.position;
  });
  std::vector<const GnssFix*> fixes;
  for (const auto& f : gnss) {
    if (!f.position) continue;
    if (have_gga && f.sentence != SentenceKind::Gga) continue;
    if (!fixes.empty() && f.t <= fixes.back()->t) continue;
    fixes.push_back(&f);
  }
  std::vector<double> dt_mid, dv;
  for (std::size_t i = 1; i < fixes.size(); ++i) {
    const double dt = fixes[i]->t - fixes[i - 1]->t;
    dt_mid.push_back((fixes[i]->t + fixes[i - 1]->t) / 2.0);
    dv.push_back(haversine(*fixes[i - 1]->position, *fixes[i]->position) / dt);
  }
  const SpeedLookup lookup(obd);
  ConsistencyReport rep;
  double ss = 0.0;
  std::size_t lo = 0, hi = 0;
  double run_sum = 0.0;
  bool in_flag = false;
  SpeedSegment seg;
  auto close_flag = [&](double t_last) {
    if (in_flag && t_last - seg.t_start > p.flag_min_s) {
      seg.t_end = t_last;
      rep.flagged.push_back(seg);
    }
    in_flag = false;
  };
  double last_t = 0.0;
  for (std::size_t i = 0; i < dv.size(); ++i) {
    const double c = dt_mid[i];
    while (hi < dv.size() && dt_mid[hi] <= c + p.smooth_s / 2.0) run_sum += dv[hi++];
    while (lo < hi && dt_mid[lo] < c - p.smooth_s / 2.0) run_sum -= dv[lo++];
    if (!lookup.covers(c)) continue;
    const double gnss_kph = run_sum / static_cast<double>(hi - lo) * 3.6;
    const double diff = gnss_kph - lookup.at(c) * 3.6;
    ss += diff * diff;
    ++rep.n_compared;
    if (std::fabs(diff) > p.flag_kph) {
      if (!in_flag) {
        in_flag = true;
        seg.t_start = c;
      }
    } else {
      close_flag(last_t);
    }
    last_t = c;
  }
  close_flag(last_t);
  if (rep.n_compared == 0) throw Error(ErrorCode::NoOverlap, "OBD and GNSS speed do not overlap in time");
  rep.rms_kph = std::sqrt(ss / static_cast<double>(rep.n_compared));
  return rep;
}

std::vector<TurnSegment> detect_turns(std::span<const VehicleFrameAccel> accel, const TurnParams& p) {
  std::vector<TurnSegment> out;
  std::size_t i = 0;
  while (i < accel.size()) {
    if (std::fabs(accel[i].yaw_rate) < p.yaw_rate_rad_s) {
      ++i;
      continue;
    }
    const double sign = accel[i].yaw_rate > 0.0 ? 1.0 : -1.0;
    std::size_t j = i;
    double heading = 0.0;
    while (j < accel.size() && sign * accel[j].yaw_rate >= p.yaw_rate_rad_s) {
      if (j > i) heading += 0.5 * (accel[j].yaw_rate + accel[j - 1].yaw_rate) * (accel[j].t - accel[j - 1].t);
      ++j;
    }
    const double t_end = j < accel.size() ? accel[j].t : accel[j - 1].t;
    if (j < accel.size()) heading += 0.5 * (accel[j].yaw_rate + accel[j - 1].yaw_rate) * (t_end - accel[j - 1].t);
    TurnSegment seg{accel[i].t, t_end, 0.5 * (accel[i].t + t_end), heading};
    if (seg.t_end - seg.t_start >= p.min_duration_s && std::fabs(heading) >= p.min_heading_change_rad) out.push_back(seg);
    i = j;
  }
  return out;
}

std::string to_json_line(const MotionEvent& e) {
  std::string s = "{\"kind\":\"";
  s += to_string(e.kind);
  s += "\",\"t_start\":";
  detail::append_fixed(s, e.t_start, 3);
  s += ",\"t_end\":";
  detail::append_fixed(s, e.t_end, 3);
  s += ",\"peak\":";
  detail::append_fixed(s, e.peak, 3);
  s += ",\"duration_s\":";
  detail::append_fixed(s, e.duration_s, 3);
  s += ",\"t_peak\":";
  detail::append_fixed(s, e.t_peak, 3);
  s += "}";
  return s;
}

}  // namespace drivesense::motion
