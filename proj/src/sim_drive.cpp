#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drivesense/calendar.hpp"
#include "drivesense/error.hpp"
#include "drivesense/ingest.hpp"
#include "drivesense/sim.hpp"
#include "drivesense/stream_io.hpp"
#include "sim_path.hpp"

namespace drivesense::sim {

namespace {

using detail::DrivePath;
using fusion::EventKind;
using fusion::StimulusKind;

constexpr double kDt = 0.01;
constexpr double kTraceStart = 10.0;  // GPS seconds of the first sample
constexpr double kPlanDecel = 1.2;
constexpr double kMaxAccel = 1.5;
constexpr double kMaxDecel = -2.2;
constexpr double kTau = 0.5;
constexpr double kRamp = 0.1;
constexpr double kGravity = 9.80665;
constexpr double kLookahead = 800.0;

// Offsets of each detector's record inside a frame, so vision timestamps stay
// strictly increasing.
constexpr double kSlotEye = 0.000, kSlotHead = 0.001, kSlotYawn = 0.002, kSlotPhone = 0.003, kSlotLight = 0.004,
                 kSlotSign = 0.005, kSlotTaillight = 0.006, kSlotNear = 0.007, kSlotLane = 0.008;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Rng {
  explicit Rng(std::uint64_t seed, std::uint64_t salt) : g(splitmix(seed ^ splitmix(salt))) {}
  double normal(double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(g) : 0.0; }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(g); }
  std::mt19937_64 g;
};

struct Defaults {
  double duration_s, magnitude, latency_s, wait_s;
};

Defaults defaults_for(InjectionKind k) {
  switch (k) {
    case InjectionKind::HarshBrake: return {1.2, 4.0, 0, 0};
    case InjectionKind::HarshAccel: return {1.0, 3.5, 0, 0};
    case InjectionKind::Pothole: return {0, 10.0, 0, 0};
    case InjectionKind::Distraction: return {3.5, 45.0, 0, 0};
    case InjectionKind::EyesClosed: return {1.5, 0, 0, 0};
    case InjectionKind::Yawn: return {2.5, 0, 0, 0};
    case InjectionKind::PhoneUse: return {10.0, 0, 0, 0};
    case InjectionKind::LaneCrossing: return {0.5, 0, 0, 0};
    case InjectionKind::NearCollision: return {0.5, 5.0, 0, 0};
    case InjectionKind::StopAndGo: return {0, 0, 1.0, 5.0};
    case InjectionKind::StopSign: return {0, 0, 0, 2.0};
    case InjectionKind::StopSignViolation: return {0, 15.0, 0, 0};
    case InjectionKind::Taillight: return {1.5, 2.0, 1.0, 0};
    default: return {0, 0, 0, 0};
  }
}

Injection with_defaults(Injection inj) {
  const auto d = defaults_for(inj.kind);
  if (inj.duration_s == 0.0) inj.duration_s = d.duration_s;
  if (inj.magnitude == 0.0) inj.magnitude = d.magnitude;
  if (inj.latency_s == 0.0) inj.latency_s = d.latency_s;
  if (inj.wait_s == 0.0) inj.wait_s = d.wait_s;
  return inj;
}

bool position_triggered(InjectionKind k) {
  switch (k) {
    case InjectionKind::RedLightRun:
    case InjectionKind::GreenPass:
    case InjectionKind::StopAndGo:
    case InjectionKind::StopSign:
    case InjectionKind::StopSignViolation:
    case InjectionKind::GettingLost: return false;
    default: return true;
  }
}

struct Override {
  double t0, t1, a;
};

struct StopPoint {
  double s = 0.0;
  bool active = true;
  bool end = false;
  double hold_s = 0.0;            // StopSign: released this long after stopping
  std::optional<std::size_t> inj;  // StopAndGo: released by the driver after green
  std::optional<double> t_stopped, t_release;
};

struct Zone {
  double s0, s1, vmax;
};

// Vision frame grid on the vision unit clock: frame k at unit time k / 10.
struct FrameClock {
  sync::ClockModel model;
  double gps_of(std::int64_t k, double slot) const { return sync::to_sync_time(model, k / 10.0 + slot); }
  std::int64_t first_at_or_after(double t_gps, double slot) const {
    return static_cast<std::int64_t>(std::ceil((sync::to_unit_time(model, t_gps) - slot) * 10.0 - 1e-9));
  }
};

struct Trace {
  std::vector<double> s, v, a;  // a[i] applies over [t_i, t_i+1)
  double t_at(std::size_t i) const { return kTraceStart + static_cast<double>(i) * kDt; }
  double t_end() const { return t_at(s.size() - 1); }

  struct State {
    double s, v, a;
  };
  State at(double t) const {
    const double x = (t - kTraceStart) / kDt;
    if (x <= 0.0) return {s.front(), v.front(), a.front()};
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= s.size()) return {s.back(), v.back(), 0.0};
    const double f = x - static_cast<double>(i);
    return {s[i] + (s[i + 1] - s[i]) * f, v[i] + (v[i + 1] - v[i]) * f, a[i]};
  }
  // First time s reaches x.
  std::optional<double> time_at_s(double x) const {
    auto it = std::lower_bound(s.begin(), s.end(), x);
    if (it == s.end()) return std::nullopt;
    const auto i = static_cast<std::size_t>(it - s.begin());
    if (i == 0) return t_at(0);
    const double ds = s[i] - s[i - 1];
    return t_at(i - 1) + (ds > 0.0 ? kDt * (x - s[i - 1]) / ds : kDt);
  }
};

double pedal_target(double v, double a) {
  if (a < -0.3) return 0.0;
  if (v < 0.05 && a <= 0.0) return 0.0;
  return std::clamp(4.0 + 0.8 * v + 15.0 * std::max(a, 0.0), 0.0, 100.0);
}

struct Mat3 {
  double m[3][3];
  Vec3 mul(const Vec3& x) const {
    return {m[0][0] * x.x + m[0][1] * x.y + m[0][2] * x.z, m[1][0] * x.x + m[1][1] * x.y + m[1][2] * x.z,
            m[2][0] * x.x + m[2][1] * x.y + m[2][2] * x.z};
  }
  Vec3 mul_t(const Vec3& x) const {
    return {m[0][0] * x.x + m[1][0] * x.y + m[2][0] * x.z, m[0][1] * x.x + m[1][1] * x.y + m[2][1] * x.z,
            m[0][2] * x.x + m[1][2] * x.y + m[2][2] * x.z};
  }
};

// Vehicle-from-device rotation Rz(yaw) Ry(pitch) Rx(roll).
Mat3 mounting(double roll_deg, double pitch_deg, double yaw_deg) {
  const double r = deg2rad(roll_deg), p = deg2rad(pitch_deg), y = deg2rad(yaw_deg);
  const double cr = std::cos(r), sr = std::sin(r), cp = std::cos(p), sp = std::sin(p), cy = std::cos(y),
               sy = std::sin(y);
  return {{{cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr},
           {sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr},
           {-sp, cp * sr, cp * cr}}};
}

struct Window {
  double t0, t1;
  std::size_t inj;
  bool contains(double t) const { return t >= t0 && t <= t1; }
};

class Synth {
 public:
  Synth(const DriveScript& script, const net::RoadNetwork& net)
      : script_(script),
        net_(net),
        route_(detail::resolve_route(script, net)),
        path_(net, route_, script.start_offset_m, script.end_offset_m),
        frames_{{script.vision.offset_s, script.vision.drift_ppm, 0.0, 0}},
        telemetry_{script.telemetry.offset_s, script.telemetry.drift_ppm, 0.0, 0} {
    for (const auto& inj : script.injections) inj_.push_back(with_defaults(inj));
  }

  TripStreams run() {
    validate();
    simulate_motion();
    place_events();
    TripStreams out;
    out.truth = truth();
    out.gnss_nmea = gnss(false);
    out.vision_nmea = gnss(true);
    out.imu_csv = imu();
    out.obd_csv = obd();
    out.vision_jsonl = vision();
    return out;
  }

 private:
  const DriveScript& script_;
  const net::RoadNetwork& net_;
  detail::ResolvedRoute route_;
  DrivePath path_;
  FrameClock frames_;
  sync::ClockModel telemetry_;
  std::vector<Injection> inj_;

  Trace trace_;
  std::vector<double> pedal_;
  double t_move_ = 0.0, t_stop_ = 0.0, t_finish_ = 0.0;
  std::vector<StopPoint> stops_;
  std::vector<Zone> zones_;
  std::vector<Override> overrides_;
  std::vector<TruthEvent> truth_;
  std::vector<double> pothole_times_;
  std::vector<double> pothole_mag_;

  std::vector<Window> distraction_, eyes_, yawn_, phone_, lane_, near_;
  struct LightWindow {
    double t0, t1;
    vision_kind::Light state;
  };
  std::vector<LightWindow> lights_;
  std::vector<std::pair<double, double>> signs_;
  struct TailWindow {
    double t_off, t_on, t_end;
  };
  std::vector<TailWindow> taillights_;

  std::size_t node_of(const Injection& inj, std::size_t k) const {
    const auto base_n = route_.from_script.size();
    if (!inj.node_index || *inj.node_index == 0 || *inj.node_index + 1 >= base_n) {
      throw Error(ErrorCode::ScriptEventOutsideDrive,
                  "injection " + std::to_string(k) + " (" + std::string(to_string(inj.kind)) +
                      ") needs an interior route node index");
    }
    const std::size_t i = route_.from_script[*inj.node_index];
    if (path_.node_arc(i)) {
      throw Error(ErrorCode::InvalidScript,
                  "injection " + std::to_string(k) + " needs a straight-through node, route node " +
                      std::to_string(route_.nodes[i]) + " is a turn");
    }
    return i;
  }

  double line_s(std::size_t node, InjectionKind k) const {
    const bool sign = k == InjectionKind::StopSign || k == InjectionKind::StopSignViolation;
    return path_.node_s(node) - (sign ? 8.0 : 10.0);
  }

  void validate() {
    for (std::size_t k = 0; k < inj_.size(); ++k) {
      const auto& inj = inj_[k];
      if (position_triggered(inj.kind)) {
        if (!inj.at_m || !(*inj.at_m > 0.0) || !(*inj.at_m < path_.length())) {
          throw Error(ErrorCode::ScriptEventOutsideDrive,
                      "injection " + std::to_string(k) + " (" + std::string(to_string(inj.kind)) +
                          ") at_m outside the path of " + std::to_string(path_.length()) + " m");
        }
      } else if (inj.kind != InjectionKind::GettingLost) {
        const std::size_t node = node_of(inj, k);
        if (line_s(node, inj.kind) - 60.0 < 0.0) {
          throw Error(ErrorCode::ScriptEventOutsideDrive, "injection " + std::to_string(k) + " too close to the start");
        }
      }
      if (inj.duration_s < 0.0 || inj.latency_s < 0.0 || inj.wait_s < 0.0) {
        throw Error(ErrorCode::InvalidScript, "negative injection parameter");
      }
    }
  }

  double v_allowed(double s, bool& curve) const {
    curve = false;
    double va = path_.piece_at(s).vmax;
    for (const auto& z : zones_) {
      if (s >= z.s0 && s <= z.s1) va = std::min(va, z.vmax);
    }
    const double here = va;
    auto consider = [&](double s_c, double v_c) {
      const double d = s_c - s;
      if (d <= 0.0 || d > kLookahead || v_c >= here) return;
      const double c = std::sqrt(v_c * v_c + 2.0 * kPlanDecel * d);
      if (c < va) {
        va = c;
        curve = true;
      }
    };
    for (const auto& p : path_.pieces()) consider(p.s0, p.vmax);
    for (const auto& z : zones_) consider(z.s0, z.vmax);
    for (const auto& st : stops_) {
      if (!st.active) continue;
      const double d = st.s - s;
      if (d < -3.0) continue;
      const double c = std::sqrt(2.0 * kPlanDecel * std::max(0.0, d));
      if (c < va) {
        va = c;
        curve = true;
      }
    }
    return va;
  }

  void simulate_motion() {
    stops_.push_back({path_.length(), true, true, 0.0, std::nullopt, std::nullopt, std::nullopt});
    struct Trigger {
      double at_m;
      std::size_t inj;
    };
    std::vector<Trigger> triggers;
    for (std::size_t k = 0; k < inj_.size(); ++k) {
      const auto& inj = inj_[k];
      switch (inj.kind) {
        case InjectionKind::HarshBrake:
        case InjectionKind::HarshAccel:
        case InjectionKind::Taillight: triggers.push_back({*inj.at_m, k}); break;
        case InjectionKind::StopAndGo: {
          StopPoint st;
          st.s = line_s(node_of(inj, k), inj.kind) - 1.0;
          st.inj = k;
          stops_.push_back(st);
          break;
        }
        case InjectionKind::StopSign: {
          StopPoint st;
          st.s = line_s(node_of(inj, k), inj.kind) - 1.0;
          st.hold_s = inj.wait_s;
          stops_.push_back(st);
          break;
        }
        case InjectionKind::StopSignViolation: {
          const double sl = line_s(node_of(inj, k), inj.kind);
          zones_.push_back({sl - 30.0, sl + 5.0, inj.magnitude / 3.6});
          break;
        }
        default: break;
      }
    }
    std::sort(triggers.begin(), triggers.end(), [](const Trigger& a, const Trigger& b) { return a.at_m < b.at_m; });
    std::size_t next_trigger = 0;

    const double t_go = kTraceStart + script_.idle_start_s;
    double t = kTraceStart, s = 0.0, v = 0.0;
    std::optional<double> t_finish;
    trace_.s.push_back(0.0);
    trace_.v.push_back(0.0);
    for (;;) {
      double a = 0.0;
      double va = 0.0;
      if (t >= t_go - 1e-9) {
        bool curve = false;
        va = v_allowed(s, curve);
        const double ff = curve && v > 0.05 ? -kPlanDecel : 0.0;
        a = std::clamp(ff + (va - v) / kTau, kMaxDecel, kMaxAccel);
        for (const auto& o : overrides_) {
          if (t < o.t0 || t > o.t1) continue;
          const double w = std::clamp(std::min(t - o.t0, o.t1 - t) / kRamp, 0.0, 1.0);
          a = (1.0 - w) * a + w * o.a;
        }
      }
      double v_new = v + a * kDt;
      if (v_new < 0.0 || (v_new < 0.005 && va < 0.05)) {
        v_new = 0.0;
        a = -v / kDt;
      }
      const double s_new = s + 0.5 * (v + v_new) * kDt;
      const double t_new = t + kDt;
      if (t_move_ == 0.0 && v_new > 0.0) t_move_ = t;

      while (next_trigger < triggers.size() && triggers[next_trigger].at_m <= s_new) {
        const auto& trg = triggers[next_trigger++];
        const double tc = s_new > s ? t + kDt * (trg.at_m - s) / (s_new - s) : t;
        on_trigger(trg.inj, tc);
      }
      for (auto& st : stops_) {
        if (!st.active) continue;
        if (!st.t_stopped && v_new == 0.0 && v > 0.0 && s_new >= st.s - 3.0) {
          st.t_stopped = t_new;
          if (st.end) {
            t_stop_ = t_new;
            t_finish = t_new + script_.idle_end_s;
          } else if (st.inj) {
            st.t_release = on_stopped_at_light(*st.inj, t_new);
          } else {
            st.t_release = t_new + st.hold_s;
          }
        }
        if (st.t_release && t_new >= *st.t_release) st.active = false;
      }

      trace_.a.push_back(a);
      trace_.s.push_back(s_new);
      trace_.v.push_back(v_new);
      t = t_new;
      s = s_new;
      v = v_new;
      if (t_finish && t >= *t_finish - 1e-9) break;
      if (t > kTraceStart + 4.0 * 3600.0) throw Error(ErrorCode::InvalidScript, "drive does not finish");
    }
    trace_.a.push_back(0.0);
    t_finish_ = trace_.t_end();

    pedal_.resize(trace_.s.size());
    double p = 0.0;
    const double rate = 100.0 / 0.3 * kDt;
    for (std::size_t i = 0; i < trace_.s.size(); ++i) {
      const double target = pedal_target(trace_.v[i], trace_.a[i]);
      p += std::clamp(target - p, -rate, rate);
      pedal_[i] = p;
    }
  }

  void on_trigger(std::size_t k, double tc) {
    const auto& inj = inj_[k];
    TruthEvent ev;
    ev.injection = k;
    switch (inj.kind) {
      case InjectionKind::HarshBrake:
      case InjectionKind::HarshAccel: {
        const double sign = inj.kind == InjectionKind::HarshBrake ? -1.0 : 1.0;
        overrides_.push_back({tc, tc + inj.duration_s + kRamp, sign * std::fabs(inj.magnitude)});
        ev.kind = inj.kind == InjectionKind::HarshBrake ? EventKind::HarshBrake : EventKind::HarshAccel;
        ev.t = ev.t_start = tc;
        ev.t_end = tc + inj.duration_s + kRamp;
        break;
      }
      case InjectionKind::Taillight: {
        const auto k_on = frames_.first_at_or_after(tc, kSlotTaillight);
        const double t_on = frames_.gps_of(k_on, kSlotTaillight);
        const double t_resp = t_on + inj.latency_s;
        // Centred on the response so a_long passes -1 at t_resp.
        overrides_.push_back({t_resp - kRamp / 2.0, t_resp + inj.duration_s + kRamp, -std::fabs(inj.magnitude)});
        taillights_.push_back({t_on - 2.0, t_on, t_on + 3.0});
        ev.kind = EventKind::ReactionSample;
        ev.stimulus = StimulusKind::TaillightOn;
        ev.latency_s = inj.latency_s;
        ev.t = ev.t_start = t_on;
        ev.t_end = t_resp;
        break;
      }
      default: return;
    }
    truth_.push_back(ev);
  }

  double on_stopped_at_light(std::size_t k, double t_stopped) {
    const auto& inj = inj_[k];
    const auto k_green = frames_.first_at_or_after(t_stopped + inj.wait_s, kSlotLight);
    const double t_green = frames_.gps_of(k_green, kSlotLight);
    TruthEvent ev;
    ev.injection = k;
    ev.kind = EventKind::ReactionSample;
    ev.stimulus = StimulusKind::LightToGreen;
    ev.latency_s = inj.latency_s;
    ev.t = ev.t_start = t_green;
    ev.t_end = t_green + inj.latency_s;
    truth_.push_back(ev);
    return t_green + inj.latency_s;
  }

  double time_at(double s_x, std::size_t k) const {
    const auto t = trace_.time_at_s(s_x);
    if (!t) {
      throw Error(ErrorCode::ScriptEventOutsideDrive, "injection " + std::to_string(k) + " is never reached");
    }
    return *t;
  }

  void place_events() {
    for (std::size_t k = 0; k < inj_.size(); ++k) {
      const auto& inj = inj_[k];
      TruthEvent ev;
      ev.injection = k;
      auto window = [&](std::vector<Window>& into, EventKind kind) {
        const double t0 = time_at(*inj.at_m, k);
        into.push_back({t0, t0 + inj.duration_s, k});
        ev.kind = kind;
        ev.t = ev.t_start = t0;
        ev.t_end = t0 + inj.duration_s;
      };
      switch (inj.kind) {
        case InjectionKind::Pothole: {
          const double t0 = time_at(*inj.at_m, k);
          pothole_times_.push_back(t0);
          pothole_mag_.push_back(inj.magnitude);
          ev.kind = EventKind::Pothole;
          ev.t = ev.t_start = t0;
          ev.t_end = t0 + 0.3;
          break;
        }
        case InjectionKind::Distraction: window(distraction_, EventKind::Distraction); break;
        case InjectionKind::EyesClosed: window(eyes_, EventKind::EyesClosed); break;
        case InjectionKind::Yawn: window(yawn_, EventKind::Yawn); break;
        case InjectionKind::PhoneUse: window(phone_, EventKind::PhoneUse); break;
        case InjectionKind::LaneCrossing: window(lane_, EventKind::LaneCrossing); break;
        case InjectionKind::NearCollision: {
          const double t0 = time_at(*inj.at_m, k);
          const double dmin = inj.magnitude;
          const double ramp = 1.5;
          near_.push_back({t0, t0 + 2.0 * ramp + inj.duration_s, k});
          ev.kind = EventKind::NearCollision;
          const double frac = dmin < 8.0 ? (20.0 - 8.0) / (20.0 - dmin) : 1.0;
          ev.t = ev.t_start = t0 + ramp * frac;
          ev.t_end = t0 + 2.0 * ramp + inj.duration_s - ramp * frac;
          break;
        }
        case InjectionKind::RedLightRun:
        case InjectionKind::GreenPass:
        case InjectionKind::StopAndGo: {
          const double sl = line_s(node_of(inj, k), inj.kind);
          const double t_vis = time_at(sl - 60.0, k);
          const double t_cross = time_at(sl, k);
          using vision_kind::Light;
          if (inj.kind == InjectionKind::RedLightRun) {
            lights_.push_back({t_vis, t_cross, Light::Red});
            ev.kind = EventKind::RedLightRun;
            ev.t = ev.t_end = t_cross;
            ev.t_start = t_vis;
          } else if (inj.kind == InjectionKind::GreenPass) {
            lights_.push_back({t_vis, t_cross + 1.0, Light::Green});
            ev.kind = EventKind::TrafficLightEncounter;
            ev.t = ev.t_start = t_vis;
            ev.t_end = t_cross + 1.0;
          } else {
            const auto it = std::find_if(truth_.begin(), truth_.end(), [&](const TruthEvent& e) {
              return e.injection == k && e.kind == EventKind::ReactionSample;
            });
            if (it == truth_.end()) {
              throw Error(ErrorCode::InvalidScript, "vehicle never stopped for injection " + std::to_string(k));
            }
            lights_.push_back({t_vis, it->t - 1e-6, Light::Red});
            lights_.push_back({it->t, t_cross + 1.0, Light::Green});
            continue;  // truth already recorded when the light turned
          }
          break;
        }
        case InjectionKind::StopSign:
        case InjectionKind::StopSignViolation: {
          const double sl = line_s(node_of(inj, k), inj.kind);
          const double t_vis = time_at(sl - 50.0, k);
          const double t_cross = time_at(sl, k);
          signs_.emplace_back(t_vis, t_cross);
          ev.kind = inj.kind == InjectionKind::StopSign ? EventKind::StopSignEncounter : EventKind::StopSignViolation;
          ev.t_start = t_vis;
          ev.t_end = t_cross;
          ev.t = inj.kind == InjectionKind::StopSign ? t_vis : t_cross;
          break;
        }
        case InjectionKind::GettingLost: {
          const std::size_t x = *route_.lost_at;
          const auto arc = path_.node_arc(x);
          const double s_mid = arc ? arc->first + arc->second / 2.0 : path_.node_s(x);
          ev.kind = EventKind::GettingLost;
          ev.t = ev.t_start = ev.t_end = time_at(s_mid, k);
          break;
        }
        default: continue;  // recorded during the motion pass
      }
      truth_.push_back(ev);
    }
    for (auto& ev : truth_) {
      if (ev.t_end > t_finish_ || ev.t_start < kTraceStart) {
        throw Error(ErrorCode::ScriptEventOutsideDrive,
                    "injection " + std::to_string(ev.injection) + " (" +
                        std::string(to_string(inj_[ev.injection].kind)) + ") ends after the drive");
      }
      ev.location = net_.projection().to_latlon(path_.position(trace_.at(ev.t).s));
    }
    std::stable_sort(truth_.begin(), truth_.end(), [](const TruthEvent& a, const TruthEvent& b) { return a.t < b.t; });
  }

  GroundTruth truth() const {
    GroundTruth g;
    g.trip_id = script_.trip_id;
    g.driver_id = script_.driver_id;
    g.epoch_utc = script_.start_utc;
    g.telemetry = telemetry_;
    g.vision = frames_.model;
    g.route = route_.nodes;
    for (auto e : route_.edges) g.edges.push_back(net_.edges()[e].id);
    g.t_move = t_move_;
    g.t_stop = t_stop_;
    g.distance_m = trace_.s.back();
    g.events = truth_;
    return g;
  }

  io::StreamHeader header(const char* stream, const char* unit, const char* units) const {
    return {stream, unit, script_.start_utc, units};
  }

  std::string gnss(bool vision_unit) const {
    Rng rng(script_.seed, vision_unit ? 11 : 10);
    Rng pos_rng(script_.seed, 12);  // shared so both units see the same fixes
    const auto& n = script_.noise;
    const bool rtk = n.fix_quality == FixQuality::RtkFixed || n.fix_quality == FixQuality::RtkFloat;
    const double sigma = rtk ? n.rtk_sigma_m : n.gps_sigma_m;
    const sync::ClockModel& clock = vision_unit ? frames_.model : telemetry_;
    std::vector<GnssFix> out;
    Vec2 err{pos_rng.normal(sigma), pos_rng.normal(sigma)};
    double prev_t = 0.0;
    for (double tk = std::ceil(kTraceStart); tk <= t_finish_; tk += 1.0) {
      if (!out.empty() || prev_t != 0.0) {
        const double rho = n.gps_tau_s > 0.0 ? std::exp(-(tk - prev_t) / n.gps_tau_s) : 0.0;
        const double q = sigma * std::sqrt(1.0 - rho * rho);
        err = Vec2{rho * err.x + pos_rng.normal(q), rho * err.y + pos_rng.normal(q)};
      }
      prev_t = tk;
      const auto st = trace_.at(tk);
      const Vec2 xy = path_.position(st.s) + err;
      const auto unix_s = script_.start_utc + static_cast<std::int64_t>(tk);
      GnssFix f;
      f.position = net_.projection().to_latlon(xy);
      f.alt_m = 250.0 + 0.3 * err.x;
      f.quality = n.fix_quality;
      f.hdop = rtk ? 0.6 : 0.9;
      f.n_sats = 10;
      f.utc_time_of_day_s = static_cast<double>(((unix_s % 86400) + 86400) % 86400);
      const double t_rmc = sync::to_unit_time(clock, tk) + rng.normal(n.anchor_jitter_s);
      if (!vision_unit) {
        GnssFix gga = f;
        gga.t = t_rmc - 0.004;
        gga.sentence = SentenceKind::Gga;
        out.push_back(gga);
      }
      f.t = t_rmc;
      f.sentence = SentenceKind::Rmc;
      f.alt_m.reset();
      f.hdop = 0.0;
      f.n_sats = 0;
      f.utc_date = calendar::civil_from_days(static_cast<std::int64_t>(std::floor(static_cast<double>(unix_s) / 86400.0)));
      f.speed_knots = st.v * 3600.0 / 1852.0;
      double course = 90.0 - rad2deg(path_.heading(st.s));
      course = std::fmod(std::fmod(course, 360.0) + 360.0, 360.0);
      f.course_deg = course >= 359.95 ? 0.0 : course;
      out.push_back(f);
    }
    return io::write_gnss(header(vision_unit ? "vision_nmea" : "gnss", vision_unit ? "vision" : "telemetry",
                                 "t:s,nmea0183"),
                          out);
  }

  double pothole_vert(double t) const {
    double z = 0.0;
    for (std::size_t i = 0; i < pothole_times_.size(); ++i) {
      const double dt = t - pothole_times_[i];
      if (dt < 0.0 || dt > 0.6) continue;
      z += pothole_mag_[i] * std::exp(-dt / 0.08) * std::sin(2.0 * std::numbers::pi * 12.0 * dt);
    }
    return z;
  }

  std::string imu() const {
    Rng rng(script_.seed, 20);
    const auto& n = script_.noise;
    const Mat3 R = mounting(script_.mount_roll_deg, script_.mount_pitch_deg, script_.mount_yaw_deg);
    const Vec3 field_enu{0.0, 20.0, -40.0};
    std::vector<ImuSample> out;
    const auto k0 = static_cast<std::int64_t>(std::ceil(sync::to_unit_time(telemetry_, kTraceStart) * 50.0));
    const auto k1 = static_cast<std::int64_t>(std::floor(sync::to_unit_time(telemetry_, t_finish_) * 50.0));
    out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, k1 - k0 + 1)));
    for (auto k = k0; k <= k1; ++k) {
      const double u = static_cast<double>(k) / 50.0;
      const double t = sync::to_sync_time(telemetry_, u);
      const auto st = trace_.at(t);
      const double kappa = path_.curvature(st.s);
      const double psi = path_.heading(st.s);
      const Vec3 f_veh{st.a, st.v * st.v * kappa, kGravity + pothole_vert(t)};
      const Vec3 w_veh{0.0, 0.0, st.v * kappa};
      const Vec3 fwd{std::cos(psi), std::sin(psi), 0.0}, left{-std::sin(psi), std::cos(psi), 0.0};
      const Vec3 b_veh{field_enu.dot(fwd), field_enu.dot(left), field_enu.z};
      ImuSample smp;
      smp.t = u;
      smp.accel = R.mul_t(f_veh) + Vec3{rng.normal(n.accel_sigma), rng.normal(n.accel_sigma), rng.normal(n.accel_sigma)};
      smp.gyro = R.mul_t(w_veh) + Vec3{rng.normal(n.gyro_sigma), rng.normal(n.gyro_sigma), rng.normal(n.gyro_sigma)};
      smp.mag = R.mul_t(b_veh) + Vec3{rng.normal(0.3), rng.normal(0.3), rng.normal(0.3)};
      out.push_back(smp);
    }
    return io::write_imu(header("imu", "telemetry", "t:s,accel:m/s2,gyro:rad/s,mag:uT"), out);
  }

  double pedal_at(double t) const {
    const double x = (t - kTraceStart) / kDt;
    if (x <= 0.0) return pedal_.front();
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= pedal_.size()) return pedal_.back();
    return pedal_[i] + (pedal_[i + 1] - pedal_[i]) * (x - static_cast<double>(i));
  }

  std::string obd() const {
    std::vector<RawObdFrame> out;
    const auto k0 = static_cast<std::int64_t>(std::ceil(sync::to_unit_time(telemetry_, kTraceStart) * 10.0));
    const auto k1 = static_cast<std::int64_t>(std::floor(sync::to_unit_time(telemetry_, t_finish_) * 10.0 - 0.05));
    for (auto k = k0; k <= k1; ++k) {
      const double u = static_cast<double>(k) / 10.0;
      const auto st = trace_.at(sync::to_sync_time(telemetry_, u));
      out.push_back(ingest::encode_obd_value(u, ingest::kPidEngineRpm, std::min(800.0 + 110.0 * st.v, 6000.0)));
      const auto sp = trace_.at(sync::to_sync_time(telemetry_, u + 0.002));
      out.push_back(ingest::encode_obd_value(u + 0.002, ingest::kPidVehicleSpeed, sp.v * 3.6));
      const double tp = sync::to_sync_time(telemetry_, u + 0.004);
      out.push_back(ingest::encode_obd_value(u + 0.004, ingest::kPidPedalPositionD, pedal_at(tp)));
    }
    return io::write_obd(header("obd", "telemetry", "t:s,pid,hex"), out);
  }

  static const Window* find(const std::vector<Window>& ws, double t) {
    for (const auto& w : ws) {
      if (w.contains(t)) return &w;
    }
    return nullptr;
  }

  std::string vision() const {
    Rng rng(script_.seed, 30);
    const auto& n = script_.noise;
    // Blinks: short closures every few seconds, far below the eyes-closed minimum.
    std::vector<std::pair<double, double>> blinks;
    for (double t = kTraceStart + rng.uniform(1.0, 4.0); t < t_finish_; t += rng.uniform(3.0, 6.0)) {
      blinks.emplace_back(t, t + rng.uniform(0.12, 0.3));
    }
    std::vector<VisionEvent> out;
    const auto k0 = frames_.first_at_or_after(kTraceStart, 0.0);
    const auto k1 = static_cast<std::int64_t>(std::floor(sync::to_unit_time(frames_.model, t_finish_) * 10.0 - 0.05));
    std::size_t blink = 0;
    for (auto k = k0; k <= k1; ++k) {
      const double u = static_cast<double>(k) / 10.0;
      auto gps = [&](double slot) { return frames_.gps_of(k, slot); };
      const double tg = gps(kSlotEye);
      while (blink < blinks.size() && blinks[blink].second < tg) ++blink;
      const bool blinking = blink < blinks.size() && tg >= blinks[blink].first;
      out.push_back({u + kSlotEye, Camera::Driver, vision_kind::EyeState{blinking || find(eyes_, tg)}});

      double yaw = script_.camera_yaw_deg + rng.normal(n.head_yaw_sigma_deg);
      const double th = gps(kSlotHead);
      if (const auto* w = find(distraction_, th)) {
        const double ramp = std::min(0.2, (w->t1 - w->t0) / 2.0);
        const double f = std::clamp(std::min(th - w->t0, w->t1 - th) / ramp, 0.0, 1.0);
        const double sign = w->inj % 2 == 0 ? 1.0 : -1.0;
        yaw += sign * inj_[w->inj].magnitude * f;
      }
      out.push_back({u + kSlotHead, Camera::Driver, vision_kind::HeadPose{yaw, rng.normal(2.0)}});
      if (find(yawn_, gps(kSlotYawn))) out.push_back({u + kSlotYawn, Camera::Driver, vision_kind::Yawn{true}});
      if (find(phone_, gps(kSlotPhone))) out.push_back({u + kSlotPhone, Camera::Driver, vision_kind::PhoneUse{}});

      const double tl = gps(kSlotLight);
      for (const auto& l : lights_) {
        if (tl >= l.t0 && tl <= l.t1) {
          out.push_back({u + kSlotLight, Camera::Front, vision_kind::TrafficLight{l.state}});
          break;
        }
      }
      const double ts = gps(kSlotSign);
      for (const auto& [a, b] : signs_) {
        if (ts >= a && ts <= b) {
          out.push_back({u + kSlotSign, Camera::Front, vision_kind::StopSign{}});
          break;
        }
      }
      const double tt = gps(kSlotTaillight);
      for (const auto& w : taillights_) {
        if (tt >= w.t_off - 1e-9 && tt <= w.t_end) {
          out.push_back({u + kSlotTaillight, Camera::Front, vision_kind::FrontTaillight{tt >= w.t_on - 1e-9}});
          break;
        }
      }
      const double tn = gps(kSlotNear);
      if (const auto* w = find(near_, tn)) {
        const double ramp = 1.5;
        const double dmin = inj_[w->inj].magnitude;
        const double x = std::min(tn - w->t0, w->t1 - tn);
        const double d = x >= ramp ? dmin : 20.0 - (20.0 - dmin) * x / ramp;
        if (d < 20.0) out.push_back({u + kSlotNear, Camera::Front, vision_kind::NearCollision{d}});
      }
      if (find(lane_, gps(kSlotLane))) out.push_back({u + kSlotLane, Camera::Front, vision_kind::LaneCrossing{}});
    }
    return io::write_vision(header("vision", "vision", "t:s"), out);
  }
};

}  // namespace

TripStreams synthesize(const DriveScript& script, const net::RoadNetwork& network) {
  Synth s(script, network);
  return s.run();
}

}  // namespace drivesense::sim
