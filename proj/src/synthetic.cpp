// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mfp/data.hpp"
#include "mfp/model.hpp"

namespace mfp {

int ScenarioConfig::samples() const { return static_cast<int>(std::lround(rate * duration)) + 1; }

void ScenarioConfig::validate() const {
  if (!(rate > 0.0) || !(duration > 0.0)) throw Error("ScenarioConfig: rate and duration must be positive");
  if (init_noise < 0.0 || obs_noise < 0.0) throw Error("ScenarioConfig: noise must be >= 0");
  if (num_scenes < 0) throw Error("ScenarioConfig: num_scenes must be >= 0");
  auto check = [](const auto& w) {
    double s = 0.0;
    for (double v : w) {
      if (v < 0.0) throw Error("ScenarioConfig: negative mode weight");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error("ScenarioConfig: mode weights must sum to 1");
  };
  check(weights_a);
  check(weights_c);
}

namespace {

constexpr double kPi = std::numbers::pi;

// Chain of straight segments and circular arcs, parameterised by arc length.
class Path {
 public:
  explicit Path(Point2 start, double heading) : start_(start), heading_(heading) {}

  Path& straight(double length) {
    segs_.push_back({length, 0.0});
    return *this;
  }
  /// Arc of `radius` turning by `turn` radians; negative turns right.
  Path& arc(double radius, double turn) {
    segs_.push_back({radius * std::abs(turn), turn / (radius * std::abs(turn))});
    return *this;
  }

  Point2 point(double s) const { return eval(s).first; }
  double heading(double s) const { return eval(s).second; }

 private:
  struct Seg {
    double length;
    double curvature;  // signed, positive turns left
  };

  std::pair<Point2, double> eval(double s) const {
    Point2 p = start_;
    double h = heading_;
    // Negative arc length extends the path backwards along its start heading.
    if (s < 0.0) return {p + s * Point2{std::cos(h), std::sin(h)}, h};
    for (std::size_t i = 0; i < segs_.size(); ++i) {
      const Seg& g = segs_[i];
      const bool last = i + 1 == segs_.size();
      const double l = last ? s : std::min(s, g.length);
      if (l <= 0.0) break;
      if (g.curvature == 0.0) {
        p = p + l * Point2{std::cos(h), std::sin(h)};
      } else {
        const double r = 1.0 / g.curvature;
        const double h1 = h + l * g.curvature;
        p = p + Point2{r * (std::sin(h1) - std::sin(h)), -r * (std::cos(h1) - std::cos(h))};
        h = h1;
      }
      s -= l;
      if (s <= 0.0) break;
    }
    return {p, h};
  }

  Point2 start_;
  double heading_;
  std::vector<Seg> segs_;
};

struct Vehicle {
  const Path* path;
  double s = 0.0;
  double v = 0.0;
  double lateral = 0.0;

  Point2 position() const {
    const double h = path->heading(s);
    return path->point(s) + lateral * Point2{-std::sin(h), std::cos(h)};
  }
  void step(double target, double dt) {
    const double a = std::clamp(1.5 * (target - v), -5.0, 3.0);
    v = std::max(0.0, v + a * dt);
    s += v * dt;
  }
};

template <std::size_t N>
int draw(std::mt19937_64& rng, const std::array<double, N>& w) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += w[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(N) - 1;
}

double between(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Geometry, in metres. A approaches on a right-turn slip lane and merges into
// the eastbound lane shared by B and C; C's right turn exits south well before
// the slip lane.
constexpr double kRadiusA = 14.0;
constexpr double kMergeX = 30.0;                      // A joins the lane at (30, -2)
constexpr double kMergeA = kRadiusA * kPi / 2.0;      // arc length of the merge
const Path kPathA = Path({kMergeX - kRadiusA, -2.0 - kRadiusA}, kPi / 2).arc(kRadiusA, -kPi / 2).straight(80.0);
const Path kPathB = Path({2.0, -2.0}, 0.0).straight(120.0);
const Path kPathCStraight = Path({-12.0, -2.0}, 0.0).straight(140.0);
const Path kPathCRight = Path({-12.0, -2.0}, 0.0).straight(18.0).arc(6.0, -kPi / 2).straight(80.0);
constexpr double kTurnC = 18.0;      // arc length where C's right turn starts
constexpr double kStopLineA = 12.0;  // arc length of A's stop line
constexpr double kClearB = kMergeX + 4.0 - 2.0;  // B's arc length once past the merge

}  // namespace

TrackSet generate_synthetic(const ScenarioConfig& config) {
  config.validate();
  const int n = config.samples();
  const double dt = 1.0 / config.rate;
  TrackSet out;
  out.dt = dt;
  for (int sc = 0; sc < config.num_scenes; ++sc) {
    std::mt19937_64 rng(config.seed * 0xD1B54A32D192ED03ULL + static_cast<std::uint64_t>(sc));
    const int mode_a = draw(rng, config.weights_a);
    const int mode_c = draw(rng, config.weights_c);

    std::array<Vehicle, 3> veh = {Vehicle{&kPathA}, Vehicle{&kPathB},
                                  Vehicle{mode_c == kCRight ? &kPathCRight : &kPathCStraight}};
    for (Vehicle& v : veh) {
      v.s = config.init_noise * standard_normal(rng);
      v.lateral = config.init_noise * standard_normal(rng);
    }
    const double free_a = between(rng, 5.5, 6.5);
    veh[0].v = free_a;
    veh[1].v = between(rng, 7.0, 9.0);
    veh[2].v = between(rng, 7.0, 9.0);
    const double free_c = veh[2].v;
    const double free_b = veh[1].v;

    std::array<std::vector<Point2>, 3> pos;
    double yield_peak = 0.0;  // A's top speed after onset while B crosses the conflict zone
    for (int i = 0; i < n; ++i) {
      const double time = i * dt;
      for (int a = 0; a < 3; ++a)
        pos[a].push_back(veh[a].position() +
                         Point2{config.obs_noise * standard_normal(rng), config.obs_noise * standard_normal(rng)});
      if (i + 1 == n) break;

      Vehicle& A = veh[0];
      Vehicle& B = veh[1];
      Vehicle& C = veh[2];
      const bool onset = time >= config.mode_onset;
      const double b_x = B.path->point(B.s).x;
      // Measured once the yield reaction has had one step to take effect.
      if (mode_a == kAYield && time > config.mode_onset + 0.5 * dt && b_x > kMergeX - 12.0 && b_x < kMergeX + 6.0)
        yield_peak = std::max(yield_peak, A.v);

      double ta = free_a;
      if (onset) {
        if (mode_a == kAFast) {
          ta = 10.0;
        } else if (mode_a == kAYield) {
          ta = B.s > kClearB ? 8.0 : 3.0;
        } else {
          ta = 0.0;
        }
      }
      if (onset && mode_a == kAStop) {
        const double gap = kStopLineA - A.s;
        const double brake = gap > 0.05 ? A.v * A.v / (2.0 * gap) : 5.0;
        A.v = std::max(0.0, A.v - std::min(brake, 5.0) * dt);
        A.s += A.v * dt;
      } else {
        A.step(ta, dt);
      }

      double tb = free_b;
      if (A.s > kMergeA - 2.0) {
        const double gap = A.path->point(A.s).x - b_x;
        const double want = 5.0 + B.v;
        if (gap > -2.0 && gap < want) tb = std::min(tb, A.v * std::max(gap, 0.0) / want);
      }
      B.step(tb, dt);

      double tc = free_c;
      if (onset && mode_c == kCRight) tc = C.s < kTurnC + 6.0 ? 5.0 : 7.0;
      if (C.s < kTurnC || mode_c == kCStraight) {
        // Follow the nearest car ahead in the eastbound lane: B, or A once it
        // has merged.
        const double c_x = C.path->point(C.s).x;
        double gap = b_x - c_x, lead_v = B.v;
        if (A.s > kMergeA - 2.0) {
          const double ga = A.path->point(A.s).x - c_x;
          if (ga > 0.0 && ga < gap) {
            gap = ga;
            lead_v = A.v;
          }
        }
        const double want = 5.0 + C.v;
        if (gap < want) tc = std::min(tc, lead_v * std::max(gap, 0.0) / want);
      }
      C.step(tc, dt);
    }
    if (mode_a == kAYield && yield_peak >= free_a)
      throw DataError("synthetic self-check failed: yielding car not below free-flow speed in scene " +
                      std::to_string(sc));

    const std::array<int, 3> modes = {mode_a, 0, mode_c};
    for (int a = 0; a < 3; ++a) {
      for (const Point2& q : pos[a])
        if (!std::isfinite(q.x) || !std::isfinite(q.y)) throw DataError("synthetic self-check failed: non-finite");
      out.tracks.push_back({sc, a, 0, std::move(pos[a]), a, modes[a]});
    }
  }
  return out;
}

}  // namespace mfp
