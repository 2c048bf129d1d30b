// SPDX-License-Identifier: Apache-2.0
#include "mfp/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace mfp {

namespace {

constexpr double kPixelsPerMetre = 10.0;
constexpr double kMargin = 20.0;
constexpr std::array<const char*, 6> kModeColours = {"#d62728", "#9467bd", "#2ca02c",
                                                     "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Ellipse density_ellipse(const BivariateNormalParams& p, double k) {
  const double a = p.sigma_x * p.sigma_x;
  const double c = p.sigma_y * p.sigma_y;
  const double b = p.rho * p.sigma_x * p.sigma_y;
  const double mid = 0.5 * (a + c);
  const double rad = std::hypot(0.5 * (a - c), b);
  Ellipse e;
  e.center = p.mean();
  e.major = k * std::sqrt(mid + rad);
  e.minor = k * std::sqrt(std::max(mid - rad, 0.0));
  e.angle = 0.5 * std::atan2(2.0 * b, a - c);
  return e;
}

std::string scene_svg(const Scene& scene, const std::vector<RolloutResult>& predictions, double sigma_k) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  auto grow = [&](Point2 p, double r) {
    x0 = std::min(x0, p.x - r);
    x1 = std::max(x1, p.x + r);
    y0 = std::min(y0, p.y - r);
    y1 = std::max(y1, p.y + r);
  };
  for (const AgentTrack& a : scene.agents) {
    for (Point2 p : a.past) grow(p, 0.0);
    for (Point2 p : a.future) grow(p, 0.0);
  }
  std::vector<std::pair<Ellipse, int>> ellipses;
  for (const RolloutResult& r : predictions)
    for (std::size_t a = 0; a < r.density.size(); ++a)
      for (const BivariateNormalParams& d : r.density[a]) {
        const Ellipse e = density_ellipse(d, sigma_k);
        // Very wide ellipses would swamp the scene; they are clipped by the
        // viewport instead of stretching it.
        grow(e.center, std::min(e.major, 5.0));
        ellipses.push_back({e, a < r.modes.size() ? r.modes[a] : 0});
      }
  if (x0 > x1) x0 = y0 = x1 = y1 = 0.0;

  const double width = (x1 - x0) * kPixelsPerMetre + 2 * kMargin;
  const double height = (y1 - y0) * kPixelsPerMetre + 2 * kMargin;
  auto px = [&](double x) { return (x - x0) * kPixelsPerMetre + kMargin; };
  auto py = [&](double y) { return (y1 - y) * kPixelsPerMetre + kMargin; };

  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (const auto& [e, mode] : ellipses) {
    const char* colour = kModeColours[static_cast<std::size_t>(mode) % kModeColours.size()];
    const double deg = -e.angle * 180.0 / std::numbers::pi;  // y axis points down
    out += "<ellipse cx=\"" + num(px(e.center.x)) + "\" cy=\"" + num(py(e.center.y)) + "\" rx=\"" +
           num(e.major * kPixelsPerMetre) + "\" ry=\"" + num(e.minor * kPixelsPerMetre) + "\" transform=\"rotate(" +
           num(deg) + " " + num(px(e.center.x)) + " " + num(py(e.center.y)) + ")\" fill=\"" + colour +
           "\" fill-opacity=\"0.15\" stroke=\"" + colour + "\" stroke-opacity=\"0.5\" stroke-width=\"0.5\"/>\n";
  }

  auto path = [&](const std::vector<Point2>& pts, const char* colour) {
    if (pts.empty()) return;
    std::string d;
    for (std::size_t i = 0; i < pts.size(); ++i)
      d += (i == 0 ? "M " : " L ") + num(px(pts[i].x)) + " " + num(py(pts[i].y));
    out += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
  };
  for (const AgentTrack& a : scene.agents) {
    path(a.past, "#1f77b4");
    if (!a.future.empty()) {
      // The future track starts at the last observed point so the two join.
      std::vector<Point2> fut;
      if (!a.past.empty()) fut.push_back(a.past.back());
      fut.insert(fut.end(), a.future.begin(), a.future.end());
      path(fut, "#ff7f0e");
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mfp
