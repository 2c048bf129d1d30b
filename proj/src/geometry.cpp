// SPDX-License-Identifier: Apache-2.0
#include "mfp/geometry.hpp"

#include <cmath>
#include <numbers>

namespace mfp {

double norm(Point2 p) { return std::hypot(p.x, p.y); }

double distance(Point2 a, Point2 b) { return norm(a - b); }

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(radians, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

Point2 PovFrame::to_local(Point2 world) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const Point2 d = world - origin;
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

Point2 PovFrame::to_world(Point2 local) const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  return {origin.x + c * local.x - s * local.y, origin.y + s * local.x + c * local.y};
}

double estimate_heading(std::span<const Point2> track) {
  if (track.empty()) throw DataError("estimate_heading: empty track");
  constexpr std::size_t window = 3;
  for (std::size_t end = track.size() - 1; end >= 1; --end) {
    const std::size_t start = end >= window ? end - window : 0;
    const Point2 d = track[end] - track[start];
    if (d.x != 0.0 || d.y != 0.0) return wrap_angle(std::atan2(d.y, d.x));
  }
  return 0.0;
}

std::vector<Point2> pov_transform(std::span<const Point2> points, const PovFrame& frame) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const Point2& p : points) out.push_back(frame.to_local(p));
  return out;
}

std::vector<Point2> pov_inverse(std::span<const Point2> points, const PovFrame& frame) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const Point2& p : points) out.push_back(frame.to_world(p));
  return out;
}

}  // namespace mfp
