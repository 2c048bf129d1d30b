// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mfp/error.hpp"

namespace mfp {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

double norm(Point2 p);
double distance(Point2 a, Point2 b);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

/// Rigid frame centred on an agent with +x along its heading.
struct PovFrame {
  Point2 origin;
  double heading = 0.0;

  PovFrame() = default;
  PovFrame(Point2 o, double h) : origin(o), heading(wrap_angle(h)) {}

  Point2 to_local(Point2 world) const;
  Point2 to_world(Point2 local) const;
};

/// Heading of the most recent non-zero displacement, measured over a trailing
/// window of up to three steps. Zero-motion tracks get heading 0.
double estimate_heading(std::span<const Point2> track);

std::vector<Point2> pov_transform(std::span<const Point2> points, const PovFrame& frame);
std::vector<Point2> pov_inverse(std::span<const Point2> points, const PovFrame& frame);

}  // namespace mfp
