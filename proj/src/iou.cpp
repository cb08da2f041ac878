#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "geoperc/error.hpp"
#include "geoperc/geom.hpp"

namespace geoperc {
namespace {

constexpr double kPlaneEps = 1e-9;

using Polygon = std::vector<Vec3>;

// Closed convex polytope as a list of outward-oriented (counter-clockwise seen from
// outside) planar faces.
struct Polytope {
  std::vector<Polygon> faces;
};

struct HalfSpace {
  Vec3 normal;  // keeps points with dot(normal, x) <= offset
  double offset;
  double distance(const Vec3& p) const { return dot(normal, p) - offset; }
};

Polytope box_polytope(const OrientedBox3& box, const Vec3& origin) {
  auto corners = box_corners(box);
  for (auto& c : corners) c = c - origin;
  const Vec3 center = box.center() - origin;
  Polytope poly;
  for (int axis = 0; axis < 3; ++axis) {
    const int a = 1 << ((axis + 1) % 3);
    const int b = 1 << ((axis + 2) % 3);
    for (int side = 0; side < 2; ++side) {
      const int base = side ? (1 << axis) : 0;
      Polygon face{corners[base], corners[base | a], corners[base | a | b], corners[base | b]};
      const Vec3 face_normal = cross(face[1] - face[0], face[2] - face[0]);
      const Vec3 face_center = (face[0] + face[2]) * 0.5;
      if (dot(face_normal, face_center - center) < 0.0) std::reverse(face.begin(), face.end());
      poly.faces.push_back(std::move(face));
    }
  }
  return poly;
}

Polygon clip_polygon(const Polygon& poly, const HalfSpace& h) {
  Polygon out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = poly[i];
    const Vec3& q = poly[(i + 1) % n];
    const double dp = h.distance(p);
    const double dq = h.distance(q);
    const bool p_in = dp <= kPlaneEps;
    const bool q_in = dq <= kPlaneEps;
    if (p_in) out.push_back(p);
    if (p_in != q_in) {
      const double t = dp / (dp - dq);
      out.push_back(p + (q - p) * t);
    }
  }
  return out;
}

Polytope clip(const Polytope& poly, const HalfSpace& h) {
  bool any_outside = false;
  bool any_inside = false;
  for (const auto& face : poly.faces)
    for (const auto& v : face) {
      const double d = h.distance(v);
      any_outside |= d > kPlaneEps;
      any_inside |= d < -kPlaneEps;
    }
  if (!any_outside) return poly;
  if (!any_inside) return {};

  Polytope out;
  std::vector<Vec3> cap;
  for (const auto& face : poly.faces) {
    Polygon clipped = clip_polygon(face, h);
    if (clipped.size() < 3) continue;
    for (const auto& v : clipped)
      if (std::abs(h.distance(v)) <= kPlaneEps) cap.push_back(v);
    out.faces.push_back(std::move(clipped));
  }
  if (cap.size() >= 3) {
    Vec3 centroid{};
    for (const auto& v : cap) centroid += v;
    centroid = centroid / static_cast<double>(cap.size());
    // In-plane basis (u, w) with u x w = normal, so ascending angle is CCW about the normal.
    const Vec3 helper = std::abs(h.normal.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 u = cross(h.normal, helper);
    u = u / norm(u);
    const Vec3 w = cross(h.normal, u);
    std::vector<std::pair<double, Vec3>> keyed;
    keyed.reserve(cap.size());
    for (const auto& v : cap) {
      const Vec3 d = v - centroid;
      keyed.emplace_back(std::atan2(dot(d, w), dot(d, u)), v);
    }
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& l, const auto& r) { return l.first < r.first; });
    Polygon cap_face;
    for (const auto& [angle, v] : keyed)
      if (cap_face.empty() || norm(v - cap_face.back()) > 1e-12) cap_face.push_back(v);
    if (cap_face.size() >= 3) out.faces.push_back(std::move(cap_face));
  }
  return out;
}

std::size_t distinct_vertex_count(const Polytope& poly) {
  std::vector<Vec3> unique;
  for (const auto& face : poly.faces)
    for (const auto& v : face) {
      const bool seen = std::any_of(unique.begin(), unique.end(),
                                    [&](const Vec3& u) { return norm(u - v) <= 1e-12; });
      if (!seen) unique.push_back(v);
    }
  return unique.size();
}

// Divergence theorem: sum of signed tetrahedra (origin, fan triangle) over all faces.
double volume(const Polytope& poly) {
  double six_v = 0.0;
  for (const auto& face : poly.faces)
    for (std::size_t i = 1; i + 1 < face.size(); ++i)
      six_v += dot(face[0], cross(face[i], face[i + 1]));
  return six_v / 6.0;
}

}  // namespace

double box_intersection_volume(const OrientedBox3& a, const OrientedBox3& b) {
  // Work relative to a's center to keep the signed-volume sum well conditioned.
  const Vec3 origin = a.center();
  Polytope poly = box_polytope(a, origin);
  const Vec3 bc = b.center() - origin;
  const Vec3 half = b.size() * 0.5;
  for (int axis = 0; axis < 3 && !poly.faces.empty(); ++axis) {
    const Vec3 n = b.rotation().column(axis);
    const double c = dot(n, bc);
    poly = clip(poly, {n, c + half[axis]});
    if (poly.faces.empty()) break;
    poly = clip(poly, {-n, -c + half[axis]});
  }
  if (poly.faces.empty() || distinct_vertex_count(poly) < 4) return 0.0;
  return std::max(0.0, volume(poly));
}

double box_iou(const OrientedBox3& a, const OrientedBox3& b) {
  const double inter = box_intersection_volume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double box_iou_mc(const OrientedBox3& a, const OrientedBox3& b, std::uint64_t n_samples,
                  std::uint64_t seed) {
  if (n_samples == 0) throw InvalidArgument("n_samples must be >= 1");
  Vec3 lo{INFINITY, INFINITY, INFINITY};
  Vec3 hi{-INFINITY, -INFINITY, -INFINITY};
  for (const auto* box : {&a, &b})
    for (const auto& c : box_corners(*box)) {
      lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
      hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
    }
  const Vec3 extent = hi - lo;
  std::mt19937_64 rng(seed);
  constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  auto unit = [&] { return static_cast<double>(rng() >> 11) * kInv53; };
  std::uint64_t in_a = 0, in_b = 0, in_both = 0;
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    const double x = lo.x + extent.x * unit();
    const double y = lo.y + extent.y * unit();
    const double z = lo.z + extent.z * unit();
    const Vec3 p{x, y, z};
    const bool ia = a.contains(p);
    const bool ib = b.contains(p);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const std::uint64_t in_union = in_a + in_b - in_both;
  if (in_union == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(in_union);
}

}  // namespace geoperc
