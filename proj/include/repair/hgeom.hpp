#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "repair/presentation.hpp"
#include "repair/starcover.hpp"

namespace repair {

// Global geometric tolerance (single knob; see GeometryConstants).
inline constexpr double kTauGeom = 1e-9;

// ---------------------------------------------------------------------------
// Hyperboloid-sheet model.  Points are 3-vectors (x, y, t) with Minkowski
// form <p,q> = x1 x2 + y1 y2 - t1 t2, self-product -1, t > 0.  Isometries are
// 3x3 matrices preserving the form with det > 0 and preserving the sheet.
// ---------------------------------------------------------------------------

using Vec3 = std::array<double, 3>;

double minkowski(const Vec3& p, const Vec3& q);
// Minkowski cross product: <x#y, x> = <x#y, y> = 0.
Vec3 mcross(const Vec3& a, const Vec3& b);

struct HPoint {
  Vec3 c{0, 0, 1};

  HPoint() = default;
  explicit HPoint(const Vec3& v);  // validates norm and sheet
  static HPoint origin() { return HPoint(); }
  // From Klein-disk coordinates (X, Y), |(X,Y)| < 1.
  static HPoint from_klein(double X, double Y);
  double kx() const { return c[0] / c[2]; }
  double ky() const { return c[1] / c[2]; }
};

double dist(const HPoint& p, const HPoint& q);

struct Isometry {
  // Row-major 3x3 matrix.
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Isometry identity() { return {}; }
  Isometry inverse() const;  // J M^T J for J-orthogonal M
  HPoint apply(const HPoint& p) const;
  Vec3 apply_vec(const Vec3& v) const;
  friend Isometry operator*(const Isometry& a, const Isometry& b);

  double max_abs_diff(const Isometry& o) const;
  bool is_identity(double tol = 1e-7) const;
  // Validates M^T J M = J within tol and det > 0.
  bool valid(double tol = 1e-7) const;
};

// Unique orientation-preserving isometry sending the ordered pair (p1, p2)
// to (q1, q2); requires dist(p1,p2) == dist(q1,q2) within tolerance.
Isometry isometry_from_pairs(const HPoint& p1, const HPoint& p2, const HPoint& q1,
                             const HPoint& q2);

// Translation by distance t along the oriented geodesic through p toward q.
HPoint geodesic_point(const HPoint& p, const HPoint& q, double t);

// Angle at apex a of the geodesic wedge (b, a, c), in [0, pi].
double angle_at(const HPoint& a, const HPoint& b, const HPoint& c);

// ---------------------------------------------------------------------------
// Geodesics: represented by a unit spacelike normal n (<n,n> = +1); the
// geodesic is {p : <p,n> = 0}.  In the Klein disk this is the straight line
// n_x X + n_y Y = n_t.
// ---------------------------------------------------------------------------

struct Geodesic {
  Vec3 normal{1, 0, 0};  // unit spacelike

  // Signed "side" value of a point: <p, n>; sinh(distance) in magnitude.
  double side(const HPoint& p) const { return minkowski(p.c, normal); }
};

// Intersection point if the geodesics cross; nullopt when disjoint/equal.
std::optional<HPoint> geodesic_intersection(const Geodesic& g1, const Geodesic& g2);

// Oriented axis of a hyperbolic isometry, with parameterization.
struct AxisDescriptor {
  Geodesic geodesic;
  HPoint base;          // a point on the axis (foot of origin perpendicular)
  Vec3 direction{0, 0, 0};  // unit spacelike tangent at base, translation dir
  double translation_length = 0;

  // Point at arc-length parameter t from base along direction.
  HPoint at(double t) const;
  // Arc-length parameter of the orthogonal projection of p onto the axis.
  double param_of(const HPoint& p) const;
};

// ---------------------------------------------------------------------------
// Klein-disk convex polygon utilities (geodesics are straight lines there).
// ---------------------------------------------------------------------------

struct KleinPolygon {
  // Vertices in counterclockwise order (Klein coordinates).
  std::vector<std::array<double, 2>> pts;

  bool empty_area(double tol = 1e-12) const;
  bool contains(double X, double Y, double tol = 1e-12) const;
};

// Clip by the half-plane side(p) <= 0 of a geodesic (keeps <p,n> <= 0 side).
KleinPolygon clip(const KleinPolygon& poly, const Geodesic& g);
// Hyperbolic area via triangulation (pi - angle sum per triangle).
double hyperbolic_area(const KleinPolygon& poly);

// ---------------------------------------------------------------------------
// Base polygon: the regular 4g-gon with one vertex cycle and total corner
// angle 2pi, side-paired per the starcover labeling table.
// ---------------------------------------------------------------------------

struct BasePolygon {
  int genus = 2;
  std::vector<HPoint> vertices;     // 4g vertices, vertex k at angle 2pi k/4g
  std::vector<Isometry> crossing;   // crossing element per side k
  std::vector<Isometry> generators; // holonomy of a_1, b_1, ..., indexed as Letter
  double side_length = 0;
  double circumradius = 0;
  double area = 0;

  const Isometry& holonomy_letter(const Letter& l) const;
  Isometry holonomy(const Word& w) const;

  HPoint vertex(int k) const { return vertices[k % vertices.size()]; }
  // Geodesic carrying side k, oriented so the polygon interior is on the
  // side(p) <= 0 half-plane.
  Geodesic side_geodesic(int k) const;
  KleinPolygon klein() const;
  bool contains(const HPoint& p, double tol = 1e-12) const;
};

BasePolygon build_base_polygon(int g);

// Axis of the holonomy of w; throws InputError unless hyperbolic.
AxisDescriptor axis(const Word& w, const BasePolygon& poly);
AxisDescriptor axis_of(const Isometry& m);

// ---------------------------------------------------------------------------
// Closed-form constants.
// ---------------------------------------------------------------------------

// Area of a hyperbolic sector of central angle phi and radius r:
// phi (cosh r - 1) = 2 phi sinh^2(r/2).
double sector_area(double phi, double radius);

// c_delta = 32 delta arcsinh(sqrt(2 / (phi delta))).
double c_delta(double delta, double phi);

struct GeometryConstants {
  double r_sep = 0;    // min distance between distinct lifts of the vertex
  double phi = 0;      // angle of the area bound, from the r_sep construction
  double tolerance = kTauGeom;
  std::vector<std::pair<std::string, double>> measured_ratios;
};

// Computes r_sep by exhausting the deck-group ball that can move the vertex
// by at most the current minimum, and phi = pi - 2 arcsin(1/cosh(r_sep/2))
// (angle at the midpoint of the common perpendicular of two lines at
// distance r_sep, between the rays to corresponding ideal endpoints).
GeometryConstants geometry_constants(const BasePolygon& poly);

// ---------------------------------------------------------------------------
// Deck-group ball enumeration with words (used by the lambda system and the
// capping machinery).
// ---------------------------------------------------------------------------

struct GroupElement {
  Isometry mat;
  Word word;
};

// All elements of word length <= max_len whose matrices are pairwise
// distinct; element 0 is the identity.
std::vector<GroupElement> group_ball(const BasePolygon& poly, int max_len);

// Index of `m` in `elements`, or -1.
int find_element(const std::vector<GroupElement>& elements, const Isometry& m,
                 double tol = 1e-6);

}  // namespace repair
