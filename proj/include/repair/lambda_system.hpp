#pragma once

#include <string>
#include <vector>

#include "repair/hgeom.hpp"

namespace repair {

// ---------------------------------------------------------------------------
// Chain-curve system: 2g simple closed geodesics lambda_0..lambda_{2g-1}
// where consecutive curves cross exactly once and all other pairs are
// disjoint.  Their complement is a single convex (8g-4)-gon P which tiles the
// surface; the tiling refines against the base 4g-gon to a finite overlay.
// ---------------------------------------------------------------------------

struct LambdaCurve {
  Word word;            // conjugacy-class representative
  AxisDescriptor axis;  // oriented axis of its holonomy
  double length = 0;    // translation length

  // Arc-length positions (mod length) along the axis where the neighboring
  // chain curves cross.  mark_prev is the crossing with curve i-1 (unused
  // for i = 0), mark_next with curve i+1 (unused for the last curve).
  double mark_prev = 0;
  double mark_next = 0;
};

// Label of a side of P: which chain curve carries it, which of the (at most
// two) arcs of that curve between its marked points it covers, and whether
// the side runs against the curve orientation.
struct PSideLabel {
  int curve = 0;
  int arc = 0;       // 0 or 1; the two end curves of the chain only use 0
  bool bar = false;  // true when traversed against the curve orientation

  bool operator==(const PSideLabel&) const = default;
};

struct PSide {
  PSideLabel label;
  double length = 0;
  int partner = -1;    // the side this one is glued to (involution)
  Isometry crossing;   // deck element: neighbor tile across this side
  Word crossing_word;  // its word in the generators
  Word lift_word;      // g such that the side lies on holonomy(g)*axis(curve)
};

// A cell of the common refinement of the base 4g-gon tessellation and the
// P tessellation: cell = base polygon  intersect  holonomy(deck_word)*P.
struct OverlayCell {
  Word deck_word;
  Isometry deck;
  KleinPolygon poly;
  double area = 0;
};

struct LambdaSystem {
  int genus = 2;
  std::vector<LambdaCurve> curves;              // 2g
  std::vector<std::vector<int>> intersections;  // 2g x 2g geometric counts
  std::vector<HPoint> p_vertices;               // 8g-4 ccw; side k: k -> k+1
  std::vector<PSide> sides;                     // 8g-4
  std::vector<std::vector<int>> vertex_cycles;  // corner orbits, each size 4
  double p_area = 0;
  HPoint interior_point;  // a fixed generic point strictly inside P
  std::vector<OverlayCell> overlay;

  int num_sides() const { return static_cast<int>(sides.size()); }
  HPoint p_vertex(int k) const;
  // Geodesic carrying side k, oriented so the interior is on side() <= 0.
  Geodesic p_side_geodesic(int k) const;
  KleinPolygon klein() const;
  bool contains(const HPoint& p, double tol = 1e-12) const;
};

// Builds and certifies the full system (curve table, polygon, side pairing,
// corner cycles, overlay).  Throws CertificateError with diagnostics when a
// certificate fails; genus must be 2.
LambdaSystem build_lambda_system(const BasePolygon& poly);
LambdaSystem build_lambda_system(int g);

// Same, but consults the disk cache directory named by the environment
// variable SURFACE_REPAIR_CACHE (no caching when unset).  A stale or
// mismatched cache entry is regenerated.
LambdaSystem load_or_build_lambda_system(const BasePolygon& poly);

// Serialization of the combinatorial data (words, labels, pairing, cycles);
// geometry is reconstructed and re-certified on load.  Byte-stable.
std::string lambda_to_json(const LambdaSystem& sys);
LambdaSystem lambda_from_json(const std::string& text, const BasePolygon& poly);

// On-surface intersection points of the closed geodesics carried by the two
// axes, enumerated over lifts holonomy(g)*b for g in `ball` and reported as
// arc-length parameters (mod a.translation_length) along a.  With a == b
// this lists self-intersections, so empty output certifies simplicity among
// the enumerated lifts.
std::vector<double> geodesic_intersection_params(const AxisDescriptor& a,
                                                 const AxisDescriptor& b,
                                                 const std::vector<GroupElement>& ball);
int geodesic_intersection_count(const AxisDescriptor& a, const AxisDescriptor& b,
                                const std::vector<GroupElement>& ball);

// One P-tessellation wall crossing of a straight segment: the side index of
// the tile being exited and that tile's deck word.
struct SideCrossing {
  int side = -1;
  Word tile;
};

// Ordered wall crossings of the geodesic segment [a, b], starting inside
// tile holonomy(start)*P; throws when a is not in the start tile or when the
// segment passes too close to a tile vertex.
std::vector<SideCrossing> segment_side_crossings(const LambdaSystem& sys,
                                                 const BasePolygon& poly,
                                                 const HPoint& a, const HPoint& b,
                                                 const Word& start = {});

}  // namespace repair
