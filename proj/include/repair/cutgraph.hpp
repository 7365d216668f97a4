#pragma once

#include <optional>
#include <string>
#include <vector>

#include "repair/hgeom.hpp"
#include "repair/starcover.hpp"

namespace repair {

// ---------------------------------------------------------------------------
// Cut graphs on a tessellated *-cover X: embedded geodesic graphs that
// contain every singular vertex and whose complement has locally convex
// boundary.  Two constructions are provided: the geometric Delaunay route
// and a combinatorial straight-ray fallback in the 1-skeleton.
// ---------------------------------------------------------------------------

// A geodesic arc between two vertex classes of X (both singular for cut
// graph purposes).  Combinatorial arcs run through the 1-skeleton and store
// the directed germs traversed; Delaunay arcs run through tile interiors and
// store the developed endpoints plus the tile path.
struct SingularArc {
  int start_class = -1;
  int end_class = -1;
  double length = 0;

  // Combinatorial realization: germ k is the skeleton edge traversed k-th,
  // encoded by the (tile, side) whose start corner is the k-th vertex of
  // the walk.  Empty for geometric arcs.
  std::vector<Germ> steps;

  // Geometric realization (Delaunay arcs): endpoints developed in the
  // hyperbolic plane together with the sequence of tiles crossed, as pairs
  // (tile of X, developing isometry placing its base copy).
  HPoint dev_a, dev_b;
  std::vector<int> tiles;
  std::vector<Isometry> placements;
};

// Angular certificate at one vertex class touched by the graph: the largest
// gap (radians) between consecutive incident graph directions in the cyclic
// order around the vertex.
struct AngularGap {
  int class_id = -1;
  int incident = 0;     // number of incident graph germs/directions
  double max_gap = 0;   // radians; condition (2) requires <= pi
};

struct CutGraph {
  enum class Mode { kCombinatorial, kDelaunay };
  Mode mode = Mode::kCombinatorial;
  std::vector<SingularArc> arcs;
  // Skeleton edges of the graph (combinatorial mode): sorted unique edge ids.
  std::vector<int> edge_ids;
  double total_length = 0;
  std::vector<AngularGap> gaps;  // one entry per touched vertex class
};

// Per-singular-vertex selection budget: number of graph arc-ends incident at
// the vertex against the 4 d_v cap honored by the greedy selection.
struct VertexBudget {
  int class_id = -1;
  int chosen = 0;  // |M_v|
  int cap = 0;     // 4 d_v
};

struct CutGraphReport {
  std::string mode;                          // "combinatorial" | "delaunay"
  bool condition_singular_vertices = false;  // (1) s(X) in the vertex set
  bool condition_gaps = false;               // (2) angular gaps <= pi
  bool embedded = false;                     // arcs cross only at vertices
  double total_length = 0;
  double area = 0;
  double ratio = 0;          // l(Gamma) / Area(X)
  double c_bound = 0;        // c_delta(beta/Area, phi); 0 when beta == 0
  bool ratio_within_bound = false;  // meaningful in Delaunay mode only
  bool degenerate_density = false;  // beta/Area too large for the bound
  std::vector<AngularGap> gap_table;       // re-derived, one per touched vertex
  std::vector<VertexBudget> degree_budget; // singular vertices only
  std::vector<std::string> warnings;
  std::string to_json() const;
};

// A connected component of X cut along a cut graph, in whole-tile mode:
// the tiles on one side together with the cut sides bounding them.
struct CutComponent {
  std::vector<int> tiles;  // sorted tile ids of X
  // Sides of the boundary: (tile, side) pairs whose skeleton edge is cut.
  std::vector<std::pair<int, int>> cut_sides;
  double area = 0;
  double boundary_length = 0;
};

// ---------------------------------------------------------------------------
// Combinatorial construction: at every singular vertex of degree d, seed 2d
// straight rays spaced 2g corners (angle pi) apart and extend each one
// antipodally through regular vertices until it reaches a singular vertex.
// ---------------------------------------------------------------------------

CutGraph combinatorial_cut_graph(const StarCover& X);

// Re-derives all cut graph conditions independently of the construction and
// reports the achieved length ratio against c (and against the closed-form
// bound for the measured singularity density).
CutGraphReport verify_cut_graph(const StarCover& X, const CutGraph& graph,
                                const BasePolygon& poly);

// Whole-tile components of X minus the graph edges; certifies that no
// component contains a singular vertex in its interior and that every
// boundary wedge is locally convex.  Throws InputError when the graph fails
// its own certificate.
std::vector<CutComponent> cut(const StarCover& X, const CutGraph& graph,
                              const BasePolygon& poly);

// ---------------------------------------------------------------------------
// Geometric route: distances between singular lifts, the Delaunay graph with
// empty-circumball witnesses, and greedy selection of a cut graph.
// ---------------------------------------------------------------------------

struct SingularDistance {
  bool resolved = false;
  double distance = 0;  // meaningful when resolved
};

// Shortest developed path distance between lifts of the base vertex at the
// two vertex classes, exploring tile paths out to `radius` combinatorial
// steps; flags unresolved when the frontier could still hide a shorter path.
SingularDistance singular_distance(const StarCover& X, const BasePolygon& poly,
                                   int v_class, int u_class, int radius);

struct DelaunayEdge {
  SingularArc arc;
  HPoint witness_center;  // developed coordinates (frame of arc.placements)
  double witness_radius = 0;
};

struct DelaunayGraph {
  std::vector<int> vertices;  // singular class ids
  std::vector<DelaunayEdge> edges;
};

struct DelaunayConfig {
  int radius = 0;  // 0: use 3 * ceil(diameter estimate)
};

// Delaunay graph of the singular classes: every edge carries a witness ball
// whose interior contains no singular lift and whose boundary contains the
// two endpoints.  Throws BudgetError when distances stay unresolved at the
// configured radius.
DelaunayGraph delaunay(const StarCover& X, const BasePolygon& poly,
                       const DelaunayConfig& cfg = {});

// Greedy selection (by increasing length, deterministic tie-breaking) of
// Delaunay edges until every singular vertex is covered and all angular gaps
// are at most pi; certifies |M_v| <= 4 d_v per vertex.
CutGraph select_cut_edges(const DelaunayGraph& dg, const StarCover& X,
                          const BasePolygon& poly);

}  // namespace repair
