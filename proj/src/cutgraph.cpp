#include "repair/cutgraph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "repair/errors.hpp"

namespace repair {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// A developed segment passing closer than this to a tile vertex is treated
// as running through the vertex.
constexpr double kVertexGraze = 1e-7;
// Matching tolerance for placed points that should coincide (distinct lifts
// of the base vertex are separated by at least the systole, which is ~1).
constexpr double kLiftMatch = 1e-6;

const BasePolygon& cached_polygon(int genus) {
  static std::map<int, BasePolygon> cache;
  auto it = cache.find(genus);
  if (it == cache.end()) it = cache.emplace(genus, build_base_polygon(genus)).first;
  return it->second;
}

double corner_angle(int genus) { return M_PI / (2.0 * genus); }

// ---------------------------------------------------------------------------
// Combinatorial straight walks in the 1-skeleton.
// ---------------------------------------------------------------------------

struct CombArc {
  int start_class = -1;
  int end_class = -1;
  std::vector<Germ> steps;
};

// Extends the germ at `pos` of the (singular) class `cls` straight through
// regular vertices (antipodal germ position) until a singular vertex.
CombArc trace_spoke(const StarCover& X, int cls, int pos) {
  const int g = X.genus();
  const int s4g = 4 * g;
  CombArc arc;
  arc.start_class = cls;
  // A straight walk is reversible, so it cannot revisit a directed germ
  // before returning to its (singular) start; the bound below is generous.
  const std::size_t budget = static_cast<std::size_t>(X.num_edges()) * 2 + 8;
  int c = cls;
  int q = pos;
  while (true) {
    const Germ& w = X.vertex_classes()[c].germs[q];
    arc.steps.push_back(w);
    auto [c2, q2] = X.germ_position_end(w.tile, w.side);
    if (X.vertex_classes()[c2].singular()) {
      arc.end_class = c2;
      return arc;
    }
    c = c2;
    q = (q2 + 2 * g) % s4g;
    if (arc.steps.size() > budget)
      throw CertificateError("straight spoke failed to terminate");
  }
}

// Germ positions (per vertex class) touched by a set of skeleton arcs.
std::map<int, std::set<int>> touched_positions(const StarCover& X,
                                               const std::vector<SingularArc>& arcs) {
  std::map<int, std::set<int>> touched;
  for (const SingularArc& a : arcs) {
    for (const Germ& w : a.steps) {
      auto [cs, ps] = X.germ_position_start(w.tile, w.side);
      touched[cs].insert(ps);
      auto [ce, pe] = X.germ_position_end(w.tile, w.side);
      touched[ce].insert(pe);
    }
  }
  return touched;
}

double max_circular_gap(std::vector<double> angles, double total) {
  if (angles.empty()) return total;
  std::sort(angles.begin(), angles.end());
  double gap = angles.front() + total - angles.back();
  for (std::size_t i = 1; i < angles.size(); ++i)
    gap = std::max(gap, angles[i] - angles[i - 1]);
  return gap;
}

// ---------------------------------------------------------------------------
// Developed-geometry helpers.
// ---------------------------------------------------------------------------

bool same_placement(const Isometry& a, const Isometry& b) {
  double scale = 1.0;
  for (int i = 0; i < 9; ++i)
    scale = std::max(scale, std::max(std::abs(a.m[i]), std::abs(b.m[i])));
  double diff = 0.0;
  for (int i = 0; i < 9; ++i) diff = std::max(diff, std::abs(a.m[i] - b.m[i]));
  return diff < 1e-6 * scale;
}

// Near-coincidence of points, relative to coordinate size: hyperboloid
// coordinates grow like e^d, so an absolute threshold on a near-zero
// distance far from the origin only measures sqrt-amplified rounding noise.
bool same_point(const HPoint& a, const HPoint& b, double tol = 1e-6) {
  double scale = 1.0, diff = 0.0;
  for (int i = 0; i < 3; ++i) {
    scale = std::max({scale, std::abs(a.c[i]), std::abs(b.c[i])});
    diff = std::max(diff, std::abs(a.c[i] - b.c[i]));
  }
  return diff < tol * scale;
}

struct PlacedCorner {
  int tile = -1;
  int corner = -1;
  Isometry U;
};

// All corners (with placements) around the vertex at corner (t0, c0) of the
// tile placed by U0, in corner-walk order.  The walk crosses the side whose
// index equals the current corner; the shared vertex must stay fixed.
std::vector<PlacedCorner> wedge_at(const StarCover& X, const BasePolygon& poly,
                                   int t0, int c0, const Isometry& U0) {
  const int s4g = 4 * X.genus();
  const HPoint pivot = U0.apply(poly.vertex(c0));
  std::vector<PlacedCorner> out;
  int t = t0, c = c0;
  Isometry U = U0;
  do {
    out.push_back({t, c, U});
    int nt = X.crossing(c)(t);
    int nc = (side_partner(X.genus(), c) + 1) % s4g;
    Isometry nU = U * poly.crossing[c];
    if (!same_point(pivot, nU.apply(poly.vertex(nc)))) {
      if (getenv("CUTGRAPH_DEBUG")) {
        HPoint q = nU.apply(poly.vertex(nc));
        fprintf(stderr, "wedge drift: t0=%d c0=%d t=%d c=%d nc=%d pivot=(%g,%g,%g) q=(%g,%g,%g)\n",
                t0, c0, t, c, nc, pivot.c[0], pivot.c[1], pivot.c[2], q.c[0], q.c[1], q.c[2]);
      }
      throw CertificateError("corner walk placement drifted off the vertex");
    }
    t = nt;
    c = nc;
    U = nU;
  } while (!(t == t0 && c == c0 && same_placement(U, U0)));
  return out;
}

// Klein-line value of side k at a Klein point; interior is <= 0.
double klein_side_value(const BasePolygon& poly, int k, double X, double Y) {
  const Vec3& n = poly.side_geodesic(k).normal;
  return n[0] * X + n[1] * Y - n[2];
}

// Angular coordinate (radians, in [0, 2 pi d)) of a direction leaving the
// vertex at placed corner (tile, corner, U) toward the point `toward`,
// measured in the cyclic germ order of the vertex class.
double direction_coordinate(const StarCover& X, const BasePolygon& poly, int tile,
                            int corner, const Isometry& U, const HPoint& toward) {
  const int s4g = 4 * X.genus();
  const double theta = corner_angle(X.genus());
  int prev_side = (corner + s4g - 1) % s4g;
  auto [ce, pe] = X.germ_position_end(tile, prev_side);
  auto [cs, ps] = X.germ_position_start(tile, corner);
  if (ce != cs) throw CertificateError("corner has germs in two vertex classes");
  const int n = static_cast<int>(X.vertex_classes()[cs].germs.size());
  const HPoint vp = U.apply(poly.vertex(corner));
  int low;
  HPoint ray;  // point on the germ ray at the low angular side of the corner
  if ((pe + 1) % n == ps) {
    low = pe;
    ray = U.apply(poly.vertex((corner + s4g - 1) % s4g));
  } else if ((ps + 1) % n == pe) {
    low = ps;
    ray = U.apply(poly.vertex((corner + 1) % s4g));
  } else {
    throw CertificateError("corner germs are not adjacent in the vertex link");
  }
  double local = angle_at(vp, ray, toward);
  if (local > theta + 1e-6) {
    if (getenv("CUTGRAPH_DEBUG"))
      fprintf(stderr,
              "direction_coordinate: tile=%d corner=%d local=%g theta=%g low=%d\n",
              tile, corner, local, theta, low);
    throw CertificateError("direction leaves its corner wedge");
  }
  return low * theta + std::min(local, theta);
}

// Recovers the base-frame corner index of a developed endpoint of an arc.
int corner_at_point(const BasePolygon& poly, const Isometry& place, const HPoint& p) {
  const HPoint local = place.inverse().apply(p);
  int best = -1;
  double bd = kInf;
  for (std::size_t c = 0; c < poly.vertices.size(); ++c) {
    double d = dist(local, poly.vertex(static_cast<int>(c)));
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  // Coordinate comparison, not distance: a near-zero distance between
  // points with coordinates of size e^d only resolves sqrt-amplified
  // rounding noise, while distinct vertices stay a full side length apart.
  if (!same_point(local, poly.vertex(best), 1e-5))
    throw CertificateError("arc endpoint is not at a tile vertex");
  return best;
}

// Angular coordinates contributed by one arc at a vertex class, for both
// skeleton and developed realizations.  Appends (class, angle) pairs.
void arc_end_angles(const StarCover& X, const BasePolygon& poly, const SingularArc& a,
                    std::vector<std::pair<int, double>>* out) {
  const double theta = corner_angle(X.genus());
  if (!a.steps.empty()) {
    const Germ& f = a.steps.front();
    auto [cs, ps] = X.germ_position_start(f.tile, f.side);
    out->push_back({cs, ps * theta});
    const Germ& l = a.steps.back();
    auto [ce, pe] = X.germ_position_end(l.tile, l.side);
    out->push_back({ce, pe * theta});
    return;
  }
  if (a.tiles.empty()) throw CertificateError("arc carries no realization");
  const double eps = std::min(1e-3, a.length / 3);
  if (getenv("CUTGRAPH_DEBUG"))
    fprintf(stderr, "arc_end_angles: cls %d->%d len=%g ntiles=%zu front=%d back=%d\n",
            a.start_class, a.end_class, a.length, a.tiles.size(), a.tiles.front(),
            a.tiles.back());
  {
    int c = corner_at_point(poly, a.placements.front(), a.dev_a);
    HPoint toward = geodesic_point(a.dev_a, a.dev_b, eps);
    out->push_back({a.start_class, direction_coordinate(X, poly, a.tiles.front(), c,
                                                        a.placements.front(), toward)});
  }
  {
    int c = corner_at_point(poly, a.placements.back(), a.dev_b);
    HPoint toward = geodesic_point(a.dev_b, a.dev_a, eps);
    if (getenv("CUTGRAPH_DEBUG")) {
      HPoint lb = a.placements.back().inverse().apply(a.dev_b);
      HPoint lt = a.placements.back().inverse().apply(toward);
      fprintf(stderr, "  end: corner=%d local_b=(%g,%g) local_toward=(%g,%g)\n", c,
              lb.kx(), lb.ky(), lt.kx(), lt.ky());
    }
    out->push_back({a.end_class, direction_coordinate(X, poly, a.tiles.back(), c,
                                                      a.placements.back(), toward)});
  }
}

std::vector<AngularGap> gap_table_from_arcs(const StarCover& X, const BasePolygon& poly,
                                            const std::vector<SingularArc>& arcs) {
  const double theta = corner_angle(X.genus());
  std::map<int, std::vector<double>> angles;
  // Skeleton arcs also pass through regular vertices; every visited germ
  // contributes a direction there.
  for (const auto& [cls, poss] : touched_positions(X, arcs))
    for (int p : poss) angles[cls].push_back(p * theta);
  std::vector<std::pair<int, double>> ends;
  for (const SingularArc& a : arcs)
    if (a.steps.empty()) arc_end_angles(X, poly, a, &ends);
  for (const auto& [cls, ang] : ends) angles[cls].push_back(ang);
  std::vector<AngularGap> out;
  for (auto& [cls, list] : angles) {
    const double total = 2 * M_PI * X.vertex_classes()[cls].degree;
    AngularGap g;
    g.class_id = cls;
    g.incident = static_cast<int>(list.size());
    g.max_gap = max_circular_gap(list, total);
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Developed patches: a bounded exploration of the universal-cover picture
// around one lift of the base vertex, one placed copy of the base polygon
// per developed tile.
// ---------------------------------------------------------------------------

struct Patch {
  std::vector<int> tile;
  std::vector<Isometry> place;
  std::vector<int> depth;
  // Any point of the cover outside the explored tiles is at least this far
  // from the patch source (+inf when the component was exhausted).
  double frontier = kInf;
  // True when some tile was skipped for combinatorial depth (as opposed to
  // the metric cap): growing the metric cap alone cannot help then.
  bool depth_limited = false;
};

// Explores placed copies of the tiles around x0, including every tile whose
// center lies within metric_cap of x0, out to max_depth crossings.  Distinct
// placements of one tile keep their centers a tile-size apart, so dedup
// buckets placed centers on a unit grid.
Patch develop_patch(const StarCover& X, const BasePolygon& poly, int t0,
                    const Isometry& U0, const HPoint& x0, int max_depth,
                    double metric_cap, std::size_t max_tiles) {
  const int s4g = 4 * X.genus();
  Patch P;
  using Key = std::tuple<int, long long, long long, long long>;
  std::map<Key, std::vector<int>> buckets;
  const HPoint center = HPoint::origin();
  auto push = [&](int t, const Isometry& U, int d) -> bool {
    const HPoint c = U.apply(center);
    for (double o0 : {0.0, 0.5, -0.5})
      for (double o1 : {0.0, 0.5, -0.5})
        for (double o2 : {0.0, 0.5, -0.5}) {
          auto it = buckets.find(Key{t, llround(c.c[0] + o0), llround(c.c[1] + o1),
                                     llround(c.c[2] + o2)});
          if (it == buckets.end()) continue;
          for (int idx : it->second)
            if (same_placement(P.place[idx], U)) return false;
        }
    const double dc = dist(x0, c);
    if (d > max_depth) {
      P.depth_limited = true;
      P.frontier = std::min(P.frontier, std::max(0.0, dc - poly.circumradius));
      return false;
    }
    if (dc > metric_cap) {
      P.frontier = std::min(P.frontier, std::max(0.0, dc - poly.circumradius));
      return false;
    }
    buckets[Key{t, llround(c.c[0]), llround(c.c[1]), llround(c.c[2])}].push_back(
        static_cast<int>(P.tile.size()));
    P.tile.push_back(t);
    P.place.push_back(U);
    P.depth.push_back(d);
    return true;
  };
  push(t0, U0, 0);
  for (std::size_t head = 0; head < P.tile.size(); ++head) {
    if (P.tile.size() > max_tiles)
      throw BudgetError("developed patch exceeded its tile budget; lower the radius");
    const int t = P.tile[head];
    const Isometry U = P.place[head];
    const int d = P.depth[head];
    for (int k = 0; k < s4g; ++k) {
      int t2 = X.crossing(k)(t);
      push(t2, U * poly.crossing[k], d + 1);
    }
  }
  return P;
}

// Distinct lifts of vertex classes seen in a patch.
struct VertexLift {
  HPoint pos;
  int cls = -1;
  int tile = -1;    // one placed corner representing the lift
  int corner = -1;
  Isometry place;
};

std::vector<VertexLift> collect_lifts(const StarCover& X, const BasePolygon& poly,
                                      const Patch& P, bool singular_only) {
  std::vector<VertexLift> lifts;
  std::map<std::tuple<long long, long long, long long>, std::vector<int>> buckets;
  const int s4g = 4 * X.genus();
  auto key_of = [](const HPoint& p, double off0, double off1, double off2) {
    return std::make_tuple(llround(p.c[0] * 2 + off0), llround(p.c[1] * 2 + off1),
                           llround(p.c[2] * 2 + off2));
  };
  for (std::size_t i = 0; i < P.tile.size(); ++i) {
    for (int c = 0; c < s4g; ++c) {
      int cls = X.vertex_class_of(P.tile[i], c);
      if (singular_only && !X.vertex_classes()[cls].singular()) continue;
      HPoint p = P.place[i].apply(poly.vertex(c));
      bool dup = false;
      for (double o0 : {0.0, 0.5, -0.5})
        for (double o1 : {0.0, 0.5, -0.5})
          for (double o2 : {0.0, 0.5, -0.5}) {
            auto it = buckets.find(key_of(p, o0, o1, o2));
            if (it == buckets.end()) continue;
            for (int j : it->second)
              // Distinct sheets around a cone point develop to the same
              // position, so coincident lifts of different classes are
              // genuine and both are kept; the segment walker separates
              // them later by its arrival-class check.
              if (lifts[j].cls == cls && same_point(lifts[j].pos, p, kLiftMatch))
                dup = true;
          }
      if (dup) continue;
      buckets[key_of(p, 0, 0, 0)].push_back(static_cast<int>(lifts.size()));
      lifts.push_back({p, cls, P.tile[i], c, P.place[i]});
    }
  }
  return lifts;
}

// ---------------------------------------------------------------------------
// Segment walker: certifies that the straight developed segment from the
// vertex lift at (t0, c0, U0) to the point y is realized by a path in the
// cover, recording the tiles crossed.  Fails (without throwing) when the
// segment runs through a cone point or does not arrive at a vertex of the
// expected class.
// ---------------------------------------------------------------------------

struct WalkOut {
  bool ok = false;
  std::string reason;
  int start_tile = -1, start_corner = -1;
  int end_tile = -1, end_corner = -1;
  std::vector<int> tiles;
  std::vector<Isometry> places;
  std::vector<Germ> steps;  // set when the segment rides the 1-skeleton
  double length = 0;
};

// Attempts to reach y by walking straight along the 1-skeleton from the
// vertex at (t0, c0, U0).  Handles segments collinear with tile sides, which
// the interior walker cannot disambiguate.
WalkOut walk_along_skeleton(const StarCover& X, const BasePolygon& poly, int t0,
                            int c0, const Isometry& U0, const HPoint& y,
                            int target_cls) {
  const int g = X.genus();
  const int s4g = 4 * g;
  const HPoint x0 = U0.apply(poly.vertex(c0));
  const double L = dist(x0, y);
  WalkOut fail;
  for (const PlacedCorner& w : wedge_at(X, poly, t0, c0, U0)) {
    // The ray along side w.corner, leaving the vertex toward vertex c+1.
    WalkOut out;
    out.start_tile = w.tile;
    out.start_corner = w.corner;
    int t = w.tile, s = w.corner;
    Isometry U = w.U;
    const std::size_t budget = static_cast<std::size_t>(L / poly.side_length) + 3;
    bool ray_ok = true;
    for (std::size_t step = 0; step < budget; ++step) {
      out.steps.push_back({t, s});
      out.tiles.push_back(t);
      out.places.push_back(U);
      HPoint endv = U.apply(poly.vertex((s + 1) % s4g));
      auto [cls2, pos2] = X.germ_position_end(t, s);
      if (same_point(endv, y, kVertexGraze * 10)) {
        if (cls2 != target_cls) {
          ray_ok = false;
          break;
        }
        out.ok = true;
        out.end_tile = t;
        out.end_corner = (s + 1) % s4g;
        out.length = (step + 1) * poly.side_length;
        return out;
      }
      if (X.vertex_classes()[cls2].singular() ||
          (step + 1) * poly.side_length > L + 1e-6) {
        ray_ok = false;
        break;
      }
      // Continue straight: the antipodal germ at the regular far vertex.
      int q = (pos2 + 2 * g) % s4g;
      const Germ nxt = X.vertex_classes()[cls2].germs[q];
      bool found = false;
      for (const PlacedCorner& pc : wedge_at(X, poly, t, (s + 1) % s4g, U)) {
        if (pc.tile == nxt.tile && pc.corner == nxt.side) {
          t = nxt.tile;
          s = nxt.side;
          U = pc.U;
          found = true;
          break;
        }
      }
      if (!found) throw CertificateError("skeleton walk lost the next germ placement");
    }
    (void)ray_ok;
  }
  fail.reason = "not on the skeleton";
  return fail;
}

WalkOut walk_to_point(const StarCover& X, const BasePolygon& poly, int t0, int c0,
                      const Isometry& U0, const HPoint& y, int target_cls) {
  const int s4g = 4 * X.genus();
  const HPoint x0 = U0.apply(poly.vertex(c0));
  const double L = dist(x0, y);
  WalkOut out;
  if (L < 1e-9) {
    out.reason = "zero-length segment";
    return out;
  }
  // Segments riding the 1-skeleton are handled combinatorially.
  WalkOut rail = walk_along_skeleton(X, poly, t0, c0, U0, y, target_cls);
  if (rail.ok) return rail;

  auto margin_of = [&](const Isometry& U, const HPoint& p) {
    const HPoint local = U.inverse().apply(p);
    double worst = -kInf;
    for (int k = 0; k < s4g; ++k)
      worst = std::max(worst, klein_side_value(poly, k, local.kx(), local.ky()));
    return -worst;  // positive when strictly inside
  };
  auto enter_wedge = [&](int t, int c, const Isometry& U, const HPoint& probe,
                         int* wt, int* wc, Isometry* wU) -> bool {
    double best = -kInf;
    for (const PlacedCorner& pc : wedge_at(X, poly, t, c, U)) {
      double m = margin_of(pc.U, probe);
      if (m > best) {
        best = m;
        *wt = pc.tile;
        *wc = pc.corner;
        *wU = pc.U;
      }
    }
    return best > -1e-9;
  };

  int t = -1, c = -1;
  Isometry U;
  {
    HPoint probe = geodesic_point(x0, y, std::min(1e-4, L / 2));
    if (!enter_wedge(t0, c0, U0, probe, &t, &c, &U)) {
      out.reason = "no wedge tile contains the outgoing direction";
      return out;
    }
  }
  const bool dbg = getenv("CUTGRAPH_DEBUG2") && std::abs(L - 4.21842) < 1e-4;
  if (dbg)
    fprintf(stderr, "walk L=%.6f from (t0=%d c0=%d) enter t=%d c=%d y=(%g,%g,%g)\n",
            L, t0, c0, t, c, y.c[0], y.c[1], y.c[2]);
  out.start_tile = t;
  out.start_corner = c;
  out.tiles.push_back(t);
  out.places.push_back(U);
  double s_cur = 0;
  const std::size_t budget =
      static_cast<std::size_t>(L / (poly.side_length * 0.1)) + s4g * 8 + 64;
  for (std::size_t iter = 0; iter < budget; ++iter) {
    const Isometry Uinv = U.inverse();
    const HPoint a = Uinv.apply(geodesic_point(x0, y, s_cur));
    const HPoint b = Uinv.apply(y);
    const double ax = a.kx(), ay = a.ky(), bx = b.kx(), by = b.ky();
    double best_u = kInf;
    int best_k = -1;
    for (int k = 0; k < s4g; ++k) {
      double va = klein_side_value(poly, k, ax, ay);
      double vb = klein_side_value(poly, k, bx, by);
      if (va <= 1e-12 && vb > 1e-12) {
        double u = va / (va - vb);
        if (u < best_u) {
          best_u = u;
          best_k = k;
        }
      }
    }
    if (dbg)
      fprintf(stderr, "  iter t=%d best_k=%d best_u=%g s_cur=%g\n", t, best_k,
              best_u, s_cur);
    if (best_k < 0) {
      // No wall separates us from the target: it must be a vertex here.
      int cn = -1;
      double bd = kInf;
      for (int k = 0; k < s4g; ++k) {
        double d = dist(b, poly.vertex(k));
        if (d < bd) {
          bd = d;
          cn = k;
        }
      }
      if (!same_point(b, poly.vertex(cn), kVertexGraze * 10)) {
        out.reason = "segment ends in a tile interior";
        return out;
      }
      if (X.vertex_class_of(t, cn) != target_cls) {
        out.reason = "arrived at a vertex of the wrong class";
        return out;
      }
      out.ok = true;
      out.end_tile = t;
      out.end_corner = cn;
      out.length = L;
      return out;
    }
    // Crossing point in the local frame.
    const double cx = ax + best_u * (bx - ax), cy = ay + best_u * (by - ay);
    const HPoint cross_local = HPoint::from_klein(cx, cy);
    const HPoint cross = U.apply(cross_local);
    const double s_cross = dist(x0, cross);
    // Vertex graze: the crossing point sits at a tile vertex.
    int graze_vertex = -1;
    for (int k : {best_k, (best_k + 1) % s4g}) {
      if (same_point(cross_local, poly.vertex(k), kVertexGraze * 10)) graze_vertex = k;
    }
    if (graze_vertex >= 0) {
      const int vcls = X.vertex_class_of(t, graze_vertex);
      if (same_point(cross, y, kVertexGraze * 10)) {
        if (vcls != target_cls) {
          out.reason = "arrived at a vertex of the wrong class";
          return out;
        }
        out.ok = true;
        out.end_tile = t;
        out.end_corner = graze_vertex;
        out.length = L;
        return out;
      }
      if (X.vertex_classes()[vcls].singular()) {
        out.reason = "segment passes through a cone point";
        return out;
      }
      const double s_next = s_cross + std::min(1e-4, (L - s_cross) / 2);
      const HPoint probe = geodesic_point(x0, y, s_next);
      int nt, nc;
      Isometry nU;
      if (!enter_wedge(t, graze_vertex, U, probe, &nt, &nc, &nU)) {
        out.reason = "lost the segment at a regular vertex";
        return out;
      }
      if (nt != t || !same_placement(nU, U)) {
        out.tiles.push_back(nt);
        out.places.push_back(nU);
      }
      t = nt;
      U = nU;
      s_cur = s_next;
      continue;
    }
    // Ordinary wall crossing.
    out.steps.clear();
    const int t2 = X.crossing(best_k)(t);
    const Isometry U2 = U * poly.crossing[best_k];
    out.tiles.push_back(t2);
    out.places.push_back(U2);
    t = t2;
    U = U2;
    s_cur = s_cross;
  }
  out.reason = "walk budget exhausted";
  return out;
}

// Canonical identity of a directed developed arc, orientation-independent.
using ArcKey = std::tuple<int, int, int, int, int, int, long long, int>;

ArcKey arc_key(int scls, int ecls, int st, int sc, int et, int ec, double len,
               int ntiles) {
  ArcKey fwd{scls, ecls, st, sc, et, ec, llround(len * 1e7), ntiles};
  ArcKey rev{ecls, scls, et, ec, st, sc, llround(len * 1e7), ntiles};
  return std::min(fwd, rev);
}

// Local Klein-segment pieces of an arc, one per tile it meets; used by the
// pairwise embeddedness test.
struct TilePiece {
  int tile;
  double x0, y0, x1, y1;
};

std::vector<TilePiece> arc_pieces(const StarCover& X, const BasePolygon& poly,
                                  const SingularArc& a) {
  std::vector<TilePiece> out;
  const int s4g = 4 * X.genus();
  if (!a.steps.empty()) {
    for (const Germ& w : a.steps) {
      auto side_piece = [&](int t, int s) {
        const HPoint p = poly.vertex(s), q = poly.vertex((s + 1) % s4g);
        out.push_back({t, p.kx(), p.ky(), q.kx(), q.ky()});
      };
      side_piece(w.tile, w.side);
      auto [t2, s2] = X.paired_side(w.tile, w.side);
      side_piece(t2, s2);
    }
    return out;
  }
  for (std::size_t i = 0; i < a.tiles.size(); ++i) {
    const Isometry inv = a.placements[i].inverse();
    const HPoint pa = inv.apply(a.dev_a), pb = inv.apply(a.dev_b);
    // Clip the Klein straight segment to the polygon.
    double lo = 0, hi = 1;
    const double ax = pa.kx(), ay = pa.ky(), bx = pb.kx(), by = pb.ky();
    for (int k = 0; k < s4g && lo < hi; ++k) {
      double va = klein_side_value(poly, k, ax, ay);
      double vb = klein_side_value(poly, k, bx, by);
      if (std::abs(va - vb) < 1e-15) {
        if (va > 1e-12) lo = 1, hi = 0;
        continue;
      }
      double u = va / (va - vb);
      if (vb > va)
        hi = std::min(hi, u);
      else
        lo = std::max(lo, u);
    }
    if (lo >= hi) continue;
    out.push_back({a.tiles[static_cast<int>(i)], ax + lo * (bx - ax),
                   ay + lo * (by - ay), ax + hi * (bx - ax), ay + hi * (by - ay)});
  }
  return out;
}

// True when the two local segments intersect anywhere other than a tile
// vertex (graph vertices live at vertex lifts, so vertex contact is legal).
bool pieces_cross(const BasePolygon& poly, const TilePiece& A, const TilePiece& B) {
  auto cross2 = [](double ux, double uy, double vx, double vy) {
    return ux * vy - uy * vx;
  };
  const double d1 = cross2(A.x1 - A.x0, A.y1 - A.y0, B.x0 - A.x0, B.y0 - A.y0);
  const double d2 = cross2(A.x1 - A.x0, A.y1 - A.y0, B.x1 - A.x0, B.y1 - A.y0);
  const double d3 = cross2(B.x1 - B.x0, B.y1 - B.y0, A.x0 - B.x0, A.y0 - B.y0);
  const double d4 = cross2(B.x1 - B.x0, B.y1 - B.y0, A.x1 - B.x0, A.y1 - B.y0);
  const double eps = 1e-14;
  if ((d1 > eps && d2 > eps) || (d1 < -eps && d2 < -eps)) return false;
  if ((d3 > eps && d4 > eps) || (d3 < -eps && d4 < -eps)) return false;
  if (std::abs(d1) < eps && std::abs(d2) < eps) {
    // Collinear: overlapping beyond a point means a shared sub-segment.
    double t0 = (B.x0 - A.x0) * (A.x1 - A.x0) + (B.y0 - A.y0) * (A.y1 - A.y0);
    double t1 = (B.x1 - A.x0) * (A.x1 - A.x0) + (B.y1 - A.y0) * (A.y1 - A.y0);
    double len2 = (A.x1 - A.x0) * (A.x1 - A.x0) + (A.y1 - A.y0) * (A.y1 - A.y0);
    double lo = std::min(t0, t1) / len2, hi = std::max(t0, t1) / len2;
    return std::min(hi, 1.0) - std::max(lo, 0.0) > 1e-9;
  }
  // Proper or touching intersection: allowed only at a tile vertex.
  const double denom = cross2(A.x1 - A.x0, A.y1 - A.y0, B.x1 - B.x0, B.y1 - B.y0);
  double px, py;
  if (std::abs(denom) < eps) {
    px = B.x0;
    py = B.y0;
  } else {
    double u = cross2(B.x0 - A.x0, B.y0 - A.y0, B.x1 - B.x0, B.y1 - B.y0) / denom;
    px = A.x0 + u * (A.x1 - A.x0);
    py = A.y0 + u * (A.y1 - A.y0);
  }
  for (const auto& v : poly.klein().pts)
    if (std::hypot(px - v[0], py - v[1]) < 1e-6) return false;  // vertex contact
  return true;  // interior crossing
}

bool arcs_embedded(const StarCover& X, const BasePolygon& poly,
                   const std::vector<SingularArc>& arcs) {
  std::vector<std::vector<TilePiece>> pieces;
  pieces.reserve(arcs.size());
  for (const SingularArc& a : arcs) pieces.push_back(arc_pieces(X, poly, a));
  for (std::size_t i = 0; i < arcs.size(); ++i)
    for (std::size_t j = i + 1; j < arcs.size(); ++j)
      for (const TilePiece& A : pieces[i])
        for (const TilePiece& B : pieces[j])
          if (A.tile == B.tile && pieces_cross(poly, A, B)) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Combinatorial construction.
// ---------------------------------------------------------------------------

CutGraph combinatorial_cut_graph(const StarCover& X) {
  CutGraph G;
  G.mode = CutGraph::Mode::kCombinatorial;
  const std::vector<int> sing = X.singular_classes();
  if (sing.empty()) return G;
  const BasePolygon& poly = cached_polygon(X.genus());
  const int g = X.genus();
  std::set<std::vector<int>> seen;
  for (int v : sing) {
    const int d = X.vertex_classes()[v].degree;
    for (int s = 0; s < 2 * d; ++s) {
      CombArc walk = trace_spoke(X, v, s * 2 * g);
      std::vector<int> ids;
      ids.reserve(walk.steps.size());
      for (const Germ& w : walk.steps) ids.push_back(X.edge_id(w.tile, w.side));
      std::vector<int> rev(ids.rbegin(), ids.rend());
      if (!seen.insert(std::min(ids, rev)).second) continue;
      SingularArc arc;
      arc.start_class = walk.start_class;
      arc.end_class = walk.end_class;
      arc.steps = std::move(walk.steps);
      arc.length = static_cast<double>(ids.size()) * poly.side_length;
      G.arcs.push_back(std::move(arc));
    }
  }
  std::set<int> eids;
  for (const SingularArc& a : G.arcs)
    for (const Germ& w : a.steps) eids.insert(X.edge_id(w.tile, w.side));
  G.edge_ids.assign(eids.begin(), eids.end());
  G.total_length = static_cast<double>(eids.size()) * poly.side_length;
  G.gaps = gap_table_from_arcs(X, poly, G.arcs);
  return G;
}

// ---------------------------------------------------------------------------
// Verification.
// ---------------------------------------------------------------------------

CutGraphReport verify_cut_graph(const StarCover& X, const CutGraph& graph,
                                const BasePolygon& poly) {
  CutGraphReport rep;
  rep.mode = graph.mode == CutGraph::Mode::kDelaunay ? "delaunay" : "combinatorial";

  // Condition (1): every singular vertex class is an arc endpoint.
  std::set<int> endpoints;
  for (const SingularArc& a : graph.arcs) {
    endpoints.insert(a.start_class);
    endpoints.insert(a.end_class);
  }
  rep.condition_singular_vertices = true;
  for (int v : X.singular_classes())
    if (!endpoints.count(v)) rep.condition_singular_vertices = false;

  // Condition (2): angular gaps, re-derived from the arcs alone.
  rep.gap_table = gap_table_from_arcs(X, poly, graph.arcs);
  rep.condition_gaps = true;
  for (const AngularGap& g : rep.gap_table) {
    if (g.max_gap > M_PI + 10 * kTauGeom) rep.condition_gaps = false;
    else if (g.max_gap > M_PI + kTauGeom) {
      std::ostringstream os;
      os << "gap at class " << g.class_id << " exceeds pi by "
         << (g.max_gap - M_PI) << " (inside the tolerance gray zone)";
      rep.warnings.push_back(os.str());
    }
  }
  if (graph.arcs.empty() && !X.singular_classes().empty())
    rep.condition_gaps = false;

  // Embeddedness.
  if (graph.mode == CutGraph::Mode::kCombinatorial) {
    std::set<int> used;
    rep.embedded = true;
    for (const SingularArc& a : graph.arcs)
      for (const Germ& w : a.steps)
        if (!used.insert(X.edge_id(w.tile, w.side)).second) rep.embedded = false;
  } else {
    rep.embedded = arcs_embedded(X, poly, graph.arcs);
  }

  // Length, density and the closed-form bound.
  if (graph.mode == CutGraph::Mode::kCombinatorial) {
    std::set<int> eids;
    for (const SingularArc& a : graph.arcs)
      for (const Germ& w : a.steps) eids.insert(X.edge_id(w.tile, w.side));
    rep.total_length = static_cast<double>(eids.size()) * poly.side_length;
  } else {
    for (const SingularArc& a : graph.arcs) rep.total_length += a.length;
  }
  rep.area = area(X);
  rep.ratio = rep.total_length / rep.area;
  const int beta = X.branching();
  if (beta > 0) {
    static std::map<int, double> phi_cache;
    auto it = phi_cache.find(X.genus());
    if (it == phi_cache.end())
      it = phi_cache.emplace(X.genus(), geometry_constants(poly).phi).first;
    const double density = beta / rep.area;
    rep.c_bound = c_delta(density, it->second);
    rep.ratio_within_bound = rep.ratio <= rep.c_bound + 1e-9;
    // More than one unit of branching per tile of area is outside the
    // low-density regime the closed-form bound is meant for.
    rep.degenerate_density = density > 1.0 / poly.area;
  }

  // Per-vertex arc-end counts against the 4 d_v budget.
  std::map<int, int> ends;
  for (const SingularArc& a : graph.arcs) {
    ends[a.start_class] += 1;
    ends[a.end_class] += 1;
  }
  for (int v : X.singular_classes()) {
    VertexBudget b;
    b.class_id = v;
    b.chosen = ends.count(v) ? ends[v] : 0;
    b.cap = 4 * X.vertex_classes()[v].degree;
    rep.degree_budget.push_back(b);
  }
  return rep;
}

std::string CutGraphReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["conditions"] = {{"singular_vertices_covered", condition_singular_vertices},
                     {"angular_gaps_at_most_pi", condition_gaps},
                     {"embedded", embedded}};
  j["total_length"] = total_length;
  j["area"] = area;
  j["ratio"] = ratio;
  j["c_bound"] = c_bound;
  j["ratio_within_bound"] = ratio_within_bound;
  j["degenerate_density"] = degenerate_density;
  nlohmann::ordered_json gaps = nlohmann::ordered_json::array();
  for (const AngularGap& g : gap_table)
    gaps.push_back({{"class", g.class_id}, {"incident", g.incident},
                    {"max_gap", g.max_gap}});
  j["gaps"] = gaps;
  nlohmann::ordered_json budget = nlohmann::ordered_json::array();
  for (const VertexBudget& b : degree_budget)
    budget.push_back({{"class", b.class_id}, {"chosen", b.chosen}, {"cap", b.cap}});
  j["degree_budget"] = budget;
  j["warnings"] = warnings;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Cutting into whole-tile components.
// ---------------------------------------------------------------------------

std::vector<CutComponent> cut(const StarCover& X, const CutGraph& graph,
                              const BasePolygon& poly) {
  for (const SingularArc& a : graph.arcs)
    if (a.steps.empty())
      throw InputError("whole-tile cutting requires a graph in the 1-skeleton");
  CutGraphReport rep = verify_cut_graph(X, graph, poly);
  if (!rep.condition_singular_vertices || !rep.condition_gaps || !rep.embedded)
    throw InputError("cut graph failed verification: " + rep.to_json());

  std::set<int> cutset;
  for (const SingularArc& a : graph.arcs)
    for (const Germ& w : a.steps) cutset.insert(X.edge_id(w.tile, w.side));

  const int n = X.degree();
  const int s4g = 4 * X.genus();
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int t = 0; t < n; ++t)
    for (int k = 0; k < s4g; ++k)
      if (!cutset.count(X.edge_id(t, k))) {
        int a = find(t), b = find(X.crossing(k)(t));
        if (a != b) parent[a] = b;
      }

  std::map<int, CutComponent> comps;
  for (int t = 0; t < n; ++t) {
    CutComponent& c = comps[find(t)];
    c.tiles.push_back(t);
    for (int k = 0; k < s4g; ++k)
      if (cutset.count(X.edge_id(t, k))) c.cut_sides.push_back({t, k});
  }

  // Certificate: no singular vertex interior to a component (every singular
  // class must touch a cut edge).
  for (int v : X.singular_classes()) {
    bool touched = false;
    for (const Germ& w : X.vertex_classes()[v].germs)
      if (cutset.count(X.edge_id(w.tile, w.side))) touched = true;
    if (!touched)
      throw CertificateError("a singular vertex is interior to a component");
  }
  // Certificate: boundary wedges are locally convex.  A wedge is a maximal
  // run of corners between consecutive cut germs; its angle is the corner
  // count times pi/(2g), so convexity means runs of at most 2g corners.
  for (const VertexClass& vc : X.vertex_classes()) {
    std::vector<int> cutpos;
    for (std::size_t q = 0; q < vc.germs.size(); ++q)
      if (cutset.count(X.edge_id(vc.germs[q].tile, vc.germs[q].side)))
        cutpos.push_back(static_cast<int>(q));
    if (cutpos.empty()) continue;
    const int m = static_cast<int>(vc.germs.size());
    for (std::size_t i = 0; i < cutpos.size(); ++i) {
      int a = cutpos[i];
      int b = cutpos[(i + 1) % cutpos.size()];
      int run = (b - a + m) % m;
      if (i + 1 == cutpos.size() && cutpos.size() == 1) run = m;
      if (run > 2 * X.genus())
        throw CertificateError("a boundary wedge exceeds angle pi");
    }
  }

  std::vector<CutComponent> out;
  for (auto& [root, c] : comps) {
    std::sort(c.tiles.begin(), c.tiles.end());
    std::sort(c.cut_sides.begin(), c.cut_sides.end());
    c.area = static_cast<double>(c.tiles.size()) * poly.area;
    c.boundary_length = static_cast<double>(c.cut_sides.size()) * poly.side_length;
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const CutComponent& a, const CutComponent& b) {
    return a.tiles.front() < b.tiles.front();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Distances between vertex lifts.
// ---------------------------------------------------------------------------

namespace {

// Straight-visible verified distances from the canonical lift of `cls` to
// every vertex class, plus the patch frontier.
struct VisibleRow {
  std::map<int, double> dist_to;  // class -> best verified straight distance
  double frontier = kInf;
  bool depth_limited = false;
};

VisibleRow visible_distances(const StarCover& X, const BasePolygon& poly, int cls,
                             int max_depth, double metric_cap,
                             bool singular_targets_only) {
  const Corner src = X.vertex_classes()[cls].corners.front();
  const HPoint x0 = poly.vertex(src.corner);
  Patch P = develop_patch(X, poly, src.tile, Isometry::identity(), x0, max_depth,
                          metric_cap, 500000);
  VisibleRow row;
  row.frontier = P.frontier;
  row.depth_limited = P.depth_limited;
  std::vector<VertexLift> lifts = collect_lifts(X, poly, P, singular_targets_only);
  std::sort(lifts.begin(), lifts.end(), [&](const VertexLift& a, const VertexLift& b) {
    return dist(x0, a.pos) < dist(x0, b.pos);
  });
  for (const VertexLift& z : lifts) {
    const double d = dist(x0, z.pos);
    if (d < 1e-9) continue;  // the source lift itself
    auto it = row.dist_to.find(z.cls);
    if (it != row.dist_to.end() && it->second <= d + 1e-12) continue;
    WalkOut w = walk_to_point(X, poly, src.tile, src.corner, Isometry::identity(),
                              z.pos, z.cls);
    if (w.ok) row.dist_to[z.cls] = d;
  }
  return row;
}

double metric_size_estimate(const StarCover& X, const BasePolygon& poly);

}  // namespace

SingularDistance singular_distance(const StarCover& X, const BasePolygon& poly,
                                   int v_class, int u_class, int radius) {
  if (v_class == u_class) return {true, 0.0};
  // Geodesics bend only at cone points, so the metric is the shortest-path
  // closure of verified straight chords over {v, u} + singular classes.
  std::vector<int> nodes = X.singular_classes();
  for (int extra : {v_class, u_class})
    if (std::find(nodes.begin(), nodes.end(), extra) == nodes.end())
      nodes.push_back(extra);

  // Start with a one-tile-deep look and widen only as needed: the required
  // frontier is about the distance being measured, and patch size grows
  // exponentially with the metric cap.
  double cap = poly.side_length + poly.circumradius + 0.5;
  SingularDistance out;
  while (true) {
    std::map<int, VisibleRow> rows;
    double min_frontier = kInf;
    bool depth_limited = false;
    for (int a : nodes) {
      rows[a] = visible_distances(X, poly, a, radius, cap, false);
      min_frontier = std::min(min_frontier, rows[a].frontier);
      depth_limited = depth_limited || rows[a].depth_limited;
    }
    std::map<int, double> best;
    for (int a : nodes) best[a] = kInf;
    best[v_class] = 0;
    std::priority_queue<std::pair<double, int>,
                        std::vector<std::pair<double, int>>, std::greater<>> pq;
    pq.push({0, v_class});
    while (!pq.empty()) {
      auto [d, a] = pq.top();
      pq.pop();
      if (d > best[a] + 1e-15) continue;
      for (const auto& [b, w] : rows[a].dist_to) {
        if (!best.count(b)) continue;
        if (d + w < best[b] - 1e-15) {
          best[b] = d + w;
          pq.push({best[b], b});
        }
      }
    }
    out.distance = best[u_class];
    out.resolved = out.distance <= min_frontier;
    if (out.resolved || depth_limited) return out;
    cap += 1.5;  // the combinatorial radius still allows a wider look
  }
}

// ---------------------------------------------------------------------------
// Delaunay graph with empty-ball witnesses.
// ---------------------------------------------------------------------------

namespace {

int tile_graph_diameter_impl(const StarCover& X) {
  const int n = X.degree();
  const int s4g = 4 * X.genus();
  int diam = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<int> depth(n, -1);
    std::queue<int> q;
    depth[s] = 0;
    q.push(s);
    while (!q.empty()) {
      int t = q.front();
      q.pop();
      diam = std::max(diam, depth[t]);
      for (int k = 0; k < s4g; ++k) {
        int t2 = X.crossing(k)(t);
        if (depth[t2] < 0) {
          depth[t2] = depth[t] + 1;
          q.push(t2);
        }
      }
    }
  }
  return diam;
}

// Rough metric diameter of the cover: combinatorial tile diameter times the
// tile size.  Used to seed metric caps and the default search radius.
double metric_size_estimate(const StarCover& X, const BasePolygon& poly) {
  return (tile_graph_diameter_impl(X) + 1) * 2.0 * poly.circumradius;
}

// Tiles reachable from t0 through side pairings (the connected component).
std::vector<int> component_tiles(const StarCover& X, int t0) {
  const int s4g = 4 * X.genus();
  std::vector<char> seen(X.degree(), 0);
  std::vector<int> out{t0};
  seen[t0] = 1;
  for (std::size_t head = 0; head < out.size(); ++head)
    for (int k = 0; k < s4g; ++k) {
      int t2 = X.crossing(k)(out[head]);
      if (!seen[t2]) {
        seen[t2] = 1;
        out.push_back(t2);
      }
    }
  return out;
}

// Upper bound on the covering radius of the singular lift set over the tiles
// represented in the patch.  Each tile splits into small Klein-straight
// cells; such cells are geodesically convex and the distance to a fixed lift
// is convex along geodesics, so for any lift z,
//   max over the cell of d(., z)  =  max over the cell corners of d(., z),
// and taking the min over lifts of that per-cell max still dominates
// d(x, singular set) for every x in the cell.  Any subset of lifts keeps the
// bound valid (it can only grow), so no frontier certificate is needed here.
double covering_radius_bound(const StarCover& X, const BasePolygon& poly,
                             const Patch& P, const std::vector<HPoint>& sing) {
  if (sing.empty())
    throw CertificateError("covering radius requested with no singular lifts");
  const int s4g = 4 * X.genus();
  const int k = 8;  // subdivision scale; the bound overshoots by O(side / k)
  std::map<int, Isometry> rep;  // one placed copy per tile (deck-invariant)
  for (std::size_t i = 0; i < P.tile.size(); ++i) rep.emplace(P.tile[i], P.place[i]);
  double out = 0;
  for (const auto& [t, U] : rep) {
    const HPoint center = U.apply(HPoint::origin());
    double dmin = kInf;
    for (const HPoint& z : sing) dmin = std::min(dmin, dist(center, z));
    // Only lifts this close to the center can be the nearest one for some
    // point of the tile (every tile point is within a circumradius of the
    // center).
    std::vector<HPoint> near;
    for (const HPoint& z : sing)
      if (dist(center, z) <= dmin + 2 * poly.circumradius + 0.1) near.push_back(z);
    for (int c = 0; c < s4g; ++c) {
      const HPoint B = U.apply(poly.vertex(c));
      const HPoint C = U.apply(poly.vertex((c + 1) % s4g));
      // Klein-coordinate grid over the triangle (center, B, C).
      std::vector<std::vector<HPoint>> grid(k + 1);
      for (int i = 0; i <= k; ++i)
        for (int j = 0; i + j <= k; ++j) {
          const double u = static_cast<double>(i) / k;
          const double w = static_cast<double>(j) / k;
          grid[i].push_back(HPoint::from_klein(
              center.kx() + u * (B.kx() - center.kx()) + w * (C.kx() - center.kx()),
              center.ky() + u * (B.ky() - center.ky()) + w * (C.ky() - center.ky())));
        }
      auto cell = [&](const HPoint& a, const HPoint& b, const HPoint& c3) {
        double best = kInf;
        for (const HPoint& z : near)
          best = std::min(best, std::max({dist(a, z), dist(b, z), dist(c3, z)}));
        out = std::max(out, best);
      };
      for (int i = 0; i < k; ++i)
        for (int j = 0; i + j < k; ++j) {
          cell(grid[i][j], grid[i + 1][j], grid[i][j + 1]);
          if (i + j + 1 < k) cell(grid[i + 1][j], grid[i][j + 1], grid[i + 1][j + 1]);
        }
    }
  }
  return out;
}

// Point at arc-length s along the perpendicular to the segment (x0, y) at
// its midpoint.
HPoint bisector_point(const HPoint& x0, const HPoint& y, double L, double s) {
  Vec3 w;  // unit tangent at x0 toward y
  const double ch = std::cosh(L), sh = std::sinh(L);
  for (int i = 0; i < 3; ++i) w[i] = (y.c[i] - ch * x0.c[i]) / sh;
  const double cm = std::cosh(L / 2), sm = std::sinh(L / 2);
  Vec3 m, tang;
  for (int i = 0; i < 3; ++i) {
    m[i] = x0.c[i] * cm + w[i] * sm;
    tang[i] = x0.c[i] * sm + w[i] * cm;
  }
  Vec3 nrm = mcross(m, tang);
  const double nn = std::sqrt(minkowski(nrm, nrm));
  Vec3 p;
  for (int i = 0; i < 3; ++i) p[i] = m[i] * std::cosh(s) + (nrm[i] / nn) * std::sinh(s);
  return HPoint(p);
}

struct WitnessResult {
  bool ok = false;
  HPoint center;
  double radius = 0;
  bool frontier_limited = false;  // the search range hit the certified region
};

// Searches the bisector of (x0, y) for a ball with both endpoints on its
// boundary and no other singular lift inside.  A witness radius can never
// exceed the covering radius of the singular set (`rcap`), and a center only
// counts when its full ball stays inside the certified patch region
// (d(x0, c) + r <= frontier).
WitnessResult find_witness(const HPoint& x0, const HPoint& y,
                           const std::vector<HPoint>& obstacles, double frontier,
                           double rcap) {
  const double L = dist(x0, y);
  WitnessResult res;
  bool saw_uncertifiable = false;
  // -kInf: no witness possible at this s (radius above the covering radius);
  // very negative but finite: center uncertifiable at the patch radius.
  auto eval = [&](double s, double* radius) -> double {
    const HPoint c = bisector_point(x0, y, L, s);
    const double r = dist(c, x0);
    *radius = r;
    if (r > rcap + 1e-6) return -kInf;
    if (dist(c, x0) + r > frontier) {
      saw_uncertifiable = true;
      return -kInf;
    }
    double f = kInf;
    for (const HPoint& z : obstacles) f = std::min(f, dist(c, z) - r);
    return f;
  };
  // Bracket the feasible range of s symmetrically (r grows with |s|).
  double smax = 0.0;
  {
    double step = std::max(0.25, L / 8);
    while (smax < 64.0) {
      const HPoint c = bisector_point(x0, y, L, smax + step);
      if (dist(c, x0) > rcap + 1e-6) break;
      smax += step;
    }
    smax += step;  // include the boundary band
  }
  double best_f = -kInf, best_s = 0;
  const int grid = 257;
  for (int i = 0; i < grid; ++i) {
    const double s = -smax + (2 * smax) * i / (grid - 1);
    double r;
    const double f = eval(s, &r);
    if (f > best_f) {
      best_f = f;
      best_s = s;
    }
  }
  // Local refinement around the best grid sample.
  double lo = best_s - 2 * smax / (grid - 1), hi = best_s + 2 * smax / (grid - 1);
  for (int it = 0; it < 60; ++it) {
    const double s1 = lo + (hi - lo) / 3, s2 = hi - (hi - lo) / 3;
    double r;
    if (eval(s1, &r) < eval(s2, &r))
      lo = s1;
    else
      hi = s2;
  }
  double r;
  const double s_fin = (lo + hi) / 2;
  const double f_fin = eval(s_fin, &r);
  if (f_fin >= best_f) {
    best_f = f_fin;
    best_s = s_fin;
  }
  double rr;
  best_f = eval(best_s, &rr);
  res.frontier_limited = saw_uncertifiable && best_f < -1e-9;
  if (best_f >= -1e-9) {
    res.ok = true;
    res.center = bisector_point(x0, y, L, best_s);
    res.radius = rr;
  }
  return res;
}

}  // namespace

DelaunayGraph delaunay(const StarCover& X, const BasePolygon& poly,
                       const DelaunayConfig& cfg) {
  DelaunayGraph dg;
  dg.vertices = X.singular_classes();
  if (dg.vertices.empty()) return dg;
  const double size_est = metric_size_estimate(X, poly);
  const int radius =
      cfg.radius > 0 ? cfg.radius : 3 * static_cast<int>(std::ceil(size_est));

  std::map<ArcKey, DelaunayEdge> edges;
  std::map<int, double> rcov_by_component;  // keyed by the smallest tile id
  for (int v : dg.vertices) {
    const Corner src = X.vertex_classes()[v].corners.front();
    const HPoint x0 = poly.vertex(src.corner);

    // The covering radius of the singular set is deck-invariant, so it can
    // be bounded from a small patch that shows one placed copy of every
    // tile in the component.  The required patch size below grows
    // exponentially with this bound, so it is computed tightly (convex-cell
    // subdivision) rather than from center-to-lift distances alone.
    const std::vector<int> comp = component_tiles(X, src.tile);
    const int comp_key = *std::min_element(comp.begin(), comp.end());
    double rcov = kInf;
    if (auto it = rcov_by_component.find(comp_key); it != rcov_by_component.end()) {
      rcov = it->second;
    } else {
      Patch P0;
      for (double cap0 = 2 * poly.circumradius + 0.5;; cap0 += 2) {
        P0 = develop_patch(X, poly, src.tile, Isometry::identity(), x0, radius,
                           cap0, 500000);
        std::set<int> seen(P0.tile.begin(), P0.tile.end());
        if (seen.size() == comp.size()) break;
        if (P0.depth_limited || P0.frontier == kInf)
          throw BudgetError(
              "component not covered within the combinatorial radius; rerun "
              "with a larger radius");
      }
      std::vector<HPoint> sing0;
      for (const VertexLift& z : collect_lifts(X, poly, P0, true))
        sing0.push_back(z.pos);
      rcov = covering_radius_bound(X, poly, P0, sing0);
      rcov_by_component[comp_key] = rcov;
    }

    // Witness balls have radius r <= rcov and centers with d(x0, c) = r, so
    // a frontier of 2 rcov (+ slack) certifies every ball that can matter.
    // The whole ball of that radius is explored in one pass: skipped tiles
    // sit beyond the metric cap, which keeps the frontier above the target.
    const double target = 2 * rcov + 0.5;
    Patch P = develop_patch(X, poly, src.tile, Isometry::identity(), x0, radius,
                            target + poly.circumradius + 0.25, 500000);
    if (P.depth_limited)
      throw BudgetError(
          "singular neighborhood not certified within the combinatorial "
          "radius; rerun with a larger radius");
    std::vector<VertexLift> lifts = collect_lifts(X, poly, P, true);
    std::vector<HPoint> positions;
    for (const VertexLift& z : lifts) positions.push_back(z.pos);

    std::sort(lifts.begin(), lifts.end(),
              [&](const VertexLift& a, const VertexLift& b) {
                return dist(x0, a.pos) < dist(x0, b.pos);
              });
    int accepted = 0;
    for (const VertexLift& z : lifts) {
      const double L = dist(x0, z.pos);
      if (L < 1e-9) continue;
      if (L / 2 > rcov + 1e-6) break;  // its ball would contain a singular lift
      if (L > P.frontier) break;       // emptiness beyond this is uncertifiable
      WalkOut w = walk_to_point(X, poly, src.tile, src.corner, Isometry::identity(),
                                z.pos, z.cls);
      if (!w.ok) continue;
      // Only lifts that can reach a candidate ball matter: centers sit at
      // distance <= rcov from x0, balls have radius <= rcov.
      std::vector<HPoint> obstacles;
      for (const HPoint& p : positions)
        if (!same_point(p, x0, kLiftMatch) && !same_point(p, z.pos, kLiftMatch) &&
            dist(p, x0) <= 2 * rcov + 0.2)
          obstacles.push_back(p);
      WitnessResult wit = find_witness(x0, z.pos, obstacles, P.frontier, rcov);
      if (!wit.ok) {
        if (wit.frontier_limited)
          throw BudgetError(
              "witness search hit the patch frontier; rerun with a larger radius");
        continue;
      }
      DelaunayEdge e;
      e.arc.start_class = v;
      e.arc.end_class = z.cls;
      e.arc.length = L;
      e.arc.dev_a = x0;
      e.arc.dev_b = z.pos;
      if (!w.steps.empty()) {
        e.arc.steps = w.steps;
      } else {
        e.arc.tiles = w.tiles;
        e.arc.placements = w.places;
      }
      e.witness_center = wit.center;
      e.witness_radius = wit.radius;
      ArcKey key = arc_key(v, z.cls, w.start_tile, w.start_corner, w.end_tile,
                           w.end_corner, L, static_cast<int>(w.tiles.size()));
      edges.emplace(key, std::move(e));
      ++accepted;
    }
    if (accepted == 0)
      throw BudgetError(
          "no certifiable arc at a singular vertex; rerun with a larger radius");
  }
  for (auto& [key, e] : edges) dg.edges.push_back(std::move(e));
  return dg;
}

// ---------------------------------------------------------------------------
// Greedy edge selection.
// ---------------------------------------------------------------------------

CutGraph select_cut_edges(const DelaunayGraph& dg, const StarCover& X,
                          const BasePolygon& poly) {
  CutGraph G;
  G.mode = CutGraph::Mode::kDelaunay;
  if (dg.vertices.empty()) return G;

  // Angular coordinates of every arc end, per vertex class.
  struct End {
    int edge = -1;
    double angle = 0;
  };
  std::map<int, std::vector<End>> ends;
  for (std::size_t i = 0; i < dg.edges.size(); ++i) {
    std::vector<std::pair<int, double>> ee;
    arc_end_angles(X, poly, dg.edges[i].arc, &ee);
    // Skeleton arcs also list interior regular vertices via touched germs;
    // arc_end_angles returns exactly the two endpoint directions.
    for (const auto& [cls, ang] : ee)
      ends[cls].push_back({static_cast<int>(i), ang});
  }

  // Deterministic edge order: by length, then endpoint ids.
  std::vector<int> order(dg.edges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  auto edge_rank = [&](int i) {
    const SingularArc& a = dg.edges[i].arc;
    return std::make_tuple(a.length, std::min(a.start_class, a.end_class),
                           std::max(a.start_class, a.end_class), i);
  };
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return edge_rank(a) < edge_rank(b); });

  auto gap_with = [&](int cls, const std::set<int>& chosen) {
    std::vector<double> angles;
    for (const End& e : ends[cls])
      if (chosen.count(e.edge)) angles.push_back(e.angle);
    const double total = 2 * M_PI * X.vertex_classes()[cls].degree;
    return max_circular_gap(angles, total);
  };

  std::set<int> selected;
  std::map<int, std::set<int>> chosen_at;  // M_v per singular vertex
  for (int v : dg.vertices) {
    std::set<int>& M = chosen_at[v];
    for (int i : order) {
      if (gap_with(v, M) <= M_PI + kTauGeom) break;
      const SingularArc& a = dg.edges[i].arc;
      if (a.start_class != v && a.end_class != v) continue;
      M.insert(i);
    }
    if (gap_with(v, M) > M_PI + kTauGeom)
      throw CertificateError("Delaunay edges leave an angular gap above pi");
    // Prune to a minimal set, dropping longest first.
    std::vector<int> rev(M.begin(), M.end());
    std::sort(rev.begin(), rev.end(),
              [&](int a, int b) { return edge_rank(a) > edge_rank(b); });
    for (int i : rev) {
      std::set<int> without = M;
      without.erase(i);
      if (gap_with(v, without) <= M_PI + kTauGeom) M = std::move(without);
    }
    if (static_cast<int>(M.size()) > 4 * X.vertex_classes()[v].degree)
      throw CertificateError("minimal selection exceeds the 4d budget");
    selected.insert(M.begin(), M.end());
  }

  std::set<int> eids;
  for (int i : selected) {
    G.arcs.push_back(dg.edges[i].arc);
    G.total_length += dg.edges[i].arc.length;
    for (const Germ& w : G.arcs.back().steps) eids.insert(X.edge_id(w.tile, w.side));
  }
  G.edge_ids.assign(eids.begin(), eids.end());
  G.gaps = gap_table_from_arcs(X, poly, G.arcs);
  return G;
}

}  // namespace repair
