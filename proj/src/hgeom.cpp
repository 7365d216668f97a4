#include "repair/hgeom.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "repair/errors.hpp"

namespace repair {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp1(double x) { return std::max(-1.0, std::min(1.0, x)); }

Vec3 scale(const Vec3& v, double s) { return {v[0] * s, v[1] * s, v[2] * s}; }

Vec3 add(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

// Unit tangent vector at p pointing toward q.
Vec3 tangent(const HPoint& p, const HPoint& q) {
  // Component of q orthogonal to p: q + <p,q> p (since <p,p> = -1).
  const Vec3 u = add(q.c, scale(p.c, minkowski(p.c, q.c)));
  const double n2 = minkowski(u, u);
  if (n2 <= 0)
    throw CertificateError("degenerate tangent: coincident points");
  return scale(u, 1.0 / std::sqrt(n2));
}

// J-orthonormal frame (p, u, p # u) as a matrix with those columns, where u
// is the unit tangent at p toward q.  Maps the standard frame at the origin.
Isometry frame(const HPoint& p, const HPoint& q) {
  const Vec3 u = tangent(p, q);
  const Vec3 w = mcross(p.c, u);
  Isometry f;
  for (int r = 0; r < 3; ++r) {
    f.m[3 * r + 0] = u[r];
    f.m[3 * r + 1] = w[r];
    f.m[3 * r + 2] = p.c[r];
  }
  return f;
}

// Inverse of a frame F with column signature (+1, +1, -1):
// F^{-1} = E F^T J with E = diag(1, 1, -1) (here E and J coincide).
Isometry frame_inverse(const Isometry& f) {
  Isometry r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double v = f.m[3 * j + i];  // transpose
      if (j == 2) v = -v;         // right-multiply by J
      if (i == 2) v = -v;         // left-multiply by E
      r.m[3 * i + j] = v;
    }
  return r;
}

}  // namespace

double minkowski(const Vec3& p, const Vec3& q) {
  return p[0] * q[0] + p[1] * q[1] - p[2] * q[2];
}

Vec3 mcross(const Vec3& a, const Vec3& b) {
  const Vec3 e{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
               a[0] * b[1] - a[1] * b[0]};
  return {e[0], e[1], -e[2]};
}

HPoint::HPoint(const Vec3& v) : c(v) {
  if (std::abs(minkowski(c, c) + 1.0) > 1e-6 || c[2] <= 0)
    throw InputError("point not on the upper hyperboloid sheet");
}

HPoint HPoint::from_klein(double X, double Y) {
  const double s = 1.0 - X * X - Y * Y;
  if (s <= 0) throw InputError("Klein coordinates outside the unit disk");
  const double t = 1.0 / std::sqrt(s);
  return HPoint({X * t, Y * t, t});
}

double dist(const HPoint& p, const HPoint& q) {
  return std::acosh(std::max(1.0, -minkowski(p.c, q.c)));
}

Isometry Isometry::inverse() const {
  Isometry r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double v = m[3 * j + i];
      if ((i == 2) != (j == 2)) v = -v;
      r.m[3 * i + j] = v;
    }
  return r;
}

HPoint Isometry::apply(const HPoint& p) const {
  HPoint q;
  q.c = apply_vec(p.c);
  // Sanity-check the image against drift; the tolerance is relative because
  // coordinates grow exponentially with distance.  Do not renormalize: far
  // from the origin the computed norm is dominated by cancellation noise
  // while the matrix product itself is accurate, so dividing by the noisy
  // norm would corrupt the point.
  const double n = -minkowski(q.c, q.c);
  if (q.c[2] <= 0 || std::abs(n - 1.0) > 1e-6 * std::max(1.0, q.c[2] * q.c[2]))
    throw CertificateError("isometry application left the hyperboloid sheet");
  return q;
}

Vec3 Isometry::apply_vec(const Vec3& v) const {
  Vec3 r{0, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i] += m[3 * i + j] * v[j];
  return r;
}

Isometry operator*(const Isometry& a, const Isometry& b) {
  Isometry r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a.m[3 * i + k] * b.m[3 * k + j];
      r.m[3 * i + j] = s;
    }
  return r;
}

double Isometry::max_abs_diff(const Isometry& o) const {
  double d = 0;
  for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(m[i] - o.m[i]));
  return d;
}

bool Isometry::is_identity(double tol) const {
  return max_abs_diff(Isometry::identity()) <= tol;
}

bool Isometry::valid(double tol) const {
  // M^T J M = J.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k)
        s += m[3 * k + i] * (k == 2 ? -1.0 : 1.0) * m[3 * k + j];
      const double want = (i != j) ? 0.0 : (i == 2 ? -1.0 : 1.0);
      if (std::abs(s - want) > tol) return false;
    }
  const double det =
      m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
      m[2] * (m[3] * m[7] - m[4] * m[6]);
  return det > 0;
}

Isometry isometry_from_pairs(const HPoint& p1, const HPoint& p2, const HPoint& q1,
                             const HPoint& q2) {
  if (std::abs(dist(p1, p2) - dist(q1, q2)) > 1e-7)
    throw InputError("isometry_from_pairs: mismatched distances");
  return frame(q1, q2) * frame_inverse(frame(p1, p2));
}

HPoint geodesic_point(const HPoint& p, const HPoint& q, double t) {
  const Vec3 u = tangent(p, q);
  HPoint r;
  r.c = add(scale(p.c, std::cosh(t)), scale(u, std::sinh(t)));
  return r;
}

double angle_at(const HPoint& a, const HPoint& b, const HPoint& c) {
  const Vec3 u = tangent(a, b), v = tangent(a, c);
  return std::acos(clamp1(minkowski(u, v)));
}

std::optional<HPoint> geodesic_intersection(const Geodesic& g1, const Geodesic& g2) {
  Vec3 x = mcross(g1.normal, g2.normal);
  const double n = minkowski(x, x);
  if (n >= -1e-14) return std::nullopt;  // ultraparallel, asymptotic, or equal
  x = scale(x, 1.0 / std::sqrt(-n));
  if (x[2] < 0) x = scale(x, -1.0);
  HPoint p;
  p.c = x;
  return p;
}

HPoint AxisDescriptor::at(double t) const {
  HPoint p;
  p.c = add(scale(base.c, std::cosh(t)), scale(direction, std::sinh(t)));
  return p;
}

double AxisDescriptor::param_of(const HPoint& p) const {
  const double a = -minkowski(p.c, base.c);
  const double b = minkowski(p.c, direction);
  return std::atanh(b / a);
}

bool KleinPolygon::empty_area(double tol) const {
  if (pts.size() < 3) return true;
  double a2 = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto& q = pts[(i + 1) % pts.size()];
    a2 += p[0] * q[1] - q[0] * p[1];
  }
  return std::abs(a2) <= tol;
}

bool KleinPolygon::contains(double X, double Y, double tol) const {
  for (size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto& q = pts[(i + 1) % pts.size()];
    const double cr = (q[0] - p[0]) * (Y - p[1]) - (q[1] - p[1]) * (X - p[0]);
    if (cr < -tol) return false;
  }
  return true;
}

KleinPolygon clip(const KleinPolygon& poly, const Geodesic& g) {
  // Klein-line side value; same sign as <p, n> since t > 0.
  const auto f = [&](const std::array<double, 2>& k) {
    return g.normal[0] * k[0] + g.normal[1] * k[1] - g.normal[2];
  };
  KleinPolygon out;
  const size_t n = poly.pts.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& cur = poly.pts[i];
    const auto& nxt = poly.pts[(i + 1) % n];
    const double fc = f(cur), fn = f(nxt);
    if (fc <= 0) out.pts.push_back(cur);
    if ((fc < 0 && fn > 0) || (fc > 0 && fn < 0)) {
      const double t = fc / (fc - fn);
      out.pts.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  return out;
}

double hyperbolic_area(const KleinPolygon& poly) {
  if (poly.pts.size() < 3) return 0;
  std::vector<HPoint> v;
  v.reserve(poly.pts.size());
  for (const auto& k : poly.pts) v.push_back(HPoint::from_klein(k[0], k[1]));
  double area = 0;
  for (size_t i = 1; i + 1 < v.size(); ++i) {
    const HPoint &a = v[0], &b = v[i], &c = v[i + 1];
    // Skip slivers whose angles are numerically unreliable.
    if (dist(a, b) < 1e-9 || dist(a, c) < 1e-9 || dist(b, c) < 1e-9) continue;
    area += kPi - angle_at(a, b, c) - angle_at(b, c, a) - angle_at(c, a, b);
  }
  return area;
}

const Isometry& BasePolygon::holonomy_letter(const Letter& l) const {
  return l.inverse ? generators[l.index + 2 * genus] : generators[l.index];
}

Isometry BasePolygon::holonomy(const Word& w) const {
  Isometry m;
  for (const Letter& l : w) m = m * holonomy_letter(l);
  return m;
}

Geodesic BasePolygon::side_geodesic(int k) const {
  const int n = 4 * genus;
  Vec3 v = mcross(vertices[k % n].c, vertices[(k + 1) % n].c);
  const double s = minkowski(v, v);
  v = scale(v, 1.0 / std::sqrt(s));
  // Orient so the interior (origin) is on the <= 0 side.
  if (v[2] < 0) v = scale(v, -1.0);  // <origin, v> = -v[2]
  Geodesic g;
  g.normal = v;
  if (g.side(HPoint::origin()) > 0)
    throw CertificateError("side geodesic orientation");
  return g;
}

KleinPolygon BasePolygon::klein() const {
  KleinPolygon p;
  for (const HPoint& v : vertices) p.pts.push_back({v.kx(), v.ky()});
  return p;
}

bool BasePolygon::contains(const HPoint& p, double tol) const {
  for (int k = 0; k < 4 * genus; ++k)
    if (side_geodesic(k).side(p) > tol) return false;
  return true;
}

BasePolygon build_base_polygon(int g) {
  if (g < 2) throw InputError("genus must be at least 2");
  BasePolygon poly;
  poly.genus = g;
  const int n = 4 * g;
  const double cot = 1.0 / std::tan(kPi / n);
  const double R = std::acosh(cot * cot);
  poly.circumradius = R;
  for (int k = 0; k < n; ++k) {
    const double th = 2 * kPi * k / n;
    HPoint v;
    v.c = {std::sinh(R) * std::cos(th), std::sinh(R) * std::sin(th), std::cosh(R)};
    poly.vertices.push_back(v);
  }
  poly.side_length = dist(poly.vertices[0], poly.vertices[1]);
  poly.area = (n - 4) * kPi;  // Gauss-Bonnet: n corners of angle 2pi/n

  // Crossing element of side k maps the partner side, reversed, onto side k:
  // (v_{k'}, v_{k'+1}) -> (v_{k+1}, v_k).
  poly.crossing.resize(n);
  for (int k = 0; k < n; ++k) {
    const int kp = side_partner(g, k);
    poly.crossing[k] =
        isometry_from_pairs(poly.vertex(kp), poly.vertex(kp + 1), poly.vertex(k + 1),
                            poly.vertex(k));
  }
  // Certificate budget: 1e-9 at genus 2; larger polygons have side-pairing
  // matrices with entries ~cosh(2R), and roundoff in their products grows
  // with that conditioning, so the budget is relaxed accordingly.
  const double cert_tol = (g == 2) ? 1e-9 : 1e-6;
  for (int k = 0; k < n; ++k) {
    const int kp = side_partner(g, k);
    if (!poly.crossing[k].valid(cert_tol) ||
        (poly.crossing[k] * poly.crossing[kp]).max_abs_diff(Isometry::identity()) >
            cert_tol)
      throw CertificateError("side pairing isometries are not mutually inverse");
  }

  // Holonomy of each generator letter: the corner walk composes crossing
  // elements to the identity in forward order, while the relator reads the
  // walk in reverse, so a letter's holonomy is the inverse of the crossing
  // element of the side carrying it positively.
  poly.generators.resize(4 * g);
  for (int i = 0; i < 2 * g; ++i) {
    const int side = 4 * (g - 1 - i / 2) + 1 + (i % 2);
    const Letter l = side_letter(g, side);
    if (l.index != i || l.inverse)
      throw CertificateError("side labeling table inconsistency");
    poly.generators[i] = poly.crossing[side].inverse();
    poly.generators[i + 2 * g] = poly.crossing[side];
  }

  // The fundamental relator must act trivially.
  const Isometry rel = poly.holonomy(SurfacePresentation(g).relator());
  if (rel.max_abs_diff(Isometry::identity()) > cert_tol)
    throw CertificateError("relator holonomy is not the identity");
  return poly;
}

AxisDescriptor axis_of(const Isometry& m) {
  const double tr = m.m[0] + m.m[4] + m.m[8];
  if (tr <= 3 + 1e-9)
    throw InputError("holonomy is not a hyperbolic translation");
  // Spacelike fixed vector: kernel of (M - I), via Euclidean cross products
  // of its rows (pick the most independent pair).
  std::array<Vec3, 3> rows;
  for (int i = 0; i < 3; ++i)
    rows[i] = {m.m[3 * i] - (i == 0), m.m[3 * i + 1] - (i == 1),
               m.m[3 * i + 2] - (i == 2)};
  Vec3 n{0, 0, 0};
  double best = -1;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const Vec3 c{rows[i][1] * rows[j][2] - rows[i][2] * rows[j][1],
                   rows[i][2] * rows[j][0] - rows[i][0] * rows[j][2],
                   rows[i][0] * rows[j][1] - rows[i][1] * rows[j][0]};
      const double l = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
      if (l > best) {
        best = l;
        n = c;
      }
    }
  double nn = minkowski(n, n);
  if (nn <= 0) throw CertificateError("axis normal is not spacelike");
  n = scale(n, 1.0 / std::sqrt(nn));

  // Polish the fixed vector by inverse iteration on A = K^T K with
  // K = M - I: A is nearly singular in the axis direction, so a couple of
  // solves against it sharpen the kernel vector to machine precision (the
  // raw cross-product kernel carries enough error to be amplified by long
  // deck translates downstream).
  for (int iter = 0; iter < 2; ++iter) {
    double A[3][3];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += rows[k][r] * rows[k][c];
        A[r][c] = s + (r == c ? 1e-30 : 0.0);
      }
    // Gaussian elimination with partial pivoting, solving A x = n.
    double x[3] = {n[0], n[1], n[2]};
    int piv[3] = {0, 1, 2};
    bool ok = true;
    for (int col = 0; col < 3 && ok; ++col) {
      int p = col;
      for (int r = col + 1; r < 3; ++r)
        if (std::abs(A[piv[r]][col]) > std::abs(A[piv[p]][col])) p = r;
      std::swap(piv[col], piv[p]);
      const double d = A[piv[col]][col];
      if (std::abs(d) < 1e-300) {
        ok = false;
        break;
      }
      for (int r = col + 1; r < 3; ++r) {
        const double f = A[piv[r]][col] / d;
        for (int c = col; c < 3; ++c) A[piv[r]][c] -= f * A[piv[col]][c];
        x[piv[r]] -= f * x[piv[col]];
      }
    }
    if (!ok) break;
    double y[3];
    for (int r = 2; r >= 0; --r) {
      double s = x[piv[r]];
      for (int c = r + 1; c < 3; ++c) s -= A[piv[r]][c] * y[c];
      y[r] = s / A[piv[r]][r];
    }
    Vec3 cand{y[0], y[1], y[2]};
    const double cn = minkowski(cand, cand);
    if (cn <= 0) break;
    n = scale(cand, 1.0 / std::sqrt(cn));
  }
  nn = minkowski(n, n);
  if (nn <= 0) throw CertificateError("axis normal is not spacelike");
  n = scale(n, 1.0 / std::sqrt(nn));

  AxisDescriptor ax;
  ax.geodesic.normal = n;
  ax.translation_length = std::acosh(std::max(1.0, (tr - 1) / 2));
  // Foot of the perpendicular from the origin.
  const Vec3 o{0, 0, 1};
  Vec3 b = add(o, scale(n, -minkowski(o, n)));
  b = scale(b, 1.0 / std::sqrt(-minkowski(b, b)));
  if (b[2] < 0) b = scale(b, -1.0);
  ax.base.c = b;
  Vec3 u = mcross(b, n);
  u = scale(u, 1.0 / std::sqrt(minkowski(u, u)));
  ax.direction = u;
  // Orient toward the translation direction.
  const HPoint moved = m.apply(ax.base);
  if (minkowski(moved.c, u) < 0) ax.direction = scale(u, -1.0);
  return ax;
}

AxisDescriptor axis(const Word& w, const BasePolygon& poly) {
  return axis_of(poly.holonomy(w));
}

double sector_area(double phi, double radius) {
  return phi * (std::cosh(radius) - 1.0);
}

double c_delta(double delta, double phi) {
  return 32.0 * delta * std::asinh(std::sqrt(2.0 / (phi * delta)));
}

std::vector<GroupElement> group_ball(const BasePolygon& poly, int max_len) {
  const int g = poly.genus;
  std::vector<GroupElement> out;
  out.push_back({Isometry::identity(), {}});

  // Elements are uniquely identified by the image of the origin (the deck
  // group acts freely); hash its (x, y) hyperboloid coordinates.
  struct Key {
    long long a, b;
    bool operator==(const Key& o) const { return a == o.a && b == o.b; }
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      return std::hash<long long>()(k.a * 1000003LL ^ k.b);
    }
  };
  const double q = 1e-6;
  std::unordered_map<Key, int, KeyHash> seen;
  const auto probe = [&](const Vec3& img) -> int {
    const long long a0 = (long long)std::floor(img[0] / q);
    const long long b0 = (long long)std::floor(img[1] / q);
    for (long long da = -1; da <= 1; ++da)
      for (long long db = -1; db <= 1; ++db) {
        auto it = seen.find(Key{a0 + da, b0 + db});
        if (it != seen.end()) return it->second;
      }
    return -1;
  };
  const auto record = [&](const Vec3& img, int idx) {
    seen[Key{(long long)std::floor(img[0] / q), (long long)std::floor(img[1] / q)}] =
        idx;
  };
  record({0, 0, 1}, 0);

  std::vector<int> frontier{0};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<int> next;
    for (const int fi : frontier) {
      for (int li = 0; li < 4 * g; ++li) {
        const Letter l{li % (2 * g), li >= 2 * g};
        const GroupElement& e = out[fi];
        Isometry m = e.mat * poly.holonomy_letter(l);
        const Vec3 img = m.apply_vec({0, 0, 1});
        if (probe(img) >= 0) continue;
        Word w = e.word;
        w.push_back(l);
        record(img, (int)out.size());
        next.push_back((int)out.size());
        out.push_back({std::move(m), std::move(w)});
      }
    }
    frontier = std::move(next);
  }
  return out;
}

int find_element(const std::vector<GroupElement>& elements, const Isometry& m,
                 double tol) {
  for (size_t i = 0; i < elements.size(); ++i)
    if (elements[i].mat.max_abs_diff(m) <= tol) return (int)i;
  return -1;
}

GeometryConstants geometry_constants(const BasePolygon& poly) {
  GeometryConstants gc;
  const int n = 4 * poly.genus;
  const HPoint v0 = poly.vertices[0];
  const double R = poly.circumradius;

  // All tessellation vertices are deck translates of v0, so r_sep is the
  // minimum of d(v0, h v0) over nontrivial h.  Exhaustion certificate: any
  // candidate h better than the current bound `best` has d(v0, h o) <=
  // best + R, and every tile crossed by the geodesic from v0 to h o has its
  // center within (best + R) + R of v0; those tiles form an adjacency-
  // connected chain.  Hence a BFS over tile adjacency that keeps all tiles
  // with d(v0, g o) <= best + 2R visits every candidate.  `best` only
  // shrinks during the search, so the final collection is exhaustive.
  struct Key {
    long long a, b;
    bool operator==(const Key& o) const { return a == o.a && b == o.b; }
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      return std::hash<long long>()(k.a * 1000003LL ^ k.b);
    }
  };
  const double q = 1e-4;  // elements are >> q apart in these coordinates
  std::unordered_map<Key, int, KeyHash> seen;
  const auto probe = [&](const Vec3& img) {
    const long long a0 = (long long)std::floor(img[0] / q);
    const long long b0 = (long long)std::floor(img[1] / q);
    for (long long da = -1; da <= 1; ++da)
      for (long long db = -1; db <= 1; ++db)
        if (seen.count(Key{a0 + da, b0 + db})) return true;
    return false;
  };

  double best = 1e100;
  for (int k = 0; k < n; ++k)
    for (const HPoint& v : poly.vertices) {
      const double d = dist(v0, poly.crossing[k].apply(v));
      if (d > 1e-3) best = std::min(best, d);
    }

  std::vector<Isometry> queue{Isometry::identity()};
  seen[Key{0, 0}] = 1;
  size_t head = 0;
  while (head < queue.size()) {
    if (queue.size() > 2000000)
      throw CertificateError("vertex separation search exceeded its budget");
    const Isometry m = queue[head++];
    for (int k = 0; k < n; ++k) {
      Isometry nb = m * poly.crossing[k];
      const Vec3 img = nb.apply_vec({0, 0, 1});
      if (probe(img)) continue;
      HPoint center;
      center.c = img;
      if (dist(v0, center) > best + 2 * R + 1e-6) continue;
      const double d = dist(v0, nb.apply(v0));
      if (d > 1e-3) best = std::min(best, d);
      seen[Key{(long long)std::floor(img[0] / q),
               (long long)std::floor(img[1] / q)}] = 1;
      queue.push_back(std::move(nb));
    }
  }

  gc.r_sep = best;
  gc.phi = kPi - 2 * std::asin(1.0 / std::cosh(gc.r_sep / 2));
  gc.tolerance = kTauGeom;
  return gc;
}

}  // namespace repair
