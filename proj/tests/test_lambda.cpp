#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "doctest.h"
#include "repair/errors.hpp"
#include "repair/lambda_system.hpp"

using namespace repair;

namespace {

constexpr double kPi = 3.14159265358979323846;

const BasePolygon& base2() {
  static const BasePolygon poly = build_base_polygon(2);
  return poly;
}

// Built once; every test case below checks a different aspect of it.
const LambdaSystem& sys2() {
  static const LambdaSystem sys = build_lambda_system(base2());
  return sys;
}

// Abelianized image of a word: exponent sum per generator.
std::array<int, 4> homology(const Word& w) {
  std::array<int, 4> h{0, 0, 0, 0};
  for (const Letter& l : w) h[l.index] += l.inverse ? -1 : 1;
  return h;
}

// Symplectic intersection form on H_1: <a_i, b_i> = 1, all other pairs 0.
int symplectic(const std::array<int, 4>& u, const std::array<int, 4>& v) {
  return u[0] * v[1] - u[1] * v[0] + u[2] * v[3] - u[3] * v[2];
}

}  // namespace

TEST_CASE("chain-curve table: lengths, marks, homology") {
  const LambdaSystem& sys = sys2();
  REQUIRE(sys.genus == 2);
  REQUIRE(sys.curves.size() == 4);

  // Curves 0, 1, 3 are single generators.
  for (int i : {0, 1, 3}) {
    CHECK(sys.curves[i].word.size() == 1);
    CHECK(sys.curves[i].length ==
          doctest::Approx(axis(sys.curves[i].word, base2()).translation_length)
              .epsilon(1e-12));
  }
  CHECK(sys.curves[2].word.size() == 2);

  // Every length matches the trace of its holonomy: L = 2 acosh(tr/2 - 1/2)
  // is what axis() computes; re-derive from the matrix directly.
  for (const LambdaCurve& c : sys.curves) {
    const Isometry m = base2().holonomy(c.word);
    const double tr = m.m[0] + m.m[4] + m.m[8];
    CHECK(c.length == doctest::Approx(std::acosh((tr - 1) / 2)).epsilon(1e-12));
    // Axis is genuinely invariant under the holonomy.
    const Vec3 n2 = m.apply_vec(c.axis.geodesic.normal);
    for (int k = 0; k < 3; ++k)
      CHECK(n2[k] == doctest::Approx(c.axis.geodesic.normal[k]).epsilon(1e-8));
  }

  // Marked points: mark_next is the unique arc-length parameter (mod length)
  // where the next chain curve crosses, and mark_prev the one where the
  // previous curve does.
  const std::vector<GroupElement> mark_ball = group_ball(base2(), 4);
  auto circ_close = [](double t, double mark, double len) {
    double d = std::fmod(std::abs(t - mark), len);
    return std::min(d, len - d) <= 1e-6;
  };
  for (int i = 0; i + 1 < 4; ++i) {
    const auto fwd = geodesic_intersection_params(sys.curves[i].axis,
                                                  sys.curves[i + 1].axis, mark_ball);
    REQUIRE(fwd.size() == 1);
    CHECK(circ_close(fwd[0], sys.curves[i].mark_next, sys.curves[i].length));
    const auto bwd = geodesic_intersection_params(sys.curves[i + 1].axis,
                                                  sys.curves[i].axis, mark_ball);
    REQUIRE(bwd.size() == 1);
    CHECK(circ_close(bwd[0], sys.curves[i + 1].mark_prev, sys.curves[i + 1].length));
  }

  // Algebraic-homology oracle: the geometric crossing counts of the chain
  // must dominate |symplectic pairing| and agree with it exactly here.
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const int alg =
          std::abs(symplectic(homology(sys.curves[i].word), homology(sys.curves[j].word)));
      CHECK(sys.intersections[i][j] == (std::abs(i - j) == 1 ? 1 : 0));
      CHECK(sys.intersections[i][j] == alg);
    }
}

TEST_CASE("crossing counts against a fundamental-domain enumeration") {
  const LambdaSystem& sys = sys2();
  const std::vector<GroupElement> ball = group_ball(base2(), 3);
  // Count crossing points of the full preimages of two curves that land in
  // the closed base polygon, deduplicating stabilizer repeats; each surface
  // crossing has exactly one lift there (no crossing sits on the boundary).
  auto fd_count = [&](int i, int j) {
    std::vector<HPoint> pts;
    for (const GroupElement& g1 : ball)
      for (const GroupElement& g2 : ball) {
        Geodesic l1{g1.mat.apply_vec(sys.curves[i].axis.geodesic.normal)};
        Geodesic l2{g2.mat.apply_vec(sys.curves[j].axis.geodesic.normal)};
        const auto p = geodesic_intersection(l1, l2);
        if (!p || !base2().contains(*p, 1e-9)) continue;
        bool seen = false;
        for (const HPoint& q : pts)
          if (dist(*p, q) < 1e-6) {
            seen = true;
            break;
          }
        if (!seen) pts.push_back(*p);
      }
    return static_cast<int>(pts.size());
  };
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      CHECK(fd_count(i, j) == sys.intersections[i][j]);
      CHECK(sys.intersections[i][j] == sys.intersections[j][i]);
    }
}

TEST_CASE("complement polygon: shape, area, labels") {
  const LambdaSystem& sys = sys2();
  REQUIRE(sys.num_sides() == 12);
  CHECK(sys.p_area == doctest::Approx(4 * kPi).epsilon(1e-9));
  CHECK(hyperbolic_area(sys.klein()) == doctest::Approx(4 * kPi).epsilon(1e-9));
  CHECK(sys.contains(sys.interior_point, -1e-9));

  // Convex and counterclockwise: every vertex strictly inside every other
  // side's half-plane, and each vertex on its two adjacent side geodesics.
  for (int k = 0; k < 12; ++k) {
    const Geodesic g = sys.p_side_geodesic(k);
    CHECK(std::abs(g.side(sys.p_vertex(k))) <= 1e-6);
    CHECK(std::abs(g.side(sys.p_vertex(k + 1))) <= 1e-6);
    for (int j = 0; j < 12; ++j)
      if (j != k && j != (k + 1) % 12) CHECK(g.side(sys.p_vertex(j)) < -1e-6);
  }

  // Side lengths match their vertex pairs.
  double perimeter = 0;
  for (int k = 0; k < 12; ++k) {
    CHECK(sys.sides[k].length ==
          doctest::Approx(dist(sys.p_vertex(k), sys.p_vertex(k + 1))).epsilon(1e-9));
    perimeter += sys.sides[k].length;
  }
  // Each curve is traversed exactly twice by the boundary of P.
  double twice_curves = 0;
  for (const LambdaCurve& c : sys.curves) twice_curves += 2 * c.length;
  CHECK(perimeter == doctest::Approx(twice_curves).epsilon(1e-9));

  // Label multiset: end curves contribute 2 sides, middle curves 4, with
  // orientations balanced per (curve, arc).
  std::map<std::pair<int, int>, std::array<int, 2>> by_arc;
  for (const PSide& s : sys.sides) by_arc[{s.label.curve, s.label.arc}][s.label.bar]++;
  CHECK(by_arc.size() == 6);  // curves 0,3: one arc; curves 1,2: two arcs
  for (const auto& [key, cnt] : by_arc) {
    CHECK(cnt[0] == 1);
    CHECK(cnt[1] == 1);
    if (key.first == 0 || key.first == 3) CHECK(key.second == 0);
  }

  // End-curve sides cover the whole curve; the two arcs of a middle curve
  // partition it.
  std::map<std::pair<int, int>, double> arc_len;
  for (const PSide& s : sys.sides)
    if (!s.label.bar) arc_len[{s.label.curve, s.label.arc}] = s.length;
  CHECK(arc_len[{0, 0}] == doctest::Approx(sys.curves[0].length).epsilon(1e-9));
  CHECK(arc_len[{3, 0}] == doctest::Approx(sys.curves[3].length).epsilon(1e-9));
  for (int c : {1, 2})
    CHECK(arc_len[{c, 0}] + arc_len[{c, 1}] ==
          doctest::Approx(sys.curves[c].length).epsilon(1e-9));

  // Every side lies on the advertised lift of its curve's axis.
  for (const PSide& s : sys.sides) {
    const Isometry g = base2().holonomy(s.lift_word);
    const Geodesic lift{g.apply_vec(sys.curves[s.label.curve].axis.geodesic.normal)};
    const int k = static_cast<int>(&s - sys.sides.data());
    CHECK(std::abs(lift.side(sys.p_vertex(k))) <= 1e-6);
    CHECK(std::abs(lift.side(sys.p_vertex(k + 1))) <= 1e-6);
  }
}

TEST_CASE("side pairing: involution, deck elements, transport") {
  const LambdaSystem& sys = sys2();
  for (int k = 0; k < 12; ++k) {
    const PSide& s = sys.sides[k];
    REQUIRE(s.partner >= 0);
    REQUIRE(s.partner < 12);
    CHECK(s.partner != k);
    CHECK(sys.sides[s.partner].partner == k);
    // Matching labels: same curve and arc, opposite orientation, same length.
    CHECK(sys.sides[s.partner].label.curve == s.label.curve);
    CHECK(sys.sides[s.partner].label.arc == s.label.arc);
    CHECK(sys.sides[s.partner].label.bar != s.label.bar);
    CHECK(sys.sides[s.partner].length == doctest::Approx(s.length).epsilon(1e-9));
    // The crossing is a genuine deck element given by its word, not the
    // identity, and paired crossings are mutually inverse.
    CHECK(base2().holonomy(s.crossing_word).max_abs_diff(s.crossing) <= 1e-9);
    CHECK_FALSE(s.crossing.is_identity(1e-6));
    // Products of up to ten generator matrices carry a few ulps times
    // their norms, so these group identities hold to ~1e-8, not 1e-12.
    CHECK((s.crossing * sys.sides[s.partner].crossing).is_identity(1e-7));
    // It carries the partner side onto this side (orientation reversed).
    CHECK(dist(s.crossing.apply(sys.p_vertex(s.partner)), sys.p_vertex(k + 1)) <= 1e-4);
    CHECK(dist(s.crossing.apply(sys.p_vertex(s.partner + 1)), sys.p_vertex(k)) <= 1e-4);
    // The neighboring tile lies strictly outside this side.
    CHECK(sys.p_side_geodesic(k).side(s.crossing.apply(sys.interior_point)) > 1e-9);
  }
}

TEST_CASE("corner cycles and quotient Euler characteristic") {
  const LambdaSystem& sys = sys2();
  REQUIRE(sys.vertex_cycles.size() == 3);
  std::vector<int> seen(12, 0);
  for (const std::vector<int>& cyc : sys.vertex_cycles) {
    REQUIRE(cyc.size() == 4);
    double angle = 0;
    Isometry acc = Isometry::identity();
    for (size_t t = 0; t < cyc.size(); ++t) {
      const int c = cyc[t];
      seen[c]++;
      angle += angle_at(sys.p_vertex(c), sys.p_vertex(c + 1), sys.p_vertex(c + 11));
      acc = acc * sys.sides[c].crossing;
      // Walk rule: the next corner in the cycle is partner(c) + 1.
      CHECK(cyc[(t + 1) % cyc.size()] == (sys.sides[c].partner + 1) % 12);
    }
    CHECK(angle == doctest::Approx(2 * kPi).epsilon(1e-9));
    CHECK(acc.is_identity(1e-6));
  }
  for (int k = 0; k < 12; ++k) CHECK(seen[k] == 1);

  // Euler characteristic of the quotient cell structure: V - E + F with
  // V = #corner orbits, E = 12/2 paired sides, F = 1 polygon.
  const int chi = static_cast<int>(sys.vertex_cycles.size()) - 12 / 2 + 1;
  CHECK(chi == 2 - 2 * sys.genus);
}

TEST_CASE("overlay cells tile the base polygon") {
  const LambdaSystem& sys = sys2();
  REQUIRE(!sys.overlay.empty());
  double total = 0;
  bool has_identity = false;
  for (const OverlayCell& cell : sys.overlay) {
    CHECK(cell.area >= 1e-7);
    CHECK(cell.area == doctest::Approx(hyperbolic_area(cell.poly)).epsilon(1e-9));
    CHECK(base2().holonomy(cell.deck_word).max_abs_diff(cell.deck) <= 1e-9);
    if (cell.deck_word.empty()) has_identity = true;
    total += cell.area;
    // Cell vertices lie (weakly) inside both the base polygon and the
    // deck-translated complement polygon.
    const Isometry inv = cell.deck.inverse();
    for (const auto& v : cell.poly.pts) {
      const HPoint p = HPoint::from_klein(v[0], v[1]);
      CHECK(base2().contains(p, 1e-7));
      CHECK(sys.contains(inv.apply(p), 1e-7));
    }
  }
  CHECK(has_identity);
  CHECK(total == doctest::Approx(base2().area).epsilon(1e-8));
  CHECK(total == doctest::Approx(4 * kPi).epsilon(1e-8));
}

TEST_CASE("segment wall crossings walk the tiling consistently") {
  const LambdaSystem& sys = sys2();
  const HPoint a = sys.interior_point;

  // Walking from the interior point to its image under a deck element must
  // end in that element's tile.
  const SurfacePresentation pres(2);
  for (const char* wtxt : {"a1", "b1", "a2 b2^-1", "a1 b1 a2"}) {
    const Word w = pres.parse_word(wtxt);
    const Isometry h = base2().holonomy(w);
    const auto crossings = segment_side_crossings(sys, base2(), a, h.apply(a));
    REQUIRE(!crossings.empty());
    // Fold the crossing elements: deck word of the final tile.
    Isometry deck = Isometry::identity();
    for (const SideCrossing& c : crossings) {
      CHECK(base2().holonomy(c.tile).max_abs_diff(deck) <= 1e-7);
      deck = deck * sys.sides[c.side].crossing;
    }
    CHECK(deck.max_abs_diff(h) <= 1e-7);
    // Reverse walk crosses the partner sides in reverse order.
    const auto rev = segment_side_crossings(sys, base2(), h.apply(a), a, w);
    REQUIRE(rev.size() == crossings.size());
    for (size_t t = 0; t < rev.size(); ++t)
      CHECK(rev[t].side == sys.sides[crossings[crossings.size() - 1 - t].side].partner);
  }

  // A segment inside the tile crosses nothing; a wrong start tile throws.
  CHECK(segment_side_crossings(sys, base2(), a, a).empty());
  CHECK_THROWS_AS(
      segment_side_crossings(sys, base2(), a, a, pres.parse_word("a1")),
      InputError);
}

TEST_CASE("serialization round trip and cache behavior") {
  const LambdaSystem& sys = sys2();
  const std::string j1 = lambda_to_json(sys);
  const LambdaSystem back = lambda_from_json(j1, base2());
  CHECK(lambda_to_json(back) == j1);  // byte-stable
  CHECK(back.num_sides() == sys.num_sides());
  CHECK(back.p_area == doctest::Approx(sys.p_area).epsilon(1e-12));

  // A rebuilt system is bit-identical in its serialized form (determinism).
  CHECK(lambda_to_json(build_lambda_system(2)) == j1);

  // Tampered payloads are rejected rather than trusted.
  CHECK_THROWS_AS(lambda_from_json("{not json", base2()), InputError);
  std::string wrong_genus = j1;
  const size_t pos = wrong_genus.find("\"genus\": 2");
  REQUIRE(pos != std::string::npos);
  wrong_genus.replace(pos, 10, "\"genus\": 3");
  CHECK_THROWS_AS(lambda_from_json(wrong_genus, base2()), InputError);

  // Disk cache: first call writes, second call loads the identical system;
  // a corrupt cache file is silently rebuilt.
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "surface_repair_test_cache";
  fs::create_directories(dir);
  setenv("SURFACE_REPAIR_CACHE", dir.c_str(), 1);
  const LambdaSystem c1 = load_or_build_lambda_system(base2());
  CHECK(fs::exists(dir / "lambda_g2.json"));
  CHECK(lambda_to_json(c1) == j1);
  {
    std::ofstream out(dir / "lambda_g2.json", std::ios::trunc);
    out << "garbage";
  }
  const LambdaSystem c2 = load_or_build_lambda_system(base2());
  CHECK(lambda_to_json(c2) == j1);
  unsetenv("SURFACE_REPAIR_CACHE");
  fs::remove_all(dir);
}

TEST_CASE("unsupported genus is rejected") {
  CHECK_THROWS_AS(build_lambda_system(3), InputError);
}
