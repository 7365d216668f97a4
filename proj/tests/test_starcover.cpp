#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <random>
#include <set>

#include "repair/starcover.hpp"

using namespace repair;

namespace {

Perm random_perm(int n, std::mt19937_64& rng) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  std::shuffle(v.begin(), v.end(), rng);
  return Perm(std::move(v));
}

PermRep random_rep(int genus, int n, std::mt19937_64& rng) {
  std::vector<Perm> images;
  for (int i = 0; i < 2 * genus; ++i) images.push_back(random_perm(n, rng));
  return PermRep(SurfacePresentation(genus), std::move(images));
}

PermRep trivial_rep(int genus, int n) {
  return PermRep(SurfacePresentation(genus), std::vector<Perm>(2 * genus, Perm::identity(n)));
}

}  // namespace

TEST_CASE("side labeling table") {
  for (int g : {2, 3}) {
    // Every generator appears exactly once positively and once negatively.
    std::vector<int> pos(2 * g, 0), neg(2 * g, 0);
    for (int k = 0; k < 4 * g; ++k) {
      Letter l = side_letter(g, k);
      (l.inverse ? neg : pos)[l.index]++;
      CHECK(side_partner(g, side_partner(g, k)) == k);
      // Partner carries the inverse letter.
      Letter lp = side_letter(g, side_partner(g, k));
      CHECK(l.index == lp.index);
      CHECK(l.inverse != lp.inverse);
    }
    for (int i = 0; i < 2 * g; ++i) {
      CHECK(pos[i] == 1);
      CHECK(neg[i] == 1);
    }
  }

  // The corner walk on the base tile crosses sides in an order whose letters
  // spell a cyclic rotation of the relator: this is the property that makes
  // corner cycle lengths equal 4g * cycles of rho(r).
  for (int g : {2, 3}) {
    const int n4g = 4 * g;
    Word walk_word;
    int c = 0;
    do {
      walk_word.push_back(side_letter(g, c));
      c = (side_partner(g, c) + 1) % n4g;
    } while (c != 0);
    REQUIRE(static_cast<int>(walk_word.size()) == n4g);
    // The composed permutation applies the first crossing first, i.e. reads
    // the letters right-to-left; reverse to compare as a word.
    std::reverse(walk_word.begin(), walk_word.end());
    Word r = SurfacePresentation(g).relator();
    bool is_rotation = false;
    for (int shift = 0; shift < n4g; ++shift) {
      bool ok = true;
      for (int i = 0; i < n4g; ++i)
        if (!(walk_word[i] == r[(i + shift) % n4g])) ok = false;
      if (ok) is_rotation = true;
    }
    CHECK(is_rotation);
  }
}

TEST_CASE("base surface: N=1 trivial rep") {
  StarCover X(trivial_rep(2, 1));
  CHECK(X.degree() == 1);
  CHECK(X.vertex_classes().size() == 1);  // single vertex, all 8 corners
  CHECK(X.vertex_classes()[0].degree == 1);
  CHECK(X.branching() == 0);
  CHECK(euler_characteristic(X) == -2);
  CHECK(area(X) == doctest::Approx(4 * std::numbers::pi));
  CHECK(components(X).components.size() == 1);
}

TEST_CASE("N=3 worked example: one singular vertex of degree 3") {
  SurfacePresentation pres(2);
  std::vector<Perm> imgs(4, Perm::identity(3));
  imgs[0] = Perm({1, 2, 0});
  imgs[1] = Perm({1, 0, 2});
  PermRep rep(pres, imgs);
  StarCover X(rep);

  int singular_count = 0;
  for (const auto& vc : X.vertex_classes()) {
    if (vc.singular()) {
      ++singular_count;
      CHECK(vc.degree == 3);
      CHECK(vc.corners.size() == 8 * 3);
      CHECK(vc.germs.size() == 8 * 3);
    }
  }
  CHECK(singular_count == 1);
  CHECK(X.branching() == 2);
  CHECK(euler_characteristic(X) == 3 * (2 - 2 * 2) - 2);  // -8
  CHECK(euler_characteristic(X) == -8);
}

TEST_CASE("unramified double cover") {
  SurfacePresentation pres(2);
  std::vector<Perm> imgs(4, Perm::identity(2));
  imgs[0] = Perm({1, 0});
  PermRep rep(pres, imgs);
  StarCover X(rep);
  CHECK(X.branching() == 0);
  CHECK(euler_characteristic(X) == -4);
  CHECK(components(X).components.size() == 1);
}

TEST_CASE("monodromy round trip: exhaustive N<=4 and random N<=64") {
  // Exhaustive over all reps would be |S_N|^4; instead exhaust N=2 fully
  // and sample densely for N in {3, 4}, then random up to 64.
  SurfacePresentation pres(2);
  std::vector<std::vector<int>> s2 = {{0, 1}, {1, 0}};
  for (auto& i0 : s2)
    for (auto& i1 : s2)
      for (auto& i2 : s2)
        for (auto& i3 : s2) {
          PermRep rep(pres, {Perm(i0), Perm(i1), Perm(i2), Perm(i3)});
          CHECK(monodromy(build_star_cover(rep)) == rep);
        }
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 63);
    PermRep rep = random_rep(2, n, rng);
    CHECK(monodromy(build_star_cover(rep)) == rep);
  }
}

TEST_CASE("corner cycles, branching bound, Euler characteristic") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 24);
    const int g = (trial % 5 == 0) ? 3 : 2;
    PermRep rep = random_rep(g, n, rng);
    StarCover X(rep);

    // Corner cycle lengths = 4g * cycle lengths of rho(r).
    Perm rel = evaluate_word(rep, rep.presentation.relator());
    std::vector<int> expect = rel.cycle_lengths();
    std::vector<int> got;
    for (const auto& vc : X.vertex_classes()) got.push_back(vc.degree);
    std::sort(got.begin(), got.end(), std::greater<int>());
    CHECK(got == expect);

    // beta <= N * defect.
    CHECK(X.branching() <= n * defect(rep) + 1e-12);

    // chi by cell counting vs Riemann-Hurwitz.
    CHECK(euler_characteristic(X) == n * (2 - 2 * g) - X.branching());

    CHECK(area(X) == doctest::Approx(n * 4 * std::numbers::pi * (g - 1)));
  }
}

TEST_CASE("germ positions are consistent") {
  std::mt19937_64 rng(31);
  PermRep rep = random_rep(2, 6, rng);
  StarCover X(rep);
  for (int t = 0; t < X.degree(); ++t) {
    for (int k = 0; k < X.sides_per_tile(); ++k) {
      // Start germ of (t,k) and end germ of the paired side are the same
      // geometric germ.
      auto [cls1, pos1] = X.germ_position_start(t, k);
      const auto [t2, k2] = X.paired_side(t, k);
      auto [cls2, pos2] = X.germ_position_end(t2, k2);
      CHECK(cls1 == cls2);
      CHECK(pos1 == pos2);
      // Edge ids agree across the pairing.
      CHECK(X.edge_id(t, k) == X.edge_id(t2, k2));
      // Germ sits at the vertex class of corner (t, k).
      CHECK(cls1 == X.vertex_class_of(t, k));
    }
  }
  // Edge count: 4g*N/2.
  CHECK(X.num_edges() == X.degree() * X.sides_per_tile() / 2);
}

TEST_CASE("components decomposition") {
  // Trivial rep in S_3: three components.
  StarCover X(trivial_rep(2, 3));
  auto dec = components(X);
  CHECK(dec.components.size() == 3);
  CHECK(dec.degrees == std::vector<int>{1, 1, 1});

  // Block union of two transitive reps.
  SurfacePresentation pres(2);
  std::vector<Perm> imgs(4, Perm::identity(5));
  imgs[0] = Perm({1, 0, 2, 3, 4});   // transitive on {0,1}
  imgs[1] = Perm({0, 1, 3, 4, 2});   // transitive on {2,3,4}
  StarCover Y(PermRep(pres, imgs));
  auto dec2 = components(Y);
  REQUIRE(dec2.components.size() == 2);
  std::multiset<int> degs(dec2.degrees.begin(), dec2.degrees.end());
  CHECK(degs == std::multiset<int>{2, 3});
}

TEST_CASE("debug dump format") {
  StarCover X(trivial_rep(2, 1));
  std::string dump = X.debug_dump();
  CHECK(dump.find("\"format\": 1") != std::string::npos);
  CHECK(dump.find("\"side_pairing\"") != std::string::npos);
}
