#pragma once

#include <string>
#include <vector>

#include "repair/presentation.hpp"

namespace repair {

// ---------------------------------------------------------------------------
// Side labeling table for the 4g-gon (single source of truth, imported by all
// modules).  Sides are numbered 0..4g-1 counterclockwise; side k runs from
// polygon vertex k to vertex k+1 and carries the k-th letter of the relator
//   r = a1 b1 a1^-1 b1^-1 a2 b2 a2^-1 b2^-1 ...
// so block 4i carries a_{i+1}, 4i+1 carries b_{i+1}, 4i+2 carries a_{i+1}^-1,
// 4i+3 carries b_{i+1}^-1.  Side k is glued to side_partner(k), the side
// carrying the inverse letter.
// ---------------------------------------------------------------------------

// Letter carried by side k.
Letter side_letter(int genus, int k);
// The partner side carrying the inverse letter (4i <-> 4i+2, 4i+1 <-> 4i+3).
int side_partner(int genus, int k);

// A corner of a tile: corner c of tile t sits at polygon vertex c, between
// side c-1 (mod 4g) and side c.
struct Corner {
  int tile = 0;
  int corner = 0;
  bool operator==(const Corner&) const = default;
};

// A germ of a skeleton edge at a vertex, canonically encoded by the
// (tile, side) whose *start* corner (corner index == side index) sits at the
// vertex.  The same geometric germ also appears as the end germ of the paired
// side; StarCover resolves both encodings to one position.
struct Germ {
  int tile = 0;
  int side = 0;
  bool operator==(const Germ&) const = default;
};

// A vertex class of the tessellated cover: an orbit of corners under corner
// walking.  `corners` lists the orbit in cyclic walk order; `germs` lists the
// edge germs around the vertex in matching cyclic order (germ j is the side
// crossed between corners j and j+1).  The full turn around the vertex is
// 2*pi*degree; consecutive germs are separated by one corner angle pi/(2g).
struct VertexClass {
  std::vector<Corner> corners;
  std::vector<Germ> germs;
  int degree = 1;  // cone degree d_v; corners.size() == 4g * degree
  bool singular() const { return degree > 1; }
};

// Tessellated *-cover of the base surface built from a permutation
// representation: one 4g-gon tile per sheet, sides glued by the generator
// images, all branching concentrated over the single vertex of the base
// polygon.
class StarCover {
 public:
  explicit StarCover(const PermRep& rep);

  int genus() const { return genus_; }
  int degree() const { return degree_; }
  int sides_per_tile() const { return 4 * genus_; }

  // Crossing permutation of side k: crossing side k of tile t enters tile
  // crossing(k)(t) through side side_partner(k).
  const Perm& crossing(int side) const { return crossing_[side]; }

  // Side pairing as a function on (tile, side).
  std::pair<int, int> paired_side(int tile, int side) const;

  // Skeleton edges: unordered side pairs.  edge_id is defined for every
  // (tile, side) with paired sides sharing one id; ids are dense 0..E-1.
  int num_edges() const { return num_edges_; }
  int edge_id(int tile, int side) const { return edge_id_[tile * 4 * genus_ + side]; }

  const std::vector<VertexClass>& vertex_classes() const { return classes_; }
  int vertex_class_of(int tile, int corner) const {
    return corner_class_[tile * 4 * genus_ + corner];
  }

  // Position of a germ in the cyclic germ list of its vertex class.
  // Encodings: start germ of (tile, side) or, equivalently, end germ of the
  // paired side.  Returns (class id, position).
  std::pair<int, int> germ_position_start(int tile, int side) const;
  std::pair<int, int> germ_position_end(int tile, int side) const;

  // The two vertex classes at the ends of a skeleton edge, given one of its
  // (tile, side) encodings: {class at start corner, class at end corner}.
  std::pair<int, int> edge_end_classes(int tile, int side) const;

  std::vector<int> singular_classes() const;  // class ids with degree > 1
  int branching() const;                       // beta(X) = sum (d_v - 1)

  // JSON debug dump, versioned with "format": 1.
  std::string debug_dump() const;

 private:
  int genus_;
  int degree_;
  std::vector<Perm> crossing_;
  std::vector<int> edge_id_;
  int num_edges_ = 0;
  std::vector<int> corner_class_;
  std::vector<VertexClass> classes_;
  std::vector<int> germ_pos_;  // position of start germ (tile, side), -1 pad
};

struct CoverComponentDecomposition {
  std::vector<std::vector<int>> components;  // tile subsets, each sorted
  std::vector<int> degrees;                  // per-component tile counts
};

StarCover build_star_cover(const PermRep& rep);

// Reads the representation back off the side pairing; exact inverse of
// build_star_cover under the tile == sheet identification.
PermRep monodromy(const StarCover& X);

// V - E + F of the tessellation (certified against N(2-2g) - beta in tests).
int euler_characteristic(const StarCover& X);

// N * 4pi(g-1).
double area(const StarCover& X);

// Orbit decomposition of the generator action on sheets.
CoverComponentDecomposition components(const StarCover& X);

}  // namespace repair
