#include "repair/starcover.hpp"

#include <numbers>
#include <sstream>

namespace repair {

Letter side_letter(int genus, int k) {
  if (k < 0 || k >= 4 * genus) throw InputError("side index out of range");
  const int block = k / 4, pos = k % 4;
  // Block j carries handle g-j with pattern (b^-1, a, b, a^-1).  This is the
  // unique assignment (up to symmetry) compatible with the k <-> k+-2 pairing
  // for which the corner cycle around the single vertex spells the relator
  // prod_i [a_i, b_i]; see the corner-walk certificate in the tests.
  const int handle = genus - 1 - block;  // 0-based handle index
  switch (pos) {
    case 0: return Letter{2 * handle + 1, true};   // b^-1
    case 1: return Letter{2 * handle, false};      // a
    case 2: return Letter{2 * handle + 1, false};  // b
    default: return Letter{2 * handle, true};      // a^-1
  }
}

int side_partner(int genus, int k) {
  if (k < 0 || k >= 4 * genus) throw InputError("side index out of range");
  const int pos = k % 4;
  return k + (pos < 2 ? 2 : -2);
}

StarCover::StarCover(const PermRep& rep) : genus_(rep.presentation.genus), degree_(rep.degree) {
  const int n4g = 4 * genus_;
  crossing_.reserve(n4g);
  for (int k = 0; k < n4g; ++k) {
    const Letter l = side_letter(genus_, k);
    crossing_.push_back(l.inverse ? rep.image(l.index).inverse() : rep.image(l.index));
  }

  // Dense edge ids over side-pairing orbits.
  edge_id_.assign(degree_ * n4g, -1);
  for (int t = 0; t < degree_; ++t) {
    for (int k = 0; k < n4g; ++k) {
      if (edge_id_[t * n4g + k] >= 0) continue;
      const auto [t2, k2] = std::pair<int, int>{crossing_[k](t), side_partner(genus_, k)};
      edge_id_[t * n4g + k] = num_edges_;
      edge_id_[t2 * n4g + k2] = num_edges_;
      ++num_edges_;
    }
  }

  // Vertex classes by corner walking.  From corner (t, c): cross side c into
  // tile t' = crossing(c)(t), arriving at side partner(c) whose far end is
  // corner partner(c)+1 — the next corner clockwise around the vertex.
  corner_class_.assign(degree_ * n4g, -1);
  germ_pos_.assign(degree_ * n4g, -1);
  for (int t0 = 0; t0 < degree_; ++t0) {
    for (int c0 = 0; c0 < n4g; ++c0) {
      if (corner_class_[t0 * n4g + c0] >= 0) continue;
      VertexClass vc;
      int t = t0, c = c0;
      do {
        corner_class_[t * n4g + c] = static_cast<int>(classes_.size());
        vc.corners.push_back({t, c});
        // Germ crossed between this corner and the next: side c of tile t.
        germ_pos_[t * n4g + c] = static_cast<int>(vc.germs.size());
        vc.germs.push_back({t, c});
        const int t2 = crossing_[c](t);
        const int c2 = (side_partner(genus_, c) + 1) % n4g;
        t = t2;
        c = c2;
      } while (!(t == t0 && c == c0));
      if (vc.corners.size() % n4g != 0)
        throw CertificateError("corner walk orbit not a multiple of 4g");
      vc.degree = static_cast<int>(vc.corners.size()) / n4g;
      classes_.push_back(std::move(vc));
    }
  }
}

std::pair<int, int> StarCover::paired_side(int tile, int side) const {
  return {crossing_[side](tile), side_partner(genus_, side)};
}

std::pair<int, int> StarCover::germ_position_start(int tile, int side) const {
  const int cls = corner_class_[tile * 4 * genus_ + side];
  return {cls, germ_pos_[tile * 4 * genus_ + side]};
}

std::pair<int, int> StarCover::germ_position_end(int tile, int side) const {
  const auto [t2, k2] = paired_side(tile, side);
  return germ_position_start(t2, k2);
}

std::pair<int, int> StarCover::edge_end_classes(int tile, int side) const {
  const int n4g = 4 * genus_;
  const int start = corner_class_[tile * n4g + side];
  const int end = corner_class_[tile * n4g + (side + 1) % n4g];
  return {start, end};
}

std::vector<int> StarCover::singular_classes() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(classes_.size()); ++i)
    if (classes_[i].singular()) out.push_back(i);
  return out;
}

int StarCover::branching() const {
  int beta = 0;
  for (const VertexClass& vc : classes_) beta += vc.degree - 1;
  return beta;
}

std::string StarCover::debug_dump() const {
  std::ostringstream os;
  const int n4g = 4 * genus_;
  os << "{\"format\": 1, \"genus\": " << genus_ << ", \"degree\": " << degree_
     << ", \"side_pairing\": [";
  bool first = true;
  for (int t = 0; t < degree_; ++t) {
    for (int k = 0; k < n4g; ++k) {
      const auto [t2, k2] = paired_side(t, k);
      if (t2 * n4g + k2 < t * n4g + k) continue;  // emit each pair once
      if (!first) os << ", ";
      first = false;
      os << '[' << t << ", " << k << ", " << t2 << ", " << k2 << ']';
    }
  }
  os << "], \"vertex_classes\": [";
  for (size_t i = 0; i < classes_.size(); ++i) {
    if (i) os << ", ";
    os << "{\"degree\": " << classes_[i].degree << ", \"corners\": [";
    for (size_t j = 0; j < classes_[i].corners.size(); ++j) {
      if (j) os << ", ";
      os << '[' << classes_[i].corners[j].tile << ", " << classes_[i].corners[j].corner << ']';
    }
    os << "]}";
  }
  os << "]}";
  return os.str();
}

StarCover build_star_cover(const PermRep& rep) { return StarCover(rep); }

PermRep monodromy(const StarCover& X) {
  SurfacePresentation pres(X.genus());
  std::vector<Perm> images;
  images.reserve(pres.num_generators());
  for (int i = 0; i < pres.num_generators(); ++i) {
    // Handle h (0-based i/2) sits in block g-1-h; a is carried positively on
    // block position 1, b on position 2.
    const int side = 4 * (X.genus() - 1 - i / 2) + 1 + (i % 2);
    images.push_back(X.crossing(side));
  }
  return PermRep(pres, std::move(images));
}

int euler_characteristic(const StarCover& X) {
  const int V = static_cast<int>(X.vertex_classes().size());
  const int E = X.num_edges();
  const int F = X.degree();
  return V - E + F;
}

double area(const StarCover& X) {
  return X.degree() * 4.0 * std::numbers::pi * (X.genus() - 1);
}

CoverComponentDecomposition components(const StarCover& X) {
  const int n = X.degree();
  std::vector<int> comp(n, -1);
  CoverComponentDecomposition out;
  for (int start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    std::vector<int> stack{start}, members;
    comp[start] = static_cast<int>(out.components.size());
    while (!stack.empty()) {
      const int t = stack.back();
      stack.pop_back();
      members.push_back(t);
      for (int k = 0; k < X.sides_per_tile(); ++k) {
        const int t2 = X.crossing(k)(t);
        if (comp[t2] < 0) {
          comp[t2] = comp[start];
          stack.push_back(t2);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.degrees.push_back(static_cast<int>(members.size()));
    out.components.push_back(std::move(members));
  }
  return out;
}

}  // namespace repair
