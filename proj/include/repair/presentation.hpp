#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "repair/errors.hpp"

namespace repair {

// A letter of a word over the generators a_1,b_1,...,a_g,b_g and their
// inverses.  `index` is the generator index in [0, 2g): even indices are a's,
// odd indices are b's ("a1"=0, "b1"=1, "a2"=2, ...).  `inverse` marks a
// formal inverse.
struct Letter {
  int index = 0;
  bool inverse = false;

  bool operator==(const Letter&) const = default;
};

using Word = std::vector<Letter>;

// Inverse of a word (reverse order, flip every letter).
Word word_inverse(const Word& w);

// The fixed one-relator presentation of the genus-g surface group:
// generators a_1,b_1,...,a_g,b_g and relator r = prod_i [a_i, b_i].
struct SurfacePresentation {
  int genus = 2;

  explicit SurfacePresentation(int g);

  int num_generators() const { return 2 * genus; }

  // Name of generator `index` ("a1", "b1", "a2", ...).
  static std::string generator_name(int index);
  // Parses "a1"/"b1"... -> index; throws InputError on unknown names.
  int generator_index(const std::string& name) const;

  // Relator prod_i [a_i, b_i] as a word of length 4g.
  Word relator() const;

  // Parses "a1" or "b2^-1" into a letter; throws InputError on bad syntax.
  Letter parse_letter(const std::string& s) const;
  // Parses a whitespace-separated word, e.g. "a1 b1^-1 a2".
  Word parse_word(const std::string& s) const;

  bool operator==(const SurfacePresentation& o) const { return genus == o.genus; }
};

// A permutation of {0..N-1}.  Acts on points on the left; composition is
// (p * q)(x) = p(q(x)).
class Perm {
 public:
  Perm() = default;
  static Perm identity(int n);
  // Validates that `images` is a bijection of {0..N-1}.
  explicit Perm(std::vector<int> images);

  int degree() const { return static_cast<int>(images_.size()); }
  int operator()(int x) const { return images_[x]; }
  const std::vector<int>& images() const { return images_; }

  Perm inverse() const;
  bool is_identity() const;

  // Cycle lengths in a canonical order (sorted decreasing, then by smallest
  // element); includes fixed points as length-1 cycles.
  std::vector<int> cycle_lengths() const;
  // Cycles of length >= 2, each listed from its smallest element, ordered by
  // smallest element.
  std::vector<std::vector<int>> nontrivial_cycles() const;

  friend Perm operator*(const Perm& p, const Perm& q);  // (p*q)(x) = p(q(x))
  bool operator==(const Perm&) const = default;

 private:
  std::vector<int> images_;
};

// A homomorphism F_Sigma -> S_N given by generator images.
struct PermRep {
  SurfacePresentation presentation{2};
  int degree = 1;
  std::vector<Perm> gen_images;  // indexed by generator index, size 2g

  PermRep(SurfacePresentation pres, std::vector<Perm> images);

  const Perm& image(int gen_index) const { return gen_images[gen_index]; }

  bool operator==(const PermRep&) const = default;
};

// Normalized Hamming distance |{i : p(i) != q(i)}| / N.
double hamming(const Perm& p, const Perm& q);

// Sum of per-generator Hamming distances; range [0, 2g].
double rep_distance(const PermRep& r1, const PermRep& r2);

// Evaluate a word under the left-action convention:
// evaluate_word(uv) = evaluate_word(u) * evaluate_word(v).
Perm evaluate_word(const PermRep& rep, const Word& w);

// d_N(rho(r), id): fraction of points moved by the relator image.
double defect(const PermRep& rep);

// Trivial extension E_N^M: generators fix the new points N..M-1.
PermRep extend(const PermRep& rep, int M);

// True iff rho(r) = id, i.e. the rep factors through the surface group.
bool is_exact(const PermRep& rep);

// JSON (de)serialization.  Canonical key order (genus, degree, generators
// with generator keys in presentation order); byte-stable round trips.
std::string rep_to_json(const PermRep& rep);
PermRep rep_from_json(const std::string& text);

}  // namespace repair
