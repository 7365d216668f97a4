#include "repair/presentation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace repair {

Word word_inverse(const Word& w) {
  Word out;
  out.reserve(w.size());
  for (auto it = w.rbegin(); it != w.rend(); ++it) out.push_back({it->index, !it->inverse});
  return out;
}

SurfacePresentation::SurfacePresentation(int g) : genus(g) {
  if (g < 2) throw InputError("genus must be >= 2");
}

std::string SurfacePresentation::generator_name(int index) {
  const int handle = index / 2 + 1;
  return (index % 2 == 0 ? "a" : "b") + std::to_string(handle);
}

int SurfacePresentation::generator_index(const std::string& name) const {
  if (name.size() >= 2 && (name[0] == 'a' || name[0] == 'b')) {
    int handle = 0;
    try {
      handle = std::stoi(name.substr(1));
    } catch (...) {
      throw InputError("bad generator name: " + name);
    }
    if (handle >= 1 && handle <= genus) return 2 * (handle - 1) + (name[0] == 'b' ? 1 : 0);
  }
  throw InputError("unknown generator: " + name);
}

Word SurfacePresentation::relator() const {
  Word r;
  for (int i = 0; i < genus; ++i) {
    const int a = 2 * i, b = 2 * i + 1;
    r.push_back({a, false});
    r.push_back({b, false});
    r.push_back({a, true});
    r.push_back({b, true});
  }
  return r;
}

Letter SurfacePresentation::parse_letter(const std::string& s) const {
  bool inv = false;
  std::string name = s;
  const auto caret = s.find('^');
  if (caret != std::string::npos) {
    if (s.substr(caret) != "^-1")
      throw InputError("bad letter exponent in '" + s + "'");
    name = s.substr(0, caret);
    inv = true;
  }
  return Letter{generator_index(name), inv};
}

Word SurfacePresentation::parse_word(const std::string& s) const {
  Word w;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) w.push_back(parse_letter(tok));
  return w;
}

Perm Perm::identity(int n) {
  if (n < 1) throw InputError("permutation degree must be >= 1");
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  Perm p;
  p.images_ = std::move(v);
  return p;
}

Perm::Perm(std::vector<int> images) : images_(std::move(images)) {
  const int n = static_cast<int>(images_.size());
  if (n < 1) throw InputError("permutation degree must be >= 1");
  std::vector<char> seen(n, 0);
  for (int x : images_) {
    if (x < 0 || x >= n || seen[x]) throw InputError("images are not a bijection");
    seen[x] = 1;
  }
}

Perm Perm::inverse() const {
  std::vector<int> inv(images_.size());
  for (int i = 0; i < degree(); ++i) inv[images_[i]] = i;
  Perm p;
  p.images_ = std::move(inv);
  return p;
}

bool Perm::is_identity() const {
  for (int i = 0; i < degree(); ++i)
    if (images_[i] != i) return false;
  return true;
}

std::vector<int> Perm::cycle_lengths() const {
  std::vector<int> lengths;
  std::vector<char> seen(images_.size(), 0);
  for (int i = 0; i < degree(); ++i) {
    if (seen[i]) continue;
    int len = 0;
    for (int j = i; !seen[j]; j = images_[j]) {
      seen[j] = 1;
      ++len;
    }
    lengths.push_back(len);
  }
  std::sort(lengths.begin(), lengths.end(), std::greater<int>());
  return lengths;
}

std::vector<std::vector<int>> Perm::nontrivial_cycles() const {
  std::vector<std::vector<int>> cycles;
  std::vector<char> seen(images_.size(), 0);
  for (int i = 0; i < degree(); ++i) {
    if (seen[i] || images_[i] == i) {
      seen[i] = 1;
      continue;
    }
    std::vector<int> cyc;
    for (int j = i; !seen[j]; j = images_[j]) {
      seen[j] = 1;
      cyc.push_back(j);
    }
    cycles.push_back(std::move(cyc));
  }
  return cycles;
}

Perm operator*(const Perm& p, const Perm& q) {
  if (p.degree() != q.degree()) throw InputError("degree mismatch in composition");
  std::vector<int> v(p.degree());
  for (int x = 0; x < p.degree(); ++x) v[x] = p(q(x));
  Perm out;
  out.images_ = std::move(v);
  return out;
}

PermRep::PermRep(SurfacePresentation pres, std::vector<Perm> images)
    : presentation(pres), gen_images(std::move(images)) {
  if (static_cast<int>(gen_images.size()) != presentation.num_generators())
    throw InputError("wrong number of generator images");
  degree = gen_images.front().degree();
  for (const Perm& p : gen_images)
    if (p.degree() != degree) throw InputError("generator images have mixed degrees");
}

double hamming(const Perm& p, const Perm& q) {
  if (p.degree() != q.degree()) throw InputError("hamming: degree mismatch");
  int diff = 0;
  for (int i = 0; i < p.degree(); ++i)
    if (p(i) != q(i)) ++diff;
  return static_cast<double>(diff) / p.degree();
}

double rep_distance(const PermRep& r1, const PermRep& r2) {
  if (!(r1.presentation == r2.presentation) || r1.degree != r2.degree)
    throw InputError("rep_distance: mismatched representations");
  double total = 0;
  for (int i = 0; i < r1.presentation.num_generators(); ++i)
    total += hamming(r1.image(i), r2.image(i));
  return total;
}

Perm evaluate_word(const PermRep& rep, const Word& w) {
  Perm acc = Perm::identity(rep.degree);
  for (const Letter& l : w) {
    if (l.index < 0 || l.index >= rep.presentation.num_generators())
      throw InputError("evaluate_word: unknown generator index");
    acc = acc * (l.inverse ? rep.image(l.index).inverse() : rep.image(l.index));
  }
  return acc;
}

double defect(const PermRep& rep) {
  return hamming(evaluate_word(rep, rep.presentation.relator()), Perm::identity(rep.degree));
}

PermRep extend(const PermRep& rep, int M) {
  if (M < rep.degree) throw InputError("extend: M < N");
  std::vector<Perm> images;
  images.reserve(rep.gen_images.size());
  for (const Perm& p : rep.gen_images) {
    std::vector<int> v(M);
    std::iota(v.begin(), v.end(), 0);
    for (int i = 0; i < rep.degree; ++i) v[i] = p(i);
    images.emplace_back(std::move(v));
  }
  return PermRep(rep.presentation, std::move(images));
}

bool is_exact(const PermRep& rep) {
  return evaluate_word(rep, rep.presentation.relator()).is_identity();
}

std::string rep_to_json(const PermRep& rep) {
  // Keys are emitted in a fixed order (genus, degree, generators in
  // presentation order) so serialization is byte-stable.
  std::ostringstream os;
  os << "{\"genus\": " << rep.presentation.genus << ", \"degree\": " << rep.degree
     << ", \"generators\": {";
  for (int i = 0; i < rep.presentation.num_generators(); ++i) {
    if (i) os << ", ";
    os << '"' << SurfacePresentation::generator_name(i) << "\": [";
    const Perm& p = rep.image(i);
    for (int x = 0; x < p.degree(); ++x) {
      if (x) os << ", ";
      os << p(x);
    }
    os << ']';
  }
  os << "}}";
  return os.str();
}

PermRep rep_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw InputError(std::string("bad JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("genus") || !j.contains("degree") || !j.contains("generators"))
    throw InputError("PermRep JSON must contain genus, degree, generators");
  const int g = j["genus"].get<int>();
  const int n = j["degree"].get<int>();
  SurfacePresentation pres(g);
  std::vector<Perm> images;
  for (int i = 0; i < pres.num_generators(); ++i) {
    const std::string name = SurfacePresentation::generator_name(i);
    if (!j["generators"].contains(name)) throw InputError("missing generator " + name);
    std::vector<int> v = j["generators"][name].get<std::vector<int>>();
    if (static_cast<int>(v.size()) != n) throw InputError("generator " + name + " has wrong degree");
    images.emplace_back(std::move(v));
  }
  return PermRep(pres, std::move(images));
}

}  // namespace repair
