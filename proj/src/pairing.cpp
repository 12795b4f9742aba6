#include "mivolo/pairing.hpp"

#include <limits>

#include "mivolo/error.hpp"

namespace mivolo {

std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionError("hungarian: cost matrix is not n x n");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t prev = way[col0];
      match[col0] = match[prev];
      col0 = prev;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

double face_person_cost(const BBox& face, const BBox& person) {
  const BBox inter = intersect(face, person);
  return 1.0 - static_cast<double>(inter.area()) / static_cast<double>(face.area());
}

std::vector<double> assignment_cost_matrix(const std::vector<BBox>& faces,
                                           const std::vector<BBox>& persons, std::size_t& n) {
  for (const auto& b : faces)
    if (!b.valid()) throw InputError("degenerate face box");
  for (const auto& b : persons)
    if (!b.valid()) throw InputError("degenerate person box");
  n = std::max(faces.size(), persons.size());
  std::vector<double> cost(n * n, 1.0);
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (std::size_t p = 0; p < persons.size(); ++p)
      cost[f * n + p] = face_person_cost(faces[f], persons[p]);
  return cost;
}

AssignmentResult assign(const std::vector<BBox>& faces, const std::vector<BBox>& persons) {
  std::size_t n = 0;
  const std::vector<double> cost = assignment_cost_matrix(faces, persons, n);
  AssignmentResult result;
  const std::vector<std::size_t> cols = hungarian(cost, n);
  std::vector<bool> person_used(persons.size(), false);
  for (std::size_t f = 0; f < n; ++f) {
    result.total_cost += cost[f * n + cols[f]];
    if (f >= faces.size()) continue;
    const std::size_t p = cols[f];
    if (p < persons.size() && intersect(faces[f], persons[p]).valid()) {
      result.matched.emplace_back(f, p);
      person_used[p] = true;
    } else {
      result.unmatched_faces.push_back(f);
    }
  }
  for (std::size_t p = 0; p < persons.size(); ++p)
    if (!person_used[p]) result.unmatched_persons.push_back(p);
  return result;
}

}  // namespace mivolo
