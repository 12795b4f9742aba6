#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mivolo/config.hpp"
#include "mivolo/image.hpp"

namespace mivolo {

enum class ObjectKind { face, person };

struct Detection {
  BBox bbox;
  ObjectKind kind = ObjectKind::face;
  double score = 1.0;
};

struct AssignmentResult {
  std::vector<std::pair<std::size_t, std::size_t>> matched;  // (face, person)
  std::vector<std::size_t> unmatched_faces;
  std::vector<std::size_t> unmatched_persons;
  double total_cost = 0.0;  // over the padded square problem
};

// Minimum-cost perfect matching on a square cost matrix (row-major n x n).
// Returns the column assigned to each row.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n);

// 1 - area(face & person) / area(face); exactly 1 when they do not overlap.
double face_person_cost(const BBox& face, const BBox& person);

// Square cost matrix for assign(): real pairs use face_person_cost, padding
// rows/columns cost 1 (the same as leaving a box unmatched).
std::vector<double> assignment_cost_matrix(const std::vector<BBox>& faces,
                                           const std::vector<BBox>& persons, std::size_t& n);

// Face-to-person matching minimizing total cost; zero-overlap pairs are never
// matched.
AssignmentResult assign(const std::vector<BBox>& faces, const std::vector<BBox>& persons);

}  // namespace mivolo
