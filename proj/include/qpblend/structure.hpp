#pragma once

#include <string>
#include <vector>

#include "qpblend/common.hpp"

namespace qpblend {

// A semantic output type shared by a set of skills (e.g. end-effector
// velocity). Skills bound to the same space are tied by equality constraints.
struct ControlSpace {
  std::string id;
  int dim = 0;
};

// One skill's slot in the stacked output vector.
struct SkillSlot {
  std::string id;
  std::string space;  // references a declared ControlSpace
  int dim = 0;        // block size n_k, equals the space dim
};

// The stacked skill-output space of one blending QP family.
//
// n = sum of skill block dims, q = sum of distinct used space dims. S (n x q)
// copies each reduced control into the blocks of the skills bound to it;
// its range is exactly null(P). P (p x n, p = n - q) pairwise ties
// consecutive skills that share a space ([... I ... -I ...] rows), r = 0.
struct BlendStructure {
  std::vector<SkillSlot> skills;
  std::vector<ControlSpace> spaces;  // used spaces, first-use order = reduced layout
  int n = 0;
  int q = 0;
  Mat S;  // n x q
  Mat P;  // p x n
  Vec r;  // p, all zeros
  std::vector<std::vector<int>> groups;  // softmax partition of skill indices

  std::vector<int> block_offsets;  // per skill, offset into the stacked vector
  std::vector<int> space_offsets;  // per used space, offset into the reduced vector
  std::vector<int> skill_space;    // per skill, index into spaces

  int p() const { return static_cast<int>(P.rows()); }
  int group_of(int skill_index) const;
  int space_offset_of_skill(int skill_index) const;
};

// Builds S, P, r and validates the partition. Throws ConfigError on an empty
// skill list, duplicate skill ids, a skill referencing an undeclared space,
// a block dim that disagrees with its space, or a non-partition `groups`.
BlendStructure build_structure(const std::vector<ControlSpace>& spaces,
                               const std::vector<SkillSlot>& skills,
                               const std::vector<std::vector<int>>& groups);

// Orthogonal projector onto null(P): I - P^T (P P^T)^{-1} P. Identity for
// p = 0. Throws NumericalError if P is rank deficient.
Mat nullspace_projector(const Mat& P, int n);

// Convenience overload using the structure's own P.
Mat nullspace_projector(const BlendStructure& st);

}  // namespace qpblend
