#include "qpblend/structure.hpp"

#include <Eigen/Cholesky>

#include <map>
#include <set>

namespace qpblend {

int BlendStructure::group_of(int skill_index) const {
  for (int g = 0; g < static_cast<int>(groups.size()); ++g) {
    for (int k : groups[g]) {
      if (k == skill_index) return g;
    }
  }
  throw ConfigError("skill index " + std::to_string(skill_index) + " not in any group");
}

int BlendStructure::space_offset_of_skill(int skill_index) const {
  return space_offsets[skill_space[skill_index]];
}

BlendStructure build_structure(const std::vector<ControlSpace>& spaces,
                               const std::vector<SkillSlot>& skills,
                               const std::vector<std::vector<int>>& groups) {
  if (skills.empty()) throw ConfigError("build_structure: empty skill list");

  std::map<std::string, int> declared;  // space id -> dim
  for (const auto& sp : spaces) {
    if (sp.dim < 1) throw ConfigError("control space '" + sp.id + "' has dim < 1");
    if (!declared.emplace(sp.id, sp.dim).second)
      throw ConfigError("duplicate control space id '" + sp.id + "'");
  }

  BlendStructure st;
  st.skills = skills;
  st.groups = groups;

  std::set<std::string> seen_ids;
  std::map<std::string, int> used;  // space id -> index into st.spaces
  for (const auto& sk : skills) {
    if (!seen_ids.insert(sk.id).second)
      throw ConfigError("duplicate skill id '" + sk.id + "'");
    auto it = declared.find(sk.space);
    if (it == declared.end())
      throw ConfigError("skill '" + sk.id + "' references undeclared space '" + sk.space + "'");
    if (sk.dim != it->second)
      throw ConfigError("skill '" + sk.id + "' dim " + std::to_string(sk.dim) +
                        " does not match space '" + sk.space + "' dim " +
                        std::to_string(it->second));
    if (used.find(sk.space) == used.end()) {
      used[sk.space] = static_cast<int>(st.spaces.size());
      st.spaces.push_back({sk.space, it->second});
    }
    st.skill_space.push_back(used[sk.space]);
  }

  // Partition check over skill indices.
  std::vector<int> hits(skills.size(), 0);
  for (const auto& g : groups) {
    for (int k : g) {
      if (k < 0 || k >= static_cast<int>(skills.size()))
        throw ConfigError("group references unknown skill index " + std::to_string(k));
      ++hits[k];
    }
  }
  for (size_t k = 0; k < hits.size(); ++k) {
    if (hits[k] != 1)
      throw ConfigError("skill index " + std::to_string(k) +
                        " appears in " + std::to_string(hits[k]) + " groups (want exactly 1)");
  }

  int n = 0;
  for (const auto& sk : skills) {
    st.block_offsets.push_back(n);
    n += sk.dim;
  }
  int q = 0;
  for (const auto& sp : st.spaces) {
    st.space_offsets.push_back(q);
    q += sp.dim;
  }
  st.n = n;
  st.q = q;

  st.S = Mat::Zero(n, q);
  for (size_t k = 0; k < skills.size(); ++k) {
    st.S.block(st.block_offsets[k], st.space_offsets[st.skill_space[k]],
               skills[k].dim, skills[k].dim)
        .setIdentity();
  }

  // One (+I, -I) row block per consecutive pair of skills sharing a space.
  const int p = n - q;
  st.P = Mat::Zero(p, n);
  st.r = Vec::Zero(p);
  int row = 0;
  for (size_t c = 0; c < st.spaces.size(); ++c) {
    int prev = -1;
    for (size_t k = 0; k < skills.size(); ++k) {
      if (st.skill_space[k] != static_cast<int>(c)) continue;
      if (prev >= 0) {
        const int d = skills[k].dim;
        st.P.block(row, st.block_offsets[prev], d, d).setIdentity();
        st.P.block(row, st.block_offsets[k], d, d) = -Mat::Identity(d, d);
        row += d;
      }
      prev = static_cast<int>(k);
    }
  }

  return st;
}

Mat nullspace_projector(const Mat& P, int n) {
  if (P.rows() == 0) return Mat::Identity(n, n);
  if (P.cols() != n) throw ConfigError("nullspace_projector: P has wrong column count");
  const Mat gram = P * P.transpose();
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12)
    throw NumericalError("nullspace_projector: rank-deficient constraint matrix");
  return Mat::Identity(n, n) - P.transpose() * llt.solve(P);
}

Mat nullspace_projector(const BlendStructure& st) { return nullspace_projector(st.P, st.n); }

}  // namespace qpblend
