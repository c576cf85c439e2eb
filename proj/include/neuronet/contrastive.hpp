#pragma once

#include <cstddef>
#include <string>

#include "neuronet/nn.hpp"

namespace neuronet {

struct ProjectionConfig {
  std::size_t hidden = 1024;
  std::size_t out = 512;
};

// Linear -> ELU -> Linear -> unit L2 norm per row.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(nn::ParamSet& ps, const std::string& prefix, std::size_t in_dim, const ProjectionConfig& cfg,
                 nn::Rng& rng);
  ag::Var operator()(const ag::Var& h) const;

 private:
  nn::Linear fc1_, fc2_;
};

// NT-Xent over two views c1[N, D], c2[N, D] of unit vectors. Views are
// interleaved so sample k occupies rows 2k and 2k+1; every row is
// contrasted against the other 2N - 1 rows at temperature tau and the
// 2N terms are averaged.
ag::Var nt_xent(const ag::Var& c1, const ag::Var& c2, double tau);

// Same loss over an already interleaved [2N, D] batch.
ag::Var nt_xent_interleaved(const ag::Var& c, double tau);

}  // namespace neuronet
