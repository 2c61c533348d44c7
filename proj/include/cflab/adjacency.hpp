#pragma once

#include "cflab/dataset.hpp"

#include <Eigen/Sparse>

namespace cflab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Symmetrically normalized bipartite adjacency over the train interactions:
// a (|U|+|I|) square matrix with entry (u, |U|+i) = (|U|+i, u) = 1/sqrt(deg_u * deg_i).
// Both triangles are inserted with the identical value, so A == A^T exactly.
// Degree-0 nodes get all-zero rows (their embedding survives through the
// layer-0 term of the LightGCN mean).
struct NormalizedAdjacency {
  Index num_users = 0;
  Index num_items = 0;
  SparseMatrix matrix;  // (|U|+|I|) x (|U|+|I|)

  static NormalizedAdjacency build(const InteractionDataset& ds);
};

}  // namespace cflab
