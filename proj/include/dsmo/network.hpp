#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsmo/errors.hpp"
#include "dsmo/types.hpp"

namespace dsmo {

enum class TopologyKind { Ring, Complete, Star, Random };

enum class MixingScheme { UniformRing, Metropolis, MeanMatrix };

TopologyKind topology_kind_from_string(const std::string& s);
MixingScheme mixing_scheme_from_string(const std::string& s);
std::string to_string(TopologyKind kind);
std::string to_string(MixingScheme scheme);

/// Undirected gossip graph. Every node carries a self-loop and the graph is
/// connected by construction.
struct Topology {
  TopologyKind kind = TopologyKind::Ring;
  int K = 0;
  double edge_prob = 0.0;   // Random only
  std::uint64_t seed = 0;   // Random only
  std::vector<std::vector<int>> neighbors;  // sorted, self included

  bool has_edge(int i, int j) const;
  /// Degree excluding the self-loop.
  int degree(int i) const;
};

/// Doubly stochastic mixing matrix with its consensus parameter
/// rho = || W - (1/K) 1 1^T ||_2^2.
struct GossipMatrix {
  Matrix W;
  double rho = 0.0;

  int agents() const { return static_cast<int>(W.rows()); }
};

/// Builds a connected topology with self-loops. Random graphs are
/// Erdos-Renyi, resampled with seed+attempt until connected (at most 100
/// attempts).
Topology build_topology(TopologyKind kind, int K, double edge_prob = 0.0,
                        std::uint64_t seed = 0);

/// Assembles the mixing matrix for a topology under the given scheme and
/// computes rho by symmetric eigendecomposition.
///   UniformRing  weight 1/3 on {left, self, right}; rings only. Two-node
///                rings degenerate to the complete graph (weight 1/2).
///   Metropolis   w_ij = 1/(1 + max(deg_i, deg_j)) off-diagonal, diagonal
///                takes the residual; any connected topology.
///   MeanMatrix   W = (1/K) 1 1^T; complete graphs only.
GossipMatrix mixing_matrix(const Topology& topology, MixingScheme scheme);

/// rho of an arbitrary doubly stochastic matrix (largest |eigenvalue| of
/// W - (1/K) 1 1^T, squared).
double consensus_rho(const MatrixRef& W);

/// One gossip round: column k of the result is sum_j w_kj * values.col(j).
/// Preserves the column mean exactly up to floating point.
Matrix gossip_mix(const MatrixRef& values, const GossipMatrix& gossip);

/// Same, for one per-agent Eigen object per entry (vectors or matrices).
template <typename MatT>
std::vector<MatT> gossip_mix(const std::vector<MatT>& values,
                             const GossipMatrix& gossip) {
  const int K = gossip.agents();
  if (static_cast<int>(values.size()) != K)
    throw DimensionMismatch("gossip_mix: expected " + std::to_string(K) +
                            " per-agent values, got " +
                            std::to_string(values.size()));
  for (const auto& v : values) {
    if (v.rows() != values.front().rows() || v.cols() != values.front().cols())
      throw DimensionMismatch("gossip_mix: per-agent values differ in shape");
  }
  std::vector<MatT> out(values.size());
  for (int k = 0; k < K; ++k) {
    MatT acc = MatT::Zero(values.front().rows(), values.front().cols());
    for (int j = 0; j < K; ++j) acc += gossip.W(k, j) * values[j];
    out[static_cast<std::size_t>(k)] = std::move(acc);
  }
  return out;
}

}  // namespace dsmo
