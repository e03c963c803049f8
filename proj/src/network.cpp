#include "dsmo/network.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <queue>
#include <set>

#include "dsmo/rng.hpp"

namespace dsmo {
namespace {

bool is_connected(const std::vector<std::vector<int>>& neighbors) {
  const int K = static_cast<int>(neighbors.size());
  if (K == 0) return false;
  std::vector<char> seen(static_cast<std::size_t>(K), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : neighbors[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == K;
}

void add_edge(std::vector<std::set<int>>& adj, int i, int j) {
  adj[static_cast<std::size_t>(i)].insert(j);
  adj[static_cast<std::size_t>(j)].insert(i);
}

std::vector<std::vector<int>> finalize(const std::vector<std::set<int>>& adj) {
  std::vector<std::vector<int>> neighbors(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i)
    neighbors[i].assign(adj[i].begin(), adj[i].end());
  return neighbors;
}

}  // namespace

TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "ring") return TopologyKind::Ring;
  if (s == "complete") return TopologyKind::Complete;
  if (s == "star") return TopologyKind::Star;
  if (s == "random") return TopologyKind::Random;
  throw InvalidParam("unknown topology kind: " + s);
}

MixingScheme mixing_scheme_from_string(const std::string& s) {
  if (s == "uniform_ring") return MixingScheme::UniformRing;
  if (s == "metropolis") return MixingScheme::Metropolis;
  if (s == "mean_matrix") return MixingScheme::MeanMatrix;
  throw InvalidParam("unknown mixing scheme: " + s);
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::Ring: return "ring";
    case TopologyKind::Complete: return "complete";
    case TopologyKind::Star: return "star";
    case TopologyKind::Random: return "random";
  }
  return "?";
}

std::string to_string(MixingScheme scheme) {
  switch (scheme) {
    case MixingScheme::UniformRing: return "uniform_ring";
    case MixingScheme::Metropolis: return "metropolis";
    case MixingScheme::MeanMatrix: return "mean_matrix";
  }
  return "?";
}

bool Topology::has_edge(int i, int j) const {
  const auto& n = neighbors[static_cast<std::size_t>(i)];
  return std::binary_search(n.begin(), n.end(), j);
}

int Topology::degree(int i) const {
  const auto& n = neighbors[static_cast<std::size_t>(i)];
  return static_cast<int>(n.size()) - (has_edge(i, i) ? 1 : 0);
}

Topology build_topology(TopologyKind kind, int K, double edge_prob,
                        std::uint64_t seed) {
  if (K < 1) throw InvalidParam("build_topology: K must be >= 1");
  if (kind == TopologyKind::Random &&
      !(edge_prob > 0.0 && edge_prob <= 1.0))
    throw InvalidParam("build_topology: edge_prob must lie in (0, 1]");

  Topology topo;
  topo.kind = kind;
  topo.K = K;
  topo.edge_prob = edge_prob;
  topo.seed = seed;

  std::vector<std::set<int>> adj(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) add_edge(adj, i, i);  // mandatory self-loops

  switch (kind) {
    case TopologyKind::Ring:
      // A two-node ring degenerates; treat it as the complete graph.
      for (int i = 0; i < K; ++i) {
        add_edge(adj, i, (i + 1) % K);
        add_edge(adj, i, (i + K - 1) % K);
      }
      break;
    case TopologyKind::Complete:
      for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j) add_edge(adj, i, j);
      break;
    case TopologyKind::Star:
      for (int i = 1; i < K; ++i) add_edge(adj, 0, i);
      break;
    case TopologyKind::Random: {
      constexpr int kMaxAttempts = 100;
      bool connected = false;
      for (int attempt = 0; attempt < kMaxAttempts && !connected; ++attempt) {
        for (auto& s : adj) s.clear();
        for (int i = 0; i < K; ++i) add_edge(adj, i, i);
        RngStream rng(derive_key(seed + static_cast<std::uint64_t>(attempt),
                                 {static_cast<std::uint64_t>(K)}));
        for (int i = 0; i < K; ++i)
          for (int j = i + 1; j < K; ++j)
            if (rng.uniform() < edge_prob) add_edge(adj, i, j);
        connected = is_connected(finalize(adj));
      }
      if (!connected)
        throw ConnectivityFailure(
            "build_topology: random graph disconnected after 100 attempts "
            "(K=" + std::to_string(K) +
            ", edge_prob=" + std::to_string(edge_prob) + ")");
      break;
    }
  }

  topo.neighbors = finalize(adj);
  if (!is_connected(topo.neighbors))
    throw ConnectivityFailure("build_topology: generated graph disconnected");
  return topo;
}

double consensus_rho(const MatrixRef& W) {
  const Index K = W.rows();
  Matrix deviation = W - Matrix::Constant(K, K, 1.0 / static_cast<double>(K));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(deviation);
  const double norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  return norm * norm;
}

GossipMatrix mixing_matrix(const Topology& topology, MixingScheme scheme) {
  const int K = topology.K;
  if (!is_connected(topology.neighbors))
    throw ConnectivityFailure("mixing_matrix: topology is disconnected");

  Matrix W = Matrix::Zero(K, K);
  switch (scheme) {
    case MixingScheme::UniformRing: {
      if (topology.kind != TopologyKind::Ring)
        throw SchemeMismatch("uniform_ring scheme requires a ring topology");
      if (K == 1) {
        W(0, 0) = 1.0;
      } else if (K == 2) {
        W.setConstant(0.5);  // degenerate ring == complete graph
      } else {
        for (int i = 0; i < K; ++i) {
          W(i, i) = 1.0 / 3.0;
          W(i, (i + 1) % K) = 1.0 / 3.0;
          W(i, (i + K - 1) % K) = 1.0 / 3.0;
        }
      }
      break;
    }
    case MixingScheme::Metropolis: {
      for (int i = 0; i < K; ++i) {
        double off = 0.0;
        for (int j : topology.neighbors[static_cast<std::size_t>(i)]) {
          if (j == i) continue;
          const double w =
              1.0 / (1.0 + std::max(topology.degree(i), topology.degree(j)));
          W(i, j) = w;
          off += w;
        }
        W(i, i) = 1.0 - off;
      }
      break;
    }
    case MixingScheme::MeanMatrix: {
      if (topology.kind != TopologyKind::Complete &&
          !(topology.kind == TopologyKind::Ring && K <= 2))
        throw SchemeMismatch("mean_matrix scheme requires the complete graph");
      W.setConstant(1.0 / static_cast<double>(K));
      break;
    }
  }

  GossipMatrix gossip;
  gossip.W = std::move(W);
  gossip.rho = consensus_rho(gossip.W);
  if (!(gossip.rho < 1.0))
    throw SpectrumViolation("mixing_matrix: rho >= 1 on a connected graph");
  return gossip;
}

Matrix gossip_mix(const MatrixRef& values, const GossipMatrix& gossip) {
  if (values.cols() != gossip.W.rows())
    throw DimensionMismatch("gossip_mix: expected one column per agent");
  return values * gossip.W.transpose();
}

}  // namespace dsmo
