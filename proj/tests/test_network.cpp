#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <queue>

#include "dsmo/network.hpp"
#include "dsmo/rng.hpp"

using namespace dsmo;

namespace {

// Independent reachability oracle.
bool bfs_connected(const Topology& topo) {
  std::vector<char> seen(static_cast<std::size_t>(topo.K), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < topo.K; ++v) {
      if (!seen[static_cast<std::size_t>(v)] && topo.has_edge(u, v)) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  return reached == topo.K;
}

void check_gossip_invariants(const GossipMatrix& g, const Topology& topo) {
  const Matrix& W = g.W;
  const int K = g.agents();
  CHECK((W - W.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(W.minCoeff() >= 0.0);
  for (int i = 0; i < K; ++i) {
    CHECK(std::abs(W.row(i).sum() - 1.0) <= 1e-12);
    CHECK(std::abs(W.col(i).sum() - 1.0) <= 1e-12);
  }
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (W(i, j) > 0.0 && i != j) CHECK(topo.has_edge(i, j));
  CHECK(g.rho >= 0.0);
  CHECK(g.rho < 1.0);
}

}  // namespace

TEST_CASE("ring topology wires i-1, i+1 and self") {
  const Topology topo = build_topology(TopologyKind::Ring, 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(topo.has_edge(i, i));
    CHECK(topo.has_edge(i, (i + 1) % 5));
    CHECK(topo.has_edge(i, (i + 4) % 5));
    CHECK(topo.degree(i) == 2);
  }
  CHECK_FALSE(topo.has_edge(0, 2));
}

TEST_CASE("complete K=1 is a single self-looped node") {
  const Topology topo = build_topology(TopologyKind::Complete, 1);
  CHECK(topo.K == 1);
  CHECK(topo.has_edge(0, 0));
  CHECK(topo.degree(0) == 0);
}

TEST_CASE("random topology is connected (BFS oracle) and deterministic") {
  const Topology topo = build_topology(TopologyKind::Random, 10, 0.4, 7);
  CHECK(bfs_connected(topo));
  const Topology again = build_topology(TopologyKind::Random, 10, 0.4, 7);
  CHECK(topo.neighbors == again.neighbors);
  const Topology other = build_topology(TopologyKind::Random, 10, 0.4, 8);
  CHECK(bfs_connected(other));
}

TEST_CASE("topology parameter validation") {
  CHECK_THROWS_AS(build_topology(TopologyKind::Ring, 0), InvalidParam);
  CHECK_THROWS_AS(build_topology(TopologyKind::Random, 5, 0.0, 1),
                  InvalidParam);
  CHECK_THROWS_AS(build_topology(TopologyKind::Random, 5, 1.5, 1),
                  InvalidParam);
  // With essentially-zero edge probability all 100 attempts stay disconnected.
  CHECK_THROWS_AS(build_topology(TopologyKind::Random, 20, 1e-12, 3),
                  ConnectivityFailure);
}

TEST_CASE("ring K=5 uniform weights match the circulant eigenvalue oracle") {
  const Topology topo = build_topology(TopologyKind::Ring, 5);
  const GossipMatrix g = mixing_matrix(topo, MixingScheme::UniformRing);
  check_gossip_invariants(g, topo);
  for (int i = 0; i < 5; ++i) {
    CHECK(g.W(i, i) == doctest::Approx(1.0 / 3.0));
    CHECK(g.W(i, (i + 1) % 5) == doctest::Approx(1.0 / 3.0));
  }
  // Circulant spectrum: (1 + 2 cos(2 pi j / 5)) / 3; the second-largest
  // magnitude is at j = 1.
  const double second = (1.0 + 2.0 * std::cos(2.0 * std::numbers::pi / 5.0)) / 3.0;
  CHECK(std::abs(g.rho - second * second) <= 1e-10);
  CHECK(g.rho == doctest::Approx(0.290893).epsilon(1e-4));
}

TEST_CASE("complete graph mean matrix has rho zero") {
  const Topology topo = build_topology(TopologyKind::Complete, 8);
  const GossipMatrix g = mixing_matrix(topo, MixingScheme::MeanMatrix);
  check_gossip_invariants(g, topo);
  CHECK(g.rho <= 1e-14);
}

TEST_CASE("star K=4 metropolis is doubly stochastic with rho in (0,1)") {
  const Topology topo = build_topology(TopologyKind::Star, 4);
  const GossipMatrix g = mixing_matrix(topo, MixingScheme::Metropolis);
  check_gossip_invariants(g, topo);
  CHECK(g.W(0, 1) == doctest::Approx(0.25));
  CHECK(g.W(1, 1) == doctest::Approx(0.75));
  CHECK(g.rho > 0.0);
  CHECK(g.rho < 1.0);
}

TEST_CASE("degenerate rings: K=1 and K=2 (treated as complete)") {
  const GossipMatrix one =
      mixing_matrix(build_topology(TopologyKind::Ring, 1),
                    MixingScheme::UniformRing);
  CHECK(one.W(0, 0) == 1.0);
  CHECK(one.rho <= 1e-14);

  const GossipMatrix two =
      mixing_matrix(build_topology(TopologyKind::Ring, 2),
                    MixingScheme::UniformRing);
  CHECK(two.W(0, 1) == doctest::Approx(0.5));
  CHECK(two.rho <= 1e-14);
}

TEST_CASE("scheme mismatches are rejected") {
  CHECK_THROWS_AS(mixing_matrix(build_topology(TopologyKind::Star, 4),
                                MixingScheme::UniformRing),
                  SchemeMismatch);
  CHECK_THROWS_AS(mixing_matrix(build_topology(TopologyKind::Ring, 5),
                                MixingScheme::MeanMatrix),
                  SchemeMismatch);
}

TEST_CASE("metropolis satisfies the invariants on every topology family") {
  for (int K : {2, 3, 7, 13}) {
    for (auto kind : {TopologyKind::Ring, TopologyKind::Complete,
                      TopologyKind::Star, TopologyKind::Random}) {
      const Topology topo = build_topology(kind, K, 0.5, 11);
      const GossipMatrix g = mixing_matrix(topo, MixingScheme::Metropolis);
      check_gossip_invariants(g, topo);
    }
  }
}

TEST_CASE("gossip_mix keeps a shared vector fixed") {
  const GossipMatrix g =
      mixing_matrix(build_topology(TopologyKind::Ring, 5),
                    MixingScheme::UniformRing);
  Matrix values(3, 5);
  Vector v(3);
  v << 1.0, -2.0, 0.5;
  for (int k = 0; k < 5; ++k) values.col(k) = v;
  const Matrix mixed = gossip_mix(values, g);
  CHECK((mixed - values).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("two-agent complete mixing averages the pair") {
  const GossipMatrix g =
      mixing_matrix(build_topology(TopologyKind::Complete, 2),
                    MixingScheme::MeanMatrix);
  Matrix values(2, 2);
  values.col(0) << 1.0, 3.0;
  values.col(1) << 5.0, -1.0;
  const Matrix mixed = gossip_mix(values, g);
  CHECK(mixed(0, 0) == doctest::Approx(3.0));
  CHECK(mixed(1, 0) == doctest::Approx(1.0));
  CHECK((mixed.col(0) - mixed.col(1)).norm() <= 1e-15);
}

TEST_CASE("gossip_mix preserves the network mean on 1000 random inputs") {
  const GossipMatrix g =
      mixing_matrix(build_topology(TopologyKind::Random, 9, 0.4, 5),
                    MixingScheme::Metropolis);
  RngStream rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix values(4, 9);
    for (Index i = 0; i < values.size(); ++i)
      values.data()[i] = rng.uniform(-10.0, 10.0);
    const Vector mean_before = values.rowwise().mean();
    const Vector mean_after = gossip_mix(values, g).rowwise().mean();
    CHECK((mean_before - mean_after).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("repeated mixing contracts the spread geometrically") {
  const GossipMatrix g =
      mixing_matrix(build_topology(TopologyKind::Ring, 7),
                    MixingScheme::UniformRing);
  RngStream rng(99);
  Matrix values(3, 7);
  for (Index i = 0; i < values.size(); ++i)
    values.data()[i] = rng.uniform(-1.0, 1.0);

  const Vector mean = values.rowwise().mean();
  double initial_spread = 0.0;
  for (int k = 0; k < 7; ++k)
    initial_spread += (values.col(k) - mean).squaredNorm();

  Matrix current = values;
  for (int t = 1; t <= 30; ++t) {
    current = gossip_mix(current, g);
    double max_dev = 0.0;
    for (int k = 0; k < 7; ++k)
      max_dev = std::max(max_dev, (current.col(k) - mean).squaredNorm());
    CHECK(max_dev <= std::pow(g.rho, t) * initial_spread + 1e-12);
  }
}

TEST_CASE("gossip_mix rejects mismatched shapes") {
  const GossipMatrix g =
      mixing_matrix(build_topology(TopologyKind::Ring, 5),
                    MixingScheme::UniformRing);
  Matrix values(3, 4);  // one agent short
  values.setZero();
  CHECK_THROWS_AS(gossip_mix(values, g), DimensionMismatch);

  std::vector<Matrix> pieces(5, Matrix::Zero(2, 2));
  pieces[2] = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(gossip_mix(pieces, g), DimensionMismatch);
}

TEST_CASE("per-object gossip_mix agrees with the stacked form") {
  const GossipMatrix g =
      mixing_matrix(build_topology(TopologyKind::Star, 6),
                    MixingScheme::Metropolis);
  RngStream rng(4);
  Matrix stacked(5, 6);
  std::vector<Vector> pieces;
  for (int k = 0; k < 6; ++k) {
    Vector v(5);
    for (Index i = 0; i < 5; ++i) v[i] = rng.normal();
    stacked.col(k) = v;
    pieces.push_back(v);
  }
  const Matrix mixed = gossip_mix(stacked, g);
  const auto mixed_pieces = gossip_mix(pieces, g);
  for (int k = 0; k < 6; ++k)
    CHECK((mixed.col(k) - mixed_pieces[static_cast<std::size_t>(k)]).norm() <=
          1e-13);
}
