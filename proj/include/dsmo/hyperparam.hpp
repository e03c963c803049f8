#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dsmo/libsvm.hpp"
#include "dsmo/problems.hpp"

namespace dsmo {

/// Bilevel hyperparameter tuning: the inner level fits classifier weights y
/// on the training shards under a per-coordinate quadratic regularizer
/// weighted by the outer decision x,
///   g^k(x, y) = sum_{j in train_k} l_j(y) + 1/2 sum_i x_i y_i^2,
/// and the outer level scores y on the validation shards,
///   f^k(x, y) = sum_{i in val_k} l_i(y),
/// with the sigmoid loss l_j(y) = 1 / (1 + exp(s_j w_j^T y)), s_j = +-1.
/// Data is split round-robin by index. The stochastic oracle draws one data
/// point uniformly from the agent's shard per query.
///
/// The inner problem is strongly convex only where the regularizer weights
/// dominate, so the best-response solver (damped Newton) is exact for
/// x > 0 and the problem exposes no closed-form x*.
class HyperparamProblem final : public MultiLevelProblem {
 public:
  HyperparamProblem(Dataset train, Dataset val, int K, std::uint64_t seed,
                    double mu_hint = 0.1);

  const std::string& tag() const override { return tag_; }
  const ProblemDims& dims() const override { return dims_; }
  const SmoothnessMeta& meta() const override { return meta_; }

  std::pair<Vector, Vector> sample_f_pair(int agent, const VectorRef& x,
                                          const VectorRef& y_M,
                                          RngStream& rng) const override;
  Vector sample_grad2_g(int agent, int level, const VectorRef& y_prev,
                        const VectorRef& y, RngStream& rng) const override;
  Matrix sample_grad12_g(int agent, int level, const VectorRef& y_prev,
                         const VectorRef& y, RngStream& rng) const override;
  Matrix sample_grad22_g(int agent, int level, const VectorRef& y_prev,
                         const VectorRef& y, RngStream& rng) const override;

  Vector grad1_f(const VectorRef& x, const VectorRef& y_M) const override;
  Vector grad2_f(const VectorRef& x, const VectorRef& y_M) const override;
  Vector grad2_g(int level, const VectorRef& y_prev,
                 const VectorRef& y) const override;
  Matrix grad12_g(int level, const VectorRef& y_prev,
                  const VectorRef& y) const override;
  Matrix grad22_g(int level, const VectorRef& y_prev,
                  const VectorRef& y) const override;

  Vector agent_grad1_f(int agent, const VectorRef& x,
                       const VectorRef& y_M) const override;
  Vector agent_grad2_f(int agent, const VectorRef& x,
                       const VectorRef& y_M) const override;

  bool has_exact_oracle() const override { return true; }
  Vector best_response(int level, const VectorRef& x) const override;
  double objective_value(const VectorRef& x) const override;

  /// Mean validation loss at given weights (the quantity tracked in runs).
  double validation_loss(const VectorRef& y) const;

  const std::vector<std::vector<Index>>& train_shards() const {
    return train_shards_;
  }
  const std::vector<std::vector<Index>>& val_shards() const {
    return val_shards_;
  }

 private:
  double loss(Index row, const Dataset& data, const VectorRef& y) const;
  Vector loss_grad(Index row, const Dataset& data, const VectorRef& y) const;
  Matrix loss_hess(Index row, const Dataset& data, const VectorRef& y) const;

  std::string tag_ = "hyperparam";
  ProblemDims dims_;
  SmoothnessMeta meta_;
  Dataset train_;
  Dataset val_;
  std::vector<std::vector<Index>> train_shards_;
  std::vector<std::vector<Index>> val_shards_;
  std::uint64_t seed_ = 0;
};

std::shared_ptr<HyperparamProblem> make_hyperparam_problem(
    Dataset train, Dataset val, int K, std::uint64_t seed,
    double mu_hint = 0.1);

}  // namespace dsmo
