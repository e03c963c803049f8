#pragma once

#include <vector>

#include "dsmo/errors.hpp"
#include "dsmo/problems.hpp"

namespace dsmo {

struct StepSizes {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

/// Step-size schedule. The constant regime uses
///   alpha_t = C0 sqrt(K/T), beta_t = gamma_t = sqrt(K/T)
/// for nonconvex objectives; the diminishing regime uses
///   alpha_t = 2 / (mu (C1 + t)), beta_t = gamma_t = C1 / (C1 + t)
/// for PL objectives. The Neumann depth either follows the theory rule
/// b_m = 3 ceil(log_{1/(1-kappa_m)} T) per level or is fixed.
struct StepSchedule {
  enum class Regime { Constant, Diminishing };
  enum class BRule { Theory, Fixed };

  Regime regime = Regime::Constant;
  double C0 = 0.1;   // constant regime
  double C1 = 50.0;  // diminishing regime
  double mu = 1.0;   // diminishing regime PL constant
  BRule b_rule = BRule::Theory;
  int b_fixed = 0;

  StepSizes at(long t, int K, long T) const;
  /// Neumann depth per level for a horizon of T rounds.
  std::vector<int> neumann_depths(const SmoothnessMeta& meta, int M,
                                  long T) const;
};

/// Theory rule for a single level; kappa == 1 gives depth 0 (the estimator
/// is already exact).
int theory_neumann_depth(double kappa, long T);

}  // namespace dsmo
