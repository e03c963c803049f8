#include "dsmo/schedule.hpp"

#include <cmath>

namespace dsmo {

StepSizes StepSchedule::at(long t, int K, long T) const {
  if (t < 0) throw InvalidParam("schedule: t must be >= 0");
  StepSizes s;
  if (regime == Regime::Constant) {
    if (T < 1) throw InvalidParam("schedule: constant regime requires T >= 1");
    if (t >= T)
      throw InvalidParam("schedule: constant regime defined for t < T");
    const double base = std::sqrt(static_cast<double>(K) /
                                  static_cast<double>(T));
    if (base > 1.0)
      throw InvalidParam(
          "schedule: sqrt(K/T) exceeds 1; increase T for the constant regime");
    s.alpha = C0 * base;
    s.beta = base;
    s.gamma = base;
  } else {
    if (!(C1 > 0.0)) throw InvalidParam("schedule: C1 must be positive");
    if (!(mu > 0.0)) throw InvalidParam("schedule: mu must be positive");
    s.alpha = 2.0 / (mu * (C1 + static_cast<double>(t)));
    s.beta = C1 / (C1 + static_cast<double>(t));
    s.gamma = s.beta;
  }
  return s;
}

int theory_neumann_depth(double kappa, long T) {
  if (!(kappa > 0.0 && kappa <= 1.0))
    throw InvalidParam("neumann depth: kappa must lie in (0, 1]");
  if (T < 1) throw InvalidParam("neumann depth: T must be >= 1");
  if (kappa == 1.0) return 0;  // one-term series is exact
  const double base = 1.0 / (1.0 - kappa);
  const double depth = std::log(static_cast<double>(T)) / std::log(base);
  return 3 * static_cast<int>(std::ceil(depth - 1e-12));
}

std::vector<int> StepSchedule::neumann_depths(const SmoothnessMeta& meta,
                                              int M, long T) const {
  std::vector<int> depths(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    depths[static_cast<std::size_t>(m)] =
        (b_rule == BRule::Fixed)
            ? b_fixed
            : theory_neumann_depth(meta.kappa_g[static_cast<std::size_t>(m)],
                                   T);
    if (depths[static_cast<std::size_t>(m)] < 0)
      throw InvalidParam("neumann depth must be >= 0");
  }
  return depths;
}

}  // namespace dsmo
