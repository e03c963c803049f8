#include "dsmo/algorithms.hpp"

#include <chrono>
#include <cmath>

#include "dsmo/neumann.hpp"
#include "dsmo/parallel.hpp"

namespace dsmo {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

std::uint64_t stream_key(std::uint64_t seed, int agent, RngPurpose purpose,
                         int level, int index, long t) {
  return derive_key(seed, {static_cast<std::uint64_t>(agent),
                           static_cast<std::uint64_t>(purpose),
                           static_cast<std::uint64_t>(level),
                           static_cast<std::uint64_t>(index),
                           static_cast<std::uint64_t>(t)});
}

Matrix stack_x(const std::vector<AgentState>& states) {
  Matrix out(states.front().x.size(), static_cast<Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k)
    out.col(static_cast<Index>(k)) = states[k].x;
  return out;
}

std::vector<Matrix> stack_y(const std::vector<AgentState>& states) {
  std::vector<Matrix> out;
  for (std::size_t m = 0; m < states.front().y.size(); ++m) {
    Matrix ys(states.front().y[m].size(), static_cast<Index>(states.size()));
    for (std::size_t k = 0; k < states.size(); ++k)
      ys.col(static_cast<Index>(k)) = states[k].y[m];
    out.push_back(std::move(ys));
  }
  return out;
}

long resolve_eval_every(const RunConfig& config) {
  if (config.eval_every > 0) return config.eval_every;
  return std::max<long>(1, config.T / 500);
}

}  // namespace

long long dsmo_samples_per_round(int M, const std::vector<int>& depths) {
  long long queries = 2;  // both outer partials
  for (int m = 0; m < M; ++m)
    queries += 2 + depths[static_cast<std::size_t>(m)];
  return queries;
}

AgentState make_initial_state(const MultiLevelProblem& problem,
                              const std::vector<int>& neumann_depths) {
  const ProblemDims& dims = problem.dims();
  if (static_cast<int>(neumann_depths.size()) != dims.M)
    throw InvalidParam("make_initial_state: need one Neumann depth per level");
  AgentState st;
  st.x = Vector::Zero(dims.d_x);
  st.s = Vector::Zero(dims.d_x);
  st.h = Vector::Zero(dims.level_dim(dims.M));
  for (int m = 1; m <= dims.M; ++m) {
    const Index dm = dims.level_dim(m);
    const Index dprev = dims.level_dim(m - 1);
    st.y.emplace_back(Vector::Zero(dm));
    st.u.emplace_back(Matrix::Zero(dprev, dm));
    const double mu = problem.meta().mu_g[static_cast<std::size_t>(m - 1)];
    st.v.emplace_back(
        static_cast<std::size_t>(neumann_depths[static_cast<std::size_t>(m - 1)]),
        Matrix(mu * Matrix::Identity(dm, dm)));
  }
  return st;
}

RoundOutput dsmo_round(const std::vector<AgentState>& current,
                       std::vector<AgentState>& next,
                       const MultiLevelProblem& problem,
                       const GossipMatrix& gossip, const StepSizes& steps,
                       const std::vector<int>& neumann_depths, long t,
                       std::uint64_t seed, int threads, bool two_f_draws) {
  const ProblemDims& dims = problem.dims();
  const int K = dims.K;
  const int M = dims.M;
  if (static_cast<int>(current.size()) != K || gossip.agents() != K)
    throw DimensionMismatch("dsmo_round: state/network agent count mismatch");
  next.resize(current.size());

  const Vector x_bar_before =
      stack_x(current).rowwise().mean();

  std::vector<Vector> directions(static_cast<std::size_t>(K));

  parallel_for(K, threads, [&](long kl) {
    const int k = static_cast<int>(kl);
    const auto ku = static_cast<std::size_t>(k);
    const AgentState& me = current[ku];
    AgentState& out = next[ku];

    // Weighted neighborhood average of one state field at time t.
    auto mix = [&](auto&& field) {
      auto acc = (gossip.W(k, k) * field(current[ku])).eval();
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        const double w = gossip.W(k, j);
        if (w == 0.0) continue;
        acc += w * field(current[static_cast<std::size_t>(j)]);
      }
      return acc;
    };

    // Outer sampling at (x_t^k, y_{M,t}^k); one draw for both partials
    // unless two independent draws are requested.
    RngStream zeta(stream_key(seed, k, RngPurpose::OuterDraw, 0, 0, t));
    Vector f1;
    Vector f2;
    if (two_f_draws) {
      RngStream zeta2(stream_key(seed, k, RngPurpose::OuterDraw2, 0, 0, t));
      f1 = problem.sample_f_pair(k, me.x, me.y.back(), zeta).first;
      f2 = problem.sample_f_pair(k, me.x, me.y.back(), zeta2).second;
    } else {
      auto pair = problem.sample_f_pair(k, me.x, me.y.back(), zeta);
      f1 = std::move(pair.first);
      f2 = std::move(pair.second);
    }

    // Outer direction s + (-1)^M u_1 q_1 ... u_M q_M h, applied right to
    // left; each q is the lazy series operator over the time-t v samples.
    // At t = 0 the chain vanishes because u_0 = 0.
    Vector chain = me.h;
    for (int m = M; m >= 1; --m) {
      const auto mu_idx = static_cast<std::size_t>(m - 1);
      chain = neumann_apply(me.v[mu_idx],
                            problem.meta().L_g[mu_idx], chain);
      chain = me.u[mu_idx] * chain;
    }
    if (M % 2 != 0) chain = -chain;
    Vector direction = me.s + chain;

    out.x = mix([](const AgentState& a) -> const Vector& { return a.x; }) -
            steps.alpha * direction;
    out.s = (1.0 - steps.beta) *
                mix([](const AgentState& a) -> const Vector& { return a.s; }) +
            steps.beta * f1;
    out.h = (1.0 - steps.beta) *
                mix([](const AgentState& a) -> const Vector& { return a.h; }) +
            steps.beta * f2;

    out.y.resize(static_cast<std::size_t>(M));
    out.u.resize(static_cast<std::size_t>(M));
    out.v.resize(static_cast<std::size_t>(M));
    for (int m = 1; m <= M; ++m) {
      const auto mi = static_cast<std::size_t>(m - 1);
      // Level m reads the time-t value of the previous level throughout.
      const Vector& y_prev = (m == 1) ? me.x : me.y[mi - 1];
      const Vector& y_m = me.y[mi];

      RngStream xi_grad(stream_key(seed, k, RngPurpose::InnerGrad, m, 0, t));
      const Vector g_sample =
          problem.sample_grad2_g(k, m, y_prev, y_m, xi_grad);
      out.y[mi] =
          mix([mi](const AgentState& a) -> const Vector& { return a.y[mi]; }) -
          steps.gamma * g_sample;

      RngStream xi_cross(stream_key(seed, k, RngPurpose::InnerCross, m, 0, t));
      const Matrix c_sample =
          problem.sample_grad12_g(k, m, y_prev, y_m, xi_cross);
      out.u[mi] =
          (1.0 - steps.beta) *
              mix([mi](const AgentState& a) -> const Matrix& { return a.u[mi]; }) +
          steps.beta * c_sample;

      const int b = neumann_depths[mi];
      out.v[mi].resize(static_cast<std::size_t>(b));
      for (int i = 0; i < b; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        RngStream xi_hess(
            stream_key(seed, k, RngPurpose::InnerHessian, m, i, t));
        const Matrix h_sample =
            problem.sample_grad22_g(k, m, y_prev, y_m, xi_hess);
        out.v[mi][iu] =
            (1.0 - steps.beta) * mix([mi, iu](const AgentState& a)
                                         -> const Matrix& {
                                       return a.v[mi][iu];
                                     }) +
            steps.beta * h_sample;
      }
    }
    directions[ku] = std::move(direction);
  });

  RoundOutput out;
  out.samples_per_agent = dsmo_samples_per_round(M, neumann_depths);
  out.direction_norms.reserve(static_cast<std::size_t>(K));
  out.z_bar = Vector::Zero(dims.d_x);
  for (const Vector& d : directions) {
    out.direction_norms.push_back(d.norm());
    out.z_bar += d;
  }
  out.z_bar /= static_cast<double>(K);
  out.x_bar = stack_x(next).rowwise().mean();

  // Double stochasticity makes the averaged iterate follow the averaged
  // directions exactly.
  const Vector expected = x_bar_before - steps.alpha * out.z_bar;
  const double tol =
      1e-10 * std::max(1.0, x_bar_before.lpNorm<Eigen::Infinity>());
  if ((out.x_bar - expected).lpNorm<Eigen::Infinity>() > tol)
    throw AlgorithmInvariantViolation(
        "dsmo_round: gossip-average identity violated at t=" +
        std::to_string(t));
  return out;
}

std::vector<RunRecord> run_dsmo(const MultiLevelProblem& problem,
                                const GossipMatrix& gossip,
                                const StepSchedule& schedule,
                                const RunConfig& config,
                                const std::vector<EvalHook>& hooks) {
  const ProblemDims& dims = problem.dims();
  if (gossip.agents() != dims.K)
    throw DimensionMismatch("run_dsmo: network size must match problem K");
  const std::vector<int> depths =
      schedule.neumann_depths(problem.meta(), dims.M, std::max<long>(config.T, 1));
  const long long per_round =
      dsmo_samples_per_round(dims.M, depths) * dims.K;
  const long eval_every = resolve_eval_every(config);
  const auto start = Clock::now();

  std::vector<AgentState> current(
      static_cast<std::size_t>(dims.K), make_initial_state(problem, depths));
  std::vector<AgentState> next = current;

  std::vector<RunRecord> records;
  auto evaluate = [&](long t, long long samples,
                      const std::vector<AgentState>& states) {
    records.push_back(evaluate_record(problem, config.run_id, "dsmo",
                                      gossip.rho, t, samples, stack_x(states),
                                      stack_y(states), elapsed_ms(start)));
    if (!hooks.empty()) {
      const Vector x_bar = stack_x(states).rowwise().mean();
      for (const auto& hook : hooks) hook(t, states, x_bar, samples);
    }
  };

  evaluate(0, 0, current);
  for (long t = 0; t < config.T; ++t) {
    const StepSizes steps = schedule.at(t, dims.K, config.T);
    dsmo_round(current, next, problem, gossip, steps, depths, t, config.seed,
               config.threads, config.two_f_draws);
    current.swap(next);
    const long done = t + 1;
    if (done % eval_every == 0 || done == config.T)
      evaluate(done, per_round * done, current);
  }
  return records;
}

std::vector<RunRecord> run_dbsa(const MultiLevelProblem& problem,
                                const GossipMatrix& gossip,
                                const StepSchedule& alpha_schedule,
                                double eta_c, const RunConfig& config,
                                const std::vector<EvalHook>& hooks) {
  const ProblemDims& dims = problem.dims();
  if (dims.M != 1)
    throw NotBilevel("run_dbsa: requires a bilevel problem (M == 1)");
  if (gossip.agents() != dims.K)
    throw DimensionMismatch("run_dbsa: network size must match problem K");
  const int K = dims.K;
  const double mu = problem.meta().mu_g[0];
  const long eval_every = resolve_eval_every(config);
  const auto start = Clock::now();

  std::vector<AgentState> states(static_cast<std::size_t>(K));
  for (auto& st : states) {
    st.x = Vector::Zero(dims.d_x);
    st.y = {Vector::Zero(dims.level_dim(1))};
  }

  std::vector<RunRecord> records;
  long long samples_total = 0;
  auto evaluate = [&](long t) {
    records.push_back(evaluate_record(problem, config.run_id, "dbsa",
                                      gossip.rho, t, samples_total,
                                      stack_x(states), stack_y(states),
                                      elapsed_ms(start)));
    if (!hooks.empty()) {
      const Vector x_bar = stack_x(states).rowwise().mean();
      for (const auto& hook : hooks) hook(t, states, x_bar, samples_total);
    }
  };

  evaluate(0);
  std::vector<Vector> inner(static_cast<std::size_t>(K));
  std::vector<Vector> inner_next(static_cast<std::size_t>(K));
  for (long t = 0; t < config.T; ++t) {
    // Cold-start inner loop: t gossip SGD steps toward y*(x_t^k).
    for (auto& y : inner) y = Vector::Zero(dims.level_dim(1));
    for (long i = 0; i < t; ++i) {
      const double eta = eta_c / (mu * static_cast<double>(i + 1));
      for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        Vector acc = Vector::Zero(dims.level_dim(1));
        for (int j = 0; j < K; ++j) {
          const double w = gossip.W(k, j);
          if (w != 0.0) acc += w * inner[static_cast<std::size_t>(j)];
        }
        RngStream xi(stream_key(config.seed, k, RngPurpose::Baseline, 1,
                                static_cast<int>(i), t));
        inner_next[ku] =
            acc - eta * problem.sample_grad2_g(k, 1, states[ku].x, inner[ku], xi);
      }
      inner.swap(inner_next);
    }
    for (int k = 0; k < K; ++k)
      states[static_cast<std::size_t>(k)].y[0] = inner[static_cast<std::size_t>(k)];
    samples_total += static_cast<long long>(t) * K;

    // One outer gossip step along a grad_1 f sample at (x_t^k, y_t^k).
    const StepSizes steps = alpha_schedule.at(t, K, config.T);
    std::vector<Vector> x_next(static_cast<std::size_t>(K));
    parallel_for(K, config.threads, [&](long kl) {
      const int k = static_cast<int>(kl);
      const auto ku = static_cast<std::size_t>(k);
      Vector acc = Vector::Zero(dims.d_x);
      for (int j = 0; j < K; ++j) {
        const double w = gossip.W(k, j);
        if (w != 0.0) acc += w * states[static_cast<std::size_t>(j)].x;
      }
      RngStream zeta(stream_key(config.seed, k, RngPurpose::OuterDraw, 0, 0, t));
      x_next[ku] = acc - steps.alpha * problem.sample_grad1_f(
                                           k, states[ku].x, states[ku].y[0],
                                           zeta);
    });
    for (int k = 0; k < K; ++k)
      states[static_cast<std::size_t>(k)].x = std::move(x_next[static_cast<std::size_t>(k)]);
    samples_total += K;

    const long done = t + 1;
    if (done % eval_every == 0 || done == config.T) evaluate(done);
  }
  return records;
}

std::vector<RunRecord> run_dsgd(const MultiLevelProblem& problem,
                                const GossipMatrix& gossip,
                                const StepSchedule& alpha_schedule,
                                const DsgdWeights& eta, const RunConfig& config,
                                const std::vector<EvalHook>& hooks) {
  if (!problem.has_compositional_form())
    throw NotCompositional("run_dsgd: problem lacks the inner-value/outer "
                           "compositional split");
  const ProblemDims& dims = problem.dims();
  if (gossip.agents() != dims.K)
    throw DimensionMismatch("run_dsgd: network size must match problem K");
  const int K = dims.K;
  const Index dg = problem.compositional_dim();
  const long eval_every = resolve_eval_every(config);
  const auto start = Clock::now();

  std::vector<AgentState> states(static_cast<std::size_t>(K));
  for (auto& st : states) {
    st.x = Vector::Zero(dims.d_x);
    st.y = {Vector::Zero(dg)};
  }

  std::vector<RunRecord> records;
  long long samples_total = 0;
  auto evaluate = [&](long t) {
    records.push_back(evaluate_record(problem, config.run_id, "dsgd",
                                      gossip.rho, t, samples_total,
                                      stack_x(states), stack_y(states),
                                      elapsed_ms(start)));
    if (!hooks.empty()) {
      const Vector x_bar = stack_x(states).rowwise().mean();
      for (const auto& hook : hooks) hook(t, states, x_bar, samples_total);
    }
  };

  evaluate(0);
  std::vector<Vector> inner(static_cast<std::size_t>(K));
  std::vector<Vector> inner_next(static_cast<std::size_t>(K));
  for (long t = 0; t < config.T; ++t) {
    // Inner value averaging: t weighted gossip averaging steps.
    for (auto& y : inner) y = Vector::Zero(dg);
    for (long i = 0; i < t; ++i) {
      const double w_eta = eta.at(i);
      for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        Vector acc = Vector::Zero(dg);
        for (int j = 0; j < K; ++j) {
          const double w = gossip.W(k, j);
          if (w != 0.0) acc += w * inner[static_cast<std::size_t>(j)];
        }
        RngStream xi(stream_key(config.seed, k, RngPurpose::Baseline, 2,
                                static_cast<int>(i), t));
        inner_next[ku] =
            (1.0 - w_eta) * acc +
            w_eta * problem.sample_inner_value(k, states[ku].x, xi);
      }
      inner.swap(inner_next);
    }
    for (int k = 0; k < K; ++k)
      states[static_cast<std::size_t>(k)].y[0] = inner[static_cast<std::size_t>(k)];
    samples_total += static_cast<long long>(t) * K;

    // Chain-rule outer step with fresh Jacobian and outer-gradient samples.
    const StepSizes steps = alpha_schedule.at(t, K, config.T);
    std::vector<Vector> x_next(static_cast<std::size_t>(K));
    parallel_for(K, config.threads, [&](long kl) {
      const int k = static_cast<int>(kl);
      const auto ku = static_cast<std::size_t>(k);
      Vector acc = Vector::Zero(dims.d_x);
      for (int j = 0; j < K; ++j) {
        const double w = gossip.W(k, j);
        if (w != 0.0) acc += w * states[static_cast<std::size_t>(j)].x;
      }
      RngStream xi(stream_key(config.seed, k, RngPurpose::InnerCross, 0, 0, t));
      RngStream zeta(stream_key(config.seed, k, RngPurpose::OuterDraw, 0, 0, t));
      const Matrix jac = problem.sample_inner_jacobian(k, states[ku].x, xi);
      const Vector outer = problem.sample_outer_grad(k, states[ku].y[0], zeta);
      x_next[ku] = acc - steps.alpha * (jac * outer);
    });
    for (int k = 0; k < K; ++k)
      states[static_cast<std::size_t>(k)].x = std::move(x_next[static_cast<std::size_t>(k)]);
    samples_total += 2LL * K;

    const long done = t + 1;
    if (done % eval_every == 0 || done == config.T) evaluate(done);
  }
  return records;
}

}  // namespace dsmo
