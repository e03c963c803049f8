#include "dsmo/policy_eval.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace dsmo {

MdpEnvironment make_mdp_environment(int num_states, int feat_dim, double gamma,
                                    int K, std::uint64_t seed) {
  if (num_states < 1 || feat_dim < 1)
    throw InvalidParam("mdp: num_states and feat_dim must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw InvalidParam("mdp: gamma must lie in (0, 1)");
  if (K < 1) throw InvalidParam("mdp: K must be >= 1");

  RngStream rng(derive_key(
      seed, {static_cast<std::uint64_t>(RngPurpose::ProblemData), 0x3D9ULL}));
  MdpEnvironment env;
  env.gamma = gamma;
  env.features = Matrix(num_states, feat_dim);
  for (Index s = 0; s < num_states; ++s)
    for (Index j = 0; j < feat_dim; ++j) env.features(s, j) = rng.uniform();

  env.transitions = Matrix(num_states, num_states);
  for (Index s = 0; s < num_states; ++s) {
    double total = 0.0;
    for (Index t = 0; t < num_states; ++t) {
      env.transitions(s, t) = rng.uniform();
      total += env.transitions(s, t);
    }
    env.transitions.row(s) /= total;
  }

  env.reward_means.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    Matrix r(num_states, num_states);
    for (Index s = 0; s < num_states; ++s)
      for (Index t = 0; t < num_states; ++t) r(s, t) = rng.uniform();
    env.reward_means.push_back(std::move(r));
  }
  return env;
}

PolicyEvalProblem::PolicyEvalProblem(MdpEnvironment env, double lambda, int K)
    : env_(std::move(env)), lambda_(lambda) {
  if (!(lambda_ > 0.0)) throw InvalidParam("policy_eval: lambda must be > 0");
  if (static_cast<int>(env_.reward_means.size()) != K)
    throw InvalidParam("policy_eval: need one reward table per agent");

  const auto S = env_.num_states();
  const auto m = env_.feat_dim();
  dims_.M = 1;
  dims_.d_x = static_cast<int>(m);
  dims_.d = {static_cast<int>(m), static_cast<int>(S)};
  dims_.K = K;

  D_ = env_.features - env_.gamma * env_.transitions * env_.features;

  r_mean_ = Vector::Zero(S);
  for (int k = 0; k < K; ++k)
    r_mean_ +=
        (env_.transitions.cwiseProduct(env_.reward_means[static_cast<std::size_t>(k)]))
            .rowwise()
            .sum();
  r_mean_ /= static_cast<double>(K);

  // Inner Hessian is the identity: the tightest constants possible.
  meta_.L_g = {1.0};
  meta_.mu_g = {1.0};
  meta_.kappa_g = {1.0};
  meta_.Lt_g = {0.0};
  const double feat_bound = std::sqrt(static_cast<double>(m));
  meta_.C_g = {std::sqrt(static_cast<double>(S)) *
               (2.0 * feat_bound + 1.0 + env_.reward_noise_std)};
  meta_.sigma_g = {std::sqrt(static_cast<double>(S)) *
                   (env_.reward_noise_std + 1.0 + env_.gamma * feat_bound)};
  meta_.C_f = feat_bound + lambda_;
  meta_.sigma_f = 0.0;  // outer partials are deterministic
  meta_.validate(1);

  const Matrix normal_eq =
      D_.transpose() * D_ / static_cast<double>(S) +
      lambda_ * Matrix::Identity(m, m);
  x_star_ = normal_eq.ldlt().solve(D_.transpose() * r_mean_ /
                                   static_cast<double>(S));
  f_star_ = objective_value(x_star_);
}

PolicyEvalProblem::TransitionDraw PolicyEvalProblem::simulate(
    int agent, RngStream& rng) const {
  const auto S = env_.num_states();
  TransitionDraw draw;
  draw.next_state.resize(static_cast<std::size_t>(S));
  draw.reward = Vector(S);
  const auto& means = env_.reward_means[static_cast<std::size_t>(agent)];
  for (Index s = 0; s < S; ++s) {
    const double u = rng.uniform();
    double acc = 0.0;
    Index next = S - 1;
    for (Index t = 0; t < S; ++t) {
      acc += env_.transitions(s, t);
      if (u < acc) {
        next = t;
        break;
      }
    }
    draw.next_state[static_cast<std::size_t>(s)] = next;
    draw.reward[s] = rng.normal(means(s, next), env_.reward_noise_std);
  }
  return draw;
}

Vector PolicyEvalProblem::agent_mean_reward(int agent) const {
  return (env_.transitions
              .cwiseProduct(env_.reward_means[static_cast<std::size_t>(agent)]))
      .rowwise()
      .sum();
}

std::pair<Vector, Vector> PolicyEvalProblem::sample_f_pair(
    int /*agent*/, const VectorRef& x, const VectorRef& y,
    RngStream& /*rng*/) const {
  return {lambda_ * x, y / static_cast<double>(env_.num_states())};
}

Vector PolicyEvalProblem::sample_grad2_g(int agent, int /*level*/,
                                         const VectorRef& x,
                                         const VectorRef& y,
                                         RngStream& rng) const {
  const TransitionDraw draw = simulate(agent, rng);
  const auto S = env_.num_states();
  Vector target(S);
  for (Index s = 0; s < S; ++s) {
    const Index next = draw.next_state[static_cast<std::size_t>(s)];
    target[s] = env_.features.row(s).dot(x) - draw.reward[s] -
                env_.gamma * env_.features.row(next).dot(x);
  }
  return y - target;
}

Matrix PolicyEvalProblem::sample_grad12_g(int agent, int /*level*/,
                                          const VectorRef& /*x*/,
                                          const VectorRef& /*y*/,
                                          RngStream& rng) const {
  const TransitionDraw draw = simulate(agent, rng);
  const auto S = env_.num_states();
  const auto m = env_.feat_dim();
  Matrix cross(m, S);  // -d(target)/dx, one column per state
  for (Index s = 0; s < S; ++s) {
    const Index next = draw.next_state[static_cast<std::size_t>(s)];
    cross.col(s) = -(env_.features.row(s) -
                     env_.gamma * env_.features.row(next))
                        .transpose();
  }
  return cross;
}

Matrix PolicyEvalProblem::sample_grad22_g(int /*agent*/, int /*level*/,
                                          const VectorRef& /*x*/,
                                          const VectorRef& /*y*/,
                                          RngStream& /*rng*/) const {
  return Matrix::Identity(env_.num_states(), env_.num_states());
}

Vector PolicyEvalProblem::grad1_f(const VectorRef& x,
                                  const VectorRef& /*y*/) const {
  return lambda_ * x;
}

Vector PolicyEvalProblem::grad2_f(const VectorRef& /*x*/,
                                  const VectorRef& y) const {
  return y / static_cast<double>(env_.num_states());
}

Vector PolicyEvalProblem::grad2_g(int /*level*/, const VectorRef& x,
                                  const VectorRef& y) const {
  return y - (D_ * x - r_mean_);
}

Matrix PolicyEvalProblem::grad12_g(int /*level*/, const VectorRef& /*x*/,
                                   const VectorRef& /*y*/) const {
  return -D_.transpose();
}

Matrix PolicyEvalProblem::grad22_g(int /*level*/, const VectorRef& /*x*/,
                                   const VectorRef& /*y*/) const {
  return Matrix::Identity(env_.num_states(), env_.num_states());
}

Vector PolicyEvalProblem::agent_grad1_f(int /*agent*/, const VectorRef& x,
                                        const VectorRef& /*y*/) const {
  return lambda_ * x;
}

Vector PolicyEvalProblem::agent_grad2_f(int /*agent*/, const VectorRef& /*x*/,
                                        const VectorRef& y) const {
  return y / static_cast<double>(env_.num_states());
}

Vector PolicyEvalProblem::best_response(int /*level*/,
                                        const VectorRef& x) const {
  return D_ * x - r_mean_;
}

double PolicyEvalProblem::objective_value(const VectorRef& x) const {
  const Vector y = best_response(1, x);
  return 0.5 * y.squaredNorm() / static_cast<double>(env_.num_states()) +
         0.5 * lambda_ * x.squaredNorm();
}

int PolicyEvalProblem::compositional_dim() const {
  return static_cast<int>(env_.num_states()) + dims_.d_x;
}

Vector PolicyEvalProblem::sample_inner_value(int agent, const VectorRef& x,
                                             RngStream& rng) const {
  const TransitionDraw draw = simulate(agent, rng);
  const auto S = env_.num_states();
  Vector value(S + x.size());
  for (Index s = 0; s < S; ++s) {
    const Index next = draw.next_state[static_cast<std::size_t>(s)];
    value[s] = env_.features.row(s).dot(x) - draw.reward[s] -
               env_.gamma * env_.features.row(next).dot(x);
  }
  value.tail(x.size()) = x;  // pass-through copy carries the regularizer
  return value;
}

Matrix PolicyEvalProblem::sample_inner_jacobian(int agent, const VectorRef& x,
                                                RngStream& rng) const {
  const TransitionDraw draw = simulate(agent, rng);
  const auto S = env_.num_states();
  const auto m = env_.feat_dim();
  Matrix jac(m, S + x.size());
  for (Index s = 0; s < S; ++s) {
    const Index next = draw.next_state[static_cast<std::size_t>(s)];
    jac.col(s) =
        (env_.features.row(s) - env_.gamma * env_.features.row(next))
            .transpose();
  }
  jac.rightCols(x.size()) = Matrix::Identity(m, x.size());
  return jac;
}

Vector PolicyEvalProblem::sample_outer_grad(int /*agent*/,
                                            const VectorRef& value,
                                            RngStream& /*rng*/) const {
  const auto S = env_.num_states();
  Vector g(value.size());
  g.head(S) = value.head(S) / static_cast<double>(S);
  g.tail(value.size() - S) = lambda_ * value.tail(value.size() - S);
  return g;
}

std::shared_ptr<PolicyEvalProblem> make_policy_eval_problem(
    int num_states, int feat_dim, double gamma, double lambda, int K,
    std::uint64_t seed) {
  return std::make_shared<PolicyEvalProblem>(
      make_mdp_environment(num_states, feat_dim, gamma, K, seed), lambda, K);
}

}  // namespace dsmo
