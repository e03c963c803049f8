#include "dsmo/synthetic.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>

namespace dsmo {
namespace {

Matrix random_orthogonal(Index d, RngStream& rng) {
  Matrix gauss(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) gauss(i, j) = rng.normal();
  return Eigen::HouseholderQR<Matrix>(gauss).householderQ();
}

/// Symmetric matrix with spectrum drawn uniformly from [lo, hi].
Matrix random_spd(Index d, double lo, double hi, RngStream& rng) {
  const Matrix Q = random_orthogonal(d, rng);
  Vector vals(d);
  for (Index i = 0; i < d; ++i) vals[i] = rng.uniform(lo, hi);
  return Q * vals.asDiagonal() * Q.transpose();
}

/// Zero-mean symmetric perturbation with spectral norm at most `bound`.
Matrix random_symmetric_noise(Index d, double bound, RngStream& rng) {
  const Matrix Q = random_orthogonal(d, rng);
  Vector vals(d);
  for (Index i = 0; i < d; ++i) vals[i] = rng.uniform(-bound, bound);
  return Q * vals.asDiagonal() * Q.transpose();
}

/// Cheap variant for the per-sample hot path: H diag(vals) H with a single
/// random Householder reflector H. Still symmetric, zero mean, spectrum
/// exactly vals. Returns the largest |val| for the clip certificate.
Matrix reflector_noise(Index d, double bound, RngStream& rng,
                       double& spectral_norm_out) {
  Vector vals(d);
  double largest = 0.0;
  for (Index i = 0; i < d; ++i) {
    vals[i] = rng.uniform(-bound, bound);
    largest = std::max(largest, std::abs(vals[i]));
  }
  spectral_norm_out = largest;
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = rng.normal();
  const double norm = v.norm();
  if (norm < 1e-30) return Matrix(vals.asDiagonal());
  v /= norm;
  const Vector dv = vals.cwiseProduct(v);
  Matrix m = Matrix(vals.asDiagonal());
  m.noalias() -= 2.0 * v * dv.transpose();
  m.noalias() -= 2.0 * dv * v.transpose();
  m.noalias() += (4.0 * v.dot(dv)) * v * v.transpose();
  return m;
}

Matrix random_gaussian(Index rows, Index cols, RngStream& rng) {
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
  return out;
}

Vector gaussian_vector(Index d, double total_std, RngStream& rng) {
  Vector out(d);
  const double comp = total_std / std::sqrt(static_cast<double>(d));
  for (Index i = 0; i < d; ++i) out[i] = comp * rng.normal();
  return out;
}

double spectral_norm(const Matrix& m) {
  return m.jacobiSvd().singularValues()[0];
}

}  // namespace

SyntheticQuadratic::SyntheticQuadratic(ProblemDims dims, SmoothnessMeta meta,
                                       std::vector<Level> levels,
                                       std::vector<Vector> c_agents,
                                       double lambda, double f_noise)
    : dims_(std::move(dims)),
      meta_(std::move(meta)),
      levels_(std::move(levels)),
      c_agents_(std::move(c_agents)),
      lambda_(lambda),
      f_noise_(f_noise) {
  dims_.validate();
  meta_.validate(dims_.M);
  if (static_cast<int>(levels_.size()) != dims_.M)
    throw InvalidParam("SyntheticQuadratic: need one Level per inner level");
  if (static_cast<int>(c_agents_.size()) != dims_.K)
    throw InvalidParam("SyntheticQuadratic: need one c vector per agent");
  if (!(lambda_ > 0.0))
    throw InvalidParam("SyntheticQuadratic: lambda must be positive");

  c_mean_ = Vector::Zero(dims_.level_dim(dims_.M));
  for (const Vector& c : c_agents_) c_mean_ += c;
  c_mean_ /= static_cast<double>(dims_.K);
  for (const Vector& c : c_agents_)
    c_spread_ += (c - c_mean_).squaredNorm();
  c_spread_ /= 2.0 * static_cast<double>(dims_.K);

  for (int m = 1; m <= dims_.M; ++m) {
    Level& lv = levels_[static_cast<std::size_t>(m - 1)];
    const double mu = meta_.mu_g[static_cast<std::size_t>(m - 1)];
    const double L = meta_.L_g[static_cast<std::size_t>(m - 1)];
    lv.agent_margins.clear();
    for (int k = 0; k < dims_.K; ++k) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(
          lv.A_mean + lv.A_dev[static_cast<std::size_t>(k)]);
      lv.agent_margins.emplace_back(eig.eigenvalues().minCoeff() - mu,
                                    L - eig.eigenvalues().maxCoeff());
    }
  }

  // Best responses compose affinely: y_m*(x) = P_m x + p_m.
  Matrix P = Matrix::Identity(dims_.d_x, dims_.d_x);
  Vector p = Vector::Zero(dims_.d_x);
  for (int m = 1; m <= dims_.M; ++m) {
    const Level& lv = level(m);
    const auto solver = lv.A_mean.ldlt();
    P = solver.solve(lv.B_mean * P).eval();
    p = solver.solve(lv.B_mean * p - lv.e_mean).eval();
    response_P_.push_back(P);
    response_p_.push_back(p);
  }

  const Matrix& PM = response_P_.back();
  const Vector& pM = response_p_.back();
  const Matrix normal_eq =
      PM.transpose() * PM + lambda_ * Matrix::Identity(dims_.d_x, dims_.d_x);
  x_star_ = normal_eq.ldlt().solve(PM.transpose() * (c_mean_ - pM));
  f_star_ = objective_value(x_star_);
}

std::pair<Vector, Vector> SyntheticQuadratic::sample_f_pair(
    int agent, const VectorRef& x, const VectorRef& y_M,
    RngStream& rng) const {
  Vector g1 = lambda_ * x;
  Vector g2 = y_M - c_agents_[static_cast<std::size_t>(agent)];
  if (f_noise_ > 0.0) {
    g1 += gaussian_vector(x.size(), f_noise_, rng);
    g2 += gaussian_vector(y_M.size(), f_noise_, rng);
  }
  return {std::move(g1), std::move(g2)};
}

Vector SyntheticQuadratic::sample_grad2_g(int agent, int m,
                                          const VectorRef& y_prev,
                                          const VectorRef& y,
                                          RngStream& rng) const {
  const Level& lv = level(m);
  const auto k = static_cast<std::size_t>(agent);
  Vector g = (lv.A_mean + lv.A_dev[k]) * y -
             (lv.B_mean + lv.B_dev[k]) * y_prev + lv.e_mean + lv.e_dev[k];
  if (lv.grad_noise > 0.0) g += gaussian_vector(y.size(), lv.grad_noise, rng);
  return g;
}

Matrix SyntheticQuadratic::sample_grad12_g(int agent, int m,
                                           const VectorRef& /*y_prev*/,
                                           const VectorRef& /*y*/,
                                           RngStream& rng) const {
  const Level& lv = level(m);
  const auto k = static_cast<std::size_t>(agent);
  Matrix g = -(lv.B_mean + lv.B_dev[k]).transpose();
  if (lv.cross_noise > 0.0) {
    const double comp =
        lv.cross_noise / std::sqrt(static_cast<double>(g.size()));
    g += comp * random_gaussian(g.rows(), g.cols(), rng);
  }
  return g;
}

Matrix SyntheticQuadratic::sample_grad22_g(int agent, int m,
                                           const VectorRef& /*y_prev*/,
                                           const VectorRef& /*y*/,
                                           RngStream& rng) const {
  const Level& lv = level(m);
  const auto k = static_cast<std::size_t>(agent);
  Matrix sample = lv.A_mean + lv.A_dev[k];
  if (lv.hess_noise <= 0.0) return sample;

  double noise_norm = 0.0;
  sample += reflector_noise(sample.rows(), lv.hess_noise, rng, noise_norm);

  // Weyl certificate: a perturbation below both margins cannot leave
  // [mu, L], so the spectral clip is only computed when it could trigger.
  const auto& margins = lv.agent_margins[k];
  if (noise_norm <= margins.first && noise_norm <= margins.second)
    return sample;

  const double mu = meta_.mu_g[static_cast<std::size_t>(m - 1)];
  const double L = meta_.L_g[static_cast<std::size_t>(m - 1)];
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sample);
  if (eig.eigenvalues().minCoeff() < mu - 1e-12 ||
      eig.eigenvalues().maxCoeff() > L + 1e-12) {
    clip_events_.fetch_add(1, std::memory_order_relaxed);
    Vector clipped = eig.eigenvalues().cwiseMax(mu).cwiseMin(L);
    sample = eig.eigenvectors() * clipped.asDiagonal() *
             eig.eigenvectors().transpose();
  }
  return sample;
}

Vector SyntheticQuadratic::grad1_f(const VectorRef& x,
                                   const VectorRef& /*y_M*/) const {
  return lambda_ * x;
}

Vector SyntheticQuadratic::grad2_f(const VectorRef& /*x*/,
                                   const VectorRef& y_M) const {
  return y_M - c_mean_;
}

Vector SyntheticQuadratic::grad2_g(int m, const VectorRef& y_prev,
                                   const VectorRef& y) const {
  const Level& lv = level(m);
  return lv.A_mean * y - lv.B_mean * y_prev + lv.e_mean;
}

Matrix SyntheticQuadratic::grad12_g(int m, const VectorRef& /*y_prev*/,
                                    const VectorRef& /*y*/) const {
  return -level(m).B_mean.transpose();
}

Matrix SyntheticQuadratic::grad22_g(int m, const VectorRef& /*y_prev*/,
                                    const VectorRef& /*y*/) const {
  return level(m).A_mean;
}

Vector SyntheticQuadratic::agent_grad1_f(int /*agent*/, const VectorRef& x,
                                         const VectorRef& /*y_M*/) const {
  return lambda_ * x;
}

Vector SyntheticQuadratic::agent_grad2_f(int agent, const VectorRef& /*x*/,
                                         const VectorRef& y_M) const {
  return y_M - c_agents_[static_cast<std::size_t>(agent)];
}

Vector SyntheticQuadratic::best_response(int m, const VectorRef& y_prev) const {
  const Level& lv = level(m);
  return lv.A_mean.ldlt().solve(lv.B_mean * y_prev - lv.e_mean);
}

double SyntheticQuadratic::objective_value(const VectorRef& x) const {
  const Vector y =
      response_P_.back() * x + response_p_.back();
  return 0.5 * (y - c_mean_).squaredNorm() + 0.5 * lambda_ * x.squaredNorm() +
         c_spread_;
}

const Matrix& SyntheticQuadratic::response_matrix(int m) const {
  return response_P_[static_cast<std::size_t>(m - 1)];
}

const Vector& SyntheticQuadratic::response_offset(int m) const {
  return response_p_[static_cast<std::size_t>(m - 1)];
}

std::shared_ptr<SyntheticQuadratic> make_synthetic_quadratic(
    const SyntheticOptions& options) {
  if (options.M < 1) throw InvalidParam("synthetic_quadratic: M must be >= 1");
  if (!(options.mu > 0.0 && options.L >= options.mu))
    throw InvalidParam("synthetic_quadratic: need 0 < mu <= L");
  if (options.b_scale > options.L)
    throw InvalidParam("synthetic_quadratic: b_scale must not exceed L");

  ProblemDims dims;
  dims.M = options.M;
  dims.d_x = options.d_x;
  dims.K = options.K;
  dims.d.assign(1, options.d_x);
  if (options.inner_dims.empty()) {
    dims.d.insert(dims.d.end(), static_cast<std::size_t>(options.M),
                  options.d_x);
  } else {
    if (static_cast<int>(options.inner_dims.size()) != options.M)
      throw InvalidParam("synthetic_quadratic: inner_dims must have M entries");
    dims.d.insert(dims.d.end(), options.inner_dims.begin(),
                  options.inner_dims.end());
  }
  dims.validate();

  const double span = options.L - options.mu;
  // Margins keep every sampled Hessian inside [mu, L] without clipping:
  // heterogeneity and sampling noise each get a bounded slice of the span.
  const double het_bound =
      std::min(options.heterogeneity, 1.0) * 0.15 * span;
  const double hess_noise =
      std::min(options.noise, 1.0) * 0.15 * span;

  SmoothnessMeta meta;
  const auto M = static_cast<std::size_t>(options.M);
  meta.L_g.assign(M, options.L);
  meta.mu_g.assign(M, options.mu);
  meta.kappa_g.assign(M, options.mu / options.L);
  meta.Lt_g.assign(M, 0.0);  // quadratics: constant second derivatives
  meta.C_g.assign(M, 10.0 * options.L + options.noise);
  meta.sigma_g.assign(M, options.noise);
  meta.C_f = 10.0 * (1.0 + options.lambda) + options.noise;
  meta.sigma_f = options.noise;

  // Separately keyed streams keep the shared means identical for every K, so
  // sweeps over the network size solve the same mean problem.
  const auto purpose = static_cast<std::uint64_t>(RngPurpose::ProblemData);
  auto mean_stream = [&](int attempt, int level) {
    return RngStream(derive_key(options.seed,
                                {purpose, 1ULL,
                                 static_cast<std::uint64_t>(attempt),
                                 static_cast<std::uint64_t>(level)}));
  };
  auto dev_stream = [&](int attempt, int level, int agent) {
    return RngStream(derive_key(options.seed,
                                {purpose, 2ULL,
                                 static_cast<std::uint64_t>(attempt),
                                 static_cast<std::uint64_t>(level),
                                 static_cast<std::uint64_t>(agent)}));
  };

  constexpr int kMaxAttempts = 10;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<SyntheticQuadratic::Level> levels;
    bool spectrum_ok = true;
    for (int m = 1; m <= options.M && spectrum_ok; ++m) {
      const Index dm = dims.level_dim(m);
      const Index dprev = dims.level_dim(m - 1);
      RngStream rng = mean_stream(attempt, m);
      SyntheticQuadratic::Level lv;
      lv.A_mean = random_spd(dm, options.mu + het_bound + hess_noise,
                             options.L - het_bound - hess_noise, rng);

      // Partial-orthogonal coupling: all singular values equal b_scale.
      const double target_b =
          options.b_scale > 0.0 ? options.b_scale : 0.8 * options.mu;
      const Index dmax = std::max(dm, dprev);
      const Matrix ortho = random_orthogonal(dmax, rng);
      lv.B_mean = target_b * ortho.block(0, 0, dm, dprev);

      lv.e_mean = Vector::Zero(dm);
      for (Index i = 0; i < dm; ++i)
        lv.e_mean[i] = options.e_scale * rng.normal();

      const int K = options.K;
      Matrix a_acc = Matrix::Zero(dm, dm);
      Matrix b_acc = Matrix::Zero(dm, dprev);
      Vector e_acc = Vector::Zero(dm);
      for (int k = 0; k < K; ++k) {
        RngStream dev_rng = dev_stream(attempt, m, k);
        lv.A_dev.push_back(
            random_symmetric_noise(dm, het_bound / 2.0, dev_rng));
        Matrix bd = random_gaussian(dm, dprev, dev_rng);
        bd *= (options.heterogeneity * 0.1 * options.mu) /
              std::max(spectral_norm(bd), 1e-12);
        lv.B_dev.push_back(bd);
        lv.e_dev.push_back(gaussian_vector(
            dm, options.heterogeneity * options.e_scale, dev_rng));
        a_acc += lv.A_dev.back();
        b_acc += lv.B_dev.back();
        e_acc += lv.e_dev.back();
      }
      for (int k = 0; k < K; ++k) {  // enforce zero-sum deviations
        const auto s = static_cast<std::size_t>(k);
        lv.A_dev[s] -= a_acc / static_cast<double>(K);
        lv.B_dev[s] -= b_acc / static_cast<double>(K);
        lv.e_dev[s] -= e_acc / static_cast<double>(K);
      }

      // Every per-agent Hessian must leave room for the sampling noise.
      for (int k = 0; k < K; ++k) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(
            lv.A_mean + lv.A_dev[static_cast<std::size_t>(k)]);
        if (eig.eigenvalues().minCoeff() < options.mu + hess_noise - 1e-12 ||
            eig.eigenvalues().maxCoeff() > options.L - hess_noise + 1e-12) {
          spectrum_ok = false;
          break;
        }
      }

      lv.grad_noise = options.noise;
      lv.cross_noise = options.noise;
      lv.hess_noise = hess_noise;
      levels.push_back(std::move(lv));
    }
    if (!spectrum_ok) continue;

    RngStream c_rng = mean_stream(attempt, 0);
    Vector c_shared(dims.level_dim(options.M));
    for (Index i = 0; i < c_shared.size(); ++i) c_shared[i] = c_rng.normal();

    std::vector<Vector> c_agents;
    Vector c_acc = Vector::Zero(dims.level_dim(options.M));
    for (int k = 0; k < options.K; ++k) {
      RngStream dev_rng = dev_stream(attempt, 0, k);
      Vector c(dims.level_dim(options.M));
      for (Index i = 0; i < c.size(); ++i) c[i] = dev_rng.normal();
      c_agents.push_back(c);
      c_acc += c;
    }
    // Recenter heterogeneity around the common mean target.
    for (int k = 0; k < options.K; ++k) {
      auto& c = c_agents[static_cast<std::size_t>(k)];
      c = c_shared + options.heterogeneity *
                         (c - c_acc / static_cast<double>(options.K));
    }

    return std::make_shared<SyntheticQuadratic>(
        dims, meta, std::move(levels), std::move(c_agents), options.lambda,
        options.noise);
  }
  throw SpectrumViolation(
      "synthetic_quadratic: could not generate mean Hessians inside "
      "[mu, L] with the requested margins");
}

}  // namespace dsmo
