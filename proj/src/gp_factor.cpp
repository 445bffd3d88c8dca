// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/gp_factor.hpp"

#include <cmath>

namespace tvc {

Ar1Step ar1_step(double phi, double delta_t) {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw DomainError("ar1_step: decay rate must be positive");
  if (!(delta_t >= 0.0)) throw DomainError("ar1_step: time gap must be nonnegative");
  Ar1Step s;
  s.mean_multiplier = std::exp(-phi * delta_t);
  s.innovation_variance = -std::expm1(-2.0 * phi * delta_t);
  return s;
}

double sequential_log_density(const VectorXd& path, const VectorXd& times, double phi) {
  if (path.size() < 1 || path.size() != times.size()) {
    throw DomainError("sequential_log_density: path and times must be nonempty and equally long");
  }
  double lp = -0.5 * (kLogTwoPi + path[0] * path[0]);
  for (Eigen::Index s = 1; s < path.size(); ++s) {
    const double gap = times[s] - times[s - 1];
    if (!(gap > 0.0)) throw DomainError("sequential_log_density: times must be strictly increasing");
    const Ar1Step step = ar1_step(phi, gap);
    const double v = std::max(step.innovation_variance, kMinInnovationVariance);
    const double r = path[s] - step.mean_multiplier * path[s - 1];
    lp += -0.5 * (kLogTwoPi + std::log(v) + r * r / v);
  }
  return lp;
}

std::vector<MatrixXd> simulate_factors(const ModelConfig& config, const VectorXd& times, Rng& rng) {
  const int K = config.n_components;
  const int r = config.n_factors;
  const auto T = times.size();
  std::vector<MatrixXd> nu(static_cast<std::size_t>(K), MatrixXd::Zero(r, T));
  for (int k = 0; k < K; ++k) {
    auto& path = nu[static_cast<std::size_t>(k)];
    for (int l = 0; l < r; ++l) {
      const double phi = config.decay(k, l);
      if (T == 0) continue;
      path(l, 0) = rng.normal();
      for (Eigen::Index t = 1; t < T; ++t) {
        const Ar1Step step = ar1_step(phi, times[t] - times[t - 1]);
        path(l, t) = step.mean_multiplier * path(l, t - 1) + std::sqrt(step.innovation_variance) * rng.normal();
      }
    }
  }
  return nu;
}

std::vector<MatrixXd> compute_omega(const MatrixXd& coreg, const std::vector<MatrixXd>& nu) {
  const auto K = static_cast<int>(nu.size());
  std::vector<MatrixXd> omega(nu.size());
  for (int k = 0; k < K; ++k) {
    MatrixXd w = MatrixXd::Zero(nu.front().rows(), nu.front().cols());
    for (int j = 0; j < K; ++j) {
      if (coreg(k, j) != 0.0) w += coreg(k, j) * nu[static_cast<std::size_t>(j)];
    }
    omega[static_cast<std::size_t>(k)] = std::move(w);
  }
  return omega;
}

std::vector<MatrixXd> compute_eta(const std::vector<MatrixXd>& lambda, const MatrixXd& coreg,
                                  const std::vector<MatrixXd>& nu) {
  auto omega = compute_omega(coreg, nu);
  std::vector<MatrixXd> eta(lambda.size());
  for (std::size_t k = 0; k < lambda.size(); ++k) eta[k] = lambda[k] * omega[k];
  return eta;
}

double assemble_eta(const std::vector<MatrixXd>& lambda, const MatrixXd& coreg,
                    const std::vector<MatrixXd>& nu, int site, int comp, int time_index) {
  const auto K = static_cast<int>(nu.size());
  if (comp < 0 || comp >= K || site < 0 || site >= lambda[static_cast<std::size_t>(comp)].rows() ||
      time_index < 0 || time_index >= nu.front().cols()) {
    throw std::out_of_range("assemble_eta: index out of range");
  }
  const auto& load = lambda[static_cast<std::size_t>(comp)];
  double eta = 0.0;
  for (Eigen::Index l = 0; l < load.cols(); ++l) {
    double omega = 0.0;
    for (int j = 0; j < K; ++j) omega += coreg(comp, j) * nu[static_cast<std::size_t>(j)](l, time_index);
    eta += load(site, l) * omega;
  }
  return eta;
}

double cross_covariance(const CovarianceQuery& q, const std::vector<MatrixXd>& lambda,
                        const MatrixXd& coreg, const std::vector<std::vector<double>>& decay_rates) {
  const double lag = std::abs(q.t_prime - q.t);
  const auto K = coreg.rows();
  const auto& li = lambda[static_cast<std::size_t>(q.comp_k)];
  const auto& lj = lambda[static_cast<std::size_t>(q.comp_l)];
  double cov = 0.0;
  for (Eigen::Index c = 0; c < K; ++c) {
    const double a = coreg(q.comp_k, c) * coreg(q.comp_l, c);
    if (a == 0.0) continue;
    double inner = 0.0;
    for (Eigen::Index f = 0; f < li.cols(); ++f) {
      const double rate = decay_rates[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)];
      inner += li(q.site_i, f) * lj(q.site_j, f) * std::exp(-rate * lag);
    }
    cov += a * inner;
  }
  return cov;
}

MatrixXd eta_covariance_block(double t, double t_prime, const std::vector<MatrixXd>& lambda,
                              const MatrixXd& coreg, const std::vector<std::vector<double>>& decay_rates) {
  const auto K = static_cast<int>(lambda.size());
  const auto n = static_cast<int>(lambda.front().rows());
  MatrixXd out(n * K, n * K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int l = 0; l < K; ++l) {
          out(i * K + k, j * K + l) = cross_covariance({i, j, k, l, t, t_prime}, lambda, coreg, decay_rates);
        }
      }
    }
  }
  return out;
}

JointGaussian joint_gaussian(double t, double t_prime, const VectorXd& mean_t, const VectorXd& mean_t_prime,
                             const std::vector<MatrixXd>& lambda, const MatrixXd& coreg,
                             const std::vector<std::vector<double>>& decay_rates, const VectorXd& tau2) {
  const auto K = static_cast<int>(lambda.size());
  const auto n = static_cast<int>(lambda.front().rows());
  const int d = n * K;
  MatrixXd marginal = eta_covariance_block(t, t, lambda, coreg, decay_rates);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) marginal(i * K + k, i * K + k) += tau2[k];
  }
  const MatrixXd cross = eta_covariance_block(t, t_prime, lambda, coreg, decay_rates);

  JointGaussian jg;
  jg.mean.resize(2 * d);
  jg.mean << mean_t, mean_t_prime;
  jg.cov.resize(2 * d, 2 * d);
  jg.cov.topLeftCorner(d, d) = marginal;
  jg.cov.bottomRightCorner(d, d) = marginal;
  jg.cov.topRightCorner(d, d) = cross;
  jg.cov.bottomLeftCorner(d, d) = cross.transpose();
  return jg;
}

GaussianMoments conditional_next(const JointGaussian& joint, const VectorXd& y_t) {
  const auto d = joint.half();
  const MatrixXd s11 = joint.cov.topLeftCorner(d, d);
  const MatrixXd s21 = joint.cov.bottomLeftCorner(d, d);
  const MatrixXd s22 = joint.cov.bottomRightCorner(d, d);
  auto llt = spd_factor(s11, "conditional_next");
  GaussianMoments out;
  out.mean = joint.mean.tail(d) + s21 * llt.solve(y_t - joint.mean.head(d));
  out.cov = s22 - s21 * llt.solve(s21.transpose());
  return out;
}

}  // namespace tvc
