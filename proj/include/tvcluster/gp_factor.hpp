// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/linalg.hpp"
#include "tvcluster/random.hpp"

#include <vector>

namespace tvc {

// Transition of a unit-variance exponential-correlation (OU) process over a
// gap: x(t + dt) | x(t) ~ N(mean_multiplier * x(t), innovation_variance).
struct Ar1Step {
  double mean_multiplier = 1.0;
  double innovation_variance = 0.0;
};

inline constexpr double kMinInnovationVariance = 1e-15;

Ar1Step ar1_step(double phi, double delta_t);

// Log density of an OU path under the unit-variance stationary law, evaluated
// as a product of one-step conditionals. O(T).
double sequential_log_density(const VectorXd& path, const VectorXd& times, double phi);

// Independent factor paths: result[k] is r x T, row l is the path of factor l
// driving component k, with decay rate config.decay(k, l).
std::vector<MatrixXd> simulate_factors(const ModelConfig& config, const VectorXd& times, Rng& rng);

// omega[k] = sum_j A(k, j) * nu[j], r x T.
std::vector<MatrixXd> compute_omega(const MatrixXd& coreg, const std::vector<MatrixXd>& nu);

// eta[k] = Lambda[k] * omega[k], n x T.
std::vector<MatrixXd> compute_eta(const std::vector<MatrixXd>& lambda, const MatrixXd& coreg,
                                  const std::vector<MatrixXd>& nu);

// Single entry eta_i^(k)(t) = sum_l Lambda[k](i, l) * sum_j A(k, j) nu[j](l, t).
double assemble_eta(const std::vector<MatrixXd>& lambda, const MatrixXd& coreg,
                    const std::vector<MatrixXd>& nu, int site, int comp, int time_index);

struct CovarianceQuery {
  int site_i = 0;
  int site_j = 0;
  int comp_k = 0;
  int comp_l = 0;
  double t = 0.0;
  double t_prime = 0.0;
};

// cov(eta_i^(k)(t), eta_j^(l)(t')) =
//   sum_c A(k, c) A(l, c) sum_f Lambda[k](i, f) Lambda[l](j, f) exp(-phi[c][f] |t' - t|).
// When the rates do not depend on the factor index this is the separable form
// (Lambda_i^(k))^T Lambda_j^(l) sum_c A(k, c) A(l, c) exp(-phi_c |t' - t|).
double cross_covariance(const CovarianceQuery& q, const std::vector<MatrixXd>& lambda,
                        const MatrixXd& coreg, const std::vector<std::vector<double>>& decay_rates);

// nK x nK covariance of eta at lags t' - t; entry (i*K + k, j*K + l).
MatrixXd eta_covariance_block(double t, double t_prime, const std::vector<MatrixXd>& lambda,
                              const MatrixXd& coreg, const std::vector<std::vector<double>>& decay_rates);

// Joint normal law of (Y(t), Y(t')) with site-major stacking (index i*K + k).
struct JointGaussian {
  VectorXd mean;  // 2nK
  MatrixXd cov;   // 2nK x 2nK
  Eigen::Index half() const { return mean.size() / 2; }
};

JointGaussian joint_gaussian(double t, double t_prime, const VectorXd& mean_t, const VectorXd& mean_t_prime,
                             const std::vector<MatrixXd>& lambda, const MatrixXd& coreg,
                             const std::vector<std::vector<double>>& decay_rates, const VectorXd& tau2);

// [Y(t') | Y(t) = y_t] in the closed form
//   mean = m(t') + S (Sigma + I (x) D)^{-1} (y_t - mu(t)),
//   cov  = (Sigma + I (x) D) - S (Sigma + I (x) D)^{-1} S^T,
// where S is the cross block.
GaussianMoments conditional_next(const JointGaussian& joint, const VectorXd& y_t);

}  // namespace tvc
