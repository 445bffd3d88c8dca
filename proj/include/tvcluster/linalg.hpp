// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/random.hpp"

#include <Eigen/Dense>

#include <string>

namespace tvc {

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Cholesky of an SPD matrix; on failure retries once with 1e-10 added to the
// diagonal, then throws NumericalError mentioning `context`.
Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m, const std::string& context);

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt);

// Moments of N(P^{-1} b, P^{-1}) given the precision P and linear term b.
GaussianMoments moments_from_precision(const Eigen::MatrixXd& precision,
                                       const Eigen::VectorXd& linear, const std::string& context);

// Draw from N(P^{-1} b, P^{-1}) without forming the inverse.
Eigen::VectorXd draw_from_precision(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                    Rng& rng, const std::string& context);

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng,
                         const std::string& context);

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov);

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

}  // namespace tvc
