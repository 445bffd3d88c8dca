// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/linalg.hpp"

#include "tvcluster/core.hpp"

namespace tvc {

namespace {
constexpr double kJitter = 1e-10;
}

Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m, const std::string& context) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd jittered = m;
  jittered.diagonal().array() += kJitter;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("matrix not positive definite: " + context);
  }
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

GaussianMoments moments_from_precision(const Eigen::MatrixXd& precision,
                                       const Eigen::VectorXd& linear, const std::string& context) {
  auto llt = spd_factor(precision, context);
  GaussianMoments out;
  out.cov = llt.solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = llt.solve(linear);
  return out;
}

Eigen::VectorXd draw_from_precision(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                    Rng& rng, const std::string& context) {
  auto llt = spd_factor(precision, context);
  Eigen::VectorXd mean = llt.solve(linear);
  // P = L L^T, so L^{-T} z has covariance P^{-1}.
  Eigen::VectorXd z = rng.standard_normal(precision.rows());
  return mean + llt.matrixU().solve(z);
}

Eigen::VectorXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng,
                         const std::string& context) {
  auto llt = spd_factor(cov, context);
  return mean + llt.matrixL() * rng.standard_normal(mean.size());
}

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov) {
  auto llt = spd_factor(cov, "mvn_log_density");
  Eigen::VectorXd r = x - mean;
  Eigen::VectorXd w = llt.matrixL().solve(r);
  return -0.5 * (static_cast<double>(x.size()) * kLogTwoPi + log_det_from_llt(llt) + w.squaredNorm());
}

}  // namespace tvc
