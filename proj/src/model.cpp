// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/model.hpp"

#include "tvcluster/linalg.hpp"

#include <sstream>

namespace tvc {

namespace {
std::string join(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "; " : "") << v[i];
  return os.str();
}
}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error("validation failed: " + join(violations)), violations_(std::move(violations)) {}

ResolvedGaussian ResolvedGaussian::from(const GaussianPrior& prior, Eigen::Index dim) {
  ResolvedGaussian g;
  g.mean = prior.mean_for(dim);
  g.cov = prior.cov_for(dim);
  auto llt = spd_factor(g.cov, "prior covariance");
  g.precision = llt.solve(MatrixXd::Identity(dim, dim));
  g.precision = 0.5 * (g.precision + g.precision.transpose());
  g.precision_mean = g.precision * g.mean;
  g.log_det_cov = log_det_from_llt(llt);
  g.mean_quad = g.mean.dot(g.precision_mean);
  return g;
}

Model::Model(ModelConfig config, Dataset data) : config_(std::move(config)), data_(std::move(data)) {
  auto violations = validate_config(config_, data_);
  if (!violations.empty()) throw ValidationError(std::move(violations));

  segments_ = partition_segments(data_.partition_of, config_.n_partitions);
  const int n = config_.n_sites;
  const int M = config_.n_partitions;
  xtx_.resize(static_cast<std::size_t>(n * M));
  ztz_.resize(static_cast<std::size_t>(n * M));
  for (int i = 0; i < n; ++i) {
    const auto& x = data_.x[static_cast<std::size_t>(i)];
    const auto& z = data_.z[static_cast<std::size_t>(i)];
    for (int m = 0; m < M; ++m) {
      const auto& s = segments_[static_cast<std::size_t>(m)];
      auto xs = x.middleRows(s.begin, s.size());
      auto zs = z.middleRows(s.begin, s.size());
      xtx_[static_cast<std::size_t>(i * M + m)] = xs.transpose() * xs;
      ztz_[static_cast<std::size_t>(i * M + m)] = zs.transpose() * zs;
    }
  }
  for (int k = 0; k < config_.n_components; ++k) {
    gamma_prior_.push_back(ResolvedGaussian::from(config_.priors.gamma_for(k), data_.p_z()));
    beta_base_.push_back(ResolvedGaussian::from(config_.priors.beta_for(k), data_.p_x()));
    lambda_prior_.push_back(ResolvedGaussian::from(config_.priors.lambda_for(k), config_.n_factors));
  }
}

void Model::replace_responses(std::vector<MatrixXd> y) {
  if (y.size() != data_.y.size()) throw std::invalid_argument("replace_responses: site count mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i].rows() != data_.y[i].rows() || y[i].cols() != data_.y[i].cols()) {
      throw std::invalid_argument("replace_responses: shape mismatch");
    }
  }
  data_.y = std::move(y);
}

std::vector<MatrixXd> regression_mean(const Model& model, const ParameterState& state) {
  const int n = model.n(), K = model.K(), M = model.M(), T = model.T();
  std::vector<MatrixXd> mean(static_cast<std::size_t>(K), MatrixXd(n, T));
  const auto& data = model.data();
  for (int k = 0; k < K; ++k) {
    auto& out = mean[static_cast<std::size_t>(k)];
    for (int i = 0; i < n; ++i) {
      const auto& x = data.x[static_cast<std::size_t>(i)];
      const auto& z = data.z[static_cast<std::size_t>(i)];
      for (int m = 0; m < M; ++m) {
        const auto& s = model.segment(m);
        if (s.size() == 0) continue;
        const VectorXd& beta = state.clusters.coefficient(i, m, k);
        const VectorXd& gamma = state.gamma_at(i, m, k, M, K);
        out.row(i).segment(s.begin, s.size()) =
            (x.middleRows(s.begin, s.size()) * beta + z.middleRows(s.begin, s.size()) * gamma).transpose();
      }
    }
  }
  return mean;
}

MatrixXd response_matrix(const Dataset& data, int k) {
  MatrixXd out(data.n_sites(), data.n_times());
  for (int i = 0; i < data.n_sites(); ++i) out.row(i) = data.y[static_cast<std::size_t>(i)].col(k).transpose();
  return out;
}

}  // namespace tvc
