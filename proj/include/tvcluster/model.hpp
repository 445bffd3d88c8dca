// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace tvc {

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Gaussian prior in both moment and information form.
struct ResolvedGaussian {
  VectorXd mean;
  MatrixXd cov;
  MatrixXd precision;
  VectorXd precision_mean;   // precision * mean
  double log_det_cov = 0.0;
  double mean_quad = 0.0;    // mean^T precision mean

  static ResolvedGaussian from(const GaussianPrior& prior, Eigen::Index dim);
};

// Validated configuration and data plus the derived quantities every sampler
// block needs: partition segments, per-(site, partition) Gram matrices, and
// resolved priors.
class Model {
 public:
  Model(ModelConfig config, Dataset data);

  const ModelConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(int m) const { return segments_[static_cast<std::size_t>(m)]; }

  int n() const { return config_.n_sites; }
  int K() const { return config_.n_components; }
  int r() const { return config_.n_factors; }
  int M() const { return config_.n_partitions; }
  int T() const { return data_.n_times(); }
  int p_x() const { return data_.p_x(); }
  int p_z() const { return data_.p_z(); }

  // X^T X and Z^T Z over the rows of partition m at site i.
  const MatrixXd& xtx(int i, int m) const { return xtx_[static_cast<std::size_t>(i * M() + m)]; }
  const MatrixXd& ztz(int i, int m) const { return ztz_[static_cast<std::size_t>(i * M() + m)]; }

  const ResolvedGaussian& gamma_prior(int k) const { return gamma_prior_[static_cast<std::size_t>(k)]; }
  const ResolvedGaussian& beta_base(int k) const { return beta_base_[static_cast<std::size_t>(k)]; }
  const ResolvedGaussian& lambda_prior(int k) const { return lambda_prior_[static_cast<std::size_t>(k)]; }

  // Same data, different configuration (used by sensitivity sweeps).
  Model with_config(ModelConfig config) const { return Model(std::move(config), data_); }
  // Swap in new responses (same shape); covariate Gram matrices stay valid.
  void replace_responses(std::vector<MatrixXd> y);

 private:
  ModelConfig config_;
  Dataset data_;
  std::vector<Segment> segments_;
  std::vector<MatrixXd> xtx_;
  std::vector<MatrixXd> ztz_;
  std::vector<ResolvedGaussian> gamma_prior_;
  std::vector<ResolvedGaussian> beta_base_;
  std::vector<ResolvedGaussian> lambda_prior_;
};

// Per component k an n x T matrix of x^T beta + z^T gamma.
std::vector<MatrixXd> regression_mean(const Model& model, const ParameterState& state);

// Time-major n x T view of y for component k.
MatrixXd response_matrix(const Dataset& data, int k);

}  // namespace tvc
