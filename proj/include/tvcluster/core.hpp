// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown for invalid arguments to numerical kernels (bad rates, negative gaps,
// non-PD covariances).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Thrown when a factorization fails even after jitter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DpMode { joint, independent };

std::string to_string(DpMode mode);
DpMode dp_mode_from_string(const std::string& s);

// Mean and covariance of a multivariate normal prior. A size-1 mean/cov is an
// isotropic shorthand that expands to any dimension.
struct GaussianPrior {
  VectorXd mean = VectorXd::Zero(1);
  MatrixXd cov = MatrixXd::Identity(1, 1);

  static GaussianPrior isotropic(double mean, double variance);
  bool fits(Eigen::Index dim) const;
  VectorXd mean_for(Eigen::Index dim) const;
  MatrixXd cov_for(Eigen::Index dim) const;
};

struct PriorSpec {
  // One entry per component; a single entry is shared by every component.
  std::vector<GaussianPrior> gamma;
  std::vector<GaussianPrior> beta_base;
  std::vector<GaussianPrior> lambda;  // per-site loading row prior
  double a_mean = 0.0;
  double a_var = 100.0;
  std::vector<double> tau2_shape;
  std::vector<double> tau2_rate;

  const GaussianPrior& gamma_for(int k) const;
  const GaussianPrior& beta_for(int k) const;
  const GaussianPrior& lambda_for(int k) const;
  double shape_for(int k) const;
  double rate_for(int k) const;
};

struct McmcSchedule {
  int n_iterations = 1000;
  int burn_in = 0;
  int thin = 1;
  std::uint64_t rng_seed = 1;
  int n_chains = 1;

  // floor((n_iterations - burn_in) / thin)
  int retained_draws() const;
  // Iterations are numbered from 1.
  bool retains(int iteration) const;
};

struct ModelConfig {
  int n_sites = 1;
  int n_components = 1;
  int n_factors = 1;
  int n_partitions = 1;
  // decay_rates[k][j]: per-hour rate of factor j for component k.
  std::vector<std::vector<double>> decay_rates;
  double dp_concentration = 1.0;
  DpMode dp_mode = DpMode::joint;
  PriorSpec priors;
  McmcSchedule mcmc;

  // Number of independent Dirichlet processes per partition.
  int n_channels() const { return dp_mode == DpMode::joint ? 1 : n_components; }
  double decay(int k, int j) const { return decay_rates[k][j]; }
};

enum class Transform { none, sqrt, log };

std::string to_string(Transform t);
Transform transform_from_string(const std::string& s);

struct TransformRecord {
  std::string variable;
  Transform kind = Transform::none;
  double center = 0.0;
  double scale = 1.0;
};

// Observed functions and covariate paths. Arrays are stored per site as
// time-major matrices: y[i] is T x K, x[i] is T x p_x, z[i] is T x p_z.
struct Dataset {
  VectorXd times;                   // hours, strictly increasing
  std::vector<MatrixXd> y;
  std::vector<MatrixXd> x;
  std::vector<MatrixXd> z;
  std::vector<int> partition_of;    // time index -> partition in [0, M)
  std::optional<MatrixXd> site_coords;  // n x 2
  std::vector<std::string> site_names;
  std::vector<TransformRecord> transform_log;

  int n_sites() const { return static_cast<int>(y.size()); }
  int n_times() const { return static_cast<int>(times.size()); }
  int n_components() const { return y.empty() ? 0 : static_cast<int>(y.front().cols()); }
  int p_x() const { return x.empty() ? 0 : static_cast<int>(x.front().cols()); }
  int p_z() const { return z.empty() ? 0 : static_cast<int>(z.front().cols()); }
};

// Atom: one coefficient vector per component covered by the DP channel.
using Atom = std::vector<VectorXd>;

// One Dirichlet process: a single partition and channel.
struct DpClusters {
  std::vector<int> labels;   // per site, indexes atoms
  std::vector<Atom> atoms;
  std::vector<int> counts;   // occupancy per atom

  int n_clusters() const { return static_cast<int>(atoms.size()); }
  static DpClusters from_labels(std::vector<int> labels, std::vector<Atom> atoms);
};

struct ClusterState {
  DpMode mode = DpMode::joint;
  int n_partitions = 0;
  int n_components = 0;
  std::vector<DpClusters> dps;  // index m * n_channels + g

  int n_channels() const { return mode == DpMode::joint ? 1 : n_components; }
  int channel_of(int k) const { return mode == DpMode::joint ? 0 : k; }
  // Position of component k inside an atom of its channel.
  int slot_of(int k) const { return mode == DpMode::joint ? k : 0; }
  // Components covered by channel g.
  std::vector<int> components_of(int g) const;

  DpClusters& dp(int m, int g) { return dps[static_cast<std::size_t>(m * n_channels() + g)]; }
  const DpClusters& dp(int m, int g) const {
    return dps[static_cast<std::size_t>(m * n_channels() + g)];
  }
  const VectorXd& coefficient(int i, int m, int k) const;
};

struct ParameterState {
  std::vector<VectorXd> gamma;   // index (i * M + m) * K + k, length p_z
  ClusterState clusters;
  std::vector<MatrixXd> lambda;  // per component, n x r
  MatrixXd coreg;                // K x K, unit lower triangular
  VectorXd tau2;                 // K
  std::vector<MatrixXd> nu;      // per component, r x T (column t = factor vector)

  VectorXd& gamma_at(int i, int m, int k, int n_partitions, int n_components) {
    return gamma[static_cast<std::size_t>((i * n_partitions + m) * n_components + k)];
  }
  const VectorXd& gamma_at(int i, int m, int k, int n_partitions, int n_components) const {
    return gamma[static_cast<std::size_t>((i * n_partitions + m) * n_components + k)];
  }
};

// Returns human-readable violations; empty when config and data are
// consistent and every invariant holds.
std::vector<std::string> validate_config(const ModelConfig& config);
std::vector<std::string> validate_config(const ModelConfig& config, const Dataset& data);
std::vector<std::string> validate_dataset(const Dataset& data);
std::vector<std::string> validate_clusters(const ClusterState& clusters, int n_sites);
std::vector<std::string> validate_state(const ParameterState& state, const ModelConfig& config,
                                        int n_times, int p_x, int p_z);

// Contiguous time-index ranges [begin, end) per partition.
struct Segment {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};
std::vector<Segment> partition_segments(const std::vector<int>& partition_of, int n_partitions);

}  // namespace tvc
