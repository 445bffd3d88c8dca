// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/simulate.hpp"

#include "tvcluster/gp_factor.hpp"

#include <cmath>
#include <numbers>

namespace tvc {

MatrixXd harmonic_covariates(const VectorXd& times) {
  MatrixXd z(times.size(), 3);
  for (Eigen::Index t = 0; t < times.size(); ++t) {
    const double angle = 2.0 * std::numbers::pi * times[t] / 24.0;
    z(t, 0) = 1.0;
    z(t, 1) = std::sin(angle);
    z(t, 2) = std::cos(angle);
  }
  return z;
}

Design synthetic_design(int n_sites, int n_times, int n_partitions, int p_x, Rng& rng) {
  Design d;
  d.times = VectorXd::LinSpaced(n_times, 0.0, n_times - 1.0);
  d.partition_of.resize(static_cast<std::size_t>(n_times));
  for (int t = 0; t < n_times; ++t) {
    d.partition_of[static_cast<std::size_t>(t)] =
        static_cast<int>(static_cast<long long>(t) * n_partitions / n_times);
  }
  const MatrixXd z = harmonic_covariates(d.times);
  for (int i = 0; i < n_sites; ++i) {
    MatrixXd x(n_times, p_x);
    for (int t = 0; t < n_times; ++t)
      for (int j = 0; j < p_x; ++j) x(t, j) = rng.normal();
    d.x.push_back(std::move(x));
    d.z.push_back(z);
  }
  MatrixXd coords(n_sites, 2);
  for (int i = 0; i < n_sites; ++i) {
    coords(i, 0) = 10.0 * rng.uniform();
    coords(i, 1) = 10.0 * rng.uniform();
  }
  d.site_coords = coords;
  return d;
}

std::vector<MatrixXd> simulate_responses(const Design& design, const ParameterState& truth, Rng& rng) {
  const int n = static_cast<int>(design.x.size());
  const int K = static_cast<int>(truth.tau2.size());
  const auto T = design.times.size();
  const int M = truth.clusters.n_partitions;
  const auto eta = compute_eta(truth.lambda, truth.coreg, truth.nu);
  std::vector<MatrixXd> y(static_cast<std::size_t>(n), MatrixXd(T, K));
  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (Eigen::Index t = 0; t < T; ++t) {
      const int m = design.partition_of[static_cast<std::size_t>(t)];
      for (int k = 0; k < K; ++k) {
        const double mean = design.x[si].row(t).dot(truth.clusters.coefficient(i, m, k)) +
                            design.z[si].row(t).dot(truth.gamma_at(i, m, k, M, K)) +
                            eta[static_cast<std::size_t>(k)](i, t);
        const double sd = std::sqrt(truth.tau2[k]);
        y[si](t, k) = sd > 0.0 ? mean + sd * rng.normal() : mean;
      }
    }
  }
  return y;
}

SimulatedData simulate_dataset(const ModelConfig& config, ParameterState truth, const Design& design, Rng& rng) {
  truth.nu = simulate_factors(config, design.times, rng);
  SimulatedData out;
  out.data.times = design.times;
  out.data.x = design.x;
  out.data.z = design.z;
  out.data.partition_of = design.partition_of;
  out.data.site_coords = design.site_coords;
  out.data.y = simulate_responses(design, truth, rng);
  for (int i = 0; i < config.n_sites; ++i) out.data.site_names.push_back("site" + std::to_string(i + 1));
  out.truth = std::move(truth);
  return out;
}

}  // namespace tvc
