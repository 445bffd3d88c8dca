// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/gibbs.hpp"
#include "tvcluster/model.hpp"
#include "tvcluster/simulate.hpp"

#include <vector>

namespace tvc::fixture {

struct Dims {
  int n = 3;
  int K = 2;
  int r = 2;
  int T = 8;
  int M = 2;
  int p_x = 2;
  DpMode mode = DpMode::joint;
};

inline ModelConfig small_config(const Dims& d) {
  ModelConfig c;
  c.n_sites = d.n;
  c.n_components = d.K;
  c.n_factors = d.r;
  c.n_partitions = d.M;
  c.decay_rates.assign(static_cast<std::size_t>(d.K), {});
  for (int k = 0; k < d.K; ++k)
    for (int l = 0; l < d.r; ++l) c.decay_rates[static_cast<std::size_t>(k)].push_back(0.15 * (l + 1) * (1.0 + 0.4 * k));
  c.dp_concentration = 1.0;
  c.dp_mode = d.mode;
  c.priors.gamma = {GaussianPrior::isotropic(0.0, 2.0)};
  c.priors.beta_base = {GaussianPrior::isotropic(0.0, 3.0)};
  c.priors.lambda = {GaussianPrior::isotropic(0.0, 1.0)};
  c.priors.a_mean = 0.0;
  c.priors.a_var = 1.0;
  c.priors.tau2_shape = {3.0};
  c.priors.tau2_rate = {2.0};
  c.mcmc.n_iterations = 10;
  c.mcmc.burn_in = 0;
  c.mcmc.thin = 1;
  c.mcmc.rng_seed = 11;
  return c;
}

inline Dataset to_dataset(const Design& design, std::vector<MatrixXd> y) {
  Dataset data;
  data.times = design.times;
  data.x = design.x;
  data.z = design.z;
  data.partition_of = design.partition_of;
  data.site_coords = design.site_coords;
  data.y = std::move(y);
  return data;
}

// Random model with a prior-drawn state and data simulated from that state.
struct Problem {
  ModelConfig config;
  Design design;
  ParameterState truth;
  Model model;
};

inline Problem random_problem(const Dims& d, std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig config = small_config(d);
  Design design = synthetic_design(d.n, d.T, d.M, d.p_x, rng);
  // A throwaway model with placeholder responses is needed to draw the state.
  Dataset placeholder = to_dataset(design, std::vector<MatrixXd>(static_cast<std::size_t>(d.n), MatrixXd::Zero(d.T, d.K)));
  Model tmp(config, placeholder);
  ParameterState truth = draw_prior_state(tmp, rng);
  auto y = simulate_responses(design, truth, rng);
  return {config, design, truth, Model(config, to_dataset(design, y))};
}

}  // namespace tvc::fixture
