// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/random.hpp"

#include <vector>

namespace tvc {

// Covariates and time grid without responses.
struct Design {
  VectorXd times;
  std::vector<MatrixXd> x;
  std::vector<MatrixXd> z;
  std::vector<int> partition_of;
  std::optional<MatrixXd> site_coords;
};

// Daily-harmonic nonclustered covariates (1, sin 2 pi t / 24, cos 2 pi t / 24).
MatrixXd harmonic_covariates(const VectorXd& times);

// Hourly grid 0..T-1 split into M nearly equal contiguous partitions, x drawn
// iid N(0, 1) with p_x columns, z harmonic, and coordinates uniform on
// [0, 10]^2.
Design synthetic_design(int n_sites, int n_times, int n_partitions, int p_x, Rng& rng);

// y = x beta + z gamma + eta + noise for a state that already holds nu.
// A tau2 of exactly 0 gives noise-free responses.
std::vector<MatrixXd> simulate_responses(const Design& design, const ParameterState& truth, Rng& rng);

struct SimulatedData {
  Dataset data;
  ParameterState truth;  // input truth with the drawn nu filled in
};

// Draws nu from the OU law of the config, then the responses.
SimulatedData simulate_dataset(const ModelConfig& config, ParameterState truth, const Design& design, Rng& rng);

}  // namespace tvc
