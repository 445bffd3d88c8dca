// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/dp_cluster.hpp"
#include "tvcluster/linalg.hpp"
#include "tvcluster/model.hpp"
#include "tvcluster/random.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace tvc {

// Block order of one sweep.
inline constexpr std::array<const char*, 7> kBlockNames = {"labels", "atoms", "gamma", "lambda",
                                                           "coreg",  "tau2",  "nu"};

// A sampler block failed numerically; carries the position in the chain.
class ChainError : public NumericalError {
 public:
  ChainError(int iteration, std::string block, const std::string& what);
  int iteration() const { return iteration_; }
  const std::string& block() const { return block_; }

 private:
  int iteration_;
  std::string block_;
};

struct InverseGammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

// Starting point of every chain: gamma and atoms at their prior means, one
// cluster per partition and channel, zero loadings and factors, A = I, and
// tau2 at the prior mode.
ParameterState initial_state(const Model& model);

// Joint draw of all parameters from the prior (labels via the Polya urn,
// factors via the OU recursion).
ParameterState draw_prior_state(const Model& model, Rng& rng);

// log p(y | full state).
double log_likelihood(const Model& model, const ParameterState& state);

// Full conditionals. `eta` and `reg_mean` are the caches from compute_eta and
// regression_mean for the given state.
GaussianMoments gamma_conditional(const Model& model, const ParameterState& state,
                                  const std::vector<MatrixXd>& eta, int site, int partition, int comp);
GaussianMoments atom_conditional(const Model& model, const ParameterState& state,
                                 const std::vector<MatrixXd>& eta, int partition, int channel, int cluster,
                                 int comp);
GaussianMoments lambda_conditional(const Model& model, const ParameterState& state,
                                   const std::vector<MatrixXd>& reg_mean, int site, int comp);
// Scalar normal for the strictly-lower entry A(k, l), k > l.
GaussianMoments coreg_conditional(const Model& model, const ParameterState& state,
                                  const std::vector<MatrixXd>& reg_mean, int k, int l);
InverseGammaParams tau2_conditional(const Model& model, const ParameterState& state,
                                    const std::vector<MatrixXd>& reg_mean, int comp);
// r-vector nu[comp](:, t) given its neighbours in time and all data.
GaussianMoments nu_conditional(const Model& model, const ParameterState& state,
                               const std::vector<MatrixXd>& reg_mean, int comp, int time_index);

void update_labels(const Model& model, ParameterState& state, Rng& rng);
void update_beta_atoms(const Model& model, ParameterState& state, Rng& rng);
void update_gamma(const Model& model, ParameterState& state, Rng& rng);
void update_lambda(const Model& model, ParameterState& state, Rng& rng);
void update_coreg(const Model& model, ParameterState& state, Rng& rng);
void update_tau2(const Model& model, ParameterState& state, Rng& rng);
void update_nu(const Model& model, ParameterState& state, Rng& rng);

struct SweepReport {
  int iteration = 0;
  double log_likelihood = 0.0;
  std::vector<int> cluster_counts;     // per (partition, channel), index m * channels + g
  std::array<double, 7> block_ms{};    // wall time per block, kBlockNames order
};

// One full sweep in block order; failures surface as ChainError.
SweepReport sweep(const Model& model, ParameterState& state, Rng& rng, int iteration);

// Position of a running chain; everything needed to continue it.
struct ChainCursor {
  int iteration = 0;  // sweeps completed
  ParameterState state;
  Rng rng;
};

ChainCursor start_chain(const Model& model, int chain_index);

struct ChainObserver {
  std::function<void(const SweepReport&)> on_sweep;
  std::function<void(int iteration, const ParameterState&)> on_retained;
};

// Runs sweeps until cursor.iteration == until (capped by the schedule).
void advance_chain(const Model& model, ChainCursor& cursor, int until, const ChainObserver& observer);

struct ChainOutput {
  int chain_index = 0;
  std::uint64_t rng_seed = 0;
  ModelConfig config;
  std::vector<int> draw_iterations;
  std::vector<ParameterState> draws;
  std::vector<SweepReport> reports;
};

struct ChainOptions {
  bool retain_nu = true;     // keep factor paths in retained draws
  bool keep_reports = true;
};

ChainOutput run_chain(const Model& model, int chain_index, const ChainOptions& options = {});

}  // namespace tvc
