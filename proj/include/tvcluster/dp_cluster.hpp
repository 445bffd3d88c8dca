// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "tvcluster/core.hpp"
#include "tvcluster/linalg.hpp"
#include "tvcluster/model.hpp"
#include "tvcluster/random.hpp"

#include <functional>
#include <vector>

namespace tvc {

// Relative label probabilities for one site: one entry per existing cluster
// (after removing the site) followed by the new-cluster entry.
struct UrnWeights {
  std::vector<double> log_weights;
  std::vector<double> normalized;

  std::size_t new_cluster_index() const { return log_weights.size() - 1; }
};

UrnWeights normalize_log_weights(std::vector<double> log_weights);

using AtomSampler = std::function<Atom(Rng&)>;

// Sequential Polya urn: site i opens a new atom with probability
// alpha / (alpha + i) (0-based i), otherwise copies the label of a uniformly
// chosen earlier site.
DpClusters urn_prior_sample(int n_sites, double alpha, const AtomSampler& base_sampler, Rng& rng);

// Sufficient statistics of a residual segment r against covariates X:
// length, r^T r, X^T r and X^T X.
struct SegmentStats {
  int length = 0;
  double rtr = 0.0;
  VectorXd xtr;
  MatrixXd xtx;
};

SegmentStats segment_stats(const Eigen::Ref<const VectorXd>& residual, const Eigen::Ref<const MatrixXd>& x);

// sum_t log N(r_t; x_t^T beta, tau2) from sufficient statistics.
double segment_loglik(const SegmentStats& stats, const VectorXd& beta, double tau2);

// log of the integral of N(r | X beta, tau2 I) N(beta | base) d beta, using the
// Woodbury identity for the quadratic form and the determinant lemma
// |X V X^T + tau2 I| = tau2^T |V| |V^{-1} + X^T X / tau2|. O(T p^2).
double woodbury_marginal_loglik(const SegmentStats& stats, double tau2, const ResolvedGaussian& base);

// Conditional posterior of beta given one or more segments (pooled stats).
GaussianMoments beta_posterior(const SegmentStats& pooled, double tau2, const ResolvedGaussian& base);

// Segment observation vector with beta integrated out. Dense T_m x T_m; for
// diagnostics only, the sampler never builds it.
struct MarginalizedGaussian {
  VectorXd mean;
  MatrixXd covariance;
};
MarginalizedGaussian marginalized_gaussian(const Model& model, const ParameterState& state, int site,
                                           int partition, int comp);

// Residual y - z^T gamma - eta for site i, partition m, component k, i.e. the
// part of the response the clustered coefficients must explain.
VectorXd clustered_residual(const Model& model, const ParameterState& state, const std::vector<MatrixXd>& eta,
                            int site, int partition, int comp);

SegmentStats site_segment_stats(const Model& model, const ParameterState& state,
                                const std::vector<MatrixXd>& eta, int site, int partition, int comp);

double new_cluster_marginal_loglik(const Model& model, const ParameterState& state, int site, int partition,
                                   int comp);

UrnWeights label_update_weights(const Model& model, const ParameterState& state, int site, int partition,
                                 int channel);

// Remove the site from its cluster, drop the cluster if it empties, draw a
// new label from the collapsed conditional and, for a new cluster, draw its
// atom from the single-site conditional posterior.
void resample_label(const Model& model, ParameterState& state, int site, int partition, int channel, Rng& rng);

// Cluster bookkeeping shared by the sampler.
void detach_site(DpClusters& dp, int site);
void attach_site(DpClusters& dp, int site, int cluster);
void attach_site_new(DpClusters& dp, int site, Atom atom);

// Label pass over one partition/channel with precomputed residual stats
// (stats[i][slot] for each covered component). Sites are visited in index
// order.
void resample_partition_labels(const Model& model, ParameterState& state, int partition, int channel,
                               const std::vector<std::vector<SegmentStats>>& stats, Rng& rng);

UrnWeights weights_for_detached(const Model& model, const DpClusters& dp, const std::vector<int>& comps,
                                const std::vector<SegmentStats>& site_stats, const VectorXd& tau2);

}  // namespace tvc
