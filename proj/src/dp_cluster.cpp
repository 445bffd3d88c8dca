// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/dp_cluster.hpp"

#include "tvcluster/gp_factor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tvc {

UrnWeights normalize_log_weights(std::vector<double> log_weights) {
  UrnWeights w;
  w.log_weights = std::move(log_weights);
  const double top = *std::max_element(w.log_weights.begin(), w.log_weights.end());
  w.normalized.resize(w.log_weights.size());
  double total = 0.0;
  for (std::size_t c = 0; c < w.log_weights.size(); ++c) {
    w.normalized[c] = std::exp(w.log_weights[c] - top);
    total += w.normalized[c];
  }
  for (double& p : w.normalized) p /= total;
  return w;
}

namespace {

std::size_t draw_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    acc += probs[c];
    if (u < acc) return c;
  }
  // Rounding left u above the accumulated mass; take the last positive entry.
  for (std::size_t c = probs.size(); c-- > 0;) {
    if (probs[c] > 0.0) return c;
  }
  return probs.size() - 1;
}

}  // namespace

DpClusters urn_prior_sample(int n_sites, double alpha, const AtomSampler& base_sampler, Rng& rng) {
  if (!(alpha > 0.0)) throw DomainError("urn_prior_sample: alpha must be positive");
  DpClusters dp;
  dp.labels.assign(static_cast<std::size_t>(n_sites), -1);
  for (int i = 0; i < n_sites; ++i) {
    const double p_new = alpha / (alpha + static_cast<double>(i));
    if (i == 0 || rng.uniform() < p_new) {
      dp.labels[static_cast<std::size_t>(i)] = dp.n_clusters();
      dp.atoms.push_back(base_sampler(rng));
      dp.counts.push_back(1);
    } else {
      const int earlier = rng.uniform_int(i);
      const int label = dp.labels[static_cast<std::size_t>(earlier)];
      dp.labels[static_cast<std::size_t>(i)] = label;
      ++dp.counts[static_cast<std::size_t>(label)];
    }
  }
  return dp;
}

SegmentStats segment_stats(const Eigen::Ref<const VectorXd>& residual, const Eigen::Ref<const MatrixXd>& x) {
  SegmentStats s;
  s.length = static_cast<int>(residual.size());
  s.rtr = residual.squaredNorm();
  s.xtr = x.transpose() * residual;
  s.xtx = x.transpose() * x;
  return s;
}

double segment_loglik(const SegmentStats& s, const VectorXd& beta, double tau2) {
  const double sse = s.rtr - 2.0 * beta.dot(s.xtr) + beta.dot(s.xtx * beta);
  return -0.5 * (s.length * (kLogTwoPi + std::log(tau2)) + std::max(sse, 0.0) / tau2);
}

double woodbury_marginal_loglik(const SegmentStats& s, double tau2, const ResolvedGaussian& base) {
  if (!(tau2 > 0.0)) throw DomainError("woodbury_marginal_loglik: tau2 must be positive");
  const MatrixXd precision = base.precision + s.xtx / tau2;
  const VectorXd linear = base.precision_mean + s.xtr / tau2;
  Eigen::LLT<MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw DomainError("woodbury_marginal_loglik: posterior precision not PD");
  const VectorXd half = llt.matrixL().solve(linear);
  return -0.5 * s.length * (kLogTwoPi + std::log(tau2)) - 0.5 * s.rtr / tau2 - 0.5 * base.log_det_cov -
         0.5 * base.mean_quad - 0.5 * log_det_from_llt(llt) + 0.5 * half.squaredNorm();
}

GaussianMoments beta_posterior(const SegmentStats& pooled, double tau2, const ResolvedGaussian& base) {
  return moments_from_precision(base.precision + pooled.xtx / tau2, base.precision_mean + pooled.xtr / tau2,
                                "beta conditional");
}

VectorXd clustered_residual(const Model& model, const ParameterState& state, const std::vector<MatrixXd>& eta,
                            int site, int partition, int comp) {
  const auto& seg = model.segment(partition);
  const auto& data = model.data();
  const auto si = static_cast<std::size_t>(site);
  const VectorXd& gamma = state.gamma_at(site, partition, comp, model.M(), model.K());
  return data.y[si].col(comp).segment(seg.begin, seg.size()) -
         data.z[si].middleRows(seg.begin, seg.size()) * gamma -
         eta[static_cast<std::size_t>(comp)].row(site).segment(seg.begin, seg.size()).transpose();
}

SegmentStats site_segment_stats(const Model& model, const ParameterState& state,
                                const std::vector<MatrixXd>& eta, int site, int partition, int comp) {
  const auto& seg = model.segment(partition);
  const VectorXd r = clustered_residual(model, state, eta, site, partition, comp);
  SegmentStats s;
  s.length = seg.size();
  s.rtr = r.squaredNorm();
  s.xtr = model.data().x[static_cast<std::size_t>(site)].middleRows(seg.begin, seg.size()).transpose() * r;
  s.xtx = model.xtx(site, partition);
  return s;
}

MarginalizedGaussian marginalized_gaussian(const Model& model, const ParameterState& state, int site,
                                           int partition, int comp) {
  const auto& seg = model.segment(partition);
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const auto si = static_cast<std::size_t>(site);
  const auto& base = model.beta_base(comp);
  const MatrixXd x = model.data().x[si].middleRows(seg.begin, seg.size());
  const VectorXd& gamma = state.gamma_at(site, partition, comp, model.M(), model.K());
  MarginalizedGaussian g;
  g.mean = model.data().z[si].middleRows(seg.begin, seg.size()) * gamma +
           eta[static_cast<std::size_t>(comp)].row(site).segment(seg.begin, seg.size()).transpose() +
           x * base.mean;
  g.covariance = x * base.cov * x.transpose();
  g.covariance.diagonal().array() += state.tau2[comp];
  return g;
}

double new_cluster_marginal_loglik(const Model& model, const ParameterState& state, int site, int partition,
                                   int comp) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const auto stats = site_segment_stats(model, state, eta, site, partition, comp);
  return woodbury_marginal_loglik(stats, state.tau2[comp], model.beta_base(comp));
}

void detach_site(DpClusters& dp, int site) {
  const auto si = static_cast<std::size_t>(site);
  const int c = dp.labels[si];
  if (c < 0) return;
  dp.labels[si] = -1;
  if (--dp.counts[static_cast<std::size_t>(c)] > 0) return;
  dp.atoms.erase(dp.atoms.begin() + c);
  dp.counts.erase(dp.counts.begin() + c);
  for (int& l : dp.labels) {
    if (l > c) --l;
  }
}

void attach_site(DpClusters& dp, int site, int cluster) {
  dp.labels[static_cast<std::size_t>(site)] = cluster;
  ++dp.counts[static_cast<std::size_t>(cluster)];
}

void attach_site_new(DpClusters& dp, int site, Atom atom) {
  dp.atoms.push_back(std::move(atom));
  dp.counts.push_back(1);
  dp.labels[static_cast<std::size_t>(site)] = dp.n_clusters() - 1;
}

UrnWeights weights_for_detached(const Model& model, const DpClusters& dp, const std::vector<int>& comps,
                                const std::vector<SegmentStats>& site_stats, const VectorXd& tau2) {
  std::vector<double> lw;
  lw.reserve(dp.atoms.size() + 1);
  for (int c = 0; c < dp.n_clusters(); ++c) {
    double w = std::log(static_cast<double>(dp.counts[static_cast<std::size_t>(c)]));
    for (std::size_t slot = 0; slot < comps.size(); ++slot) {
      w += segment_loglik(site_stats[slot], dp.atoms[static_cast<std::size_t>(c)][slot], tau2[comps[slot]]);
    }
    lw.push_back(w);
  }
  double w_new = std::log(model.config().dp_concentration);
  for (std::size_t slot = 0; slot < comps.size(); ++slot) {
    const int k = comps[slot];
    w_new += woodbury_marginal_loglik(site_stats[slot], tau2[k], model.beta_base(k));
  }
  lw.push_back(w_new);
  return normalize_log_weights(std::move(lw));
}

UrnWeights label_update_weights(const Model& model, const ParameterState& state, int site, int partition,
                                 int channel) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const auto comps = state.clusters.components_of(channel);
  std::vector<SegmentStats> stats;
  for (int k : comps) stats.push_back(site_segment_stats(model, state, eta, site, partition, k));
  DpClusters dp = state.clusters.dp(partition, channel);
  detach_site(dp, site);
  return weights_for_detached(model, dp, comps, stats, state.tau2);
}

namespace {

void resample_detached(const Model& model, DpClusters& dp, const std::vector<int>& comps,
                       const std::vector<SegmentStats>& stats, const VectorXd& tau2, int site, Rng& rng) {
  const UrnWeights w = weights_for_detached(model, dp, comps, stats, tau2);
  const std::size_t pick = draw_index(w.normalized, rng);
  if (pick < w.new_cluster_index()) {
    attach_site(dp, site, static_cast<int>(pick));
    return;
  }
  Atom atom;
  atom.reserve(comps.size());
  for (std::size_t slot = 0; slot < comps.size(); ++slot) {
    const int k = comps[slot];
    const auto& base = model.beta_base(k);
    atom.push_back(draw_from_precision(base.precision + stats[slot].xtx / tau2[k],
                                       base.precision_mean + stats[slot].xtr / tau2[k], rng,
                                       "new-cluster atom"));
  }
  attach_site_new(dp, site, std::move(atom));
}

}  // namespace

void resample_label(const Model& model, ParameterState& state, int site, int partition, int channel, Rng& rng) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const auto comps = state.clusters.components_of(channel);
  std::vector<SegmentStats> stats;
  for (int k : comps) stats.push_back(site_segment_stats(model, state, eta, site, partition, k));
  DpClusters& dp = state.clusters.dp(partition, channel);
  detach_site(dp, site);
  resample_detached(model, dp, comps, stats, state.tau2, site, rng);
}

void resample_partition_labels(const Model& model, ParameterState& state, int partition, int channel,
                               const std::vector<std::vector<SegmentStats>>& stats, Rng& rng) {
  const auto comps = state.clusters.components_of(channel);
  DpClusters& dp = state.clusters.dp(partition, channel);
  for (int i = 0; i < model.n(); ++i) {
    detach_site(dp, i);
    resample_detached(model, dp, comps, stats[static_cast<std::size_t>(i)], state.tau2, i, rng);
  }
}

}  // namespace tvc
