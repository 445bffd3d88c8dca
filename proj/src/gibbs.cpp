// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/gibbs.hpp"

#include "tvcluster/gp_factor.hpp"

#include <chrono>
#include <cmath>

namespace tvc {

ChainError::ChainError(int iteration, std::string block, const std::string& what)
    : NumericalError("iteration " + std::to_string(iteration) + ", block " + block + ": " + what),
      iteration_(iteration),
      block_(std::move(block)) {}

namespace {

ClusterState single_cluster_state(const Model& model) {
  ClusterState cs;
  cs.mode = model.config().dp_mode;
  cs.n_partitions = model.M();
  cs.n_components = model.K();
  for (int m = 0; m < model.M(); ++m) {
    for (int g = 0; g < cs.n_channels(); ++g) {
      Atom atom;
      for (int k : cs.components_of(g)) atom.push_back(model.beta_base(k).mean);
      cs.dps.push_back(DpClusters::from_labels(std::vector<int>(static_cast<std::size_t>(model.n()), 0), {atom}));
    }
  }
  return cs;
}

MatrixXd identity_coreg(int K) { return MatrixXd::Identity(K, K); }

// y - regression mean - eta for component k, n x T.
MatrixXd full_residual(const Model& model, const MatrixXd& reg_mean, const MatrixXd& eta, int k) {
  return response_matrix(model.data(), k) - reg_mean - eta;
}

}  // namespace

ParameterState initial_state(const Model& model) {
  const int n = model.n(), K = model.K(), M = model.M(), r = model.r(), T = model.T();
  ParameterState s;
  s.gamma.resize(static_cast<std::size_t>(n * M * K));
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < M; ++m)
      for (int k = 0; k < K; ++k) s.gamma_at(i, m, k, M, K) = model.gamma_prior(k).mean;
  s.clusters = single_cluster_state(model);
  s.lambda.assign(static_cast<std::size_t>(K), MatrixXd::Zero(n, r));
  s.coreg = identity_coreg(K);
  s.tau2.resize(K);
  for (int k = 0; k < K; ++k) {
    s.tau2[k] = model.config().priors.rate_for(k) / (model.config().priors.shape_for(k) + 1.0);
  }
  s.nu.assign(static_cast<std::size_t>(K), MatrixXd::Zero(r, T));
  return s;
}

ParameterState draw_prior_state(const Model& model, Rng& rng) {
  const auto& cfg = model.config();
  const int n = model.n(), K = model.K(), M = model.M();
  ParameterState s;
  s.gamma.resize(static_cast<std::size_t>(n * M * K));
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) {
        const auto& prior = model.gamma_prior(k);
        s.gamma_at(i, m, k, M, K) = draw_mvn(prior.mean, prior.cov, rng, "gamma prior");
      }
    }
  }
  s.clusters.mode = cfg.dp_mode;
  s.clusters.n_partitions = M;
  s.clusters.n_components = K;
  for (int m = 0; m < M; ++m) {
    for (int g = 0; g < s.clusters.n_channels(); ++g) {
      const auto comps = s.clusters.components_of(g);
      AtomSampler base = [&](Rng& r) {
        Atom atom;
        for (int k : comps) atom.push_back(draw_mvn(model.beta_base(k).mean, model.beta_base(k).cov, r, "base"));
        return atom;
      };
      s.clusters.dps.push_back(urn_prior_sample(n, cfg.dp_concentration, base, rng));
    }
  }
  s.lambda.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& prior = model.lambda_prior(k);
    auto& lam = s.lambda[static_cast<std::size_t>(k)];
    lam.resize(n, model.r());
    for (int i = 0; i < n; ++i) lam.row(i) = draw_mvn(prior.mean, prior.cov, rng, "lambda prior").transpose();
  }
  s.coreg = identity_coreg(K);
  for (int k = 1; k < K; ++k) {
    for (int l = 0; l < k; ++l) s.coreg(k, l) = rng.normal(cfg.priors.a_mean, std::sqrt(cfg.priors.a_var));
  }
  s.tau2.resize(K);
  for (int k = 0; k < K; ++k) s.tau2[k] = rng.inverse_gamma(cfg.priors.shape_for(k), cfg.priors.rate_for(k));
  s.nu = simulate_factors(cfg, model.data().times, rng);
  return s;
}

double log_likelihood(const Model& model, const ParameterState& state) {
  const auto reg = regression_mean(model, state);
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  double ll = 0.0;
  for (int k = 0; k < model.K(); ++k) {
    const MatrixXd e = full_residual(model, reg[static_cast<std::size_t>(k)], eta[static_cast<std::size_t>(k)], k);
    const double tau2 = state.tau2[k];
    ll += -0.5 * (static_cast<double>(e.size()) * (kLogTwoPi + std::log(tau2)) + e.squaredNorm() / tau2);
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Full conditionals

GaussianMoments gamma_conditional(const Model& model, const ParameterState& state,
                                  const std::vector<MatrixXd>& eta, int site, int partition, int comp) {
  const auto& seg = model.segment(partition);
  const auto& data = model.data();
  const auto si = static_cast<std::size_t>(site);
  const auto& prior = model.gamma_prior(comp);
  const double tau2 = state.tau2[comp];
  const VectorXd& beta = state.clusters.coefficient(site, partition, comp);
  const VectorXd resid = data.y[si].col(comp).segment(seg.begin, seg.size()) -
                         data.x[si].middleRows(seg.begin, seg.size()) * beta -
                         eta[static_cast<std::size_t>(comp)].row(site).segment(seg.begin, seg.size()).transpose();
  const MatrixXd precision = prior.precision + model.ztz(site, partition) / tau2;
  const VectorXd linear =
      prior.precision_mean + data.z[si].middleRows(seg.begin, seg.size()).transpose() * resid / tau2;
  return moments_from_precision(precision, linear, "gamma conditional");
}

namespace {

SegmentStats pooled_cluster_stats(const Model& model, const ParameterState& state, const std::vector<MatrixXd>& eta,
                                  int partition, int channel, int cluster, int comp) {
  const auto& dp = state.clusters.dp(partition, channel);
  SegmentStats pooled;
  pooled.xtr = VectorXd::Zero(model.p_x());
  pooled.xtx = MatrixXd::Zero(model.p_x(), model.p_x());
  for (int i = 0; i < model.n(); ++i) {
    if (dp.labels[static_cast<std::size_t>(i)] != cluster) continue;
    const auto s = site_segment_stats(model, state, eta, i, partition, comp);
    pooled.length += s.length;
    pooled.rtr += s.rtr;
    pooled.xtr += s.xtr;
    pooled.xtx += s.xtx;
  }
  return pooled;
}

}  // namespace

GaussianMoments atom_conditional(const Model& model, const ParameterState& state,
                                 const std::vector<MatrixXd>& eta, int partition, int channel, int cluster,
                                 int comp) {
  const auto pooled = pooled_cluster_stats(model, state, eta, partition, channel, cluster, comp);
  return beta_posterior(pooled, state.tau2[comp], model.beta_base(comp));
}

namespace {

struct LambdaSystem {
  MatrixXd precision;  // r x r, shared by every site
  MatrixXd linear;     // r x n
};

LambdaSystem lambda_system(const Model& model, const ParameterState& state, const std::vector<MatrixXd>& reg_mean,
                           const std::vector<MatrixXd>& omega, int comp) {
  const auto& prior = model.lambda_prior(comp);
  const double tau2 = state.tau2[comp];
  const MatrixXd& w = omega[static_cast<std::size_t>(comp)];
  const MatrixXd resid = response_matrix(model.data(), comp) - reg_mean[static_cast<std::size_t>(comp)];
  LambdaSystem sys;
  sys.precision = prior.precision + w * w.transpose() / tau2;
  sys.linear = (w * resid.transpose() / tau2).colwise() + prior.precision_mean;
  return sys;
}

}  // namespace

GaussianMoments lambda_conditional(const Model& model, const ParameterState& state,
                                   const std::vector<MatrixXd>& reg_mean, int site, int comp) {
  const auto omega = compute_omega(state.coreg, state.nu);
  const auto sys = lambda_system(model, state, reg_mean, omega, comp);
  return moments_from_precision(sys.precision, sys.linear.col(site), "lambda conditional");
}

namespace {

// Scalar system for A(k, l) given the full residual e = y - mean - eta.
GaussianMoments coreg_from_residual(const Model& model, const ParameterState& state, const MatrixXd& residual,
                                    const MatrixXd& contribution, int k, int l) {
  const auto& pri = model.config().priors;
  const double tau2 = state.tau2[k];
  // Residual with the A(k, l) term added back.
  const MatrixXd partial = residual + state.coreg(k, l) * contribution;
  const double precision = 1.0 / pri.a_var + contribution.squaredNorm() / tau2;
  const double linear = pri.a_mean / pri.a_var + (contribution.array() * partial.array()).sum() / tau2;
  GaussianMoments g;
  g.mean = VectorXd::Constant(1, linear / precision);
  g.cov = MatrixXd::Constant(1, 1, 1.0 / precision);
  return g;
}

}  // namespace

GaussianMoments coreg_conditional(const Model& model, const ParameterState& state,
                                  const std::vector<MatrixXd>& reg_mean, int k, int l) {
  if (!(k > l && l >= 0 && k < model.K())) throw std::out_of_range("coreg_conditional: need k > l");
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const MatrixXd e = full_residual(model, reg_mean[static_cast<std::size_t>(k)], eta[static_cast<std::size_t>(k)], k);
  const MatrixXd contribution = state.lambda[static_cast<std::size_t>(k)] * state.nu[static_cast<std::size_t>(l)];
  return coreg_from_residual(model, state, e, contribution, k, l);
}

InverseGammaParams tau2_conditional(const Model& model, const ParameterState& state,
                                    const std::vector<MatrixXd>& reg_mean, int comp) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const MatrixXd e =
      full_residual(model, reg_mean[static_cast<std::size_t>(comp)], eta[static_cast<std::size_t>(comp)], comp);
  const auto& pri = model.config().priors;
  return {pri.shape_for(comp) + 0.5 * static_cast<double>(model.T()) * model.n(),
          pri.rate_for(comp) + 0.5 * e.squaredNorm()};
}

namespace {

// Prior (OU) part of the nu full conditional for factor l at time t:
// diagonal precision and linear term from the neighbours.
void nu_prior_terms(const VectorXd& times, double phi, const MatrixXd& path, int l, int t, double& precision,
                    double& linear) {
  const int T = static_cast<int>(times.size());
  precision = 0.0;
  linear = 0.0;
  if (t == 0) {
    precision += 1.0;  // stationary N(0, 1) at the first time
  } else {
    const Ar1Step back = ar1_step(phi, times[t] - times[t - 1]);
    const double v = std::max(back.innovation_variance, kMinInnovationVariance);
    precision += 1.0 / v;
    linear += back.mean_multiplier * path(l, t - 1) / v;
  }
  if (t + 1 < T) {
    const Ar1Step fwd = ar1_step(phi, times[t + 1] - times[t]);
    const double v = std::max(fwd.innovation_variance, kMinInnovationVariance);
    precision += fwd.mean_multiplier * fwd.mean_multiplier / v;
    linear += fwd.mean_multiplier * path(l, t + 1) / v;
  }
}

struct NuContext {
  std::vector<MatrixXd> residual;  // per component, y - mean - eta (n x T), kept current
  std::vector<MatrixXd> gram;      // Lambda[l]^T Lambda[l]
};

void nu_system(const Model& model, const ParameterState& state, const NuContext& ctx, int k, int t,
               MatrixXd& precision, VectorXd& linear) {
  const int r = model.r();
  const auto& times = model.data().times;
  const auto& path = state.nu[static_cast<std::size_t>(k)];
  precision = MatrixXd::Zero(r, r);
  linear = VectorXd::Zero(r);
  for (int l = 0; l < r; ++l) {
    double p = 0.0, b = 0.0;
    nu_prior_terms(times, model.config().decay(k, l), path, l, t, p, b);
    precision(l, l) = p;
    linear[l] = b;
  }
  const VectorXd current = path.col(t);
  for (int l = 0; l < model.K(); ++l) {
    const double a = state.coreg(l, k);
    if (a == 0.0) continue;
    const double tau2 = state.tau2[l];
    const auto& lam = state.lambda[static_cast<std::size_t>(l)];
    const auto& gram = ctx.gram[static_cast<std::size_t>(l)];
    precision += (a * a / tau2) * gram;
    // Residual excluding this factor vector: e + a * Lambda nu(t).
    linear += (a / tau2) * (lam.transpose() * ctx.residual[static_cast<std::size_t>(l)].col(t) + a * (gram * current));
  }
}

NuContext nu_context(const Model& model, const ParameterState& state, const std::vector<MatrixXd>& reg_mean) {
  NuContext ctx;
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  for (int l = 0; l < model.K(); ++l) {
    const auto sl = static_cast<std::size_t>(l);
    ctx.residual.push_back(full_residual(model, reg_mean[sl], eta[sl], l));
    ctx.gram.push_back(state.lambda[sl].transpose() * state.lambda[sl]);
  }
  return ctx;
}

}  // namespace

GaussianMoments nu_conditional(const Model& model, const ParameterState& state,
                               const std::vector<MatrixXd>& reg_mean, int comp, int time_index) {
  const auto ctx = nu_context(model, state, reg_mean);
  MatrixXd precision;
  VectorXd linear;
  nu_system(model, state, ctx, comp, time_index, precision, linear);
  return moments_from_precision(precision, linear, "nu conditional");
}

// ---------------------------------------------------------------------------
// Block updates

void update_labels(const Model& model, ParameterState& state, Rng& rng) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  for (int m = 0; m < model.M(); ++m) {
    for (int g = 0; g < state.clusters.n_channels(); ++g) {
      const auto comps = state.clusters.components_of(g);
      std::vector<std::vector<SegmentStats>> stats(static_cast<std::size_t>(model.n()));
      for (int i = 0; i < model.n(); ++i) {
        for (int k : comps) stats[static_cast<std::size_t>(i)].push_back(site_segment_stats(model, state, eta, i, m, k));
      }
      resample_partition_labels(model, state, m, g, stats, rng);
    }
  }
}

void update_beta_atoms(const Model& model, ParameterState& state, Rng& rng) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  for (int m = 0; m < model.M(); ++m) {
    for (int g = 0; g < state.clusters.n_channels(); ++g) {
      const auto comps = state.clusters.components_of(g);
      auto& dp = state.clusters.dp(m, g);
      for (int c = 0; c < dp.n_clusters(); ++c) {
        for (std::size_t slot = 0; slot < comps.size(); ++slot) {
          const int k = comps[slot];
          const auto pooled = pooled_cluster_stats(model, state, eta, m, g, c, k);
          const auto& base = model.beta_base(k);
          dp.atoms[static_cast<std::size_t>(c)][slot] =
              draw_from_precision(base.precision + pooled.xtx / state.tau2[k],
                                  base.precision_mean + pooled.xtr / state.tau2[k], rng, "atom conditional");
        }
      }
    }
  }
}

void update_gamma(const Model& model, ParameterState& state, Rng& rng) {
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const auto& data = model.data();
  for (int i = 0; i < model.n(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (int m = 0; m < model.M(); ++m) {
      const auto& seg = model.segment(m);
      for (int k = 0; k < model.K(); ++k) {
        const auto& prior = model.gamma_prior(k);
        const double tau2 = state.tau2[k];
        const VectorXd& beta = state.clusters.coefficient(i, m, k);
        const VectorXd resid =
            data.y[si].col(k).segment(seg.begin, seg.size()) - data.x[si].middleRows(seg.begin, seg.size()) * beta -
            eta[static_cast<std::size_t>(k)].row(i).segment(seg.begin, seg.size()).transpose();
        state.gamma_at(i, m, k, model.M(), model.K()) = draw_from_precision(
            prior.precision + model.ztz(i, m) / tau2,
            prior.precision_mean + data.z[si].middleRows(seg.begin, seg.size()).transpose() * resid / tau2, rng,
            "gamma conditional");
      }
    }
  }
}

void update_lambda(const Model& model, ParameterState& state, Rng& rng) {
  const auto reg = regression_mean(model, state);
  const auto omega = compute_omega(state.coreg, state.nu);
  for (int k = 0; k < model.K(); ++k) {
    const auto sys = lambda_system(model, state, reg, omega, k);
    auto llt = spd_factor(sys.precision, "lambda conditional");
    auto& lam = state.lambda[static_cast<std::size_t>(k)];
    for (int i = 0; i < model.n(); ++i) {
      const VectorXd mean = llt.solve(sys.linear.col(i));
      lam.row(i) = (mean + llt.matrixU().solve(rng.standard_normal(model.r()))).transpose();
    }
  }
}

void update_coreg(const Model& model, ParameterState& state, Rng& rng) {
  if (model.K() < 2) return;
  const auto reg = regression_mean(model, state);
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  for (int k = 1; k < model.K(); ++k) {
    const auto sk = static_cast<std::size_t>(k);
    MatrixXd e = full_residual(model, reg[sk], eta[sk], k);
    for (int l = 0; l < k; ++l) {
      const MatrixXd contribution = state.lambda[sk] * state.nu[static_cast<std::size_t>(l)];
      const auto g = coreg_from_residual(model, state, e, contribution, k, l);
      const double drawn = rng.normal(g.mean[0], std::sqrt(g.cov(0, 0)));
      e -= (drawn - state.coreg(k, l)) * contribution;
      state.coreg(k, l) = drawn;
    }
  }
}

void update_tau2(const Model& model, ParameterState& state, Rng& rng) {
  const auto reg = regression_mean(model, state);
  const auto eta = compute_eta(state.lambda, state.coreg, state.nu);
  const auto& pri = model.config().priors;
  for (int k = 0; k < model.K(); ++k) {
    const auto sk = static_cast<std::size_t>(k);
    const MatrixXd e = full_residual(model, reg[sk], eta[sk], k);
    const double shape = pri.shape_for(k) + 0.5 * static_cast<double>(model.T()) * model.n();
    const double rate = pri.rate_for(k) + 0.5 * e.squaredNorm();
    state.tau2[k] = rng.inverse_gamma(shape, rate);
  }
}

void update_nu(const Model& model, ParameterState& state, Rng& rng) {
  const auto reg = regression_mean(model, state);
  NuContext ctx = nu_context(model, state, reg);
  MatrixXd precision;
  VectorXd linear;
  for (int k = 0; k < model.K(); ++k) {
    auto& path = state.nu[static_cast<std::size_t>(k)];
    for (int t = 0; t < model.T(); ++t) {
      nu_system(model, state, ctx, k, t, precision, linear);
      const VectorXd drawn = draw_from_precision(precision, linear, rng, "nu conditional");
      const VectorXd delta = drawn - path.col(t);
      path.col(t) = drawn;
      for (int l = 0; l < model.K(); ++l) {
        const double a = state.coreg(l, k);
        if (a == 0.0) continue;
        ctx.residual[static_cast<std::size_t>(l)].col(t) -= a * (state.lambda[static_cast<std::size_t>(l)] * delta);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Chain driver

SweepReport sweep(const Model& model, ParameterState& state, Rng& rng, int iteration) {
  using Clock = std::chrono::steady_clock;
  using Update = void (*)(const Model&, ParameterState&, Rng&);
  static constexpr std::array<Update, 7> blocks = {update_labels, update_beta_atoms, update_gamma, update_lambda,
                                                   update_coreg,  update_tau2,       update_nu};
  SweepReport report;
  report.iteration = iteration;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto start = Clock::now();
    try {
      blocks[b](model, state, rng);
    } catch (const std::exception& e) {
      throw ChainError(iteration, kBlockNames[b], e.what());
    }
    report.block_ms[b] = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  }
  report.log_likelihood = log_likelihood(model, state);
  for (const auto& dp : state.clusters.dps) report.cluster_counts.push_back(dp.n_clusters());
  return report;
}

ChainCursor start_chain(const Model& model, int chain_index) {
  return {0, initial_state(model), Rng::stream(model.config().mcmc.rng_seed, static_cast<std::uint32_t>(chain_index))};
}

void advance_chain(const Model& model, ChainCursor& cursor, int until, const ChainObserver& observer) {
  const auto& schedule = model.config().mcmc;
  until = std::min(until, schedule.n_iterations);
  while (cursor.iteration < until) {
    const int it = cursor.iteration + 1;
    const auto report = sweep(model, cursor.state, cursor.rng, it);
    cursor.iteration = it;
    if (observer.on_sweep) observer.on_sweep(report);
    if (schedule.retains(it) && observer.on_retained) observer.on_retained(it, cursor.state);
  }
}

ChainOutput run_chain(const Model& model, int chain_index, const ChainOptions& options) {
  ChainOutput out;
  out.chain_index = chain_index;
  out.rng_seed = model.config().mcmc.rng_seed;
  out.config = model.config();
  out.draws.reserve(static_cast<std::size_t>(model.config().mcmc.retained_draws()));
  ChainObserver obs;
  if (options.keep_reports) obs.on_sweep = [&](const SweepReport& r) { out.reports.push_back(r); };
  obs.on_retained = [&](int it, const ParameterState& s) {
    out.draw_iterations.push_back(it);
    out.draws.push_back(s);
    if (!options.retain_nu) out.draws.back().nu.clear();
  };
  auto cursor = start_chain(model, chain_index);
  advance_chain(model, cursor, model.config().mcmc.n_iterations, obs);
  return out;
}

}  // namespace tvc
