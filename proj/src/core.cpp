// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tvc {

std::string to_string(DpMode mode) { return mode == DpMode::joint ? "joint" : "independent"; }

DpMode dp_mode_from_string(const std::string& s) {
  if (s == "joint") return DpMode::joint;
  if (s == "independent" || s == "independent-per-component") return DpMode::independent;
  throw std::invalid_argument("unknown dp_mode '" + s + "'");
}

std::string to_string(Transform t) {
  switch (t) {
    case Transform::sqrt: return "sqrt";
    case Transform::log: return "log";
    default: return "none";
  }
}

Transform transform_from_string(const std::string& s) {
  if (s == "sqrt") return Transform::sqrt;
  if (s == "log") return Transform::log;
  if (s == "none") return Transform::none;
  throw std::invalid_argument("unknown transform '" + s + "'");
}

GaussianPrior GaussianPrior::isotropic(double mean, double variance) {
  GaussianPrior p;
  p.mean = VectorXd::Constant(1, mean);
  p.cov = MatrixXd::Constant(1, 1, variance);
  return p;
}

bool GaussianPrior::fits(Eigen::Index dim) const {
  const bool mean_ok = mean.size() == 1 || mean.size() == dim;
  const bool cov_ok = (cov.rows() == 1 && cov.cols() == 1) || (cov.rows() == dim && cov.cols() == dim);
  return mean_ok && cov_ok;
}

VectorXd GaussianPrior::mean_for(Eigen::Index dim) const {
  if (mean.size() == dim) return mean;
  return VectorXd::Constant(dim, mean[0]);
}

MatrixXd GaussianPrior::cov_for(Eigen::Index dim) const {
  if (cov.rows() == dim && cov.cols() == dim) return cov;
  return cov(0, 0) * MatrixXd::Identity(dim, dim);
}

namespace {
template <typename T>
const T& per_component(const std::vector<T>& v, int k, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string("prior '") + what + "' is empty");
  return v.size() == 1 ? v.front() : v.at(static_cast<std::size_t>(k));
}
}  // namespace

const GaussianPrior& PriorSpec::gamma_for(int k) const { return per_component(gamma, k, "gamma"); }
const GaussianPrior& PriorSpec::beta_for(int k) const { return per_component(beta_base, k, "beta_base"); }
const GaussianPrior& PriorSpec::lambda_for(int k) const { return per_component(lambda, k, "lambda"); }
double PriorSpec::shape_for(int k) const { return per_component(tau2_shape, k, "tau2_shape"); }
double PriorSpec::rate_for(int k) const { return per_component(tau2_rate, k, "tau2_rate"); }

int McmcSchedule::retained_draws() const {
  if (thin <= 0 || n_iterations <= burn_in) return 0;
  return (n_iterations - burn_in) / thin;
}

bool McmcSchedule::retains(int iteration) const {
  return iteration > burn_in && (iteration - burn_in) % thin == 0;
}

DpClusters DpClusters::from_labels(std::vector<int> labels, std::vector<Atom> atoms) {
  DpClusters dp;
  dp.labels = std::move(labels);
  dp.atoms = std::move(atoms);
  dp.counts.assign(dp.atoms.size(), 0);
  for (int l : dp.labels) {
    if (l < 0 || l >= dp.n_clusters()) throw std::invalid_argument("label without atom");
    ++dp.counts[static_cast<std::size_t>(l)];
  }
  return dp;
}

std::vector<int> ClusterState::components_of(int g) const {
  if (mode == DpMode::independent) return {g};
  std::vector<int> ks(static_cast<std::size_t>(n_components));
  for (int k = 0; k < n_components; ++k) ks[static_cast<std::size_t>(k)] = k;
  return ks;
}

const VectorXd& ClusterState::coefficient(int i, int m, int k) const {
  const DpClusters& d = dp(m, channel_of(k));
  return d.atoms[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(i)])]
                [static_cast<std::size_t>(slot_of(k))];
}

namespace {

bool spd(const MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.isApprox(m.transpose(), 1e-12)) return false;
  Eigen::LLT<MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

void check_prior_list(const std::vector<GaussianPrior>& priors, const char* name, int n_components,
                      std::vector<std::string>& out) {
  if (priors.empty()) {
    out.push_back(std::string("priors.") + name + " is empty");
    return;
  }
  if (priors.size() != 1 && static_cast<int>(priors.size()) != n_components) {
    out.push_back(std::string("priors.") + name + " needs 1 or n_components entries");
  }
  for (const auto& p : priors) {
    if (!spd(p.cov)) out.push_back(std::string("priors.") + name + " covariance is not symmetric positive definite");
  }
}

void check_prior_dims(const std::vector<GaussianPrior>& priors, const char* name, int dim,
                      std::vector<std::string>& out) {
  for (const auto& p : priors) {
    if (!p.fits(dim)) {
      std::ostringstream os;
      os << "priors." << name << " dimension does not match " << dim;
      out.push_back(os.str());
    }
  }
}

}  // namespace

std::vector<std::string> validate_config(const ModelConfig& c) {
  std::vector<std::string> out;
  if (c.n_sites < 1) out.emplace_back("n_sites must be positive");
  if (c.n_components < 1) out.emplace_back("n_components must be positive");
  if (c.n_factors < 1) out.emplace_back("n_factors must be positive");
  if (c.n_partitions < 1) out.emplace_back("n_partitions must be positive");
  if (!(c.dp_concentration > 0.0) || !std::isfinite(c.dp_concentration)) {
    out.emplace_back("dp_concentration must be strictly positive");
  }

  if (static_cast<int>(c.decay_rates.size()) != c.n_components) {
    out.emplace_back("decay_rates must have one row per component");
  } else {
    for (int k = 0; k < c.n_components; ++k) {
      const auto& row = c.decay_rates[static_cast<std::size_t>(k)];
      if (static_cast<int>(row.size()) != c.n_factors) {
        out.push_back("decay_rates row " + std::to_string(k) + " must have n_factors entries");
        continue;
      }
      bool positive = true;
      bool increasing = true;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (!(row[j] > 0.0) || !std::isfinite(row[j])) positive = false;
        if (j > 0 && !(row[j] > row[j - 1])) increasing = false;
      }
      if (!positive) out.push_back("decay_rates row " + std::to_string(k) + " must be strictly positive");
      if (!increasing) {
        out.push_back("decay_rates row " + std::to_string(k) +
                      " violates the ordering constraint (strictly increasing in factor index)");
      }
    }
  }

  const auto& p = c.priors;
  check_prior_list(p.gamma, "gamma", c.n_components, out);
  check_prior_list(p.beta_base, "beta_base", c.n_components, out);
  check_prior_list(p.lambda, "lambda", c.n_components, out);
  check_prior_dims(p.lambda, "lambda", c.n_factors, out);
  if (!(p.a_var > 0.0)) out.emplace_back("priors.a_var must be strictly positive");
  auto check_positive_list = [&](const std::vector<double>& v, const char* name) {
    if (v.empty() || (v.size() != 1 && static_cast<int>(v.size()) != c.n_components)) {
      out.push_back(std::string("priors.") + name + " needs 1 or n_components entries");
    }
    for (double x : v) {
      if (!(x > 0.0)) out.push_back(std::string("priors.") + name + " must be strictly positive");
    }
  };
  check_positive_list(p.tau2_shape, "tau2_shape");
  check_positive_list(p.tau2_rate, "tau2_rate");

  const auto& s = c.mcmc;
  if (s.n_iterations < 1) out.emplace_back("mcmc.n_iterations must be positive");
  if (s.burn_in < 0 || s.burn_in >= s.n_iterations) out.emplace_back("mcmc.burn_in must lie in [0, n_iterations)");
  if (s.thin < 1) out.emplace_back("mcmc.thin must be positive");
  if (s.n_chains < 1) out.emplace_back("mcmc.n_chains must be positive");
  if (s.thin >= 1 && s.burn_in >= 0 && s.retained_draws() < 1) {
    out.emplace_back("mcmc schedule retains no draws");
  }
  return out;
}

std::vector<std::string> validate_dataset(const Dataset& d) {
  std::vector<std::string> out;
  const int n = d.n_sites();
  const int T = d.n_times();
  if (n < 1) out.emplace_back("dataset has no sites");
  if (T < 1) out.emplace_back("dataset has no time points");
  for (int t = 1; t < T; ++t) {
    if (!(d.times[t] > d.times[t - 1])) {
      out.emplace_back("times must be strictly increasing");
      break;
    }
  }
  if (static_cast<int>(d.partition_of.size()) != T) out.emplace_back("partition_of length differs from times");
  for (std::size_t t = 0; t < d.partition_of.size(); ++t) {
    if (d.partition_of[t] < 0) {
      out.emplace_back("partition_of contains a negative index");
      break;
    }
    if (t > 0 && d.partition_of[t] < d.partition_of[t - 1]) {
      out.emplace_back("partition_of is not nondecreasing: partitions must be contiguous time segments");
      break;
    }
  }
  if (static_cast<int>(d.x.size()) != n || static_cast<int>(d.z.size()) != n) {
    out.emplace_back("x and z must have one matrix per site");
    return out;
  }
  const int K = d.n_components();
  const int px = d.p_x();
  const int pz = d.p_z();
  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (d.y[si].rows() != T || d.y[si].cols() != K) out.push_back("y shape mismatch at site " + std::to_string(i));
    if (d.x[si].rows() != T || d.x[si].cols() != px) out.push_back("x shape mismatch at site " + std::to_string(i));
    if (d.z[si].rows() != T || d.z[si].cols() != pz) out.push_back("z shape mismatch at site " + std::to_string(i));
    if (!d.y[si].allFinite() || !d.x[si].allFinite() || !d.z[si].allFinite()) {
      out.push_back("missing or non-finite values at site " + std::to_string(i));
    }
  }
  if (px < 1) out.emplace_back("x must have at least one clustered covariate");
  if (pz < 1) out.emplace_back("z must have at least one covariate");
  if (d.site_coords && (d.site_coords->rows() != n || d.site_coords->cols() != 2)) {
    out.emplace_back("site_coords must be n x 2");
  }
  return out;
}

std::vector<std::string> validate_config(const ModelConfig& c, const Dataset& d) {
  auto out = validate_config(c);
  auto data_issues = validate_dataset(d);
  out.insert(out.end(), data_issues.begin(), data_issues.end());
  if (d.n_sites() != c.n_sites) out.emplace_back("dataset site count differs from n_sites");
  if (d.n_components() != c.n_components) out.emplace_back("dataset component count differs from n_components");
  for (int part : d.partition_of) {
    if (part >= c.n_partitions) {
      out.emplace_back("partition_of references a partition >= n_partitions");
      break;
    }
  }
  check_prior_dims(c.priors.gamma, "gamma", d.p_z(), out);
  check_prior_dims(c.priors.beta_base, "beta_base", d.p_x(), out);
  return out;
}

std::vector<std::string> validate_clusters(const ClusterState& cs, int n_sites) {
  std::vector<std::string> out;
  if (static_cast<int>(cs.dps.size()) != cs.n_partitions * cs.n_channels()) {
    out.emplace_back("cluster table count differs from partitions x channels");
    return out;
  }
  for (int m = 0; m < cs.n_partitions; ++m) {
    for (int g = 0; g < cs.n_channels(); ++g) {
      const auto& dp = cs.dp(m, g);
      const std::string where = " (partition " + std::to_string(m) + ", channel " + std::to_string(g) + ")";
      if (static_cast<int>(dp.labels.size()) != n_sites) out.push_back("label vector length" + where);
      if (dp.counts.size() != dp.atoms.size()) out.push_back("counts/atoms size mismatch" + where);
      std::vector<int> tally(dp.atoms.size(), 0);
      for (int l : dp.labels) {
        if (l < 0 || l >= dp.n_clusters()) {
          out.push_back("label references missing atom" + where);
          continue;
        }
        ++tally[static_cast<std::size_t>(l)];
      }
      int total = 0;
      for (std::size_t c = 0; c < tally.size() && c < dp.counts.size(); ++c) {
        if (tally[c] != dp.counts[c]) out.push_back("occupancy count mismatch" + where);
        if (dp.counts[c] < 1) out.push_back("empty cluster kept" + where);
        total += dp.counts[c];
      }
      if (total != n_sites) out.push_back("counts do not sum to n" + where);
      const auto width = cs.components_of(g).size();
      for (const auto& atom : dp.atoms) {
        if (atom.size() != width) out.push_back("atom width mismatch" + where);
      }
    }
  }
  return out;
}

std::vector<std::string> validate_state(const ParameterState& s, const ModelConfig& c, int n_times,
                                        int p_x, int p_z) {
  std::vector<std::string> out;
  const int n = c.n_sites, K = c.n_components, r = c.n_factors, M = c.n_partitions;
  if (static_cast<int>(s.gamma.size()) != n * M * K) out.emplace_back("gamma block size");
  for (const auto& g : s.gamma) {
    if (g.size() != p_z) {
      out.emplace_back("gamma vector length");
      break;
    }
  }
  auto cl = validate_clusters(s.clusters, n);
  out.insert(out.end(), cl.begin(), cl.end());
  for (const auto& dp : s.clusters.dps) {
    for (const auto& atom : dp.atoms) {
      for (const auto& b : atom) {
        if (b.size() != p_x) out.emplace_back("atom length differs from p_x");
      }
    }
  }
  if (static_cast<int>(s.lambda.size()) != K) out.emplace_back("lambda block count");
  for (const auto& l : s.lambda) {
    if (l.rows() != n || l.cols() != r) out.emplace_back("lambda shape");
  }
  if (s.coreg.rows() != K || s.coreg.cols() != K) {
    out.emplace_back("coreg shape");
  } else {
    for (int k = 0; k < K; ++k) {
      if (s.coreg(k, k) != 1.0) out.emplace_back("coreg diagonal must be exactly 1");
      for (int l = k + 1; l < K; ++l) {
        if (s.coreg(k, l) != 0.0) out.emplace_back("coreg must be zero above the diagonal");
      }
    }
  }
  if (s.tau2.size() != K) out.emplace_back("tau2 length");
  for (Eigen::Index k = 0; k < s.tau2.size(); ++k) {
    if (!(s.tau2[k] > 0.0)) out.emplace_back("tau2 must be strictly positive");
  }
  if (static_cast<int>(s.nu.size()) != K) out.emplace_back("nu block count");
  for (const auto& v : s.nu) {
    if (v.rows() != r || v.cols() != n_times) out.emplace_back("nu shape");
  }
  return out;
}

std::vector<Segment> partition_segments(const std::vector<int>& partition_of, int n_partitions) {
  std::vector<Segment> segs(static_cast<std::size_t>(n_partitions));
  const int T = static_cast<int>(partition_of.size());
  int t = 0;
  for (int m = 0; m < n_partitions; ++m) {
    auto& s = segs[static_cast<std::size_t>(m)];
    s.begin = t;
    while (t < T && partition_of[static_cast<std::size_t>(t)] == m) ++t;
    s.end = t;
  }
  return segs;
}

}  // namespace tvc
