// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/posterior.hpp"

#include "tvcluster/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace tvc {

namespace {

void require_draws(const Draws& draws) {
  if (draws.empty()) throw SummaryError("no retained draws to summarise");
}

int n_dps(const ParameterState& s) { return static_cast<int>(s.clusters.dps.size()); }

int occupied(const DpClusters& dp) {
  return static_cast<int>(std::count_if(dp.counts.begin(), dp.counts.end(), [](int c) { return c > 0; }));
}

}  // namespace

CountSeries cluster_count_series(const Draws& draws) {
  require_draws(draws);
  const auto& first = draws.front().clusters;
  const int M = first.n_partitions, G = first.n_channels();
  CountSeries out;
  out.mean = MatrixXd::Zero(M, G);
  out.median = MatrixXd::Zero(M, G);
  for (const auto& s : draws) {
    std::vector<int> row;
    for (const auto& dp : s.clusters.dps) row.push_back(occupied(dp));
    out.per_draw.push_back(std::move(row));
  }
  double total = 0.0;
  for (int m = 0; m < M; ++m)
    for (int g = 0; g < G; ++g) {
      std::vector<double> v;
      for (const auto& row : out.per_draw) v.push_back(row[static_cast<std::size_t>(m * G + g)]);
      const double sum = std::accumulate(v.begin(), v.end(), 0.0);
      total += sum;
      out.mean(m, g) = sum / static_cast<double>(v.size());
      out.median(m, g) = quantile(v, 0.5);
    }
  out.grand_mean = total / static_cast<double>(draws.size() * static_cast<std::size_t>(M * G));
  return out;
}

Cooccurrence cooccurrence(const Draws& draws) {
  require_draws(draws);
  const auto& first = draws.front().clusters;
  Cooccurrence out;
  out.n_partitions = first.n_partitions;
  out.n_channels = first.n_channels();
  const auto n = static_cast<Eigen::Index>(first.dps.front().labels.size());
  out.per_partition.assign(first.dps.size(), MatrixXd::Zero(n, n));
  for (const auto& s : draws) {
    for (int q = 0; q < n_dps(s); ++q) {
      const auto& lab = s.clusters.dps[static_cast<std::size_t>(q)].labels;
      auto& C = out.per_partition[static_cast<std::size_t>(q)];
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
          if (lab[static_cast<std::size_t>(a)] == lab[static_cast<std::size_t>(b)]) C(a, b) += 1.0;
    }
  }
  for (auto& C : out.per_partition) C /= static_cast<double>(draws.size());
  out.average.assign(static_cast<std::size_t>(out.n_channels), MatrixXd::Zero(n, n));
  for (int m = 0; m < out.n_partitions; ++m)
    for (int g = 0; g < out.n_channels; ++g) out.average[static_cast<std::size_t>(g)] += out.at(m, g);
  for (auto& C : out.average) C /= static_cast<double>(out.n_partitions);
  return out;
}

namespace {

std::vector<MatrixXd> mean_lambda(const Draws& draws) {
  std::vector<MatrixXd> mean = draws.front().lambda;
  for (auto& L : mean) L.setZero();
  for (const auto& s : draws)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += s.lambda[k];
  for (auto& L : mean) L /= static_cast<double>(draws.size());
  return mean;
}

}  // namespace

MatrixXd factor_norms(const Draws& draws) {
  require_draws(draws);
  const auto mean = mean_lambda(draws);
  const auto K = static_cast<Eigen::Index>(mean.size());
  const Eigen::Index r = K ? mean.front().cols() : 0;
  MatrixXd out(K, r);
  for (Eigen::Index k = 0; k < K; ++k) {
    const VectorXd norms = mean[static_cast<std::size_t>(k)].colwise().norm().transpose();
    const double total = norms.sum();
    const VectorXd share = total > 0.0 ? VectorXd(norms / total) : VectorXd::Constant(r, 1.0 / static_cast<double>(r));
    out.row(k) = share.transpose();
  }
  return out;
}

std::vector<MatrixXd> mean_lambda_gram(const Draws& draws) {
  require_draws(draws);
  std::vector<MatrixXd> out;
  for (const auto& L : mean_lambda(draws)) out.push_back(L * L.transpose());
  return out;
}

std::vector<GramPairs> lambda_gram_vs_distance(const Draws& draws, const MatrixXd& coords) {
  const auto grams = mean_lambda_gram(draws);
  const auto n = grams.front().rows();
  if (coords.rows() != n || coords.cols() != 2) throw SummaryError("site coordinates must be n x 2");
  std::vector<GramPairs> out;
  for (std::size_t k = 0; k < grams.size(); ++k) {
    GramPairs p;
    p.component = static_cast<int>(k);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = a + 1; b < n; ++b) {
        p.site_a.push_back(static_cast<int>(a));
        p.site_b.push_back(static_cast<int>(b));
        p.distance.push_back((coords.row(a) - coords.row(b)).norm());
        p.gram.push_back(grams[k](a, b));
      }
    out.push_back(std::move(p));
  }
  return out;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw SummaryError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Interval summarize(const std::vector<double>& values) {
  if (values.empty()) throw SummaryError("summary of an empty sample");
  // Sort first so the mean is independent of draw order, bit for bit.
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  Interval out;
  out.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  out.lower = quantile(sorted, 0.025);
  out.upper = quantile(sorted, 0.975);
  return out;
}

int modal_draw(const Draws& draws, const Cooccurrence& cooc, int m, int g) {
  require_draws(draws);
  const MatrixXd& C = cooc.at(m, g);
  const auto n = C.rows();
  int best = 0;
  double best_score = -1.0;
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const auto& lab = draws[d].clusters.dp(m, g).labels;
    double score = 0.0;
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = a + 1; b < n; ++b)
        score += lab[static_cast<std::size_t>(a)] == lab[static_cast<std::size_t>(b)] ? C(a, b) : 1.0 - C(a, b);
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(d);
    }
  }
  return best;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> seen;
  std::vector<int> out;
  for (int l : labels) out.push_back(seen.emplace(l, static_cast<int>(seen.size())).first->second);
  return out;
}

std::vector<CoefSummary> coef_summaries(const Draws& draws, const Cooccurrence& cooc) {
  require_draws(draws);
  std::vector<CoefSummary> out;
  const auto& cs = draws.front().clusters;
  for (int m = 0; m < cooc.n_partitions; ++m)
    for (int g = 0; g < cooc.n_channels; ++g) {
      const auto modal = canonical_labels(draws[static_cast<std::size_t>(modal_draw(draws, cooc, m, g))].clusters.dp(m, g).labels);
      const int n_clusters = *std::max_element(modal.begin(), modal.end()) + 1;
      for (int c = 0; c < n_clusters; ++c) {
        std::vector<int> members;
        for (std::size_t i = 0; i < modal.size(); ++i)
          if (modal[i] == c) members.push_back(static_cast<int>(i));
        for (int k : cs.components_of(g)) {
          const auto p = draws.front().clusters.coefficient(members.front(), m, k).size();
          for (Eigen::Index j = 0; j < p; ++j) {
            std::vector<double> values;
            values.reserve(draws.size());
            for (const auto& s : draws) {
              double v = 0.0;
              for (int i : members) v += s.clusters.coefficient(i, m, k)[j];
              values.push_back(v / static_cast<double>(members.size()));
            }
            out.push_back({m, g, c, k, static_cast<int>(j), members, summarize(values)});
          }
        }
      }
    }
  return out;
}

std::vector<CoregSummary> coreg_summary(const Draws& draws) {
  require_draws(draws);
  std::vector<CoregSummary> out;
  const auto K = draws.front().coreg.rows();
  for (Eigen::Index k = 1; k < K; ++k)
    for (Eigen::Index l = 0; l < k; ++l) {
      std::vector<double> v;
      for (const auto& s : draws) v.push_back(s.coreg(k, l));
      out.push_back({static_cast<int>(k), static_cast<int>(l), summarize(v)});
    }
  return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw SummaryError("label vectors differ in length");
  const auto ca = canonical_labels(a), cb = canonical_labels(b);
  const int ka = ca.empty() ? 0 : *std::max_element(ca.begin(), ca.end()) + 1;
  const int kb = cb.empty() ? 0 : *std::max_element(cb.begin(), cb.end()) + 1;
  MatrixXd table = MatrixXd::Zero(ka, kb);
  for (std::size_t i = 0; i < ca.size(); ++i) table(ca[i], cb[i]) += 1.0;
  auto pairs = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (int p = 0; p < ka; ++p)
    for (int q = 0; q < kb; ++q) index += pairs(table(p, q));
  for (int p = 0; p < ka; ++p) sa += pairs(table.row(p).sum());
  for (int q = 0; q < kb; ++q) sb += pairs(table.col(q).sum());
  const double total = pairs(static_cast<double>(ca.size()));
  const double expected = total > 0.0 ? sa * sb / total : 0.0;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

PosteriorSummary summarize_posterior(const Draws& draws, const std::optional<MatrixXd>& site_coords) {
  require_draws(draws);
  PosteriorSummary s;
  s.n_draws = static_cast<int>(draws.size());
  s.counts = cluster_count_series(draws);
  s.cooc = cooccurrence(draws);
  for (int m = 0; m < s.cooc.n_partitions; ++m)
    for (int g = 0; g < s.cooc.n_channels; ++g)
      s.modal_labels.push_back(
          canonical_labels(draws[static_cast<std::size_t>(modal_draw(draws, s.cooc, m, g))].clusters.dp(m, g).labels));
  s.coefficients = coef_summaries(draws, s.cooc);
  s.norms = factor_norms(draws);
  s.lambda_gram = mean_lambda_gram(draws);
  if (site_coords) s.gram_pairs = lambda_gram_vs_distance(draws, *site_coords);
  s.coreg = coreg_summary(draws);
  return s;
}

void write_summary(const std::filesystem::path& dir, const PosteriorSummary& s) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name, const char* header) {
    std::ofstream out(dir / name);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << header << '\n';
    return out;
  };
  const int G = s.cooc.n_channels;
  {
    auto out = open("overview.csv", "quantity,value");
    out << "n_draws," << s.n_draws << '\n';
    out << "grand_mean_clusters," << format_double(s.counts.grand_mean) << '\n';
  }
  {
    auto out = open("cluster_counts.csv", "m,g,mean,median");
    for (int m = 0; m < s.cooc.n_partitions; ++m)
      for (int g = 0; g < G; ++g)
        out << m << ',' << g << ',' << format_double(s.counts.mean(m, g)) << ',' << format_double(s.counts.median(m, g))
            << '\n';
  }
  {
    auto out = open("cooccurrence.csv", "m,g,a,b,value");
    for (int m = 0; m < s.cooc.n_partitions; ++m)
      for (int g = 0; g < G; ++g) {
        const auto& C = s.cooc.at(m, g);
        for (Eigen::Index a = 0; a < C.rows(); ++a)
          for (Eigen::Index b = 0; b < C.cols(); ++b)
            out << m << ',' << g << ',' << a << ',' << b << ',' << format_double(C(a, b)) << '\n';
      }
  }
  {
    auto out = open("cooccurrence_average.csv", "g,a,b,value");
    for (int g = 0; g < G; ++g) {
      const auto& C = s.cooc.average[static_cast<std::size_t>(g)];
      for (Eigen::Index a = 0; a < C.rows(); ++a)
        for (Eigen::Index b = 0; b < C.cols(); ++b) out << g << ',' << a << ',' << b << ',' << format_double(C(a, b)) << '\n';
    }
  }
  {
    auto out = open("modal_partition.csv", "m,g,i,cluster");
    for (int m = 0; m < s.cooc.n_partitions; ++m)
      for (int g = 0; g < G; ++g) {
        const auto& lab = s.modal_labels[static_cast<std::size_t>(m * G + g)];
        for (std::size_t i = 0; i < lab.size(); ++i) out << m << ',' << g << ',' << i << ',' << lab[i] << '\n';
      }
  }
  {
    auto out = open("coefficients.csv", "m,g,cluster,k,j,size,mean,lower,upper");
    for (const auto& c : s.coefficients)
      out << c.partition << ',' << c.channel << ',' << c.cluster << ',' << c.component << ',' << c.predictor << ','
          << c.members.size() << ',' << format_double(c.value.mean) << ',' << format_double(c.value.lower) << ','
          << format_double(c.value.upper) << '\n';
  }
  {
    auto out = open("factor_norms.csv", "k,j,share");
    for (Eigen::Index k = 0; k < s.norms.rows(); ++k)
      for (Eigen::Index j = 0; j < s.norms.cols(); ++j) out << k << ',' << j << ',' << format_double(s.norms(k, j)) << '\n';
  }
  {
    auto out = open("lambda_gram.csv", "k,a,b,value");
    for (std::size_t k = 0; k < s.lambda_gram.size(); ++k) {
      const auto& C = s.lambda_gram[k];
      for (Eigen::Index a = 0; a < C.rows(); ++a)
        for (Eigen::Index b = 0; b < C.cols(); ++b) out << k << ',' << a << ',' << b << ',' << format_double(C(a, b)) << '\n';
    }
  }
  if (!s.gram_pairs.empty()) {
    auto out = open("gram_distance.csv", "k,a,b,distance,gram");
    for (const auto& p : s.gram_pairs)
      for (std::size_t q = 0; q < p.gram.size(); ++q)
        out << p.component << ',' << p.site_a[q] << ',' << p.site_b[q] << ',' << format_double(p.distance[q]) << ','
            << format_double(p.gram[q]) << '\n';
  }
  {
    auto out = open("coreg.csv", "k,l,mean,lower,upper");
    for (const auto& c : s.coreg)
      out << c.row << ',' << c.col << ',' << format_double(c.value.mean) << ',' << format_double(c.value.lower) << ','
          << format_double(c.value.upper) << '\n';
  }
}

}  // namespace tvc
